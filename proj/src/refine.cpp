#include "pamo/refine.hpp"

#include "pamo/error.hpp"
#include "pamo/eval.hpp"
#include "pamo/random.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace pamo {

void LossWeights::validate() const {
  if (lambda_c < 0 || lambda_s < 0 || lambda_o < 0 || lambda_part < 0 || lambda_loc < 0) {
    throw Error(ErrorKind::Validation, "loss weights must be non-negative");
  }
}

ImageLossTerms image_loss(const ImageF& rendered, const ImageF& observed, const ImageF& flow_fwd,
                          const ImageF& flow_bwd, const LossWeights& weights) {
  if (!rendered.same_shape(observed) || rendered.channels != observed.channels || !flow_fwd.same_shape(rendered) ||
      !flow_bwd.same_shape(rendered) || flow_fwd.channels != 2 || flow_bwd.channels != 2) {
    throw Error(ErrorKind::DimensionMismatch, "image_loss: inputs differ in shape");
  }
  const std::size_t n = rendered.pixels();
  const int ch = rendered.channels;
  std::vector<double> magnitude(n);
  double peak = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double f = std::hypot(flow_fwd.data[2 * i], flow_fwd.data[2 * i + 1]);
    const double b = std::hypot(flow_bwd.data[2 * i], flow_bwd.data[2 * i + 1]);
    magnitude[i] = f + b;
    peak = std::max(peak, magnitude[i]);
  }
  double l1 = 0.0, lo = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double w = peak > 0.0 ? magnitude[i] / peak : 0.0;
    for (int c = 0; c < ch; ++c) {
      const double e = std::abs(static_cast<double>(rendered.data[i * ch + c]) - observed.data[i * ch + c]);
      l1 += e;
      lo += e * w;
    }
  }
  const double count = static_cast<double>(n * ch);
  ImageLossTerms out;
  out.l1 = l1 / count;
  out.lo = lo / count;
  out.dssim = (1.0 - ssim(rendered, observed)) / 2.0;
  out.total = weights.lambda_c * out.l1 + weights.lambda_s * out.dssim + weights.lambda_o * out.lo;
  return out;
}

double rigidity_step(double w, double delta_d, const RigidityParams& p) {
  const double ratio = delta_d / p.delta;
  const double next = w + p.alpha * std::max(1.0 - ratio, 0.0) - p.beta * std::max(ratio - 1.0, 0.0);
  return std::clamp(next, 0.0, 1.0);
}

std::vector<std::vector<std::size_t>> select_anchors(const PartField& field, int part_id, int count,
                                                     std::uint64_t seed) {
  const auto it = field.parts.find(part_id);
  if (it == field.parts.end() || it->second.empty()) {
    throw Error(ErrorKind::UnknownPart, "select_anchors: part does not exist");
  }
  const auto& members = it->second;
  std::vector<std::vector<std::size_t>> out(members.size());
  std::vector<std::size_t> pool;
  for (std::size_t m = 0; m < members.size(); ++m) {
    pool.clear();
    for (std::size_t o = 0; o < members.size(); ++o) {
      if (o != m) pool.push_back(members[o]);
    }
    const std::size_t take = std::min<std::size_t>(static_cast<std::size_t>(std::max(count, 0)), pool.size());
    Rng rng(Rng::derive(seed, static_cast<std::uint64_t>(part_id) + 1, m));
    for (std::size_t i = 0; i < take; ++i) {
      std::swap(pool[i], pool[i + rng.below(pool.size() - i)]);
    }
    out[m].assign(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(take));
  }
  return out;
}

RigidityState init_rigidity(const PartField& field, int count, std::uint64_t seed, double w0) {
  std::vector<std::vector<std::size_t>> per_primitive(field.size());
  for (const auto& [id, members] : field.parts) {
    auto anchors = select_anchors(field, id, count, seed);
    for (std::size_t m = 0; m < members.size(); ++m) per_primitive[members[m]] = std::move(anchors[m]);
  }
  RigidityState state;
  for (std::size_t j = 0; j < per_primitive.size(); ++j) {
    for (auto k : per_primitive[j]) {
      RigidityState::Pair p;
      p.j = static_cast<std::uint32_t>(j);
      p.k = static_cast<std::uint32_t>(k);
      p.w = w0;
      const double d = (field.gaussians[j].center - field.gaussians[k].center).norm();
      p.d_prev = p.d_prev2 = d;
      state.pairs.push_back(p);
    }
  }
  return state;
}

RigidityState update_rigidity(RigidityState state, std::span<const Vec3> centers_prev,
                              std::span<const Vec3> centers_prev2, const RigidityParams& p) {
  if (centers_prev.empty() || centers_prev2.empty()) return state;
  if (centers_prev.size() != centers_prev2.size()) throw Error(ErrorKind::LengthMismatch, "center snapshots differ");
  for (auto& pair : state.pairs) {
    const double d1 = (centers_prev[pair.j] - centers_prev[pair.k]).norm();
    const double d2 = (centers_prev2[pair.j] - centers_prev2[pair.k]).norm();
    pair.w = rigidity_step(pair.w, std::abs(d1 - d2), p);
    pair.d_prev = d1;
    pair.d_prev2 = d2;
  }
  ++state.updates;
  return state;
}

namespace {

// Adds the gradient of weight * |dist_t - reference| for one pair.
double pair_term(const Vec3& a, const Vec3& b, double reference, double weight, Vec3& ga, Vec3& gb) {
  const Vec3 diff = a - b;
  const double d = diff.norm();
  const double change = d - reference;
  if (change != 0.0 && d > 0.0) {
    const Vec3 g = (weight * (change > 0.0 ? 1.0 : -1.0) / d) * diff;
    ga += g;
    gb -= g;
  }
  return weight * std::abs(change);
}

}  // namespace

LossAndGradient part_rigid_loss(const RigidityState& state, std::span<const Vec3> centers_t,
                                std::span<const Vec3> centers_prev) {
  if (centers_t.size() != centers_prev.size()) throw Error(ErrorKind::LengthMismatch, "center snapshots differ");
  LossAndGradient out;
  out.grad.assign(centers_t.size(), Vec3::Zero());
  if (state.pairs.empty()) return out;
  for (const auto& p : state.pairs) {
    const double reference = (centers_prev[p.j] - centers_prev[p.k]).norm();
    out.value += pair_term(centers_t[p.j], centers_t[p.k], reference, p.w, out.grad[p.j], out.grad[p.k]);
  }
  const double scale = 1.0 / static_cast<double>(state.pairs.size());
  out.value *= scale;
  for (auto& g : out.grad) g *= scale;
  return out;
}

KnnIndex build_knn(std::span<const Vec3> centers, int k) {
  KnnIndex index;
  index.neighbors.resize(centers.size());
  const std::size_t take = std::min<std::size_t>(static_cast<std::size_t>(std::max(k, 0)),
                                                 centers.empty() ? 0 : centers.size() - 1);
  std::vector<std::pair<double, std::uint32_t>> dist;
  for (std::size_t j = 0; j < centers.size(); ++j) {
    dist.clear();
    for (std::size_t o = 0; o < centers.size(); ++o) {
      if (o != j) dist.emplace_back((centers[j] - centers[o]).squaredNorm(), static_cast<std::uint32_t>(o));
    }
    std::partial_sort(dist.begin(), dist.begin() + static_cast<std::ptrdiff_t>(take), dist.end());
    for (std::size_t i = 0; i < take; ++i) index.neighbors[j].push_back(dist[i].second);
  }
  return index;
}

LossAndGradient local_rigid_loss(const KnnIndex& knn, std::span<const Vec3> centers_t,
                                 std::span<const Vec3> centers_prev) {
  if (centers_t.size() != centers_prev.size() || knn.neighbors.size() != centers_t.size()) {
    throw Error(ErrorKind::LengthMismatch, "local_rigid_loss: sizes differ");
  }
  LossAndGradient out;
  out.grad.assign(centers_t.size(), Vec3::Zero());
  std::size_t count = 0;
  for (std::size_t j = 0; j < centers_t.size(); ++j) {
    for (auto n : knn.neighbors[j]) {
      const double reference = (centers_prev[j] - centers_prev[n]).norm();
      out.value += pair_term(centers_t[j], centers_t[n], reference, 1.0, out.grad[j], out.grad[n]);
      ++count;
    }
  }
  if (count == 0) return out;
  const double scale = 1.0 / static_cast<double>(count);
  out.value *= scale;
  for (auto& g : out.grad) g *= scale;
  return out;
}

PointSampler::PointSampler(const PartField& field, std::span<const CameraModel> cameras,
                           std::span<const ViewRender> renders)
    : cameras_(cameras) {
  if (renders.size() != cameras.size()) throw Error(ErrorKind::LengthMismatch, "one rendering per camera required");
  for (std::size_t v = 0; v < cameras.size(); ++v) {
    const auto& owner = renders[v].owner;
    std::vector<std::optional<Vec2>> proj(field.size());
    std::vector<char> done(field.size(), 0);
    for (int y = 0; y < owner.height; ++y) {
      for (int x = 0; x < owner.width; ++x) {
        const int j = owner.at(x, y);
        if (j < 0) continue;
        if (!done[j]) {
          done[j] = 1;
          if (const auto p = cameras[v].try_project(field.gaussians[j].center)) proj[j] = p->pixel;
        }
        if (!proj[j]) continue;
        samples_list_.push_back({static_cast<std::uint32_t>(v), static_cast<std::uint32_t>(j),
                                 Vec2(x, y) - *proj[j]});
      }
    }
  }
  samples_ = samples_list_.size();
}

DataTerm PointSampler::evaluate(const PartField& field, std::span<const ImageF> observed, double huber) const {
  DataTerm out;
  out.grad_center.assign(field.size(), Vec3::Zero());
  out.grad_color.assign(field.size(), Vec3::Zero());
  if (samples_list_.empty()) return out;
  const double norm = 1.0 / (3.0 * static_cast<double>(samples_list_.size()));
  for (const auto& s : samples_list_) {
    const auto& cam = cameras_[s.view];
    const auto& img = observed[s.view];
    const auto& g = field.gaussians[s.primitive];
    const Vec3 pc = cam.to_camera(g.center);
    if (pc.z() <= 1e-9) continue;
    const double inv_z = 1.0 / pc.z();
    const Vec2 at(cam.fx() * pc.x() * inv_z + cam.cx() + s.offset.x(), cam.fy() * pc.y() * inv_z + cam.cy() + s.offset.y());

    // Bilinear lookup with border clamping; the clamped direction has zero derivative.
    const double max_x = img.width - 1, max_y = img.height - 1;
    const bool clamp_x = at.x() < 0.0 || at.x() > max_x;
    const bool clamp_y = at.y() < 0.0 || at.y() > max_y;
    const double x = std::clamp(at.x(), 0.0, max_x);
    const double y = std::clamp(at.y(), 0.0, max_y);
    const int x0 = std::min(static_cast<int>(x), std::max(img.width - 2, 0));
    const int y0 = std::min(static_cast<int>(y), std::max(img.height - 2, 0));
    const int x1 = std::min(x0 + 1, img.width - 1), y1 = std::min(y0 + 1, img.height - 1);
    const double ax = x - x0, ay = y - y0;

    Eigen::RowVector3d du = Eigen::RowVector3d::Zero(), dv = Eigen::RowVector3d::Zero();
    const Mat3 r = cam.rotation();
    du = cam.fx() * inv_z * r.row(0) - cam.fx() * pc.x() * inv_z * inv_z * r.row(2);
    dv = cam.fy() * inv_z * r.row(1) - cam.fy() * pc.y() * inv_z * inv_z * r.row(2);

    for (int c = 0; c < 3; ++c) {
      const double i00 = img.at(x0, y0, c), i10 = img.at(x1, y0, c);
      const double i01 = img.at(x0, y1, c), i11 = img.at(x1, y1, c);
      const double value = (1 - ax) * (1 - ay) * i00 + ax * (1 - ay) * i10 + (1 - ax) * ay * i01 + ax * ay * i11;
      const double gx = clamp_x ? 0.0 : (1 - ay) * (i10 - i00) + ay * (i11 - i01);
      const double gy = clamp_y ? 0.0 : (1 - ax) * (i01 - i00) + ax * (i11 - i10);
      // Observations are single precision; compare at that precision so a field rendered
      // from itself has exactly zero residual.
      const double res = static_cast<double>(static_cast<float>(g.color[c])) - value;
      const double a = std::abs(res);
      double dres;
      if (a > huber) {
        out.value += a - 0.5 * huber;
        dres = res > 0 ? 1.0 : -1.0;
      } else {
        out.value += res * res / (2.0 * huber);
        dres = res / huber;
      }
      out.l1 += a;
      out.grad_color[s.primitive][c] += dres * norm;
      out.grad_center[s.primitive] -= (dres * norm) * (gx * du + gy * dv).transpose();
    }
  }
  out.value *= norm;
  out.l1 *= norm;
  return out;
}

namespace {

RefineLogRow report_row(int step, const PartField& field, const std::vector<ViewRender>& renders,
                        const DataTerm& data, const RefineInputs& in, const LossWeights& w) {
  RefineLogRow row;
  row.step = step;
  row.data = data.l1;
  const std::size_t views = renders.size();
  for (std::size_t v = 0; v < views; ++v) {
    ImageLossTerms t;
    if (v < in.flow_fwd.size() && v < in.flow_bwd.size()) {
      t = image_loss(renders[v].color, in.observed_color[v], in.flow_fwd[v], in.flow_bwd[v], w);
    } else {
      const ImageF zero(renders[v].color.width, renders[v].color.height, 2, 0.0f);
      t = image_loss(renders[v].color, in.observed_color[v], zero, zero, w);
    }
    row.l1 += t.l1 / views;
    row.dssim += t.dssim / views;
    row.lo += t.lo / views;
  }
  const auto centers = field.centers();
  if (!in.centers_prev.empty()) {
    if (in.rigidity) row.part = part_rigid_loss(*in.rigidity, centers, in.centers_prev).value;
    if (in.knn) row.loc = local_rigid_loss(*in.knn, centers, in.centers_prev).value;
  }
  row.total = w.lambda_c * row.data + w.lambda_part * row.part + w.lambda_loc * row.loc;
  return row;
}

}  // namespace

RefineReport refine_timestamp(PartField& field, const RefineInputs& in, int budget, const LossWeights& weights,
                              const RefineSchedule& schedule) {
  weights.validate();
  RefineReport report;
  if (budget <= 0 || field.size() == 0) return report;
  if (in.observed_color.size() != in.cameras.size()) {
    throw Error(ErrorKind::InconsistentInput, "one observed image per camera required");
  }
  const bool rigid = !in.centers_prev.empty();
  if (rigid && in.centers_prev.size() != field.size()) {
    throw Error(ErrorKind::LengthMismatch, "centers_prev does not match the field");
  }
  const int every = std::max(1, schedule.rerender_every);

  std::vector<ViewRender> renders;
  std::optional<PointSampler> sampler;
  std::vector<Vec3> centers = field.centers();
  for (int step = 0; step <= budget; ++step) {
    if (step % every == 0 || step == budget) {
      renders = render_observations(field, in.cameras, in.render);
      sampler.emplace(field, in.cameras, renders);
      const DataTerm data = sampler->evaluate(field, in.observed_color, schedule.huber);
      report.log.push_back(report_row(step, field, renders, data, in, weights));
    }
    if (step == budget) break;

    double lr_scale = 1.0;
    if (step >= budget / 2) lr_scale *= 0.5;
    if (step >= (3 * budget) / 4) lr_scale *= 0.5;

    const DataTerm data = sampler->evaluate(field, in.observed_color, schedule.huber);
    std::vector<Vec3> grad(field.size(), Vec3::Zero());
    for (std::size_t j = 0; j < field.size(); ++j) grad[j] = weights.lambda_c * data.grad_center[j];
    if (rigid && in.rigidity && weights.lambda_part > 0.0) {
      const auto part = part_rigid_loss(*in.rigidity, centers, in.centers_prev);
      for (std::size_t j = 0; j < field.size(); ++j) grad[j] += weights.lambda_part * part.grad[j];
    }
    if (rigid && in.knn && weights.lambda_loc > 0.0) {
      const auto loc = local_rigid_loss(*in.knn, centers, in.centers_prev);
      for (std::size_t j = 0; j < field.size(); ++j) grad[j] += weights.lambda_loc * loc.grad[j];
    }
    const double lr_c = schedule.lr_center * lr_scale;
    const double lr_col = schedule.lr_color * lr_scale;
    for (std::size_t j = 0; j < field.size(); ++j) {
      auto& g = field.gaussians[j];
      g.center -= lr_c * grad[j];
      centers[j] = g.center;
      g.color = (g.color - lr_col * weights.lambda_c * data.grad_color[j]).cwiseMax(0.0).cwiseMin(1.0);
    }
    ++report.steps;
  }
  return report;
}

}  // namespace pamo
