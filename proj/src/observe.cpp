#include "pamo/observe.hpp"

#include "pamo/error.hpp"
#include "pamo/parallel.hpp"
#include "pamo/random.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace pamo {

int splat_radius_px(double fx, double radius, double depth) {
  return std::max(1, static_cast<int>(std::lround(fx * radius / depth)));
}

ViewRender render_view(const PartField& field, const CameraModel& camera, const RenderOptions& opt) {
  const int w = camera.width();
  const int h = camera.height();
  constexpr double inf = std::numeric_limits<double>::infinity();
  std::vector<double> zbuf(static_cast<std::size_t>(w) * h, inf);
  ImageI owner(w, h, 1, -1);

  for (std::size_t j = 0; j < field.size(); ++j) {
    const auto& g = field.gaussians[j];
    const auto proj = camera.try_project(g.center);
    if (!proj) continue;
    const int r = splat_radius_px(camera.fx(), g.radius, proj->depth);
    const double pu = std::round(proj->pixel.x());
    const double pv = std::round(proj->pixel.y());
    if (pu < -r || pv < -r || pu > w - 1 + r || pv > h - 1 + r) continue;
    const int u = static_cast<int>(pu);
    const int v = static_cast<int>(pv);
    for (int dy = -r; dy <= r; ++dy) {
      const int y = v + dy;
      if (y < 0 || y >= h) continue;
      for (int dx = -r; dx <= r; ++dx) {
        const int x = u + dx;
        if (x < 0 || x >= w || dx * dx + dy * dy > r * r) continue;
        const std::size_t i = static_cast<std::size_t>(y) * w + x;
        if (proj->depth < zbuf[i]) {
          zbuf[i] = proj->depth;
          owner.data[i] = static_cast<std::int32_t>(j);
        }
      }
    }
  }

  ViewRender out;
  out.depth = ImageF(w, h, 1, std::numeric_limits<float>::infinity());
  out.color = ImageF(w, h, 3);
  out.mask = ImageI(w, h, 1, -1);
  out.owner = std::move(owner);
  for (std::size_t i = 0; i < zbuf.size(); ++i) {
    const int j = out.owner.data[i];
    const Vec3 c = j >= 0 ? field.gaussians[j].color : opt.background;
    for (int ch = 0; ch < 3; ++ch) out.color.data[3 * i + ch] = static_cast<float>(c[ch]);
    if (j >= 0) {
      out.depth.data[i] = static_cast<float>(zbuf[i]);
      out.mask.data[i] = field.gaussians[j].part_id;
    }
  }
  return out;
}

std::vector<ViewRender> render_observations(const PartField& field, std::span<const CameraModel> cameras,
                                            const RenderOptions& opt) {
  std::vector<ViewRender> out(cameras.size());
  parallel_for(cameras.size(), [&](std::size_t v) { out[v] = render_view(field, cameras[v], opt); });
  return out;
}

namespace {

ImageF flow_on_render(const ViewRender& render, const CameraModel& cam, const PartField& from,
                      const PartField& to) {
  ImageF flow(render.owner.width, render.owner.height, 2, 0.0f);
  std::vector<std::optional<Vec2>> cache(from.size());
  std::vector<char> done(from.size(), 0);
  for (std::size_t i = 0; i < render.owner.data.size(); ++i) {
    const int j = render.owner.data[i];
    if (j < 0) continue;
    if (!done[j]) {
      done[j] = 1;
      const auto a = cam.try_project(from.gaussians[j].center);
      const auto b = cam.try_project(to.gaussians[j].center);
      if (a && b) cache[j] = b->pixel - a->pixel;
    }
    if (cache[j]) {
      flow.data[2 * i] = static_cast<float>(cache[j]->x());
      flow.data[2 * i + 1] = static_cast<float>(cache[j]->y());
    }
  }
  return flow;
}

}  // namespace

std::vector<FlowPair> flows_between(const PartField& field_prev, const PartField& field_curr,
                                    std::span<const CameraModel> cameras,
                                    std::span<const ViewRender> renders_prev,
                                    std::span<const ViewRender> renders_curr) {
  if (field_prev.size() != field_curr.size()) {
    throw Error(ErrorKind::LengthMismatch, "flows_between: fields are not index-aligned");
  }
  if (renders_prev.size() != cameras.size() || renders_curr.size() != cameras.size()) {
    throw Error(ErrorKind::LengthMismatch, "flows_between: one rendering per camera required");
  }
  std::vector<FlowPair> out(cameras.size());
  parallel_for(cameras.size(), [&](std::size_t v) {
    out[v].fwd = flow_on_render(renders_prev[v], cameras[v], field_prev, field_curr);
    out[v].bwd = flow_on_render(renders_curr[v], cameras[v], field_curr, field_prev);
  });
  return out;
}

std::vector<FlowPair> ground_truth_flow(const PartField& field_prev, const std::map<int, RigidMotion>& motions,
                                        std::span<const CameraModel> cameras, const RenderOptions& opt) {
  const auto renders_prev = render_observations(field_prev, cameras, opt);
  for (const auto& r : renders_prev) {
    for (auto id : r.mask.data) {
      if (id >= 0 && !motions.contains(id)) {
        throw Error(ErrorKind::MissingMotion, fmt::format("visible part {} has no motion", id));
      }
    }
  }
  PartField field_curr = field_prev;
  for (const auto& [id, m] : motions) {
    if (field_curr.parts.contains(id)) apply_motion(field_curr, id, m);
  }
  const auto renders_curr = render_observations(field_curr, cameras, opt);
  return flows_between(field_prev, field_curr, cameras, renders_prev, renders_curr);
}

ImageI flip_mask_boundaries(const ImageI& mask, double fraction, int radius, std::uint64_t seed) {
  ImageI out = mask;
  if (fraction <= 0.0) return out;
  struct Candidate {
    std::size_t index;
    std::int32_t label;
  };
  std::vector<Candidate> eligible;
  for (int y = 0; y < mask.height; ++y) {
    for (int x = 0; x < mask.width; ++x) {
      const auto own = mask.at(x, y);
      if (own < 0) continue;
      int best_d2 = std::numeric_limits<int>::max();
      std::int32_t best_label = own;
      for (int dy = -radius; dy <= radius; ++dy) {
        for (int dx = -radius; dx <= radius; ++dx) {
          if (!mask.contains(x + dx, y + dy)) continue;
          const auto other = mask.at(x + dx, y + dy);
          const int d2 = dx * dx + dy * dy;
          if (other != own && d2 < best_d2) {
            best_d2 = d2;
            best_label = other;
          }
        }
      }
      if (best_label != own) eligible.push_back({mask.index(x, y), best_label});
    }
  }
  const auto k = static_cast<std::size_t>(std::llround(std::clamp(fraction, 0.0, 1.0) * eligible.size()));
  Rng rng(seed);
  for (std::size_t i = 0; i < k; ++i) {
    const auto pick = i + rng.below(eligible.size() - i);
    std::swap(eligible[i], eligible[pick]);
    out.data[eligible[i].index] = eligible[i].label;
  }
  return out;
}

ImageI oversplit_mask(const ImageI& mask, int pieces, std::uint64_t seed) {
  ImageI out = mask;
  if (pieces < 2) return out;
  std::map<std::int32_t, std::vector<std::size_t>> by_label;
  std::int32_t next = 0;
  for (std::size_t i = 0; i < mask.data.size(); ++i) {
    if (mask.data[i] >= 0) by_label[mask.data[i]].push_back(i);
    next = std::max(next, mask.data[i] + 1);
  }
  Rng rng(seed);
  for (auto& [label, pixels] : by_label) {
    const double angle = rng.uniform(0.0, M_PI);
    const double cx = std::cos(angle), sy = std::sin(angle);
    std::vector<std::pair<double, std::size_t>> keyed;
    keyed.reserve(pixels.size());
    for (auto i : pixels) {
      const double x = static_cast<double>(i % mask.width);
      const double y = static_cast<double>(i / mask.width);
      keyed.emplace_back(cx * x + sy * y, i);
    }
    std::sort(keyed.begin(), keyed.end());
    const std::size_t n = keyed.size();
    for (int piece = 1; piece < pieces; ++piece) {
      const std::size_t begin = n * piece / pieces;
      const std::size_t end = n * (piece + 1) / pieces;
      if (begin == end) continue;
      const std::int32_t fresh = next++;
      for (std::size_t k = begin; k < end; ++k) out.data[keyed[k].second] = fresh;
    }
  }
  return out;
}

ObservationSet corrupt(const ObservationSet& obs, const NoiseConfig& noise, std::uint64_t seed) {
  ObservationSet out = obs;
  if (noise.is_zero()) return out;
  for (std::size_t t = 0; t < out.size(); ++t) {
    auto& frame = out[t];
    for (std::size_t v = 0; v < frame.views.size(); ++v) {
      auto& mask = frame.views[v].mask;
      if (noise.mask_boundary_flip > 0.0) {
        mask = flip_mask_boundaries(mask, noise.mask_boundary_flip, noise.boundary_radius,
                                    Rng::derive(seed, t * 1000 + v, 1));
      }
      if (noise.mask_oversplit >= 2) {
        mask = oversplit_mask(mask, noise.mask_oversplit, Rng::derive(seed, t * 1000 + v, 2));
      }
    }
    if (noise.flow_sigma > 0.0) {
      for (std::size_t v = 0; v < frame.flow_fwd.size(); ++v) {
        Rng rng(Rng::derive(seed, t * 1000 + v, 3));
        for (auto& f : frame.flow_fwd[v].data) f += static_cast<float>(noise.flow_sigma * rng.normal());
        for (auto& f : frame.flow_bwd[v].data) f += static_cast<float>(noise.flow_sigma * rng.normal());
      }
    }
  }
  return out;
}

double mean_rgb_difference(std::span<const ViewRender> rendered, std::span<const ImageF> observed) {
  if (rendered.size() != observed.size()) throw Error(ErrorKind::LengthMismatch, "view counts differ");
  double sum = 0.0;
  std::size_t count = 0;
  for (std::size_t v = 0; v < rendered.size(); ++v) {
    const auto& a = rendered[v].color;
    const auto& b = observed[v];
    if (a.data.size() != b.data.size()) throw Error(ErrorKind::DimensionMismatch, "image sizes differ");
    for (std::size_t i = 0; i < a.data.size(); ++i) sum += std::abs(static_cast<double>(a.data[i]) - b.data[i]);
    count += a.data.size();
  }
  return count ? sum / static_cast<double>(count) : 0.0;
}

}  // namespace pamo
