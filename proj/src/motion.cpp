#include "pamo/motion.hpp"

#include "pamo/error.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <unordered_map>

namespace pamo {

void DEConfig::validate() const {
  if (population() < 4) throw Error(ErrorKind::Validation, "DE population must be at least 4");
  if (max_iters < 0) throw Error(ErrorKind::Validation, "DE max_iters must be non-negative");
  if (!(CR > 0.0 && CR <= 1.0)) throw Error(ErrorKind::Validation, "DE CR must lie in (0, 1]");
  if (!(F > 0.0 && F < 2.0)) throw Error(ErrorKind::Validation, "DE F must lie in (0, 2)");
  if (!(translation_bound > 0.0) || !(rotation_bound_deg > 0.0)) {
    throw Error(ErrorKind::Validation, "DE bounds must be positive");
  }
}

const char* to_string(MotionSource s) {
  switch (s) {
    case MotionSource::DE: return "DE";
    case MotionSource::Inertia: return "inertia";
    case MotionSource::Identity: return "identity";
  }
  return "unknown";
}

std::vector<std::optional<Vec2>> rendered_flow(std::span<const Vec3> centers_prev, const RigidMotion& motion,
                                               const CameraModel& camera) {
  const Mat3 r = motion.rotation();
  std::vector<std::optional<Vec2>> out(centers_prev.size());
  for (std::size_t j = 0; j < centers_prev.size(); ++j) {
    const Vec3& p = centers_prev[j];
    const auto a = camera.try_project(p);
    const auto b = camera.try_project(r * (p - motion.pivot) + motion.pivot + motion.delta);
    if (a && b) out[j] = b->pixel - a->pixel;
  }
  return out;
}

PartFlowProblem::PartFlowProblem(const PartField& field_prev, int part_id, std::span<const CameraModel> cameras,
                                 std::span<const ViewRender> renders_prev, std::span<const ImageF> flows_fwd)
    : part_id_(part_id) {
  if (renders_prev.size() != cameras.size() || flows_fwd.size() != cameras.size()) {
    throw Error(ErrorKind::InconsistentInput, "flow objective needs one rendering and one flow per camera");
  }
  const auto it = field_prev.parts.find(part_id);
  if (it == field_prev.parts.end() || it->second.empty()) {
    throw Error(ErrorKind::UnknownPart, fmt::format("part {} does not exist", part_id));
  }
  const auto& members = it->second;
  std::unordered_map<std::size_t, std::size_t> local;
  for (std::size_t m = 0; m < members.size(); ++m) {
    local.emplace(members[m], m);
    centers_.push_back(field_prev.gaussians[members[m]].center);
  }
  pivot_ = Vec3::Zero();
  for (const auto& c : centers_) pivot_ += c;
  pivot_ /= static_cast<double>(centers_.size());

  for (std::size_t v = 0; v < cameras.size(); ++v) {
    const auto& render = renders_prev[v];
    const auto& flow = flows_fwd[v];
    if (!flow.same_shape(render.mask) || flow.channels != 2) {
      throw Error(ErrorKind::DimensionMismatch, fmt::format("flow of view {} does not match rendering", v));
    }
    View view{&cameras[v], {}};
    std::unordered_map<std::size_t, std::size_t> slot;
    for (std::size_t i = 0; i < render.mask.data.size(); ++i) {
      if (render.mask.data[i] != part_id) continue;
      const auto owner = render.owner.data[i];
      if (owner < 0) continue;
      const auto lit = local.find(static_cast<std::size_t>(owner));
      if (lit == local.end()) continue;
      auto [sit, inserted] = slot.emplace(lit->second, view.owned.size());
      if (inserted) {
        const auto proj = cameras[v].try_project(centers_[lit->second]);
        if (!proj) {
          slot[lit->second] = std::numeric_limits<std::size_t>::max();
          continue;
        }
        view.owned.push_back({lit->second, proj->pixel, {}});
      }
      if (sit->second == std::numeric_limits<std::size_t>::max()) continue;
      view.owned[sit->second].observed.emplace_back(flow.data[2 * i], flow.data[2 * i + 1]);
      ++pixel_count_;
    }
    if (!view.owned.empty()) views_.push_back(std::move(view));
  }
}

double PartFlowProblem::evaluate(const RigidMotion& motion) const {
  if (pixel_count_ == 0) return std::numeric_limits<double>::infinity();
  const Mat3 r = motion.rotation();
  double sum = 0.0;
  std::size_t count = 0;
  for (const auto& view : views_) {
    for (const auto& o : view.owned) {
      const Vec3& p = centers_[o.primitive];
      const auto proj = view.camera->try_project(r * (p - motion.pivot) + motion.pivot + motion.delta);
      if (!proj) continue;
      const Vec2 flow = proj->pixel - o.pixel_prev;
      for (const auto& obs : o.observed) sum += (flow - obs).norm();
      count += o.observed.size();
    }
  }
  return count ? sum / static_cast<double>(count) : std::numeric_limits<double>::infinity();
}

RigidMotion PartFlowProblem::motion_from_params(const Eigen::VectorXd& x) const {
  return RigidMotion{Vec3(x[0], x[1], x[2]), Vec3(x[3], x[4], x[5]), pivot_};
}

double PartFlowProblem::evaluate_params(const Eigen::VectorXd& x) const { return evaluate(motion_from_params(x)); }

double flow_objective(const PartField& field_prev, int part_id, const RigidMotion& motion,
                      std::span<const ImageF> flows_fwd, std::span<const ViewRender> renders_prev,
                      std::span<const CameraModel> cameras) {
  return PartFlowProblem(field_prev, part_id, cameras, renders_prev, flows_fwd).evaluate(motion);
}

DEMotionResult estimate_prior_motion_de(const PartFlowProblem& problem, const DEConfig& cfg, std::uint64_t frame) {
  cfg.validate();
  if (!problem.observable()) {
    throw Error(ErrorKind::Unobservable, fmt::format("part {} has no pixels in any view", problem.part_id()));
  }
  Eigen::VectorXd lower(6), upper(6);
  for (int d = 0; d < 3; ++d) {
    lower[d] = -cfg.translation_bound;
    upper[d] = cfg.translation_bound;
    lower[d + 3] = -cfg.rotation_bound_deg;
    upper[d + 3] = cfg.rotation_bound_deg;
  }
  DESettings settings;
  settings.population = cfg.population();
  settings.max_generations = cfg.max_iters;
  settings.F = cfg.F;
  settings.CR = cfg.CR;
  settings.stall_tolerance = cfg.stall_tolerance;
  settings.stall_generations = cfg.stall_generations;

  Rng rng(Rng::derive(cfg.seed, static_cast<std::uint64_t>(problem.part_id()) + 1, frame));
  const Objective f = [&](const Eigen::VectorXd& x) { return problem.evaluate_params(x); };
  DEOutcome best = differential_evolution(f, lower, upper, settings, rng, Eigen::VectorXd::Zero(6));

  DEMotionResult out;
  out.history = best.history;
  out.generations = best.generations;
  out.evaluations = best.evaluations;
  if (cfg.polish_evaluations > 0) {
    PolishSettings ps;
    ps.max_evaluations = cfg.polish_evaluations;
    const DEOutcome polished = nelder_mead_polish(f, lower, upper, best.best, best.value, ps);
    out.evaluations += polished.evaluations;
    if (polished.value < best.value) {
      best.best = polished.best;
      best.value = polished.value;
    }
    out.history.push_back(best.value);
  }
  out.motion = problem.motion_from_params(best.best);
  out.objective = best.value;
  return out;
}

RigidMotion inertia_motion(std::span<const std::size_t> members, std::span<const Vec3> centers_prev,
                           std::span<const Vec3> centers_prev2) {
  if (centers_prev2.empty() || centers_prev.empty()) {
    throw Error(ErrorKind::MissingHistory, "inertia needs centers at t-1 and t-2");
  }
  if (centers_prev.size() != centers_prev2.size()) {
    throw Error(ErrorKind::LengthMismatch, "center histories are not index-aligned");
  }
  if (members.empty()) throw Error(ErrorKind::UnknownPart, "inertia of an empty part");
  const Vec3 c1 = center_of_mass(centers_prev, members);
  const Vec3 c2 = center_of_mass(centers_prev2, members);
  RigidMotion m;
  m.delta = c1 - c2;
  m.pivot = c1;
  if (members.size() >= 3) {
    Points o1(static_cast<Eigen::Index>(members.size()), 3), o2(static_cast<Eigen::Index>(members.size()), 3);
    for (std::size_t i = 0; i < members.size(); ++i) {
      o1.row(static_cast<Eigen::Index>(i)) = (centers_prev[members[i]] - c1).transpose();
      o2.row(static_cast<Eigen::Index>(i)) = (centers_prev2[members[i]] - c2).transpose();
    }
    try {
      m.omega_deg = matrix_to_euler_xyz_deg(kabsch_rotation(o2, o1));
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::DegenerateConfiguration) throw;
    }
  }
  return m;
}

FailureCheck detect_flow_failure(int part_id, std::span<const ViewRender> rendered,
                                 std::span<const ImageF> observed_color, double tau_fail) {
  if (rendered.size() != observed_color.size()) throw Error(ErrorKind::LengthMismatch, "view counts differ");
  double sum = 0.0;
  std::size_t pixels = 0;
  for (std::size_t v = 0; v < rendered.size(); ++v) {
    const auto& r = rendered[v];
    const auto& obs = observed_color[v];
    if (!obs.same_shape(r.color) || obs.channels != 3) {
      throw Error(ErrorKind::DimensionMismatch, "observed color does not match rendering");
    }
    for (std::size_t i = 0; i < r.mask.data.size(); ++i) {
      if (r.mask.data[i] != part_id) continue;
      for (int c = 0; c < 3; ++c) sum += std::abs(static_cast<double>(r.color.data[3 * i + c]) - obs.data[3 * i + c]);
      ++pixels;
    }
  }
  FailureCheck out;
  out.pixels = pixels;
  if (pixels == 0) {
    out.failed = true;
    out.d_part = std::numeric_limits<double>::infinity();
    return out;
  }
  out.d_part = sum / (3.0 * static_cast<double>(pixels));
  out.failed = out.d_part > tau_fail;
  return out;
}

namespace {

FailureCheck check_candidate(int part_id, const RigidMotion& motion, const ResolveInputs& in) {
  PartField moved = *in.base_field;
  const auto it = in.field_prev->parts.find(part_id);
  if (it == in.field_prev->parts.end()) throw Error(ErrorKind::UnknownPart, fmt::format("part {}", part_id));
  const Mat3 r = motion.rotation();
  for (auto j : it->second) {
    const Vec3& p = in.field_prev->gaussians[j].center;
    moved.gaussians[j].center = r * (p - motion.pivot) + motion.pivot + motion.delta;
  }
  const auto renders = render_observations(moved, in.cameras, in.render);
  return detect_flow_failure(part_id, renders, in.observed_color, in.tau_fail);
}

}  // namespace

PartMotionState resolve_part_motion(int part_id, const std::optional<RigidMotion>& de_result,
                                    const std::optional<RigidMotion>& inertia_result, const ResolveInputs& in) {
  if (!in.base_field || !in.field_prev) throw Error(ErrorKind::InconsistentInput, "resolve_part_motion: missing fields");
  PartMotionState state;
  state.part_id = part_id;

  auto choose = [&](const RigidMotion& m, MotionSource src, const FailureCheck& chk) {
    state.motion = m;
    state.source = src;
    state.d_part = chk.d_part;
    state.failed = chk.failed;
  };

  if (de_result) {
    const auto de_check = check_candidate(part_id, *de_result, in);
    choose(*de_result, MotionSource::DE, de_check);
    if (de_check.failed && inertia_result) {
      const auto in_check = check_candidate(part_id, *inertia_result, in);
      if (in_check.d_part < de_check.d_part) choose(*inertia_result, MotionSource::Inertia, in_check);
    }
  } else if (inertia_result) {
    choose(*inertia_result, MotionSource::Inertia, check_candidate(part_id, *inertia_result, in));
  } else {
    const auto it = in.field_prev->parts.find(part_id);
    const Vec3 pivot = it != in.field_prev->parts.end() ? center_of_mass(*in.field_prev, part_id) : Vec3::Zero();
    const RigidMotion id = RigidMotion::identity(pivot);
    choose(id, MotionSource::Identity, check_candidate(part_id, id, in));
  }
  state.objective = in.problem ? in.problem->evaluate(state.motion) : std::numeric_limits<double>::quiet_NaN();
  return state;
}

int iteration_budget(double d_pixel, double epsilon, int lo, int hi) {
  const double raw = epsilon * std::max(d_pixel, 0.0);
  return static_cast<int>(std::lround(std::clamp(raw, static_cast<double>(lo), static_cast<double>(hi))));
}

}  // namespace pamo
