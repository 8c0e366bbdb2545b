#pragma once

#include "pamo/de.hpp"
#include "pamo/field.hpp"
#include "pamo/geom.hpp"
#include "pamo/observe.hpp"

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace pamo {

/// Differential evolution settings for part prior motion.
struct DEConfig {
  /// Population = multiplier * 6 unless `population_absolute` > 0.
  int population_multiplier = 2;
  int population_absolute = 0;
  int max_iters = 25;
  double translation_bound = 0.2;  ///< m, symmetric
  double rotation_bound_deg = 20.0;
  double F = 0.7;
  double CR = 0.9;
  std::uint64_t seed = 1;
  double stall_tolerance = 1e-6;
  int stall_generations = 5;
  /// Local Nelder-Mead refinement of the DE winner (0 disables).
  int polish_evaluations = 600;

  int population() const { return population_absolute > 0 ? population_absolute : population_multiplier * 6; }
  void validate() const;
};

enum class MotionSource { DE, Inertia, Identity };
const char* to_string(MotionSource s);

struct PartMotionState {
  int part_id = -1;
  RigidMotion motion;
  double objective = 0.0;
  MotionSource source = MotionSource::Identity;
  double d_part = 0.0;
  bool failed = false;
};

/// Per-primitive pixel flow induced by `motion`; nullopt where a projection has non-positive depth.
std::vector<std::optional<Vec2>> rendered_flow(std::span<const Vec3> centers_prev, const RigidMotion& motion,
                                               const CameraModel& camera);

/// Pre-gathered data for the flow objective of one part: every pixel owned by the part in
/// the frame t-1 rendering, grouped by owning primitive, with its observed forward flow.
class PartFlowProblem {
 public:
  PartFlowProblem(const PartField& field_prev, int part_id, std::span<const CameraModel> cameras,
                  std::span<const ViewRender> renders_prev, std::span<const ImageF> flows_fwd);

  /// Mean L2 flow residual over all part pixels of all views; +inf when nothing is observed.
  double evaluate(const RigidMotion& motion) const;
  double evaluate_params(const Eigen::VectorXd& params) const;
  RigidMotion motion_from_params(const Eigen::VectorXd& params) const;

  int part_id() const { return part_id_; }
  const Vec3& pivot() const { return pivot_; }
  std::size_t pixel_count() const { return pixel_count_; }
  bool observable() const { return pixel_count_ > 0; }

 private:
  struct Owned {
    std::size_t primitive;  ///< index into the part's member list
    Vec2 pixel_prev;
    std::vector<Vec2> observed;
  };
  struct View {
    const CameraModel* camera;
    std::vector<Owned> owned;
  };
  int part_id_;
  Vec3 pivot_;
  std::vector<Vec3> centers_;
  std::vector<View> views_;
  std::size_t pixel_count_ = 0;
};

/// Convenience wrapper that gathers the problem and evaluates one motion.
double flow_objective(const PartField& field_prev, int part_id, const RigidMotion& motion,
                      std::span<const ImageF> flows_fwd, std::span<const ViewRender> renders_prev,
                      std::span<const CameraModel> cameras);

struct DEMotionResult {
  RigidMotion motion;
  double objective = 0.0;
  std::vector<double> history;
  int generations = 0;
  int evaluations = 0;
};

/// best/1/bin search over (delta, omega) in the configured box, with the zero motion seeded into
/// the initial population. Throws Error(Unobservable) when no view sees the part.
DEMotionResult estimate_prior_motion_de(const PartFlowProblem& problem, const DEConfig& cfg,
                                        std::uint64_t frame = 0);

/// Motion extrapolated from the last two timestamps: translation from the center-of-mass offset,
/// rotation from the SVD of the offset cross-covariance. Pivot is the t-1 center of mass.
/// Throws Error(MissingHistory) when t-2 centers are unavailable.
RigidMotion inertia_motion(std::span<const std::size_t> members, std::span<const Vec3> centers_prev,
                           std::span<const Vec3> centers_prev2);

struct FailureCheck {
  bool failed = true;
  double d_part = 0.0;
  std::size_t pixels = 0;
};

/// Mean absolute RGB difference inside the part's mask of the frame-t rendering.
FailureCheck detect_flow_failure(int part_id, std::span<const ViewRender> rendered,
                                 std::span<const ImageF> observed_color, double tau_fail);

struct ResolveInputs {
  const PartField* base_field = nullptr;  ///< every other part already placed for frame t
  const PartField* field_prev = nullptr;  ///< frame t-1, source positions for this part
  std::span<const CameraModel> cameras;
  std::span<const ImageF> observed_color;
  const PartFlowProblem* problem = nullptr;  ///< optional, for the objective bookkeeping
  double tau_fail = 0.05;
  RenderOptions render;
};

/// Arbitrates between the DE and inertia candidates by their part-mask RGB residual.
PartMotionState resolve_part_motion(int part_id, const std::optional<RigidMotion>& de_result,
                                    const std::optional<RigidMotion>& inertia_result, const ResolveInputs& in);

/// Adaptive iteration count: round(clip(epsilon * d_pixel, lo, hi)).
int iteration_budget(double d_pixel, double epsilon = 1e5, int lo = 1500, int hi = 2000);

}  // namespace pamo
