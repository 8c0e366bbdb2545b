#pragma once

#include "pamo/geom.hpp"

#include <cstdint>
#include <map>
#include <span>
#include <vector>

namespace pamo {

/// Isotropic point stand-in for one Gaussian primitive.
struct SurrogateGaussian {
  Vec3 center = Vec3::Zero();
  Vec3 color = Vec3::Zero();
  double radius = 0.01;
  double opacity = 1.0;
  int part_id = -1;
};

inline constexpr double kMaxRadius = 0.03;

/// All primitives at one timestamp, grouped into parts.
struct PartField {
  std::vector<SurrogateGaussian> gaussians;
  std::map<int, std::vector<std::size_t>> parts;
  int timestamp = 0;
  /// Centers at t-1 and t-2; empty when that history does not exist yet.
  std::vector<Vec3> prev_centers;
  std::vector<Vec3> prev2_centers;

  std::size_t size() const { return gaussians.size(); }
  std::vector<Vec3> centers() const;
  std::vector<int> part_ids() const;
  /// Rebuilds `parts` from the per-primitive ids; unassigned primitives are skipped.
  void rebuild_parts();
  void set_centers(std::span<const Vec3> centers);
  /// Shifts history: prev2 <- prev, prev <- current centers.
  void push_history();
  /// Throws Error(Validation) if an invariant is broken.
  void validate() const;
};

/// Unweighted mean of the member centers.
Vec3 center_of_mass(const PartField& field, int part_id);
Vec3 center_of_mass(std::span<const Vec3> centers, std::span<const std::size_t> members);

/// Moves the members of one part by `motion` (pivot taken from the motion).
void apply_motion(PartField& field, int part_id, const RigidMotion& motion);

enum class ShapeKind { Box, Sphere, Blob };

struct PartShape {
  int count = 0;
  ShapeKind shape = ShapeKind::Box;
  /// Half-sizes for boxes, semi-axes for blobs, radius in x for spheres.
  Vec3 extent = Vec3::Constant(0.1);
  Vec3 center = Vec3::Zero();
  Vec3 base_color = Vec3::Constant(0.5);
};

struct SceneSpec {
  std::vector<PartShape> parts;
  /// trajectories[p][f - 1] moves part p from frame f - 1 to frame f. The pivot is ignored and
  /// replaced by the part's center of mass at frame f - 1.
  std::vector<std::vector<RigidMotion>> trajectories;
  int frame_count = 1;
  std::uint64_t rng_seed = 0;
  double primitive_radius = 0.01;
  /// Amplitude of the spatial color texture added on top of each base color.
  double texture = 0.15;
  /// Per-frame caps; a value <= 0 disables the check.
  double max_translation = 0.0;
  double max_rotation_deg = 0.0;

  void validate() const;
};

struct SyntheticScene {
  std::vector<PartField> frames;
  /// gt_tracks[j][f]: center of primitive j at frame f.
  std::vector<std::vector<Vec3>> gt_tracks;
  std::vector<int> gt_labels;
};

SyntheticScene synth_scene(const SceneSpec& spec);

/// Smoothly varying per-frame motions bounded by the given caps.
std::vector<std::vector<RigidMotion>> oscillating_trajectories(std::size_t parts, int frame_count,
                                                               double max_translation,
                                                               double max_rotation_deg,
                                                               std::uint64_t seed);

/// Three well-separated parts (box, sphere, blob) used throughout tests and demos.
SceneSpec standard_scene(int frame_count, std::uint64_t seed = 7);

}  // namespace pamo
