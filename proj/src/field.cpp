#include "pamo/field.hpp"

#include "pamo/error.hpp"
#include "pamo/random.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>

namespace pamo {

std::vector<Vec3> PartField::centers() const {
  std::vector<Vec3> out;
  out.reserve(gaussians.size());
  for (const auto& g : gaussians) out.push_back(g.center);
  return out;
}

std::vector<int> PartField::part_ids() const {
  std::vector<int> out;
  out.reserve(gaussians.size());
  for (const auto& g : gaussians) out.push_back(g.part_id);
  return out;
}

void PartField::rebuild_parts() {
  parts.clear();
  for (std::size_t j = 0; j < gaussians.size(); ++j) {
    if (gaussians[j].part_id >= 0) parts[gaussians[j].part_id].push_back(j);
  }
}

void PartField::set_centers(std::span<const Vec3> c) {
  if (c.size() != gaussians.size()) throw Error(ErrorKind::LengthMismatch, "set_centers: wrong length");
  for (std::size_t j = 0; j < c.size(); ++j) gaussians[j].center = c[j];
}

void PartField::push_history() {
  prev2_centers = std::move(prev_centers);
  prev_centers = centers();
}

void PartField::validate() const {
  for (std::size_t j = 0; j < gaussians.size(); ++j) {
    const auto& g = gaussians[j];
    if (!(g.radius > 0.0 && g.radius <= kMaxRadius + 1e-12)) {
      throw Error(ErrorKind::Validation, fmt::format("primitive {} radius {} outside (0, 0.03]", j, g.radius));
    }
    if (!(g.opacity >= 0.0 && g.opacity <= 1.0)) {
      throw Error(ErrorKind::Validation, fmt::format("primitive {} opacity outside [0,1]", j));
    }
    if ((g.color.array() < 0.0).any() || (g.color.array() > 1.0).any()) {
      throw Error(ErrorKind::Validation, fmt::format("primitive {} color outside [0,1]", j));
    }
  }
  if (!prev_centers.empty() && prev_centers.size() != gaussians.size()) {
    throw Error(ErrorKind::Validation, "prev_centers length differs from primitive count");
  }
  if (!prev2_centers.empty() && prev2_centers.size() != gaussians.size()) {
    throw Error(ErrorKind::Validation, "prev2_centers length differs from primitive count");
  }
  std::vector<int> seen(gaussians.size(), 0);
  for (const auto& [id, members] : parts) {
    for (auto j : members) {
      if (j >= gaussians.size() || gaussians[j].part_id != id) {
        throw Error(ErrorKind::Validation, fmt::format("part {} index table is stale", id));
      }
      if (++seen[j] > 1) throw Error(ErrorKind::Validation, fmt::format("primitive {} in two parts", j));
    }
  }
}

Vec3 center_of_mass(std::span<const Vec3> centers, std::span<const std::size_t> members) {
  if (members.empty()) throw Error(ErrorKind::UnknownPart, "center_of_mass: empty part");
  Vec3 sum = Vec3::Zero();
  for (auto j : members) sum += centers[j];
  return sum / static_cast<double>(members.size());
}

Vec3 center_of_mass(const PartField& field, int part_id) {
  auto it = field.parts.find(part_id);
  if (it == field.parts.end() || it->second.empty()) {
    throw Error(ErrorKind::UnknownPart, fmt::format("part {} does not exist", part_id));
  }
  Vec3 sum = Vec3::Zero();
  for (auto j : it->second) sum += field.gaussians[j].center;
  return sum / static_cast<double>(it->second.size());
}

void apply_motion(PartField& field, int part_id, const RigidMotion& motion) {
  auto it = field.parts.find(part_id);
  if (it == field.parts.end()) throw Error(ErrorKind::UnknownPart, fmt::format("part {} does not exist", part_id));
  // Pure translations skip the pivot round trip so they stay exact.
  if (motion.omega_deg.isZero(0.0)) {
    for (auto j : it->second) field.gaussians[j].center += motion.delta;
    return;
  }
  const Mat3 r = motion.rotation();
  for (auto j : it->second) {
    auto& c = field.gaussians[j].center;
    c = r * (c - motion.pivot) + motion.pivot + motion.delta;
  }
}

void SceneSpec::validate() const {
  if (parts.empty()) throw Error(ErrorKind::InvalidSpec, "scene has no parts");
  for (std::size_t p = 0; p < parts.size(); ++p) {
    if (parts[p].count <= 0) throw Error(ErrorKind::InvalidSpec, fmt::format("part {} has zero primitives", p));
    if ((parts[p].extent.array() <= 0.0).any()) {
      throw Error(ErrorKind::InvalidSpec, fmt::format("part {} has non-positive extent", p));
    }
  }
  if (frame_count < 1) throw Error(ErrorKind::InvalidSpec, "frame_count must be >= 1");
  if (!(primitive_radius > 0.0 && primitive_radius <= kMaxRadius)) {
    throw Error(ErrorKind::InvalidSpec, "primitive radius must lie in (0, 0.03]");
  }
  if (frame_count > 1) {
    if (trajectories.size() != parts.size()) throw Error(ErrorKind::InvalidSpec, "one trajectory per part required");
    for (std::size_t p = 0; p < parts.size(); ++p) {
      if (trajectories[p].size() + 1 < static_cast<std::size_t>(frame_count)) {
        throw Error(ErrorKind::InvalidSpec, fmt::format("trajectory of part {} is too short", p));
      }
      for (const auto& m : trajectories[p]) {
        if (max_translation > 0.0 && m.delta.cwiseAbs().maxCoeff() > max_translation + 1e-12) {
          throw Error(ErrorKind::InvalidSpec, fmt::format("part {} translation exceeds cap", p));
        }
        if (max_rotation_deg > 0.0 && m.omega_deg.cwiseAbs().maxCoeff() > max_rotation_deg + 1e-12) {
          throw Error(ErrorKind::InvalidSpec, fmt::format("part {} rotation exceeds cap", p));
        }
      }
    }
  }
}

namespace {

Vec3 sample_in_shape(const PartShape& s, Rng& rng) {
  for (;;) {
    const Vec3 u(rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0));
    switch (s.shape) {
      case ShapeKind::Box:
        return s.center + u.cwiseProduct(s.extent);
      case ShapeKind::Sphere:
        if (u.squaredNorm() <= 1.0) return s.center + u * s.extent.x();
        break;
      case ShapeKind::Blob:
        if (u.squaredNorm() <= 1.0) return s.center + u.cwiseProduct(s.extent);
        break;
    }
  }
}

Vec3 textured_color(const Vec3& base, const Vec3& local, double amplitude) {
  constexpr double k = 2.0 * M_PI / 0.12;
  Vec3 c;
  c.x() = base.x() + amplitude * std::sin(k * local.x() + 0.3);
  c.y() = base.y() + amplitude * std::sin(k * local.y() + 1.1);
  c.z() = base.z() + amplitude * std::sin(k * (local.z() + 0.5 * local.x()) + 2.0);
  return c.cwiseMax(0.0).cwiseMin(1.0);
}

}  // namespace

SyntheticScene synth_scene(const SceneSpec& spec) {
  spec.validate();
  Rng rng(spec.rng_seed);

  PartField f0;
  std::vector<int> labels;
  for (std::size_t p = 0; p < spec.parts.size(); ++p) {
    const auto& shape = spec.parts[p];
    for (int i = 0; i < shape.count; ++i) {
      SurrogateGaussian g;
      g.center = sample_in_shape(shape, rng);
      g.color = textured_color(shape.base_color, g.center - shape.center, spec.texture);
      g.radius = spec.primitive_radius;
      g.opacity = 1.0;
      g.part_id = static_cast<int>(p);
      f0.gaussians.push_back(g);
      labels.push_back(static_cast<int>(p));
    }
  }
  f0.rebuild_parts();

  SyntheticScene scene;
  scene.gt_labels = labels;
  scene.frames.push_back(f0);
  for (int f = 1; f < spec.frame_count; ++f) {
    PartField next = scene.frames.back();
    next.timestamp = f;
    for (std::size_t p = 0; p < spec.parts.size(); ++p) {
      RigidMotion m = spec.trajectories[p][f - 1];
      m.pivot = center_of_mass(scene.frames.back(), static_cast<int>(p));
      apply_motion(next, static_cast<int>(p), m);
    }
    scene.frames.push_back(std::move(next));
  }

  scene.gt_tracks.assign(f0.size(), {});
  for (std::size_t j = 0; j < f0.size(); ++j) {
    scene.gt_tracks[j].reserve(scene.frames.size());
    for (const auto& fr : scene.frames) scene.gt_tracks[j].push_back(fr.gaussians[j].center);
  }
  return scene;
}

std::vector<std::vector<RigidMotion>> oscillating_trajectories(std::size_t parts, int frame_count,
                                                               double max_translation,
                                                               double max_rotation_deg,
                                                               std::uint64_t seed) {
  std::vector<std::vector<RigidMotion>> out(parts);
  for (std::size_t p = 0; p < parts; ++p) {
    Rng rng(Rng::derive(seed, p, 0x7261));
    Vec3 amp_t, amp_r, phase_t, phase_r;
    for (int a = 0; a < 3; ++a) {
      amp_t[a] = rng.uniform(0.3, 1.0) * max_translation;
      amp_r[a] = rng.uniform(0.3, 1.0) * max_rotation_deg;
      phase_t[a] = rng.uniform(0.0, 2.0 * M_PI);
      phase_r[a] = rng.uniform(0.0, 2.0 * M_PI);
    }
    for (int f = 1; f < frame_count; ++f) {
      RigidMotion m;
      for (int a = 0; a < 3; ++a) {
        m.delta[a] = amp_t[a] * std::cos(0.35 * f + phase_t[a]);
        m.omega_deg[a] = amp_r[a] * std::cos(0.3 * f + phase_r[a]);
      }
      out[p].push_back(m);
    }
  }
  return out;
}

SceneSpec standard_scene(int frame_count, std::uint64_t seed) {
  SceneSpec spec;
  spec.parts = {
      {500, ShapeKind::Box, Vec3(0.12, 0.08, 0.06), Vec3(0.0, 0.0, 0.0), Vec3(0.75, 0.35, 0.3)},
      {400, ShapeKind::Sphere, Vec3(0.08, 0.08, 0.08), Vec3(0.32, 0.06, 0.04), Vec3(0.3, 0.7, 0.35)},
      {400, ShapeKind::Blob, Vec3(0.1, 0.06, 0.05), Vec3(-0.3, -0.06, 0.0), Vec3(0.3, 0.4, 0.75)},
  };
  spec.frame_count = frame_count;
  spec.rng_seed = seed;
  spec.max_translation = 0.02;
  spec.max_rotation_deg = 5.0;
  spec.trajectories = oscillating_trajectories(spec.parts.size(), frame_count, 0.012, 3.0, seed);
  return spec;
}

}  // namespace pamo
