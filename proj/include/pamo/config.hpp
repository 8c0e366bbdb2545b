#pragma once

#include "pamo/field.hpp"
#include "pamo/geom.hpp"
#include "pamo/motion.hpp"
#include "pamo/observe.hpp"
#include "pamo/partition.hpp"
#include "pamo/refine.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace pamo {

struct SceneConfig {
  int frame_count = 20;
  std::uint64_t seed = 7;
  double translation_amplitude = 0.012;  ///< m per frame
  double rotation_amplitude_deg = 3.0;   ///< per frame
};

struct CameraRigConfig {
  std::string rig;  ///< cameras.json path; empty means a generated ring
  int count = 8;
  double radius = 2.0;
  double fx = 400.0;
  int width = 320;
  int height = 240;
  double elevation = 0.35;
};

struct BudgetConfig {
  double epsilon = 1e5;
  int min = 1500;
  int max = 2000;
};

struct RigidityConfig {
  RigidityParams params;
  int anchors = 16;
  int knn = 20;
  std::uint64_t seed = 3;
};

struct RunConfig {
  SceneConfig scene;
  CameraRigConfig cameras;
  NoiseConfig noise;
  std::uint64_t noise_seed = 11;
  PartitionConfig partition;
  DEConfig de;
  double tau_fail = 0.05;
  BudgetConfig budget;
  LossWeights loss;
  RigidityConfig rigidity;
  RefineSchedule refine;
  std::string output = "run";
  int max_frames = 0;  ///< 0 tracks every frame

  /// Throws Error(Validation) naming the offending key.
  void validate() const;
};

/// Reads a TOML file over the defaults. Unknown keys are rejected.
RunConfig load_config(const std::filesystem::path& path);
RunConfig parse_config(const std::string& toml_text);

/// Applies `section.key=value`; the value is TOML syntax, bare words are taken as strings.
void apply_override(RunConfig& cfg, const std::string& assignment);

/// Every key with its resolved value, as TOML. parse_config(to_toml(c)) reproduces c.
std::string to_toml(const RunConfig& cfg);

SceneSpec scene_spec(const RunConfig& cfg);
std::vector<CameraModel> camera_rig(const RunConfig& cfg);

}  // namespace pamo
