#include "pamo/config.hpp"

#include "pamo/error.hpp"
#include "pamo/io.hpp"

#include <fmt/format.h>
#include <toml.hpp>

#include <limits>
#include <map>
#include <sstream>
#include <variant>

namespace pamo {

namespace {

using Slot = std::variant<int*, double*, std::uint64_t*, std::string*>;

// Single table of every configurable key, in output order.
template <class Cfg>
std::vector<std::pair<std::string, Slot>> bindings(Cfg& c) {
  return {
      {"scene.frame_count", &c.scene.frame_count},
      {"scene.seed", &c.scene.seed},
      {"scene.translation_amplitude", &c.scene.translation_amplitude},
      {"scene.rotation_amplitude_deg", &c.scene.rotation_amplitude_deg},
      {"cameras.rig", &c.cameras.rig},
      {"cameras.count", &c.cameras.count},
      {"cameras.radius", &c.cameras.radius},
      {"cameras.fx", &c.cameras.fx},
      {"cameras.width", &c.cameras.width},
      {"cameras.height", &c.cameras.height},
      {"cameras.elevation", &c.cameras.elevation},
      {"noise.flow_sigma", &c.noise.flow_sigma},
      {"noise.mask_boundary_flip", &c.noise.mask_boundary_flip},
      {"noise.mask_oversplit", &c.noise.mask_oversplit},
      {"noise.boundary_radius", &c.noise.boundary_radius},
      {"noise.seed", &c.noise_seed},
      {"partition.theta_depth", &c.partition.theta_depth},
      {"partition.resolution", &c.partition.resolution},
      {"motion.population_multiplier", &c.de.population_multiplier},
      {"motion.population_absolute", &c.de.population_absolute},
      {"motion.max_iters", &c.de.max_iters},
      {"motion.translation_bound", &c.de.translation_bound},
      {"motion.rotation_bound_deg", &c.de.rotation_bound_deg},
      {"motion.F", &c.de.F},
      {"motion.CR", &c.de.CR},
      {"motion.seed", &c.de.seed},
      {"motion.stall_tolerance", &c.de.stall_tolerance},
      {"motion.stall_generations", &c.de.stall_generations},
      {"motion.polish_evaluations", &c.de.polish_evaluations},
      {"motion.tau_fail", &c.tau_fail},
      {"budget.epsilon", &c.budget.epsilon},
      {"budget.min", &c.budget.min},
      {"budget.max", &c.budget.max},
      {"loss.lambda_c", &c.loss.lambda_c},
      {"loss.lambda_s", &c.loss.lambda_s},
      {"loss.lambda_o", &c.loss.lambda_o},
      {"loss.lambda_part", &c.loss.lambda_part},
      {"loss.lambda_loc", &c.loss.lambda_loc},
      {"rigidity.alpha", &c.rigidity.params.alpha},
      {"rigidity.beta", &c.rigidity.params.beta},
      {"rigidity.delta", &c.rigidity.params.delta},
      {"rigidity.anchors", &c.rigidity.anchors},
      {"rigidity.knn", &c.rigidity.knn},
      {"rigidity.seed", &c.rigidity.seed},
      {"refine.lr_center", &c.refine.lr_center},
      {"refine.lr_color", &c.refine.lr_color},
      {"refine.rerender_every", &c.refine.rerender_every},
      {"refine.huber", &c.refine.huber},
      {"run.output", &c.output},
      {"run.max_frames", &c.max_frames},
  };
}

void assign(const std::string& key, const Slot& slot, const toml::node& node) {
  auto bad = [&](const char* want) {
    return Error(ErrorKind::Validation, fmt::format("config key '{}' expects {}", key, want));
  };
  std::visit(
      [&](auto* target) {
        using T = std::remove_pointer_t<decltype(target)>;
        if constexpr (std::is_same_v<T, std::string>) {
          const auto v = node.value<std::string>();
          if (!v) throw bad("a string");
          *target = *v;
        } else if constexpr (std::is_same_v<T, double>) {
          if (node.is_integer()) {
            *target = static_cast<double>(*node.value<std::int64_t>());
          } else if (node.is_floating_point()) {
            *target = *node.value<double>();
          } else {
            throw bad("a number");
          }
        } else {
          if (!node.is_integer()) throw bad("an integer");
          const std::int64_t v = *node.value<std::int64_t>();
          if constexpr (std::is_same_v<T, int>) {
            if (v < std::numeric_limits<int>::min() || v > std::numeric_limits<int>::max()) throw bad("a 32-bit integer");
            *target = static_cast<int>(v);
          } else {
            if (v < 0) throw bad("a non-negative integer");
            *target = static_cast<std::uint64_t>(v);
          }
        }
      },
      slot);
}

void merge(RunConfig& cfg, const toml::table& root) {
  auto slots = bindings(cfg);
  std::map<std::string, Slot> lookup(slots.begin(), slots.end());
  for (const auto& [section, node] : root) {
    const auto* table = node.as_table();
    if (!table) throw Error(ErrorKind::Validation, fmt::format("config entry '{}' must be a table", section.str()));
    for (const auto& [key, value] : *table) {
      const std::string full = fmt::format("{}.{}", section.str(), key.str());
      const auto it = lookup.find(full);
      if (it == lookup.end()) throw Error(ErrorKind::Validation, fmt::format("unknown config key '{}'", full));
      assign(full, it->second, value);
    }
  }
}

toml::table parse_toml(const std::string& text, const std::string& origin) {
  try {
    return toml::parse(text, origin);
  } catch (const toml::parse_error& e) {
    std::ostringstream os;
    os << e.description() << " (" << e.source().begin << ")";
    throw Error(ErrorKind::Validation, fmt::format("{}: {}", origin, os.str()));
  }
}

std::string format_double(double v) {
  std::string s = fmt::format("{}", v);
  if (s.find_first_of(".eEn") == std::string::npos) s += ".0";
  return s;
}

std::string quote(const std::string& s) {
  std::string out = "\"";
  for (char ch : s) {
    if (ch == '"' || ch == '\\') out += '\\';
    out += ch;
  }
  return out + "\"";
}

}  // namespace

void RunConfig::validate() const {
  auto fail = [](const std::string& msg) { throw Error(ErrorKind::Validation, msg); };
  if (scene.frame_count < 1) fail("scene.frame_count must be >= 1");
  if (cameras.rig.empty() && cameras.count < 1) fail("cameras.count must be >= 1");
  if (cameras.radius <= 0.0 || cameras.fx <= 0.0) fail("cameras.radius and cameras.fx must be positive");
  if (cameras.width < 11 || cameras.height < 11) fail("cameras.width and cameras.height must be >= 11");
  if (noise.flow_sigma < 0.0) fail("noise.flow_sigma must be >= 0");
  if (noise.mask_boundary_flip < 0.0 || noise.mask_boundary_flip > 1.0) fail("noise.mask_boundary_flip must be in [0, 1]");
  if (noise.mask_oversplit < 0) fail("noise.mask_oversplit must be >= 0");
  if (noise.boundary_radius < 1) fail("noise.boundary_radius must be >= 1");
  if (partition.theta_depth <= 0.0) fail("partition.theta_depth must be positive");
  if (partition.resolution <= 0.0) fail("partition.resolution must be positive");
  de.validate();
  if (tau_fail < 0.0) fail("motion.tau_fail must be >= 0");
  if (budget.epsilon < 0.0 || budget.min < 0 || budget.max < budget.min) fail("budget requires 0 <= min <= max");
  loss.validate();
  if (rigidity.params.alpha < 0.0 || rigidity.params.beta < 0.0 || rigidity.params.delta <= 0.0) {
    fail("rigidity.alpha, rigidity.beta must be >= 0 and rigidity.delta > 0");
  }
  if (rigidity.anchors < 0 || rigidity.knn < 0) fail("rigidity.anchors and rigidity.knn must be >= 0");
  if (refine.lr_center < 0.0 || refine.lr_color < 0.0) fail("refine learning rates must be >= 0");
  if (refine.rerender_every < 1) fail("refine.rerender_every must be >= 1");
  if (refine.huber <= 0.0) fail("refine.huber must be positive");
  if (output.empty()) fail("run.output must not be empty");
  if (max_frames < 0) fail("run.max_frames must be >= 0");
}

RunConfig parse_config(const std::string& toml_text) {
  RunConfig cfg;
  merge(cfg, parse_toml(toml_text, "config"));
  cfg.validate();
  return cfg;
}

RunConfig load_config(const std::filesystem::path& path) {
  RunConfig cfg;
  merge(cfg, parse_toml(io::read_text(path), path.string()));
  cfg.validate();
  return cfg;
}

void apply_override(RunConfig& cfg, const std::string& assignment) {
  const auto eq = assignment.find('=');
  const auto dot = assignment.find('.');
  if (eq == std::string::npos || dot == std::string::npos || dot > eq) {
    throw Error(ErrorKind::Validation, fmt::format("override '{}' is not section.key=value", assignment));
  }
  const std::string section = assignment.substr(0, dot);
  const std::string key = assignment.substr(dot + 1, eq - dot - 1);
  const std::string value = assignment.substr(eq + 1);
  toml::table root;
  try {
    root = toml::parse(fmt::format("[{}]\n{} = {}\n", section, key, value));
  } catch (const toml::parse_error&) {
    root = parse_toml(fmt::format("[{}]\n{} = {}\n", section, key, quote(value)), "override");
  }
  merge(cfg, root);
  cfg.validate();
}

std::string to_toml(const RunConfig& cfg) {
  RunConfig copy = cfg;
  std::string out;
  std::string section;
  for (const auto& [full, slot] : bindings(copy)) {
    const auto dot = full.find('.');
    const std::string sec = full.substr(0, dot);
    if (sec != section) {
      out += fmt::format("{}[{}]\n", out.empty() ? "" : "\n", sec);
      section = sec;
    }
    const std::string value = std::visit(
        [](auto* p) -> std::string {
          using T = std::remove_pointer_t<decltype(p)>;
          if constexpr (std::is_same_v<T, std::string>) return quote(*p);
          else if constexpr (std::is_same_v<T, double>) return format_double(*p);
          else return fmt::format("{}", *p);
        },
        slot);
    out += fmt::format("{} = {}\n", full.substr(dot + 1), value);
  }
  return out;
}

SceneSpec scene_spec(const RunConfig& cfg) {
  SceneSpec spec = standard_scene(cfg.scene.frame_count, cfg.scene.seed);
  spec.trajectories = oscillating_trajectories(spec.parts.size(), cfg.scene.frame_count, cfg.scene.translation_amplitude,
                                               cfg.scene.rotation_amplitude_deg, cfg.scene.seed);
  return spec;
}

std::vector<CameraModel> camera_rig(const RunConfig& cfg) {
  if (!cfg.cameras.rig.empty()) return cameras_from_json(io::read_text(cfg.cameras.rig));
  return camera_ring(Vec3::Zero(), cfg.cameras.radius, cfg.cameras.count, cfg.cameras.fx, cfg.cameras.width,
                     cfg.cameras.height, cfg.cameras.elevation);
}

}  // namespace pamo
