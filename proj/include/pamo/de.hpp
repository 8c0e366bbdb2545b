#pragma once

#include "pamo/random.hpp"

#include <Eigen/Core>

#include <functional>
#include <optional>
#include <vector>

namespace pamo {

struct DESettings {
  int population = 12;
  int max_generations = 25;
  double F = 0.7;
  double CR = 0.9;
  /// Stop once the best value improved by less than this for `stall_generations` generations.
  double stall_tolerance = 1e-6;
  int stall_generations = 5;
};

struct DEOutcome {
  Eigen::VectorXd best;
  double value = 0.0;
  /// Best value after initialization (index 0) and after every generation.
  std::vector<double> history;
  int generations = 0;
  int evaluations = 0;
};

using Objective = std::function<double(const Eigen::VectorXd&)>;

/// Differential evolution, best/1/bin, inside the box [lower, upper]. The population is drawn
/// uniformly from the box; `seed_member`, when given, replaces the first member. Trial
/// components that leave the box are pulled halfway from the base vector to the violated
/// bound, so every evaluated point is feasible.
DEOutcome differential_evolution(const Objective& f, const Eigen::VectorXd& lower, const Eigen::VectorXd& upper,
                                 const DESettings& settings, Rng& rng,
                                 const std::optional<Eigen::VectorXd>& seed_member = std::nullopt);

struct PolishSettings {
  int max_evaluations = 600;
  double initial_step_fraction = 0.05;  ///< of the box width
  double tolerance = 1e-9;
};

/// Bounded Nelder-Mead started at `start`; points are clamped into the box before evaluation.
/// Returns the start itself when no improvement is found.
DEOutcome nelder_mead_polish(const Objective& f, const Eigen::VectorXd& lower, const Eigen::VectorXd& upper,
                             const Eigen::VectorXd& start, double start_value, const PolishSettings& settings);

}  // namespace pamo
