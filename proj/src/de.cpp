#include "pamo/de.hpp"

#include "pamo/error.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace pamo {

DEOutcome differential_evolution(const Objective& f, const Eigen::VectorXd& lower, const Eigen::VectorXd& upper,
                                 const DESettings& s, Rng& rng, const std::optional<Eigen::VectorXd>& seed_member) {
  const Eigen::Index dims = lower.size();
  if (upper.size() != dims || dims == 0) throw Error(ErrorKind::Validation, "DE bounds have mismatched sizes");
  if ((upper.array() < lower.array()).any()) throw Error(ErrorKind::Validation, "DE bounds are inverted");
  if (s.population < 4) throw Error(ErrorKind::Validation, "best/1/bin needs a population of at least 4");
  if (!(s.CR > 0.0 && s.CR <= 1.0)) throw Error(ErrorKind::Validation, "CR must lie in (0, 1]");
  if (!(s.F > 0.0 && s.F < 2.0)) throw Error(ErrorKind::Validation, "F must lie in (0, 2)");

  const int np = s.population;
  std::vector<Eigen::VectorXd> pop(np, Eigen::VectorXd(dims));
  std::vector<double> value(np);
  DEOutcome out;

  for (int i = 0; i < np; ++i) {
    for (Eigen::Index d = 0; d < dims; ++d) pop[i][d] = rng.uniform(lower[d], upper[d]);
  }
  if (seed_member) pop[0] = seed_member->cwiseMax(lower).cwiseMin(upper);
  for (int i = 0; i < np; ++i) value[i] = f(pop[i]);
  out.evaluations = np;

  auto best_index = [&] {
    return static_cast<int>(std::min_element(value.begin(), value.end()) - value.begin());
  };
  int best = best_index();
  out.history.push_back(value[best]);

  int stall = 0;
  Eigen::VectorXd trial(dims);
  for (int gen = 0; gen < s.max_generations; ++gen) {
    const double before = value[best];
    for (int i = 0; i < np; ++i) {
      int r1, r2;
      do { r1 = static_cast<int>(rng.below(np)); } while (r1 == i);
      do { r2 = static_cast<int>(rng.below(np)); } while (r2 == i || r2 == r1);
      const Eigen::VectorXd& base = pop[best];
      const auto forced = static_cast<Eigen::Index>(rng.below(static_cast<std::uint64_t>(dims)));
      for (Eigen::Index d = 0; d < dims; ++d) {
        if (d == forced || rng.uniform() < s.CR) {
          double m = base[d] + s.F * (pop[r1][d] - pop[r2][d]);
          if (m < lower[d]) m = 0.5 * (base[d] + lower[d]);
          if (m > upper[d]) m = 0.5 * (base[d] + upper[d]);
          trial[d] = m;
        } else {
          trial[d] = pop[i][d];
        }
      }
      const double v = f(trial);
      ++out.evaluations;
      if (v <= value[i]) {
        pop[i] = trial;
        value[i] = v;
        if (v < value[best]) best = i;
      }
    }
    out.history.push_back(value[best]);
    out.generations = gen + 1;
    if (before - value[best] < s.stall_tolerance) {
      if (++stall >= s.stall_generations) break;
    } else {
      stall = 0;
    }
  }
  out.best = pop[best];
  out.value = value[best];
  return out;
}

DEOutcome nelder_mead_polish(const Objective& f, const Eigen::VectorXd& lower, const Eigen::VectorXd& upper,
                             const Eigen::VectorXd& start, double start_value, const PolishSettings& s) {
  const Eigen::Index n = start.size();
  auto clamp = [&](Eigen::VectorXd x) { return Eigen::VectorXd(x.cwiseMax(lower).cwiseMin(upper)); };
  std::vector<Eigen::VectorXd> simplex{start};
  std::vector<double> values{start_value};
  int evals = 0;
  for (Eigen::Index d = 0; d < n; ++d) {
    Eigen::VectorXd x = start;
    const double step = s.initial_step_fraction * (upper[d] - lower[d]);
    x[d] += (x[d] + step <= upper[d]) ? step : -step;
    x = clamp(x);
    simplex.push_back(x);
    values.push_back(f(x));
    ++evals;
  }

  std::vector<std::size_t> order(simplex.size());
  while (evals < s.max_evaluations) {
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return values[a] < values[b]; });
    const auto lo = order.front(), hi = order.back(), second = order[order.size() - 2];
    if (std::abs(values[hi] - values[lo]) <= s.tolerance * (std::abs(values[lo]) + 1e-12)) break;

    Eigen::VectorXd centroid = Eigen::VectorXd::Zero(n);
    for (auto i : order) if (i != hi) centroid += simplex[i];
    centroid /= static_cast<double>(n);

    const Eigen::VectorXd xr = clamp(centroid + (centroid - simplex[hi]));
    const double fr = f(xr);
    ++evals;
    if (fr < values[lo]) {
      const Eigen::VectorXd xe = clamp(centroid + 2.0 * (centroid - simplex[hi]));
      const double fe = f(xe);
      ++evals;
      if (fe < fr) { simplex[hi] = xe; values[hi] = fe; }
      else { simplex[hi] = xr; values[hi] = fr; }
      continue;
    }
    if (fr < values[second]) {
      simplex[hi] = xr;
      values[hi] = fr;
      continue;
    }
    const bool outside = fr < values[hi];
    const Eigen::VectorXd xc = outside ? clamp(centroid + 0.5 * (xr - centroid))
                                       : clamp(centroid + 0.5 * (simplex[hi] - centroid));
    const double fc = f(xc);
    ++evals;
    if (fc < (outside ? fr : values[hi])) {
      simplex[hi] = xc;
      values[hi] = fc;
      continue;
    }
    for (auto i : order) {
      if (i == lo) continue;
      simplex[i] = clamp(simplex[lo] + 0.5 * (simplex[i] - simplex[lo]));
      values[i] = f(simplex[i]);
      ++evals;
    }
  }
  const auto best = static_cast<std::size_t>(std::min_element(values.begin(), values.end()) - values.begin());
  DEOutcome out;
  out.best = simplex[best];
  out.value = values[best];
  out.evaluations = evals;
  out.history = {start_value, out.value};
  return out;
}

}  // namespace pamo
