// Acceptance checks. Prints one PASS/FAIL line per criterion and exits non-zero on any FAIL.
#include "oracles.hpp"

#include "pamo/config.hpp"
#include "pamo/error.hpp"
#include "pamo/eval.hpp"
#include "pamo/field.hpp"
#include "pamo/geom.hpp"
#include "pamo/io.hpp"
#include "pamo/motion.hpp"
#include "pamo/observe.hpp"
#include "pamo/partition.hpp"
#include "pamo/pipeline.hpp"
#include "pamo/refine.hpp"

#include <fmt/core.h>

#include <chrono>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

using namespace pamo;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct Verdict {
  bool pass = false;
  std::string detail;
};

int failures = 0;

void report(int id, const std::function<Verdict()>& check) {
  Verdict v;
  try {
    v = check();
  } catch (const std::exception& e) {
    v = {false, fmt::format("threw: {}", e.what())};
  }
  if (!v.pass) ++failures;
  fmt::print("criterion {:>2} {}  {}\n", id, v.pass ? "PASS" : "FAIL", v.detail);
  std::fflush(stdout);
}

// ---- 1 ------------------------------------------------------------------------------------

Verdict graph_oracle() {
  const auto t0 = Clock::now();
  Rng rng(101);
  int mismatches = 0, edges = 0;
  const int scenes = 20;
  for (int s = 0; s < scenes; ++s) {
    const std::size_t n = 50 + rng.below(251);
    const int views = 2 + static_cast<int>(rng.below(7));
    PartField f = oracle::random_field(n, 1 + static_cast<int>(rng.below(4)), rng);
    const auto cams = camera_ring(Vec3::Zero(), 1.4 + rng.uniform(), views, 150.0, 96, 72);
    std::vector<ViewVisibility> vis;
    std::vector<ImageI> masks;
    for (const auto& cam : cams) {
      const auto r = render_view(f, cam);
      vis.push_back(visible_set(f, cam, r.depth, 0.1));
      ImageI m = flip_mask_boundaries(r.mask, rng.uniform(0.0, 0.3), 2, rng.next());
      if (rng.uniform() < 0.5) m = oversplit_mask(m, 2, rng.next());
      masks.push_back(m);
    }
    const auto g = build_part_graph(vis, masks, f.size());
    const auto ref = oracle::part_graph(vis, masks, f.size());
    std::size_t expected = 0;
    for (const auto& [key, counts] : ref) expected += counts.first > 0;
    if (g.edges.size() != expected) ++mismatches;
    for (const auto& e : g.edges) {
      ++edges;
      const auto it = ref.find({e.j, e.k});
      if (it == ref.end() || it->second.first != e.together || it->second.second != e.covisible) ++mismatches;
    }
  }
  const double t = seconds_since(t0);
  return {mismatches == 0 && t < 10.0,
          fmt::format("graph vs brute force: {} scenes, {} edges, {} mismatches, {:.2f} s (< 10 s)", scenes, edges,
                      mismatches, t)};
}

// ---- 2 ------------------------------------------------------------------------------------

Verdict clustering_recovery() {
  RunConfig cfg;
  cfg.scene.frame_count = 1;
  const SynthResult synth = synthesize(cfg);
  const auto& gt = synth.scene.frames[0];

  auto cluster = [&](const FrameObservations& frame, double& secs) {
    PartField f = unlabeled(gt);
    const auto t0 = Clock::now();
    cluster_first_frame(f, synth.cameras, frame, cfg);
    secs = seconds_since(t0);
    return adjusted_rand_index(synth.scene.gt_labels, f.part_ids());
  };
  double t_clean = 0.0, t_noisy = 0.0;
  const double clean = cluster(synth.clean[0], t_clean);
  NoiseConfig noise;
  noise.mask_boundary_flip = 0.1;
  noise.mask_oversplit = 2;
  const auto noisy_obs = corrupt(synth.clean, noise, 17);
  const double noisy = cluster(noisy_obs[0], t_noisy);
  return {clean == 1.0 && noisy >= 0.9 && t_clean < 5.0 && t_noisy < 5.0,
          fmt::format("ARI clean {:.4f} (= 1), flips 10% + oversplit 2 {:.4f} (>= 0.9), {:.2f} s / {:.2f} s (< 5 s)",
                      clean, noisy, t_clean, t_noisy)};
}

// ---- 3 ------------------------------------------------------------------------------------

struct MotionFixture {
  PartField prev;
  std::vector<CameraModel> cams;
  std::vector<ViewRender> renders;
};

MotionFixture motion_fixture() {
  SceneSpec spec;
  spec.parts = {{200, ShapeKind::Blob, Vec3(0.1, 0.07, 0.05), Vec3(0.02, -0.01, 0.03), Vec3(0.6, 0.4, 0.3)}};
  spec.frame_count = 1;
  spec.rng_seed = 23;
  MotionFixture fx;
  fx.prev = synth_scene(spec).frames[0];
  fx.cams = camera_ring(Vec3::Zero(), 1.6, 6, 220.0, 160, 120);
  fx.renders = render_observations(fx.prev, fx.cams);
  return fx;
}

Verdict de_recovery() {
  const MotionFixture fx = motion_fixture();
  const Vec3 pivot = center_of_mass(fx.prev, 0);
  Rng rng(303);
  const int trials = 50;
  int ok_clean = 0, ok_noisy = 0;
  double slowest = 0.0;
  for (int i = 0; i < trials; ++i) {
    RigidMotion truth;
    for (int a = 0; a < 3; ++a) {
      truth.delta[a] = rng.uniform(-0.15, 0.15);
      truth.omega_deg[a] = rng.uniform(-15.0, 15.0);
    }
    truth.pivot = pivot;
    std::vector<ImageF> flows;
    for (const auto& p : ground_truth_flow(fx.prev, {{0, truth}}, fx.cams)) flows.push_back(p.fwd);
    for (int noisy = 0; noisy < 2; ++noisy) {
      std::vector<ImageF> input = flows;
      if (noisy) {
        Rng n(Rng::derive(404, static_cast<std::uint64_t>(i), 0));
        for (auto& f : input) {
          for (auto& v : f.data) v += static_cast<float>(n.normal());
        }
      }
      const PartFlowProblem problem(fx.prev, 0, fx.cams, fx.renders, input);
      DEConfig de;
      de.seed = static_cast<std::uint64_t>(i);
      const auto t0 = Clock::now();
      const auto r = estimate_prior_motion_de(problem, de);
      slowest = std::max(slowest, seconds_since(t0));
      const double et = (r.motion.delta - truth.delta).norm();
      const double er = rotation_distance_deg(r.motion.rotation(), truth.rotation());
      if (!noisy && et < 0.01 && er < 2.0) ++ok_clean;
      if (noisy && et < 0.03 && er < 5.0) ++ok_noisy;
    }
  }
  const double rate_clean = static_cast<double>(ok_clean) / trials;
  const double rate_noisy = static_cast<double>(ok_noisy) / trials;
  return {rate_clean >= 0.95 && rate_noisy >= 0.90 && slowest < 1.0,
          fmt::format("{} motions: clean {:.0f}% within 1 cm / 2 deg (>= 95%), 1 px noise {:.0f}% within 3 cm / 5 deg "
                      "(>= 90%), slowest solve {:.3f} s (< 1 s)",
                      trials, 100 * rate_clean, 100 * rate_noisy, slowest)};
}

// ---- 4 ------------------------------------------------------------------------------------

Verdict kabsch_exactness() {
  Rng rng(505);
  int bad = 0, improper = 0;
  double worst = 0.0;
  const int trials = 1000;
  for (int i = 0; i < trials; ++i) {
    const double angle = rng.uniform(0.0, 179.0) * oracle::kPi / 180.0;
    const Mat3 r = oracle::axis_angle(oracle::unit_vector(rng), angle);
    const int n = 3 + static_cast<int>(rng.below(20));
    Points prev(n, 3), curr(n, 3);
    for (int k = 0; k < n; ++k) {
      const Vec3 p(rng.normal(), rng.normal(), rng.normal());
      prev.row(k) = p.transpose();
      curr.row(k) = (r * p).transpose();
    }
    const double err = (kabsch_rotation(prev, curr) - r).norm();
    worst = std::max(worst, err);
    if (!(err < 1e-8)) ++bad;

    Points mirrored = curr;
    mirrored.col(0) *= -1.0;
    if (std::abs(kabsch_rotation(prev, mirrored).determinant() - 1.0) > 1e-9) ++improper;
  }
  return {bad == 0 && improper == 0,
          fmt::format("{} rotations up to 179 deg: worst Frobenius error {:.2e} (< 1e-8), {} failures, "
                      "{} improper results on mirrored inputs",
                      trials, worst, bad, improper)};
}

// ---- 5 ------------------------------------------------------------------------------------

struct TrackingRun {
  EvalReport eval;
  double seconds = 0.0;
};

TrackingRun tracking_run(const RunConfig& cfg) {
  const auto t0 = Clock::now();
  const SynthResult synth = synthesize(cfg);
  PartField field0 = unlabeled(synth.scene.frames[0]);
  cluster_first_frame(field0, synth.cameras, synth.observed[0], cfg);
  const TrackResult track = track_sequence(cfg, synth.cameras, synth.observed, field0);
  TrackingRun run;
  run.eval = evaluate_tracking(synth.scene.frames, track.fields, synth.cameras, synth.scene.gt_labels,
                               track.fields.front().part_ids());
  run.seconds = seconds_since(t0);
  return run;
}

Verdict end_to_end() {
  RunConfig clean_cfg;
  const auto clean = tracking_run(clean_cfg);
  RunConfig noisy_cfg;
  noisy_cfg.noise.flow_sigma = 1.0;
  noisy_cfg.noise.mask_boundary_flip = 0.1;
  const auto noisy = tracking_run(noisy_cfg);
  const auto& c = clean.eval.tracks;
  const auto& n = noisy.eval.tracks;
  const double acc1 = c.acc_per_threshold.at(1.0);
  const bool pass = c.mte_cm < 1.0 && acc1 >= 0.95 && c.surv == 1.0 && n.mte_cm < 3.0 && n.surv >= 0.95 &&
                    clean.seconds < 300.0 && noisy.seconds < 300.0;
  return {pass, fmt::format("{} frames. clean: MTE {:.4f} cm (< 1), Acc(1 cm) {:.4f} (>= 0.95), Surv {:.4f} (= 1), "
                            "{:.0f} s. noisy: MTE {:.4f} cm (< 3), Surv {:.4f} (>= 0.95), {:.0f} s (< 300 s each)",
                            clean.eval.frames, c.mte_cm, acc1, c.surv, clean.seconds, n.mte_cm, n.surv, noisy.seconds)};
}

// ---- 6 ------------------------------------------------------------------------------------

Verdict rigidity_dynamics() {
  const RigidityParams p;
  double w = 0.5;
  int steps = 0;
  while (w < 1.0 && steps < 1000) {
    w = rigidity_step(w, 0.0, p);
    ++steps;
  }
  // Exactly 25: W after 24 updates is still below 1.
  double w24 = 0.5;
  for (int i = 0; i < 24; ++i) w24 = rigidity_step(w24, 0.0, p);

  std::vector<double> decay{0.5};
  for (int i = 0; i < 3; ++i) decay.push_back(rigidity_step(decay.back(), 2.0 * p.delta, p));
  const bool decay_ok = std::abs(decay[1] - 0.3) < 1e-12 && std::abs(decay[2] - 0.1) < 1e-12 && decay[3] == 0.0;

  Rng rng(606);
  int outside = 0;
  double wf = 0.5;
  for (int i = 0; i < 100000; ++i) {
    RigidityParams q;
    q.alpha = rng.uniform(0.0, 2.0);
    q.beta = rng.uniform(0.0, 2.0);
    q.delta = rng.uniform(1e-6, 1e-2);
    wf = rigidity_step(rng.uniform() < 0.1 ? rng.uniform(-1.0, 2.0) : wf, std::abs(rng.normal()) * 1e-2, q);
    if (!(wf >= 0.0 && wf <= 1.0)) ++outside;
  }
  const bool pass = steps == 25 && w24 < 1.0 && decay_ok && outside == 0;
  return {pass, fmt::format("W=1 after {} updates (= 25), decay {:.3g} -> {:.3g} -> {:.3g} -> {:.3g}, "
                            "{} of 100000 fuzzed updates outside [0, 1]",
                            steps, decay[0], decay[1], decay[2], decay[3], outside)};
}

// ---- 7 ------------------------------------------------------------------------------------

Verdict budget_rule() {
  const int b0 = iteration_budget(0.0);
  const int b1 = iteration_budget(0.05);
  Rng rng(707);
  std::vector<double> d(10000);
  for (auto& v : d) v = rng.uniform() < 0.5 ? rng.uniform(0.0, 0.01) : rng.uniform(0.0, 1.0);
  std::sort(d.begin(), d.end());
  int violations = 0;
  for (std::size_t i = 1; i < d.size(); ++i) {
    const int a = iteration_budget(d[i - 1]), b = iteration_budget(d[i]);
    if (b < a || a < 1500 || b > 2000) ++violations;
  }
  return {b0 == 1500 && b1 == 2000 && violations == 0,
          fmt::format("budget(0) = {} (1500), budget(0.05) = {} (2000), {} monotonicity violations in 10000 values",
                      b0, b1, violations)};
}

// ---- 8 ------------------------------------------------------------------------------------

double relative_error(const std::vector<Vec3>& a, const std::vector<Vec3>& b) {
  double diff = 0.0, scale = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    diff = std::max(diff, (a[i] - b[i]).cwiseAbs().maxCoeff());
    scale = std::max(scale, b[i].cwiseAbs().maxCoeff());
  }
  return scale > 0.0 ? diff / scale : diff;
}

Verdict gradient_fidelity() {
  Rng rng(808);
  double worst = 0.0;
  int bad = 0;
  const int fixtures = 100;
  for (int i = 0; i < fixtures; ++i) {
    PartField f = oracle::random_field(20 + rng.below(30), 1 + static_cast<int>(rng.below(3)), rng);
    const auto prev = f.centers();
    std::vector<Vec3> cur;
    for (const auto& c : prev) cur.emplace_back(c + 0.01 * Vec3(rng.normal(), rng.normal(), rng.normal()));
    auto state = init_rigidity(f, 8, rng.next());
    for (auto& pair : state.pairs) pair.w = rng.uniform();
    const auto knn = build_knn(prev, 6);
    using Centers = std::vector<Vec3>;
    // h = 1e-6 relative to the coordinate scale.
    double scale = 0.0;
    for (const auto& c : cur) scale = std::max(scale, c.cwiseAbs().maxCoeff());
    const double h = 1e-6 * std::max(scale, 1e-3);
    const auto np = oracle::numeric_gradient([&](const Centers& y) { return part_rigid_loss(state, y, prev).value; }, cur, h);
    const auto nl = oracle::numeric_gradient([&](const Centers& y) { return local_rigid_loss(knn, y, prev).value; }, cur, h);
    const double ep = relative_error(part_rigid_loss(state, cur, prev).grad, np);
    const double el = relative_error(local_rigid_loss(knn, cur, prev).grad, nl);
    worst = std::max({worst, ep, el});
    if (!(ep < 1e-5) || !(el < 1e-5)) ++bad;
  }
  return {bad == 0, fmt::format("{} fixtures, worst relative error {:.2e} (< 1e-5), {} failures", fixtures, worst, bad)};
}

// ---- 9 ------------------------------------------------------------------------------------

Verdict isometry_invariance() {
  Rng rng(909);
  double worst = 0.0;
  const int trials = 100;
  for (int i = 0; i < trials; ++i) {
    PartField f = oracle::random_field(30 + rng.below(70), 1 + static_cast<int>(rng.below(4)), rng);
    const auto prev = f.centers();
    const Mat3 r = oracle::axis_angle(oracle::unit_vector(rng), rng.uniform(0.0, oracle::kPi));
    const Vec3 t(rng.normal(), rng.normal(), rng.normal());
    std::vector<Vec3> moved;
    for (const auto& c : prev) moved.push_back(r * c + t);
    const auto state = init_rigidity(f, 8, rng.next());
    const auto knn = build_knn(prev, 8);
    worst = std::max({worst, part_rigid_loss(state, moved, prev).value, local_rigid_loss(knn, moved, prev).value});
  }
  return {worst < 1e-9, fmt::format("{} random rigid motions, largest loss {:.2e} (< 1e-9)", trials, worst)};
}

// ---- 10 -----------------------------------------------------------------------------------

Verdict metric_correctness() {
  // Hand table: track 1 errors 5, 60, 10, 10 cm; track 0 exact.
  std::vector<std::vector<Vec3>> gt(2, std::vector<Vec3>(4, Vec3::Zero()));
  auto est = gt;
  est[1][0] = Vec3(0.05, 0, 0);
  est[1][1] = Vec3(0, 0.60, 0);
  est[1][2] = Vec3(0, 0, 0.10);
  est[1][3] = Vec3(0, 0, 0.10);
  const auto r = trajectory_metrics(est, gt);
  const bool table = r.surv == 5.0 / 8.0 && std::abs(r.mte_cm - 2.5) < 1e-12 && r.acc_per_threshold.at(1.0) == 0.5 &&
                     r.acc_per_threshold.at(2.0) == 0.5 && r.acc_per_threshold.at(4.0) == 0.5 &&
                     r.acc_per_threshold.at(8.0) == 5.0 / 8.0 && r.acc_per_threshold.at(16.0) == 7.0 / 8.0 &&
                     std::abs(r.acc - 0.6) < 1e-12;

  Rng rng(1010);
  double epe_worst = 0.0;
  for (int i = 0; i < 50; ++i) {
    ImageF a(31 + i, 17 + i, 2), b(31 + i, 17 + i, 2);
    for (auto& v : a.data) v = static_cast<float>(5 * rng.normal());
    for (auto& v : b.data) v = static_cast<float>(5 * rng.normal());
    std::vector<std::uint8_t> mask(a.pixels());
    for (auto& m : mask) m = rng.uniform() < 0.7;
    mask[0] = 1;
    epe_worst = std::max(epe_worst, std::abs(flow_epe(a, b, mask) - oracle::flow_epe(a, b, mask)));
  }

  // MSE exactly 0.01: 16 of 25 pixels off by 0.125.
  ImageF c(5, 5, 1, 0.5f), d(5, 5, 1, 0.5f);
  for (int i = 0; i < 16; ++i) d.data[i] = 0.625f;
  const double psnr_err = std::abs(psnr(c, d) - 20.0);
  return {table && epe_worst < 1e-6 && psnr_err < 1e-9,
          fmt::format("hand table {}, flow EPE vs oracle worst {:.2e} (< 1e-6), PSNR error {:.2e} dB (< 1e-9)",
                      table ? "matches" : "differs", epe_worst, psnr_err)};
}

// ---- 11 -----------------------------------------------------------------------------------

Verdict determinism() {
  const fs::path root = fs::temp_directory_path() / "pamo_acceptance_determinism";
  fs::remove_all(root);
  RunConfig cfg;
  cfg.scene.frame_count = 5;
  cfg.noise.flow_sigma = 1.0;
  cfg.noise.mask_boundary_flip = 0.1;
  const auto t0 = Clock::now();
  cfg.output = (root / "a").string();
  const std::string a = cmd_all(cfg);
  cfg.output = (root / "b").string();
  const std::string b = cmd_all(cfg);
  const double t = seconds_since(t0);
  const bool same = a == b && io::read_text(root / "a" / "eval" / "metrics.json") ==
                                  io::read_text(root / "b" / "eval" / "metrics.json");
  fs::remove_all(root);
  return {same, fmt::format("two 'all' runs ({} frames, noisy observations): metric JSON {}, {:.0f} s",
                            cfg.scene.frame_count, same ? "bitwise identical" : "differs", t)};
}

}  // namespace

int main() {
  const auto t0 = Clock::now();
  report(1, graph_oracle);
  report(2, clustering_recovery);
  report(3, de_recovery);
  report(4, kabsch_exactness);
  report(5, end_to_end);
  report(6, rigidity_dynamics);
  report(7, budget_rule);
  report(8, gradient_fidelity);
  report(9, isometry_invariance);
  report(10, metric_correctness);
  report(11, determinism);
  fmt::print("{} of 11 criteria passed in {:.0f} s\n", 11 - failures, seconds_since(t0));
  return failures == 0 ? 0 : 1;
}
