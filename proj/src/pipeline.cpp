#include "pamo/pipeline.hpp"

#include "pamo/error.hpp"
#include "pamo/io.hpp"
#include "pamo/parallel.hpp"

#include <fmt/format.h>
#include <json.hpp>

#include <cmath>
#include <memory>
#include <optional>

namespace pamo {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

ObservationSet observe_scene(const SyntheticScene& scene, std::span<const CameraModel> cameras,
                             const RenderOptions& opt) {
  ObservationSet obs(scene.frames.size());
  for (std::size_t f = 0; f < scene.frames.size(); ++f) {
    obs[f].views = render_observations(scene.frames[f], cameras, opt);
    if (f == 0) continue;
    const auto flows = flows_between(scene.frames[f - 1], scene.frames[f], cameras, obs[f - 1].views, obs[f].views);
    for (const auto& pair : flows) {
      obs[f].flow_fwd.push_back(pair.fwd);
      obs[f].flow_bwd.push_back(pair.bwd);
    }
  }
  return obs;
}

SynthResult synthesize(const RunConfig& cfg) {
  cfg.validate();
  SynthResult out;
  out.spec = scene_spec(cfg);
  out.scene = synth_scene(out.spec);
  out.cameras = camera_rig(cfg);
  out.clean = observe_scene(out.scene, out.cameras);
  out.observed = cfg.noise.is_zero() ? out.clean : corrupt(out.clean, cfg.noise, cfg.noise_seed);
  return out;
}

PartField unlabeled(const PartField& field) {
  PartField out = field;
  for (auto& g : out.gaussians) g.part_id = -1;
  out.parts.clear();
  out.prev_centers.clear();
  out.prev2_centers.clear();
  out.timestamp = 0;
  return out;
}

PartitionResult cluster_first_frame(PartField& field, std::span<const CameraModel> cameras,
                                    const FrameObservations& frame0, const RunConfig& cfg) {
  std::vector<ImageF> depths;
  std::vector<ImageI> masks;
  for (const auto& v : frame0.views) {
    depths.push_back(v.depth);
    masks.push_back(v.mask);
  }
  return discover_parts(field, cameras, depths, masks, cfg.partition);
}

TrackResult track_sequence(const RunConfig& cfg, std::span<const CameraModel> cameras, const ObservationSet& obs,
                           PartField field0, const FrameSink& sink) {
  cfg.validate();
  if (obs.empty()) throw Error(ErrorKind::InconsistentInput, "no observations to track");
  field0.validate();
  if (field0.parts.empty()) throw Error(ErrorKind::InconsistentInput, "initial field has no parts");
  const std::size_t frames =
      cfg.max_frames > 0 ? std::min<std::size_t>(static_cast<std::size_t>(cfg.max_frames), obs.size()) : obs.size();
  for (std::size_t t = 0; t < frames; ++t) {
    if (obs[t].views.size() != cameras.size()) {
      throw Error(ErrorKind::InconsistentInput, fmt::format("frame {}: one view per camera required", t));
    }
    if (t > 0 && (obs[t].flow_fwd.size() != cameras.size() || obs[t].flow_bwd.size() != cameras.size())) {
      throw Error(ErrorKind::InconsistentInput, fmt::format("frame {}: flow missing", t));
    }
  }

  TrackResult result;
  field0.timestamp = 0;
  result.fields.push_back(field0);
  if (sink) sink(result.fields.back(), nullptr);

  RigidityState rigidity = init_rigidity(field0, cfg.rigidity.anchors, cfg.rigidity.seed);
  const KnnIndex knn = build_knn(field0.centers(), cfg.rigidity.knn);

  for (std::size_t t = 1; t < frames; ++t) {
    const PartField& prev = result.fields[t - 1];
    const auto& frame = obs[t];
    std::vector<ImageF> observed;
    for (const auto& v : frame.views) observed.push_back(v.color);

    std::vector<int> ids;
    for (const auto& [id, members] : prev.parts) ids.push_back(id);
    const auto renders_prev = render_observations(prev, cameras);

    std::vector<std::unique_ptr<PartFlowProblem>> problems(ids.size());
    std::vector<std::optional<RigidMotion>> de(ids.size()), inertia(ids.size());
    const auto centers_prev = prev.centers();
    const std::vector<Vec3> centers_prev2 = t >= 2 ? result.fields[t - 2].centers() : std::vector<Vec3>{};
    parallel_for(ids.size(), [&](std::size_t i) {
      try {
        problems[i] = std::make_unique<PartFlowProblem>(prev, ids[i], cameras, renders_prev, frame.flow_fwd);
        if (problems[i]->observable()) de[i] = estimate_prior_motion_de(*problems[i], cfg.de, t).motion;
        if (t >= 2) inertia[i] = inertia_motion(prev.parts.at(ids[i]), centers_prev, centers_prev2);
      } catch (const Error& e) {
        throw Error(e.kind(), fmt::format("frame {} part {}: {}", t, ids[i], e.what()));
      }
    });

    PartField base = prev;
    for (std::size_t i = 0; i < ids.size(); ++i) {
      if (de[i]) apply_motion(base, ids[i], *de[i]);
      else if (inertia[i]) apply_motion(base, ids[i], *inertia[i]);
    }

    FrameReport report;
    report.frame = static_cast<int>(t);
    report.parts.resize(ids.size());
    parallel_for(ids.size(), [&](std::size_t i) {
      ResolveInputs in;
      in.base_field = &base;
      in.field_prev = &prev;
      in.cameras = cameras;
      in.observed_color = observed;
      in.problem = problems[i]->observable() ? problems[i].get() : nullptr;
      in.tau_fail = cfg.tau_fail;
      report.parts[i] = resolve_part_motion(ids[i], de[i], inertia[i], in);
    });

    PartField cur = prev;
    cur.timestamp = static_cast<int>(t);
    for (const auto& s : report.parts) apply_motion(cur, s.part_id, s.motion);

    report.d_pixel = mean_rgb_difference(render_observations(cur, cameras), observed);
    report.budget = iteration_budget(report.d_pixel, cfg.budget.epsilon, cfg.budget.min, cfg.budget.max);

    if (t >= 2) rigidity = update_rigidity(std::move(rigidity), centers_prev, centers_prev2, cfg.rigidity.params);
    RefineInputs rin;
    rin.cameras = cameras;
    rin.observed_color = observed;
    rin.flow_fwd = frame.flow_fwd;
    rin.flow_bwd = frame.flow_bwd;
    rin.centers_prev = centers_prev;
    rin.rigidity = &rigidity;
    rin.knn = &knn;
    report.refine = refine_timestamp(cur, rin, report.budget, cfg.loss, cfg.refine);
    for (const auto& g : cur.gaussians) {
      if (!g.center.allFinite() || !g.color.allFinite()) {
        throw Error(ErrorKind::InconsistentInput, fmt::format("frame {}: refinement diverged", t));
      }
    }

    result.fields.push_back(std::move(cur));
    result.frames.push_back(std::move(report));
    if (sink) sink(result.fields.back(), &result.frames.back());
  }
  return result;
}

EvalReport evaluate_tracking(const std::vector<PartField>& gt_fields, const std::vector<PartField>& est_fields,
                             std::span<const CameraModel> cameras, std::span<const int> gt_labels,
                             std::span<const int> est_labels) {
  if (est_fields.empty()) throw Error(ErrorKind::MissingGroundTruth, "no tracked frames to evaluate");
  if (gt_fields.size() < est_fields.size()) {
    throw Error(ErrorKind::MissingGroundTruth, "ground truth covers fewer frames than the tracked run");
  }
  const std::size_t frames = est_fields.size();
  const std::size_t n = gt_fields.front().size();
  for (std::size_t f = 0; f < frames; ++f) {
    if (gt_fields[f].size() != n || est_fields[f].size() != n) {
      throw Error(ErrorKind::LengthMismatch, fmt::format("frame {}: primitive counts differ", f));
    }
  }

  EvalReport r;
  r.frames = static_cast<int>(frames);
  std::vector<std::vector<Vec3>> est(n), gt(n);
  for (std::size_t j = 0; j < n; ++j) {
    for (std::size_t f = 0; f < frames; ++f) {
      est[j].push_back(est_fields[f].gaussians[j].center);
      gt[j].push_back(gt_fields[f].gaussians[j].center);
    }
  }
  r.tracks = trajectory_metrics(est, gt);
  r.ari = adjusted_rand_index(gt_labels, est_labels);

  std::vector<std::vector<ViewRender>> gt_r(frames), est_r(frames);
  for (std::size_t f = 0; f < frames; ++f) {
    gt_r[f] = render_observations(gt_fields[f], cameras);
    est_r[f] = render_observations(est_fields[f], cameras);
  }
  double psnr_sum = 0.0, ssim_sum = 0.0;
  for (std::size_t f = 0; f < frames; ++f) {
    for (std::size_t v = 0; v < cameras.size(); ++v) {
      const auto m = image_metrics(est_r[f][v].color, gt_r[f][v].color);
      psnr_sum += std::isfinite(m.psnr) ? m.psnr : 100.0;
      ssim_sum += m.ssim;
    }
  }
  const double images = static_cast<double>(frames * cameras.size());
  r.psnr = psnr_sum / images;
  r.ssim = ssim_sum / images;

  double epe_sum = 0.0;
  std::size_t epe_count = 0;
  for (std::size_t f = 1; f < frames; ++f) {
    const auto gt_flow = flows_between(gt_fields[f - 1], gt_fields[f], cameras, gt_r[f - 1], gt_r[f]);
    const auto est_flow = flows_between(est_fields[f - 1], est_fields[f], cameras, est_r[f - 1], est_r[f]);
    for (std::size_t v = 0; v < cameras.size(); ++v) {
      std::vector<std::uint8_t> mask(gt_r[f - 1][v].owner.data.size());
      bool any = false;
      for (std::size_t i = 0; i < mask.size(); ++i) {
        mask[i] = gt_r[f - 1][v].owner.data[i] >= 0 && est_r[f - 1][v].owner.data[i] >= 0;
        any = any || mask[i];
      }
      if (!any) continue;
      epe_sum += flow_epe(est_flow[v].fwd, gt_flow[v].fwd, mask);
      ++epe_count;
    }
  }
  r.flow_epe = epe_count ? epe_sum / static_cast<double>(epe_count) : 0.0;
  return r;
}

std::string eval_report_json(const EvalReport& r) {
  json j;
  j["frames"] = r.frames;
  j["mte_cm"] = r.tracks.mte_cm;
  j["acc"] = r.tracks.acc;
  json acc = json::object();
  for (const auto& [th, v] : r.tracks.acc_per_threshold) acc[fmt::format("{}cm", th)] = v;
  j["acc_per_threshold"] = acc;
  j["surv"] = r.tracks.surv;
  j["surv_per_frame"] = r.tracks.surv_per_frame;
  j["flow_epe_px"] = r.flow_epe;
  j["psnr_db"] = r.psnr;
  j["ssim"] = r.ssim;
  j["ari"] = r.ari;
  return j.dump(2) + "\n";
}

// ---- run directory -----------------------------------------------------------------------

namespace {

struct Layout {
  fs::path root;
  fs::path scene() const { return root / "scene"; }
  fs::path cameras() const { return scene() / "cameras.json"; }
  fs::path gt_field(std::size_t f) const { return scene() / fmt::format("gt_field_{:04d}.pamo", f); }
  fs::path manifest() const { return scene() / "manifest.json"; }
  fs::path obs_frame(std::size_t f) const { return root / "obs" / fmt::format("frame_{:04d}", f); }
  fs::path depth(std::size_t f, std::size_t v) const { return obs_frame(f) / fmt::format("view_{:02d}.depth.pimg", v); }
  fs::path color(std::size_t f, std::size_t v) const { return obs_frame(f) / fmt::format("view_{:02d}.color.pimg", v); }
  fs::path mask(std::size_t f, std::size_t v) const { return obs_frame(f) / fmt::format("view_{:02d}.mask.pimg", v); }
  fs::path fwd(std::size_t f, std::size_t v) const { return obs_frame(f) / fmt::format("view_{:02d}.fwd.flo", v); }
  fs::path bwd(std::size_t f, std::size_t v) const { return obs_frame(f) / fmt::format("view_{:02d}.bwd.flo", v); }
  fs::path cluster() const { return root / "cluster"; }
  fs::path track() const { return root / "track"; }
  fs::path field(std::size_t f) const { return track() / fmt::format("field_{:04d}.pamo", f); }
  fs::path eval() const { return root / "eval"; }
};

void make_dirs(const fs::path& p) {
  std::error_code ec;
  fs::create_directories(p, ec);
  if (ec) throw Error(ErrorKind::Io, fmt::format("{}: {}", p.string(), ec.message()));
}

void write_resolved(const Layout& l, const RunConfig& cfg) {
  make_dirs(l.root);
  io::write_text(l.root / "config.resolved.toml", to_toml(cfg));
}

json parse_json(const fs::path& path) {
  try {
    return json::parse(io::read_text(path));
  } catch (const json::exception& e) {
    throw Error(ErrorKind::Io, fmt::format("{}: malformed JSON ({})", path.string(), e.what()));
  }
}

std::size_t manifest_frames(const Layout& l) {
  const auto m = parse_json(l.manifest());
  return m.at("frame_count").get<std::size_t>();
}

std::vector<CameraModel> read_cameras(const Layout& l) { return cameras_from_json(io::read_text(l.cameras())); }

ObservationSet read_observations(const Layout& l, std::size_t frames, std::size_t views) {
  ObservationSet obs(frames);
  for (std::size_t f = 0; f < frames; ++f) {
    for (std::size_t v = 0; v < views; ++v) {
      ViewRender r;
      r.depth = io::read_image_f(l.depth(f, v));
      r.color = io::read_image_f(l.color(f, v));
      r.mask = io::read_image_i(l.mask(f, v));
      obs[f].views.push_back(std::move(r));
      if (f > 0) {
        obs[f].flow_fwd.push_back(io::read_flo(l.fwd(f, v)));
        obs[f].flow_bwd.push_back(io::read_flo(l.bwd(f, v)));
      }
    }
  }
  return obs;
}

std::string csv_double(double v) { return fmt::format("{}", v); }

}  // namespace

std::string cmd_synth(const RunConfig& cfg) {
  const Layout l{cfg.output};
  const SynthResult s = synthesize(cfg);
  write_resolved(l, cfg);
  make_dirs(l.scene());
  io::write_text(l.cameras(), cameras_to_json(s.cameras));

  json manifest;
  manifest["frame_count"] = s.scene.frames.size();
  manifest["view_count"] = s.cameras.size();
  manifest["primitive_count"] = s.scene.frames.front().size();
  json parts = json::array();
  for (const auto& [id, members] : s.scene.frames.front().parts) parts.push_back({{"id", id}, {"size", members.size()}});
  manifest["parts"] = parts;
  manifest["cameras"] = fs::relative(l.cameras(), l.root).generic_string();
  json frames = json::array();
  for (std::size_t f = 0; f < s.scene.frames.size(); ++f) {
    io::write_field(l.gt_field(f), s.scene.frames[f]);
    make_dirs(l.obs_frame(f));
    json entry;
    entry["frame"] = f;
    entry["gt_field"] = fs::relative(l.gt_field(f), l.root).generic_string();
    json views = json::array();
    for (std::size_t v = 0; v < s.cameras.size(); ++v) {
      const auto& r = s.observed[f].views[v];
      io::write_image(l.depth(f, v), r.depth);
      io::write_image(l.color(f, v), r.color);
      io::write_image(l.mask(f, v), r.mask);
      json view;
      view["depth"] = fs::relative(l.depth(f, v), l.root).generic_string();
      view["color"] = fs::relative(l.color(f, v), l.root).generic_string();
      view["mask"] = fs::relative(l.mask(f, v), l.root).generic_string();
      if (f > 0) {
        io::write_flo(l.fwd(f, v), s.observed[f].flow_fwd[v]);
        io::write_flo(l.bwd(f, v), s.observed[f].flow_bwd[v]);
        view["flow_fwd"] = fs::relative(l.fwd(f, v), l.root).generic_string();
        view["flow_bwd"] = fs::relative(l.bwd(f, v), l.root).generic_string();
      }
      views.push_back(view);
    }
    entry["views"] = views;
    frames.push_back(entry);
  }
  manifest["frames"] = frames;
  const std::string text = manifest.dump(2) + "\n";
  io::write_text(l.manifest(), text);
  return text;
}

void cmd_cluster(const RunConfig& cfg) {
  const Layout l{cfg.output};
  write_resolved(l, cfg);
  const auto cameras = read_cameras(l);
  const auto obs = read_observations(l, 1, cameras.size());
  PartField field = unlabeled(io::read_field(l.gt_field(0)));
  const auto result = cluster_first_frame(field, cameras, obs.front(), cfg);

  make_dirs(l.cluster());
  std::string csv = "j,k,weight,denominator,numerator\n";
  for (const auto& e : result.graph.edges) {
    csv += fmt::format("{},{},{},{},{}\n", e.j, e.k, csv_double(e.weight()), e.covisible, e.together);
  }
  io::write_text(l.cluster() / "graph.csv", csv);

  json j;
  j["primitive_count"] = field.size();
  j["part_count"] = field.parts.size();
  j["modularity"] = modularity(result.graph, result.clustering, cfg.partition.resolution);
  j["louvain_labels"] = result.clustering;
  j["part_ids"] = field.part_ids();
  io::write_text(l.cluster() / "clustering.json", j.dump(2) + "\n");
  io::write_field(l.cluster() / "field_init.pamo", field);
}

int cmd_track(const RunConfig& cfg) {
  const Layout l{cfg.output};
  write_resolved(l, cfg);
  const auto cameras = read_cameras(l);
  const std::size_t frames = manifest_frames(l);
  const std::size_t wanted =
      cfg.max_frames > 0 ? std::min<std::size_t>(frames, static_cast<std::size_t>(cfg.max_frames)) : frames;
  const auto obs = read_observations(l, wanted, cameras.size());
  PartField field0 = io::read_field(l.cluster() / "field_init.pamo");

  make_dirs(l.track());
  std::string motion_lines, refine_csv = "frame,step,data,l1,dssim,lo,part,loc,total\n";
  int written = 0;
  auto sink = [&](const PartField& field, const FrameReport* report) {
    io::write_field(l.field(static_cast<std::size_t>(field.timestamp)), field);
    ++written;
    if (!report) return;
    for (const auto& p : report->parts) {
      json m;
      m["frame"] = report->frame;
      m["part"] = p.part_id;
      m["source"] = to_string(p.source);
      m["delta"] = {p.motion.delta.x(), p.motion.delta.y(), p.motion.delta.z()};
      m["omega_deg"] = {p.motion.omega_deg.x(), p.motion.omega_deg.y(), p.motion.omega_deg.z()};
      m["objective"] = p.objective;
      m["d_part"] = p.d_part;
      m["failed"] = p.failed;
      m["d_pixel"] = report->d_pixel;
      m["budget"] = report->budget;
      motion_lines += m.dump() + "\n";
    }
    for (const auto& row : report->refine.log) {
      refine_csv += fmt::format("{},{},{},{},{},{},{},{},{}\n", report->frame, row.step, csv_double(row.data),
                                csv_double(row.l1), csv_double(row.dssim), csv_double(row.lo), csv_double(row.part),
                                csv_double(row.loc), csv_double(row.total));
    }
  };
  RunConfig run = cfg;
  run.max_frames = static_cast<int>(wanted);
  track_sequence(run, cameras, obs, std::move(field0), sink);
  io::write_text(l.track() / "motion.jsonl", motion_lines);
  io::write_text(l.track() / "refine.csv", refine_csv);
  return written;
}

std::string cmd_eval(const RunConfig& cfg) {
  const Layout l{cfg.output};
  write_resolved(l, cfg);
  if (!fs::exists(l.manifest())) {
    throw Error(ErrorKind::MissingGroundTruth, fmt::format("{}: ground truth not found", l.manifest().string()));
  }
  const auto cameras = read_cameras(l);
  const std::size_t frames = manifest_frames(l);
  std::vector<PartField> gt, est;
  for (std::size_t f = 0; f < frames; ++f) {
    if (!fs::exists(l.field(f))) break;
    est.push_back(io::read_field(l.field(f)));
  }
  if (est.empty()) throw Error(ErrorKind::Io, fmt::format("{}: no tracked fields", l.track().string()));
  for (std::size_t f = 0; f < est.size(); ++f) {
    if (!fs::exists(l.gt_field(f))) {
      throw Error(ErrorKind::MissingGroundTruth, fmt::format("{}: ground truth not found", l.gt_field(f).string()));
    }
    gt.push_back(io::read_field(l.gt_field(f)));
  }
  const auto gt_labels = gt.front().part_ids();
  const auto est_labels = est.front().part_ids();
  const EvalReport r = evaluate_tracking(gt, est, cameras, gt_labels, est_labels);

  make_dirs(l.eval());
  const std::string text = eval_report_json(r);
  io::write_text(l.eval() / "metrics.json", text);
  // One header and one row per run, for stacking runs into a table.
  std::string header = "scene_seed,frames,mte_cm,acc";
  std::string row = fmt::format("{},{},{},{}", cfg.scene.seed, r.frames, csv_double(r.tracks.mte_cm),
                                csv_double(r.tracks.acc));
  for (const auto& [th, v] : r.tracks.acc_per_threshold) {
    header += fmt::format(",acc_{}cm", th);
    row += "," + csv_double(v);
  }
  header += ",surv,flow_epe_px,psnr_db,ssim,ari\n";
  row += fmt::format(",{},{},{},{},{}\n", csv_double(r.tracks.surv), csv_double(r.flow_epe), csv_double(r.psnr),
                     csv_double(r.ssim), csv_double(r.ari));
  const std::string csv = header + row;
  io::write_text(l.eval() / "metrics.csv", csv);
  return text;
}

std::string cmd_all(const RunConfig& cfg) {
  cmd_synth(cfg);
  cmd_cluster(cfg);
  cmd_track(cfg);
  return cmd_eval(cfg);
}

}  // namespace pamo
