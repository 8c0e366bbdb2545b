#pragma once

#include "pamo/config.hpp"
#include "pamo/eval.hpp"

#include <filesystem>
#include <functional>
#include <string>
#include <vector>

namespace pamo {

// ---- in-memory stages -------------------------------------------------------------------

struct SynthResult {
  SceneSpec spec;
  SyntheticScene scene;
  std::vector<CameraModel> cameras;
  ObservationSet clean;     ///< exact renderings and flows
  ObservationSet observed;  ///< clean corrupted per the noise settings
};

/// Renders every frame and the flows between consecutive frames. Frame 0 carries no flow.
ObservationSet observe_scene(const SyntheticScene& scene, std::span<const CameraModel> cameras,
                             const RenderOptions& opt = {});
SynthResult synthesize(const RunConfig& cfg);

/// Frame-0 field with part ids removed, the tracker's starting point.
PartField unlabeled(const PartField& field);

/// Lifts the frame-0 masks into part ids on `field`.
PartitionResult cluster_first_frame(PartField& field, std::span<const CameraModel> cameras,
                                    const FrameObservations& frame0, const RunConfig& cfg);

struct FrameReport {
  int frame = 0;
  std::vector<PartMotionState> parts;
  double d_pixel = 0.0;
  int budget = 0;
  RefineReport refine;
};

struct TrackResult {
  std::vector<PartField> fields;  ///< one per tracked frame, frame 0 included
  std::vector<FrameReport> frames;  ///< frames 1.. only
};

/// Called once per frame as soon as it is final; `report` is null for frame 0.
using FrameSink = std::function<void(const PartField& field, const FrameReport* report)>;

/// Tracks `field0` (part ids assigned) through the observations. Frames are sequential.
TrackResult track_sequence(const RunConfig& cfg, std::span<const CameraModel> cameras, const ObservationSet& obs,
                           PartField field0, const FrameSink& sink = {});

struct EvalReport {
  TrackReport tracks;
  double flow_epe = 0.0;  ///< px, mean over frame pairs and views
  double psnr = 0.0;      ///< dB, mean over frames and views
  double ssim = 0.0;
  double ari = 0.0;
  int frames = 0;
};

/// Compares tracked fields against ground-truth fields. `gt_color` holds the clean observed
/// images ([frame][view]) used for the image metrics.
EvalReport evaluate_tracking(const std::vector<PartField>& gt_fields, const std::vector<PartField>& est_fields,
                             std::span<const CameraModel> cameras, std::span<const int> gt_labels,
                             std::span<const int> est_labels);

/// Metric JSON with a fixed key order.
std::string eval_report_json(const EvalReport& r);

// ---- run-directory commands --------------------------------------------------------------

/// Writes scene/, obs/ and the resolved config. Returns the manifest text.
std::string cmd_synth(const RunConfig& cfg);
/// Reads frame-0 observations and writes cluster/.
void cmd_cluster(const RunConfig& cfg);
/// Reads cluster/ and obs/, writes track/. Returns the number of fields written.
int cmd_track(const RunConfig& cfg);
/// Reads scene/ and track/, writes eval/. Returns the metric JSON.
std::string cmd_eval(const RunConfig& cfg);
/// synth, cluster, track and eval in sequence.
std::string cmd_all(const RunConfig& cfg);

}  // namespace pamo
