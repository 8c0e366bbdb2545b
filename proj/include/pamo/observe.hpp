#pragma once

#include "pamo/field.hpp"
#include "pamo/geom.hpp"
#include "pamo/image.hpp"

#include <cstdint>
#include <map>
#include <span>
#include <vector>

namespace pamo {

/// Output of the z-buffer point splatter for one view.
struct ViewRender {
  ImageF depth;  ///< meters, +inf where empty
  ImageF color;  ///< RGB
  ImageI mask;   ///< part id, -1 where empty
  ImageI owner;  ///< primitive index, -1 where empty
};

/// Observations of one frame across all views. Flows are empty at frame 0.
struct FrameObservations {
  std::vector<ViewRender> views;
  std::vector<ImageF> flow_fwd;  ///< frame t-1 pixels toward frame t, 2 channels
  std::vector<ImageF> flow_bwd;  ///< frame t pixels toward frame t-1
};

using ObservationSet = std::vector<FrameObservations>;

struct RenderOptions {
  Vec3 background = Vec3(0.1, 0.1, 0.1);
};

/// Splat radius in pixels for a primitive of world radius `radius` at depth `depth`.
int splat_radius_px(double fx, double radius, double depth);

ViewRender render_view(const PartField& field, const CameraModel& camera, const RenderOptions& opt = {});
std::vector<ViewRender> render_observations(const PartField& field, std::span<const CameraModel> cameras,
                                            const RenderOptions& opt = {});

struct FlowPair {
  ImageF fwd;
  ImageF bwd;
};

/// Flow between two index-aligned fields, using the ownership of both renderings.
std::vector<FlowPair> flows_between(const PartField& field_prev, const PartField& field_curr,
                                    std::span<const CameraModel> cameras,
                                    std::span<const ViewRender> renders_prev,
                                    std::span<const ViewRender> renders_curr);

/// Oracle flow for moving every part of `field_prev` by its motion. Throws
/// Error(MissingMotion) when a part visible in some view has no motion.
std::vector<FlowPair> ground_truth_flow(const PartField& field_prev, const std::map<int, RigidMotion>& motions,
                                        std::span<const CameraModel> cameras, const RenderOptions& opt = {});

struct NoiseConfig {
  double flow_sigma = 0.0;          ///< px, per component
  double mask_boundary_flip = 0.0;  ///< fraction of near-boundary mask pixels relabeled
  int mask_oversplit = 0;           ///< >= 2 splits every mask of every view into that many pieces
  int boundary_radius = 2;

  bool is_zero() const { return flow_sigma == 0.0 && mask_boundary_flip == 0.0 && mask_oversplit < 2; }
};

/// Emulates segmentation and flow-network imperfection. Deterministic for a seed.
ObservationSet corrupt(const ObservationSet& obs, const NoiseConfig& noise, std::uint64_t seed);

/// Boundary relabeling of one mask; exposed for tests.
ImageI flip_mask_boundaries(const ImageI& mask, double fraction, int radius, std::uint64_t seed);
/// Splits every label of one mask into `pieces` spatially contiguous sub-masks.
ImageI oversplit_mask(const ImageI& mask, int pieces, std::uint64_t seed);

/// Mean absolute RGB difference over all pixels and views.
double mean_rgb_difference(std::span<const ViewRender> rendered, std::span<const ImageF> observed);

}  // namespace pamo
