#pragma once

#include "pamo/field.hpp"
#include "pamo/geom.hpp"
#include "pamo/image.hpp"
#include "pamo/observe.hpp"

#include <cstdint>
#include <span>
#include <vector>

namespace pamo {

struct LossWeights {
  double lambda_c = 0.8;
  double lambda_s = 0.2;
  double lambda_o = 1.0;
  double lambda_part = 2.0;
  double lambda_loc = 2.0;

  void validate() const;
};

struct ImageLossTerms {
  double total = 0.0;
  double l1 = 0.0;
  double dssim = 0.0;
  double lo = 0.0;
};

/// Photometric loss with the flow-weighted term: LO weights |I^ - I| by the per-pixel sum of
/// forward and backward flow magnitudes, max-normalized to [0, 1] (all-zero flow weighs 0).
ImageLossTerms image_loss(const ImageF& rendered, const ImageF& observed, const ImageF& flow_fwd,
                          const ImageF& flow_bwd, const LossWeights& weights);

struct RigidityParams {
  double alpha = 0.02;   ///< growth rate
  double beta = 0.2;     ///< decay rate
  double delta = 1e-3;   ///< distance stability threshold, m
};

/// One rigidity update for a single anchor pair, clamped to [0, 1].
double rigidity_step(double w, double delta_d, const RigidityParams& p);

/// Anchor pairs with their learned rigidity weights. Pairs of primitive j are contiguous.
struct RigidityState {
  struct Pair {
    std::uint32_t j = 0;
    std::uint32_t k = 0;
    double w = 0.5;
    double d_prev = 0.0;   ///< D_{t-1}
    double d_prev2 = 0.0;  ///< D_{t-2}
  };
  std::vector<Pair> pairs;
  int updates = 0;
};

/// `count` distinct anchors per member drawn uniformly from the rest of the part (all of them
/// when the part is smaller). Result is aligned with the part's member list.
std::vector<std::vector<std::size_t>> select_anchors(const PartField& field, int part_id, int count,
                                                     std::uint64_t seed);

/// Anchors for every part, weights initialized to `w0`.
RigidityState init_rigidity(const PartField& field, int count, std::uint64_t seed, double w0 = 0.5);

/// Learns W from the distance change between t-2 and t-1. Returns the state unchanged when
/// either snapshot is missing.
RigidityState update_rigidity(RigidityState state, std::span<const Vec3> centers_prev,
                              std::span<const Vec3> centers_prev2, const RigidityParams& p);

struct LossAndGradient {
  double value = 0.0;
  std::vector<Vec3> grad;  ///< d value / d center, one per primitive
};

/// mean over anchor pairs of W * | |mu_j - mu_k|_t - |mu_j - mu_k|_{t-1} |.
LossAndGradient part_rigid_loss(const RigidityState& state, std::span<const Vec3> centers_t,
                                std::span<const Vec3> centers_prev);

/// Frozen k-nearest-neighbor lists (excluding self).
struct KnnIndex {
  std::vector<std::vector<std::uint32_t>> neighbors;
};

KnnIndex build_knn(std::span<const Vec3> centers, int k);

/// Isometry form of the local rigidity term: mean over (j, neighbor) of the absolute change in
/// their distance between t-1 and t.
LossAndGradient local_rigid_loss(const KnnIndex& knn, std::span<const Vec3> centers_t,
                                 std::span<const Vec3> centers_prev);

struct RefineSchedule {
  double lr_center = 1e-4;
  double lr_color = 1e-2;
  int rerender_every = 50;
  /// Residuals below this enter the data term quadratically (smoothed L1).
  double huber = 1e-3;
};

struct RefineLogRow {
  int step = 0;
  double data = 0.0;  ///< point-sample color L1 used by the descent
  double l1 = 0.0;
  double dssim = 0.0;
  double lo = 0.0;
  double part = 0.0;
  double loc = 0.0;
  double total = 0.0;
};

struct RefineInputs {
  std::span<const CameraModel> cameras;
  std::span<const ImageF> observed_color;
  std::span<const ImageF> flow_fwd;  ///< may be empty; only used for LO reporting
  std::span<const ImageF> flow_bwd;
  std::span<const Vec3> centers_prev;  ///< t-1, for both rigidity terms
  const RigidityState* rigidity = nullptr;
  const KnnIndex* knn = nullptr;
  RenderOptions render;
};

struct RefineReport {
  std::vector<RefineLogRow> log;
  int steps = 0;
};

/// Point-sample color residual and its gradients with respect to centers and colors, using
/// pixel ownership from `renders`. Exposed for tests.
struct DataTerm {
  double value = 0.0;        ///< smoothed L1 used for descent
  double l1 = 0.0;           ///< plain L1 of the same samples
  std::vector<Vec3> grad_center;
  std::vector<Vec3> grad_color;
};

class PointSampler {
 public:
  PointSampler(const PartField& field, std::span<const CameraModel> cameras, std::span<const ViewRender> renders);
  DataTerm evaluate(const PartField& field, std::span<const ImageF> observed, double huber) const;
  std::size_t samples() const { return samples_; }

 private:
  struct Sample {
    std::uint32_t view;
    std::uint32_t primitive;
    Vec2 offset;
  };
  std::span<const CameraModel> cameras_;
  std::vector<Sample> samples_list_;
  std::size_t samples_ = 0;
};

/// Gradient descent on centers and colors. The field is modified in place.
RefineReport refine_timestamp(PartField& field, const RefineInputs& in, int budget, const LossWeights& weights,
                              const RefineSchedule& schedule);

}  // namespace pamo
