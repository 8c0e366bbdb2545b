#pragma once

#include "pamo/geom.hpp"
#include "pamo/image.hpp"

#include <cstdint>
#include <map>
#include <span>
#include <vector>

namespace pamo {

inline constexpr double kAccThresholdsCm[] = {1.0, 2.0, 4.0, 8.0, 16.0};
inline constexpr double kSurvivalCm = 50.0;

struct TrackReport {
  double mte_cm = 0.0;
  double acc = 0.0;
  std::map<double, double> acc_per_threshold;
  double surv = 0.0;
  /// Fraction of tracks alive at each frame.
  std::vector<double> surv_per_frame;
  /// errors_cm[track][frame]
  std::vector<std::vector<double>> errors_cm;
};

/// Tracks are [track][frame] positions in meters. Throws Error(LengthMismatch) on misalignment.
TrackReport trajectory_metrics(const std::vector<std::vector<Vec3>>& est, const std::vector<std::vector<Vec3>>& gt);

/// Mean end-point error over pixels where mask != 0. Throws Error(EmptyMask).
double flow_epe(const ImageF& est, const ImageF& gt, const std::vector<std::uint8_t>& mask);

struct ImageMetrics {
  double psnr = 0.0;  ///< dB, +inf for identical images
  double ssim = 1.0;
};

/// Mean SSIM over channels, 11x11 Gaussian window (sigma 1.5), K1 = 0.01, K2 = 0.03, unit
/// dynamic range; computed over window positions fully inside the image.
double ssim(const ImageF& a, const ImageF& b);
double psnr(const ImageF& a, const ImageF& b);
ImageMetrics image_metrics(const ImageF& rendered, const ImageF& observed);

/// Adjusted Rand index between two labelings of the same items.
double adjusted_rand_index(std::span<const int> a, std::span<const int> b);

}  // namespace pamo
