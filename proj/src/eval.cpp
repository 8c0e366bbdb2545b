#include "pamo/eval.hpp"

#include "pamo/error.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace pamo {

TrackReport trajectory_metrics(const std::vector<std::vector<Vec3>>& est, const std::vector<std::vector<Vec3>>& gt) {
  if (est.size() != gt.size()) throw Error(ErrorKind::LengthMismatch, "track counts differ");
  if (est.empty()) throw Error(ErrorKind::LengthMismatch, "no tracks");
  const std::size_t frames = gt.front().size();
  for (std::size_t i = 0; i < est.size(); ++i) {
    if (est[i].size() != gt[i].size() || gt[i].size() != frames) {
      throw Error(ErrorKind::LengthMismatch, "track lengths differ");
    }
  }
  if (frames == 0) throw Error(ErrorKind::LengthMismatch, "tracks are empty");

  TrackReport r;
  r.errors_cm.resize(est.size());
  std::vector<double> all;
  all.reserve(est.size() * frames);
  std::size_t alive_samples = 0;
  std::vector<std::size_t> alive_per_frame(frames, 0);
  for (std::size_t i = 0; i < est.size(); ++i) {
    bool alive = true;
    r.errors_cm[i].resize(frames);
    for (std::size_t f = 0; f < frames; ++f) {
      const double e = (est[i][f] - gt[i][f]).norm() * 100.0;
      r.errors_cm[i][f] = e;
      all.push_back(e);
      if (e > kSurvivalCm) alive = false;
      if (alive) {
        ++alive_samples;
        ++alive_per_frame[f];
      }
    }
  }
  const double n = static_cast<double>(all.size());
  double acc_sum = 0.0;
  for (double th : kAccThresholdsCm) {
    const auto hits = std::count_if(all.begin(), all.end(), [&](double e) { return e < th; });
    r.acc_per_threshold[th] = static_cast<double>(hits) / n;
    acc_sum += r.acc_per_threshold[th];
  }
  r.acc = acc_sum / std::size(kAccThresholdsCm);
  r.surv = static_cast<double>(alive_samples) / n;
  for (auto a : alive_per_frame) r.surv_per_frame.push_back(static_cast<double>(a) / static_cast<double>(est.size()));

  std::sort(all.begin(), all.end());
  const std::size_t mid = all.size() / 2;
  r.mte_cm = all.size() % 2 ? all[mid] : 0.5 * (all[mid - 1] + all[mid]);
  return r;
}

double flow_epe(const ImageF& est, const ImageF& gt, const std::vector<std::uint8_t>& mask) {
  if (!est.same_shape(gt) || est.channels != 2 || gt.channels != 2 || mask.size() != est.pixels()) {
    throw Error(ErrorKind::DimensionMismatch, "flow_epe: shapes differ");
  }
  double sum = 0.0;
  std::size_t count = 0;
  for (std::size_t i = 0; i < mask.size(); ++i) {
    if (!mask[i]) continue;
    const double du = static_cast<double>(est.data[2 * i]) - gt.data[2 * i];
    const double dv = static_cast<double>(est.data[2 * i + 1]) - gt.data[2 * i + 1];
    sum += std::sqrt(du * du + dv * dv);
    ++count;
  }
  if (count == 0) throw Error(ErrorKind::EmptyMask, "flow_epe: mask selects no pixels");
  return sum / static_cast<double>(count);
}

namespace {

constexpr int kWindow = 11;
constexpr double kSigma = 1.5;

std::vector<double> gaussian_kernel() {
  std::vector<double> k(kWindow);
  double sum = 0.0;
  for (int i = 0; i < kWindow; ++i) {
    const double x = i - kWindow / 2;
    k[i] = std::exp(-x * x / (2.0 * kSigma * kSigma));
    sum += k[i];
  }
  for (auto& v : k) v /= sum;
  return k;
}

// Separable 'valid' Gaussian filter of a single-channel plane.
std::vector<double> filter_valid(const std::vector<double>& plane, int w, int h, const std::vector<double>& k) {
  const int ow = w - kWindow + 1, oh = h - kWindow + 1;
  std::vector<double> tmp(static_cast<std::size_t>(ow) * h);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < ow; ++x) {
      double s = 0.0;
      for (int i = 0; i < kWindow; ++i) s += k[i] * plane[static_cast<std::size_t>(y) * w + x + i];
      tmp[static_cast<std::size_t>(y) * ow + x] = s;
    }
  }
  std::vector<double> out(static_cast<std::size_t>(ow) * oh);
  for (int y = 0; y < oh; ++y) {
    for (int x = 0; x < ow; ++x) {
      double s = 0.0;
      for (int i = 0; i < kWindow; ++i) s += k[i] * tmp[static_cast<std::size_t>(y + i) * ow + x];
      out[static_cast<std::size_t>(y) * ow + x] = s;
    }
  }
  return out;
}

}  // namespace

double ssim(const ImageF& a, const ImageF& b) {
  if (!a.same_shape(b) || a.channels != b.channels) throw Error(ErrorKind::DimensionMismatch, "ssim: shapes differ");
  if (a.width < kWindow || a.height < kWindow) {
    throw Error(ErrorKind::DimensionMismatch, "ssim: image smaller than the 11x11 window");
  }
  constexpr double c1 = (0.01 * 1.0) * (0.01 * 1.0);
  constexpr double c2 = (0.03 * 1.0) * (0.03 * 1.0);
  static const std::vector<double> k = gaussian_kernel();
  const int w = a.width, h = a.height;
  const std::size_t n = a.pixels();
  double total = 0.0;
  for (int c = 0; c < a.channels; ++c) {
    std::vector<double> x(n), y(n), xx(n), yy(n), xy(n);
    for (std::size_t i = 0; i < n; ++i) {
      x[i] = a.data[i * a.channels + c];
      y[i] = b.data[i * b.channels + c];
      xx[i] = x[i] * x[i];
      yy[i] = y[i] * y[i];
      xy[i] = x[i] * y[i];
    }
    const auto mx = filter_valid(x, w, h, k), my = filter_valid(y, w, h, k);
    const auto sxx = filter_valid(xx, w, h, k), syy = filter_valid(yy, w, h, k), sxy = filter_valid(xy, w, h, k);
    double sum = 0.0;
    for (std::size_t i = 0; i < mx.size(); ++i) {
      const double vx = sxx[i] - mx[i] * mx[i];
      const double vy = syy[i] - my[i] * my[i];
      const double cov = sxy[i] - mx[i] * my[i];
      sum += ((2.0 * mx[i] * my[i] + c1) * (2.0 * cov + c2)) /
             ((mx[i] * mx[i] + my[i] * my[i] + c1) * (vx + vy + c2));
    }
    total += sum / static_cast<double>(mx.size());
  }
  return total / a.channels;
}

double psnr(const ImageF& a, const ImageF& b) {
  if (!a.same_shape(b) || a.channels != b.channels) throw Error(ErrorKind::DimensionMismatch, "psnr: shapes differ");
  double mse = 0.0;
  for (std::size_t i = 0; i < a.data.size(); ++i) {
    const double d = static_cast<double>(a.data[i]) - b.data[i];
    mse += d * d;
  }
  mse /= static_cast<double>(a.data.size());
  if (mse == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(1.0 / mse);
}

ImageMetrics image_metrics(const ImageF& rendered, const ImageF& observed) {
  return {psnr(rendered, observed), ssim(rendered, observed)};
}

double adjusted_rand_index(std::span<const int> a, std::span<const int> b) {
  if (a.size() != b.size()) throw Error(ErrorKind::LengthMismatch, "labelings differ in length");
  const double n = static_cast<double>(a.size());
  if (a.size() < 2) return 1.0;
  std::map<std::pair<int, int>, double> table;
  std::map<int, double> rows, cols;
  for (std::size_t i = 0; i < a.size(); ++i) {
    table[{a[i], b[i]}] += 1.0;
    rows[a[i]] += 1.0;
    cols[b[i]] += 1.0;
  }
  auto c2 = [](double x) { return x * (x - 1.0) / 2.0; };
  double index = 0.0, sa = 0.0, sb = 0.0;
  for (const auto& [key, v] : table) index += c2(v);
  for (const auto& [key, v] : rows) sa += c2(v);
  for (const auto& [key, v] : cols) sb += c2(v);
  const double expected = sa * sb / c2(n);
  const double max_index = 0.5 * (sa + sb);
  if (max_index == expected) return 1.0;
  return (index - expected) / (max_index - expected);
}

}  // namespace pamo
