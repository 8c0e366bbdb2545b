#include "pamo/geom.hpp"

#include "pamo/error.hpp"

#include <Eigen/SVD>
#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fmt/format.h>

namespace pamo {

CameraModel::CameraModel(double fx, double fy, double cx, double cy, const Mat34& extrinsics,
                         int width, int height, std::string name)
    : fx_(fx), fy_(fy), cx_(cx), cy_(cy), extrinsics_(extrinsics), width_(width), height_(height),
      name_(std::move(name)) {
  if (!(fx > 0.0) || !(fy > 0.0)) throw Error(ErrorKind::Validation, "focal lengths must be positive");
  if (width <= 0 || height <= 0) throw Error(ErrorKind::Validation, "image size must be positive");
  if (!(cx > 0.0 && cx < width) || !(cy > 0.0 && cy < height)) {
    throw Error(ErrorKind::Validation, "principal point must lie inside the image");
  }
  const Mat3 r = rotation();
  if ((r * r.transpose() - Mat3::Identity()).cwiseAbs().maxCoeff() > 1e-9 ||
      std::abs(r.determinant() - 1.0) > 1e-9) {
    throw Error(ErrorKind::Validation, "extrinsic rotation is not a proper rotation");
  }
}

CameraModel CameraModel::look_at(const Vec3& eye, const Vec3& target, const Vec3& up, double fx,
                                 double fy, int width, int height, std::string name) {
  const Vec3 z = (target - eye).normalized();
  Vec3 x = z.cross(up);
  if (x.norm() < 1e-12) throw Error(ErrorKind::Validation, "look_at: up is parallel to view direction");
  x.normalize();
  const Vec3 y = z.cross(x);
  Mat3 r;
  r.row(0) = x.transpose();
  r.row(1) = y.transpose();
  r.row(2) = z.transpose();
  Mat34 e;
  e.leftCols<3>() = r;
  e.col(3) = -r * eye;
  return CameraModel(fx, fy, width / 2.0, height / 2.0, e, width, height, std::move(name));
}

std::optional<Projection> CameraModel::try_project(const Vec3& world) const {
  const Vec3 c = to_camera(world);
  if (c.z() <= 1e-9) return std::nullopt;
  return Projection{Vec2(fx_ * c.x() / c.z() + cx_, fy_ * c.y() / c.z() + cy_), c.z()};
}

Projection CameraModel::project(const Vec3& world) const {
  auto p = try_project(world);
  if (!p) throw Error(ErrorKind::NonPositiveDepth, fmt::format("point behind camera '{}'", name_));
  return *p;
}

Mat3 CameraModel::intrinsics() const {
  Mat3 k;
  k << fx_, 0.0, cx_, 0.0, fy_, cy_, 0.0, 0.0, 1.0;
  return k;
}

Mat3 euler_xyz_deg_to_matrix(const Vec3& omega_deg) {
  const Vec3 a = omega_deg * kDegToRad;
  return (Eigen::AngleAxisd(a.x(), Vec3::UnitX()) * Eigen::AngleAxisd(a.y(), Vec3::UnitY()) *
          Eigen::AngleAxisd(a.z(), Vec3::UnitZ()))
      .toRotationMatrix();
}

Vec3 matrix_to_euler_xyz_deg(const Mat3& r) {
  // R = Rx Ry Rz  =>  R(0,2) = sin(b), R(1,2) = -sin(a)cos(b), R(2,2) = cos(a)cos(b),
  // R(0,1) = -cos(b)sin(c), R(0,0) = cos(b)cos(c).
  const double sb = std::clamp(r(0, 2), -1.0, 1.0);
  const double b = std::asin(sb);
  double a, c;
  if (std::abs(sb) < 1.0 - 1e-12) {
    a = std::atan2(-r(1, 2), r(2, 2));
    c = std::atan2(-r(0, 1), r(0, 0));
  } else {
    // Gimbal lock: only a +/- c is defined; put it all in a.
    a = std::atan2(r(2, 1), r(1, 1));
    c = 0.0;
  }
  return Vec3(a, b, c) * kRadToDeg;
}

double RigidMotion::rotation_angle_deg() const {
  return Eigen::AngleAxisd(rotation()).angle() * kRadToDeg;
}

double rotation_distance_deg(const Mat3& a, const Mat3& b) {
  const double c = std::clamp(((a.transpose() * b).trace() - 1.0) / 2.0, -1.0, 1.0);
  return std::acos(c) * kRadToDeg;
}

Mat3 kabsch_rotation(const Points& offsets_prev, const Points& offsets_curr) {
  if (offsets_prev.rows() != offsets_curr.rows()) {
    throw Error(ErrorKind::InconsistentInput, "kabsch_rotation: row counts differ");
  }
  if (offsets_prev.rows() < 3) {
    throw Error(ErrorKind::DegenerateConfiguration, "kabsch_rotation: need at least 3 offsets");
  }
  const Mat3 h = offsets_prev.transpose() * offsets_curr;
  Eigen::JacobiSVD<Mat3> svd(h, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const Vec3 s = svd.singularValues();
  if (!(s(0) > 0.0) || s(1) <= 1e-12 * s(0)) {
    throw Error(ErrorKind::DegenerateConfiguration, "kabsch_rotation: offsets are collinear");
  }
  const Mat3& u = svd.matrixU();
  const Mat3& v = svd.matrixV();
  const double d = (v * u.transpose()).determinant() < 0.0 ? -1.0 : 1.0;
  const Mat3 corr = Eigen::Vector3d(1.0, 1.0, d).asDiagonal();
  return v * corr * u.transpose();
}

std::vector<CameraModel> cameras_from_json(const std::string& text) {
  std::vector<CameraModel> out;
  try {
    const auto doc = nlohmann::json::parse(text);
    for (const auto& c : doc) {
      const auto k = c.at("K").get<std::vector<double>>();
      const auto e = c.at("E").get<std::vector<double>>();
      if (k.size() != 4 || e.size() != 12) throw Error(ErrorKind::Validation, "camera K/E have wrong size");
      Mat34 ext;
      for (int i = 0; i < 12; ++i) ext(i / 4, i % 4) = e[i];
      out.emplace_back(k[0], k[1], k[2], k[3], ext, c.at("width").get<int>(), c.at("height").get<int>(),
                       c.value("name", std::string{}));
    }
  } catch (const nlohmann::json::exception& ex) {
    throw Error(ErrorKind::Validation, fmt::format("camera rig JSON: {}", ex.what()));
  }
  return out;
}

std::string cameras_to_json(const std::vector<CameraModel>& cameras) {
  nlohmann::json doc = nlohmann::json::array();
  for (const auto& cam : cameras) {
    std::vector<double> e(12);
    for (int i = 0; i < 12; ++i) e[i] = cam.extrinsics()(i / 4, i % 4);
    doc.push_back({{"name", cam.name()},
                   {"K", {cam.fx(), cam.fy(), cam.cx(), cam.cy()}},
                   {"E", e},
                   {"width", cam.width()},
                   {"height", cam.height()}});
  }
  return doc.dump(2);
}

std::vector<CameraModel> camera_ring(const Vec3& center, double radius, int count, double fx,
                                     int width, int height, double elevation) {
  std::vector<CameraModel> out;
  out.reserve(count);
  for (int i = 0; i < count; ++i) {
    const double az = 2.0 * M_PI * i / count;
    const double el = (i % 2 == 0 ? 1.0 : -0.5) * elevation;
    const Vec3 eye = center + radius * Vec3(std::cos(el) * std::cos(az), std::cos(el) * std::sin(az), std::sin(el));
    out.push_back(CameraModel::look_at(eye, center, Vec3::UnitZ(), fx, fx, width, height,
                                       fmt::format("cam{:02d}", i)));
  }
  return out;
}

}  // namespace pamo
