#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <optional>
#include <string>
#include <vector>

namespace pamo {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using Mat34 = Eigen::Matrix<double, 3, 4>;
using Points = Eigen::Matrix<double, Eigen::Dynamic, 3>;

/// Pixel position (u rightward, v downward, origin top-left) and camera-frame depth.
struct Projection {
  Vec2 pixel;
  double depth = 0.0;
};

/// Pinhole camera: intrinsics K and a rigid world-to-camera transform E = [R | t].
class CameraModel {
 public:
  CameraModel(double fx, double fy, double cx, double cy, const Mat34& extrinsics, int width,
              int height, std::string name = {});

  /// Camera at `eye` looking at `target`; image v axis follows -`up`.
  static CameraModel look_at(const Vec3& eye, const Vec3& target, const Vec3& up, double fx,
                             double fy, int width, int height, std::string name = {});

  /// Throws Error(NonPositiveDepth) when the point is on or behind the camera plane.
  Projection project(const Vec3& world) const;
  /// Same as project() but returns nullopt instead of throwing.
  std::optional<Projection> try_project(const Vec3& world) const;

  Vec3 to_camera(const Vec3& world) const { return rotation() * world + translation(); }

  double fx() const { return fx_; }
  double fy() const { return fy_; }
  double cx() const { return cx_; }
  double cy() const { return cy_; }
  int width() const { return width_; }
  int height() const { return height_; }
  const std::string& name() const { return name_; }
  const Mat34& extrinsics() const { return extrinsics_; }
  Mat3 rotation() const { return extrinsics_.leftCols<3>(); }
  Vec3 translation() const { return extrinsics_.col(3); }
  Mat3 intrinsics() const;

 private:
  double fx_, fy_, cx_, cy_;
  Mat34 extrinsics_;
  int width_, height_;
  std::string name_;
};

inline constexpr double kDegToRad = 0.017453292519943295;
inline constexpr double kRadToDeg = 57.29577951308232;

/// Intrinsic XYZ Euler angles in degrees to a rotation matrix: R = Rx(a) * Ry(b) * Rz(c).
Mat3 euler_xyz_deg_to_matrix(const Vec3& omega_deg);
/// Inverse of euler_xyz_deg_to_matrix, with the middle angle in [-90, 90].
Vec3 matrix_to_euler_xyz_deg(const Mat3& rotation);

/// Rigid part motion: rotate by omega about pivot, then translate by delta.
struct RigidMotion {
  Vec3 delta = Vec3::Zero();
  Vec3 omega_deg = Vec3::Zero();
  Vec3 pivot = Vec3::Zero();

  static RigidMotion identity(const Vec3& pivot = Vec3::Zero()) { return {Vec3::Zero(), Vec3::Zero(), pivot}; }

  Mat3 rotation() const { return euler_xyz_deg_to_matrix(omega_deg); }
  Vec3 apply(const Vec3& p) const { return rotation() * (p - pivot) + pivot + delta; }
  Vec3 apply_inverse(const Vec3& p) const { return rotation().transpose() * (p - pivot - delta) + pivot; }
  /// Angle of the rotation part in degrees.
  double rotation_angle_deg() const;
};

/// Geodesic angle between two rotations, degrees.
double rotation_distance_deg(const Mat3& a, const Mat3& b);

/// Proper rotation R minimizing sum |R * prev_i - curr_i|^2 for centered, paired rows.
/// Throws Error(DegenerateConfiguration) if the cross-covariance has rank < 2.
Mat3 kabsch_rotation(const Points& offsets_prev, const Points& offsets_curr);

/// JSON rig: list of {name, K: [fx,fy,cx,cy], E: row-major 3x4, width, height}.
std::vector<CameraModel> cameras_from_json(const std::string& text);
std::string cameras_to_json(const std::vector<CameraModel>& cameras);

/// Ring of cameras around `center`, alternating elevation, all looking at the center.
std::vector<CameraModel> camera_ring(const Vec3& center, double radius, int count, double fx,
                                     int width, int height, double elevation = 0.35);

}  // namespace pamo
