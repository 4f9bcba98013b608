#pragma once

#include <Eigen/Core>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

namespace upcr::geom {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

class GeometryError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Ordered 3-D points with optional unit normals.
///
/// A constructed cloud always holds at least one finite point; normals, when
/// present, match the point count and are unit length within 1e-6. The
/// default-constructed cloud is empty and rejected by every geometric
/// operation.
class PointCloud {
 public:
  PointCloud() = default;
  explicit PointCloud(std::vector<Vec3> points);
  PointCloud(std::vector<Vec3> points, std::vector<Vec3> normals);

  /// Row-major N×3 coordinates.
  static PointCloud from_rows(std::span<const double> xyz);

  std::size_t size() const { return points_.size(); }
  bool empty() const { return points_.empty(); }
  const std::vector<Vec3>& points() const { return points_; }
  const Vec3& operator[](std::size_t i) const { return points_[i]; }
  bool has_normals() const { return normals_.has_value(); }
  const std::vector<Vec3>& normals() const;

  /// Row-major N×3 copy of the coordinates.
  std::vector<double> to_rows() const;

  PointCloud with_normals(std::vector<Vec3> normals) const;
  PointCloud without_normals() const { return PointCloud(points_); }

 private:
  std::vector<Vec3> points_;
  std::optional<std::vector<Vec3>> normals_;
};

/// p ↦ R·p + t.
struct RigidTransform {
  Mat3 rotation = Mat3::Identity();
  Vec3 translation = Vec3::Zero();

  static RigidTransform identity() { return {}; }

  RigidTransform inverse() const;
  /// (this ∘ other)(p) = this(other(p)).
  RigidTransform operator*(const RigidTransform& other) const;
  Vec3 apply(const Vec3& p) const { return rotation * p + translation; }

  /// Orthonormality and det = +1 within `tol`.
  bool is_valid(double tol = 1e-8) const;
  /// Throws GeometryError when is_valid(tol) is false.
  void validate(double tol = 1e-8) const;
};

Vec3 centroid(const PointCloud& cloud);

PointCloud apply_transform(const RigidTransform& T, const PointCloud& cloud);

/// p ↦ Rᵀ(p − t): undoes T.
PointCloud canonicalize(const PointCloud& cloud, const RigidTransform& T);

/// Relative motion taking a cloud posed by T_X onto the same canonical
/// shape posed by T_Y: (R_Y R_Xᵀ, t_Y − R t_X).
RigidTransform compose_relative(const RigidTransform& T_X, const RigidTransform& T_Y);

}  // namespace upcr::geom
