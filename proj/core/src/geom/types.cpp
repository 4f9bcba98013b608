#include "upcr/geom/types.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <string>

namespace upcr::geom {
namespace {

void check_points(const std::vector<Vec3>& points) {
  if (points.empty()) throw GeometryError("point cloud must contain at least one point");
  for (std::size_t i = 0; i < points.size(); ++i) {
    if (!points[i].allFinite()) {
      throw GeometryError("point " + std::to_string(i) + " has a non-finite coordinate");
    }
  }
}

}  // namespace

PointCloud::PointCloud(std::vector<Vec3> points) : points_(std::move(points)) {
  check_points(points_);
}

PointCloud::PointCloud(std::vector<Vec3> points, std::vector<Vec3> normals)
    : points_(std::move(points)) {
  check_points(points_);
  if (normals.size() != points_.size()) {
    throw GeometryError("normal count " + std::to_string(normals.size()) +
                        " differs from point count " + std::to_string(points_.size()));
  }
  for (std::size_t i = 0; i < normals.size(); ++i) {
    if (!normals[i].allFinite() || std::abs(normals[i].norm() - 1.0) > 1e-6) {
      throw GeometryError("normal " + std::to_string(i) + " is not unit length");
    }
  }
  normals_ = std::move(normals);
}

PointCloud PointCloud::from_rows(std::span<const double> xyz) {
  if (xyz.size() % 3 != 0) throw GeometryError("coordinate count is not a multiple of 3");
  std::vector<Vec3> pts(xyz.size() / 3);
  for (std::size_t i = 0; i < pts.size(); ++i) pts[i] = Vec3(xyz[3 * i], xyz[3 * i + 1], xyz[3 * i + 2]);
  return PointCloud(std::move(pts));
}

const std::vector<Vec3>& PointCloud::normals() const {
  if (!normals_) throw GeometryError("point cloud has no normals");
  return *normals_;
}

std::vector<double> PointCloud::to_rows() const {
  std::vector<double> out(points_.size() * 3);
  for (std::size_t i = 0; i < points_.size(); ++i) {
    out[3 * i] = points_[i].x();
    out[3 * i + 1] = points_[i].y();
    out[3 * i + 2] = points_[i].z();
  }
  return out;
}

PointCloud PointCloud::with_normals(std::vector<Vec3> normals) const {
  return PointCloud(points_, std::move(normals));
}

RigidTransform RigidTransform::inverse() const {
  RigidTransform inv;
  inv.rotation = rotation.transpose();
  inv.translation = -(inv.rotation * translation);
  return inv;
}

RigidTransform RigidTransform::operator*(const RigidTransform& other) const {
  RigidTransform out;
  out.rotation = rotation * other.rotation;
  out.translation = rotation * other.translation + translation;
  return out;
}

bool RigidTransform::is_valid(double tol) const {
  if (!rotation.allFinite() || !translation.allFinite()) return false;
  const double ortho = (rotation.transpose() * rotation - Mat3::Identity()).cwiseAbs().maxCoeff();
  return ortho <= tol && std::abs(rotation.determinant() - 1.0) <= tol;
}

void RigidTransform::validate(double tol) const {
  if (!is_valid(tol)) throw GeometryError("rotation is not in SO(3) within tolerance");
}

Vec3 centroid(const PointCloud& cloud) {
  if (cloud.empty()) throw GeometryError("centroid of an empty cloud");
  Vec3 c = Vec3::Zero();
  for (const auto& p : cloud.points()) c += p;
  return c / static_cast<double>(cloud.size());
}

PointCloud apply_transform(const RigidTransform& T, const PointCloud& cloud) {
  if (cloud.empty()) throw GeometryError("transform of an empty cloud");
  std::vector<Vec3> pts(cloud.size());
  for (std::size_t i = 0; i < pts.size(); ++i) pts[i] = T.apply(cloud[i]);
  if (!cloud.has_normals()) return PointCloud(std::move(pts));
  std::vector<Vec3> normals(cloud.size());
  for (std::size_t i = 0; i < normals.size(); ++i) {
    normals[i] = (T.rotation * cloud.normals()[i]).normalized();
  }
  return PointCloud(std::move(pts), std::move(normals));
}

PointCloud canonicalize(const PointCloud& cloud, const RigidTransform& T) {
  if (cloud.empty()) throw GeometryError("canonicalize of an empty cloud");
  const Mat3 Rt = T.rotation.transpose();
  std::vector<Vec3> pts(cloud.size());
  for (std::size_t i = 0; i < pts.size(); ++i) pts[i] = Rt * (cloud[i] - T.translation);
  if (!cloud.has_normals()) return PointCloud(std::move(pts));
  std::vector<Vec3> normals(cloud.size());
  for (std::size_t i = 0; i < normals.size(); ++i) normals[i] = (Rt * cloud.normals()[i]).normalized();
  return PointCloud(std::move(pts), std::move(normals));
}

RigidTransform compose_relative(const RigidTransform& T_X, const RigidTransform& T_Y) {
  RigidTransform out;
  out.rotation = T_Y.rotation * T_X.rotation.transpose();
  out.translation = T_Y.translation - out.rotation * T_X.translation;
  return out;
}

}  // namespace upcr::geom
