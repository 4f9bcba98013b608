#pragma once

#include <Eigen/Geometry>
#include <cmath>
#include <numbers>
#include <random>
#include <vector>

#include "upcr/autodiff/tensor.hpp"
#include "upcr/geom/rotation.hpp"
#include "upcr/geom/types.hpp"

namespace upcr::testing {

inline ad::Array random_array(std::mt19937_64& gen, ad::Shape shape, double lo = -1.0,
                              double hi = 1.0) {
  std::uniform_real_distribution<double> dist(lo, hi);
  ad::Array a(std::move(shape), 0.0);
  for (auto& v : a.data) v = dist(gen);
  return a;
}

/// Uniform random rotation (via a normalized Gaussian quaternion).
inline geom::Mat3 random_rotation(std::mt19937_64& gen) {
  std::normal_distribution<double> n(0.0, 1.0);
  return geom::decode_rotation(
      geom::RotationParam(geom::RotationMode::quaternion, {n(gen), n(gen), n(gen), n(gen)}));
}

/// Rotation of `angle` radians about a uniformly random axis.
inline geom::Mat3 rotation_about_random_axis(std::mt19937_64& gen, double angle) {
  std::normal_distribution<double> n(0.0, 1.0);
  geom::Vec3 axis(n(gen), n(gen), n(gen));
  axis.normalize();
  return Eigen::AngleAxisd(angle, axis).toRotationMatrix();
}

inline geom::RigidTransform random_transform(std::mt19937_64& gen, double max_angle = std::numbers::pi,
                                             double max_translation = 10.0) {
  std::uniform_real_distribution<double> ang(0.0, max_angle), tr(-max_translation, max_translation);
  geom::RigidTransform T;
  T.rotation = rotation_about_random_axis(gen, ang(gen));
  T.translation = geom::Vec3(tr(gen), tr(gen), tr(gen));
  return T;
}

inline geom::PointCloud random_cloud(std::mt19937_64& gen, std::size_t n, double scale = 1.0) {
  std::uniform_real_distribution<double> d(-scale, scale);
  std::vector<geom::Vec3> pts(n);
  for (auto& p : pts) p = geom::Vec3(d(gen), d(gen), d(gen));
  return geom::PointCloud(std::move(pts));
}

inline double max_abs_diff(const geom::PointCloud& a, const geom::PointCloud& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, (a[i] - b[i]).cwiseAbs().maxCoeff());
  return m;
}

}  // namespace upcr::testing
