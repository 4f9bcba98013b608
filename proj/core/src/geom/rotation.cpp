#include "upcr/geom/rotation.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <array>
#include <cmath>

#include "upcr/autodiff/ops.hpp"

namespace upcr::geom {
namespace {

constexpr double kParallelTol = 1e-9;
constexpr double kDegenerateNorm = 1e-12;

void check_length(RotationMode mode, std::size_t n) {
  if (n != rotation_dim(mode)) {
    throw GeometryError(std::string(to_string(mode)) + " rotation expects " +
                        std::to_string(rotation_dim(mode)) + " values, got " + std::to_string(n));
  }
}

Mat3 quaternion_matrix(double w, double x, double y, double z) {
  Mat3 R;
  R << 1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y),
       2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x),
       2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y);
  return R;
}

}  // namespace

std::size_t rotation_dim(RotationMode mode) {
  switch (mode) {
    case RotationMode::euler: return 3;
    case RotationMode::quaternion: return 4;
    case RotationMode::sixd: return 6;
    case RotationMode::matrix: return 9;
  }
  return 0;
}

std::string_view to_string(RotationMode mode) {
  switch (mode) {
    case RotationMode::euler: return "euler";
    case RotationMode::quaternion: return "quaternion";
    case RotationMode::sixd: return "sixd";
    case RotationMode::matrix: return "matrix";
  }
  return "unknown";
}

RotationMode rotation_mode_from_string(std::string_view name) {
  if (name == "euler") return RotationMode::euler;
  if (name == "quaternion") return RotationMode::quaternion;
  if (name == "sixd") return RotationMode::sixd;
  if (name == "matrix") return RotationMode::matrix;
  throw std::invalid_argument("unknown rotation mode '" + std::string(name) + "'");
}

std::vector<double> identity_parameter(RotationMode mode) {
  switch (mode) {
    case RotationMode::euler: return {0, 0, 0};
    case RotationMode::quaternion: return {1, 0, 0, 0};
    case RotationMode::sixd: return {1, 0, 0, 0, 1, 0};
    case RotationMode::matrix: return {1, 0, 0, 0, 1, 0, 0, 0, 1};
  }
  return {};
}

RotationParam::RotationParam(RotationMode m, std::vector<double> v) : mode(m), values(std::move(v)) {
  check_length(mode, values.size());
}

Mat3 rot_x(double a) {
  Mat3 R;
  R << 1, 0, 0, 0, std::cos(a), -std::sin(a), 0, std::sin(a), std::cos(a);
  return R;
}

Mat3 rot_y(double a) {
  Mat3 R;
  R << std::cos(a), 0, std::sin(a), 0, 1, 0, -std::sin(a), 0, std::cos(a);
  return R;
}

Mat3 rot_z(double a) {
  Mat3 R;
  R << std::cos(a), -std::sin(a), 0, std::sin(a), std::cos(a), 0, 0, 0, 1;
  return R;
}

Mat3 project_to_rotation(const Mat3& M) {
  const double det = M.determinant();
  if (!std::isfinite(det) || std::abs(det) < kDegenerateNorm) {
    throw GeometryError("matrix rotation parameter is singular");
  }
  Eigen::JacobiSVD<Mat3> svd(M, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Mat3 Q = svd.matrixU() * svd.matrixV().transpose();
  return det < 0 ? Mat3(-Q) : Q;
}

Mat3 decode_rotation(const RotationParam& param) {
  check_length(param.mode, param.values.size());
  const auto& v = param.values;
  switch (param.mode) {
    case RotationMode::euler:
      return rot_z(v[2]) * rot_y(v[1]) * rot_x(v[0]);
    case RotationMode::quaternion: {
      const double n = std::sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2] + v[3] * v[3]);
      if (!(n > kDegenerateNorm)) throw GeometryError("quaternion parameter is zero");
      return quaternion_matrix(v[0] / n, v[1] / n, v[2] / n, v[3] / n);
    }
    case RotationMode::sixd: {
      const Vec3 a1(v[0], v[1], v[2]), a2(v[3], v[4], v[5]);
      const double n1 = a1.norm(), n2 = a2.norm();
      if (!(n1 > kDegenerateNorm && n2 > kDegenerateNorm) ||
          a1.cross(a2).norm() <= kParallelTol * n1 * n2) {
        throw GeometryError("6-D rotation columns are zero or parallel");
      }
      const Vec3 b1 = a1 / n1;
      const Vec3 u = a2 - b1.dot(a2) * b1;
      const Vec3 b2 = u / u.norm();
      Mat3 R;
      R.col(0) = b1;
      R.col(1) = b2;
      R.col(2) = b1.cross(b2);
      return R;
    }
    case RotationMode::matrix: {
      Mat3 M;
      M << v[0], v[1], v[2], v[3], v[4], v[5], v[6], v[7], v[8];
      return project_to_rotation(M);
    }
  }
  throw GeometryError("unknown rotation mode");
}

Vec3 euler_from_matrix(const Mat3& R) {
  const double sb = std::clamp(-R(2, 0), -1.0, 1.0);
  const double beta = std::asin(sb);
  double alpha, gamma;
  if (std::abs(sb) < 1.0 - 1e-12) {
    alpha = std::atan2(R(2, 1), R(2, 2));
    gamma = std::atan2(R(1, 0), R(0, 0));
  } else {
    // Gimbal lock: only α − γ (or α + γ) is determined; put it all in α.
    gamma = 0.0;
    alpha = std::atan2(-R(1, 2), R(1, 1));
  }
  return {alpha, beta, gamma};
}

ad::Tensor decode_rotation(const ad::Tensor& values, RotationMode mode) {
  using namespace upcr::ad;
  check_length(mode, values.size());
  Tape& tape = *values.tape();
  auto e = [&](std::size_t i) { return element(values, i); };
  const Tensor zero = tape.constant(Array::scalar(0.0));
  const Tensor one = tape.constant(Array::scalar(1.0));

  switch (mode) {
    case RotationMode::euler: {
      const Tensor ca = cos(e(0)), sa = sin(e(0));
      const Tensor cb = cos(e(1)), sb = sin(e(1));
      const Tensor cg = cos(e(2)), sg = sin(e(2));
      const std::array<Tensor, 9> rx{one, zero, zero, zero, ca, neg(sa), zero, sa, ca};
      const std::array<Tensor, 9> ry{cb, zero, sb, zero, one, zero, neg(sb), zero, cb};
      const std::array<Tensor, 9> rz{cg, neg(sg), zero, sg, cg, zero, zero, zero, one};
      return matmul(matmul(stack(rz, {3, 3}), stack(ry, {3, 3})), stack(rx, {3, 3}));
    }
    case RotationMode::quaternion: {
      const Tensor flat = reshape(values, {4});
      const Tensor sq = sum(square(flat));
      if (!(sq.item() > kDegenerateNorm * kDegenerateNorm)) {
        throw GeometryError("quaternion parameter is zero");
      }
      const Tensor q = div(flat, sqrt(sq));
      const Tensor w = element(q, 0), x = element(q, 1), y = element(q, 2), z = element(q, 3);
      auto two = [&](const Tensor& a, const Tensor& b) { return scale(mul(a, b), 2.0); };
      auto diag = [&](const Tensor& a, const Tensor& b) {
        return sub(one, scale(add(square(a), square(b)), 2.0));
      };
      const std::array<Tensor, 9> R{
          diag(y, z),                  sub(two(x, y), two(w, z)), add(two(x, z), two(w, y)),
          add(two(x, y), two(w, z)),   diag(x, z),                sub(two(y, z), two(w, x)),
          sub(two(x, z), two(w, y)),   add(two(y, z), two(w, x)), diag(x, y)};
      return stack(R, {3, 3});
    }
    case RotationMode::sixd: {
      const Tensor flat = reshape(values, {6});
      const Tensor a1 = slice_cols(flat, 0, 3), a2 = slice_cols(flat, 3, 3);
      {
        const Vec3 v1(a1[0], a1[1], a1[2]), v2(a2[0], a2[1], a2[2]);
        const double n1 = v1.norm(), n2 = v2.norm();
        if (!(n1 > kDegenerateNorm && n2 > kDegenerateNorm) ||
            v1.cross(v2).norm() <= kParallelTol * n1 * n2) {
          throw GeometryError("6-D rotation columns are zero or parallel");
        }
      }
      const Tensor b1 = div(a1, sqrt(sum(square(a1))));
      const Tensor u = sub(a2, mul(b1, sum(mul(b1, a2))));
      const Tensor b2 = div(u, sqrt(sum(square(u))));
      const Tensor x1 = element(b1, 0), y1 = element(b1, 1), z1 = element(b1, 2);
      const Tensor x2 = element(b2, 0), y2 = element(b2, 1), z2 = element(b2, 2);
      const Tensor x3 = sub(mul(y1, z2), mul(z1, y2));
      const Tensor y3 = sub(mul(z1, x2), mul(x1, z2));
      const Tensor z3 = sub(mul(x1, y2), mul(y1, x2));
      const std::array<Tensor, 9> R{x1, x2, x3, y1, y2, y3, z1, z2, z3};
      return stack(R, {3, 3});
    }
    case RotationMode::matrix: {
      Tensor Q = reshape(values, {3, 3});
      Mat3 M;
      for (int i = 0; i < 9; ++i) M(i / 3, i % 3) = values[static_cast<std::size_t>(i)];
      const double det = M.determinant();
      if (!std::isfinite(det) || std::abs(det) < kDegenerateNorm) {
        throw GeometryError("matrix rotation parameter is singular");
      }
      if (det < 0) Q = neg(Q);
      // Newton iteration for the orthogonal polar factor.
      for (int it = 0; it < 100; ++it) {
        const Tensor next = scale(add(Q, transpose(inverse(Q))), 0.5);
        double change = 0.0;
        for (std::size_t i = 0; i < 9; ++i) change = std::max(change, std::abs(next[i] - Q[i]));
        Q = next;
        if (change < 1e-15) break;
      }
      return Q;
    }
  }
  throw GeometryError("unknown rotation mode");
}

}  // namespace upcr::geom
