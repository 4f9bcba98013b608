#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "upcr/autodiff/tensor.hpp"
#include "upcr/geom/types.hpp"

namespace upcr::geom {

/// Rotation parameterizations a pose head can regress.
enum class RotationMode { euler, quaternion, sixd, matrix };

std::size_t rotation_dim(RotationMode mode);
std::string_view to_string(RotationMode mode);
RotationMode rotation_mode_from_string(std::string_view name);

/// The parameter vector that decodes to the identity rotation.
std::vector<double> identity_parameter(RotationMode mode);

/// Euler angles are (α, β, γ) in radians with R = R_z(γ)·R_y(β)·R_x(α).
/// Quaternions are (w, x, y, z), normalized on decode. The 6-D form holds two
/// columns that are Gram–Schmidt orthonormalized. Matrix mode holds 9
/// row-major entries projected onto SO(3).
struct RotationParam {
  RotationMode mode = RotationMode::euler;
  std::vector<double> values;

  RotationParam() = default;
  RotationParam(RotationMode m, std::vector<double> v);
};

Mat3 rot_x(double angle);
Mat3 rot_y(double angle);
Mat3 rot_z(double angle);

/// Throws GeometryError for a zero quaternion, parallel 6-D columns, or a
/// singular 9-vector.
Mat3 decode_rotation(const RotationParam& param);

/// Inverse of the euler decoding; β in [−π/2, π/2].
Vec3 euler_from_matrix(const Mat3& R);

/// Polar-factor projection of a 3×3 matrix onto SO(3). A matrix with
/// negative determinant is negated first.
Mat3 project_to_rotation(const Mat3& M);

/// Differentiable decoding of a parameter tensor of rotation_dim(mode)
/// entries into a [3×3] rotation tensor. Agrees with decode_rotation.
ad::Tensor decode_rotation(const ad::Tensor& values, RotationMode mode);

}  // namespace upcr::geom
