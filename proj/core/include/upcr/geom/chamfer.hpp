#pragma once

#include "upcr/autodiff/tensor.hpp"
#include "upcr/geom/types.hpp"

namespace upcr::geom {

/// Symmetric Chamfer discrepancy: the mean squared nearest-neighbor
/// distance from a to b plus the same from b to a.
double chamfer(const PointCloud& a, const PointCloud& b);

/// Differentiable Chamfer between [n×3] and [m×3] point tensors. The
/// gradient flows along the nearest-neighbor pairs found in the forward pass.
ad::Tensor chamfer(const ad::Tensor& a, const ad::Tensor& b);

/// Rows p ↦ Rᵀ(p − t) for a [n×3] point tensor, [3×3] rotation and [3]
/// translation, all on one tape.
ad::Tensor canonicalize(const ad::Tensor& points, const ad::Tensor& rotation,
                        const ad::Tensor& translation);

}  // namespace upcr::geom
