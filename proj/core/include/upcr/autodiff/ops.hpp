#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "upcr/autodiff/tensor.hpp"

// Differentiable operators over Tensor handles. Every op records one node
// on the tape of its (first) input; all operands must live on the same tape.
// Broadcasting is limited to scalar-with-tensor in the elementwise ops, plus
// the explicit row broadcast in add_row.
namespace upcr::ad {

enum class Elementwise { add, sub, mul, div, log, exp, neg };

/// [n×k]·[k×p] → [n×p]
Tensor matmul(const Tensor& a, const Tensor& b);

/// Unary kinds ignore `b`; binary kinds require it.
Tensor elementwise(Elementwise kind, const Tensor& a, const Tensor* b = nullptr);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);
Tensor log(const Tensor& a);
Tensor exp(const Tensor& a);
Tensor neg(const Tensor& a);

Tensor add_scalar(const Tensor& a, double s);
Tensor scale(const Tensor& a, double s);
Tensor sin(const Tensor& a);
Tensor cos(const Tensor& a);
Tensor sqrt(const Tensor& a);
Tensor square(const Tensor& a);

Tensor leaky_relu(const Tensor& x, double slope);

/// Softmax over all entries (used on 1-D representations).
Tensor softmax(const Tensor& v);

/// Column-wise maximum of an [n×m] matrix → [m]. Ties go to the lowest row.
Tensor reduce_max(const Tensor& rows);

/// [n·g × m] → [n×m]: maximum over each run of `group` consecutive rows.
Tensor group_max(const Tensor& rows, std::size_t group);

/// out[i] = column-wise max of x over rows index[i·k .. i·k+k). Equal to
/// group_max(gather_rows(x, index), k) without materializing the gather;
/// ties go to the earliest listed row.
Tensor neighbor_max(const Tensor& x, std::span<const std::size_t> index, std::size_t k);

/// Concatenation along the last axis.
Tensor concat(std::span<const Tensor> parts);
Tensor slice_cols(const Tensor& x, std::size_t begin, std::size_t count);
std::vector<Tensor> split_cols(const Tensor& x, std::span<const std::size_t> widths);

/// Row gather: out[r] = x[index[r]].
Tensor gather_rows(const Tensor& x, std::span<const std::size_t> index);

/// [n×c] + [c] broadcast over rows.
Tensor add_row(const Tensor& x, const Tensor& row);

Tensor transpose(const Tensor& x);
Tensor reshape(const Tensor& x, Shape shape);

Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);

/// Flat element i as a scalar tensor.
Tensor element(const Tensor& x, std::size_t i);
/// Assembles scalar tensors into one tensor of the given shape.
Tensor stack(std::span<const Tensor> scalars, Shape shape);

/// Inverse of a small square matrix.
Tensor inverse(const Tensor& x);

}  // namespace upcr::ad
