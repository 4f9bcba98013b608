#include "upcr/autodiff/tensor.hpp"

#include <algorithm>
#include <numeric>
#include <sstream>

namespace upcr::ad {

std::size_t numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>());
}

std::string to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << "x";
    os << shape[i];
  }
  os << ']';
  return os.str();
}

Array::Array(Shape s, std::vector<double> d) : shape(std::move(s)), data(std::move(d)) {
  if (shape.empty()) throw ShapeError("array shape must have at least one dimension");
  for (auto dim : shape) {
    if (dim == 0) throw ShapeError("array dimensions must be positive, got " + to_string(shape));
  }
  if (numel(shape) != data.size()) {
    throw ShapeError("shape " + to_string(shape) + " does not match " +
                     std::to_string(data.size()) + " values");
  }
}

Array::Array(Shape s, double fill) : Array(s, std::vector<double>(numel(s), fill)) {}

Array Array::vector(std::vector<double> v) {
  const auto n = v.size();
  return Array({n}, std::move(v));
}

Array Array::matrix(std::size_t rows, std::size_t cols, std::vector<double> v) {
  return Array({rows, cols}, std::move(v));
}

std::size_t Array::rows() const { return shape.size() == 2 ? shape[0] : 1; }
std::size_t Array::cols() const { return shape.back(); }

const Shape& Tensor::shape() const { return tape_->value(id_).shape; }
std::span<const double> Tensor::data() const { return tape_->value(id_).data; }
const Array& Tensor::value() const { return tape_->value(id_); }
bool Tensor::requires_grad() const { return tape_->requires_grad(id_); }

double Tensor::item() const {
  const auto& v = value();
  if (v.size() != 1) throw ShapeError("item() on non-scalar tensor " + to_string(v.shape));
  return v.data[0];
}

Tensor Tape::constant(Array value) {
  nodes_.push_back(Node{"constant", {}, std::move(value), {}, false, {}});
  return Tensor(this, nodes_.size() - 1);
}

Tensor Tape::variable(Array value) {
  nodes_.push_back(Node{"variable", {}, std::move(value), {}, true, {}});
  return Tensor(this, nodes_.size() - 1);
}

Tensor Tape::record(std::string op, std::vector<std::size_t> inputs, Array value,
                    BackwardFn backward) {
  bool needs = false;
  for (auto in : inputs) {
    if (in >= nodes_.size()) throw std::logic_error("tape input references a later node");
    needs = needs || nodes_[in].requires_grad;
  }
  nodes_.push_back(Node{std::move(op), std::move(inputs), std::move(value), {}, needs,
                        needs ? std::move(backward) : BackwardFn{}});
  return Tensor(this, nodes_.size() - 1);
}

std::vector<double>& Tape::grad_buffer(std::size_t id) {
  auto& n = nodes_[id];
  if (n.grad.size() != n.value.size()) n.grad.assign(n.value.size(), 0.0);
  return n.grad;
}

const std::vector<double>& Tape::grad(const Tensor& t) { return grad_buffer(t.id_); }

void Tape::backward(const Tensor& loss) {
  if (loss.tape_ != this) throw std::invalid_argument("loss tensor belongs to another tape");
  if (nodes_[loss.id_].value.size() != 1) {
    throw ShapeError("backward requires a scalar loss, got shape " +
                     to_string(nodes_[loss.id_].value.shape));
  }
  if (!nodes_[loss.id_].requires_grad) return;

  // Seed into a scratch pass so that repeated calls accumulate on leaves
  // without double counting intermediate buffers from a previous sweep.
  std::vector<std::vector<double>> saved;
  saved.reserve(loss.id_ + 1);
  for (std::size_t i = 0; i <= loss.id_; ++i) {
    auto& n = nodes_[i];
    if (n.backward) {
      saved.push_back(std::move(n.grad));
      n.grad.clear();
    } else {
      saved.emplace_back();
    }
  }
  grad_buffer(loss.id_)[0] += 1.0;
  for (std::size_t i = loss.id_ + 1; i-- > 0;) {
    auto& n = nodes_[i];
    if (!n.backward || n.grad.empty()) continue;
    n.backward(*this, i);
  }
  // Intermediate nodes report the gradient of the latest sweep plus any
  // earlier accumulation, matching the leaves.
  for (std::size_t i = 0; i <= loss.id_; ++i) {
    auto& prev = saved[i];
    if (prev.empty()) continue;
    auto& g = grad_buffer(i);
    for (std::size_t j = 0; j < g.size(); ++j) g[j] += prev[j];
  }
}

void Tape::zero_grad() {
  for (auto& n : nodes_) n.grad.clear();
}

}  // namespace upcr::ad
