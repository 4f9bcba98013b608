#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace upcr::ad {

using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape& shape);
std::string to_string(const Shape& shape);

/// Dense row-major array of doubles. The plain value type behind every
/// tensor on a tape and every persistent model parameter.
struct Array {
  Shape shape;
  std::vector<double> data;

  Array() = default;
  Array(Shape s, std::vector<double> d);
  explicit Array(Shape s, double fill = 0.0);

  static Array scalar(double v) { return Array({1}, std::vector<double>{v}); }
  static Array vector(std::vector<double> v);
  static Array matrix(std::size_t rows, std::size_t cols, std::vector<double> v);

  std::size_t size() const { return data.size(); }
  std::size_t rank() const { return shape.size(); }
  std::size_t rows() const;
  std::size_t cols() const;
  double& at(std::size_t r, std::size_t c) { return data[r * cols() + c]; }
  double at(std::size_t r, std::size_t c) const { return data[r * cols() + c]; }

  bool operator==(const Array&) const = default;
};

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

class Tape;

/// Handle to a node on a Tape. Cheap to copy; valid while the tape lives.
class Tensor {
 public:
  Tensor() = default;

  const Shape& shape() const;
  std::span<const double> data() const;
  const Array& value() const;
  bool requires_grad() const;
  std::size_t node_id() const { return id_; }
  Tape* tape() const { return tape_; }
  bool valid() const { return tape_ != nullptr; }

  std::size_t size() const { return data().size(); }
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }
  double item() const;
  double operator[](std::size_t i) const { return data()[i]; }

 private:
  friend class Tape;
  Tensor(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

/// Append-only record of a forward computation. Nodes only reference
/// earlier nodes, so a reverse sweep over the node list is a valid
/// topological order for backpropagation.
class Tape {
 public:
  /// Propagates the node's gradient into its inputs' gradient buffers.
  using BackwardFn = std::function<void(Tape&, std::size_t self)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Tensor constant(Array value);
  Tensor variable(Array value);

  /// Records an operation result. Used by the op implementations.
  Tensor record(std::string op, std::vector<std::size_t> inputs, Array value,
                BackwardFn backward);

  /// Reverse sweep from a scalar loss. Gradients accumulate across calls
  /// until zero_grad().
  void backward(const Tensor& loss);
  void zero_grad();

  const Array& value(std::size_t id) const { return nodes_[id].value; }
  const Array& value(const Tensor& t) const { return nodes_[t.id_].value; }
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }
  const std::string& op(std::size_t id) const { return nodes_[id].op; }
  const std::vector<std::size_t>& inputs(std::size_t id) const { return nodes_[id].inputs; }

  /// Gradient of the last backward loss w.r.t. t; zeros if none reached it.
  const std::vector<double>& grad(const Tensor& t);
  std::vector<double>& grad_buffer(std::size_t id);

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    std::string op;
    std::vector<std::size_t> inputs;
    Array value;
    std::vector<double> grad;
    bool requires_grad = false;
    BackwardFn backward;
  };

  std::vector<Node> nodes_;
};

}  // namespace upcr::ad
