#include "upcr/autodiff/ops.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>

namespace upcr::ad {
namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMat>;
using MutMap = Eigen::Map<RowMat>;

Tape& tape_of(const Tensor& a) {
  if (!a.valid()) throw std::invalid_argument("tensor is not attached to a tape");
  return *a.tape();
}

Tape& tape_of(const Tensor& a, const Tensor& b) {
  if (a.tape() != b.tape() || !a.valid()) {
    throw std::invalid_argument("operands live on different tapes");
  }
  return *a.tape();
}

void require_matrix(const Tensor& t, const char* what) {
  if (t.shape().size() != 2) {
    throw ShapeError(std::string(what) + " expects a 2-D tensor, got " + to_string(t.shape()));
  }
}

template <typename F>
Tensor unary(const char* name, const Tensor& a, F&& f, std::function<double(double x, double y)> dydx) {
  auto& tape = tape_of(a);
  const auto& av = a.value();
  Array out(av.shape, 0.0);
  for (std::size_t i = 0; i < av.size(); ++i) out.data[i] = f(av.data[i]);
  const auto ia = a.node_id();
  return tape.record(name, {ia}, std::move(out), [ia, dydx](Tape& t, std::size_t self) {
    if (!t.requires_grad(ia)) return;
    const auto& g = t.grad_buffer(self);
    const auto& x = t.value(ia).data;
    const auto& y = t.value(self).data;
    auto& ga = t.grad_buffer(ia);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * dydx(x[i], y[i]);
  });
}

// Adds `g` into the gradient of `id`, summing when the operand was a
// broadcast scalar.
void accumulate(Tape& t, std::size_t id, const std::vector<double>& g, double factor = 1.0) {
  if (!t.requires_grad(id)) return;
  auto& dst = t.grad_buffer(id);
  if (dst.size() == g.size()) {
    for (std::size_t i = 0; i < g.size(); ++i) dst[i] += factor * g[i];
  } else {
    double s = 0.0;
    for (double v : g) s += v;
    dst[0] += factor * s;
  }
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  auto& tape = tape_of(a, b);
  require_matrix(a, "matmul");
  require_matrix(b, "matmul");
  const auto n = a.shape()[0], k = a.shape()[1], k2 = b.shape()[0], p = b.shape()[1];
  if (k != k2) {
    throw ShapeError("matmul inner dimensions disagree: " + to_string(a.shape()) + " · " +
                     to_string(b.shape()));
  }
  Array out({n, p}, 0.0);
  MutMap(out.data.data(), n, p).noalias() =
      ConstMap(a.data().data(), n, k) * ConstMap(b.data().data(), k, p);
  const auto ia = a.node_id(), ib = b.node_id();
  return tape.record("matmul", {ia, ib}, std::move(out), [=](Tape& t, std::size_t self) {
    ConstMap g(t.grad_buffer(self).data(), n, p);
    if (t.requires_grad(ia)) {
      MutMap(t.grad_buffer(ia).data(), n, k).noalias() +=
          g * ConstMap(t.value(ib).data.data(), k, p).transpose();
    }
    if (t.requires_grad(ib)) {
      MutMap(t.grad_buffer(ib).data(), k, p).noalias() +=
          ConstMap(t.value(ia).data.data(), n, k).transpose() * g;
    }
  });
}

Tensor elementwise(Elementwise kind, const Tensor& a, const Tensor* b) {
  switch (kind) {
    case Elementwise::log: {
      const auto& av = a.data();
      for (std::size_t i = 0; i < av.size(); ++i) {
        if (!(av[i] > 0.0)) {
          throw DomainError("log of non-positive entry " + std::to_string(av[i]) + " at index " +
                            std::to_string(i));
        }
      }
      return unary("log", a, [](double x) { return std::log(x); },
                   [](double x, double) { return 1.0 / x; });
    }
    case Elementwise::exp:
      return unary("exp", a, [](double x) { return std::exp(x); },
                   [](double, double y) { return y; });
    case Elementwise::neg:
      return unary("neg", a, [](double x) { return -x; }, [](double, double) { return -1.0; });
    default:
      break;
  }
  if (b == nullptr) throw std::invalid_argument("binary elementwise op needs two operands");
  auto& tape = tape_of(a, *b);
  const auto& av = a.value();
  const auto& bv = b->value();
  const bool a_scalar = av.size() == 1, b_scalar = bv.size() == 1;
  if (av.shape != bv.shape && !a_scalar && !b_scalar) {
    throw ShapeError("elementwise shapes disagree: " + to_string(av.shape) + " vs " +
                     to_string(bv.shape));
  }
  const Shape shape = (a_scalar && !b_scalar) ? bv.shape : av.shape;
  const auto n = numel(shape);
  auto A = [&](std::size_t i) { return a_scalar ? av.data[0] : av.data[i]; };
  auto B = [&](std::size_t i) { return b_scalar ? bv.data[0] : bv.data[i]; };
  if (kind == Elementwise::div) {
    for (std::size_t i = 0; i < bv.size(); ++i) {
      if (bv.data[i] == 0.0) throw DomainError("division by zero at index " + std::to_string(i));
    }
  }
  Array out(shape, 0.0);
  const char* name = "add";
  for (std::size_t i = 0; i < n; ++i) {
    switch (kind) {
      case Elementwise::add: out.data[i] = A(i) + B(i); break;
      case Elementwise::sub: out.data[i] = A(i) - B(i); name = "sub"; break;
      case Elementwise::mul: out.data[i] = A(i) * B(i); name = "mul"; break;
      case Elementwise::div: out.data[i] = A(i) / B(i); name = "div"; break;
      default: break;
    }
  }
  const auto ia = a.node_id(), ib = b->node_id();
  return tape.record(name, {ia, ib}, std::move(out), [=](Tape& t, std::size_t self) {
    const auto& g = t.grad_buffer(self);
    const auto& x = t.value(ia).data;
    const auto& y = t.value(ib).data;
    auto X = [&](std::size_t i) { return a_scalar ? x[0] : x[i]; };
    auto Y = [&](std::size_t i) { return b_scalar ? y[0] : y[i]; };
    switch (kind) {
      case Elementwise::add:
        accumulate(t, ia, g);
        accumulate(t, ib, g);
        break;
      case Elementwise::sub:
        accumulate(t, ia, g);
        accumulate(t, ib, g, -1.0);
        break;
      case Elementwise::mul:
      case Elementwise::div: {
        std::vector<double> ga(g.size()), gb(g.size());
        for (std::size_t i = 0; i < g.size(); ++i) {
          if (kind == Elementwise::mul) {
            ga[i] = g[i] * Y(i);
            gb[i] = g[i] * X(i);
          } else {
            ga[i] = g[i] / Y(i);
            gb[i] = -g[i] * X(i) / (Y(i) * Y(i));
          }
        }
        accumulate(t, ia, ga);
        accumulate(t, ib, gb);
        break;
      }
      default:
        break;
    }
  });
}

Tensor add(const Tensor& a, const Tensor& b) { return elementwise(Elementwise::add, a, &b); }
Tensor sub(const Tensor& a, const Tensor& b) { return elementwise(Elementwise::sub, a, &b); }
Tensor mul(const Tensor& a, const Tensor& b) { return elementwise(Elementwise::mul, a, &b); }
Tensor div(const Tensor& a, const Tensor& b) { return elementwise(Elementwise::div, a, &b); }
Tensor log(const Tensor& a) { return elementwise(Elementwise::log, a); }
Tensor exp(const Tensor& a) { return elementwise(Elementwise::exp, a); }
Tensor neg(const Tensor& a) { return elementwise(Elementwise::neg, a); }

Tensor add_scalar(const Tensor& a, double s) {
  return unary("add_scalar", a, [s](double x) { return x + s; },
               [](double, double) { return 1.0; });
}

Tensor scale(const Tensor& a, double s) {
  return unary("scale", a, [s](double x) { return s * x; }, [s](double, double) { return s; });
}

Tensor sin(const Tensor& a) {
  return unary("sin", a, [](double x) { return std::sin(x); },
               [](double x, double) { return std::cos(x); });
}

Tensor cos(const Tensor& a) {
  return unary("cos", a, [](double x) { return std::cos(x); },
               [](double x, double) { return -std::sin(x); });
}

Tensor sqrt(const Tensor& a) {
  const auto& av = a.data();
  for (std::size_t i = 0; i < av.size(); ++i) {
    if (!(av[i] > 0.0)) {
      throw DomainError("sqrt needs positive entries; index " + std::to_string(i) + " is " +
                        std::to_string(av[i]));
    }
  }
  return unary("sqrt", a, [](double x) { return std::sqrt(x); },
               [](double, double y) { return 0.5 / y; });
}

Tensor square(const Tensor& a) {
  return unary("square", a, [](double x) { return x * x; },
               [](double x, double) { return 2.0 * x; });
}

Tensor leaky_relu(const Tensor& x, double slope) {
  if (!(slope >= 0.0 && slope < 1.0)) throw std::invalid_argument("leaky_relu slope must be in [0,1)");
  return unary("leaky_relu", x, [slope](double v) { return v >= 0.0 ? v : slope * v; },
               [slope](double v, double) { return v >= 0.0 ? 1.0 : slope; });
}

Tensor softmax(const Tensor& v) {
  auto& tape = tape_of(v);
  const auto& x = v.value();
  const double mx = *std::max_element(x.data.begin(), x.data.end());
  Array out(x.shape, 0.0);
  double z = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    out.data[i] = std::exp(x.data[i] - mx);
    z += out.data[i];
  }
  for (auto& e : out.data) e /= z;
  const auto iv = v.node_id();
  return tape.record("softmax", {iv}, std::move(out), [iv](Tape& t, std::size_t self) {
    const auto& g = t.grad_buffer(self);
    const auto& p = t.value(self).data;
    double dot = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) dot += g[i] * p[i];
    auto& gv = t.grad_buffer(iv);
    for (std::size_t i = 0; i < p.size(); ++i) gv[i] += p[i] * (g[i] - dot);
  });
}

Tensor group_max(const Tensor& rows, std::size_t group) {
  auto& tape = tape_of(rows);
  const auto& x = rows.value();
  const auto total = x.rows(), m = x.cols();
  if (group == 0 || total == 0 || total % group != 0) {
    throw ShapeError("group_max: " + std::to_string(total) + " rows not divisible into groups of " +
                     std::to_string(group));
  }
  const auto n = total / group;
  Array out({n, m}, 0.0);
  std::vector<std::size_t> arg(n * m);
  for (std::size_t gi = 0; gi < n; ++gi) {
    const std::size_t base = gi * group;
    double* best = out.data.data() + gi * m;
    std::size_t* where = arg.data() + gi * m;
    std::copy_n(x.data.data() + base * m, m, best);
    std::fill_n(where, m, base);
    for (std::size_t r = base + 1; r < base + group; ++r) {
      const double* row = x.data.data() + r * m;
      for (std::size_t c = 0; c < m; ++c) {
        if (row[c] > best[c]) {
          best[c] = row[c];
          where[c] = r;
        }
      }
    }
  }
  const auto ix = rows.node_id();
  return tape.record("group_max", {ix}, std::move(out),
                     [ix, m, arg = std::move(arg)](Tape& t, std::size_t self) {
                       const auto& g = t.grad_buffer(self);
                       auto& gx = t.grad_buffer(ix);
                       for (std::size_t i = 0; i < arg.size(); ++i) gx[arg[i] * m + i % m] += g[i];
                     });
}

Tensor neighbor_max(const Tensor& x, std::span<const std::size_t> index, std::size_t k) {
  auto& tape = tape_of(x);
  require_matrix(x, "neighbor_max");
  const auto n = x.shape()[0], m = x.shape()[1];
  if (k == 0 || index.empty() || index.size() % k != 0) {
    throw ShapeError("neighbor_max: " + std::to_string(index.size()) + " indices not divisible into groups of " +
                     std::to_string(k));
  }
  for (auto j : index) {
    if (j >= n) throw std::out_of_range("neighbor_max index " + std::to_string(j) + " >= " + std::to_string(n));
  }
  const auto groups = index.size() / k;
  Array out({groups, m}, 0.0);
  std::vector<std::size_t> arg(groups * m);
  const double* xv = x.value().data.data();
  for (std::size_t gi = 0; gi < groups; ++gi) {
    double* best = out.data.data() + gi * m;
    std::size_t* where = arg.data() + gi * m;
    const std::size_t first = index[gi * k];
    std::copy_n(xv + first * m, m, best);
    std::fill_n(where, m, first);
    for (std::size_t t = 1; t < k; ++t) {
      const std::size_t j = index[gi * k + t];
      const double* row = xv + j * m;
      for (std::size_t c = 0; c < m; ++c) {
        if (row[c] > best[c]) {
          best[c] = row[c];
          where[c] = j;
        }
      }
    }
  }
  const auto ix = x.node_id();
  return tape.record("neighbor_max", {ix}, std::move(out),
                     [ix, m, arg = std::move(arg)](Tape& t, std::size_t self) {
                       const auto& g = t.grad_buffer(self);
                       auto& gx = t.grad_buffer(ix);
                       for (std::size_t i = 0; i < arg.size(); ++i) gx[arg[i] * m + i % m] += g[i];
                     });
}

Tensor reduce_max(const Tensor& rows) {
  const auto& x = rows.value();
  if (x.size() == 0) throw ShapeError("reduce_max of an empty tensor");
  const auto n = x.rows(), m = x.cols();
  Tensor src = rows;
  if (x.rank() != 2) src = reshape(rows, {n, m});
  return reshape(group_max(src, n), {m});
}

Tensor concat(std::span<const Tensor> parts) {
  if (parts.empty()) throw ShapeError("concat needs at least one part");
  auto& tape = tape_of(parts[0]);
  const auto& first = parts[0].shape();
  const std::size_t rows = parts[0].value().rows();
  std::vector<std::size_t> widths;
  std::vector<std::size_t> ids;
  std::size_t total = 0;
  for (const auto& p : parts) {
    if (p.tape() != &tape) throw std::invalid_argument("concat operands live on different tapes");
    const auto& s = p.shape();
    if (s.size() != first.size() || !std::equal(s.begin(), s.end() - 1, first.begin())) {
      throw ShapeError("concat: incompatible shapes " + to_string(first) + " and " + to_string(s));
    }
    widths.push_back(s.back());
    ids.push_back(p.node_id());
    total += s.back();
  }
  Shape shape = first;
  shape.back() = total;
  Array out(shape, 0.0);
  std::size_t off = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const auto& v = parts[k].data();
    for (std::size_t r = 0; r < rows; ++r) {
      std::copy_n(v.begin() + r * widths[k], widths[k], out.data.begin() + r * total + off);
    }
    off += widths[k];
  }
  return tape.record("concat", ids, std::move(out),
                     [ids, widths, rows, total](Tape& t, std::size_t self) {
                       const auto& g = t.grad_buffer(self);
                       std::size_t off = 0;
                       for (std::size_t k = 0; k < ids.size(); ++k) {
                         if (t.requires_grad(ids[k])) {
                           auto& gk = t.grad_buffer(ids[k]);
                           for (std::size_t r = 0; r < rows; ++r)
                             for (std::size_t c = 0; c < widths[k]; ++c)
                               gk[r * widths[k] + c] += g[r * total + off + c];
                         }
                         off += widths[k];
                       }
                     });
}

Tensor slice_cols(const Tensor& x, std::size_t begin, std::size_t count) {
  auto& tape = tape_of(x);
  const auto& xv = x.value();
  const auto rows = xv.rows(), cols = xv.cols();
  if (count == 0 || begin + count > cols) {
    throw ShapeError("slice_cols [" + std::to_string(begin) + ", " + std::to_string(begin + count) +
                     ") out of range for width " + std::to_string(cols));
  }
  Shape shape = xv.shape;
  shape.back() = count;
  Array out(shape, 0.0);
  for (std::size_t r = 0; r < rows; ++r)
    std::copy_n(xv.data.begin() + r * cols + begin, count, out.data.begin() + r * count);
  const auto ix = x.node_id();
  return tape.record("slice_cols", {ix}, std::move(out), [=](Tape& t, std::size_t self) {
    const auto& g = t.grad_buffer(self);
    auto& gx = t.grad_buffer(ix);
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t c = 0; c < count; ++c) gx[r * cols + begin + c] += g[r * count + c];
  });
}

std::vector<Tensor> split_cols(const Tensor& x, std::span<const std::size_t> widths) {
  std::size_t total = 0;
  for (auto w : widths) total += w;
  if (total != x.shape().back()) {
    throw ShapeError("split widths sum to " + std::to_string(total) + " but tensor width is " +
                     std::to_string(x.shape().back()));
  }
  std::vector<Tensor> out;
  std::size_t off = 0;
  for (auto w : widths) {
    out.push_back(slice_cols(x, off, w));
    off += w;
  }
  return out;
}

Tensor gather_rows(const Tensor& x, std::span<const std::size_t> index) {
  auto& tape = tape_of(x);
  require_matrix(x, "gather_rows");
  const auto n = x.shape()[0], c = x.shape()[1];
  if (index.empty()) throw ShapeError("gather_rows with an empty index");
  Array out({index.size(), c}, 0.0);
  const auto& xv = x.data();
  for (std::size_t r = 0; r < index.size(); ++r) {
    if (index[r] >= n) {
      throw std::out_of_range("gather_rows index " + std::to_string(index[r]) + " >= " +
                              std::to_string(n));
    }
    std::copy_n(xv.begin() + index[r] * c, c, out.data.begin() + r * c);
  }
  const auto ix = x.node_id();
  return tape.record("gather_rows", {ix}, std::move(out),
                     [ix, c, idx = std::vector<std::size_t>(index.begin(), index.end())](
                         Tape& t, std::size_t self) {
                       const auto& g = t.grad_buffer(self);
                       auto& gx = t.grad_buffer(ix);
                       for (std::size_t r = 0; r < idx.size(); ++r) {
                         double* dst = gx.data() + idx[r] * c;
                         const double* src = g.data() + r * c;
                         for (std::size_t j = 0; j < c; ++j) dst[j] += src[j];
                       }
                     });
}

Tensor add_row(const Tensor& x, const Tensor& row) {
  auto& tape = tape_of(x, row);
  require_matrix(x, "add_row");
  const auto n = x.shape()[0], c = x.shape()[1];
  if (row.size() != c) {
    throw ShapeError("add_row: row of size " + std::to_string(row.size()) + " vs width " +
                     std::to_string(c));
  }
  Array out = x.value();
  const auto& rv = row.data();
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t j = 0; j < c; ++j) out.data[r * c + j] += rv[j];
  const auto ix = x.node_id(), ir = row.node_id();
  return tape.record("add_row", {ix, ir}, std::move(out), [=](Tape& t, std::size_t self) {
    const auto& g = t.grad_buffer(self);
    if (t.requires_grad(ix)) {
      auto& gx = t.grad_buffer(ix);
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
    }
    if (t.requires_grad(ir)) {
      auto& gr = t.grad_buffer(ir);
      for (std::size_t r = 0; r < n; ++r)
        for (std::size_t j = 0; j < c; ++j) gr[j] += g[r * c + j];
    }
  });
}

Tensor transpose(const Tensor& x) {
  auto& tape = tape_of(x);
  require_matrix(x, "transpose");
  const auto n = x.shape()[0], m = x.shape()[1];
  Array out({m, n}, 0.0);
  MutMap(out.data.data(), m, n) = ConstMap(x.data().data(), n, m).transpose();
  const auto ix = x.node_id();
  return tape.record("transpose", {ix}, std::move(out), [=](Tape& t, std::size_t self) {
    MutMap(t.grad_buffer(ix).data(), n, m) +=
        ConstMap(t.grad_buffer(self).data(), m, n).transpose();
  });
}

Tensor reshape(const Tensor& x, Shape shape) {
  auto& tape = tape_of(x);
  if (numel(shape) != x.size()) {
    throw ShapeError("cannot reshape " + to_string(x.shape()) + " to " + to_string(shape));
  }
  Array out(std::move(shape), x.value().data);
  const auto ix = x.node_id();
  return tape.record("reshape", {ix}, std::move(out), [ix](Tape& t, std::size_t self) {
    const auto& g = t.grad_buffer(self);
    auto& gx = t.grad_buffer(ix);
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
  });
}

Tensor sum(const Tensor& x) {
  auto& tape = tape_of(x);
  double s = 0.0;
  for (double v : x.data()) s += v;
  const auto ix = x.node_id();
  return tape.record("sum", {ix}, Array::scalar(s), [ix](Tape& t, std::size_t self) {
    const double g = t.grad_buffer(self)[0];
    for (auto& v : t.grad_buffer(ix)) v += g;
  });
}

Tensor mean(const Tensor& x) { return scale(sum(x), 1.0 / static_cast<double>(x.size())); }

Tensor element(const Tensor& x, std::size_t i) {
  auto& tape = tape_of(x);
  if (i >= x.size()) throw std::out_of_range("element index " + std::to_string(i) + " out of range");
  const auto ix = x.node_id();
  return tape.record("element", {ix}, Array::scalar(x.data()[i]), [ix, i](Tape& t, std::size_t self) {
    t.grad_buffer(ix)[i] += t.grad_buffer(self)[0];
  });
}

Tensor stack(std::span<const Tensor> scalars, Shape shape) {
  if (scalars.empty()) throw ShapeError("stack of nothing");
  auto& tape = tape_of(scalars[0]);
  if (numel(shape) != scalars.size()) {
    throw ShapeError("stack: " + std::to_string(scalars.size()) + " scalars into shape " +
                     to_string(shape));
  }
  std::vector<double> vals;
  std::vector<std::size_t> ids;
  for (const auto& s : scalars) {
    if (s.tape() != &tape) throw std::invalid_argument("stack operands live on different tapes");
    if (s.size() != 1) throw ShapeError("stack expects scalar tensors");
    vals.push_back(s.data()[0]);
    ids.push_back(s.node_id());
  }
  return tape.record("stack", ids, Array(std::move(shape), std::move(vals)),
                     [ids](Tape& t, std::size_t self) {
                       const auto& g = t.grad_buffer(self);
                       for (std::size_t i = 0; i < ids.size(); ++i)
                         if (t.requires_grad(ids[i])) t.grad_buffer(ids[i])[0] += g[i];
                     });
}

Tensor inverse(const Tensor& x) {
  auto& tape = tape_of(x);
  require_matrix(x, "inverse");
  const auto n = x.shape()[0];
  if (x.shape()[1] != n) throw ShapeError("inverse of non-square " + to_string(x.shape()));
  const RowMat a = ConstMap(x.data().data(), n, n);
  Eigen::FullPivLU<RowMat> lu(a);
  if (!lu.isInvertible()) throw DomainError("inverse of a singular matrix");
  Array out({n, n}, 0.0);
  MutMap(out.data.data(), n, n) = lu.inverse();
  const auto ix = x.node_id();
  return tape.record("inverse", {ix}, std::move(out), [ix, n](Tape& t, std::size_t self) {
    ConstMap inv(t.value(self).data.data(), n, n);
    ConstMap g(t.grad_buffer(self).data(), n, n);
    MutMap(t.grad_buffer(ix).data(), n, n) -= inv.transpose() * g * inv.transpose();
  });
}

}  // namespace upcr::ad
