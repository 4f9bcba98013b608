#include "upcr/geom/chamfer.hpp"

#include "upcr/autodiff/ops.hpp"
#include "upcr/geom/knn.hpp"

namespace upcr::geom {
namespace {

double mean_nearest(const PointCloud& from, const PointCloud& to) {
  double s = 0.0;
  for (const auto& h : nearest_neighbors(from, to)) s += h.dist2;
  return s / static_cast<double>(from.size());
}

PointCloud as_cloud(const ad::Tensor& t) {
  if (t.shape().size() != 2 || t.shape()[1] != 3) {
    throw ad::ShapeError("chamfer expects [n×3] point tensors, got " + ad::to_string(t.shape()));
  }
  return PointCloud::from_rows(t.data());
}

}  // namespace

double chamfer(const PointCloud& a, const PointCloud& b) {
  if (a.empty() || b.empty()) throw GeometryError("chamfer of an empty cloud");
  return mean_nearest(a, b) + mean_nearest(b, a);
}

ad::Tensor chamfer(const ad::Tensor& a, const ad::Tensor& b) {
  if (a.tape() != b.tape()) throw std::invalid_argument("chamfer operands live on different tapes");
  const PointCloud ca = as_cloud(a), cb = as_cloud(b);
  const auto ab = nearest_neighbors(ca, cb);
  const auto ba = nearest_neighbors(cb, ca);
  const double na = static_cast<double>(ca.size()), nb = static_cast<double>(cb.size());
  double sa = 0.0, sb = 0.0;
  for (const auto& h : ab) sa += h.dist2;
  for (const auto& h : ba) sb += h.dist2;

  std::vector<std::size_t> to_b(ab.size()), to_a(ba.size());
  for (std::size_t i = 0; i < ab.size(); ++i) to_b[i] = ab[i].index;
  for (std::size_t j = 0; j < ba.size(); ++j) to_a[j] = ba[j].index;

  const auto ia = a.node_id(), ib = b.node_id();
  return a.tape()->record(
      "chamfer", {ia, ib}, ad::Array::scalar(sa / na + sb / nb),
      [=](ad::Tape& t, std::size_t self) {
        const double g = t.grad_buffer(self)[0];
        const auto& pa = t.value(ia).data;
        const auto& pb = t.value(ib).data;
        const bool ga_on = t.requires_grad(ia), gb_on = t.requires_grad(ib);
        std::vector<double>* ga = ga_on ? &t.grad_buffer(ia) : nullptr;
        std::vector<double>* gb = gb_on ? &t.grad_buffer(ib) : nullptr;
        // d/dx ‖x − y‖² = 2(x − y), scaled by each term's 1/N.
        for (std::size_t i = 0; i < to_b.size(); ++i) {
          const std::size_t j = to_b[i];
          for (int d = 0; d < 3; ++d) {
            const double diff = 2.0 * g * (pa[3 * i + d] - pb[3 * j + d]) / na;
            if (ga) (*ga)[3 * i + d] += diff;
            if (gb) (*gb)[3 * j + d] -= diff;
          }
        }
        for (std::size_t j = 0; j < to_a.size(); ++j) {
          const std::size_t i = to_a[j];
          for (int d = 0; d < 3; ++d) {
            const double diff = 2.0 * g * (pb[3 * j + d] - pa[3 * i + d]) / nb;
            if (gb) (*gb)[3 * j + d] += diff;
            if (ga) (*ga)[3 * i + d] -= diff;
          }
        }
      });
}

ad::Tensor canonicalize(const ad::Tensor& points, const ad::Tensor& rotation,
                        const ad::Tensor& translation) {
  return ad::matmul(ad::add_row(points, ad::neg(translation)), rotation);
}

}  // namespace upcr::geom
