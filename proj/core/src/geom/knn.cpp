#include "upcr/geom/knn.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <numeric>
#include <queue>
#include <string>

namespace upcr::geom {
namespace {

constexpr std::size_t kBruteForceBelow = 64;

bool closer(const KdTree::Hit& a, const KdTree::Hit& b) {
  return a.dist2 < b.dist2 || (a.dist2 == b.dist2 && a.index < b.index);
}

struct HitLess {
  bool operator()(const KdTree::Hit& a, const KdTree::Hit& b) const { return closer(a, b); }
};

double dist2(const Vec3& a, const Vec3& b) {
  const double dx = a.x() - b.x(), dy = a.y() - b.y(), dz = a.z() - b.z();
  return dx * dx + dy * dy + dz * dz;
}

void check_k(std::size_t n, std::size_t k) {
  if (k == 0 || k >= n) {
    throw GeometryError("knn needs 1 <= k <= N-1, got k=" + std::to_string(k) +
                        " for N=" + std::to_string(n));
  }
}

}  // namespace

KdTree::KdTree(std::span<const Vec3> points, std::size_t leaf_size)
    : points_(points.begin(), points.end()), order_(points.size()) {
  if (points_.empty()) throw GeometryError("kd-tree over an empty point set");
  std::iota(order_.begin(), order_.end(), std::size_t{0});
  nodes_.reserve(2 * points_.size() / std::max<std::size_t>(leaf_size, 1) + 1);
  build(0, points_.size(), std::max<std::size_t>(leaf_size, 1));
}

std::size_t KdTree::build(std::size_t begin, std::size_t end, std::size_t leaf_size) {
  const std::size_t id = nodes_.size();
  nodes_.push_back(Node{begin, end});
  if (end - begin <= leaf_size) return id;

  Vec3 lo = points_[order_[begin]], hi = lo;
  for (std::size_t i = begin; i < end; ++i) {
    lo = lo.cwiseMin(points_[order_[i]]);
    hi = hi.cwiseMax(points_[order_[i]]);
  }
  int axis = 0;
  (hi - lo).maxCoeff(&axis);
  if (hi[axis] == lo[axis]) return id;  // all coincident

  const std::size_t mid = begin + (end - begin) / 2;
  std::nth_element(order_.begin() + static_cast<std::ptrdiff_t>(begin),
                   order_.begin() + static_cast<std::ptrdiff_t>(mid),
                   order_.begin() + static_cast<std::ptrdiff_t>(end),
                   [&](std::size_t a, std::size_t b) { return points_[a][axis] < points_[b][axis]; });
  const double split = points_[order_[mid]][axis];
  const std::size_t left = build(begin, mid, leaf_size);
  const std::size_t right = build(mid, end, leaf_size);
  auto& node = nodes_[id];
  node.axis = axis;
  node.split = split;
  node.left = left;
  node.right = right;
  return id;
}

std::vector<KdTree::Hit> KdTree::query(const Vec3& q, std::size_t k, std::size_t exclude) const {
  std::priority_queue<Hit, std::vector<Hit>, HitLess> heap;  // worst on top
  if (k == 0) return {};

  auto visit = [&](auto&& self, std::size_t id) -> void {
    const Node& node = nodes_[id];
    if (node.axis < 0) {
      for (std::size_t i = node.begin; i < node.end; ++i) {
        const std::size_t idx = order_[i];
        if (idx == exclude) continue;
        const Hit h{idx, dist2(q, points_[idx])};
        if (heap.size() < k) {
          heap.push(h);
        } else if (closer(h, heap.top())) {
          heap.pop();
          heap.push(h);
        }
      }
      return;
    }
    const double diff = q[node.axis] - node.split;
    const std::size_t near = diff < 0 ? node.left : node.right;
    const std::size_t far = diff < 0 ? node.right : node.left;
    self(self, near);
    // Equal-distance candidates must still be visited for the index tie rule.
    if (heap.size() < k || diff * diff <= heap.top().dist2) self(self, far);
  };
  visit(visit, 0);

  std::vector<Hit> out(heap.size());
  for (std::size_t i = out.size(); i-- > 0;) {
    out[i] = heap.top();
    heap.pop();
  }
  return out;
}

KdTree::Hit KdTree::nearest(const Vec3& q) const { return query(q, 1).front(); }

NeighborTable knn_brute_force(std::span<const double> rows, std::size_t dim, std::size_t k) {
  if (dim == 0 || rows.size() % dim != 0) throw GeometryError("row data is not a multiple of dim");
  const std::size_t n = rows.size() / dim;
  check_k(n, k);
  NeighborTable table{n, k, std::vector<std::size_t>(n * k)};
  // Column-major copy so the distance loop runs over contiguous candidates;
  // each distance still sums its coordinates in index order.
  std::vector<double> cols(n * dim);
  for (std::size_t j = 0; j < n; ++j)
    for (std::size_t t = 0; t < dim; ++t) cols[t * n + j] = rows[j * dim + t];
  std::vector<double> d(n);
  std::vector<KdTree::Hit> heap;
  heap.reserve(k);
  for (std::size_t i = 0; i < n; ++i) {
    std::fill(d.begin(), d.end(), 0.0);
    for (std::size_t t = 0; t < dim; ++t) {
      const double a = rows[i * dim + t];
      const double* col = cols.data() + t * n;
      for (std::size_t j = 0; j < n; ++j) {
        const double e = a - col[j];
        d[j] += e * e;
      }
    }
    // Bounded max-heap of the k best; most candidates fail the first compare.
    heap.clear();
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i) continue;
      const KdTree::Hit h{j, d[j]};
      if (heap.size() < k) {
        heap.push_back(h);
        std::push_heap(heap.begin(), heap.end(), closer);
      } else if (h.dist2 <= heap.front().dist2 && closer(h, heap.front())) {
        std::pop_heap(heap.begin(), heap.end(), closer);
        heap.back() = h;
        std::push_heap(heap.begin(), heap.end(), closer);
      }
    }
    std::sort_heap(heap.begin(), heap.end(), closer);
    for (std::size_t t = 0; t < k; ++t) table.index[i * k + t] = heap[t].index;
  }
  return table;
}

NeighborTable knn_gram(std::span<const double> rows, std::size_t dim, std::size_t k) {
  if (dim == 0 || rows.size() % dim != 0) throw GeometryError("row data is not a multiple of dim");
  const std::size_t n = rows.size() / dim;
  check_k(n, k);
  using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  const Eigen::Map<const RowMajor> x(rows.data(), static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(dim));
  const Eigen::VectorXd sq = x.rowwise().squaredNorm();
  const Eigen::MatrixXd gram = x * x.transpose();
  NeighborTable table{n, k, std::vector<std::size_t>(n * k)};
  std::vector<KdTree::Hit> heap;
  heap.reserve(k);
  for (std::size_t i = 0; i < n; ++i) {
    const double* g = gram.data() + i * n;  // column i
    heap.clear();
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i) continue;
      const KdTree::Hit h{j, sq[static_cast<Eigen::Index>(i)] + sq[static_cast<Eigen::Index>(j)] - 2.0 * g[j]};
      if (heap.size() < k) {
        heap.push_back(h);
        std::push_heap(heap.begin(), heap.end(), closer);
      } else if (h.dist2 <= heap.front().dist2 && closer(h, heap.front())) {
        std::pop_heap(heap.begin(), heap.end(), closer);
        heap.back() = h;
        std::push_heap(heap.begin(), heap.end(), closer);
      }
    }
    std::sort_heap(heap.begin(), heap.end(), closer);
    for (std::size_t t = 0; t < k; ++t) table.index[i * k + t] = heap[t].index;
  }
  return table;
}

NeighborTable knn_brute_force(const PointCloud& cloud, std::size_t k) {
  if (cloud.empty()) throw GeometryError("knn of an empty cloud");
  const auto rows = cloud.to_rows();
  return knn_brute_force(rows, 3, k);
}

NeighborTable knn(const PointCloud& cloud, std::size_t k) {
  if (cloud.empty()) throw GeometryError("knn of an empty cloud");
  const std::size_t n = cloud.size();
  check_k(n, k);
  if (n < kBruteForceBelow) return knn_brute_force(cloud, k);
  const KdTree tree(cloud.points());
  NeighborTable table{n, k, std::vector<std::size_t>(n * k)};
  for (std::size_t i = 0; i < n; ++i) {
    const auto hits = tree.query(cloud[i], k, i);
    for (std::size_t t = 0; t < k; ++t) table.index[i * k + t] = hits[t].index;
  }
  return table;
}

std::vector<KdTree::Hit> nearest_neighbors(const PointCloud& source, const PointCloud& target) {
  if (source.empty() || target.empty()) throw GeometryError("nearest neighbors of an empty cloud");
  std::vector<KdTree::Hit> out(source.size());
  if (target.size() < kBruteForceBelow) {
    for (std::size_t i = 0; i < source.size(); ++i) {
      KdTree::Hit best{0, dist2(source[i], target[0])};
      for (std::size_t j = 1; j < target.size(); ++j) {
        const KdTree::Hit h{j, dist2(source[i], target[j])};
        if (closer(h, best)) best = h;
      }
      out[i] = best;
    }
    return out;
  }
  const KdTree tree(target.points());
  for (std::size_t i = 0; i < source.size(); ++i) out[i] = tree.nearest(source[i]);
  return out;
}

}  // namespace upcr::geom
