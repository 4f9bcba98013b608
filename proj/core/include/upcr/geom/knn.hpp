#pragma once

#include <cstddef>
#include <span>
#include <utility>
#include <vector>

#include "upcr/geom/types.hpp"

namespace upcr::geom {

/// Row-major [n×k] neighbor indices. Each row is sorted by ascending
/// distance, ties broken by lower index, and never contains its own row.
struct NeighborTable {
  std::size_t n = 0;
  std::size_t k = 0;
  std::vector<std::size_t> index;

  std::span<const std::size_t> row(std::size_t i) const { return {index.data() + i * k, k}; }
};

/// Static 3-D kd-tree over a point set.
class KdTree {
 public:
  struct Hit {
    std::size_t index;
    double dist2;
  };

  explicit KdTree(std::span<const Vec3> points, std::size_t leaf_size = 8);

  /// The k nearest points to `q` ordered by (distance, index). `exclude`
  /// removes one index from consideration (the query point itself).
  std::vector<Hit> query(const Vec3& q, std::size_t k,
                         std::size_t exclude = static_cast<std::size_t>(-1)) const;
  Hit nearest(const Vec3& q) const;

  std::size_t size() const { return points_.size(); }

 private:
  struct Node {
    std::size_t begin, end;  // range into order_
    int axis = -1;           // -1 for leaves
    double split = 0.0;
    std::size_t left = 0, right = 0;
  };

  std::size_t build(std::size_t begin, std::size_t end, std::size_t leaf_size);

  std::vector<Vec3> points_;
  std::vector<std::size_t> order_;
  std::vector<Node> nodes_;
};

/// Brute-force k nearest neighbors over N rows of `dim` values each.
NeighborTable knn_brute_force(std::span<const double> rows, std::size_t dim, std::size_t k);

NeighborTable knn_brute_force(const PointCloud& cloud, std::size_t k);

/// Brute-force k-NN with squared distances from the Gram expansion
/// ‖a‖² + ‖b‖² − 2a·b. Much faster for wide rows; distances carry rounding
/// error relative to knn_brute_force, so near-ties may order differently.
NeighborTable knn_gram(std::span<const double> rows, std::size_t dim, std::size_t k);

/// kd-tree backed for clouds of 64 points or more, brute force otherwise.
/// Throws GeometryError unless 1 ≤ k ≤ N−1.
NeighborTable knn(const PointCloud& cloud, std::size_t k);

/// Nearest point of `target` for every point of `source`: (index, dist²).
std::vector<KdTree::Hit> nearest_neighbors(const PointCloud& source, const PointCloud& target);

}  // namespace upcr::geom
