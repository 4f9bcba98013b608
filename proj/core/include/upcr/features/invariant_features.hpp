#pragma once

#include <array>
#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

#include "upcr/autodiff/tensor.hpp"
#include "upcr/geom/knn.hpp"
#include "upcr/geom/types.hpp"

namespace upcr::features {

using geom::PointCloud;
using geom::Vec3;

/// Pose-invariant descriptor selection. Combined kinds concatenate their
/// components in the listed order.
enum class FeatureKind {
  distance,
  ppf,
  spfh,
  pfh,
  distance_ppf,
  distance_spfh,
  distance_ppf_spfh,
};

std::string_view to_string(FeatureKind kind);
FeatureKind feature_kind_from_string(std::string_view name);

struct FeatureSpec {
  FeatureKind kind = FeatureKind::distance;
  std::size_t spfh_bins = 11;  // per angle; 3 sub-histograms
  std::size_t pfh_bins = 5;    // per angle; joint bins³ histogram

  bool needs_normals() const;
  /// Width of the per-neighbor feature vector fed to the embedding MLP.
  std::size_t dimension() const;

  bool operator==(const FeatureSpec&) const = default;
};

/// [D(x_ij, o), D(x_ij, x_i), D(o, x_i)].
std::array<double, 3> distance_feature(const Vec3& center, const Vec3& point, const Vec3& neighbor);

struct NormalEstimate {
  PointCloud cloud;                   // input points with unit normals
  std::vector<std::size_t> degenerate;  // indices whose neighborhood has rank < 2
};

/// PCA normals over each point and its k nearest neighbors, oriented away
/// from the cloud centroid.
NormalEstimate estimate_normals(const PointCloud& cloud, std::size_t k);

/// (∠(n1, d), ∠(n2, d), ∠(n1, n2), ‖d‖) with d = p2 − p1.
std::array<double, 4> ppf_feature(const Vec3& p1, const Vec3& n1, const Vec3& p2, const Vec3& n2);

/// Darboux-frame angles (α, φ, θ) for a source point with normal `ns` and a
/// target point with normal `nt`. False when the pair is degenerate.
bool darboux_angles(const Vec3& ps, const Vec3& ns, const Vec3& pt, const Vec3& nt,
                    std::array<double, 3>& out);

/// Three concatenated `bins`-bin histograms of (α, φ, θ) between point i and
/// each of its neighbors, each normalized to sum 1.
std::vector<double> spfh_feature(const PointCloud& cloud, std::span<const std::size_t> neighbors,
                                 std::size_t i, std::size_t bins = 11);
std::vector<double> spfh_feature(const PointCloud& cloud, std::size_t i, std::size_t k,
                                 std::size_t bins = 11);

/// Joint bins³ histogram of Darboux triplets over every pair of
/// {i} ∪ neighbors, normalized to sum 1.
std::vector<double> pfh_feature(const PointCloud& cloud, std::span<const std::size_t> neighbors,
                                std::size_t i, std::size_t bins = 5);
std::vector<double> pfh_feature(const PointCloud& cloud, std::size_t i, std::size_t k,
                                std::size_t bins = 5);

/// Per-edge invariant features for every (point, neighbor) pair of the
/// spatial k-NN graph: row i·k + j describes the j-th neighbor of point i.
struct EdgeFeatures {
  geom::NeighborTable graph;
  ad::Array values;  // [N·k × spec.dimension()]
  std::vector<std::size_t> degenerate_normals;
};

EdgeFeatures compute_edge_features(const PointCloud& cloud, const FeatureSpec& spec, std::size_t k);

/// Φ⁰: the shared MLP h_α (one linear layer + LeakyReLU) applied to every
/// edge feature, max-pooled over each point's k neighbors → [N × width].
ad::Tensor invariant_point_embed(ad::Tape& tape, const EdgeFeatures& edges, const ad::Tensor& weight,
                                 const ad::Tensor& bias, double slope);

}  // namespace upcr::features
