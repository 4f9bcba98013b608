#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <random>

#include "test_support.hpp"
#include "upcr/autodiff/ops.hpp"
#include "upcr/features/invariant_features.hpp"

namespace upcr::features {
namespace {

using geom::PointCloud;
using geom::RigidTransform;
using upcr::testing::random_cloud;
using upcr::testing::random_transform;

constexpr double kPi = std::numbers::pi;

/// Random cloud with random unit normals.
PointCloud random_oriented_cloud(std::mt19937_64& gen, std::size_t n) {
  std::normal_distribution<double> g(0.0, 1.0);
  const auto base = random_cloud(gen, n);
  std::vector<Vec3> normals(n);
  for (auto& v : normals) v = Vec3(g(gen), g(gen), g(gen)).normalized();
  return base.with_normals(std::move(normals));
}

double max_diff(std::span<const double> a, std::span<const double> b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

TEST(DistanceFeature, Examples) {
  const auto f = distance_feature(Vec3(0, 0, 0), Vec3(1, 0, 0), Vec3(0, 1, 0));
  EXPECT_DOUBLE_EQ(f[0], 1.0);
  EXPECT_DOUBLE_EQ(f[1], std::sqrt(2.0));
  EXPECT_DOUBLE_EQ(f[2], 1.0);
  const auto c = distance_feature(Vec3(1, 2, 3), Vec3(-1, 0, 4), Vec3(-1, 0, 4));
  EXPECT_EQ(c[1], 0.0);
  EXPECT_EQ(c[0], c[2]);
}

TEST(DistanceFeature, RigidAndReflectionInvariant) {
  std::mt19937_64 gen(1);
  std::uniform_real_distribution<double> u(-3, 3);
  for (int trial = 0; trial < 200; ++trial) {
    const Vec3 o(u(gen), u(gen), u(gen)), x(u(gen), u(gen), u(gen)), y(u(gen), u(gen), u(gen));
    const auto T = random_transform(gen);
    const auto a = distance_feature(o, x, y);
    const auto b = distance_feature(T.apply(o), T.apply(x), T.apply(y));
    EXPECT_LE(max_diff(a, b), 1e-9);
    const geom::Mat3 mirror = geom::Vec3(-1, 1, 1).asDiagonal();
    const auto r = distance_feature(mirror * o, mirror * x, mirror * y);
    EXPECT_LE(max_diff(a, r), 1e-12);
  }
}

TEST(EstimateNormals, PlanarGridIsConsistent) {
  std::vector<Vec3> pts;
  for (int i = 0; i < 8; ++i)
    for (int j = 0; j < 8; ++j) pts.emplace_back(0.1 * i, 0.1 * j, 0.0);
  const auto est = estimate_normals(PointCloud(pts), 6);
  EXPECT_TRUE(est.degenerate.empty());
  for (const auto& n : est.cloud.normals()) {
    EXPECT_NEAR(std::abs(n.z()), 1.0, 1e-12);
    EXPECT_EQ(n.z() > 0, est.cloud.normals()[0].z() > 0);
  }
}

TEST(EstimateNormals, SphereNormalsAreRadial) {
  std::mt19937_64 gen(2);
  std::normal_distribution<double> g(0.0, 1.0);
  std::vector<Vec3> pts(500);
  for (auto& p : pts) p = Vec3(g(gen), g(gen), g(gen)).normalized();
  const auto est = estimate_normals(PointCloud(pts), 8);
  for (std::size_t i = 0; i < pts.size(); ++i) {
    const double cosine = est.cloud.normals()[i].dot(pts[i]);
    EXPECT_GE(cosine, std::cos(15.0 * kPi / 180.0)) << "point " << i;
  }
}

TEST(EstimateNormals, CollinearPointsAreFlagged) {
  std::vector<Vec3> pts;
  for (int i = 0; i < 10; ++i) pts.emplace_back(0.3 * i, 0.0, 0.0);
  const auto est = estimate_normals(PointCloud(pts), 4);
  EXPECT_EQ(est.degenerate.size(), pts.size());
  for (const auto& n : est.cloud.normals()) EXPECT_EQ(n, Vec3(0, 0, 1));
  EXPECT_THROW(estimate_normals(PointCloud(pts), 2), std::invalid_argument);
}

TEST(Ppf, Examples) {
  const auto f = ppf_feature(Vec3(0, 0, 0), Vec3(0, 0, 1), Vec3(1, 0, 0), Vec3(0, 0, 1));
  EXPECT_NEAR(f[0], kPi / 2, 1e-15);
  EXPECT_NEAR(f[1], kPi / 2, 1e-15);
  EXPECT_EQ(f[2], 0.0);
  EXPECT_EQ(f[3], 1.0);
  const auto anti = ppf_feature(Vec3(0, 0, 0), Vec3(0, 0, 1), Vec3(2, 0, 0), Vec3(0, 0, -1));
  EXPECT_NEAR(anti[2], kPi, 1e-15);
  EXPECT_THROW(ppf_feature(Vec3(1, 1, 1), Vec3(0, 0, 1), Vec3(1, 1, 1), Vec3(0, 1, 0)),
               std::invalid_argument);
}

TEST(Ppf, RigidInvariance) {
  std::mt19937_64 gen(3);
  for (int trial = 0; trial < 200; ++trial) {
    const auto c = random_oriented_cloud(gen, 2);
    const auto T = random_transform(gen);
    const auto m = geom::apply_transform(T, c);
    const auto a = ppf_feature(c[0], c.normals()[0], c[1], c.normals()[1]);
    const auto b = ppf_feature(m[0], m.normals()[0], m[1], m.normals()[1]);
    EXPECT_LE(max_diff(a, b), 1e-9);
    for (int i = 0; i < 3; ++i) {
      EXPECT_GE(a[i], 0.0);
      EXPECT_LE(a[i], kPi);
    }
  }
}

TEST(Spfh, ParallelCoplanarMassesAtZero) {
  std::vector<Vec3> pts{{0, 0, 0}, {1, 0, 0}, {0, 1, 0}, {-1, 0.5, 0}, {0.3, -1, 0}};
  std::vector<Vec3> normals(pts.size(), Vec3(0, 0, 1));
  const PointCloud c(pts, normals);
  const auto h = spfh_feature(c, 0, 4);
  ASSERT_EQ(h.size(), 33u);
  EXPECT_EQ(h[5], 1.0);       // α = 0
  EXPECT_EQ(h[11 + 5], 1.0);  // φ = 0
  EXPECT_EQ(h[22 + 5], 1.0);  // θ = 0
}

TEST(Spfh, NormalizedAndInvariant) {
  std::mt19937_64 gen(4);
  for (int trial = 0; trial < 50; ++trial) {
    const auto c = random_oriented_cloud(gen, 30);
    const auto m = geom::apply_transform(random_transform(gen), c);
    for (std::size_t i = 0; i < 30; i += 7) {
      const auto a = spfh_feature(c, i, 10), b = spfh_feature(m, i, 10);
      for (std::size_t s = 0; s < 3; ++s) {
        const double total = std::accumulate(a.begin() + s * 11, a.begin() + (s + 1) * 11, 0.0);
        EXPECT_NEAR(total, 1.0, 1e-9);
      }
      for (double v : a) EXPECT_GE(v, 0.0);
      EXPECT_LE(max_diff(a, b), 1e-9);
    }
  }
}

TEST(Spfh, CoincidentNeighborIsSkipped) {
  std::vector<Vec3> pts{{0, 0, 0}, {0, 0, 0}, {1, 0, 0}};
  const PointCloud c(pts, std::vector<Vec3>(3, Vec3(0, 0, 1)));
  const std::vector<std::size_t> nbrs{1, 2};
  const auto h = spfh_feature(c, nbrs, 0);
  EXPECT_EQ(h[5], 1.0);
}

TEST(Pfh, TwoPointNeighborhoodHasSingleBin) {
  std::mt19937_64 gen(5);
  const auto c = random_oriented_cloud(gen, 2);
  const auto h = pfh_feature(c, 0, 1);
  ASSERT_EQ(h.size(), 125u);
  EXPECT_EQ(std::count(h.begin(), h.end(), 1.0), 1);
  EXPECT_EQ(std::count(h.begin(), h.end(), 0.0), 124);
}

TEST(Pfh, NormalizedInvariantAndOrderFree) {
  std::mt19937_64 gen(6);
  for (int trial = 0; trial < 30; ++trial) {
    const auto c = random_oriented_cloud(gen, 25);
    const auto m = geom::apply_transform(random_transform(gen), c);
    std::vector<std::size_t> nbrs(12);
    std::iota(nbrs.begin(), nbrs.end(), 1);
    const auto a = pfh_feature(c, nbrs, 0), b = pfh_feature(m, nbrs, 0);
    EXPECT_NEAR(std::accumulate(a.begin(), a.end(), 0.0), 1.0, 1e-9);
    EXPECT_LE(max_diff(a, b), 1e-9);
    std::shuffle(nbrs.begin(), nbrs.end(), gen);
    EXPECT_EQ(pfh_feature(c, nbrs, 0), a);
  }
}

TEST(FeatureSpec, DimensionsAndNames) {
  EXPECT_EQ((FeatureSpec{FeatureKind::distance}).dimension(), 3u);
  EXPECT_EQ((FeatureSpec{FeatureKind::ppf}).dimension(), 4u);
  EXPECT_EQ((FeatureSpec{FeatureKind::spfh}).dimension(), 33u);
  EXPECT_EQ((FeatureSpec{FeatureKind::pfh}).dimension(), 125u);
  EXPECT_EQ((FeatureSpec{FeatureKind::distance_ppf_spfh}).dimension(), 40u);
  EXPECT_FALSE((FeatureSpec{FeatureKind::distance}).needs_normals());
  EXPECT_EQ(feature_kind_from_string("distance+ppf"), FeatureKind::distance_ppf);
  EXPECT_THROW(feature_kind_from_string("fpfh"), std::invalid_argument);
}

TEST(EdgeFeatures, CombinedKindsConcatenateInOrder) {
  std::mt19937_64 gen(7);
  const auto c = random_cloud(gen, 40);
  const auto d = compute_edge_features(c, {FeatureKind::distance}, 6);
  const auto p = compute_edge_features(c, {FeatureKind::ppf}, 6);
  const auto s = compute_edge_features(c, {FeatureKind::spfh}, 6);
  const auto all = compute_edge_features(c, {FeatureKind::distance_ppf_spfh}, 6);
  ASSERT_EQ(all.values.shape, (ad::Shape{240, 40}));
  for (std::size_t r = 0; r < 240; ++r) {
    for (std::size_t j = 0; j < 3; ++j) EXPECT_EQ(all.values.at(r, j), d.values.at(r, j));
    for (std::size_t j = 0; j < 4; ++j) EXPECT_EQ(all.values.at(r, 3 + j), p.values.at(r, j));
    for (std::size_t j = 0; j < 33; ++j) EXPECT_EQ(all.values.at(r, 7 + j), s.values.at(r, j));
  }
}

class FeatureInvariance : public ::testing::TestWithParam<FeatureKind> {};

TEST_P(FeatureInvariance, EdgeFeaturesSurviveRigidMotion) {
  std::mt19937_64 gen(8);
  const FeatureSpec spec{GetParam()};
  const auto cloud = random_cloud(gen, 64);
  const auto ref = compute_edge_features(cloud, spec, 8);
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const auto moved = compute_edge_features(geom::apply_transform(random_transform(gen), cloud), spec, 8);
    ASSERT_EQ(moved.graph.index, ref.graph.index);
    worst = std::max(worst, max_diff(ref.values.data, moved.values.data));
  }
  EXPECT_LE(worst, 1e-6) << to_string(spec.kind);
}

INSTANTIATE_TEST_SUITE_P(AllKinds, FeatureInvariance,
                         ::testing::Values(FeatureKind::distance, FeatureKind::ppf, FeatureKind::spfh,
                                           FeatureKind::pfh, FeatureKind::distance_ppf,
                                           FeatureKind::distance_spfh, FeatureKind::distance_ppf_spfh));

ad::Array identity(std::size_t n) {
  ad::Array a({n, n}, 0.0);
  for (std::size_t i = 0; i < n; ++i) a.at(i, i) = 1.0;
  return a;
}

TEST(InvariantEmbed, SingletonPoolIsMlpOfOnlyNeighbor) {
  std::mt19937_64 gen(9);
  const auto c = random_cloud(gen, 10);
  const auto edges = compute_edge_features(c, {FeatureKind::distance}, 1);
  ad::Tape tape;
  const auto w = tape.constant(upcr::testing::random_array(gen, {3, 5}));
  const auto b = tape.constant(upcr::testing::random_array(gen, {5}));
  const auto out = invariant_point_embed(tape, edges, w, b, 0.2);
  const auto direct = ad::leaky_relu(ad::add_row(ad::matmul(tape.constant(edges.values), w), b), 0.2);
  EXPECT_EQ(out.value().data, direct.value().data);
}

TEST(InvariantEmbed, SymmetricCollinearPointsShareRows) {
  std::vector<Vec3> pts{{-1.5, 0, 0}, {-0.5, 0, 0}, {0.5, 0, 0}, {1.5, 0, 0}};
  const auto edges = compute_edge_features(PointCloud(pts), {FeatureKind::distance}, 2);
  ad::Tape tape;
  const auto out = invariant_point_embed(tape, edges, tape.constant(identity(3)),
                                         tape.constant(ad::Array({3}, 0.0)), 0.2);
  for (std::size_t j = 0; j < 3; ++j) {
    EXPECT_EQ(out.value().at(0, j), out.value().at(3, j));
    EXPECT_EQ(out.value().at(1, j), out.value().at(2, j));
  }
}

TEST(InvariantEmbed, RigidInvariantAndPermutationEquivariant) {
  std::mt19937_64 gen(10);
  const auto cloud = random_cloud(gen, 48);
  const auto w = upcr::testing::random_array(gen, {3, 8}), b = upcr::testing::random_array(gen, {8});
  auto embed = [&](const PointCloud& c) {
    ad::Tape tape;
    const auto edges = compute_edge_features(c, {FeatureKind::distance}, 6);
    return invariant_point_embed(tape, edges, tape.constant(w), tape.constant(b), 0.2).value();
  };
  const auto ref = embed(cloud);
  for (int trial = 0; trial < 20; ++trial) {
    const auto moved = embed(geom::apply_transform(random_transform(gen), cloud));
    EXPECT_LE(max_diff(ref.data, moved.data), 1e-6);
  }
  std::vector<std::size_t> perm(48);
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), gen);
  std::vector<Vec3> shuffled(48);
  for (std::size_t i = 0; i < 48; ++i) shuffled[i] = cloud[perm[i]];
  const auto out = embed(PointCloud(shuffled));
  for (std::size_t i = 0; i < 48; ++i)
    for (std::size_t j = 0; j < 8; ++j) EXPECT_NEAR(out.at(i, j), ref.at(perm[i], j), 1e-12);
}

}  // namespace
}  // namespace upcr::features
