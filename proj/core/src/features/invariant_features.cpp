#include "upcr/features/invariant_features.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

#include "upcr/autodiff/ops.hpp"

namespace upcr::features {
namespace {

constexpr double kPi = std::numbers::pi;

double angle_between(const Vec3& a, const Vec3& b) {
  return std::atan2(a.cross(b).norm(), a.dot(b));
}

std::size_t bin_of(double value, double lo, double hi, std::size_t bins) {
  const double t = (value - lo) / (hi - lo) * static_cast<double>(bins);
  if (!(t > 0.0)) return 0;
  return std::min(static_cast<std::size_t>(t), bins - 1);
}

void normalize(std::span<double> h) {
  double s = 0.0;
  for (double v : h) s += v;
  if (s > 0.0)
    for (double& v : h) v /= s;
}

}  // namespace

std::string_view to_string(FeatureKind kind) {
  switch (kind) {
    case FeatureKind::distance: return "distance";
    case FeatureKind::ppf: return "ppf";
    case FeatureKind::spfh: return "spfh";
    case FeatureKind::pfh: return "pfh";
    case FeatureKind::distance_ppf: return "distance+ppf";
    case FeatureKind::distance_spfh: return "distance+spfh";
    case FeatureKind::distance_ppf_spfh: return "distance+ppf+spfh";
  }
  return "unknown";
}

FeatureKind feature_kind_from_string(std::string_view name) {
  for (auto k : {FeatureKind::distance, FeatureKind::ppf, FeatureKind::spfh, FeatureKind::pfh,
                 FeatureKind::distance_ppf, FeatureKind::distance_spfh, FeatureKind::distance_ppf_spfh}) {
    if (to_string(k) == name) return k;
  }
  throw std::invalid_argument("unknown feature kind '" + std::string(name) + "'");
}

namespace {

struct Components {
  bool distance = false, ppf = false, spfh = false, pfh = false;
};

Components components(FeatureKind kind) {
  switch (kind) {
    case FeatureKind::distance: return {true, false, false, false};
    case FeatureKind::ppf: return {false, true, false, false};
    case FeatureKind::spfh: return {false, false, true, false};
    case FeatureKind::pfh: return {false, false, false, true};
    case FeatureKind::distance_ppf: return {true, true, false, false};
    case FeatureKind::distance_spfh: return {true, false, true, false};
    case FeatureKind::distance_ppf_spfh: return {true, true, true, false};
  }
  return {};
}

}  // namespace

bool FeatureSpec::needs_normals() const {
  const auto c = components(kind);
  return c.ppf || c.spfh || c.pfh;
}

std::size_t FeatureSpec::dimension() const {
  const auto c = components(kind);
  return (c.distance ? 3 : 0) + (c.ppf ? 4 : 0) + (c.spfh ? 3 * spfh_bins : 0) +
         (c.pfh ? pfh_bins * pfh_bins * pfh_bins : 0);
}

std::array<double, 3> distance_feature(const Vec3& center, const Vec3& point, const Vec3& neighbor) {
  return {(neighbor - center).norm(), (neighbor - point).norm(), (center - point).norm()};
}

NormalEstimate estimate_normals(const PointCloud& cloud, std::size_t k) {
  if (k < 3) throw std::invalid_argument("normal estimation needs k >= 3");
  const auto graph = geom::knn(cloud, k);
  const Vec3 c = geom::centroid(cloud);
  std::vector<Vec3> normals(cloud.size());
  std::vector<std::size_t> degenerate;
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    Vec3 mean = cloud[i];
    for (auto j : graph.row(i)) mean += cloud[j];
    mean /= static_cast<double>(k + 1);
    Eigen::Matrix3d cov = (cloud[i] - mean) * (cloud[i] - mean).transpose();
    for (auto j : graph.row(i)) cov += (cloud[j] - mean) * (cloud[j] - mean).transpose();
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> eig(cov);
    const Vec3 lambda = eig.eigenvalues();  // ascending
    if (!(lambda[1] > 1e-12 * std::max(lambda[2], 1e-300))) {
      normals[i] = Vec3(0, 0, 1);
      degenerate.push_back(i);
      continue;
    }
    Vec3 n = eig.eigenvectors().col(0).normalized();
    const double facing = n.dot(cloud[i] - c);
    if (std::abs(facing) > 1e-12) {
      if (facing < 0) n = -n;
    } else if (n.z() != 0.0) {
      if (n.z() < 0) n = -n;
    } else if (n.y() != 0.0) {
      if (n.y() < 0) n = -n;
    } else if (n.x() < 0) {
      n = -n;
    }
    normals[i] = n;
  }
  return {cloud.without_normals().with_normals(std::move(normals)), std::move(degenerate)};
}

std::array<double, 4> ppf_feature(const Vec3& p1, const Vec3& n1, const Vec3& p2, const Vec3& n2) {
  const Vec3 d = p2 - p1;
  const double len = d.norm();
  if (!(len > 0.0)) throw std::invalid_argument("ppf of coincident points");
  return {angle_between(n1, d), angle_between(n2, d), angle_between(n1, n2), len};
}

bool darboux_angles(const Vec3& ps, const Vec3& ns, const Vec3& pt, const Vec3& nt,
                    std::array<double, 3>& out) {
  const Vec3 d = pt - ps;
  const double len = d.norm();
  if (!(len > 0.0)) return false;
  const Vec3 dir = d / len;
  const Vec3& u = ns;
  Vec3 v = dir.cross(u);
  const double vn = v.norm();
  if (!(vn > 1e-12)) return false;
  v /= vn;
  const Vec3 w = u.cross(v);
  out = {v.dot(nt), u.dot(dir), std::atan2(w.dot(nt), u.dot(nt))};
  return true;
}

std::vector<double> spfh_feature(const PointCloud& cloud, std::span<const std::size_t> neighbors,
                                 std::size_t i, std::size_t bins) {
  const auto& normals = cloud.normals();
  std::vector<double> h(3 * bins, 0.0);
  for (auto j : neighbors) {
    std::array<double, 3> a{};
    if (!darboux_angles(cloud[i], normals[i], cloud[j], normals[j], a)) continue;
    h[bin_of(a[0], -1.0, 1.0, bins)] += 1.0;
    h[bins + bin_of(a[1], -1.0, 1.0, bins)] += 1.0;
    h[2 * bins + bin_of(a[2], -kPi, kPi, bins)] += 1.0;
  }
  for (std::size_t s = 0; s < 3; ++s) normalize(std::span<double>(h).subspan(s * bins, bins));
  return h;
}

std::vector<double> spfh_feature(const PointCloud& cloud, std::size_t i, std::size_t k, std::size_t bins) {
  const auto graph = geom::knn(cloud, k);
  return spfh_feature(cloud, graph.row(i), i, bins);
}

namespace {

bool tolerant_less(const std::array<double, 3>& a, const std::array<double, 3>& b) {
  for (std::size_t i = 0; i < 3; ++i)
    if (std::abs(a[i] - b[i]) > 1e-9) return a[i] < b[i];
  return false;
}

}  // namespace

std::vector<double> pfh_feature(const PointCloud& cloud, std::span<const std::size_t> neighbors,
                                std::size_t i, std::size_t bins) {
  const auto& normals = cloud.normals();
  std::vector<std::size_t> members{i};
  members.insert(members.end(), neighbors.begin(), neighbors.end());
  std::vector<double> h(bins * bins * bins, 0.0);
  for (std::size_t a = 0; a < members.size(); ++a) {
    for (std::size_t b = a + 1; b < members.size(); ++b) {
      std::size_t s = members[a], t = members[b];
      const Vec3 d = cloud[t] - cloud[s];
      const double len = d.norm();
      if (!(len > 0.0)) continue;
      // The source is the point whose normal makes the smaller angle with
      // the pair direction. Ties arise whenever two points share a
      // neighborhood and hence a normal; both orderings are then evaluated
      // and the larger angle triple kept, so neither pose nor point order
      // matters.
      const double cs = std::abs(normals[s].dot(d)) / len, ct = std::abs(normals[t].dot(d)) / len;
      std::array<double, 3> ang{};
      if (std::abs(cs - ct) > 1e-9) {
        if (ct > cs) std::swap(s, t);
        if (!darboux_angles(cloud[s], normals[s], cloud[t], normals[t], ang)) continue;
      } else {
        std::array<double, 3> fwd{}, rev{};
        const bool has_fwd = darboux_angles(cloud[s], normals[s], cloud[t], normals[t], fwd);
        const bool has_rev = darboux_angles(cloud[t], normals[t], cloud[s], normals[s], rev);
        if (!has_fwd && !has_rev) continue;
        ang = !has_rev || (has_fwd && !tolerant_less(fwd, rev)) ? fwd : rev;
      }
      const std::size_t idx = (bin_of(ang[0], -1.0, 1.0, bins) * bins + bin_of(ang[1], -1.0, 1.0, bins)) * bins +
                              bin_of(ang[2], -kPi, kPi, bins);
      h[idx] += 1.0;
    }
  }
  normalize(h);
  return h;
}

std::vector<double> pfh_feature(const PointCloud& cloud, std::size_t i, std::size_t k, std::size_t bins) {
  const auto graph = geom::knn(cloud, k);
  return pfh_feature(cloud, graph.row(i), i, bins);
}

EdgeFeatures compute_edge_features(const PointCloud& cloud, const FeatureSpec& spec, std::size_t k) {
  EdgeFeatures out;
  out.graph = geom::knn(cloud, k);
  const std::size_t n = cloud.size(), dim = spec.dimension();
  const auto parts = components(spec.kind);

  PointCloud oriented = cloud;
  if (spec.needs_normals()) {
    auto est = estimate_normals(cloud, std::max<std::size_t>(k, 3));
    oriented = std::move(est.cloud);
    out.degenerate_normals = std::move(est.degenerate);
  }
  // Histogram descriptors are per point; each edge carries its neighbor's.
  std::vector<std::vector<double>> spfh, pfh;
  if (parts.spfh) {
    spfh.resize(n);
    for (std::size_t i = 0; i < n; ++i) spfh[i] = spfh_feature(oriented, out.graph.row(i), i, spec.spfh_bins);
  }
  if (parts.pfh) {
    pfh.resize(n);
    for (std::size_t i = 0; i < n; ++i) pfh[i] = pfh_feature(oriented, out.graph.row(i), i, spec.pfh_bins);
  }

  const Vec3 o = geom::centroid(cloud);
  std::vector<double> values(n * k * dim);
  for (std::size_t i = 0; i < n; ++i) {
    const auto row = out.graph.row(i);
    for (std::size_t t = 0; t < k; ++t) {
      const std::size_t j = row[t];
      double* dst = values.data() + (i * k + t) * dim;
      if (parts.distance) {
        const auto f = distance_feature(o, cloud[i], cloud[j]);
        dst = std::copy(f.begin(), f.end(), dst);
      }
      if (parts.ppf) {
        const auto& nn = oriented.normals();
        std::array<double, 4> f{0, 0, 0, 0};
        if ((cloud[j] - cloud[i]).norm() > 0.0) f = ppf_feature(cloud[i], nn[i], cloud[j], nn[j]);
        dst = std::copy(f.begin(), f.end(), dst);
      }
      if (parts.spfh) dst = std::copy(spfh[j].begin(), spfh[j].end(), dst);
      if (parts.pfh) dst = std::copy(pfh[j].begin(), pfh[j].end(), dst);
    }
  }
  out.values = ad::Array({n * k, dim}, std::move(values));
  return out;
}

ad::Tensor invariant_point_embed(ad::Tape& tape, const EdgeFeatures& edges, const ad::Tensor& weight,
                                 const ad::Tensor& bias, double slope) {
  auto phi = tape.constant(edges.values);
  auto h = ad::leaky_relu(ad::add_row(ad::matmul(phi, weight), bias), slope);
  return ad::group_max(h, edges.graph.k);
}

}  // namespace upcr::features
