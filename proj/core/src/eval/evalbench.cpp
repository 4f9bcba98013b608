#include "upcr/eval/evalbench.hpp"

#include <Eigen/Dense>
#include <Eigen/SVD>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <numeric>
#include <stdexcept>

#include "upcr/geom/knn.hpp"
#include "upcr/geom/rotation.hpp"
#include "upcr/model/separation.hpp"

namespace upcr::eval {
namespace {

constexpr double kDeg = 180.0 / std::numbers::pi;

void check_lengths(std::size_t a, std::size_t b) {
  if (a != b)
    throw std::invalid_argument("got " + std::to_string(a) + " predictions for " + std::to_string(b) +
                                " ground truths");
  if (a == 0) throw std::invalid_argument("metrics need at least one sample");
}

ErrorPair summarize(std::span<const double> errors) {
  double sq = 0.0, abs = 0.0;
  for (double e : errors) {
    sq += e * e;
    abs += std::abs(e);
  }
  const double n = static_cast<double>(errors.size());
  return {std::sqrt(sq / n), abs / n};
}

double wrap_degrees(double d) {
  d = std::fmod(d, 360.0);
  if (d <= -180.0) d += 360.0;
  if (d > 180.0) d -= 360.0;
  return d;
}

struct Parts {
  bool distance = false, ppf = false, spfh = false, pfh = false;
};

Parts parts_of(features::FeatureKind kind) {
  using K = features::FeatureKind;
  switch (kind) {
    case K::distance: return {true, false, false, false};
    case K::ppf: return {false, true, false, false};
    case K::spfh: return {false, false, true, false};
    case K::pfh: return {false, false, false, true};
    case K::distance_ppf: return {true, true, false, false};
    case K::distance_spfh: return {true, false, true, false};
    case K::distance_ppf_spfh: return {true, true, true, false};
  }
  throw std::invalid_argument("unknown feature kind");
}

/// For every row of `a`, the index of the nearest row of `b` (ties to the lower index).
std::vector<std::size_t> nearest_rows(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  const Eigen::VectorXd an = a.rowwise().squaredNorm(), bn = b.rowwise().squaredNorm();
  const Eigen::MatrixXd cross = a * b.transpose();
  std::vector<std::size_t> out(static_cast<std::size_t>(a.rows()));
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    double best = INFINITY;
    for (Eigen::Index j = 0; j < b.rows(); ++j) {
      const double d = an[i] + bn[j] - 2.0 * cross(i, j);
      if (d < best) {
        best = d;
        out[static_cast<std::size_t>(i)] = static_cast<std::size_t>(j);
      }
    }
  }
  return out;
}

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

std::string join_tags(const Tags& tags) {
  std::string out;
  for (const auto& [k, v] : tags) {
    if (!out.empty()) out += ';';
    out += k + '=' + v;
  }
  return out;
}

}  // namespace

ErrorPair rotation_metrics(std::span<const Mat3> predictions, std::span<const Mat3> truths, RotationError mode) {
  check_lengths(predictions.size(), truths.size());
  std::vector<double> errors;
  errors.reserve(3 * predictions.size());
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    Vec3 e;
    if (mode == RotationError::relative) {
      e = geom::euler_from_matrix(truths[i].transpose() * predictions[i]) * kDeg;
    } else {
      e = (geom::euler_from_matrix(predictions[i]) - geom::euler_from_matrix(truths[i])) * kDeg;
      for (int a = 0; a < 3; ++a) e[a] = wrap_degrees(e[a]);
    }
    errors.insert(errors.end(), {e[0], e[1], e[2]});
  }
  return summarize(errors);
}

ErrorPair translation_metrics(std::span<const Vec3> predictions, std::span<const Vec3> truths) {
  check_lengths(predictions.size(), truths.size());
  std::vector<double> errors;
  errors.reserve(3 * predictions.size());
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    const Vec3 d = predictions[i] - truths[i];
    errors.insert(errors.end(), {d[0], d[1], d[2]});
  }
  return summarize(errors);
}

double se3_mean_error(std::span<const RigidTransform> predictions, std::span<const RigidTransform> truths) {
  check_lengths(predictions.size(), truths.size());
  double total = 0.0;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    const auto delta = truths[i].inverse() * predictions[i];
    const double c = std::clamp((delta.rotation.trace() - 1.0) / 2.0, -1.0, 1.0);
    total += std::acos(c) * kDeg + delta.translation.norm();
  }
  return total / static_cast<double>(predictions.size());
}

MetricReport metric_report(std::span<const RigidTransform> predictions, std::span<const RigidTransform> truths,
                           RotationError mode) {
  check_lengths(predictions.size(), truths.size());
  std::vector<Mat3> rp, rt;
  std::vector<Vec3> tp, tt;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    rp.push_back(predictions[i].rotation);
    rt.push_back(truths[i].rotation);
    tp.push_back(predictions[i].translation);
    tt.push_back(truths[i].translation);
  }
  MetricReport r;
  const auto rot = rotation_metrics(rp, rt, mode);
  const auto trans = translation_metrics(tp, tt);
  r.rmse_rot_deg = rot.rmse;
  r.mae_rot_deg = rot.mae;
  r.rmse_trans = trans.rmse;
  r.mae_trans = trans.mae;
  r.me_t = se3_mean_error(predictions, truths);
  r.samples = predictions.size();
  return r;
}

RigidTransform fit_rigid(std::span<const Vec3> from, std::span<const Vec3> to) {
  if (from.size() != to.size() || from.empty()) throw std::invalid_argument("fit_rigid needs paired, nonempty sets");
  Vec3 cf = Vec3::Zero(), ct = Vec3::Zero();
  for (std::size_t i = 0; i < from.size(); ++i) {
    cf += from[i];
    ct += to[i];
  }
  cf /= static_cast<double>(from.size());
  ct /= static_cast<double>(to.size());
  Mat3 h = Mat3::Zero();
  for (std::size_t i = 0; i < from.size(); ++i) h += (from[i] - cf) * (to[i] - ct).transpose();
  const Eigen::JacobiSVD<Mat3> svd(h, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Mat3 d = Mat3::Identity();
  d(2, 2) = (svd.matrixV() * svd.matrixU().transpose()).determinant() < 0 ? -1.0 : 1.0;
  RigidTransform T;
  T.rotation = svd.matrixV() * d * svd.matrixU().transpose();
  T.translation = ct - T.rotation * cf;
  return T;
}

IcpResult icp(const PointCloud& source, const PointCloud& target, const RigidTransform& init,
              const IcpOptions& options) {
  if (source.empty() || target.empty()) throw std::invalid_argument("icp needs nonempty clouds");
  if (!(options.trim >= 0.0 && options.trim < 1.0)) throw std::invalid_argument("trim must lie in [0, 1)");
  const geom::KdTree tree(target.points());
  const std::size_t n = source.size();
  const std::size_t keep = std::max<std::size_t>(3, n - static_cast<std::size_t>(options.trim * n));

  std::vector<Vec3> moved(n), from, to;
  std::vector<geom::KdTree::Hit> hits(n);
  auto correspond = [&](const RigidTransform& T) {
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      moved[i] = T.apply(source[i]);
      hits[i] = tree.nearest(moved[i]);
      total += std::sqrt(hits[i].dist2);
    }
    return total / static_cast<double>(n);
  };

  IcpResult best{init, correspond(init), 0};
  RigidTransform current = init;
  double previous = best.mean_distance;
  for (std::size_t it = 1; it <= options.max_iters; ++it) {
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    if (keep < n)
      std::nth_element(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(keep), order.end(),
                       [&](std::size_t a, std::size_t b) { return hits[a].dist2 < hits[b].dist2; });
    from.clear();
    to.clear();
    for (std::size_t t = 0; t < std::min(keep, n); ++t) {
      from.push_back(moved[order[t]]);
      to.push_back(target[hits[order[t]].index]);
    }
    current = fit_rigid(from, to) * current;
    const double mean = correspond(current);
    if (mean < best.mean_distance) best = {current, mean, it};
    best.iterations = it;
    if (std::abs(previous - mean) < options.tol) break;
    previous = mean;
  }
  return best;
}

std::vector<double> point_descriptors(const PointCloud& cloud, const features::FeatureSpec& spec, std::size_t k) {
  const auto parts = parts_of(spec.kind);
  const auto graph = geom::knn(cloud, k);
  PointCloud oriented = cloud;
  if (spec.needs_normals()) oriented = features::estimate_normals(cloud, std::max<std::size_t>(k, 3)).cloud;
  const Vec3 o = geom::centroid(cloud);
  std::vector<double> out;
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const auto row = graph.row(i);
    if (parts.distance) {
      std::array<double, 3> mean{};
      for (auto j : row) {
        const auto f = features::distance_feature(o, cloud[i], cloud[j]);
        for (int a = 0; a < 3; ++a) mean[a] += f[a] / static_cast<double>(k);
      }
      out.insert(out.end(), mean.begin(), mean.end());
    }
    if (parts.ppf) {
      std::array<double, 4> mean{};
      const auto& nn = oriented.normals();
      for (auto j : row) {
        if (!((cloud[j] - cloud[i]).norm() > 0.0)) continue;
        const auto f = features::ppf_feature(cloud[i], nn[i], cloud[j], nn[j]);
        for (int a = 0; a < 4; ++a) mean[a] += f[a] / static_cast<double>(k);
      }
      out.insert(out.end(), mean.begin(), mean.end());
    }
    if (parts.spfh) {
      const auto h = features::spfh_feature(oriented, row, i, spec.spfh_bins);
      out.insert(out.end(), h.begin(), h.end());
    }
    if (parts.pfh) {
      const auto h = features::pfh_feature(oriented, row, i, spec.pfh_bins);
      out.insert(out.end(), h.begin(), h.end());
    }
  }
  return out;
}

RigidTransform feature_match_init(const PointCloud& source, const PointCloud& target,
                                  const features::FeatureSpec& spec, std::size_t k) {
  const auto fs = point_descriptors(source, spec, k), ft = point_descriptors(target, spec, k);
  const auto dim = static_cast<Eigen::Index>(fs.size() / source.size());
  using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  const Eigen::MatrixXd a = Eigen::Map<const RowMajor>(fs.data(), static_cast<Eigen::Index>(source.size()), dim);
  const Eigen::MatrixXd b = Eigen::Map<const RowMajor>(ft.data(), static_cast<Eigen::Index>(target.size()), dim);
  const auto forward = nearest_rows(a, b), backward = nearest_rows(b, a);
  std::vector<Vec3> from, to;
  for (std::size_t i = 0; i < forward.size(); ++i)
    if (backward[forward[i]] == i) {
      from.push_back(source[i]);
      to.push_back(target[forward[i]]);
    }
  if (from.size() < 3)
    throw std::runtime_error("only " + std::to_string(from.size()) + " mutual feature matches; need 3");
  return fit_rigid(from, to);
}

std::vector<RigidTransform> predict(const model::ModelParams& params, std::span<const data::DatasetSample> samples) {
  std::vector<RigidTransform> out;
  out.reserve(samples.size());
  for (const auto& s : samples) out.push_back(model::register_pair(s.source, s.target, params).transform);
  return out;
}

std::vector<RigidTransform> ground_truths(std::span<const data::DatasetSample> samples) {
  std::vector<RigidTransform> out;
  out.reserve(samples.size());
  for (const auto& s : samples) out.push_back(s.gt);
  return out;
}

std::vector<RigidTransform> predict_icp(std::span<const data::DatasetSample> samples, const IcpOptions& options,
                                        const features::FeatureSpec* init_features) {
  std::vector<RigidTransform> out;
  out.reserve(samples.size());
  for (const auto& s : samples) {
    RigidTransform init;
    if (init_features) {
      try {
        init = feature_match_init(s.source, s.target, *init_features);
      } catch (const std::runtime_error&) {
        init = RigidTransform::identity();
      }
    }
    out.push_back(icp(s.source, s.target, init, options).transform);
  }
  return out;
}

Tags protocol_tags(const data::Protocol& protocol) {
  Tags t{{"setting", std::string(data::to_string(protocol.setting))},
         {"pairing", std::string(data::to_string(protocol.pairing))},
         {"pose", std::string(data::to_string(protocol.pose_regime))},
         {"points", std::to_string(protocol.points)}};
  if (protocol.noise) t.emplace_back("noise_sigma", format_double(protocol.noise->sigma));
  return t;
}

PointCloud replace_with_outliers(const PointCloud& cloud, double ratio_percent, Rng& rng) {
  if (!(ratio_percent >= 0.0 && ratio_percent < 100.0)) throw std::invalid_argument("outlier ratio must lie in [0, 100)");
  const std::size_t n = cloud.size();
  const auto count = static_cast<std::size_t>(std::floor(ratio_percent * static_cast<double>(n) / 100.0));
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::vector<Vec3> pts = cloud.points();
  for (std::size_t t = 0; t < count; ++t) {
    std::swap(order[t], order[t + rng.below(n - t)]);
    Vec3 p;
    do p = Vec3(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1));
    while (p.squaredNorm() > 1.0);
    pts[order[t]] = p;
  }
  return PointCloud(std::move(pts));
}

std::vector<SweepRow> outlier_sweep(const model::ModelParams& params, std::span<const data::DatasetSample> base,
                                    std::span<const double> ratios, std::uint64_t seed,
                                    const IcpOptions& icp_options) {
  const auto truths = ground_truths(base);
  std::vector<SweepRow> rows;
  for (double ratio : ratios) {
    Rng rng(seed);
    std::vector<data::DatasetSample> corrupted(base.begin(), base.end());
    for (auto& s : corrupted) {
      s.source = replace_with_outliers(s.source, ratio, rng);
      s.target = replace_with_outliers(s.target, ratio, rng);
    }
    SweepRow row{ratio, metric_report(predict(params, corrupted), truths),
                 metric_report(predict_icp(corrupted, icp_options), truths)};
    Tags tags = base.empty() ? Tags{} : protocol_tags(base.front().protocol);
    tags.emplace_back("outlier_percent", format_double(ratio));
    row.model.tags = tags;
    row.icp.tags = tags;
    rows.push_back(std::move(row));
  }
  return rows;
}

std::vector<std::pair<std::string, bool>> monotone_tags(std::span<const SweepRow> rows) {
  std::vector<std::pair<std::string, bool>> out;
  const std::pair<const char*, double MetricReport::*> fields[] = {
      {"rmse_rot_deg", &MetricReport::rmse_rot_deg}, {"mae_rot_deg", &MetricReport::mae_rot_deg},
      {"rmse_trans", &MetricReport::rmse_trans},     {"mae_trans", &MetricReport::mae_trans},
      {"me_t", &MetricReport::me_t}};
  for (const auto* which : {"model", "icp"}) {
    const bool is_model = std::string_view(which) == "model";
    for (const auto& [name, field] : fields) {
      bool monotone = true;
      for (std::size_t i = 1; i < rows.size(); ++i) {
        const auto& prev = is_model ? rows[i - 1].model : rows[i - 1].icp;
        const auto& cur = is_model ? rows[i].model : rows[i].icp;
        if (cur.*field < prev.*field) monotone = false;
      }
      out.emplace_back(std::string(which) + "." + name, monotone);
    }
  }
  return out;
}

TimingReport time_calls(const std::function<void()>& call, std::size_t repetitions) {
  if (repetitions < 3) throw std::invalid_argument("timing needs at least 3 repetitions");
  call();
  std::vector<double> ms;
  for (std::size_t r = 0; r < repetitions; ++r) {
    const auto t0 = std::chrono::steady_clock::now();
    call();
    ms.push_back(std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count());
  }
  const double mean = std::accumulate(ms.begin(), ms.end(), 0.0) / static_cast<double>(ms.size());
  double var = 0.0;
  for (double v : ms) var += (v - mean) * (v - mean);
  return {mean, std::sqrt(var / static_cast<double>(ms.size() - 1)), repetitions};
}

namespace {

std::pair<PointCloud, PointCloud> timing_pair(std::size_t n_points, std::uint64_t seed) {
  Rng rng(seed);
  const auto source = data::synth_shape(rng.below(data::kCategoryCount), n_points, rng);
  const auto T = data::sample_transform(data::PoseRegime::modelnet_style, rng);
  return {source, geom::apply_transform(T, source)};
}

}  // namespace

TimingReport time_registration(const model::ModelParams& params, std::size_t n_points, std::size_t repetitions,
                               std::uint64_t seed) {
  const auto [source, target] = timing_pair(n_points, seed);
  return time_calls([&] { model::register_pair(source, target, params); }, repetitions);
}

TimingReport time_icp(std::size_t n_points, std::size_t repetitions, std::uint64_t seed, const IcpOptions& options) {
  const auto [source, target] = timing_pair(n_points, seed);
  return time_calls([&] { icp(source, target, RigidTransform::identity(), options); }, repetitions);
}

std::string metrics_csv(std::span<const LabeledReport> rows) {
  std::string out = "method,samples,rmse_rot_deg,mae_rot_deg,rmse_trans,mae_trans,me_t,tags\n";
  for (const auto& [label, r] : rows) {
    out += label + ',' + std::to_string(r.samples) + ',' + format_double(r.rmse_rot_deg) + ',' +
           format_double(r.mae_rot_deg) + ',' + format_double(r.rmse_trans) + ',' + format_double(r.mae_trans) +
           ',' + format_double(r.me_t) + ',' + join_tags(r.tags) + '\n';
  }
  return out;
}

std::string metrics_table(std::span<const LabeledReport> rows) {
  std::size_t width = 6;
  for (const auto& row : rows) width = std::max(width, row.label.size());
  char buf[256];
  std::snprintf(buf, sizeof buf, "%-*s %7s %12s %11s %10s %9s %9s\n", static_cast<int>(width), "method", "n",
                "RMSE(R) deg", "MAE(R) deg", "RMSE(t)", "MAE(t)", "ME(T)");
  std::string out = buf;
  for (const auto& [label, r] : rows) {
    std::snprintf(buf, sizeof buf, "%-*s %7zu %12.4f %11.4f %10.5f %9.5f %9.4f\n", static_cast<int>(width),
                  label.c_str(), r.samples, r.rmse_rot_deg, r.mae_rot_deg, r.rmse_trans, r.mae_trans, r.me_t);
    out += buf;
  }
  return out;
}

std::string sweep_csv(std::span<const SweepRow> rows) {
  std::string out =
      "outlier_percent,model_rmse_rot_deg,model_mae_rot_deg,model_rmse_trans,model_mae_trans,model_me_t,"
      "icp_rmse_rot_deg,icp_mae_rot_deg,icp_rmse_trans,icp_mae_trans,icp_me_t\n";
  for (const auto& row : rows) {
    out += format_double(row.ratio);
    for (const auto* r : {&row.model, &row.icp})
      for (double v : {r->rmse_rot_deg, r->mae_rot_deg, r->rmse_trans, r->mae_trans, r->me_t})
        out += ',' + format_double(v);
    out += '\n';
  }
  return out;
}

std::string sweep_table(std::span<const SweepRow> rows) {
  std::vector<LabeledReport> labeled;
  for (const auto& row : rows) {
    labeled.push_back({"model@" + format_double(row.ratio) + "%", row.model});
    labeled.push_back({"icp@" + format_double(row.ratio) + "%", row.icp});
  }
  std::string out = metrics_table(labeled);
  out += "monotone degradation:";
  for (const auto& [name, monotone] : monotone_tags(rows)) out += ' ' + name + '=' + (monotone ? "yes" : "no");
  out += '\n';
  return out;
}

}  // namespace upcr::eval
