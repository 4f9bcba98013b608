// Acceptance harness: one PASS/FAIL line per criterion.
//
//   acceptance [--criterion N]... [--cache DIR] [--fresh]
//
// Without --criterion every criterion runs. Trained desk-scale models are
// cached in DIR (default: ./acceptance_cache) so criteria 6, 7 and 9 share
// runs; --fresh retrains. Exit status is nonzero when any selected
// criterion fails.

#include <Eigen/Geometry>
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <numbers>
#include <set>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "upcr/autodiff/grad_check.hpp"
#include "upcr/autodiff/ops.hpp"
#include "upcr/data/datagen.hpp"
#include "upcr/eval/evalbench.hpp"
#include "upcr/features/invariant_features.hpp"
#include "upcr/geom/chamfer.hpp"
#include "upcr/geom/rotation.hpp"
#include "upcr/model/encoder.hpp"
#include "upcr/model/separation.hpp"
#include "upcr/training/training.hpp"

namespace {

using namespace upcr;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

constexpr double kDeg = 180.0 / std::numbers::pi;

struct Verdict {
  bool pass = true;
  std::string detail;

  void check(bool ok, const std::string& what) {
    if (!ok) pass = false;
    if (!detail.empty()) detail += "; ";
    detail += what + (ok ? "" : " [FAILED]");
  }
};

std::string fmt(const char* pattern, double a, double b = 0.0, double c = 0.0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, pattern, a, b, c);
  return buf;
}

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

geom::Mat3 axis_rotation(Rng& rng, double angle) {
  geom::Vec3 axis(rng.normal(), rng.normal(), rng.normal());
  return Eigen::AngleAxisd(angle, axis.normalized()).toRotationMatrix();
}

geom::RigidTransform random_motion(Rng& rng, double max_angle, double max_translation) {
  geom::RigidTransform T;
  T.rotation = axis_rotation(rng, rng.uniform(0.0, max_angle));
  for (int a = 0; a < 3; ++a) T.translation[a] = rng.uniform(-max_translation, max_translation);
  return T;
}

geom::PointCloud random_cloud(Rng& rng, std::size_t n) {
  std::vector<geom::Vec3> pts(n);
  for (auto& p : pts) p = geom::Vec3(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1));
  return geom::PointCloud(std::move(pts));
}

double geodesic_deg(const geom::Mat3& a, const geom::Mat3& b) {
  const double c = std::clamp(((a.transpose() * b).trace() - 1.0) / 2.0, -1.0, 1.0);
  return std::acos(c) * kDeg;
}

double max_abs(std::span<const double> a, std::span<const double> b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

// ---------------------------------------------------------------- 1

Verdict gradient_integrity() {
  using namespace upcr::ad;
  const auto t0 = Clock::now();
  Verdict v;
  Rng rng(1);
  auto arr = [&](Shape s, double lo, double hi) {
    Array a(std::move(s), 0.0);
    for (auto& x : a.data) x = rng.uniform(lo, hi);
    return a;
  };
  const Shape shape{4, 3};
  const Array weights = arr(shape, 0.5, 1.5), other = arr(shape, 0.5, 1.5), right = arr({3, 2}, -1, 1),
              bias = arr({3}, -1, 1), square_w = arr({3, 3}, -1, 1);
  auto wsum = [&](Tape& t, const Tensor& y) { return sum(mul(reshape(y, shape), t.constant(weights))); };
  const std::vector<std::size_t> graph{1, 2, 0, 3, 3, 0, 2, 1};  // 4 rows, k = 2
  const std::vector<std::pair<const char*, TapeFunction>> ops{
      {"matmul", [&](Tape& t, const Tensor& x) { return sum(square(matmul(x, t.constant(right)))); }},
      {"add", [&](Tape& t, const Tensor& x) { return wsum(t, add(x, t.constant(other))); }},
      {"sub", [&](Tape& t, const Tensor& x) { return wsum(t, sub(t.constant(other), x)); }},
      {"mul", [&](Tape& t, const Tensor& x) { return wsum(t, mul(x, x)); }},
      {"div", [&](Tape& t, const Tensor& x) { return wsum(t, div(t.constant(other), add_scalar(x, 3.0))); }},
      {"log", [&](Tape& t, const Tensor& x) { return wsum(t, log(add_scalar(x, 2.0))); }},
      {"exp", [&](Tape& t, const Tensor& x) { return wsum(t, exp(x)); }},
      {"neg", [&](Tape& t, const Tensor& x) { return wsum(t, neg(x)); }},
      {"scale", [&](Tape& t, const Tensor& x) { return wsum(t, scale(x, -2.5)); }},
      {"sin", [&](Tape& t, const Tensor& x) { return wsum(t, sin(x)); }},
      {"cos", [&](Tape& t, const Tensor& x) { return wsum(t, cos(x)); }},
      {"sqrt", [&](Tape& t, const Tensor& x) { return wsum(t, sqrt(add_scalar(x, 2.0))); }},
      {"square", [&](Tape& t, const Tensor& x) { return wsum(t, square(x)); }},
      {"leaky_relu", [&](Tape& t, const Tensor& x) { return wsum(t, leaky_relu(x, 0.2)); }},
      {"softmax", [&](Tape& t, const Tensor& x) { return wsum(t, reshape(softmax(reshape(x, {12})), shape)); }},
      {"reduce_max", [&](Tape& t, const Tensor& x) { return sum(mul(reduce_max(x), t.constant(bias))); }},
      {"group_max", [&](Tape&, const Tensor& x) { return sum(square(group_max(x, 2))); }},
      {"neighbor_max", [&](Tape&, const Tensor& x) { return sum(square(neighbor_max(x, graph, 2))); }},
      {"concat", [&](Tape&, const Tensor& x) {
         const std::vector<Tensor> parts{x, square(x)};
         return sum(square(concat(parts)));
       }},
      {"slice_cols", [&](Tape&, const Tensor& x) { return sum(square(slice_cols(x, 1, 2))); }},
      {"split_cols", [&](Tape&, const Tensor& x) {
         const std::vector<std::size_t> widths{1, 2};
         const auto parts = split_cols(x, widths);
         return add(sum(parts[0]), sum(square(parts[1])));
       }},
      {"gather_rows", [&](Tape&, const Tensor& x) {
         const std::vector<std::size_t> idx{3, 0, 0, 2, 1, 3};
         return sum(square(gather_rows(x, idx)));
       }},
      {"add_row", [&](Tape& t, const Tensor& x) { return sum(square(add_row(x, t.constant(bias)))); }},
      {"transpose", [&](Tape& t, const Tensor& x) { return sum(square(matmul(transpose(x), t.constant(other)))); }},
      {"mean", [&](Tape&, const Tensor& x) { return mean(square(x)); }},
      {"element_stack", [&](Tape&, const Tensor& x) {
         const std::vector<Tensor> parts{element(x, 0), element(x, 5), element(x, 11), element(x, 5)};
         return sum(square(stack(parts, {2, 2})));
       }},
  };
  std::size_t failures = 0;
  double worst = 0.0;
  std::string failed;
  for (const auto& [name, f] : ops) {
    const auto report = grad_check(f, arr(shape, -1, 1), 1e-5, 1e-4);
    worst = std::max(worst, report.max_error);
    if (!report.passed) {
      ++failures;
      failed += std::string(" ") + name;
    }
  }
  {
    Array x = arr({3, 3}, -1, 1);
    for (int i = 0; i < 3; ++i) x.at(i, i) += 3.0;
    const auto report = grad_check(
        [&](Tape& t, const Tensor& m) { return sum(mul(inverse(m), t.constant(square_w))); }, x, 1e-5, 1e-4);
    worst = std::max(worst, report.max_error);
    if (!report.passed) {
      ++failures;
      failed += " inverse";
    }
  }
  v.check(failures == 0, std::to_string(ops.size() + 1) + " ops at rtol 1e-4, worst " + fmt("%.2e", worst) + failed);

  // register_pair → Chamfer on 8-point clouds, m = 16, every parameter tensor.
  model::ModelConfig cfg;
  cfg.encoder.k = 4;
  cfg.encoder.m = 16;
  cfg.encoder.layers = 2;
  cfg.encoder.widths = {8, 16};
  cfg.head_hidden = {16, 8};
  Rng init(2);
  const model::ModelParams params(cfg, init);
  Rng data_rng(3);
  const auto x = random_cloud(data_rng, 8);
  const auto y = geom::apply_transform(random_motion(data_rng, 0.5, 0.3), x);
  const auto px = model::prepare(x, cfg), py = model::prepare(y, cfg);
  std::size_t bad = 0;
  double pipeline_worst = 0.0;
  for (std::size_t idx = 0; idx < params.entries().size(); ++idx) {
    const auto report = grad_check(
        [&](Tape& tape, const Tensor& leaf) {
          auto bound = model::bind(tape, params, false);
          const auto old = bound.all[idx].node_id();
          auto swap_in = [&](Tensor& t) {
            if (t.valid() && t.node_id() == old) t = leaf;
          };
          for (auto* group : {&bound.global_w, &bound.global_b, &bound.invariant_w, &bound.invariant_b,
                              &bound.head_w, &bound.head_b})
            for (auto& t : *group) swap_in(t);
          swap_in(bound.embed_w);
          swap_in(bound.embed_b);
          const auto pair = model::forward_pair(tape, px, py, cfg, bound);
          return training::unsupervised_loss(pair.source_canonical, pair.target_canonical);
        },
        params.entries()[idx].value, 1e-6, 1e-3);
    pipeline_worst = std::max(pipeline_worst, report.max_error);
    if (!report.passed) ++bad;
  }
  v.check(bad == 0, "pipeline " + std::to_string(params.entries().size()) + " tensors at rtol 1e-3, worst " +
                        fmt("%.2e", pipeline_worst));
  const double secs = seconds_since(t0);
  v.check(secs < 60.0, fmt("%.1f s (< 60 s)", secs));
  return v;
}

// ---------------------------------------------------------------- 2

Verdict invariance_suite() {
  const auto t0 = Clock::now();
  Verdict v;
  const std::vector<features::FeatureKind> kinds{
      features::FeatureKind::distance,      features::FeatureKind::ppf,
      features::FeatureKind::spfh,          features::FeatureKind::pfh,
      features::FeatureKind::distance_ppf,  features::FeatureKind::distance_spfh,
      features::FeatureKind::distance_ppf_spfh};
  Rng shape_rng(4);
  const auto cloud = data::synth_shape(11, 128, shape_rng);
  double worst_feature = 0.0, worst_encoding = 0.0;
  for (const auto kind : kinds) {
    model::ModelConfig cfg;
    cfg.encoder = model::EncoderConfig::desk();
    cfg.encoder.k = 10;
    cfg.features.kind = kind;
    Rng init(5);
    const model::ModelParams params(cfg, init);
    const auto base_edges = features::compute_edge_features(cloud, cfg.features, cfg.encoder.k);
    const auto base_code = model::encode_invariant(cloud, params);
    Rng motion_rng(6);
    for (int trial = 0; trial < 100; ++trial) {
      const auto T = random_motion(motion_rng, std::numbers::pi, 10.0);
      const auto moved = geom::apply_transform(T, cloud);
      const auto edges = features::compute_edge_features(moved, cfg.features, cfg.encoder.k);
      worst_feature = std::max(worst_feature, max_abs(edges.values.data, base_edges.values.data));
      worst_encoding = std::max(worst_encoding, max_abs(model::encode_invariant(moved, params), base_code));
    }
  }
  v.check(worst_feature <= 1e-6, "7 feature kinds x 100 motions, max feature change " + fmt("%.2e", worst_feature));
  v.check(worst_encoding <= 1e-6, "encode_invariant max change " + fmt("%.2e", worst_encoding));

  model::ModelConfig cfg;
  cfg.encoder = model::EncoderConfig::desk();
  Rng init(7);
  const model::ModelParams params(cfg, init);
  Rng rng(8);
  int changed = 0;
  for (int s = 0; s < 100; ++s) {
    Rng srng(1000 + s);
    const auto shape = data::synth_shape(static_cast<std::uint64_t>(s) % data::kCategoryCount, 256, srng);
    geom::RigidTransform T;
    T.rotation = axis_rotation(rng, std::numbers::pi / 4);
    const auto a = model::encode_global(shape, params), b = model::encode_global(geom::apply_transform(T, shape), params);
    if (max_abs(a, b) > 1e-6) ++changed;
  }
  v.check(changed >= 95, "encode_global changes under 45 deg on " + std::to_string(changed) + "/100 shapes");
  const double secs = seconds_since(t0);
  v.check(secs < 120.0, fmt("%.1f s (< 120 s)", secs));
  return v;
}

// ---------------------------------------------------------------- 3

Verdict separation_identities() {
  Verdict v;
  Rng rng(9);
  const std::size_t m = 64;
  auto distribution = [&]() {
    model::Representation r;
    for (std::size_t i = 0; i < m; ++i) r.values.push_back(rng.normal());
    return model::to_distribution(r);
  };
  bool self_zero = true;
  double worst = 0.0, min_kl = INFINITY;
  for (int trial = 0; trial < 1000; ++trial) {
    const auto p = distribution(), q = distribution();
    for (double g : model::pose_related_rep(p, p).values) self_zero = self_zero && g == 0.0;
    double total = 0.0, kl = 0.0;
    for (double g : model::pose_related_rep(p, q).values) total += g;
    for (std::size_t i = 0; i < m; ++i) kl += p.values[i] * std::log(p.values[i] / q.values[i]);
    worst = std::max(worst, std::abs(total - kl));
    min_kl = std::min(min_kl, total);
  }
  v.check(self_zero, "pose_related_rep(p,p) == 0 exactly");
  v.check(worst <= 1e-9 && min_kl >= 0.0,
          "sum = KL over 1000 pairs, max deviation " + fmt("%.2e", worst) + fmt(", min %.3g", min_kl));

  double worst_identity = 0.0;
  for (int trial = 0; trial < 20; ++trial) {
    model::ModelConfig cfg;
    cfg.encoder = model::EncoderConfig::desk();
    cfg.rotation = static_cast<geom::RotationMode>(trial % 4);
    Rng init(200 + trial);
    const model::ModelParams params(cfg, init);
    Rng srng(300 + trial);
    const auto cloud = data::synth_shape(static_cast<std::uint64_t>(trial), 256, srng);
    const auto r = model::register_pair(cloud, cloud, params);
    worst_identity = std::max({worst_identity, (r.transform.rotation - geom::Mat3::Identity()).cwiseAbs().maxCoeff(),
                               r.transform.translation.cwiseAbs().maxCoeff()});
  }
  v.check(worst_identity <= 1e-10, "register_pair(X,X) over 20 untrained models, max deviation " +
                                       fmt("%.2e", worst_identity));
  return v;
}

// ---------------------------------------------------------------- 4

Verdict composition() {
  Verdict v;
  Rng rng(10);
  double worst = 0.0;
  for (int trial = 0; trial < 1000; ++trial) {
    const auto tx = random_motion(rng, std::numbers::pi, 2.0), ty = random_motion(rng, std::numbers::pi, 2.0);
    const auto shape = random_cloud(rng, 32);
    const auto lhs = geom::apply_transform(geom::compose_relative(tx, ty), geom::apply_transform(tx, shape));
    const auto rhs = geom::apply_transform(ty, shape);
    for (std::size_t i = 0; i < shape.size(); ++i) worst = std::max(worst, (lhs[i] - rhs[i]).cwiseAbs().maxCoeff());
  }
  v.check(worst <= 1e-9, "1000 triples, max deviation " + fmt("%.2e", worst));
  return v;
}

// ---------------------------------------------------------------- 5

Verdict protocol_fidelity() {
  Verdict v;
  // Angles are recovered from the matrix, so allow 1e-9 degrees of roundoff.
  const double slack = 1e-9;
  Rng rng(11);
  int violations = 0;
  for (int i = 0; i < 10000; ++i) {
    const auto T = data::sample_transform(data::PoseRegime::modelnet_style, rng);
    const auto e = geom::euler_from_matrix(T.rotation) * kDeg;
    for (int a = 0; a < 3; ++a)
      if (e[a] < -slack || e[a] > 45.0 + slack || std::abs(T.translation[a]) > 0.5) ++violations;
  }
  v.check(violations == 0, "modelnet regime: " + std::to_string(violations) + " violations in 1e4 draws");
  violations = 0;
  for (int i = 0; i < 10000; ++i) {
    const auto T = data::sample_transform(data::PoseRegime::sevenscenes_style, rng);
    const auto e = geom::euler_from_matrix(T.rotation) * kDeg;
    int rotated = 0, moved = 0;
    for (int a = 0; a < 3; ++a) {
      if (e[a] < -slack || e[a] > 60.0 + slack || T.translation[a] < 0.0 || T.translation[a] > 1.0) ++violations;
      rotated += std::abs(e[a]) > slack;
      moved += T.translation[a] != 0.0;
    }
    if (rotated > 1 || moved > 1) ++violations;
  }
  v.check(violations == 0, "sevenscenes regime: " + std::to_string(violations) + " violations in 1e4 draws");

  Rng shape_rng(12), noise_rng(13);
  const auto cloud = data::synth_shape(5, 1024, shape_rng);
  double worst = 0.0;
  for (int rep = 0; rep < 100; ++rep) {
    const auto noisy = data::add_noise(cloud, 0.01, 0.05, noise_rng);
    for (std::size_t i = 0; i < cloud.size(); ++i) worst = std::max(worst, (noisy[i] - cloud[i]).cwiseAbs().maxCoeff());
  }
  v.check(worst <= 0.05, "add_noise max displacement " + fmt("%.6f", worst));

  bool partial_ok = true;
  for (int rep = 0; rep < 20; ++rep) {
    const auto part = data::make_partial(cloud, 768, noise_rng);
    partial_ok = partial_ok && part.size() == 768;
    std::set<std::tuple<double, double, double>> members;
    for (std::size_t i = 0; i < cloud.size(); ++i) members.emplace(cloud[i].x(), cloud[i].y(), cloud[i].z());
    std::set<std::tuple<double, double, double>> seen;
    for (std::size_t i = 0; i < part.size(); ++i) {
      const auto key = std::make_tuple(part[i].x(), part[i].y(), part[i].z());
      partial_ok = partial_ok && members.count(key) == 1 && seen.insert(key).second;
    }
  }
  v.check(partial_ok, "make_partial keeps 768 distinct members of 1024");
  return v;
}

// ---------------------------------------------------------------- 6, 7, 9

struct DeskData {
  std::vector<data::DatasetSample> train, test;
};

const DeskData& desk_data() {
  static const DeskData d = [] {
    data::Protocol protocol;
    protocol.points = 256;
    const auto [train_shapes, test_shapes] = data::split_dataset(data::Setting::upc, 40, 5, 7);
    return DeskData{data::make_dataset(protocol, train_shapes, 200, 7),
                    data::make_dataset(protocol, test_shapes, 50, 8)};
  }();
  return d;
}

std::vector<training::CloudPair> pairs_of(const std::vector<data::DatasetSample>& samples) {
  std::vector<training::CloudPair> out;
  for (const auto& s : samples) out.push_back({s.source, s.target});
  return out;
}

struct DeskRun {
  model::ModelParams trained, tuned;
  double seconds = 0.0;
};

fs::path g_cache = "acceptance_cache";
bool g_fresh = false;

/// 30 epochs at 1e-3 on the training pairs, then 10 at 1e-4 on the held-out
/// clouds (no poses reach the loss). Cached per rotation mode.
const DeskRun& desk_run(geom::RotationMode mode) {
  static std::map<geom::RotationMode, DeskRun> runs;
  if (auto it = runs.find(mode); it != runs.end()) return it->second;
  model::ModelConfig cfg;
  cfg.encoder = model::EncoderConfig::desk();
  cfg.rotation = mode;
  const std::string stem = "desk_" + std::string(geom::to_string(mode)) + "_seed7";
  const auto trained_path = g_cache / (stem + ".upcr"), tuned_path = g_cache / (stem + "_ft.upcr"),
             time_path = g_cache / (stem + ".seconds");
  if (!g_fresh && fs::exists(trained_path) && fs::exists(tuned_path) && fs::exists(time_path)) {
    try {
      DeskRun run{training::load_checkpoint(trained_path).params, training::load_checkpoint(tuned_path).params};
      std::ifstream(time_path) >> run.seconds;
      if (run.trained.config() == cfg && run.tuned.config() == cfg) {
        std::fprintf(stderr, "using cached %s model from %s\n", std::string(geom::to_string(mode)).c_str(),
                     g_cache.string().c_str());
        return runs.emplace(mode, std::move(run)).first->second;
      }
    } catch (const training::CheckpointError&) {
    }
  }
  const auto& d = desk_data();
  const auto t0 = Clock::now();
  Rng init(7);
  training::TrainConfig tc;
  tc.epochs = 30;
  tc.lr = 1e-3;
  tc.seed = 7;
  const auto log = [&](const training::EpochReport& r) {
    std::fprintf(stderr, "  %s epoch %zu loss %.5f (%.0f s)\n", std::string(geom::to_string(mode)).c_str(), r.epoch,
                 r.mean_loss, seconds_since(t0));
  };
  auto trained = training::train(model::ModelParams(cfg, init), pairs_of(d.train), tc, log).params;
  tc.epochs = 10;
  tc.lr = 1e-4;
  auto tuned = training::fine_tune(trained, pairs_of(d.test), tc, log).params;
  DeskRun run{std::move(trained), std::move(tuned), seconds_since(t0)};
  fs::create_directories(g_cache);
  training::save_checkpoint(trained_path, {run.trained, std::nullopt, {30, 7, {}}});
  training::save_checkpoint(tuned_path, {run.tuned, std::nullopt, {40, 7, {}}});
  std::ofstream(time_path) << run.seconds << '\n';
  return runs.emplace(mode, std::move(run)).first->second;
}

struct DeskScore {
  double mae_r = 0.0, mae_t = 0.0, improved = 0.0;
};

DeskScore score(const model::ModelParams& params) {
  const auto& test = desk_data().test;
  const auto predictions = eval::predict(params, test);
  const auto report = eval::metric_report(predictions, eval::ground_truths(test));
  std::size_t better = 0;
  for (std::size_t i = 0; i < test.size(); ++i)
    better += geom::chamfer(geom::apply_transform(predictions[i], test[i].source), test[i].target) <
              geom::chamfer(test[i].source, test[i].target);
  return {report.mae_rot_deg, report.mae_trans, static_cast<double>(better) / test.size()};
}

void check_desk(Verdict& v, const DeskScore& s, const std::string& prefix) {
  v.check(s.mae_r < 5.0, prefix + fmt("MAE(R) %.3f deg (< 5)", s.mae_r));
  v.check(s.mae_t < 0.05, prefix + fmt("MAE(t) %.4f (< 0.05)", s.mae_t));
  v.check(s.improved >= 0.9, prefix + fmt("chamfer improved on %.0f%% (>= 90%%)", 100 * s.improved));
}

Verdict desk_training() {
  Verdict v;
  const auto& run = desk_run(geom::RotationMode::euler);
  const auto before = score(run.trained), after = score(run.tuned);
  check_desk(v, after, "");
  v.detail += fmt("; before fine-tune MAE(R) %.3f, MAE(t) %.4f", before.mae_r, before.mae_t);
  v.check(run.seconds < 1800.0, fmt("training %.0f s (< 1800 s)", run.seconds));
  return v;
}

Verdict rotation_ablation() {
  Verdict v;
  std::string table = "\n    mode        MAE(R) deg   MAE(t)   improved   (after fine-tune)";
  for (const auto mode : {geom::RotationMode::euler, geom::RotationMode::quaternion, geom::RotationMode::sixd,
                          geom::RotationMode::matrix}) {
    const auto s = score(desk_run(mode).tuned);
    char row[160];
    std::snprintf(row, sizeof row, "\n    %-10s %11.3f %8.4f %9.0f%%", std::string(geom::to_string(mode)).c_str(),
                  s.mae_r, s.mae_t, 100 * s.improved);
    table += row;
    if (mode == geom::RotationMode::euler || mode == geom::RotationMode::quaternion)
      check_desk(v, s, std::string(geom::to_string(mode)) + " ");
  }
  v.detail += table;
  return v;
}

Verdict robustness_trend() {
  Verdict v;
  const auto& run = desk_run(geom::RotationMode::euler);
  const std::vector<double> ratios{0, 10, 20, 30};
  const auto rows = eval::outlier_sweep(run.tuned, desk_data().test, ratios, 7);
  bool finite = true;
  for (const auto& r : rows) finite = finite && std::isfinite(r.model.mae_rot_deg) && std::isfinite(r.icp.mae_rot_deg);
  const double model_factor = rows.back().model.mae_rot_deg / rows.front().model.mae_rot_deg;
  const double icp_factor = rows.back().icp.mae_rot_deg / rows.front().icp.mae_rot_deg;
  v.check(finite, "MAE(R) finite at 0/10/20/30%");
  v.check(model_factor < 4.0, fmt("model MAE(R) %.3f -> %.3f deg, factor %.2f (< 4)", rows.front().model.mae_rot_deg,
                                  rows.back().model.mae_rot_deg, model_factor));
  v.check(icp_factor > model_factor, fmt("ICP %.3f -> %.3f deg, factor %.2f (> model)", rows.front().icp.mae_rot_deg,
                                         rows.back().icp.mae_rot_deg, icp_factor));
  return v;
}

// ---------------------------------------------------------------- 8

Verdict baseline_sanity() {
  Verdict v;
  Rng shape_rng(14), rng(15);
  auto shape = [&](int i) { return data::synth_shape(static_cast<std::uint64_t>(i) % data::kCategoryCount, 256, shape_rng); };

  double worst15 = 0.0;
  for (int i = 0; i < 10; ++i) {
    const auto cloud = shape(i);
    geom::RigidTransform T;
    T.rotation = axis_rotation(rng, 15.0 / kDeg);
    const auto r = eval::icp(cloud, geom::apply_transform(T, cloud), {});
    worst15 = std::max(worst15, geodesic_deg(r.transform.rotation, T.rotation));
  }
  v.check(worst15 < 0.1, fmt("ICP at 15 deg: worst error %.2e deg over 10 shapes (< 0.1)", worst15));

  int failures45 = 0, matched = 0;
  features::FeatureSpec pfh;
  pfh.kind = features::FeatureKind::pfh;
  for (int i = 0; i < 50; ++i) {
    const auto cloud = shape(i);
    geom::RigidTransform T;
    T.rotation = axis_rotation(rng, 45.0 / kDeg);
    const auto target = geom::apply_transform(T, cloud);
    if (geodesic_deg(eval::icp(cloud, target, {}).transform.rotation, T.rotation) > 5.0) ++failures45;
    if (geodesic_deg(eval::feature_match_init(cloud, target, pfh).rotation, T.rotation) <= 10.0) ++matched;
  }
  v.check(failures45 >= 15, "ICP at 45 deg fails on " + std::to_string(failures45) + "/50 (>= 15)");
  v.check(matched >= 40, "PFH feature match within 10 deg on " + std::to_string(matched) + "/50 (>= 40)");
  return v;
}

// ---------------------------------------------------------------- 10

Verdict timing_ordering() {
  Verdict v;
  std::map<features::FeatureKind, double> ms;
  for (const auto kind : {features::FeatureKind::distance, features::FeatureKind::pfh}) {
    model::ModelConfig cfg;
    cfg.encoder = model::EncoderConfig::desk();
    cfg.features.kind = kind;
    Rng init(16);
    const model::ModelParams params(cfg, init);
    ms[kind] = eval::time_registration(params, 1024, 3, 17).mean_ms;
  }
  const double ratio = ms[features::FeatureKind::pfh] / ms[features::FeatureKind::distance];
  v.check(ratio > 1.0, fmt("distance %.1f ms vs PFH %.1f ms per 1024-point pair", ms[features::FeatureKind::distance],
                           ms[features::FeatureKind::pfh]));
  v.check(ratio >= 10.0, fmt("gap %.2fx (>= 10x)", ratio));
  return v;
}

// ---------------------------------------------------------------- 11

Verdict determinism_persistence() {
  Verdict v;
  model::ModelConfig cfg;
  cfg.encoder.k = 8;
  cfg.encoder.m = 16;
  cfg.encoder.layers = 3;
  cfg.encoder.widths = {8, 16, 16};
  cfg.head_hidden = {16, 8};
  data::Protocol protocol;
  protocol.points = 64;
  const auto [train_shapes, test_shapes] = data::split_dataset(data::Setting::upc, 8, 5, 21);
  const auto train = data::make_dataset(protocol, train_shapes, 12, 21);
  const auto test = data::make_dataset(protocol, test_shapes, 6, 22);
  training::TrainConfig tc;
  tc.epochs = 3;
  tc.batch_size = 4;
  auto run = [&] {
    Rng init(23);
    const auto result = training::train(model::ModelParams(cfg, init), pairs_of(train), tc);
    return training::Checkpoint{result.params, result.optimizer, {3, 23, result.loss_curve}};
  };
  const auto a = run(), b = run();
  const auto bytes = training::serialize_checkpoint(a);
  v.check(bytes == training::serialize_checkpoint(b), "same seed gives bit-identical checkpoints");

  auto csv = [&](const model::ModelParams& params) {
    const auto truths = eval::ground_truths(test);
    std::vector<eval::LabeledReport> rows{{"upcr", eval::metric_report(eval::predict(params, test), truths)},
                                          {"icp", eval::metric_report(eval::predict_icp(test), truths)}};
    return eval::metrics_csv(rows);
  };
  v.check(csv(a.params) == csv(b.params), "same seed gives identical benchmark CSV");

  const auto path = fs::temp_directory_path() / "upcr_acceptance_roundtrip.upcr";
  training::save_checkpoint(path, a);
  const auto back = training::load_checkpoint(path);
  fs::remove(path);
  v.check(training::serialize_checkpoint(back) == bytes, "checkpoint round trip is bit-exact");

  double worst = 0.0;
  Rng shape_rng(24);
  auto cloud = data::synth_shape(3, 200, shape_rng);
  cloud = geom::apply_transform(random_motion(shape_rng, 3.0, 5.0), cloud);
  for (const auto format : {data::CloudFormat::xyz, data::CloudFormat::off, data::CloudFormat::ply}) {
    const auto parsed = data::parse_cloud(data::format_cloud(cloud, format), format);
    if (parsed.size() != cloud.size()) worst = INFINITY;
    for (std::size_t i = 0; i < std::min(parsed.size(), cloud.size()); ++i)
      worst = std::max(worst, (parsed[i] - cloud[i]).cwiseAbs().maxCoeff());
  }
  v.check(worst <= 1e-6, "xyz/off/ply round trips within " + fmt("%.1e", worst));
  return v;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app("Acceptance criteria");
  std::vector<int> selected;
  std::string cache = g_cache.string();
  app.add_option("--criterion", selected, "criteria to run (default: all)")->check(CLI::Range(1, 11));
  app.add_option("--cache", cache, "directory for trained desk-scale models")->capture_default_str();
  app.add_flag("--fresh", g_fresh, "ignore cached models");
  CLI11_PARSE(app, argc, argv);
  g_cache = cache;

  const std::vector<std::pair<const char*, std::function<Verdict()>>> criteria{
      {"gradient integrity", gradient_integrity},
      {"invariance suite", invariance_suite},
      {"separation identities", separation_identities},
      {"composition correctness", composition},
      {"protocol fidelity", protocol_fidelity},
      {"desk-scale training target", desk_training},
      {"rotation-solver ablation", rotation_ablation},
      {"baseline sanity", baseline_sanity},
      {"robustness trend", robustness_trend},
      {"timing ordering", timing_ordering},
      {"determinism and persistence", determinism_persistence},
  };
  if (selected.empty())
    for (int i = 1; i <= 11; ++i) selected.push_back(i);

  int failed = 0;
  for (int id : selected) {
    const auto& [name, run] = criteria[static_cast<std::size_t>(id - 1)];
    const auto t0 = Clock::now();
    Verdict verdict;
    try {
      verdict = run();
    } catch (const std::exception& e) {
      verdict.check(false, std::string("exception: ") + e.what());
    }
    if (!verdict.pass) ++failed;
    std::printf("[%s] %2d %s (%.1f s): %s\n", verdict.pass ? "PASS" : "FAIL", id, name, seconds_since(t0),
                verdict.detail.c_str());
    std::fflush(stdout);
  }
  std::printf("%zu/%zu criteria passed\n", selected.size() - failed, selected.size());
  return failed == 0 ? 0 : 1;
}
