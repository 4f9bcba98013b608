#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "upcr/data/datagen.hpp"
#include "upcr/features/invariant_features.hpp"
#include "upcr/geom/types.hpp"
#include "upcr/model/encoder.hpp"

namespace upcr::eval {

using geom::Mat3;
using geom::PointCloud;
using geom::RigidTransform;
using geom::Vec3;

using Tags = std::vector<std::pair<std::string, std::string>>;

struct MetricReport {
  double rmse_rot_deg = 0.0;
  double mae_rot_deg = 0.0;
  double rmse_trans = 0.0;
  double mae_trans = 0.0;
  double me_t = 0.0;
  std::size_t samples = 0;
  Tags tags;
};

struct ErrorPair {
  double rmse = 0.0;
  double mae = 0.0;
};

/// `relative`: Euler angles of R_gtᵀ·R_pred. `absolute`: differences of the
/// two matrices' Euler angles, wrapped to (−180°, 180°].
enum class RotationError { relative, absolute };

/// Over all 3·n Euler components, in degrees.
ErrorPair rotation_metrics(std::span<const Mat3> predictions, std::span<const Mat3> truths,
                           RotationError mode = RotationError::relative);
/// Over all 3·n components of t_pred − t_gt.
ErrorPair translation_metrics(std::span<const Vec3> predictions, std::span<const Vec3> truths);

/// Mean over samples of geodesic angle (degrees) plus translation norm of
/// Δ = T_gt⁻¹·T_pred.
double se3_mean_error(std::span<const RigidTransform> predictions, std::span<const RigidTransform> truths);

MetricReport metric_report(std::span<const RigidTransform> predictions, std::span<const RigidTransform> truths,
                           RotationError mode = RotationError::relative);

/// Least-squares rigid motion taking `from[i]` onto `to[i]` (cross-covariance
/// SVD with the reflection guard).
RigidTransform fit_rigid(std::span<const Vec3> from, std::span<const Vec3> to);

struct IcpOptions {
  std::size_t max_iters = 50;
  double tol = 1e-8;
  /// Fraction of the worst correspondences dropped per iteration.
  double trim = 0.0;
};

struct IcpResult {
  RigidTransform transform;
  double mean_distance = 0.0;
  std::size_t iterations = 0;
};

/// Point-to-point ICP from `init`; returns the visited pose with the lowest
/// mean correspondence distance (init included).
IcpResult icp(const PointCloud& source, const PointCloud& target, const RigidTransform& init,
              const IcpOptions& options = {});

/// Per-point rigid-invariant descriptors: histogram kinds use the point's own
/// SPFH/PFH, distance and PPF parts average the point's edge features.
std::vector<double> point_descriptors(const PointCloud& cloud, const features::FeatureSpec& spec, std::size_t k);

/// Pose from mutual nearest neighbors in descriptor space. Throws
/// std::runtime_error with fewer than 3 mutual matches.
RigidTransform feature_match_init(const PointCloud& source, const PointCloud& target,
                                  const features::FeatureSpec& spec, std::size_t k = 16);

/// Model predictions for every sample.
std::vector<RigidTransform> predict(const model::ModelParams& params, std::span<const data::DatasetSample> samples);
std::vector<RigidTransform> ground_truths(std::span<const data::DatasetSample> samples);

/// ICP on every sample, from identity or from a feature-matched start.
std::vector<RigidTransform> predict_icp(std::span<const data::DatasetSample> samples, const IcpOptions& options = {},
                                        const features::FeatureSpec* init_features = nullptr);

Tags protocol_tags(const data::Protocol& protocol);

/// Replaces ⌊ratio·N/100⌋ distinct points, chosen uniformly, with uniform
/// samples from the unit ball.
PointCloud replace_with_outliers(const PointCloud& cloud, double ratio_percent, Rng& rng);

struct SweepRow {
  double ratio = 0.0;
  MetricReport model;
  MetricReport icp;
};

/// Both clouds of every sample corrupted independently at each ratio; the
/// model and plain ICP are evaluated on the same corrupted pairs.
std::vector<SweepRow> outlier_sweep(const model::ModelParams& params, std::span<const data::DatasetSample> base,
                                    std::span<const double> ratios, std::uint64_t seed,
                                    const IcpOptions& icp_options = {});

/// Per metric column ("model.mae_rot_deg", ...): whether it never decreases
/// as the ratio grows.
std::vector<std::pair<std::string, bool>> monotone_tags(std::span<const SweepRow> rows);

struct TimingReport {
  double mean_ms = 0.0;
  double stddev_ms = 0.0;
  std::size_t repetitions = 0;
};

/// One warm-up call, then `repetitions` timed calls (at least 3).
TimingReport time_calls(const std::function<void()>& call, std::size_t repetitions);

/// register_pair on a fresh pair of `n_points` (features included).
TimingReport time_registration(const model::ModelParams& params, std::size_t n_points, std::size_t repetitions,
                               std::uint64_t seed);
TimingReport time_icp(std::size_t n_points, std::size_t repetitions, std::uint64_t seed,
                      const IcpOptions& options = {});

struct LabeledReport {
  std::string label;
  MetricReport report;
};

std::string metrics_csv(std::span<const LabeledReport> rows);
std::string metrics_table(std::span<const LabeledReport> rows);
std::string sweep_csv(std::span<const SweepRow> rows);
std::string sweep_table(std::span<const SweepRow> rows);

}  // namespace upcr::eval
