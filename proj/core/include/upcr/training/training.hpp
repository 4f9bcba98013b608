#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "upcr/autodiff/tensor.hpp"
#include "upcr/geom/types.hpp"
#include "upcr/model/encoder.hpp"
#include "upcr/model/separation.hpp"

namespace upcr::training {

/// Symmetric Chamfer between canonical shapes on the tape.
ad::Tensor unsupervised_loss(const ad::Tensor& source_canonical, const ad::Tensor& target_canonical);

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct OptimState {
  AdamConfig hyper;
  std::uint64_t step = 0;
  std::vector<std::vector<double>> first, second;  // mirror ModelParams::entries()

  static OptimState fresh(const model::ModelParams& params, AdamConfig hyper);
};

class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// One bias-corrected Adam update. A non-finite gradient aborts the step
/// before anything changes.
void adam_step(model::ModelParams& params, std::span<const std::vector<double>> grads, OptimState& state);

/// Training input: clouds only, so ground truth cannot reach the loss.
struct CloudPair {
  geom::PointCloud source;
  geom::PointCloud target;
};

struct TrainConfig {
  std::size_t epochs = 30;
  double lr = 1e-3;
  std::size_t batch_size = 8;
  std::uint64_t seed = 7;
  double clip_norm = 0.0;  // global-norm clip; 0 disables
  bool cosine_decay = false;
};

struct EpochReport {
  std::size_t epoch;  // 1-based
  double mean_loss;
};

struct TrainResult {
  model::ModelParams params;
  OptimState optimizer;
  std::vector<double> loss_curve;  // per-epoch mean loss
};

class TrainingDiverged : public std::runtime_error {
 public:
  TrainingDiverged(const std::string& what, model::ModelParams last_good)
      : std::runtime_error(what), last_good(std::move(last_good)) {}
  model::ModelParams last_good;
};

using EpochCallback = std::function<void(const EpochReport&)>;

/// Mini-batch Adam on the mean unsupervised loss of each batch.
TrainResult train(model::ModelParams params, std::span<const CloudPair> data, const TrainConfig& config,
                  const EpochCallback& on_epoch = {});

/// Continues from `params` with a fresh optimizer state.
TrainResult fine_tune(model::ModelParams params, std::span<const CloudPair> data, const TrainConfig& config,
                      const EpochCallback& on_epoch = {});

/// Loss and parameter gradients of one pair (gradients in entries() order).
double pair_loss_and_grad(const model::ModelParams& params, const model::PreparedCloud& source,
                          const model::PreparedCloud& target, std::vector<std::vector<double>>* grads);

struct TrainingMeta {
  std::uint64_t epoch = 0;
  std::uint64_t seed = 0;
  std::vector<double> loss_history;
};

struct Checkpoint {
  model::ModelParams params;
  std::optional<OptimState> optimizer;
  TrainingMeta meta;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint);
Checkpoint load_checkpoint(const std::filesystem::path& path);
std::string serialize_checkpoint(const Checkpoint& checkpoint);
Checkpoint deserialize_checkpoint(std::string_view bytes);

/// Rejects a checkpoint whose configuration differs from `expected`.
void require_compatible(const model::ModelConfig& expected, const model::ModelConfig& actual);

/// "epoch,mean_loss" rows.
std::string loss_csv(std::span<const double> curve);

}  // namespace upcr::training
