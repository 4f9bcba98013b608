#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"
#include "upcr/data/datagen.hpp"
#include "upcr/model/encoder.hpp"
#include "upcr/training/training.hpp"

namespace upcr::cli {

/// Everything a run depends on besides its input files.
struct RunConfig {
  std::uint64_t seed = 7;
  std::string preset = "full";
  model::ModelConfig model;
  data::Protocol protocol;
  std::uint64_t categories = 40;
  std::size_t shapes_per_category = 5;
  std::size_t train_pairs = 200;
  std::size_t test_pairs = 50;
  training::TrainConfig train;
  std::size_t finetune_epochs = 10;
  double finetune_lr = 1e-4;

  /// Seeds of the individual random streams, all derived from `seed`.
  std::uint64_t split_seed() const { return seed; }
  std::uint64_t train_data_seed() const { return seed; }
  std::uint64_t test_data_seed() const { return seed + 1; }
  std::uint64_t init_seed() const { return seed; }
};

/// "full": 64,64,128,256,512 widths, m = 512, 1024-point clouds. "desk": 16,16,32,32,64
/// widths, m = 64, 256-point clouds.
void apply_preset(RunConfig& config, const std::string& name);

nlohmann::ordered_json to_json(const RunConfig& config);
nlohmann::ordered_json seeds_json(const RunConfig& config);

/// FNV-1a 64 of a file's bytes, as 16 hex digits.
std::string file_hash(const std::filesystem::path& path);

/// Dataset directory written by `gen`: <split>/NNNN_source.xyz,
/// NNNN_target.xyz and poses.csv (index, category, R row-major, t).
void write_split(const std::filesystem::path& dir, const std::vector<data::DatasetSample>& samples);
std::vector<data::DatasetSample> read_split(const std::filesystem::path& dir, const data::Protocol& protocol);

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace upcr::cli
