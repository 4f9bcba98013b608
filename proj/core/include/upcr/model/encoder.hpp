#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

#include "upcr/autodiff/tensor.hpp"
#include "upcr/features/invariant_features.hpp"
#include "upcr/geom/knn.hpp"
#include "upcr/geom/rotation.hpp"
#include "upcr/random.hpp"

namespace upcr::model {

struct EncoderConfig {
  std::size_t k = 24;
  std::size_t m = 512;
  std::size_t layers = 5;
  std::vector<std::size_t> widths{64, 64, 128, 256, 512};
  double slope = 0.2;
  /// Rebuild the global branch's neighbor graph from each layer's features.
  bool feature_space_graph = true;

  static EncoderConfig full();
  static EncoderConfig desk();  // widths 16,16,32,32,64 and m = 64

  void validate() const;
  bool operator==(const EncoderConfig&) const = default;
};

/// How Γ_μ is presented to the pose head. `raw` feeds the entries as they
/// are; `width_scaled` multiplies them by m, which brings p·log(p/q) with
/// p ≈ 1/m back to the scale of the log ratio.
enum class PoseInput { raw, width_scaled };

std::string_view to_string(PoseInput input);
PoseInput pose_input_from_string(std::string_view name);

struct ModelConfig {
  EncoderConfig encoder;
  features::FeatureSpec features;
  geom::RotationMode rotation = geom::RotationMode::euler;
  std::vector<std::size_t> head_hidden{256, 128};
  PoseInput pose_input = PoseInput::raw;

  void validate() const;
  std::size_t head_output() const { return geom::rotation_dim(rotation) + 3; }
  bool operator==(const ModelConfig&) const = default;
};

/// Named parameter tensors for both encoder branches and the pose head.
///   global.conv<l>.{weight,bias}     h_θ of layer l, weight [2·c_in × c_out]
///   invariant.embed.{weight,bias}    h_α, weight [feature dim × widths[0]]
///   invariant.conv<l>.{weight,bias}  layers 1..ℓ−1 of the invariant branch
///   head.fc<i>.{weight,bias}         h_β
class ModelParams {
 public:
  struct Entry {
    std::string name;
    ad::Array value;
  };

  ModelParams() = default;
  /// Uniform ±√(6/(fan_in+fan_out)) weights, zero biases.
  ModelParams(ModelConfig config, Rng& rng);
  /// Adopts existing tensors; names and shapes must match `config`.
  ModelParams(ModelConfig config, std::vector<Entry> entries);

  const ModelConfig& config() const { return config_; }
  const std::vector<Entry>& entries() const { return entries_; }
  std::vector<Entry>& entries() { return entries_; }
  const ad::Array& at(std::string_view name) const;
  ad::Array& at(std::string_view name);
  std::size_t parameter_count() const;

  /// Expected (name, shape) layout for a configuration.
  static std::vector<std::pair<std::string, ad::Shape>> layout(const ModelConfig& config);

 private:
  ModelConfig config_;
  std::vector<Entry> entries_;
};

/// Parameters placed on a tape, grouped by role. Index order follows
/// ModelParams::entries().
struct BoundParams {
  std::vector<ad::Tensor> all;
  std::vector<ad::Tensor> global_w, global_b;
  ad::Tensor embed_w, embed_b;
  std::vector<ad::Tensor> invariant_w, invariant_b;
  std::vector<ad::Tensor> head_w, head_b;
};

BoundParams bind(ad::Tape& tape, const ModelParams& params, bool trainable);

/// One EdgeConv layer: per point, max over its k neighbors of
/// LeakyReLU(W·[F_i, F_j − F_i] + b).
ad::Tensor edge_conv_layer(const ad::Tensor& features, const geom::NeighborTable& graph, const ad::Tensor& weight,
                           const ad::Tensor& bias, double slope);

/// Γ_G: edge-conv stack on raw coordinates, max-pooled to an m-vector.
/// `spatial` optionally supplies the precomputed k-NN graph of the cloud.
ad::Tensor encode_global(ad::Tape& tape, const geom::PointCloud& cloud, const EncoderConfig& config,
                         const BoundParams& params, const geom::NeighborTable* spatial = nullptr);

/// Γ_ν: invariant embedding Φ⁰ then ℓ−1 edge-conv layers on the spatial
/// graph, max-pooled to an m-vector.
ad::Tensor encode_invariant(ad::Tape& tape, const features::EdgeFeatures& edges, const EncoderConfig& config,
                            const BoundParams& params);

std::vector<double> encode_global(const geom::PointCloud& cloud, const ModelParams& params);
std::vector<double> encode_invariant(const geom::PointCloud& cloud, const ModelParams& params);

}  // namespace upcr::model
