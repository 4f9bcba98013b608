#include "upcr/model/encoder.hpp"

#include <cmath>
#include <numeric>
#include <stdexcept>

#include "upcr/autodiff/ops.hpp"

namespace upcr::model {

EncoderConfig EncoderConfig::full() { return {}; }

EncoderConfig EncoderConfig::desk() {
  EncoderConfig c;
  c.m = 64;
  c.widths = {16, 16, 32, 32, 64};
  return c;
}

void EncoderConfig::validate() const {
  if (k < 1 || m < 1 || layers < 1) throw std::invalid_argument("encoder needs k, m and layers >= 1");
  if (widths.size() != layers)
    throw std::invalid_argument("encoder has " + std::to_string(layers) + " layers but " +
                                std::to_string(widths.size()) + " widths");
  if (widths.back() != m) throw std::invalid_argument("last layer width must equal m");
  for (auto w : widths)
    if (w == 0) throw std::invalid_argument("layer widths must be positive");
  if (!(slope >= 0.0 && slope < 1.0)) throw std::invalid_argument("leaky slope must lie in [0, 1)");
}

std::string_view to_string(PoseInput input) { return input == PoseInput::raw ? "raw" : "width_scaled"; }

PoseInput pose_input_from_string(std::string_view name) {
  if (name == "raw") return PoseInput::raw;
  if (name == "width_scaled") return PoseInput::width_scaled;
  throw std::invalid_argument("unknown pose input '" + std::string(name) + "'");
}

void ModelConfig::validate() const {
  encoder.validate();
  for (auto w : head_hidden)
    if (w == 0) throw std::invalid_argument("head widths must be positive");
}

std::vector<std::pair<std::string, ad::Shape>> ModelParams::layout(const ModelConfig& config) {
  config.validate();
  const auto& e = config.encoder;
  std::vector<std::pair<std::string, ad::Shape>> out;
  auto linear = [&](const std::string& prefix, std::size_t in, std::size_t width) {
    out.emplace_back(prefix + ".weight", ad::Shape{in, width});
    out.emplace_back(prefix + ".bias", ad::Shape{width});
  };
  for (std::size_t l = 0; l < e.layers; ++l)
    linear("global.conv" + std::to_string(l), 2 * (l == 0 ? 3 : e.widths[l - 1]), e.widths[l]);
  linear("invariant.embed", config.features.dimension(), e.widths[0]);
  for (std::size_t l = 1; l < e.layers; ++l)
    linear("invariant.conv" + std::to_string(l), 2 * e.widths[l - 1], e.widths[l]);
  std::size_t in = e.m;
  for (std::size_t i = 0; i < config.head_hidden.size(); ++i) {
    linear("head.fc" + std::to_string(i), in, config.head_hidden[i]);
    in = config.head_hidden[i];
  }
  linear("head.fc" + std::to_string(config.head_hidden.size()), in, config.head_output());
  return out;
}

ModelParams::ModelParams(ModelConfig config, Rng& rng) : config_(std::move(config)) {
  for (auto& [name, shape] : layout(config_)) {
    ad::Array value(shape, 0.0);
    if (shape.size() == 2) {
      const double bound = std::sqrt(6.0 / static_cast<double>(shape[0] + shape[1]));
      for (auto& v : value.data) v = rng.uniform(-bound, bound);
    }
    entries_.push_back({name, std::move(value)});
  }
}

ModelParams::ModelParams(ModelConfig config, std::vector<Entry> entries)
    : config_(std::move(config)), entries_(std::move(entries)) {
  const auto expected = layout(config_);
  if (expected.size() != entries_.size())
    throw std::invalid_argument("parameter count " + std::to_string(entries_.size()) + " does not match the model's " +
                                std::to_string(expected.size()));
  for (std::size_t i = 0; i < expected.size(); ++i) {
    if (entries_[i].name != expected[i].first || entries_[i].value.shape != expected[i].second)
      throw std::invalid_argument("parameter '" + entries_[i].name + "' " + ad::to_string(entries_[i].value.shape) +
                                  " does not match expected '" + expected[i].first + "' " +
                                  ad::to_string(expected[i].second));
    for (double v : entries_[i].value.data)
      if (!std::isfinite(v)) throw std::invalid_argument("parameter '" + entries_[i].name + "' is not finite");
  }
}

const ad::Array& ModelParams::at(std::string_view name) const {
  for (const auto& e : entries_)
    if (e.name == name) return e.value;
  throw std::out_of_range("no parameter named '" + std::string(name) + "'");
}

ad::Array& ModelParams::at(std::string_view name) {
  return const_cast<ad::Array&>(std::as_const(*this).at(name));
}

std::size_t ModelParams::parameter_count() const {
  std::size_t n = 0;
  for (const auto& e : entries_) n += e.value.data.size();
  return n;
}

BoundParams bind(ad::Tape& tape, const ModelParams& params, bool trainable) {
  BoundParams b;
  for (const auto& e : params.entries()) {
    auto t = trainable ? tape.variable(e.value) : tape.constant(e.value);
    b.all.push_back(t);
    const bool weight = e.name.ends_with(".weight");
    if (e.name.starts_with("global.")) {
      (weight ? b.global_w : b.global_b).push_back(t);
    } else if (e.name.starts_with("invariant.embed")) {
      (weight ? b.embed_w : b.embed_b) = t;
    } else if (e.name.starts_with("invariant.")) {
      (weight ? b.invariant_w : b.invariant_b).push_back(t);
    } else {
      (weight ? b.head_w : b.head_b).push_back(t);
    }
  }
  return b;
}

ad::Tensor edge_conv_layer(const ad::Tensor& features, const geom::NeighborTable& graph, const ad::Tensor& weight,
                           const ad::Tensor& bias, double slope) {
  const std::size_t n = features.rows(), c = features.cols();
  if (graph.n != n || graph.index.size() != n * graph.k)
    throw ad::ShapeError("neighbor table has " + std::to_string(graph.n) + " rows for " + std::to_string(n) +
                         " points");
  if (weight.rows() != 2 * c)
    throw ad::ShapeError("edge weight " + ad::to_string(weight.shape()) + " does not take 2x" + std::to_string(c) +
                         " inputs");
  // W·[F_i, F_j − F_i] = F_i·(W_top − W_bottom) + F_j·W_bottom, and LeakyReLU is
  // monotone, so the max over neighbors moves inside onto the F_j term.
  std::vector<std::size_t> top(c), bottom(c);
  std::iota(top.begin(), top.end(), 0);
  std::iota(bottom.begin(), bottom.end(), c);
  const auto w_top = ad::gather_rows(weight, top), w_bottom = ad::gather_rows(weight, bottom);
  const auto center = ad::add_row(ad::matmul(features, ad::sub(w_top, w_bottom)), bias);
  const auto neighbor = ad::matmul(features, w_bottom);
  const auto pooled = ad::neighbor_max(neighbor, graph.index, graph.k);
  return ad::leaky_relu(ad::add(center, pooled), slope);
}

ad::Tensor encode_global(ad::Tape& tape, const geom::PointCloud& cloud, const EncoderConfig& config,
                         const BoundParams& params, const geom::NeighborTable* spatial) {
  if (cloud.size() <= config.k)
    throw std::invalid_argument("cloud of " + std::to_string(cloud.size()) + " points is too small for k = " +
                                std::to_string(config.k));
  const auto rows = cloud.to_rows();
  auto f = tape.constant(ad::Array({cloud.size(), 3}, std::vector<double>(rows.begin(), rows.end())));
  geom::NeighborTable graph = spatial ? *spatial : geom::knn(cloud, config.k);
  for (std::size_t l = 0; l < config.layers; ++l) {
    if (l > 0 && config.feature_space_graph) graph = geom::knn_gram(f.data(), f.cols(), config.k);
    f = edge_conv_layer(f, graph, params.global_w[l], params.global_b[l], config.slope);
  }
  return ad::reduce_max(f);
}

ad::Tensor encode_invariant(ad::Tape& tape, const features::EdgeFeatures& edges, const EncoderConfig& config,
                            const BoundParams& params) {
  if (edges.graph.n <= config.k)
    throw std::invalid_argument("cloud of " + std::to_string(edges.graph.n) + " points is too small for k = " +
                                std::to_string(config.k));
  auto f = features::invariant_point_embed(tape, edges, params.embed_w, params.embed_b, config.slope);
  for (std::size_t l = 1; l < config.layers; ++l)
    f = edge_conv_layer(f, edges.graph, params.invariant_w[l - 1], params.invariant_b[l - 1], config.slope);
  return ad::reduce_max(f);
}

std::vector<double> encode_global(const geom::PointCloud& cloud, const ModelParams& params) {
  ad::Tape tape;
  const auto bound = bind(tape, params, false);
  const auto out = encode_global(tape, cloud, params.config().encoder, bound);
  return {out.data().begin(), out.data().end()};
}

std::vector<double> encode_invariant(const geom::PointCloud& cloud, const ModelParams& params) {
  const auto& cfg = params.config();
  if (cloud.size() <= cfg.encoder.k)
    throw std::invalid_argument("cloud of " + std::to_string(cloud.size()) + " points is too small for k = " +
                                std::to_string(cfg.encoder.k));
  ad::Tape tape;
  const auto bound = bind(tape, params, false);
  const auto edges = features::compute_edge_features(cloud, cfg.features, cfg.encoder.k);
  const auto out = encode_invariant(tape, edges, cfg.encoder, bound);
  return {out.data().begin(), out.data().end()};
}

}  // namespace upcr::model
