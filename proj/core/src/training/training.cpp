#include "upcr/training/training.hpp"

#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <numbers>
#include <numeric>
#include <sstream>

#include "upcr/geom/chamfer.hpp"
#include "upcr/random.hpp"

namespace upcr::training {

ad::Tensor unsupervised_loss(const ad::Tensor& source_canonical, const ad::Tensor& target_canonical) {
  return geom::chamfer(source_canonical, target_canonical);
}

OptimState OptimState::fresh(const model::ModelParams& params, AdamConfig hyper) {
  OptimState s;
  s.hyper = hyper;
  for (const auto& e : params.entries()) {
    s.first.emplace_back(e.value.data.size(), 0.0);
    s.second.emplace_back(e.value.data.size(), 0.0);
  }
  return s;
}

void adam_step(model::ModelParams& params, std::span<const std::vector<double>> grads, OptimState& state) {
  auto& entries = params.entries();
  if (grads.size() != entries.size() || state.first.size() != entries.size())
    throw std::invalid_argument("gradient list does not match the parameter list");
  for (std::size_t i = 0; i < entries.size(); ++i) {
    if (grads[i].size() != entries[i].value.data.size() || state.first[i].size() != grads[i].size())
      throw std::invalid_argument("gradient for '" + entries[i].name + "' has the wrong size");
    for (double g : grads[i])
      if (!std::isfinite(g)) throw NumericError("non-finite gradient for parameter '" + entries[i].name + "'");
  }
  const auto& h = state.hyper;
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(h.beta1, t), c2 = 1.0 - std::pow(h.beta2, t);
  for (std::size_t i = 0; i < entries.size(); ++i) {
    auto& w = entries[i].value.data;
    auto& m = state.first[i];
    auto& v = state.second[i];
    for (std::size_t j = 0; j < w.size(); ++j) {
      const double g = grads[i][j];
      m[j] = h.beta1 * m[j] + (1.0 - h.beta1) * g;
      v[j] = h.beta2 * v[j] + (1.0 - h.beta2) * g * g;
      w[j] -= h.lr * (m[j] / c1) / (std::sqrt(v[j] / c2) + h.eps);
    }
  }
}

double pair_loss_and_grad(const model::ModelParams& params, const model::PreparedCloud& source,
                          const model::PreparedCloud& target, std::vector<std::vector<double>>* grads) {
  ad::Tape tape;
  const auto bound = model::bind(tape, params, grads != nullptr);
  const auto pair = model::forward_pair(tape, source, target, params.config(), bound);
  const auto loss = unsupervised_loss(pair.source_canonical, pair.target_canonical);
  if (grads) {
    tape.backward(loss);
    grads->clear();
    for (const auto& t : bound.all) grads->push_back(tape.grad(t));
  }
  return loss.item();
}

namespace {

TrainResult run(model::ModelParams params, std::span<const CloudPair> data, const TrainConfig& config,
                OptimState state, const EpochCallback& on_epoch) {
  if (data.empty()) throw std::invalid_argument("training data is empty");
  if (config.batch_size == 0) throw std::invalid_argument("batch size must be positive");
  std::vector<model::PreparedCloud> sources, targets;
  for (const auto& pair : data) {
    sources.push_back(model::prepare(pair.source, params.config()));
    targets.push_back(model::prepare(pair.target, params.config()));
  }
  Rng rng(config.seed);
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  std::vector<double> curve;
  std::vector<std::vector<double>> grads, batch_grads;
  model::ModelParams last_good = params;  // last parameters with a finite batch loss

  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    state.hyper.lr = config.cosine_decay ? 0.5 * config.lr *
                                               (1.0 + std::cos(std::numbers::pi * static_cast<double>(epoch) /
                                                               static_cast<double>(config.epochs)))
                                         : config.lr;
    rng.shuffle(std::span<std::size_t>(order));
    double total = 0.0;
    for (std::size_t begin = 0; begin < order.size(); begin += config.batch_size) {
      const std::size_t end = std::min(order.size(), begin + config.batch_size);
      const double weight = 1.0 / static_cast<double>(end - begin);
      batch_grads.clear();
      for (std::size_t b = begin; b < end; ++b) {
        const auto diverged = [&](const std::string& why) {
          return TrainingDiverged(why + " in epoch " + std::to_string(epoch + 1), last_good);
        };
        double loss;
        try {
          loss = pair_loss_and_grad(params, sources[order[b]], targets[order[b]], &grads);
        } catch (const ad::DomainError& e) {
          throw diverged(e.what());
        } catch (const geom::GeometryError& e) {
          throw diverged(e.what());
        }
        if (!std::isfinite(loss)) throw diverged("loss became non-finite");
        total += loss;
        if (batch_grads.empty()) {
          batch_grads = grads;
          for (auto& g : batch_grads)
            for (auto& v : g) v *= weight;
        } else {
          for (std::size_t i = 0; i < grads.size(); ++i)
            for (std::size_t j = 0; j < grads[i].size(); ++j) batch_grads[i][j] += weight * grads[i][j];
        }
      }
      if (config.clip_norm > 0.0) {
        double sq = 0.0;
        for (const auto& g : batch_grads)
          for (double v : g) sq += v * v;
        const double norm = std::sqrt(sq);
        if (norm > config.clip_norm)
          for (auto& g : batch_grads)
            for (auto& v : g) v *= config.clip_norm / norm;
      }
      last_good = params;
      try {
        adam_step(params, batch_grads, state);
      } catch (const NumericError& e) {
        throw TrainingDiverged(e.what(), last_good);
      }
    }
    curve.push_back(total / static_cast<double>(data.size()));
    if (on_epoch) on_epoch({epoch + 1, curve.back()});
  }
  state.hyper.lr = config.lr;
  return {std::move(params), std::move(state), std::move(curve)};
}

}  // namespace

TrainResult train(model::ModelParams params, std::span<const CloudPair> data, const TrainConfig& config,
                  const EpochCallback& on_epoch) {
  auto state = OptimState::fresh(params, AdamConfig{config.lr});
  return run(std::move(params), data, config, std::move(state), on_epoch);
}

TrainResult fine_tune(model::ModelParams params, std::span<const CloudPair> data, const TrainConfig& config,
                      const EpochCallback& on_epoch) {
  return train(std::move(params), data, config, on_epoch);
}

// ---- checkpoint serialization -------------------------------------------

namespace {

constexpr char kMagic[4] = {'U', 'P', 'C', 'R'};

class Writer {
 public:
  void bytes(const void* p, std::size_t n) { out_.append(static_cast<const char*>(p), n); }
  void u8(std::uint8_t v) { bytes(&v, 1); }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) u8(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) u8(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void doubles(std::span<const double> v) {
    u64(v.size());
    for (double x : v) f64(x);
  }
  void str(std::string_view s) {
    u32(static_cast<std::uint32_t>(s.size()));
    bytes(s.data(), s.size());
  }
  std::string& buffer() { return out_; }

 private:
  std::string out_;
};

class Reader {
 public:
  explicit Reader(std::string_view in) : in_(in) {}
  void need(std::size_t n) const {
    if (in_.size() - pos_ < n) throw CheckpointError("checkpoint is truncated at byte " + std::to_string(pos_));
  }
  std::uint8_t u8() {
    need(1);
    return static_cast<std::uint8_t>(in_[pos_++]);
  }
  std::uint32_t u32() {
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(u8()) << (8 * i);
    return v;
  }
  std::uint64_t u64() {
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(u8()) << (8 * i);
    return v;
  }
  double f64() { return std::bit_cast<double>(u64()); }
  std::vector<double> doubles() {
    const auto n = u64();
    need(n * 8);
    std::vector<double> v(n);
    for (auto& x : v) x = f64();
    return v;
  }
  std::string str() {
    const auto n = u32();
    need(n);
    std::string s(in_.substr(pos_, n));
    pos_ += n;
    return s;
  }
  std::size_t pos() const { return pos_; }

 private:
  std::string_view in_;
  std::size_t pos_ = 0;
};

std::uint64_t fnv1a(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

void write_config(Writer& w, const model::ModelConfig& c) {
  const auto& e = c.encoder;
  w.u64(e.k);
  w.u64(e.m);
  w.u64(e.layers);
  w.u64(e.widths.size());
  for (auto v : e.widths) w.u64(v);
  w.f64(e.slope);
  w.u8(e.feature_space_graph ? 1 : 0);
  w.str(features::to_string(c.features.kind));
  w.u64(c.features.spfh_bins);
  w.u64(c.features.pfh_bins);
  w.str(geom::to_string(c.rotation));
  w.u64(c.head_hidden.size());
  for (auto v : c.head_hidden) w.u64(v);
  w.str(model::to_string(c.pose_input));
}

model::ModelConfig read_config(Reader& r) {
  model::ModelConfig c;
  auto& e = c.encoder;
  e.k = r.u64();
  e.m = r.u64();
  e.layers = r.u64();
  const auto nw = r.u64();
  r.need(nw * 8);
  e.widths.resize(nw);
  for (auto& v : e.widths) v = r.u64();
  e.slope = r.f64();
  e.feature_space_graph = r.u8() != 0;
  c.features.kind = features::feature_kind_from_string(r.str());
  c.features.spfh_bins = r.u64();
  c.features.pfh_bins = r.u64();
  c.rotation = geom::rotation_mode_from_string(r.str());
  const auto nh = r.u64();
  r.need(nh * 8);
  c.head_hidden.resize(nh);
  for (auto& v : c.head_hidden) v = r.u64();
  c.pose_input = model::pose_input_from_string(r.str());
  return c;
}

}  // namespace

std::string serialize_checkpoint(const Checkpoint& ck) {
  Writer w;
  w.bytes(kMagic, 4);
  w.u32(kCheckpointVersion);
  write_config(w, ck.params.config());
  const auto& entries = ck.params.entries();
  w.u32(static_cast<std::uint32_t>(entries.size()));
  for (const auto& e : entries) {
    w.str(e.name);
    w.u32(static_cast<std::uint32_t>(e.value.shape.size()));
    for (auto d : e.value.shape) w.u64(d);
    for (double v : e.value.data) w.f64(v);
  }
  w.u8(ck.optimizer ? 1 : 0);
  if (ck.optimizer) {
    const auto& s = *ck.optimizer;
    w.f64(s.hyper.lr);
    w.f64(s.hyper.beta1);
    w.f64(s.hyper.beta2);
    w.f64(s.hyper.eps);
    w.u64(s.step);
    for (std::size_t i = 0; i < entries.size(); ++i) {
      w.doubles(s.first[i]);
      w.doubles(s.second[i]);
    }
  }
  w.u64(ck.meta.epoch);
  w.u64(ck.meta.seed);
  w.doubles(ck.meta.loss_history);
  const auto hash = fnv1a(w.buffer());
  w.u64(hash);
  return std::move(w.buffer());
}

Checkpoint deserialize_checkpoint(std::string_view bytes) {
  if (bytes.size() < 16) throw CheckpointError("checkpoint is truncated");
  if (std::memcmp(bytes.data(), kMagic, 4) != 0) throw CheckpointError("not a checkpoint (bad magic)");
  Reader r(bytes);
  for (int i = 0; i < 4; ++i) r.u8();
  const auto version = r.u32();
  if (version != kCheckpointVersion)
    throw CheckpointError("unsupported checkpoint version " + std::to_string(version));
  const auto body = bytes.substr(0, bytes.size() - 8);
  Reader tail(bytes.substr(bytes.size() - 8));
  if (tail.u64() != fnv1a(body)) throw CheckpointError("checkpoint checksum mismatch");

  Reader in(body);
  for (int i = 0; i < 8; ++i) in.u8();
  auto config = read_config(in);
  const auto count = in.u32();
  std::vector<model::ModelParams::Entry> entries;
  for (std::uint32_t i = 0; i < count; ++i) {
    model::ModelParams::Entry e;
    e.name = in.str();
    const auto rank = in.u32();
    ad::Shape shape(rank);
    for (auto& d : shape) d = in.u64();
    const std::size_t n = ad::numel(shape);
    in.need(n * 8);
    std::vector<double> data(n);
    for (auto& v : data) v = in.f64();
    e.value = ad::Array(std::move(shape), std::move(data));
    entries.push_back(std::move(e));
  }
  Checkpoint ck{model::ModelParams(std::move(config), std::move(entries)), std::nullopt, {}};
  if (in.u8()) {
    OptimState s;
    s.hyper.lr = in.f64();
    s.hyper.beta1 = in.f64();
    s.hyper.beta2 = in.f64();
    s.hyper.eps = in.f64();
    s.step = in.u64();
    for (std::size_t i = 0; i < count; ++i) {
      s.first.push_back(in.doubles());
      s.second.push_back(in.doubles());
    }
    ck.optimizer = std::move(s);
  }
  ck.meta.epoch = in.u64();
  ck.meta.seed = in.u64();
  ck.meta.loss_history = in.doubles();
  if (in.pos() != body.size()) throw CheckpointError("trailing bytes after checkpoint body");
  return ck;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint) {
  const auto bytes = serialize_checkpoint(checkpoint);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw CheckpointError("cannot open '" + path.string() + "' for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw CheckpointError("failed writing '" + path.string() + "'");
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open '" + path.string() + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return deserialize_checkpoint(buf.str());
}

void require_compatible(const model::ModelConfig& expected, const model::ModelConfig& actual) {
  if (expected == actual) return;
  std::string why;
  if (expected.encoder.m != actual.encoder.m)
    why = "m " + std::to_string(actual.encoder.m) + " vs " + std::to_string(expected.encoder.m);
  else if (expected.encoder.layers != actual.encoder.layers)
    why = "layers " + std::to_string(actual.encoder.layers) + " vs " + std::to_string(expected.encoder.layers);
  else if (!(expected.features == actual.features))
    why = std::string("feature spec ") + std::string(features::to_string(actual.features.kind)) + " vs " +
          std::string(features::to_string(expected.features.kind));
  else if (expected.rotation != actual.rotation)
    why = std::string("rotation mode ") + std::string(geom::to_string(actual.rotation)) + " vs " +
          std::string(geom::to_string(expected.rotation));
  else
    why = "encoder or head configuration";
  throw CheckpointError("checkpoint configuration mismatch: " + why);
}

std::string loss_csv(std::span<const double> curve) {
  std::string out = "epoch,mean_loss\n";
  char line[64];
  for (std::size_t i = 0; i < curve.size(); ++i) {
    std::snprintf(line, sizeof line, "%zu,%.17g\n", i + 1, curve[i]);
    out += line;
  }
  return out;
}

}  // namespace upcr::training
