#include "cli.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <ostream>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "run_config.hpp"
#include "upcr/eval/evalbench.hpp"
#include "upcr/geom/rotation.hpp"
#include "upcr/model/separation.hpp"

namespace upcr::cli {
namespace {

namespace fs = std::filesystem;
using nlohmann::ordered_json;

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// INI reader that accepts `[model]`, `[data]` and `[optim]` sections and
/// checks each key against the section its option belongs to. Keys may use
/// '_' or '-'.
class SectionedIni : public CLI::ConfigINI {
 public:
  explicit SectionedIni(std::shared_ptr<const std::map<std::string, std::string>> sections)
      : sections_(std::move(sections)) {}

  std::vector<CLI::ConfigItem> from_config(std::istream& input) const override {
    std::vector<CLI::ConfigItem> out;
    for (auto item : CLI::ConfigINI::from_config(input)) {
      if (item.name == "++" || item.name == "--") continue;
      std::replace(item.name.begin(), item.name.end(), '_', '-');
      const std::string section = item.parents.empty() ? "" : item.parents.front();
      if (item.parents.size() > 1) throw CLI::ConfigError("nested section in key '" + item.fullname() + "'");
      const auto it = sections_->find(item.name);
      if (it == sections_->end())
        throw CLI::ConfigError("unknown configuration key '" + item.fullname() + "'");
      if (it->second != section && !(section == "default" && it->second.empty()))
        throw CLI::ConfigError("key '" + item.name + "' belongs in " +
                               (it->second.empty() ? std::string("the top level") : "[" + it->second + "]"));
      item.parents.clear();
      out.push_back(std::move(item));
    }
    return out;
  }

 private:
  std::shared_ptr<const std::map<std::string, std::string>> sections_;
};

/// The configurable options shared by every subcommand. Values start from
/// the preset; the config file and then the command line override them.
class SharedOptions {
 public:
  explicit SharedOptions(CLI::App& app) : sections_(std::make_shared<std::map<std::string, std::string>>()) {
    const RunConfig d;
    top(app);
    auto* model = app.add_option_group("model", "Model options ([model] section)");
    add<std::size_t>(model, "model", "k", d.model.encoder.k, "neighbors per point",
                     [](RunConfig& c, auto v) { c.model.encoder.k = v; });
    add<std::size_t>(model, "model", "m", 0, "pooled representation width",
                     [](RunConfig& c, auto v) { c.model.encoder.m = v; }, "preset: full 512, desk 64");
    add<std::size_t>(model, "model", "layers", d.model.encoder.layers, "edge-conv layers per branch",
                     [](RunConfig& c, auto v) { c.model.encoder.layers = v; });
    add<std::vector<std::size_t>>(model, "model", "widths", {}, "per-layer widths, comma separated",
                                  [](RunConfig& c, const auto& v) { c.model.encoder.widths = v; },
                                  "preset: full 64,64,128,256,512, desk 16,16,32,32,64");
    add<double>(model, "model", "slope", d.model.encoder.slope, "LeakyReLU negative slope",
                [](RunConfig& c, auto v) { c.model.encoder.slope = v; });
    add<bool>(model, "model", "feature-space-graph", d.model.encoder.feature_space_graph,
              "rebuild the global branch's graph from each layer's features",
              [](RunConfig& c, auto v) { c.model.encoder.feature_space_graph = v; });
    add<std::string>(model, "model", "features", "distance", "invariant features",
                     [](RunConfig& c, const auto& v) { c.model.features.kind = features::feature_kind_from_string(v); })
        ->check(CLI::IsMember(
            {"distance", "ppf", "spfh", "pfh", "distance+ppf", "distance+spfh", "distance+ppf+spfh"}));
    add<std::size_t>(model, "model", "spfh-bins", d.model.features.spfh_bins, "SPFH bins per angle",
                     [](RunConfig& c, auto v) { c.model.features.spfh_bins = v; });
    add<std::size_t>(model, "model", "pfh-bins", d.model.features.pfh_bins, "PFH bins per angle",
                     [](RunConfig& c, auto v) { c.model.features.pfh_bins = v; });
    add<std::string>(model, "model", "rotation", "euler", "rotation parameterization",
                     [](RunConfig& c, const auto& v) { c.model.rotation = geom::rotation_mode_from_string(v); })
        ->check(CLI::IsMember({"euler", "quaternion", "sixd", "matrix"}));
    add<std::vector<std::size_t>>(model, "model", "head-hidden", d.model.head_hidden, "pose head hidden widths",
                                  [](RunConfig& c, const auto& v) { c.model.head_hidden = v; }, "256,128");
    add<std::string>(model, "model", "pose-input", "raw", "pose head input scaling",
                     [](RunConfig& c, const auto& v) { c.model.pose_input = model::pose_input_from_string(v); })
        ->check(CLI::IsMember({"raw", "width_scaled"}));
    model_end_ = bindings_.size();

    auto* data = app.add_option_group("data", "Data options ([data] section)");
    add<std::string>(data, "data", "setting", "UPC", "UPC, UC or ND",
                     [](RunConfig& c, const auto& v) { c.protocol.setting = data::setting_from_string(v); })
        ->check(CLI::IsMember({"UPC", "UC", "ND", "upc", "uc", "nd"}));
    add<std::string>(data, "data", "pairing", "consistent", "consistent or partial",
                     [](RunConfig& c, const auto& v) { c.protocol.pairing = data::pairing_from_string(v); })
        ->check(CLI::IsMember({"consistent", "partial"}));
    add<std::string>(data, "data", "pose-regime", "modelnet", "transform sampler",
                     [](RunConfig& c, const auto& v) { c.protocol.pose_regime = data::pose_regime_from_string(v); })
        ->check(CLI::IsMember({"modelnet", "sevenscenes"}));
    add<std::size_t>(data, "data", "points", 0, "points per cloud",
                     [](RunConfig& c, auto v) { c.protocol.points = v; }, "preset: full 1024, desk 256");
    add<std::size_t>(data, "data", "partial-keep", d.protocol.partial_keep, "points kept by partial pairing",
                     [](RunConfig& c, auto v) { c.protocol.partial_keep = v; });
    add<double>(data, "data", "noise-sigma", 0.0, "Gaussian noise sigma, 0 = the setting's default",
                [](RunConfig& c, auto v) {
                  if (v > 0) c.protocol.noise = data::NoiseSpec{v, c.protocol.noise ? c.protocol.noise->clip : 0.05};
                });
    add<double>(data, "data", "noise-clip", 0.05, "noise clip (used with noise-sigma)", [](RunConfig& c, auto v) {
      if (c.protocol.noise) c.protocol.noise->clip = v;
    });
    add<std::uint64_t>(data, "data", "categories", d.categories, "shape categories",
                       [](RunConfig& c, auto v) { c.categories = v; });
    add<std::size_t>(data, "data", "shapes-per-category", d.shapes_per_category, "shapes per category",
                     [](RunConfig& c, auto v) { c.shapes_per_category = v; });
    add<std::size_t>(data, "data", "train-pairs", d.train_pairs, "training pairs",
                     [](RunConfig& c, auto v) { c.train_pairs = v; });
    add<std::size_t>(data, "data", "test-pairs", d.test_pairs, "held-out pairs",
                     [](RunConfig& c, auto v) { c.test_pairs = v; });

    auto* optim = app.add_option_group("optim", "Optimization options ([optim] section)");
    add<std::size_t>(optim, "optim", "epochs", d.train.epochs, "training epochs",
                     [](RunConfig& c, auto v) { c.train.epochs = v; });
    add<double>(optim, "optim", "lr", d.train.lr, "training learning rate", [](RunConfig& c, auto v) { c.train.lr = v; });
    add<std::size_t>(optim, "optim", "batch-size", d.train.batch_size, "pairs per Adam step",
                     [](RunConfig& c, auto v) { c.train.batch_size = v; });
    add<double>(optim, "optim", "clip-norm", d.train.clip_norm, "global gradient-norm clip, 0 = off",
                [](RunConfig& c, auto v) { c.train.clip_norm = v; });
    add<bool>(optim, "optim", "cosine-decay", d.train.cosine_decay, "cosine learning-rate decay",
              [](RunConfig& c, auto v) { c.train.cosine_decay = v; });
    add<std::size_t>(optim, "optim", "finetune-epochs", d.finetune_epochs, "fine-tune epochs",
                     [](RunConfig& c, auto v) { c.finetune_epochs = v; });
    add<double>(optim, "optim", "finetune-lr", d.finetune_lr, "fine-tune learning rate",
                [](RunConfig& c, auto v) { c.finetune_lr = v; });

    app.config_formatter(std::make_shared<SectionedIni>(sections_));
  }

  RunConfig resolve() const {
    RunConfig c;
    c.seed = seed_;
    try {
      apply_preset(c, preset_);
      for (const auto& b : bindings_)
        if (b.option->count() > 0) b.apply(c);
      c.train.seed = c.seed;
      c.protocol.validate();
      if (c.train.batch_size == 0) throw std::invalid_argument("batch size must be positive");
    } catch (const std::invalid_argument& e) {
      throw UsageError(e.what());
    }
    return c;
  }

  /// `base` with the explicitly given model options (and preset) applied.
  model::ModelConfig overlay_model(const model::ModelConfig& base) const {
    RunConfig c;
    c.model = base;
    try {
      if (preset_option_->count() > 0) {
        RunConfig p;
        apply_preset(p, preset_);
        c.model.encoder = p.model.encoder;
      }
      for (std::size_t i = 0; i < model_end_; ++i)
        if (bindings_[i].option->count() > 0) bindings_[i].apply(c);
    } catch (const std::invalid_argument& e) {
      throw UsageError(e.what());
    }
    return c.model;
  }

  /// Whether any model option (or the preset) was given explicitly.
  bool model_overridden() const {
    if (preset_option_->count() > 0) return true;
    for (std::size_t i = 0; i < model_end_; ++i)
      if (bindings_[i].option->count() > 0) return true;
    return false;
  }

  const std::optional<std::string>& manifest() const { return manifest_; }

 private:
  struct Binding {
    CLI::Option* option;
    std::function<void(RunConfig&)> apply;
  };

  void top(CLI::App& app) {
    app.set_config("--config", "", "key = value file; [model], [data] and [optim] sections");
    (*sections_)["seed"] = "";
    (*sections_)["preset"] = "";
    bindings_.reserve(40);
    app.add_option("--seed", seed_, "seed for every random stream")->capture_default_str();
    preset_option_ = app.add_option("--preset", preset_, "model and cloud-size preset")
                         ->capture_default_str()
                         ->check(CLI::IsMember({"full", "desk"}));
    app.add_option("--manifest", manifest_, "run manifest path")
        ->default_str("<output>.manifest.json or upcr-<command>.manifest.json");
  }

  template <class T, class Apply>
  CLI::Option* add(CLI::App* group, const std::string& section, const std::string& key, T initial,
                   const std::string& help, Apply apply, const char* shown_default = nullptr) {
    auto value = std::make_shared<T>(std::move(initial));
    auto* opt = group->add_option("--" + key, *value, help);
    if constexpr (requires { value->begin(); } && !std::is_same_v<T, std::string>) opt->delimiter(',');
    if (shown_default)
      opt->default_str(shown_default);
    else
      opt->capture_default_str();
    (*sections_)[key] = section;
    bindings_.push_back({opt, [value, apply](RunConfig& c) { apply(c, *value); }});
    return opt;
  }

  std::shared_ptr<std::map<std::string, std::string>> sections_;
  std::vector<Binding> bindings_;
  std::size_t model_end_ = 0;
  std::uint64_t seed_ = 7;
  std::string preset_ = "full";
  CLI::Option* preset_option_ = nullptr;
  std::optional<std::string> manifest_;
};

/// For commands that build a fresh model from the resolved options.
void require_valid_model(const RunConfig& c) {
  try {
    c.model.validate();
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
}

/// Inputs, outputs and the resolved configuration of one run.
class Manifest {
 public:
  Manifest(std::string command, const std::vector<std::string>& args) : command_(std::move(command)), args_(args) {}

  void input(const fs::path& path) { inputs_[path.string()] = file_hash(path); }
  void output(const fs::path& path) { outputs_[path.string()] = file_hash(path); }
  void result(const std::string& key, ordered_json value) { results_[key] = std::move(value); }

  void write(const fs::path& path, const RunConfig& config) const {
    ordered_json j;
    j["tool"] = "upcr";
    j["command"] = command_;
    j["arguments"] = args_;
    j["config"] = to_json(config);
    j["seeds"] = seeds_json(config);
    j["inputs"] = inputs_;
    j["outputs"] = outputs_;
    if (!results_.empty()) j["results"] = results_;
    std::ofstream out(path, std::ios::binary);
    out << j.dump(2) << '\n';
    if (!out) throw IoError("cannot write manifest '" + path.string() + "'");
  }

 private:
  std::string command_;
  std::vector<std::string> args_;
  ordered_json inputs_ = ordered_json::object(), outputs_ = ordered_json::object(), results_ = ordered_json::object();
};

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
  if (!out) throw IoError("cannot write '" + path.string() + "'");
}

std::vector<data::DatasetSample> load_samples(const RunConfig& c, bool test, const std::optional<fs::path>& dir,
                                              Manifest& manifest) {
  if (dir) {
    const auto split = *dir / (test ? "test" : "train");
    auto samples = read_split(split, c.protocol);
    manifest.input(split / "poses.csv");
    return samples;
  }
  const auto [train, held_out] = data::split_dataset(c.protocol.setting, c.categories, c.shapes_per_category,
                                                     c.split_seed());
  return test ? data::make_dataset(c.protocol, held_out, c.test_pairs, c.test_data_seed())
              : data::make_dataset(c.protocol, train, c.train_pairs, c.train_data_seed());
}

std::vector<training::CloudPair> cloud_pairs(const std::vector<data::DatasetSample>& samples) {
  std::vector<training::CloudPair> pairs;
  pairs.reserve(samples.size());
  for (const auto& s : samples) pairs.push_back({s.source, s.target});
  return pairs;
}

training::Checkpoint load_model(const fs::path& path, RunConfig& config, const SharedOptions& shared,
                                Manifest& manifest) {
  training::Checkpoint ckpt;
  try {
    ckpt = training::load_checkpoint(path);
  } catch (const training::CheckpointError& e) {
    throw IoError(path.string() + ": " + e.what());
  }
  if (shared.model_overridden())
    training::require_compatible(shared.overlay_model(ckpt.params.config()), ckpt.params.config());
  config.model = ckpt.params.config();
  manifest.input(path);
  return ckpt;
}

geom::PointCloud read_cloud(const fs::path& path, Manifest& manifest) {
  geom::PointCloud cloud;
  try {
    cloud = data::load_cloud(path);
  } catch (const std::exception& e) {
    throw IoError(path.string() + ": " + e.what());
  }
  manifest.input(path);
  return cloud;
}

training::EpochCallback progress(std::ostream& err, std::size_t epochs) {
  return [&err, epochs](const training::EpochReport& r) {
    char buf[96];
    std::snprintf(buf, sizeof buf, "epoch %zu/%zu mean loss %.6f\n", r.epoch, epochs, r.mean_loss);
    err << buf << std::flush;
  };
}

/// 3 rows of 4 numbers with 9 significant digits. Entries below 1e-9 in
/// magnitude print as 0.
std::string format_transform(const geom::RigidTransform& t) {
  std::string out;
  char buf[32];
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 4; ++c) {
      double v = c < 3 ? t.rotation(r, c) : t.translation[r];
      if (std::abs(v) < 1e-9) v = 0.0;
      std::snprintf(buf, sizeof buf, "%.9g", v);
      out += buf;
      out += c < 3 ? ' ' : '\n';
    }
  }
  return out;
}

std::vector<std::string> split_list(const std::string& list) {
  std::vector<std::string> items;
  std::stringstream ss(list);
  for (std::string item; std::getline(ss, item, ',');)
    if (!item.empty()) items.push_back(item);
  return items;
}

/// Subcommand flags.
struct GenArgs {
  std::string out;
  std::string split = "both";
};
struct TrainArgs {
  std::string out;
  std::optional<std::string> data, loss_csv;
};
struct FinetuneArgs {
  std::string model, out;
  std::optional<std::string> data, loss_csv;
};
struct RegisterArgs {
  std::string source, target, model;
  std::optional<std::string> out;
};
struct BenchArgs {
  std::optional<std::string> model, data, csv;
  std::string methods;
  std::optional<std::size_t> pairs;
  bool finetune = false;
  std::string rotation_error = "relative";
};
struct SweepArgs {
  std::string model;
  std::optional<std::string> data, csv;
  std::vector<double> ratios{0, 10, 20, 30};
};
struct TimeArgs {
  std::optional<std::string> model, csv;
  std::string methods = "upcr,icp";
  std::size_t reps = 5;
};

fs::path manifest_path(const SharedOptions& shared, const std::string& command, const std::optional<fs::path>& artifact) {
  if (shared.manifest()) return *shared.manifest();
  if (artifact) return artifact->string() + ".manifest.json";
  return "upcr-" + command + ".manifest.json";
}

int cmd_gen(const GenArgs& a, const RunConfig& c, const SharedOptions& shared, Manifest& m, std::ostream& out) {
  const fs::path dir = a.out;
  for (const bool test : {false, true}) {
    if ((test && a.split == "train") || (!test && a.split == "test")) continue;
    const auto samples = load_samples(c, test, std::nullopt, m);
    const auto split = dir / (test ? "test" : "train");
    write_split(split, samples);
    m.output(split / "poses.csv");
    for (std::size_t i = 0; i < samples.size(); ++i)
      for (const char* role : {"source", "target"}) {
        char name[32];
        std::snprintf(name, sizeof name, "%04zu_%s.xyz", i, role);
        m.output(split / name);
      }
    out << "wrote " << samples.size() << " pairs to " << split.string() << '\n';
  }
  m.write(shared.manifest() ? fs::path(*shared.manifest()) : dir / "manifest.json", c);
  return 0;
}

int cmd_train(const TrainArgs& a, RunConfig c, const SharedOptions& shared, Manifest& m, std::ostream& out,
              std::ostream& err) {
  require_valid_model(c);
  const auto samples = load_samples(c, false, a.data ? std::optional<fs::path>(*a.data) : std::nullopt, m);
  Rng rng(c.init_seed());
  const model::ModelParams init(c.model, rng);
  const auto result = training::train(init, cloud_pairs(samples), c.train, progress(err, c.train.epochs));
  training::save_checkpoint(a.out, {result.params, result.optimizer, {c.train.epochs, c.seed, result.loss_curve}});
  m.output(a.out);
  if (a.loss_csv) {
    write_text(*a.loss_csv, training::loss_csv(result.loss_curve));
    m.output(*a.loss_csv);
  }
  if (!result.loss_curve.empty()) m.result("final_loss", result.loss_curve.back());
  out << "saved " << a.out << " (" << result.params.parameter_count() << " parameters)\n";
  m.write(manifest_path(shared, "train", fs::path(a.out)), c);
  return 0;
}

int cmd_finetune(const FinetuneArgs& a, RunConfig c, const SharedOptions& shared, Manifest& m, std::ostream& out,
                 std::ostream& err) {
  auto ckpt = load_model(a.model, c, shared, m);
  const auto samples = load_samples(c, true, a.data ? std::optional<fs::path>(*a.data) : std::nullopt, m);
  auto cfg = c.train;
  cfg.epochs = c.finetune_epochs;
  cfg.lr = c.finetune_lr;
  const auto result = training::fine_tune(ckpt.params, cloud_pairs(samples), cfg, progress(err, cfg.epochs));
  auto history = ckpt.meta.loss_history;
  history.insert(history.end(), result.loss_curve.begin(), result.loss_curve.end());
  training::save_checkpoint(a.out, {result.params, result.optimizer, {ckpt.meta.epoch + cfg.epochs, c.seed, history}});
  m.output(a.out);
  if (a.loss_csv) {
    write_text(*a.loss_csv, training::loss_csv(result.loss_curve));
    m.output(*a.loss_csv);
  }
  out << "saved " << a.out << '\n';
  m.write(manifest_path(shared, "finetune", fs::path(a.out)), c);
  return 0;
}

int cmd_register(const RegisterArgs& a, RunConfig c, const SharedOptions& shared, Manifest& m, std::ostream& out) {
  const auto ckpt = load_model(a.model, c, shared, m);
  const auto source = read_cloud(a.source, m), target = read_cloud(a.target, m);
  const auto reg = model::register_pair(source, target, ckpt.params);
  out << format_transform(reg.transform);
  if (a.out) {
    try {
      data::save_cloud(geom::apply_transform(reg.transform, source), *a.out);
    } catch (const std::exception& e) {
      throw IoError(*a.out + ": " + e.what());
    }
    m.output(*a.out);
  }
  m.write(manifest_path(shared, "register", a.out ? std::optional<fs::path>(*a.out) : std::nullopt), c);
  return 0;
}

std::vector<eval::LabeledReport> bench_reports(const BenchArgs& a, RunConfig& c, const SharedOptions& shared,
                                               Manifest& m, std::ostream& err) {
  if (a.pairs) c.test_pairs = *a.pairs;
  std::optional<training::Checkpoint> ckpt;
  if (a.model) ckpt = load_model(*a.model, c, shared, m);
  const auto samples = load_samples(c, true, a.data ? std::optional<fs::path>(*a.data) : std::nullopt, m);
  const auto truths = eval::ground_truths(samples);
  const auto mode = a.rotation_error == "absolute" ? eval::RotationError::absolute : eval::RotationError::relative;
  const auto tags = eval::protocol_tags(c.protocol);
  std::vector<eval::LabeledReport> rows;
  const auto add = [&](const std::string& label, const std::vector<geom::RigidTransform>& predictions) {
    auto report = eval::metric_report(predictions, truths, mode);
    report.tags = tags;
    rows.push_back({label, std::move(report)});
  };
  const auto methods = a.methods.empty() ? split_list(ckpt ? "upcr,icp" : "icp") : split_list(a.methods);
  for (const auto& method : methods) {
    if (method == "upcr") {
      if (!ckpt) throw UsageError("method 'upcr' needs --model");
      add("upcr", eval::predict(ckpt->params, samples));
      if (a.finetune) {
        auto cfg = c.train;
        cfg.epochs = c.finetune_epochs;
        cfg.lr = c.finetune_lr;
        const auto tuned = training::fine_tune(ckpt->params, cloud_pairs(samples), cfg, progress(err, cfg.epochs));
        add("upcr+ft", eval::predict(tuned.params, samples));
      }
    } else if (method == "icp") {
      add("icp", eval::predict_icp(samples));
    } else if (method == "icp+pfh" || method == "icp+spfh") {
      features::FeatureSpec spec;
      spec.kind = method == "icp+pfh" ? features::FeatureKind::pfh : features::FeatureKind::spfh;
      add(method, eval::predict_icp(samples, {}, &spec));
    } else {
      throw UsageError("unknown method '" + method + "' (expected upcr, icp, icp+pfh or icp+spfh)");
    }
  }
  return rows;
}

int cmd_bench(const BenchArgs& a, RunConfig c, const SharedOptions& shared, Manifest& m, std::ostream& out,
              std::ostream& err) {
  const auto rows = bench_reports(a, c, shared, m, err);
  out << eval::metrics_table(rows);
  if (a.csv) {
    write_text(*a.csv, eval::metrics_csv(rows));
    m.output(*a.csv);
  }
  for (const auto& r : rows) m.result(r.label + ".mae_rot_deg", r.report.mae_rot_deg);
  m.write(manifest_path(shared, "bench", a.csv ? std::optional<fs::path>(*a.csv) : std::nullopt), c);
  return 0;
}

int cmd_sweep(const SweepArgs& a, RunConfig c, const SharedOptions& shared, Manifest& m, std::ostream& out) {
  for (double r : a.ratios)
    if (!(r >= 0.0 && r < 100.0)) throw UsageError("outlier ratios must lie in [0, 100)");
  const auto ckpt = load_model(a.model, c, shared, m);
  const auto samples = load_samples(c, true, a.data ? std::optional<fs::path>(*a.data) : std::nullopt, m);
  const auto rows = eval::outlier_sweep(ckpt.params, samples, a.ratios, c.seed);
  out << eval::sweep_table(rows);
  if (a.csv) {
    write_text(*a.csv, eval::sweep_csv(rows));
    m.output(*a.csv);
  }
  m.write(manifest_path(shared, "sweep-outliers", a.csv ? std::optional<fs::path>(*a.csv) : std::nullopt), c);
  return 0;
}

int cmd_time(const TimeArgs& a, RunConfig c, const SharedOptions& shared, Manifest& m, std::ostream& out) {
  if (a.reps < 3) throw UsageError("--reps must be at least 3");
  std::optional<model::ModelParams> params;
  if (a.model) params = load_model(*a.model, c, shared, m).params;
  std::string csv = "method,points,repetitions,mean_ms,stddev_ms\n";
  char buf[160];
  std::snprintf(buf, sizeof buf, "%-24s %8s %12s %12s\n", "method", "points", "mean_ms", "stddev_ms");
  out << buf;
  for (const auto& method : split_list(a.methods)) {
    eval::TimingReport t;
    std::string label = method;
    if (method == "upcr") {
      if (!params) {
        require_valid_model(c);
        Rng rng(c.init_seed());
        params.emplace(c.model, rng);
      }
      label += "(" + std::string(features::to_string(params->config().features.kind)) + ")";
      t = eval::time_registration(*params, c.protocol.points, a.reps, c.seed);
    } else if (method == "icp") {
      t = eval::time_icp(c.protocol.points, a.reps, c.seed);
    } else {
      throw UsageError("unknown method '" + method + "' (expected upcr or icp)");
    }
    std::snprintf(buf, sizeof buf, "%-24s %8zu %12.3f %12.3f\n", label.c_str(), c.protocol.points, t.mean_ms,
                  t.stddev_ms);
    out << buf;
    std::snprintf(buf, sizeof buf, "%s,%zu,%zu,%.9g,%.9g\n", label.c_str(), c.protocol.points, t.repetitions,
                  t.mean_ms, t.stddev_ms);
    csv += buf;
    m.result(label + ".mean_ms", t.mean_ms);
  }
  if (a.csv) {
    write_text(*a.csv, csv);
    m.output(*a.csv);
  }
  m.write(manifest_path(shared, "time", a.csv ? std::optional<fs::path>(*a.csv) : std::nullopt), c);
  return 0;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app("Unsupervised point cloud registration: data generation, training, registration and benchmarks",
               "upcr");
  app.fallthrough();
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "Print help for every subcommand and exit");
  app.footer("Shared options may follow the subcommand. Precedence: preset < --config file < flags.");
  SharedOptions shared(app);

  GenArgs gen;
  auto* gen_cmd = app.add_subcommand("gen", "Write train/test cloud pairs and their poses to a directory");
  gen_cmd->add_option("--out", gen.out, "output directory")->required();
  gen_cmd->add_option("--split", gen.split, "which split to write")
      ->capture_default_str()
      ->check(CLI::IsMember({"train", "test", "both"}));

  TrainArgs train;
  auto* train_cmd = app.add_subcommand("train", "Train a model on the training split");
  train_cmd->add_option("--out", train.out, "checkpoint to write")->required();
  train_cmd->add_option("--data", train.data, "dataset directory from gen (default: generate)");
  train_cmd->add_option("--loss-csv", train.loss_csv, "per-epoch loss CSV");

  FinetuneArgs finetune;
  auto* finetune_cmd = app.add_subcommand("finetune", "Continue training a checkpoint on the held-out split");
  finetune_cmd->add_option("--model", finetune.model, "checkpoint to start from")->required();
  finetune_cmd->add_option("--out", finetune.out, "checkpoint to write")->required();
  finetune_cmd->add_option("--data", finetune.data, "dataset directory from gen (default: generate)");
  finetune_cmd->add_option("--loss-csv", finetune.loss_csv, "per-epoch loss CSV");

  RegisterArgs reg;
  auto* register_cmd = app.add_subcommand("register", "Print the source-to-target transform as a 3x4 matrix");
  register_cmd->add_option("--source", reg.source, "source cloud (.xyz, .off, .ply)")->required();
  register_cmd->add_option("--target", reg.target, "target cloud")->required();
  register_cmd->add_option("--model", reg.model, "checkpoint")->required();
  register_cmd->add_option("--out", reg.out, "write the transformed source here");

  BenchArgs bench;
  auto* bench_cmd = app.add_subcommand("bench", "Metric table for the model and baselines on the held-out split");
  bench_cmd->add_option("--model", bench.model, "checkpoint (needed for method upcr)");
  bench_cmd->add_option("--methods", bench.methods, "comma list of upcr, icp, icp+pfh, icp+spfh")
      ->default_str("upcr,icp with --model, else icp");
  bench_cmd->add_option("--pairs", bench.pairs, "held-out pairs (overrides test-pairs)");
  bench_cmd->add_option("--data", bench.data, "dataset directory from gen (default: generate)");
  bench_cmd->add_flag("--finetune", bench.finetune, "also report the model fine-tuned on the held-out clouds");
  bench_cmd->add_option("--rotation-error", bench.rotation_error, "Euler error of R_gt^T R or per-angle difference")
      ->capture_default_str()
      ->check(CLI::IsMember({"relative", "absolute"}));
  bench_cmd->add_option("--csv", bench.csv, "metrics CSV path");

  SweepArgs sweep;
  auto* sweep_cmd = app.add_subcommand("sweep-outliers", "Model and ICP metrics as outliers replace points");
  sweep_cmd->add_option("--model", sweep.model, "checkpoint")->required();
  sweep_cmd->add_option("--ratios", sweep.ratios, "outlier percentages")->delimiter(',')->capture_default_str();
  sweep_cmd->add_option("--data", sweep.data, "dataset directory from gen (default: generate)");
  sweep_cmd->add_option("--csv", sweep.csv, "sweep CSV path");

  TimeArgs timing;
  auto* time_cmd = app.add_subcommand("time", "Mean wall-clock milliseconds per registered pair");
  time_cmd->add_option("--model", timing.model, "checkpoint (default: freshly initialized model)");
  time_cmd->add_option("--methods", timing.methods, "comma list of upcr, icp")->capture_default_str();
  time_cmd->add_option("--reps", timing.reps, "timed repetitions after one warm-up")->capture_default_str();
  time_cmd->add_option("--csv", timing.csv, "timing CSV path");

  std::vector<std::string> argv_store{"upcr"};
  argv_store.insert(argv_store.end(), args.begin(), args.end());
  std::vector<const char*> argv;
  for (const auto& a : argv_store) argv.push_back(a.c_str());

  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::FileError& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n" << app.help();
    return 2;
  }

  auto* chosen = app.get_subcommands().front();
  const std::string command = chosen->get_name();
  try {
    const RunConfig config = shared.resolve();
    Manifest manifest(command, args);
    if (chosen == gen_cmd) return cmd_gen(gen, config, shared, manifest, out);
    if (chosen == train_cmd) return cmd_train(train, config, shared, manifest, out, err);
    if (chosen == finetune_cmd) return cmd_finetune(finetune, config, shared, manifest, out, err);
    if (chosen == register_cmd) return cmd_register(reg, config, shared, manifest, out);
    if (chosen == bench_cmd) return cmd_bench(bench, config, shared, manifest, out, err);
    if (chosen == sweep_cmd) return cmd_sweep(sweep, config, shared, manifest, out);
    return cmd_time(timing, config, shared, manifest, out);
  } catch (const UsageError& e) {
    err << "error: " << e.what() << "\n\n" << chosen->help();
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
}

}  // namespace upcr::cli
