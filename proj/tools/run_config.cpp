#include "run_config.hpp"

#include <cstdio>
#include <fstream>
#include <iterator>
#include <sstream>

#include "upcr/geom/rotation.hpp"

namespace upcr::cli {

void apply_preset(RunConfig& config, const std::string& name) {
  if (name == "full") {
    config.model.encoder = model::EncoderConfig::full();
    config.protocol.points = 1024;
  } else if (name == "desk") {
    config.model.encoder = model::EncoderConfig::desk();
    config.protocol.points = 256;
  } else {
    throw std::invalid_argument("unknown preset '" + name + "' (expected full or desk)");
  }
  config.preset = name;
}

nlohmann::ordered_json to_json(const RunConfig& c) {
  const auto& e = c.model.encoder;
  nlohmann::ordered_json j;
  j["seed"] = c.seed;
  j["preset"] = c.preset;
  j["model"] = {
      {"k", e.k},
      {"m", e.m},
      {"layers", e.layers},
      {"widths", e.widths},
      {"slope", e.slope},
      {"feature_space_graph", e.feature_space_graph},
      {"features", std::string(features::to_string(c.model.features.kind))},
      {"spfh_bins", c.model.features.spfh_bins},
      {"pfh_bins", c.model.features.pfh_bins},
      {"rotation", std::string(geom::to_string(c.model.rotation))},
      {"head_hidden", c.model.head_hidden},
      {"pose_input", std::string(model::to_string(c.model.pose_input))},
  };
  const auto& p = c.protocol;
  j["data"] = {
      {"setting", std::string(data::to_string(p.setting))},
      {"pairing", std::string(data::to_string(p.pairing))},
      {"pose_regime", std::string(data::to_string(p.pose_regime))},
      {"points", p.points},
      {"partial_keep", p.partial_keep},
      {"noise_sigma", p.noise ? p.noise->sigma : 0.0},
      {"noise_clip", p.noise ? p.noise->clip : 0.0},
      {"categories", c.categories},
      {"shapes_per_category", c.shapes_per_category},
      {"train_pairs", c.train_pairs},
      {"test_pairs", c.test_pairs},
  };
  j["optim"] = {
      {"epochs", c.train.epochs},
      {"lr", c.train.lr},
      {"batch_size", c.train.batch_size},
      {"clip_norm", c.train.clip_norm},
      {"cosine_decay", c.train.cosine_decay},
      {"finetune_epochs", c.finetune_epochs},
      {"finetune_lr", c.finetune_lr},
  };
  return j;
}

nlohmann::ordered_json seeds_json(const RunConfig& c) {
  return {{"seed", c.seed},
          {"split", c.split_seed()},
          {"train_data", c.train_data_seed()},
          {"test_data", c.test_data_seed()},
          {"init", c.init_seed()},
          {"shuffle", c.train.seed}};
}

std::string file_hash(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read '" + path.string() + "'");
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (std::istreambuf_iterator<char> it(in), end; it != end; ++it) {
    h ^= static_cast<unsigned char>(*it);
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

namespace {

std::string sample_name(std::size_t index, const char* role) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%04zu_%s.xyz", index, role);
  return buf;
}

}  // namespace

void write_split(const std::filesystem::path& dir, const std::vector<data::DatasetSample>& samples) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create '" + dir.string() + "': " + ec.message());
  std::ostringstream poses;
  poses << "index,category,r00,r01,r02,r10,r11,r12,r20,r21,r22,t0,t1,t2\n";
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const auto& s = samples[i];
    data::save_cloud(s.source, dir / sample_name(i, "source"));
    data::save_cloud(s.target, dir / sample_name(i, "target"));
    char buf[64];
    poses << i << ',' << s.category;
    for (int r = 0; r < 3; ++r)
      for (int col = 0; col < 3; ++col) {
        std::snprintf(buf, sizeof buf, ",%.17g", s.gt.rotation(r, col));
        poses << buf;
      }
    for (int r = 0; r < 3; ++r) {
      std::snprintf(buf, sizeof buf, ",%.17g", s.gt.translation[r]);
      poses << buf;
    }
    poses << '\n';
  }
  std::ofstream out(dir / "poses.csv", std::ios::binary);
  out << poses.str();
  if (!out) throw IoError("cannot write '" + (dir / "poses.csv").string() + "'");
}

std::vector<data::DatasetSample> read_split(const std::filesystem::path& dir, const data::Protocol& protocol) {
  const auto pose_path = dir / "poses.csv";
  std::ifstream in(pose_path);
  if (!in) throw IoError("cannot read '" + pose_path.string() + "'");
  std::vector<data::DatasetSample> samples;
  std::string line;
  std::getline(in, line);  // header
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::vector<double> v;
    std::stringstream row(line);
    for (std::string cell; std::getline(row, cell, ',');) {
      try {
        v.push_back(std::stod(cell));
      } catch (const std::exception&) {
        throw IoError(pose_path.string() + ": line " + std::to_string(line_no) + ": bad number '" + cell + "'");
      }
    }
    if (v.size() != 14)
      throw IoError(pose_path.string() + ": line " + std::to_string(line_no) + ": expected 14 columns");
    data::DatasetSample s;
    const auto index = static_cast<std::size_t>(v[0]);
    s.category = static_cast<std::uint64_t>(v[1]);
    for (int r = 0; r < 3; ++r) {
      for (int col = 0; col < 3; ++col) s.gt.rotation(r, col) = v[2 + 3 * r + col];
      s.gt.translation[r] = v[11 + r];
    }
    for (auto [cloud, role] : {std::pair{&s.source, "source"}, std::pair{&s.target, "target"}}) {
      const auto path = dir / sample_name(index, role);
      try {
        *cloud = data::load_cloud(path);
      } catch (const std::exception& e) {
        throw IoError(path.string() + ": " + e.what());
      }
    }
    s.protocol = protocol;
    samples.push_back(std::move(s));
  }
  if (samples.empty()) throw IoError("'" + pose_path.string() + "' lists no samples");
  return samples;
}

}  // namespace upcr::cli
