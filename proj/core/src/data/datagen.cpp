#include "upcr/data/datagen.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <numeric>
#include <sstream>

#include "upcr/geom/rotation.hpp"

namespace upcr::data {
namespace {

constexpr double kPi = std::numbers::pi;

enum class Primitive { box, cylinder, ellipsoid, torus };

struct Part {
  Primitive kind;
  geom::Vec3 dims;
  geom::Vec3 offset;
  geom::Mat3 orientation;
};

std::vector<Part> category_layout(std::uint64_t category) {
  Rng rng(0x5eed0000ULL + category * 7919ULL);
  const std::size_t count = 2 + category % 3;
  std::vector<Part> parts(count);
  for (auto& p : parts) {
    p.kind = static_cast<Primitive>(rng.below(4));
    for (int a = 0; a < 3; ++a) p.dims[a] = rng.uniform(0.15, 0.8);
    for (int a = 0; a < 3; ++a) p.offset[a] = rng.uniform(-0.6, 0.6);
    const double ax = rng.uniform(0, 2 * kPi), ay = rng.uniform(0, 2 * kPi), az = rng.uniform(0, 2 * kPi);
    p.orientation = geom::rot_z(az) * geom::rot_y(ay) * geom::rot_x(ax);
  }
  return parts;
}

geom::Vec3 sample_primitive(Primitive kind, Rng& rng) {
  switch (kind) {
    case Primitive::box: {
      const auto face = rng.below(6);
      geom::Vec3 u(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1));
      u[static_cast<int>(face / 2)] = face % 2 == 0 ? -1.0 : 1.0;
      return u;
    }
    case Primitive::cylinder: {
      const double th = rng.uniform(0, 2 * kPi);
      return {std::cos(th), std::sin(th), rng.uniform(-1, 1)};
    }
    case Primitive::ellipsoid: {
      geom::Vec3 v;
      do v = geom::Vec3(rng.normal(), rng.normal(), rng.normal());
      while (v.norm() == 0.0);
      return v.normalized();
    }
    case Primitive::torus: {
      const double th = rng.uniform(0, 2 * kPi), ph = rng.uniform(0, 2 * kPi);
      const double ring = 1.0 + 0.35 * std::cos(ph);
      return {ring * std::cos(th), ring * std::sin(th), 0.35 * std::sin(ph)};
    }
  }
  return geom::Vec3::Zero();
}

}  // namespace

PointCloud synth_shape(std::uint64_t category, std::size_t n_points, Rng& rng) {
  if (n_points < 16) throw std::invalid_argument("synth_shape needs at least 16 points");
  auto parts = category_layout(category);
  std::vector<double> weight(parts.size());
  for (std::size_t i = 0; i < parts.size(); ++i) {
    for (int a = 0; a < 3; ++a) parts[i].dims[a] *= rng.uniform(0.85, 1.15);
    weight[i] = std::pow(parts[i].dims.prod(), 2.0 / 3.0);
  }
  std::partial_sum(weight.begin(), weight.end(), weight.begin());
  for (auto& w : weight) w /= weight.back();

  std::vector<std::size_t> owner(n_points);
  for (std::size_t i = 0; i < n_points; ++i) {
    if (i < parts.size()) {
      owner[i] = i;
      continue;
    }
    const double u = rng.uniform();
    owner[i] = static_cast<std::size_t>(std::upper_bound(weight.begin(), weight.end(), u) - weight.begin());
    owner[i] = std::min(owner[i], parts.size() - 1);
  }
  std::vector<geom::Vec3> pts(n_points);
  for (std::size_t i = 0; i < n_points; ++i) {
    const auto& p = parts[owner[i]];
    pts[i] = p.orientation * sample_primitive(p.kind, rng).cwiseProduct(p.dims) + p.offset;
  }
  geom::Vec3 c = geom::Vec3::Zero();
  for (const auto& p : pts) c += p;
  c /= static_cast<double>(n_points);
  double radius = 0.0;
  for (auto& p : pts) {
    p -= c;
    radius = std::max(radius, p.norm());
  }
  for (auto& p : pts) p /= radius;
  return PointCloud(std::move(pts));
}

std::string_view to_string(Setting s) {
  switch (s) {
    case Setting::upc: return "UPC";
    case Setting::uc: return "UC";
    case Setting::nd: return "ND";
  }
  return "?";
}
std::string_view to_string(Pairing p) { return p == Pairing::consistent ? "consistent" : "partial"; }
std::string_view to_string(PoseRegime r) {
  return r == PoseRegime::modelnet_style ? "modelnet" : "sevenscenes";
}

Setting setting_from_string(std::string_view s) {
  for (auto v : {Setting::upc, Setting::uc, Setting::nd}) {
    std::string lower(to_string(v));
    std::transform(lower.begin(), lower.end(), lower.begin(), [](unsigned char ch) { return std::tolower(ch); });
    if (s == to_string(v) || s == lower) return v;
  }
  throw std::invalid_argument("unknown setting '" + std::string(s) + "'");
}
Pairing pairing_from_string(std::string_view s) {
  if (s == "consistent") return Pairing::consistent;
  if (s == "partial") return Pairing::partial;
  throw std::invalid_argument("unknown pairing '" + std::string(s) + "'");
}
PoseRegime pose_regime_from_string(std::string_view s) {
  if (s == "modelnet") return PoseRegime::modelnet_style;
  if (s == "sevenscenes") return PoseRegime::sevenscenes_style;
  throw std::invalid_argument("unknown pose regime '" + std::string(s) + "'");
}

void Protocol::validate() {
  if (setting == Setting::nd && !noise) noise = NoiseSpec{};
  if (noise && !(noise->sigma > 0.0 && noise->clip > 0.0))
    throw std::invalid_argument("noise sigma and clip must be positive");
  if (points < 16) throw std::invalid_argument("protocol needs at least 16 points per cloud");
  if (pairing == Pairing::partial && partial_keep >= points)
    throw std::invalid_argument("partial_keep must be smaller than the cloud size");
}

RigidTransform sample_transform(PoseRegime regime, Rng& rng) {
  RigidTransform T;
  if (regime == PoseRegime::modelnet_style) {
    const double limit = kPi / 4;
    const double a = rng.uniform(0, limit), b = rng.uniform(0, limit), g = rng.uniform(0, limit);
    T.rotation = geom::rot_z(g) * geom::rot_y(b) * geom::rot_x(a);
    for (int i = 0; i < 3; ++i) T.translation[i] = rng.uniform(-0.5, 0.5);
  } else {
    const auto axis = rng.below(3);
    const double angle = rng.uniform(0, kPi / 3);
    T.rotation = axis == 0 ? geom::rot_x(angle) : axis == 1 ? geom::rot_y(angle) : geom::rot_z(angle);
    T.translation = geom::Vec3::Zero();
    const auto t_axis = rng.below(3);
    T.translation[static_cast<int>(t_axis)] = rng.uniform(0, 1.0);
  }
  return T;
}

PointCloud add_noise(const PointCloud& cloud, double sigma, double clip, Rng& rng) {
  if (!(sigma > 0.0) || !(clip > 0.0)) throw std::invalid_argument("noise sigma and clip must be positive");
  std::vector<geom::Vec3> pts(cloud.points());
  for (auto& p : pts)
    for (int a = 0; a < 3; ++a) p[a] += std::clamp(rng.normal(0.0, sigma), -clip, clip);
  return PointCloud(std::move(pts));
}

PointCloud make_partial(const PointCloud& cloud, std::size_t keep, const geom::Vec3& anchor) {
  if (keep == 0 || keep >= cloud.size())
    throw std::invalid_argument("partial keep " + std::to_string(keep) + " must lie in [1, " +
                                std::to_string(cloud.size() - 1) + "]");
  std::vector<std::size_t> order(cloud.size());
  std::iota(order.begin(), order.end(), 0);
  std::vector<double> d2(cloud.size());
  for (std::size_t i = 0; i < cloud.size(); ++i) d2[i] = (cloud[i] - anchor).squaredNorm();
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return d2[a] < d2[b]; });
  order.resize(keep);
  std::sort(order.begin(), order.end());
  std::vector<geom::Vec3> pts;
  pts.reserve(keep);
  for (auto i : order) pts.push_back(cloud[i]);
  return PointCloud(std::move(pts));
}

PointCloud make_partial(const PointCloud& cloud, std::size_t keep, Rng& rng) {
  geom::Vec3 anchor;
  do anchor = geom::Vec3(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1));
  while (anchor.squaredNorm() > 1.0);
  return make_partial(cloud, keep, anchor);
}

std::pair<std::vector<ShapeRef>, std::vector<ShapeRef>> split_dataset(Setting setting, std::uint64_t categories,
                                                                      std::size_t samples_per_category,
                                                                      std::uint64_t seed) {
  if (setting == Setting::uc && categories < 2)
    throw std::invalid_argument("the unseen-category split needs at least 2 categories");
  std::vector<ShapeRef> train, test;
  Rng rng(seed);
  const std::size_t train_share = setting == Setting::uc ? 0 : (samples_per_category * 4 + 4) / 5;
  for (std::uint64_t c = 0; c < categories; ++c) {
    for (std::size_t s = 0; s < samples_per_category; ++s) {
      const ShapeRef ref{c, rng.next()};
      const bool to_train = setting == Setting::uc ? c < categories / 2 : s < train_share;
      (to_train ? train : test).push_back(ref);
    }
  }
  return {std::move(train), std::move(test)};
}

std::vector<DatasetSample> make_dataset(const Protocol& protocol_in, const std::vector<ShapeRef>& shapes,
                                        std::size_t count, std::uint64_t seed) {
  if (shapes.empty()) throw std::invalid_argument("no shapes to draw pairs from");
  Protocol protocol = protocol_in;
  protocol.validate();
  Rng rng(seed);
  std::vector<DatasetSample> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    const auto& ref = shapes[i % shapes.size()];
    Rng shape_rng(ref.shape_seed);
    Rng sample_rng = rng.split();
    DatasetSample s;
    s.category = ref.category;
    s.protocol = protocol;
    s.source = synth_shape(ref.category, protocol.points, shape_rng);
    s.gt = sample_transform(protocol.pose_regime, sample_rng);
    s.target = geom::apply_transform(s.gt, s.source);
    if (protocol.pairing == Pairing::partial) {
      s.source = make_partial(s.source, protocol.partial_keep, sample_rng);
      s.target = make_partial(s.target, protocol.partial_keep, sample_rng);
    }
    if (protocol.noise) {
      const auto& n = *protocol.noise;
      if (n.both_clouds) s.source = add_noise(s.source, n.sigma, n.clip, sample_rng);
      s.target = add_noise(s.target, n.sigma, n.clip, sample_rng);
    }
    out.push_back(std::move(s));
  }
  return out;
}

// ---- file formats ----------------------------------------------------------

CloudFormat cloud_format_from_string(std::string_view name) {
  if (name == "xyz") return CloudFormat::xyz;
  if (name == "off") return CloudFormat::off;
  if (name == "ply") return CloudFormat::ply;
  throw std::invalid_argument("unsupported point cloud format '" + std::string(name) + "'");
}

CloudFormat cloud_format_for(const std::filesystem::path& path) {
  auto ext = path.extension().string();
  if (!ext.empty()) ext.erase(0, 1);
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char ch) { return std::tolower(ch); });
  return cloud_format_from_string(ext);
}

namespace {

struct Line {
  std::size_t number;
  std::vector<std::string_view> tokens;
};

/// Non-empty lines split on whitespace; '#' starts a comment when asked.
std::vector<Line> tokenize(std::string_view text, bool hash_comments) {
  std::vector<Line> lines;
  std::size_t number = 0, pos = 0;
  while (pos <= text.size()) {
    auto end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    auto line = text.substr(pos, end - pos);
    ++number;
    if (hash_comments) line = line.substr(0, line.find('#'));
    Line l{number, {}};
    std::size_t i = 0;
    while (i < line.size()) {
      while (i < line.size() && std::isspace(static_cast<unsigned char>(line[i]))) ++i;
      std::size_t j = i;
      while (j < line.size() && !std::isspace(static_cast<unsigned char>(line[j]))) ++j;
      if (j > i) l.tokens.push_back(line.substr(i, j - i));
      i = j;
    }
    if (!l.tokens.empty()) lines.push_back(std::move(l));
    if (end == text.size()) break;
    pos = end + 1;
  }
  return lines;
}

double to_double(std::string_view tok, std::size_t line) {
  double v = 0.0;
  const auto* first = tok.data();
  if (!tok.empty() && tok.front() == '+') ++first;
  const auto [ptr, ec] = std::from_chars(first, tok.data() + tok.size(), v);
  if (ec != std::errc() || ptr != tok.data() + tok.size())
    throw ParseError("expected a number, got '" + std::string(tok) + "'", line);
  return v;
}

std::size_t to_count(std::string_view tok, std::size_t line) {
  std::size_t v = 0;
  const auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  if (ec != std::errc() || ptr != tok.data() + tok.size())
    throw ParseError("expected a count, got '" + std::string(tok) + "'", line);
  return v;
}

geom::Vec3 vertex(const Line& l, std::size_t ix, std::size_t iy, std::size_t iz) {
  const auto need = std::max({ix, iy, iz}) + 1;
  if (l.tokens.size() < need)
    throw ParseError("expected at least " + std::to_string(need) + " values", l.number);
  return {to_double(l.tokens[ix], l.number), to_double(l.tokens[iy], l.number), to_double(l.tokens[iz], l.number)};
}

PointCloud finish(std::vector<geom::Vec3> pts, std::size_t line) {
  if (pts.empty()) throw ParseError("file contains no points", line);
  for (const auto& p : pts)
    if (!p.allFinite()) throw ParseError("non-finite coordinate", line);
  return PointCloud(std::move(pts));
}

PointCloud parse_xyz(std::string_view text) {
  std::vector<geom::Vec3> pts;
  std::size_t last = 0;
  for (const auto& l : tokenize(text, true)) {
    pts.push_back(vertex(l, 0, 1, 2));
    last = l.number;
  }
  return finish(std::move(pts), last);
}

PointCloud parse_off(std::string_view text) {
  const auto lines = tokenize(text, true);
  if (lines.empty() || !lines[0].tokens[0].ends_with("OFF")) throw ParseError("missing OFF header", 1);
  std::size_t at = 0;
  std::vector<std::string_view> counts(lines[0].tokens.begin() + 1, lines[0].tokens.end());
  std::size_t counts_line = lines[0].number;
  if (counts.empty()) {
    if (lines.size() < 2) throw ParseError("missing vertex count", lines[0].number + 1);
    at = 1;
    counts = lines[1].tokens;
    counts_line = lines[1].number;
  }
  const auto nv = to_count(counts[0], counts_line);
  std::vector<geom::Vec3> pts;
  for (std::size_t i = 0; i < nv; ++i) {
    if (at + 1 + i >= lines.size())
      throw ParseError("expected " + std::to_string(nv) + " vertices, found " + std::to_string(i),
                       lines.back().number + 1);
    pts.push_back(vertex(lines[at + 1 + i], 0, 1, 2));
  }
  return finish(std::move(pts), counts_line);
}

PointCloud parse_ply(std::string_view text) {
  const auto lines = tokenize(text, false);
  if (lines.empty() || lines[0].tokens[0] != "ply") throw ParseError("missing ply header", 1);
  struct Element {
    std::string name;
    std::size_t count;
    std::vector<std::string> properties;
  };
  std::vector<Element> elements;
  std::size_t i = 1;
  for (; i < lines.size(); ++i) {
    const auto& t = lines[i].tokens;
    if (t[0] == "end_header") break;
    if (t[0] == "format") {
      if (t.size() < 2 || t[1] != "ascii") throw ParseError("only ASCII PLY is supported", lines[i].number);
    } else if (t[0] == "element") {
      if (t.size() < 3) throw ParseError("malformed element line", lines[i].number);
      elements.push_back({std::string(t[1]), to_count(t[2], lines[i].number), {}});
    } else if (t[0] == "property") {
      if (elements.empty()) throw ParseError("property before any element", lines[i].number);
      elements.back().properties.emplace_back(t.back());
    } else if (t[0] != "comment" && t[0] != "obj_info") {
      throw ParseError("unexpected header keyword '" + std::string(t[0]) + "'", lines[i].number);
    }
  }
  if (i == lines.size()) throw ParseError("missing end_header", lines.back().number);
  ++i;
  std::vector<geom::Vec3> pts;
  for (const auto& e : elements) {
    if (e.name != "vertex") {
      i += e.count;
      continue;
    }
    auto index_of = [&](const char* name) {
      const auto it = std::find(e.properties.begin(), e.properties.end(), name);
      if (it == e.properties.end()) throw ParseError(std::string("vertex element lacks property ") + name, 1);
      return static_cast<std::size_t>(it - e.properties.begin());
    };
    const auto ix = index_of("x"), iy = index_of("y"), iz = index_of("z");
    for (std::size_t v = 0; v < e.count; ++v, ++i) {
      if (i >= lines.size())
        throw ParseError("expected " + std::to_string(e.count) + " vertices, found " + std::to_string(v),
                         lines.back().number + 1);
      pts.push_back(vertex(lines[i], ix, iy, iz));
    }
  }
  return finish(std::move(pts), lines.back().number);
}

void append_rows(std::string& out, const PointCloud& cloud) {
  char buf[96];
  for (const auto& p : cloud.points()) {
    std::snprintf(buf, sizeof buf, "%.9g %.9g %.9g\n", p.x(), p.y(), p.z());
    out += buf;
  }
}

}  // namespace

PointCloud parse_cloud(std::string_view text, CloudFormat format) {
  switch (format) {
    case CloudFormat::xyz: return parse_xyz(text);
    case CloudFormat::off: return parse_off(text);
    case CloudFormat::ply: return parse_ply(text);
  }
  throw std::invalid_argument("unsupported format");
}

std::string format_cloud(const PointCloud& cloud, CloudFormat format) {
  std::string out;
  switch (format) {
    case CloudFormat::xyz: break;
    case CloudFormat::off: out = "OFF\n" + std::to_string(cloud.size()) + " 0 0\n"; break;
    case CloudFormat::ply:
      out = "ply\nformat ascii 1.0\nelement vertex " + std::to_string(cloud.size()) +
            "\nproperty float x\nproperty float y\nproperty float z\nend_header\n";
      break;
  }
  append_rows(out, cloud);
  return out;
}

PointCloud load_cloud(const std::filesystem::path& path, std::optional<CloudFormat> format) {
  const auto fmt = format ? *format : cloud_format_for(path);
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open '" + path.string() + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_cloud(buf.str(), fmt);
}

void save_cloud(const PointCloud& cloud, const std::filesystem::path& path, std::optional<CloudFormat> format) {
  const auto fmt = format ? *format : cloud_format_for(path);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open '" + path.string() + "' for writing");
  out << format_cloud(cloud, fmt);
  if (!out) throw std::runtime_error("failed writing '" + path.string() + "'");
}

}  // namespace upcr::data
