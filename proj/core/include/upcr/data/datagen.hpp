#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "upcr/geom/types.hpp"
#include "upcr/random.hpp"

namespace upcr::data {

using geom::PointCloud;
using geom::RigidTransform;

/// Number of distinct shape categories synth_shape knows.
inline constexpr std::uint64_t kCategoryCount = 40;

/// Surface samples of a composite of 2 to 4 primitives (box, cylinder,
/// ellipsoid, torus) whose layout is fixed by the category; sizes jitter per
/// shape. Centered at the origin with unit max radius.
PointCloud synth_shape(std::uint64_t category, std::size_t n_points, Rng& rng);

enum class Setting { upc, uc, nd };
enum class Pairing { consistent, partial };
enum class PoseRegime { modelnet_style, sevenscenes_style };

std::string_view to_string(Setting s);
std::string_view to_string(Pairing p);
std::string_view to_string(PoseRegime r);
Setting setting_from_string(std::string_view s);
Pairing pairing_from_string(std::string_view s);
PoseRegime pose_regime_from_string(std::string_view s);

struct NoiseSpec {
  double sigma = 0.01;
  double clip = 0.05;
  bool both_clouds = true;
};

struct Protocol {
  Setting setting = Setting::upc;
  Pairing pairing = Pairing::consistent;
  PoseRegime pose_regime = PoseRegime::modelnet_style;
  std::optional<NoiseSpec> noise;  // ND defaults to σ = 0.01, clip = 0.05
  std::size_t points = 1024;
  std::size_t partial_keep = 768;

  /// Fills the ND noise default and checks the partial size.
  void validate();
};

struct ShapeRef {
  std::uint64_t category = 0;
  std::uint64_t shape_seed = 0;
  bool operator==(const ShapeRef&) const = default;
};

struct DatasetSample {
  PointCloud source;
  PointCloud target;
  RigidTransform gt;
  std::uint64_t category = 0;
  Protocol protocol;
};

RigidTransform sample_transform(PoseRegime regime, Rng& rng);

PointCloud add_noise(const PointCloud& cloud, double sigma, double clip, Rng& rng);

/// The `keep` points nearest to an anchor drawn uniformly in the unit ball.
PointCloud make_partial(const PointCloud& cloud, std::size_t keep, Rng& rng);
/// Same with a given anchor.
PointCloud make_partial(const PointCloud& cloud, std::size_t keep, const geom::Vec3& anchor);

/// UC: categories [0, n/2) train, the rest test. UPC and ND: per category,
/// the first 80% of its shape seeds train and the rest test.
std::pair<std::vector<ShapeRef>, std::vector<ShapeRef>> split_dataset(Setting setting, std::uint64_t categories,
                                                                      std::size_t samples_per_category,
                                                                      std::uint64_t seed);

/// `count` pairs cycling through `shapes`, each with its own transform
/// (and noise / partiality per the protocol).
std::vector<DatasetSample> make_dataset(const Protocol& protocol, const std::vector<ShapeRef>& shapes,
                                        std::size_t count, std::uint64_t seed);

enum class CloudFormat { xyz, off, ply };

CloudFormat cloud_format_from_string(std::string_view name);
/// By file extension.
CloudFormat cloud_format_for(const std::filesystem::path& path);

class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& what, std::size_t line)
      : std::runtime_error("line " + std::to_string(line) + ": " + what), line(line) {}
  std::size_t line;
};

PointCloud parse_cloud(std::string_view text, CloudFormat format);
std::string format_cloud(const PointCloud& cloud, CloudFormat format);
PointCloud load_cloud(const std::filesystem::path& path, std::optional<CloudFormat> format = std::nullopt);
void save_cloud(const PointCloud& cloud, const std::filesystem::path& path,
                std::optional<CloudFormat> format = std::nullopt);

}  // namespace upcr::data
