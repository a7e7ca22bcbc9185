#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace ssem {

enum class Neighborhood : int { Four = 4, Eight = 8 };

/// Dense multi-channel raster. Values are stored channel-major; inside a
/// channel pixels are row-major, so pixel (r, c) of channel k lives at
/// data[k * width * height + r * width + c].
struct RasterScene {
  std::uint32_t width = 0;
  std::uint32_t height = 0;
  std::uint32_t channels = 0;
  std::vector<double> data;
  std::optional<std::uint32_t> elevation_channel;
  /// 0 = dry, 1 = flood; one entry per pixel when present.
  std::optional<std::vector<std::uint8_t>> truth;

  std::size_t pixel_count() const { return std::size_t{width} * height; }
  std::size_t index(std::uint32_t row, std::uint32_t col) const {
    return std::size_t{row} * width + col;
  }
  std::span<const double> channel(std::uint32_t k) const;
  std::span<double> channel(std::uint32_t k);

  /// Throws DataError when an invariant is broken.
  void validate() const;
};

struct Label {
  std::uint32_t row = 0;
  std::uint32_t col = 0;
  std::uint8_t cls = 0;

  friend bool operator==(const Label&, const Label&) = default;
};

/// Sparse supervision: the labeled subset of pixels.
struct LabelSet {
  std::vector<Label> entries;

  std::size_t size() const { return entries.size(); }
  std::size_t count(std::uint8_t cls) const;
  /// Bounds and duplicate check against a width x height grid.
  void validate(std::uint32_t width, std::uint32_t height) const;
  /// Per-pixel label lookup: -1 unlabeled, otherwise the class.
  std::vector<std::int8_t> dense(std::uint32_t width, std::uint32_t height) const;

  friend bool operator==(const LabelSet&, const LabelSet&) = default;
};

/// Parameters of the synthetic flood-scene generator.
///
/// Elevation is a planar ramp plus a separable sinusoidal bump field. Pixels
/// below the water level are flood. Feature vectors come from a per-class
/// Gaussian, except for a random obstacle_fraction of each class which draws
/// from one shared obstacle Gaussian; isotropic noise is added on top.
struct SceneSpec {
  std::uint32_t width = 128;
  std::uint32_t height = 128;

  double ramp_x = 1.0;
  double ramp_y = 0.5;
  double bump_amplitude = 0.05;
  double bump_period = 32.0;

  /// Absolute threshold; when unset the water_quantile of elevations is used.
  std::optional<double> water_level;
  double water_quantile = 0.5;

  std::vector<double> dry_mean{0.40, 0.45, 0.30};
  std::vector<double> flood_mean{0.70, 0.75, 0.80};
  std::vector<double> obstacle_mean{0.52, 0.57, 0.50};
  /// Row-major m x m covariances.
  std::vector<double> dry_cov{0.01, 0, 0, 0, 0.01, 0, 0, 0, 0.01};
  std::vector<double> flood_cov{0.01, 0, 0, 0, 0.01, 0, 0, 0, 0.01};
  std::vector<double> obstacle_cov{0.01, 0, 0, 0, 0.01, 0, 0, 0, 0.01};

  double obstacle_fraction = 0.0;
  double noise_sigma = 0.0;
  double label_ratio = 1e-3;
  std::uint64_t rng_seed = 42;

  std::size_t feature_count() const { return dry_mean.size(); }
  /// Throws SpecError when an invariant is broken.
  void validate() const;
};

struct GeneratedScene {
  RasterScene scene;
  LabelSet labels;
  /// 1 where the pixel was drawn from the obstacle distribution.
  std::vector<std::uint8_t> obstacle;
  double water_level = 0.0;
};

/// Reads the SSGRID1 binary scene format.
RasterScene load_scene(const std::filesystem::path& path);
RasterScene read_scene(std::istream& in);
void save_scene(const RasterScene& scene, const std::filesystem::path& path);
void write_scene(const RasterScene& scene, std::ostream& out);

/// Label text file: one "row,col,class" per line, '#' starts a comment.
LabelSet load_labels(const std::filesystem::path& path);
LabelSet parse_labels(std::istream& in);
void save_labels(const LabelSet& labels, const std::filesystem::path& path);

/// Parses a key=value scene spec. Unknown keys and malformed values raise
/// SpecError naming the offending line.
SceneSpec parse_scene_spec(std::istream& in);
SceneSpec load_scene_spec(const std::filesystem::path& path);

GeneratedScene generate_scene(const SceneSpec& spec);

/// Draws ceil(ratio * N) truth-labelled pixels, split as evenly as the class
/// sizes allow (an odd remainder goes to the flood class).
LabelSet sample_labels(const RasterScene& scene, double ratio, std::uint64_t rng_seed);

/// Feature matrix with one row per pixel. The elevation channel is included
/// only when include_elevation is set (or when the scene has none flagged).
Eigen::MatrixXd feature_matrix(const RasterScene& scene, bool include_elevation);

/// Elevation channel values; throws DataError when the scene has none.
std::vector<double> elevation_values(const RasterScene& scene);

/// Single-channel scene built from per-pixel values (score and class grids).
RasterScene single_channel(std::uint32_t width, std::uint32_t height,
                           std::span<const double> values);

}  // namespace ssem
