#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "fatigue/dsp.hpp"
#include "fatigue/signal_io.hpp"

namespace fatigue {

struct Point2 {
  double x = 0.0;
  double y = 0.0;
};

/// Electrode positions on the unit head disk, nose toward +y, right ear toward +x.
struct ElectrodeLayout {
  std::array<Point2, kNumChannels> positions{};

  const Point2& at(Channel c) const { return positions[channel_index(c)]; }
};

/// Parses `NAME POLAR_DEG AZIMUTH_DEG` lines and projects them azimuthal-equidistantly
/// (radius = polar / 90). Throws BadMontageFile when the result breaks a layout invariant.
ElectrodeLayout parse_montage(std::string_view text);
ElectrodeLayout load_montage(const std::filesystem::path& path);
ElectrodeLayout default_layout();

/// The seven homologous left/right pairs, left first.
inline constexpr std::array<std::pair<Channel, Channel>, 7> kHomologousPairs = {{
    {Channel::AF3, Channel::AF4},
    {Channel::F3, Channel::F4},
    {Channel::F7, Channel::F8},
    {Channel::FC5, Channel::FC6},
    {Channel::T7, Channel::T8},
    {Channel::P7, Channel::P8},
    {Channel::O1, Channel::O2},
}};

inline constexpr std::size_t kRasterSize = 67;
inline constexpr std::size_t kCubeSize = 34;

/// Grid coordinate of column `col` / row `row` on a size x size grid spanning [-1, 1];
/// row 0 is the front of the head (y = +1).
double grid_x(std::size_t col, std::size_t size);
double grid_y(std::size_t row, std::size_t size);

struct TopoMap {
  std::size_t size = 0;
  FeatureKind kind = FeatureKind::Theta;
  std::vector<double> grid;         // row-major size x size
  std::vector<std::uint8_t> mask;   // 1 inside the head disk

  double at(std::size_t row, std::size_t col) const { return grid[row * size + col]; }
  bool inside(std::size_t row, std::size_t col) const { return mask[row * size + col] != 0; }
};

/// Inverse-distance-squared interpolation over the head disk. Weights depend only on
/// the layout and grid size, so they are computed once.
class Rasterizer {
 public:
  explicit Rasterizer(const ElectrodeLayout& layout, std::size_t size = kRasterSize);

  TopoMap render(std::span<const double> values, FeatureKind kind = FeatureKind::Theta) const;
  std::size_t size() const { return size_; }
  const std::vector<std::uint8_t>& mask() const { return mask_; }

 private:
  std::size_t size_;
  std::vector<std::uint8_t> mask_;
  std::vector<double> weights_;  // [cell][channel], normalized
};

TopoMap rasterize(std::span<const double> values, const ElectrodeLayout& layout,
                  std::size_t size = kRasterSize, FeatureKind kind = FeatureKind::Theta);

/// Bilinear 67 -> 34 resampling over the same extent; mask by nearest neighbour.
TopoMap downsample(const TopoMap& map);

/// Inside-head mask of the 34 x 34 cube grid.
const std::vector<std::uint8_t>& cube_mask();

enum class FeatureCombination : std::uint8_t {
  Frequency, Time, Entropy, F_Time, F_Entropy, T_Entropy, F_T_Entropy,
};

inline constexpr std::array<FeatureCombination, 7> kAllCombinations = {
    FeatureCombination::Frequency, FeatureCombination::Time,      FeatureCombination::Entropy,
    FeatureCombination::F_Time,    FeatureCombination::F_Entropy, FeatureCombination::T_Entropy,
    FeatureCombination::F_T_Entropy};

/// Column order used by the accuracy tables.
inline constexpr std::array<FeatureCombination, 7> kReportCombinationOrder = {
    FeatureCombination::T_Entropy, FeatureCombination::Frequency, FeatureCombination::F_Entropy,
    FeatureCombination::Entropy,   FeatureCombination::Time,      FeatureCombination::F_Time,
    FeatureCombination::F_T_Entropy};

std::string_view combination_name(FeatureCombination combo);
std::optional<FeatureCombination> parse_combination(std::string_view name);
std::vector<FeatureKind> combination_kinds(FeatureCombination combo);
std::size_t combination_channels(FeatureCombination combo);

/// Flat feature vector for the combination: for each kind in stacking order, 14 channel values.
std::vector<double> combination_vector(const FeatureSet& features, FeatureCombination combo);

/// 34 x 34 x C tensor, stored [row][col][channel].
struct EegCube {
  std::size_t height = kCubeSize;
  std::size_t width = kCubeSize;
  FeatureCombination combo = FeatureCombination::Frequency;
  std::vector<FeatureKind> kinds;
  std::vector<double> tensor;
  std::optional<FatigueLevel> label;

  std::size_t channels() const { return kinds.size(); }
  double at(std::size_t row, std::size_t col, std::size_t ch) const {
    return tensor[(row * width + col) * kinds.size() + ch];
  }
};

/// Per-feature-kind z-scoring of map values, fitted on training cubes only.
class MapNormalizer {
 public:
  struct Stats {
    double mean = 0.0;
    double std = 1.0;
  };

  static MapNormalizer identity();

  void fit(std::span<const EegCube> cubes, std::span<const std::size_t> rows);
  void fit(std::span<const EegCube> cubes);
  void set(FeatureKind kind, Stats stats) { stats_[kind_index(kind)] = stats; }
  const std::optional<Stats>& stats(FeatureKind kind) const { return stats_[kind_index(kind)]; }

  EegCube apply(const EegCube& raw) const;

 private:
  std::array<std::optional<Stats>, kNumFeatureKinds> stats_{};
};

class CubeBuilder {
 public:
  explicit CubeBuilder(const ElectrodeLayout& layout) : rasterizer_(layout, kRasterSize) {}

  /// Rasterized, downsampled, stacked; not yet normalized.
  EegCube raw_cube(const FeatureSet& features, FeatureCombination combo) const;

 private:
  Rasterizer rasterizer_;
};

EegCube build_cube(const FeatureSet& features, FeatureCombination combo,
                   const ElectrodeLayout& layout, const MapNormalizer& normalizer);

/// EEGCUBE1 archive: little-endian header, label bytes, then f32 data in
/// [cube][channel][row][col] order.
void write_cube_archive(std::span<const EegCube> cubes, FeatureCombination combo,
                        const std::filesystem::path& path);
std::vector<std::uint8_t> encode_cube_archive(std::span<const EegCube> cubes, FeatureCombination combo);
std::vector<EegCube> decode_cube_archive(std::span<const std::uint8_t> bytes);
std::vector<EegCube> read_cube_archive(const std::filesystem::path& path);

}  // namespace fatigue
