#include "fatigue/topomap.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <numbers>
#include <sstream>

#include "fatigue/binary_io.hpp"
#include "fatigue/error.hpp"
#include "fatigue/montage_default.hpp"

namespace fatigue {

namespace {

constexpr double kDegToRad = std::numbers::pi / 180.0;
constexpr double kSnapDistance = 1e-9;
constexpr std::uint8_t kUnlabeled = 255;

void check_layout(const ElectrodeLayout& layout) {
  for (std::size_t c = 0; c < kNumChannels; ++c) {
    const auto& p = layout.positions[c];
    if (p.x * p.x + p.y * p.y > 1.0) {
      throw Error(ErrorCode::BadMontageFile, std::string(kChannelNames[c]) + " lies outside the head disk");
    }
  }
  for (const auto& [left, right] : kHomologousPairs) {
    const auto& l = layout.at(left);
    const auto& r = layout.at(right);
    if (std::abs(l.x + r.x) > 1e-6 || std::abs(l.y - r.y) > 1e-6) {
      throw Error(ErrorCode::BadMontageFile, std::string(channel_name(left)) + "/" +
                                                 std::string(channel_name(right)) + " are not mirror images");
    }
  }
  for (Channel c : {Channel::AF3, Channel::AF4, Channel::F3, Channel::F4, Channel::F7, Channel::F8}) {
    if (!(layout.at(c).y > 0.0)) {
      throw Error(ErrorCode::BadMontageFile, std::string(channel_name(c)) + " must be frontal (y > 0)");
    }
  }
  for (Channel c : {Channel::O1, Channel::O2}) {
    if (!(layout.at(c).y < 0.0)) {
      throw Error(ErrorCode::BadMontageFile, std::string(channel_name(c)) + " must be occipital (y < 0)");
    }
  }
}

std::vector<std::uint8_t> disk_mask(std::size_t size) {
  std::vector<std::uint8_t> mask(size * size, 0);
  for (std::size_t r = 0; r < size; ++r) {
    for (std::size_t c = 0; c < size; ++c) {
      const double x = grid_x(c, size);
      const double y = grid_y(r, size);
      mask[r * size + c] = (x * x + y * y <= 1.0 + 1e-12) ? 1 : 0;
    }
  }
  return mask;
}

}  // namespace

ElectrodeLayout parse_montage(std::string_view text) {
  ElectrodeLayout layout;
  std::array<bool, kNumChannels> seen{};
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    std::istringstream fields(line);
    std::string name;
    if (!(fields >> name)) continue;
    double polar = 0.0;
    double azimuth = 0.0;
    std::string extra;
    if (!(fields >> polar >> azimuth) || (fields >> extra)) {
      throw Error(ErrorCode::BadMontageFile, "line " + std::to_string(line_no) + ": expected NAME POLAR AZIMUTH");
    }
    auto ch = parse_channel(name);
    if (!ch) throw Error(ErrorCode::BadMontageFile, "line " + std::to_string(line_no) + ": unknown electrode " + name);
    if (seen[channel_index(*ch)]) throw Error(ErrorCode::BadMontageFile, "duplicate electrode " + name);
    if (!std::isfinite(polar) || !std::isfinite(azimuth) || polar < 0.0) {
      throw Error(ErrorCode::BadMontageFile, "line " + std::to_string(line_no) + ": bad angles");
    }
    seen[channel_index(*ch)] = true;
    const double radius = polar / 90.0;
    Point2 p{radius * std::cos(azimuth * kDegToRad), radius * std::sin(azimuth * kDegToRad)};
    // Rim electrodes may land a rounding error outside the unit circle.
    const double norm = std::hypot(p.x, p.y);
    if (norm > 1.0 && norm < 1.0 + 1e-12) {
      p.x /= norm;
      p.y /= norm;
      while (p.x * p.x + p.y * p.y > 1.0) {
        p.x = std::nextafter(p.x, 0.0);
        p.y = std::nextafter(p.y, 0.0);
      }
    }
    layout.positions[channel_index(*ch)] = p;
  }
  for (std::size_t c = 0; c < kNumChannels; ++c) {
    if (!seen[c]) throw Error(ErrorCode::BadMontageFile, "montage lacks " + std::string(kChannelNames[c]));
  }
  check_layout(layout);
  return layout;
}

ElectrodeLayout load_montage(const std::filesystem::path& path) { return parse_montage(read_text_file(path)); }

ElectrodeLayout default_layout() {
  static const ElectrodeLayout layout = parse_montage(detail::kDefaultMontage);
  return layout;
}

double grid_x(std::size_t col, std::size_t size) {
  return -1.0 + 2.0 * static_cast<double>(col) / static_cast<double>(size - 1);
}

double grid_y(std::size_t row, std::size_t size) {
  return 1.0 - 2.0 * static_cast<double>(row) / static_cast<double>(size - 1);
}

Rasterizer::Rasterizer(const ElectrodeLayout& layout, std::size_t size)
    : size_(size), mask_(disk_mask(size)), weights_(size * size * kNumChannels, 0.0) {
  if (size < 2) throw Error(ErrorCode::WrongInputSize, "raster grid must be at least 2x2");
  for (std::size_t r = 0; r < size; ++r) {
    for (std::size_t c = 0; c < size; ++c) {
      const std::size_t cell = r * size + c;
      if (!mask_[cell]) continue;
      double* w = &weights_[cell * kNumChannels];
      const double x = grid_x(c, size);
      const double y = grid_y(r, size);
      std::optional<std::size_t> snapped;
      double total = 0.0;
      for (std::size_t e = 0; e < kNumChannels; ++e) {
        const double dx = x - layout.positions[e].x;
        const double dy = y - layout.positions[e].y;
        const double d2 = dx * dx + dy * dy;
        if (std::sqrt(d2) <= kSnapDistance) {
          snapped = e;
          break;
        }
        w[e] = 1.0 / d2;
        total += w[e];
      }
      if (snapped) {
        std::fill(w, w + kNumChannels, 0.0);
        w[*snapped] = 1.0;
      } else {
        for (std::size_t e = 0; e < kNumChannels; ++e) w[e] /= total;
      }
    }
  }
}

TopoMap Rasterizer::render(std::span<const double> values, FeatureKind kind) const {
  if (values.size() != kNumChannels) {
    throw Error(ErrorCode::ShapeMismatch, "expected 14 electrode values, got " + std::to_string(values.size()));
  }
  for (std::size_t e = 0; e < kNumChannels; ++e) {
    if (!std::isfinite(values[e])) {
      throw Error(ErrorCode::NonFiniteValue, "value for " + std::string(kChannelNames[e]) + " is not finite");
    }
  }
  TopoMap map;
  map.size = size_;
  map.kind = kind;
  map.mask = mask_;
  map.grid.assign(size_ * size_, 0.0);
  for (std::size_t cell = 0; cell < map.grid.size(); ++cell) {
    if (!mask_[cell]) continue;
    const double* w = &weights_[cell * kNumChannels];
    double v = 0.0;
    for (std::size_t e = 0; e < kNumChannels; ++e) v += w[e] * values[e];
    map.grid[cell] = v;
  }
  return map;
}

TopoMap rasterize(std::span<const double> values, const ElectrodeLayout& layout, std::size_t size,
                  FeatureKind kind) {
  return Rasterizer(layout, size).render(values, kind);
}

TopoMap downsample(const TopoMap& map) {
  if (map.size != kRasterSize || map.grid.size() != kRasterSize * kRasterSize) {
    throw Error(ErrorCode::WrongInputSize,
                "downsample expects 67x67, got " + std::to_string(map.size) + "x" + std::to_string(map.size));
  }
  const std::size_t in = kRasterSize;
  const std::size_t out = kCubeSize;
  const double step = static_cast<double>(in - 1) / static_cast<double>(out - 1);
  TopoMap result;
  result.size = out;
  result.kind = map.kind;
  result.grid.assign(out * out, 0.0);
  result.mask.assign(out * out, 0);
  for (std::size_t r = 0; r < out; ++r) {
    const double sr = static_cast<double>(r) * step;
    const auto r0 = std::min(static_cast<std::size_t>(sr), in - 2);
    const double fr = sr - static_cast<double>(r0);
    for (std::size_t c = 0; c < out; ++c) {
      const double sc = static_cast<double>(c) * step;
      const auto c0 = std::min(static_cast<std::size_t>(sc), in - 2);
      const double fc = sc - static_cast<double>(c0);
      const auto nr = static_cast<std::size_t>(std::lround(sr));
      const auto nc = static_cast<std::size_t>(std::lround(sc));
      const bool inside = map.mask[nr * in + nc] != 0;
      result.mask[r * out + c] = inside ? 1 : 0;
      if (!inside) continue;
      const double v00 = map.at(r0, c0);
      const double v01 = map.at(r0, c0 + 1);
      const double v10 = map.at(r0 + 1, c0);
      const double v11 = map.at(r0 + 1, c0 + 1);
      result.grid[r * out + c] =
          (1.0 - fr) * ((1.0 - fc) * v00 + fc * v01) + fr * ((1.0 - fc) * v10 + fc * v11);
    }
  }
  return result;
}

const std::vector<std::uint8_t>& cube_mask() {
  static const std::vector<std::uint8_t> mask = [] {
    TopoMap probe;
    probe.size = kRasterSize;
    probe.grid.assign(kRasterSize * kRasterSize, 0.0);
    probe.mask = disk_mask(kRasterSize);
    return downsample(probe).mask;
  }();
  return mask;
}

std::string_view combination_name(FeatureCombination combo) {
  switch (combo) {
    case FeatureCombination::Frequency: return "Frequency";
    case FeatureCombination::Time: return "Time";
    case FeatureCombination::Entropy: return "Entropy";
    case FeatureCombination::F_Time: return "F_Time";
    case FeatureCombination::F_Entropy: return "F_Entropy";
    case FeatureCombination::T_Entropy: return "T_Entropy";
    case FeatureCombination::F_T_Entropy: return "F_T_Entropy";
  }
  return "?";
}

std::optional<FeatureCombination> parse_combination(std::string_view name) {
  for (FeatureCombination c : kAllCombinations) {
    if (combination_name(c) == name) return c;
  }
  return std::nullopt;
}

std::vector<FeatureKind> combination_kinds(FeatureCombination combo) {
  const std::vector<FeatureKind> freq = {FeatureKind::Theta, FeatureKind::Alpha, FeatureKind::Beta,
                                         FeatureKind::Gamma};
  const std::vector<FeatureKind> time = {FeatureKind::Mean, FeatureKind::Variance, FeatureKind::Zcr,
                                         FeatureKind::Kurtosis, FeatureKind::Skewness};
  const std::vector<FeatureKind> entropy = {FeatureKind::Shannon, FeatureKind::Spectral};
  auto cat = [](std::initializer_list<const std::vector<FeatureKind>*> parts) {
    std::vector<FeatureKind> out;
    for (const auto* p : parts) out.insert(out.end(), p->begin(), p->end());
    return out;
  };
  switch (combo) {
    case FeatureCombination::Frequency: return freq;
    case FeatureCombination::Time: return time;
    case FeatureCombination::Entropy: return entropy;
    case FeatureCombination::F_Time: return cat({&freq, &time});
    case FeatureCombination::F_Entropy: return cat({&freq, &entropy});
    case FeatureCombination::T_Entropy: return cat({&time, &entropy});
    case FeatureCombination::F_T_Entropy: return cat({&freq, &time, &entropy});
  }
  return {};
}

std::size_t combination_channels(FeatureCombination combo) { return combination_kinds(combo).size(); }

std::vector<double> combination_vector(const FeatureSet& features, FeatureCombination combo) {
  std::vector<double> out;
  for (FeatureKind k : combination_kinds(combo)) {
    for (std::size_t c = 0; c < kNumChannels; ++c) out.push_back(features.get(c, k));
  }
  return out;
}

MapNormalizer MapNormalizer::identity() {
  MapNormalizer n;
  for (auto& s : n.stats_) s = Stats{0.0, 1.0};
  return n;
}

void MapNormalizer::fit(std::span<const EegCube> cubes) {
  std::vector<std::size_t> rows(cubes.size());
  for (std::size_t i = 0; i < rows.size(); ++i) rows[i] = i;
  fit(cubes, rows);
}

void MapNormalizer::fit(std::span<const EegCube> cubes, std::span<const std::size_t> rows) {
  const auto& mask = cube_mask();
  std::array<double, kNumFeatureKinds> sum{};
  std::array<double, kNumFeatureKinds> count{};
  for (std::size_t i : rows) {
    const EegCube& cube = cubes[i];
    const std::size_t nc = cube.channels();
    for (std::size_t cell = 0; cell < mask.size(); ++cell) {
      if (!mask[cell]) continue;
      for (std::size_t ch = 0; ch < nc; ++ch) {
        const auto k = kind_index(cube.kinds[ch]);
        sum[k] += cube.tensor[cell * nc + ch];
        count[k] += 1.0;
      }
    }
  }
  std::array<double, kNumFeatureKinds> mean{};
  for (std::size_t k = 0; k < kNumFeatureKinds; ++k) mean[k] = count[k] > 0 ? sum[k] / count[k] : 0.0;
  std::array<double, kNumFeatureKinds> sq{};
  for (std::size_t i : rows) {
    const EegCube& cube = cubes[i];
    const std::size_t nc = cube.channels();
    for (std::size_t cell = 0; cell < mask.size(); ++cell) {
      if (!mask[cell]) continue;
      for (std::size_t ch = 0; ch < nc; ++ch) {
        const auto k = kind_index(cube.kinds[ch]);
        const double d = cube.tensor[cell * nc + ch] - mean[k];
        sq[k] += d * d;
      }
    }
  }
  for (std::size_t k = 0; k < kNumFeatureKinds; ++k) {
    if (count[k] > 0) stats_[k] = Stats{mean[k], std::sqrt(sq[k] / count[k])};
  }
}

EegCube MapNormalizer::apply(const EegCube& raw) const {
  const auto& mask = cube_mask();
  EegCube out = raw;
  const std::size_t nc = raw.channels();
  for (std::size_t ch = 0; ch < nc; ++ch) {
    const auto& st = stats_[kind_index(raw.kinds[ch])];
    if (!st) {
      throw Error(ErrorCode::UnfittedNormalizer,
                  "no statistics for feature '" + std::string(feature_kind_tag(raw.kinds[ch])) + "'");
    }
    for (std::size_t cell = 0; cell < mask.size(); ++cell) {
      double& v = out.tensor[cell * nc + ch];
      if (!mask[cell] || st->std == 0.0) {
        v = 0.0;
      } else {
        v = (v - st->mean) / st->std;
      }
    }
  }
  return out;
}

EegCube CubeBuilder::raw_cube(const FeatureSet& features, FeatureCombination combo) const {
  EegCube cube;
  cube.combo = combo;
  cube.kinds = combination_kinds(combo);
  const std::size_t nc = cube.kinds.size();
  cube.tensor.assign(kCubeSize * kCubeSize * nc, 0.0);
  for (std::size_t ch = 0; ch < nc; ++ch) {
    const auto values = features.across_channels(cube.kinds[ch]);
    const TopoMap small = downsample(rasterizer_.render(values, cube.kinds[ch]));
    for (std::size_t cell = 0; cell < small.grid.size(); ++cell) cube.tensor[cell * nc + ch] = small.grid[cell];
  }
  return cube;
}

EegCube build_cube(const FeatureSet& features, FeatureCombination combo, const ElectrodeLayout& layout,
                   const MapNormalizer& normalizer) {
  return normalizer.apply(CubeBuilder(layout).raw_cube(features, combo));
}

std::vector<std::uint8_t> encode_cube_archive(std::span<const EegCube> cubes, FeatureCombination combo) {
  const std::size_t nc = combination_channels(combo);
  for (const auto& cube : cubes) {
    if (cube.combo != combo || cube.channels() != nc || cube.height != kCubeSize || cube.width != kCubeSize) {
      throw Error(ErrorCode::MixedCombinations, "archive cubes must share one combination and 34x34 size");
    }
  }
  ByteWriter w;
  w.bytes("EEGC");
  w.u8(0x01);
  w.u32(static_cast<std::uint32_t>(cubes.size()));
  w.u16(static_cast<std::uint16_t>(kCubeSize));
  w.u16(static_cast<std::uint16_t>(kCubeSize));
  w.u16(static_cast<std::uint16_t>(nc));
  w.u8(static_cast<std::uint8_t>(combo));
  for (const auto& cube : cubes) w.u8(cube.label ? static_cast<std::uint8_t>(*cube.label) : kUnlabeled);
  for (const auto& cube : cubes) {
    for (std::size_t ch = 0; ch < nc; ++ch)
      for (std::size_t r = 0; r < kCubeSize; ++r)
        for (std::size_t c = 0; c < kCubeSize; ++c) w.f32(static_cast<float>(cube.at(r, c, ch)));
  }
  return w.take();
}

std::vector<EegCube> decode_cube_archive(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes, ErrorCode::BadCubeArchive);
  r.expect("EEGC");
  if (r.u8() != 0x01) r.fail("unsupported EEGCUBE version");
  const std::uint32_t n = r.u32();
  const std::uint16_t h = r.u16();
  const std::uint16_t w = r.u16();
  const std::uint16_t nc = r.u16();
  const std::uint8_t combo_id = r.u8();
  if (h != kCubeSize || w != kCubeSize) r.fail("cube size must be 34x34");
  if (combo_id >= kAllCombinations.size()) r.fail("unknown combination id " + std::to_string(combo_id));
  const auto combo = static_cast<FeatureCombination>(combo_id);
  if (combination_channels(combo) != nc) r.fail("channel count does not match combination");
  const std::size_t expected = static_cast<std::size_t>(n) * (1 + std::size_t{4} * nc * h * w);
  if (r.remaining() != expected) r.fail("archive payload size mismatch");

  std::vector<EegCube> cubes(n);
  for (auto& cube : cubes) {
    const std::uint8_t label = r.u8();
    if (label <= 2) {
      cube.label = static_cast<FatigueLevel>(label);
    } else if (label != kUnlabeled) {
      r.fail("bad label byte " + std::to_string(label));
    }
    cube.combo = combo;
    cube.kinds = combination_kinds(combo);
    cube.tensor.assign(std::size_t{h} * w * nc, 0.0);
  }
  for (auto& cube : cubes) {
    for (std::size_t ch = 0; ch < nc; ++ch)
      for (std::size_t row = 0; row < h; ++row)
        for (std::size_t col = 0; col < w; ++col) cube.tensor[(row * w + col) * nc + ch] = r.f32();
  }
  return cubes;
}

void write_cube_archive(std::span<const EegCube> cubes, FeatureCombination combo,
                        const std::filesystem::path& path) {
  write_binary_file(path, encode_cube_archive(cubes, combo));
}

std::vector<EegCube> read_cube_archive(const std::filesystem::path& path) {
  return decode_cube_archive(read_binary_file(path));
}

}  // namespace fatigue
