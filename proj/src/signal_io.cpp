#include "fatigue/signal_io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <iostream>
#include <mutex>
#include <numbers>

#include "fatigue/binary_io.hpp"
#include "fatigue/error.hpp"
#include "fatigue/rng.hpp"

namespace fatigue {

namespace {

std::mutex g_warning_mutex;
WarningHandler g_warning_handler;

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

std::vector<std::string_view> split_commas(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    std::size_t pos = line.find(',', start);
    if (pos == std::string_view::npos) {
      out.push_back(trim(line.substr(start)));
      break;
    }
    out.push_back(trim(line.substr(start, pos - start)));
    start = pos + 1;
  }
  return out;
}

std::vector<std::string_view> split_lines(std::string_view text) {
  std::vector<std::string_view> lines;
  std::size_t start = 0;
  while (start < text.size()) {
    std::size_t pos = text.find('\n', start);
    if (pos == std::string_view::npos) pos = text.size();
    std::string_view line = trim(text.substr(start, pos - start));
    if (!line.empty()) lines.push_back(line);
    start = pos + 1;
  }
  return lines;
}

std::optional<double> parse_double(std::string_view s) {
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || !std::isfinite(v)) return std::nullopt;
  return v;
}

}  // namespace

std::optional<Channel> parse_channel(std::string_view name) {
  for (std::size_t i = 0; i < kNumChannels; ++i) {
    if (kChannelNames[i] == name) return channel_at(i);
  }
  return std::nullopt;
}

std::string_view fatigue_level_name(FatigueLevel level) {
  switch (level) {
    case FatigueLevel::Low: return "low";
    case FatigueLevel::Medium: return "medium";
    case FatigueLevel::High: return "high";
  }
  return "?";
}

std::optional<FatigueLevel> parse_fatigue_level(std::string_view name) {
  if (name == "low") return FatigueLevel::Low;
  if (name == "medium") return FatigueLevel::Medium;
  if (name == "high") return FatigueLevel::High;
  return std::nullopt;
}

std::vector<double> EegRecording::channel(std::size_t c) const {
  std::vector<double> out(n_samples());
  for (std::size_t s = 0; s < out.size(); ++s) out[s] = at(s, c);
  return out;
}

void EegRecording::set_channel(std::size_t c, std::span<const double> values) {
  if (values.size() != n_samples()) throw Error(ErrorCode::ShapeMismatch, "channel length mismatch");
  for (std::size_t s = 0; s < values.size(); ++s) samples[s * kNumChannels + c] = values[s];
}

std::vector<double> Segment::channel(std::size_t c) const {
  std::vector<double> out(n_samples());
  for (std::size_t s = 0; s < out.size(); ++s) out[s] = data[s * kNumChannels + c];
  return out;
}

void set_warning_handler(WarningHandler handler) {
  std::lock_guard lock(g_warning_mutex);
  g_warning_handler = std::move(handler);
}

void warn(std::string_view message) {
  std::lock_guard lock(g_warning_mutex);
  if (g_warning_handler) {
    g_warning_handler(message);
  } else {
    std::cerr << "warning: " << message << '\n';
  }
}

std::string format_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

EegRecording parse_recording_csv(std::string_view text, std::string subject_id,
                                 std::size_t sampling_rate) {
  if (sampling_rate == 0) throw Error(ErrorCode::InvalidArgument, "sampling rate must be positive");
  const auto lines = split_lines(text);
  if (lines.empty()) throw Error(ErrorCode::EmptyFile, "recording has no header");

  const auto header = split_commas(lines.front());
  std::size_t first_col = 0;
  if (!header.empty() && header.front() == "t") first_col = 1;

  // column_of[c] = file column holding canonical channel c
  std::array<std::optional<std::size_t>, kNumChannels> column_of{};
  for (std::size_t col = first_col; col < header.size(); ++col) {
    auto ch = parse_channel(header[col]);
    if (!ch) throw Error(ErrorCode::BadHeader, "unknown column '" + std::string(header[col]) + "'");
    auto& slot = column_of[channel_index(*ch)];
    if (slot) throw Error(ErrorCode::BadHeader, "duplicate column '" + std::string(header[col]) + "'");
    slot = col;
  }
  for (std::size_t c = 0; c < kNumChannels; ++c) {
    if (!column_of[c]) throw Error(ErrorCode::MissingChannel, std::string(kChannelNames[c]));
  }
  if (lines.size() < 2) throw Error(ErrorCode::EmptyFile, "recording has no sample rows");

  EegRecording rec;
  rec.subject_id = std::move(subject_id);
  rec.sampling_rate = sampling_rate;
  rec.samples.resize((lines.size() - 1) * kNumChannels);
  for (std::size_t row = 1; row < lines.size(); ++row) {
    const auto fields = split_commas(lines[row]);
    if (fields.size() != header.size()) {
      throw Error(ErrorCode::NonNumericSample,
                  "row " + std::to_string(row + 1) + " has " + std::to_string(fields.size()) +
                      " fields, expected " + std::to_string(header.size()));
    }
    for (std::size_t c = 0; c < kNumChannels; ++c) {
      const std::size_t col = *column_of[c];
      auto v = parse_double(fields[col]);
      if (!v) {
        throw Error(ErrorCode::NonNumericSample, "row " + std::to_string(row + 1) + ", column " +
                                                     std::string(kChannelNames[c]) + ": '" +
                                                     std::string(fields[col]) + "'");
      }
      rec.samples[(row - 1) * kNumChannels + c] = *v;
    }
  }
  if (rec.n_samples() % sampling_rate != 0) {
    warn("recording " + rec.subject_id + " has " + std::to_string(rec.n_samples()) +
         " samples, not a whole number of seconds");
  }
  return rec;
}

EegRecording load_recording(const std::filesystem::path& path, std::size_t sampling_rate) {
  return parse_recording_csv(read_text_file(path), path.stem().string(), sampling_rate);
}

std::string format_recording_csv(const EegRecording& rec) {
  std::string out;
  out.reserve(rec.samples.size() * 12);
  for (std::size_t c = 0; c < kNumChannels; ++c) {
    if (c) out += ',';
    out += kChannelNames[c];
  }
  out += '\n';
  for (std::size_t s = 0; s < rec.n_samples(); ++s) {
    for (std::size_t c = 0; c < kNumChannels; ++c) {
      if (c) out += ',';
      out += format_double(rec.at(s, c));
    }
    out += '\n';
  }
  return out;
}

void save_recording(const EegRecording& rec, const std::filesystem::path& path) {
  write_text_file(path, format_recording_csv(rec));
}

std::vector<FatigueLevel> parse_labels_csv(std::string_view text) {
  const auto lines = split_lines(text);
  if (lines.empty()) throw Error(ErrorCode::EmptyFile, "label file is empty");
  const auto header = split_commas(lines.front());
  if (header.size() != 2 || header[0] != "second" || header[1] != "label") {
    throw Error(ErrorCode::BadHeader, "label file header must be 'second,label'");
  }
  std::vector<FatigueLevel> labels;
  labels.reserve(lines.size() - 1);
  for (std::size_t row = 1; row < lines.size(); ++row) {
    const auto fields = split_commas(lines[row]);
    const std::string where = "label row " + std::to_string(row + 1);
    if (fields.size() != 2) throw Error(ErrorCode::BadLabelFile, where + ": expected 2 fields");
    std::size_t second = 0;
    auto [ptr, ec] = std::from_chars(fields[0].data(), fields[0].data() + fields[0].size(), second);
    if (ec != std::errc() || ptr != fields[0].data() + fields[0].size() || second != row) {
      throw Error(ErrorCode::BadLabelFile, where + ": seconds must run 1,2,3,...");
    }
    auto level = parse_fatigue_level(fields[1]);
    if (!level) throw Error(ErrorCode::BadLabelFile, where + ": unknown label '" + std::string(fields[1]) + "'");
    labels.push_back(*level);
  }
  return labels;
}

std::vector<FatigueLevel> load_labels(const std::filesystem::path& path) {
  return parse_labels_csv(read_text_file(path));
}

void save_labels(std::span<const FatigueLevel> labels, const std::filesystem::path& path) {
  std::string out = "second,label\n";
  for (std::size_t i = 0; i < labels.size(); ++i) {
    out += std::to_string(i + 1);
    out += ',';
    out += fatigue_level_name(labels[i]);
    out += '\n';
  }
  write_text_file(path, out);
}

std::vector<Segment> segment_recording(const EegRecording& rec) {
  const std::size_t fs = rec.sampling_rate;
  const std::size_t n_segments = rec.n_samples() / fs;
  const std::size_t dropped = rec.n_samples() - n_segments * fs;
  if (dropped > 0) {
    warn("dropping " + std::to_string(dropped) + " trailing samples of " + rec.subject_id);
  }
  std::vector<Segment> segments(n_segments);
  for (std::size_t i = 0; i < n_segments; ++i) {
    Segment& seg = segments[i];
    seg.index = i + 1;
    seg.sampling_rate = fs;
    auto first = rec.samples.begin() + static_cast<std::ptrdiff_t>(i * fs * kNumChannels);
    seg.data.assign(first, first + static_cast<std::ptrdiff_t>(fs * kNumChannels));
  }
  return segments;
}

namespace {

struct BandSpec {
  double lo_hz;
  double hi_hz;
  double amplitude;
  int components;
};

// Rhythm amplitudes in microvolts; alpha is the class-dependent band.
constexpr std::array<BandSpec, 4> kSynthBands = {{
    {4.5, 7.5, 6.0, 2},    // theta
    {8.5, 12.5, 5.0, 2},   // alpha
    {15.0, 29.0, 3.0, 3},  // beta
    {32.0, 39.0, 1.5, 2},  // gamma
}};
constexpr std::size_t kAlphaBand = 1;

// Posterior-dominant alpha topography.
constexpr std::array<double, kNumChannels> kAlphaGain = {
    0.45, 0.45, 0.55, 0.55, 0.9, 0.9, 1.0, 1.0, 0.4, 0.4, 0.6, 0.6, 0.7, 0.7};

}  // namespace

SynthSession synth_session(const SynthConfig& cfg) {
  if (cfg.n_segments == 0) throw Error(ErrorCode::InvalidArgument, "n_segments must be > 0");
  if (!(cfg.noise_std >= 0.0)) throw Error(ErrorCode::InvalidArgument, "noise_std must be >= 0");
  if (!(cfg.class_effect >= 0.0)) throw Error(ErrorCode::InvalidArgument, "class_effect must be >= 0");
  if (cfg.sampling_rate == 0) throw Error(ErrorCode::InvalidArgument, "sampling rate must be positive");

  const std::size_t fs = cfg.sampling_rate;
  SynthSession session;
  session.recording.subject_id = cfg.subject_id;
  session.recording.sampling_rate = fs;
  session.recording.samples.assign(cfg.n_segments * fs * kNumChannels, 0.0);
  session.labels.resize(cfg.n_segments);

  Rng rng(cfg.seed);
  std::vector<double> second(fs);
  for (std::size_t seg = 0; seg < cfg.n_segments; ++seg) {
    const std::size_t klass = std::min<std::size_t>(2, (3 * seg) / cfg.n_segments);
    session.labels[seg] = static_cast<FatigueLevel>(klass);
    for (std::size_t c = 0; c < kNumChannels; ++c) {
      std::fill(second.begin(), second.end(), 0.0);
      for (std::size_t b = 0; b < kSynthBands.size(); ++b) {
        const BandSpec& band = kSynthBands[b];
        double amp = band.amplitude;
        if (b == kAlphaBand) amp *= kAlphaGain[c] * (1.0 + cfg.class_effect * static_cast<double>(klass));
        for (int k = 0; k < band.components; ++k) {
          const double freq = rng.uniform(band.lo_hz, band.hi_hz);
          const double phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
          const double a = amp * rng.uniform(0.7, 1.3);
          for (std::size_t n = 0; n < fs; ++n) {
            const double t = static_cast<double>(n) / static_cast<double>(fs);
            second[n] += a * std::sin(2.0 * std::numbers::pi * freq * t + phase);
          }
        }
      }
      for (std::size_t n = 0; n < fs; ++n) {
        const double noise = cfg.noise_std > 0.0 ? cfg.noise_std * rng.normal() : 0.0;
        session.recording.samples[(seg * fs + n) * kNumChannels + c] = second[n] + noise;
      }
    }
  }
  return session;
}

}  // namespace fatigue
