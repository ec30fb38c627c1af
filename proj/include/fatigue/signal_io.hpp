#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace fatigue {

/// The 14-electrode montage, in canonical listing order.
enum class Channel : std::uint8_t { AF3, AF4, F3, F4, P7, P8, O1, O2, F7, F8, FC5, FC6, T7, T8 };

inline constexpr std::size_t kNumChannels = 14;
inline constexpr std::size_t kDefaultSamplingRate = 128;

inline constexpr std::array<std::string_view, kNumChannels> kChannelNames = {
    "AF3", "AF4", "F3", "F4", "P7", "P8", "O1", "O2", "F7", "F8", "FC5", "FC6", "T7", "T8"};

constexpr std::size_t channel_index(Channel c) { return static_cast<std::size_t>(c); }
constexpr Channel channel_at(std::size_t i) { return static_cast<Channel>(i); }
constexpr std::string_view channel_name(Channel c) { return kChannelNames[channel_index(c)]; }
std::optional<Channel> parse_channel(std::string_view name);

enum class FatigueLevel : std::uint8_t { Low = 0, Medium = 1, High = 2 };

inline constexpr std::size_t kNumClasses = 3;

std::string_view fatigue_level_name(FatigueLevel level);  // "low" / "medium" / "high"
std::optional<FatigueLevel> parse_fatigue_level(std::string_view name);
constexpr int to_int(FatigueLevel level) { return static_cast<int>(level); }

/// Multichannel recording in microvolts, stored sample-major:
/// samples[s * kNumChannels + c].
struct EegRecording {
  std::string subject_id;
  std::size_t sampling_rate = kDefaultSamplingRate;
  std::vector<double> samples;

  std::size_t n_samples() const { return samples.size() / kNumChannels; }
  double at(std::size_t sample, std::size_t channel) const {
    return samples[sample * kNumChannels + channel];
  }
  std::vector<double> channel(std::size_t c) const;
  void set_channel(std::size_t c, std::span<const double> values);
};

/// One-second window. `index` is the 1-based second within the session.
struct Segment {
  std::size_t index = 1;
  std::size_t sampling_rate = kDefaultSamplingRate;
  std::vector<double> data;  // [sampling_rate x kNumChannels], sample-major
  std::optional<FatigueLevel> label;

  std::size_t n_samples() const { return data.size() / kNumChannels; }
  std::vector<double> channel(std::size_t c) const;
};

struct SynthConfig {
  std::size_t n_segments = 2400;
  std::uint64_t seed = 1;
  double class_effect = 2.0;
  double noise_std = 2.0;
  std::size_t sampling_rate = kDefaultSamplingRate;
  std::string subject_id = "S01";
};

struct SynthSession {
  EegRecording recording;
  std::vector<FatigueLevel> labels;  // one per second
};

/// Receives non-fatal diagnostics (trailing partial seconds etc). Defaults to stderr.
using WarningHandler = std::function<void(std::string_view)>;
void set_warning_handler(WarningHandler handler);
void warn(std::string_view message);

EegRecording load_recording(const std::filesystem::path& path,
                            std::size_t sampling_rate = kDefaultSamplingRate);
EegRecording parse_recording_csv(std::string_view text, std::string subject_id,
                                 std::size_t sampling_rate = kDefaultSamplingRate);
void save_recording(const EegRecording& rec, const std::filesystem::path& path);
std::string format_recording_csv(const EegRecording& rec);

std::vector<FatigueLevel> load_labels(const std::filesystem::path& path);
std::vector<FatigueLevel> parse_labels_csv(std::string_view text);
void save_labels(std::span<const FatigueLevel> labels, const std::filesystem::path& path);

std::vector<Segment> segment_recording(const EegRecording& rec);

/// Alpha amplitude grows as (1 + class_effect * class_index); labels follow temporal thirds.
SynthSession synth_session(const SynthConfig& cfg);

// Shortest round-trip decimal representation.
std::string format_double(double v);

}  // namespace fatigue
