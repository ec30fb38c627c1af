#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <string_view>
#include <vector>

#include "fatigue/signal_io.hpp"

namespace fatigue {

struct FirFilter {
  std::vector<double> taps;
  double low_hz = 0.0;
  double high_hz = 0.0;
  double fs = 0.0;
};

/// Hamming-windowed sinc bandpass, scaled to unit gain at the band center.
FirFilter design_bandpass(double low_hz, double high_hz, double fs, std::size_t n_taps);

/// Magnitude of the filter's frequency response at `freq_hz`.
double filter_gain(const FirFilter& filter, double freq_hz);

/// Forward-backward filtering with odd reflection padding of n_taps-1 samples per side.
std::vector<double> apply_zero_phase(const FirFilter& filter, std::span<const double> signal);

/// Filters every channel of a recording; segmenting afterwards keeps edge padding
/// out of the one-second windows.
EegRecording filter_recording(const EegRecording& rec, const FirFilter& filter);

struct Psd {
  std::vector<double> freqs;
  std::vector<double> power;

  double total() const;
};

/// One-sided Hamming periodogram whose bins sum to sum(w^2 x^2) / sum(w^2).
Psd periodogram(std::span<const double> signal, double fs);

enum class Band { Theta, Alpha, Beta, Gamma };

struct BandEdges {
  double lo_hz;
  double hi_hz;
};

inline constexpr std::array<Band, 4> kBands = {Band::Theta, Band::Alpha, Band::Beta, Band::Gamma};

constexpr BandEdges band_edges(Band b) {
  switch (b) {
    case Band::Theta: return {4.0, 8.0};
    case Band::Alpha: return {8.0, 13.0};
    case Band::Beta: return {14.0, 30.0};
    case Band::Gamma: return {31.0, 40.0};
  }
  return {0.0, 0.0};
}

/// Mean of bins with lo <= f < hi.
double band_power(const Psd& psd, Band band);

struct TimeStats {
  double mean = 0.0;
  double variance = 0.0;
  double zcr = 0.0;
  double kurtosis = 0.0;
  double skewness = 0.0;
};

TimeStats time_stats(std::span<const double> signal);

inline constexpr std::size_t kDefaultEntropyBins = 16;

/// Amplitude-histogram entropy in nats.
double shannon_entropy(std::span<const double> signal, std::size_t n_bins = kDefaultEntropyBins);

inline constexpr double kSpectralEntropyLoHz = 4.0;
inline constexpr double kSpectralEntropyHiHz = 45.0;

/// Normalized entropy of the 4-45 Hz power distribution, in [0, 1].
double spectral_entropy(const Psd& psd, double lo_hz = kSpectralEntropyLoHz,
                        double hi_hz = kSpectralEntropyHiHz);

enum class FeatureKind : std::uint8_t {
  Theta, Alpha, Beta, Gamma,
  Mean, Variance, Zcr, Kurtosis, Skewness,
  Shannon, Spectral,
};

inline constexpr std::size_t kNumFeatureKinds = 11;
inline constexpr std::size_t kNumFrequencyKinds = 4;
inline constexpr std::size_t kNumTimeKinds = 5;
inline constexpr std::size_t kNumEntropyKinds = 2;

constexpr std::size_t kind_index(FeatureKind k) { return static_cast<std::size_t>(k); }
constexpr FeatureKind kind_at(std::size_t i) { return static_cast<FeatureKind>(i); }

/// Short column tag: theta, alpha, beta, gamma, mean, var, zcr, kurt, skew, se, specen.
std::string_view feature_kind_tag(FeatureKind k);

struct FeatureSet {
  std::array<std::array<double, kNumFeatureKinds>, kNumChannels> values{};

  double get(std::size_t channel, FeatureKind k) const { return values[channel][kind_index(k)]; }
  double& get(std::size_t channel, FeatureKind k) { return values[channel][kind_index(k)]; }

  std::vector<double> frequency_values() const;  // 56
  std::vector<double> time_values() const;       // 70
  std::vector<double> entropy_values() const;    // 28
  std::array<double, kNumChannels> across_channels(FeatureKind k) const;
};

struct FeatureOptions {
  std::size_t entropy_bins = kDefaultEntropyBins;
};

/// Features of an already band-limited segment.
FeatureSet extract_features(const Segment& segment, const FeatureOptions& options = {});

/// Filters each channel of the segment first; the segment must be longer than the filter.
FeatureSet extract_features(const Segment& segment, const FirFilter& filter,
                            const FeatureOptions& options = {});

/// Feature matrix CSV: segment_index,label,<channel>_<feature>...
std::string feature_csv_header();
std::string format_feature_row(const Segment& segment, const FeatureSet& features);

struct FeatureTable {
  std::vector<std::size_t> segment_index;
  std::vector<std::optional<FatigueLevel>> labels;
  std::vector<FeatureSet> features;
};

std::string format_feature_csv(const FeatureTable& table);
FeatureTable parse_feature_csv(std::string_view text);

}  // namespace fatigue
