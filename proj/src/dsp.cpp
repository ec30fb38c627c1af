#include "fatigue/dsp.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <complex>
#include <numbers>
#include <string>

#include "fatigue/error.hpp"

namespace fatigue {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

double sinc(double x) {
  if (x == 0.0) return 1.0;
  return std::sin(std::numbers::pi * x) / (std::numbers::pi * x);
}

// Causal FIR pass with zero initial state.
std::vector<double> fir_pass(std::span<const double> taps, std::span<const double> x) {
  const std::size_t m = taps.size();
  std::vector<double> y(x.size(), 0.0);
  for (std::size_t n = 0; n < x.size(); ++n) {
    const std::size_t kmax = std::min(m, n + 1);
    double acc = 0.0;
    for (std::size_t k = 0; k < kmax; ++k) acc += taps[k] * x[n - k];
    y[n] = acc;
  }
  return y;
}

}  // namespace

FirFilter design_bandpass(double low_hz, double high_hz, double fs, std::size_t n_taps) {
  if (!(fs > 0.0) || !(low_hz > 0.0) || !(low_hz < high_hz) || !(high_hz < fs / 2.0)) {
    throw Error(ErrorCode::InvalidBandEdges, "need 0 < low < high < fs/2, got low=" +
                                                 std::to_string(low_hz) + " high=" +
                                                 std::to_string(high_hz) + " fs=" + std::to_string(fs));
  }
  if (n_taps < 3 || n_taps % 2 == 0) {
    throw Error(ErrorCode::InvalidTapCount, "n_taps must be odd and >= 3, got " + std::to_string(n_taps));
  }
  FirFilter f;
  f.low_hz = low_hz;
  f.high_hz = high_hz;
  f.fs = fs;
  f.taps.resize(n_taps);
  const double f1 = low_hz / fs;
  const double f2 = high_hz / fs;
  const std::ptrdiff_t half = static_cast<std::ptrdiff_t>(n_taps / 2);
  for (std::size_t n = 0; n < n_taps; ++n) {
    const double m = static_cast<double>(static_cast<std::ptrdiff_t>(n) - half);
    const double ideal = 2.0 * f2 * sinc(2.0 * f2 * m) - 2.0 * f1 * sinc(2.0 * f1 * m);
    const double window =
        0.54 - 0.46 * std::cos(kTwoPi * static_cast<double>(n) / static_cast<double>(n_taps - 1));
    f.taps[n] = ideal * window;
  }
  // Exact symmetry, then unit gain at the band center.
  for (std::size_t n = 0; n < n_taps / 2; ++n) {
    const double avg = 0.5 * (f.taps[n] + f.taps[n_taps - 1 - n]);
    f.taps[n] = avg;
    f.taps[n_taps - 1 - n] = avg;
  }
  const double center_gain = filter_gain(f, 0.5 * (low_hz + high_hz));
  for (double& t : f.taps) t /= center_gain;
  return f;
}

double filter_gain(const FirFilter& filter, double freq_hz) {
  std::complex<double> acc{0.0, 0.0};
  const double omega = kTwoPi * freq_hz / filter.fs;
  for (std::size_t n = 0; n < filter.taps.size(); ++n) {
    acc += filter.taps[n] * std::polar(1.0, -omega * static_cast<double>(n));
  }
  return std::abs(acc);
}

std::vector<double> apply_zero_phase(const FirFilter& filter, std::span<const double> signal) {
  const std::size_t n_taps = filter.taps.size();
  const std::size_t n = signal.size();
  if (n <= n_taps) {
    throw Error(ErrorCode::SignalTooShort, "signal of " + std::to_string(n) +
                                               " samples needs more than " + std::to_string(n_taps));
  }
  const std::size_t pad = n_taps - 1;
  std::vector<double> padded(n + 2 * pad);
  const double first = signal.front();
  const double last = signal.back();
  for (std::size_t i = 0; i < pad; ++i) {
    padded[pad - 1 - i] = 2.0 * first - signal[i + 1];
    padded[pad + n + i] = 2.0 * last - signal[n - 2 - i];
  }
  std::copy(signal.begin(), signal.end(), padded.begin() + static_cast<std::ptrdiff_t>(pad));

  std::vector<double> y = fir_pass(filter.taps, padded);
  std::reverse(y.begin(), y.end());
  y = fir_pass(filter.taps, y);
  std::reverse(y.begin(), y.end());
  return {y.begin() + static_cast<std::ptrdiff_t>(pad), y.begin() + static_cast<std::ptrdiff_t>(pad + n)};
}

EegRecording filter_recording(const EegRecording& rec, const FirFilter& filter) {
  EegRecording out = rec;
  for (std::size_t c = 0; c < kNumChannels; ++c) {
    const auto x = rec.channel(c);
    out.set_channel(c, apply_zero_phase(filter, x));
  }
  return out;
}

double Psd::total() const {
  double s = 0.0;
  for (double p : power) s += p;
  return s;
}

Psd periodogram(std::span<const double> signal, double fs) {
  const std::size_t n = signal.size();
  if (n < 8) throw Error(ErrorCode::TooShort, "periodogram needs at least 8 samples");
  std::vector<double> cos_table(n), sin_table(n), windowed(n);
  double window_power = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double phase = kTwoPi * static_cast<double>(i) / static_cast<double>(n);
    cos_table[i] = std::cos(phase);
    sin_table[i] = std::sin(phase);
    const double w = 0.54 - 0.46 * cos_table[i];
    windowed[i] = w * signal[i];
    window_power += w * w;
  }
  const std::size_t n_bins = n / 2 + 1;
  Psd psd;
  psd.freqs.resize(n_bins);
  psd.power.resize(n_bins);
  const double scale = 1.0 / (static_cast<double>(n) * window_power);
  for (std::size_t k = 0; k < n_bins; ++k) {
    double re = 0.0;
    double im = 0.0;
    std::size_t idx = 0;
    for (std::size_t i = 0; i < n; ++i) {
      re += windowed[i] * cos_table[idx];
      im -= windowed[i] * sin_table[idx];
      idx += k;
      if (idx >= n) idx -= n;
    }
    double p = (re * re + im * im) * scale;
    const bool unpaired = (k == 0) || (n % 2 == 0 && k == n / 2);
    if (!unpaired) p *= 2.0;
    psd.freqs[k] = static_cast<double>(k) * fs / static_cast<double>(n);
    psd.power[k] = p;
  }
  return psd;
}

double band_power(const Psd& psd, Band band) {
  const auto [lo, hi] = band_edges(band);
  double sum = 0.0;
  std::size_t count = 0;
  for (std::size_t i = 0; i < psd.freqs.size(); ++i) {
    if (psd.freqs[i] >= lo && psd.freqs[i] < hi) {
      sum += psd.power[i];
      ++count;
    }
  }
  if (count == 0) {
    throw Error(ErrorCode::EmptyBand, "no PSD bins in [" + std::to_string(lo) + ", " + std::to_string(hi) + ")");
  }
  return sum / static_cast<double>(count);
}

TimeStats time_stats(std::span<const double> signal) {
  const std::size_t n = signal.size();
  if (n < 2) throw Error(ErrorCode::TooShort, "time statistics need at least 2 samples");
  const double inv_n = 1.0 / static_cast<double>(n);
  double mean = 0.0;
  for (double v : signal) mean += v;
  mean *= inv_n;

  double m2 = 0.0, m3 = 0.0, m4 = 0.0;
  std::size_t crossings = 0;
  bool prev_positive = signal[0] - mean >= 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double d = signal[i] - mean;
    const double d2 = d * d;
    m2 += d2;
    m3 += d2 * d;
    m4 += d2 * d2;
    const bool positive = d >= 0.0;
    if (i > 0 && positive != prev_positive) ++crossings;
    prev_positive = positive;
  }
  m2 *= inv_n;
  m3 *= inv_n;
  m4 *= inv_n;

  TimeStats ts;
  ts.mean = mean;
  ts.variance = m2;
  ts.zcr = static_cast<double>(crossings) / static_cast<double>(n - 1);
  // Constant signal: moments ratio undefined, reported as 0.
  if (m2 > 1e-30 * mean * mean && m2 > 0.0) {
    ts.skewness = m3 / std::pow(m2, 1.5);
    ts.kurtosis = m4 / (m2 * m2);
  }
  return ts;
}

double shannon_entropy(std::span<const double> signal, std::size_t n_bins) {
  if (signal.size() < 2) throw Error(ErrorCode::TooShort, "entropy needs at least 2 samples");
  if (n_bins == 0) throw Error(ErrorCode::InvalidArgument, "n_bins must be positive");
  const auto [min_it, max_it] = std::minmax_element(signal.begin(), signal.end());
  const double lo = *min_it;
  const double range = *max_it - lo;
  if (!(range > 0.0)) return 0.0;
  std::vector<std::size_t> counts(n_bins, 0);
  for (double v : signal) {
    auto bin = static_cast<std::size_t>((v - lo) / range * static_cast<double>(n_bins));
    counts[std::min(bin, n_bins - 1)]++;
  }
  const double inv_n = 1.0 / static_cast<double>(signal.size());
  double h = 0.0;
  for (std::size_t c : counts) {
    if (c == 0) continue;
    const double p = static_cast<double>(c) * inv_n;
    h -= p * std::log(p);
  }
  return h;
}

double spectral_entropy(const Psd& psd, double lo_hz, double hi_hz) {
  double total = 0.0;
  std::size_t k = 0;
  for (std::size_t i = 0; i < psd.freqs.size(); ++i) {
    if (psd.freqs[i] >= lo_hz && psd.freqs[i] <= hi_hz) {
      total += psd.power[i];
      ++k;
    }
  }
  if (k < 2 || !(total > 0.0)) return 0.0;
  double h = 0.0;
  for (std::size_t i = 0; i < psd.freqs.size(); ++i) {
    if (psd.freqs[i] >= lo_hz && psd.freqs[i] <= hi_hz && psd.power[i] > 0.0) {
      const double q = psd.power[i] / total;
      h -= q * std::log(q);
    }
  }
  return std::clamp(h / std::log(static_cast<double>(k)), 0.0, 1.0);
}

std::string_view feature_kind_tag(FeatureKind k) {
  static constexpr std::array<std::string_view, kNumFeatureKinds> tags = {
      "theta", "alpha", "beta", "gamma", "mean", "var", "zcr", "kurt", "skew", "se", "specen"};
  return tags[kind_index(k)];
}

std::vector<double> FeatureSet::frequency_values() const {
  std::vector<double> out;
  for (std::size_t k = 0; k < kNumFrequencyKinds; ++k)
    for (std::size_t c = 0; c < kNumChannels; ++c) out.push_back(values[c][k]);
  return out;
}

std::vector<double> FeatureSet::time_values() const {
  std::vector<double> out;
  for (std::size_t k = kNumFrequencyKinds; k < kNumFrequencyKinds + kNumTimeKinds; ++k)
    for (std::size_t c = 0; c < kNumChannels; ++c) out.push_back(values[c][k]);
  return out;
}

std::vector<double> FeatureSet::entropy_values() const {
  std::vector<double> out;
  for (std::size_t k = kNumFrequencyKinds + kNumTimeKinds; k < kNumFeatureKinds; ++k)
    for (std::size_t c = 0; c < kNumChannels; ++c) out.push_back(values[c][k]);
  return out;
}

std::array<double, kNumChannels> FeatureSet::across_channels(FeatureKind k) const {
  std::array<double, kNumChannels> out{};
  for (std::size_t c = 0; c < kNumChannels; ++c) out[c] = values[c][kind_index(k)];
  return out;
}

FeatureSet extract_features(const Segment& segment, const FeatureOptions& options) {
  FeatureSet fs;
  const double rate = static_cast<double>(segment.sampling_rate);
  for (std::size_t c = 0; c < kNumChannels; ++c) {
    const auto x = segment.channel(c);
    const Psd psd = periodogram(x, rate);
    auto& v = fs.values[c];
    v[kind_index(FeatureKind::Theta)] = band_power(psd, Band::Theta);
    v[kind_index(FeatureKind::Alpha)] = band_power(psd, Band::Alpha);
    v[kind_index(FeatureKind::Beta)] = band_power(psd, Band::Beta);
    v[kind_index(FeatureKind::Gamma)] = band_power(psd, Band::Gamma);
    const TimeStats ts = time_stats(x);
    v[kind_index(FeatureKind::Mean)] = ts.mean;
    v[kind_index(FeatureKind::Variance)] = ts.variance;
    v[kind_index(FeatureKind::Zcr)] = ts.zcr;
    v[kind_index(FeatureKind::Kurtosis)] = ts.kurtosis;
    v[kind_index(FeatureKind::Skewness)] = ts.skewness;
    v[kind_index(FeatureKind::Shannon)] = shannon_entropy(x, options.entropy_bins);
    v[kind_index(FeatureKind::Spectral)] = spectral_entropy(psd);
  }
  return fs;
}

FeatureSet extract_features(const Segment& segment, const FirFilter& filter,
                            const FeatureOptions& options) {
  Segment filtered = segment;
  for (std::size_t c = 0; c < kNumChannels; ++c) {
    const auto y = apply_zero_phase(filter, segment.channel(c));
    for (std::size_t s = 0; s < y.size(); ++s) filtered.data[s * kNumChannels + c] = y[s];
  }
  return extract_features(filtered, options);
}

std::string feature_csv_header() {
  std::string h = "segment_index,label";
  for (std::size_t c = 0; c < kNumChannels; ++c) {
    for (std::size_t k = 0; k < kNumFeatureKinds; ++k) {
      h += ',';
      h += kChannelNames[c];
      h += '_';
      h += feature_kind_tag(kind_at(k));
    }
  }
  return h;
}

namespace {

std::string format_row(std::size_t index, const std::optional<FatigueLevel>& label,
                       const FeatureSet& features) {
  std::string row = std::to_string(index);
  row += ',';
  if (label) row += fatigue_level_name(*label);
  for (const auto& channel : features.values) {
    for (double v : channel) {
      row += ',';
      row += format_double(v);
    }
  }
  return row;
}

}  // namespace

std::string format_feature_row(const Segment& segment, const FeatureSet& features) {
  return format_row(segment.index, segment.label, features);
}

std::string format_feature_csv(const FeatureTable& table) {
  std::string out = feature_csv_header();
  out += '\n';
  for (std::size_t i = 0; i < table.features.size(); ++i) {
    out += format_row(table.segment_index[i], table.labels[i], table.features[i]);
    out += '\n';
  }
  return out;
}

FeatureTable parse_feature_csv(std::string_view text) {
  FeatureTable table;
  std::size_t line_no = 0;
  std::size_t start = 0;
  const std::string expected_header = feature_csv_header();
  while (start < text.size()) {
    std::size_t end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(start, end - start);
    start = end + 1;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.empty()) continue;
    ++line_no;
    if (line_no == 1) {
      if (line != expected_header) throw Error(ErrorCode::BadHeader, "feature CSV header mismatch");
      continue;
    }
    const std::string where = "feature CSV line " + std::to_string(line_no);
    std::vector<std::string_view> fields;
    std::size_t fs = 0;
    while (true) {
      std::size_t comma = line.find(',', fs);
      if (comma == std::string_view::npos) {
        fields.push_back(line.substr(fs));
        break;
      }
      fields.push_back(line.substr(fs, comma - fs));
      fs = comma + 1;
    }
    if (fields.size() != 2 + kNumChannels * kNumFeatureKinds) {
      throw Error(ErrorCode::NonNumericSample, where + ": wrong field count");
    }
    std::size_t index = 0;
    auto [p, ec] = std::from_chars(fields[0].data(), fields[0].data() + fields[0].size(), index);
    if (ec != std::errc()) throw Error(ErrorCode::NonNumericSample, where + ": bad segment index");
    std::optional<FatigueLevel> label;
    if (!fields[1].empty()) {
      label = parse_fatigue_level(fields[1]);
      if (!label) throw Error(ErrorCode::BadLabel, where + ": bad label");
    }
    FeatureSet set;
    for (std::size_t c = 0; c < kNumChannels; ++c) {
      for (std::size_t k = 0; k < kNumFeatureKinds; ++k) {
        const auto field = fields[2 + c * kNumFeatureKinds + k];
        double v = 0.0;
        auto [q, ec2] = std::from_chars(field.data(), field.data() + field.size(), v);
        if (ec2 != std::errc() || q != field.data() + field.size()) {
          throw Error(ErrorCode::NonNumericSample, where + ": bad value '" + std::string(field) + "'");
        }
        set.values[c][k] = v;
      }
    }
    table.segment_index.push_back(index);
    table.labels.push_back(label);
    table.features.push_back(set);
  }
  return table;
}

}  // namespace fatigue
