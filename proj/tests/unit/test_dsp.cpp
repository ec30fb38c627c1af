#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <vector>

#include "fatigue/dsp.hpp"
#include "fatigue/rng.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace fatigue;

namespace {

constexpr double kFs = 128.0;

std::vector<double> sine(double hz, std::size_t n, double amp = 1.0, double phase = 0.0) {
  std::vector<double> x(n);
  for (std::size_t i = 0; i < n; ++i) x[i] = amp * std::sin(2.0 * std::numbers::pi * hz * double(i) / kFs + phase);
  return x;
}

std::vector<double> gaussian(std::size_t n, std::uint64_t seed, double sigma = 1.0) {
  Rng rng(seed);
  std::vector<double> x(n);
  for (double& v : x) v = sigma * rng.normal();
  return x;
}

Psd flat_psd(double value) {
  Psd p;
  for (int k = 0; k <= 64; ++k) {
    p.freqs.push_back(double(k));
    p.power.push_back(value);
  }
  return p;
}

double windowed_mean_square(const std::vector<double>& x) {
  const auto w = oracle::hamming(x.size());
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    num += w[i] * w[i] * x[i] * x[i];
    den += w[i] * w[i];
  }
  return num / den;
}

Segment segment_of(std::size_t n, const std::function<double(std::size_t, std::size_t)>& f) {
  Segment s;
  s.data.resize(n * kNumChannels);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t c = 0; c < kNumChannels; ++c) s.data[i * kNumChannels + c] = f(i, c);
  }
  return s;
}

}  // namespace

// ---- filter design ----------------------------------------------------------

TEST(Bandpass, GainContract) {
  const auto f = design_bandpass(4.0, 45.0, kFs, 129);
  ASSERT_EQ(f.taps.size(), 129u);
  EXPECT_LE(oracle::fir_gain_db(f.taps, 0.0, kFs), -40.0);
  EXPECT_LE(oracle::fir_gain_db(f.taps, 2.0, kFs), -20.0);
  EXPECT_LE(oracle::fir_gain_db(f.taps, 55.0, kFs), -20.0);
  EXPECT_NEAR(oracle::fir_gain_db(f.taps, 20.0, kFs), 0.0, 1.0);
  EXPECT_NEAR(oracle::fir_gain_db(f.taps, 24.5, kFs), 0.0, 1.0);
  const double dc_sum = std::accumulate(f.taps.begin(), f.taps.end(), 0.0);
  EXPECT_LE(20.0 * std::log10(std::abs(dc_sum)), -40.0);
}

TEST(Bandpass, LibraryGainAgreesWithOracle) {
  const auto f = design_bandpass(4.0, 45.0, kFs, 129);
  for (double hz : {0.0, 2.0, 4.0, 10.0, 20.0, 45.0, 55.0, 63.0}) {
    EXPECT_NEAR(20.0 * std::log10(filter_gain(f, hz)), oracle::fir_gain_db(f.taps, hz, kFs), 1e-6) << hz;
  }
}

TEST(Bandpass, TapsSymmetric) {
  const auto f = design_bandpass(4.0, 45.0, kFs, 129);
  for (std::size_t i = 0; i < f.taps.size(); ++i) {
    EXPECT_NEAR(f.taps[i], f.taps[f.taps.size() - 1 - i], 1e-12);
  }
}

TEST(Bandpass, RejectsBadArguments) {
  EXPECT_FATIGUE_ERROR(design_bandpass(45.0, 4.0, kFs, 129), ErrorCode::InvalidBandEdges);
  EXPECT_FATIGUE_ERROR(design_bandpass(0.0, 45.0, kFs, 129), ErrorCode::InvalidBandEdges);
  EXPECT_FATIGUE_ERROR(design_bandpass(4.0, 64.0, kFs, 129), ErrorCode::InvalidBandEdges);
  EXPECT_FATIGUE_ERROR(design_bandpass(4.0, 45.0, kFs, 128), ErrorCode::InvalidTapCount);
}

// ---- zero-phase filtering ---------------------------------------------------

TEST(ZeroPhase, ConstantIsRemoved) {
  const auto f = design_bandpass(4.0, 45.0, kFs, 129);
  const std::vector<double> x(1024, 7.0);
  const auto y = apply_zero_phase(f, x);
  ASSERT_EQ(y.size(), x.size());
  for (double v : y) EXPECT_LT(std::abs(v), 1e-3 * 7.0);
}

TEST(ZeroPhase, TenHertzPassesWithoutShift) {
  const auto f = design_bandpass(4.0, 45.0, kFs, 129);
  const auto x = sine(10.0, 1024);
  const auto y = apply_zero_phase(f, x);
  // Least-squares fit of a*sin + b*cos on the interior; b measures phase shift.
  double ss = 0, cc = 0, sc = 0, ys = 0, yc = 0;
  for (std::size_t i = 129; i + 129 < y.size(); ++i) {
    const double t = 2.0 * std::numbers::pi * 10.0 * double(i) / kFs;
    const double s = std::sin(t), c = std::cos(t);
    ss += s * s; cc += c * c; sc += s * c; ys += y[i] * s; yc += y[i] * c;
  }
  const double det = ss * cc - sc * sc;
  const double a = (ys * cc - yc * sc) / det;
  const double b = (yc * ss - ys * sc) / det;
  EXPECT_NEAR(std::hypot(a, b), 1.0, 0.02);
  EXPECT_NEAR(b, 0.0, 1e-3);
}

TEST(ZeroPhase, ZeroInZeroOut) {
  const auto f = design_bandpass(4.0, 45.0, kFs, 129);
  for (double v : apply_zero_phase(f, std::vector<double>(300, 0.0))) EXPECT_EQ(v, 0.0);
}

TEST(ZeroPhase, Linearity) {
  const auto f = design_bandpass(4.0, 45.0, kFs, 129);
  const auto x = gaussian(512, 3), y = gaussian(512, 4);
  std::vector<double> mix(512);
  for (std::size_t i = 0; i < 512; ++i) mix[i] = 2.5 * x[i] - 0.75 * y[i];
  const auto fx = apply_zero_phase(f, x), fy = apply_zero_phase(f, y), fm = apply_zero_phase(f, mix);
  double scale = 0.0;
  for (double v : fm) scale = std::max(scale, std::abs(v));
  for (std::size_t i = 0; i < 512; ++i) EXPECT_NEAR(fm[i], 2.5 * fx[i] - 0.75 * fy[i], 1e-9 * scale);
}

TEST(ZeroPhase, TooShortSignal) {
  const auto f = design_bandpass(4.0, 45.0, kFs, 129);
  EXPECT_FATIGUE_ERROR(apply_zero_phase(f, std::vector<double>(129, 1.0)), ErrorCode::SignalTooShort);
}

// ---- periodogram --------------------------------------------------------------

TEST(Periodogram, UnitSinusoidConcentratesAtTenHertz) {
  const auto x = sine(10.0, 128);
  const auto psd = periodogram(x, kFs);
  ASSERT_EQ(psd.freqs.size(), 65u);
  double band = 0.0;
  for (std::size_t k = 0; k < psd.freqs.size(); ++k) {
    if (psd.freqs[k] >= 9.0 && psd.freqs[k] <= 11.0) band += psd.power[k];
  }
  EXPECT_GE(band / psd.total(), 0.95);
  EXPECT_NEAR(psd.total(), 0.5, 0.005);
}

TEST(Periodogram, MatchesDirectDftOracle) {
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    const auto x = gaussian(128, seed);
    const auto psd = periodogram(x, kFs);
    const auto ref = oracle::dft_psd(x);
    ASSERT_EQ(psd.power.size(), ref.size());
    for (std::size_t k = 0; k < ref.size(); ++k) EXPECT_NEAR(psd.power[k], ref[k], 1e-10 * (1.0 + ref[k]));
  }
}

TEST(Periodogram, ParsevalAgainstWindowedMeanSquare) {
  for (std::uint64_t seed = 10; seed < 30; ++seed) {
    const auto x = gaussian(128, seed, 3.0);
    const double expected = windowed_mean_square(x);
    EXPECT_NEAR(periodogram(x, kFs).total(), expected, 1e-6 * expected);
  }
}

TEST(Periodogram, ZeroSignal) {
  const auto psd = periodogram(std::vector<double>(128, 0.0), kFs);
  for (double p : psd.power) EXPECT_EQ(p, 0.0);
}

TEST(Periodogram, WhiteNoiseTotalPower) {
  double sum = 0.0;
  for (std::uint64_t i = 0; i < 1000; ++i) sum += periodogram(gaussian(128, 1000 + i), kFs).total();
  EXPECT_NEAR(sum / 1000.0, 1.0, 0.03);
}

TEST(Periodogram, FrequencyGrid) {
  const auto psd = periodogram(gaussian(128, 1), kFs);
  EXPECT_DOUBLE_EQ(psd.freqs.front(), 0.0);
  EXPECT_DOUBLE_EQ(psd.freqs.back(), 64.0);
  for (std::size_t k = 1; k < psd.freqs.size(); ++k) EXPECT_DOUBLE_EQ(psd.freqs[k] - psd.freqs[k - 1], 1.0);
  EXPECT_FATIGUE_ERROR(periodogram(std::vector<double>(7, 1.0), kFs), ErrorCode::TooShort);
}

// ---- band power -----------------------------------------------------------------

TEST(BandPower, AlphaDominatesForTenHertz) {
  const auto psd = periodogram(sine(10.0, 128), kFs);
  const double alpha = band_power(psd, Band::Alpha);
  for (Band b : {Band::Theta, Band::Beta, Band::Gamma}) EXPECT_GT(alpha, 10.0 * band_power(psd, b));
}

TEST(BandPower, ZeroAndOnes) {
  for (Band b : kBands) {
    EXPECT_EQ(band_power(flat_psd(0.0), b), 0.0);
    EXPECT_DOUBLE_EQ(band_power(flat_psd(1.0), b), 1.0);
  }
}

TEST(BandPower, HalfOpenEdges) {
  Psd p = flat_psd(0.0);
  p.power[8] = 5.0;  // 8 Hz belongs to alpha, not theta
  EXPECT_EQ(band_power(p, Band::Theta), 0.0);
  EXPECT_DOUBLE_EQ(band_power(p, Band::Alpha), 1.0);  // 5 spread over bins 8..12
  EXPECT_EQ(band_edges(Band::Beta).lo_hz, 14.0);
  EXPECT_EQ(band_edges(Band::Gamma).hi_hz, 40.0);
}

TEST(BandPower, EmptyBand) {
  Psd coarse;
  for (int k = 0; k <= 4; ++k) {
    coarse.freqs.push_back(16.0 * k);
    coarse.power.push_back(1.0);
  }
  EXPECT_FATIGUE_ERROR(band_power(coarse, Band::Theta), ErrorCode::EmptyBand);
}

// ---- time-domain statistics -------------------------------------------------------

TEST(TimeStats, Alternating) {
  const std::vector<double> x = {1, -1, 1, -1};
  EXPECT_DOUBLE_EQ(time_stats(x).zcr, 1.0);
}

TEST(TimeStats, ConstantConvention) {
  const auto t = time_stats(std::vector<double>{5, 5, 5, 5});
  EXPECT_EQ(t.mean, 5.0);
  EXPECT_EQ(t.variance, 0.0);
  EXPECT_EQ(t.zcr, 0.0);
  EXPECT_EQ(t.skewness, 0.0);
  EXPECT_EQ(t.kurtosis, 0.0);
}

TEST(TimeStats, PopulationMoments) {
  const std::vector<double> x = {1, 2, 3, 4, 10};
  const auto t = time_stats(x);
  // mean 4, deviations -3,-2,-1,0,6
  const double m2 = (9 + 4 + 1 + 0 + 36) / 5.0;
  const double m3 = (-27 - 8 - 1 + 0 + 216) / 5.0;
  const double m4 = (81 + 16 + 1 + 0 + 1296) / 5.0;
  EXPECT_DOUBLE_EQ(t.mean, 4.0);
  EXPECT_NEAR(t.variance, m2, 1e-12);
  EXPECT_NEAR(t.skewness, m3 / std::pow(m2, 1.5), 1e-12);
  EXPECT_NEAR(t.kurtosis, m4 / (m2 * m2), 1e-12);
  // mean-removed signs: - - - + +  -> one change over 4 pairs
  EXPECT_DOUBLE_EQ(t.zcr, 0.25);
}

TEST(TimeStats, GaussianMoments) {
  const auto t = time_stats(gaussian(1000000, 2024));
  EXPECT_GE(t.kurtosis, 2.9);
  EXPECT_LE(t.kurtosis, 3.1);
  EXPECT_GE(t.skewness, -0.05);
  EXPECT_LE(t.skewness, 0.05);
}

TEST(TimeStats, TooShort) {
  EXPECT_FATIGUE_ERROR(time_stats(std::vector<double>{1.0}), ErrorCode::TooShort);
}

// ---- entropies -----------------------------------------------------------------------

TEST(ShannonEntropy, Cases) {
  EXPECT_EQ(shannon_entropy(std::vector<double>(128, 3.0)), 0.0);
  std::vector<double> ramp(128);
  std::iota(ramp.begin(), ramp.end(), 0.0);
  EXPECT_NEAR(shannon_entropy(ramp, 16), std::log(16.0), 1e-9);
  std::vector<double> uniform;
  for (int rep = 0; rep < 4; ++rep) {
    for (int b = 0; b < 16; ++b) uniform.push_back(b + 0.5);
  }
  EXPECT_NEAR(shannon_entropy(uniform, 16), std::log(16.0), 1e-12);
  EXPECT_FATIGUE_ERROR(shannon_entropy(std::vector<double>{1.0}), ErrorCode::TooShort);
}

TEST(ShannonEntropy, TwoLevelSignal) {
  std::vector<double> x(100, 0.0);
  std::fill(x.begin(), x.begin() + 25, 1.0);
  const double expected = -(0.25 * std::log(0.25) + 0.75 * std::log(0.75));
  EXPECT_NEAR(shannon_entropy(x, 16), expected, 1e-12);
}

TEST(SpectralEntropy, Cases) {
  Psd single = flat_psd(0.0);
  single.power[10] = 3.0;
  EXPECT_EQ(spectral_entropy(single), 0.0);
  EXPECT_NEAR(spectral_entropy(flat_psd(2.0)), 1.0, 1e-12);
  EXPECT_EQ(spectral_entropy(flat_psd(0.0)), 0.0);
  EXPECT_LT(spectral_entropy(periodogram(sine(10.0, 128), kFs)), 0.35);
}

TEST(SpectralEntropy, OnlyInBandBinsCount) {
  Psd p = flat_psd(1.0);
  for (std::size_t k = 0; k < 4; ++k) p.power[k] = 100.0;
  for (std::size_t k = 46; k < p.power.size(); ++k) p.power[k] = 100.0;
  EXPECT_NEAR(spectral_entropy(p), 1.0, 1e-12);
}

// ---- composition ---------------------------------------------------------------------

TEST(Features, CountsMatchFamilies) {
  const auto seg = segment_of(128, [](std::size_t i, std::size_t c) { return std::sin(0.3 * double(i) + double(c)); });
  const auto fs = extract_features(seg);
  EXPECT_EQ(fs.frequency_values().size(), 56u);
  EXPECT_EQ(fs.time_values().size(), 70u);
  EXPECT_EQ(fs.entropy_values().size(), 28u);
  EXPECT_EQ(fs.frequency_values().size() + fs.time_values().size() + fs.entropy_values().size(), 154u);
}

TEST(Features, ZeroSegment) {
  const auto fs = extract_features(segment_of(128, [](std::size_t, std::size_t) { return 0.0; }));
  for (std::size_t c = 0; c < kNumChannels; ++c) {
    for (Band b : kBands) EXPECT_EQ(fs.values[c][std::size_t(b)], 0.0);
    EXPECT_EQ(fs.get(c, FeatureKind::Variance), 0.0);
    EXPECT_EQ(fs.get(c, FeatureKind::Shannon), 0.0);
    EXPECT_EQ(fs.get(c, FeatureKind::Spectral), 0.0);
  }
}

TEST(Features, FilteredOverload) {
  const auto f = design_bandpass(4.0, 45.0, kFs, 129);
  const auto short_seg = segment_of(128, [](std::size_t i, std::size_t) { return double(i); });
  EXPECT_FATIGUE_ERROR(extract_features(short_seg, f), ErrorCode::SignalTooShort);
  const auto seg = segment_of(512, [](std::size_t i, std::size_t) { return 50.0 + std::sin(0.5 * double(i)); });
  const auto fs = extract_features(seg, f);
  EXPECT_LT(std::abs(fs.get(0, FeatureKind::Mean)), 0.05);  // DC removed
}

TEST(Features, ScaleEquivariance) {
  Rng rng(77);
  const auto seg = segment_of(128, [&](std::size_t, std::size_t) { return rng.normal(); });
  Segment scaled = seg;
  for (double& v : scaled.data) v *= 3.0;
  const auto a = extract_features(seg), b = extract_features(scaled);
  for (std::size_t c = 0; c < kNumChannels; ++c) {
    for (auto k : {FeatureKind::Variance, FeatureKind::Theta, FeatureKind::Alpha, FeatureKind::Beta, FeatureKind::Gamma}) {
      EXPECT_NEAR(b.get(c, k), 9.0 * a.get(c, k), 1e-9 * std::abs(9.0 * a.get(c, k)));
    }
    for (auto k : {FeatureKind::Zcr, FeatureKind::Skewness, FeatureKind::Kurtosis, FeatureKind::Spectral,
                   FeatureKind::Shannon}) {
      EXPECT_NEAR(b.get(c, k), a.get(c, k), 1e-9 * std::max(1.0, std::abs(a.get(c, k))));
    }
  }
}

TEST(Features, RangeInvariantsOnRandomSegments) {
  Rng rng(4242);
  std::size_t violations = 0;
  for (int trial = 0; trial < 10000; ++trial) {
    const double scale = std::exp(rng.uniform(-3.0, 5.0));
    const double offset = rng.uniform(-50.0, 50.0);
    const auto seg = segment_of(128, [&](std::size_t, std::size_t) { return offset + scale * rng.normal(); });
    const auto fs = extract_features(seg);
    for (std::size_t c = 0; c < kNumChannels; ++c) {
      const auto& v = fs.values[c];
      bool ok = true;
      for (std::size_t k = 0; k < 4; ++k) ok &= v[k] >= 0.0;
      ok &= fs.get(c, FeatureKind::Variance) >= 0.0;
      ok &= fs.get(c, FeatureKind::Zcr) >= 0.0 && fs.get(c, FeatureKind::Zcr) <= 1.0;
      ok &= fs.get(c, FeatureKind::Spectral) >= 0.0 && fs.get(c, FeatureKind::Spectral) <= 1.0;
      ok &= fs.get(c, FeatureKind::Shannon) >= 0.0 && fs.get(c, FeatureKind::Shannon) <= std::log(16.0) + 1e-12;
      for (double x : v) ok &= std::isfinite(x);
      violations += !ok;
    }
  }
  EXPECT_EQ(violations, 0u);
}

TEST(Features, ClassSeparableSessionOrdersAlpha) {
  SynthConfig cfg;
  cfg.n_segments = 300;
  cfg.seed = 8;
  const auto s = synth_session(cfg);
  const auto filter = design_bandpass(4.0, 45.0, kFs, 129);
  const auto segs = segment_recording(filter_recording(s.recording, filter));
  std::array<double, 3> sum{};
  std::array<int, 3> n{};
  for (std::size_t i = 0; i < segs.size(); ++i) {
    const auto fs = extract_features(segs[i]);
    double a = 0.0;
    for (std::size_t c = 0; c < kNumChannels; ++c) a += fs.get(c, FeatureKind::Alpha);
    sum[to_int(s.labels[i])] += a;
    ++n[to_int(s.labels[i])];
  }
  EXPECT_LT(sum[0] / n[0], sum[1] / n[1]);
  EXPECT_LT(sum[1] / n[1], sum[2] / n[2]);
}

TEST(FeatureCsv, RoundTrip) {
  SynthConfig cfg;
  cfg.n_segments = 4;
  const auto s = synth_session(cfg);
  FeatureTable table;
  for (const auto& seg : segment_recording(s.recording)) {
    table.segment_index.push_back(seg.index);
    table.labels.push_back(s.labels[seg.index - 1]);
    table.features.push_back(extract_features(seg));
  }
  table.labels[1].reset();
  const auto text = format_feature_csv(table);
  EXPECT_EQ(text.substr(0, text.find('\n')), feature_csv_header());
  EXPECT_EQ(feature_csv_header().substr(0, 40), "segment_index,label,AF3_theta,AF3_alpha,");
  const auto back = parse_feature_csv(text);
  EXPECT_EQ(back.segment_index, table.segment_index);
  EXPECT_EQ(back.labels, table.labels);
  for (std::size_t i = 0; i < table.features.size(); ++i) EXPECT_EQ(back.features[i].values, table.features[i].values);
  EXPECT_EQ(format_feature_csv(back), text);
}
