#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <vector>

#include "csv_oracle.hpp"
#include "fatigue/dsp.hpp"
#include "fatigue/signal_io.hpp"
#include "test_util.hpp"

using namespace fatigue;

namespace {

std::vector<std::string> canonical_names() {
  return {kChannelNames.begin(), kChannelNames.end()};
}

// Rows of (row * 100 + column-in-file) so every cell is distinguishable.
std::string make_csv(const std::vector<std::string>& header, std::size_t rows) {
  std::string out;
  for (std::size_t i = 0; i < header.size(); ++i) out += (i ? "," : "") + header[i];
  out += "\n";
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < header.size(); ++c) {
      out += (c ? "," : "") + format_double(double(r) * 100.0 + double(c) + 0.25);
    }
    out += "\n";
  }
  return out;
}

EegRecording constant_recording(double seconds, std::size_t fs = 128) {
  EegRecording rec;
  rec.subject_id = "S01";
  rec.sampling_rate = fs;
  const auto n = static_cast<std::size_t>(seconds * double(fs));
  rec.samples.resize(n * kNumChannels);
  for (std::size_t i = 0; i < rec.samples.size(); ++i) rec.samples[i] = double(i);
  return rec;
}

}  // namespace

TEST(RecordingCsv, WellFormedFileParses) {
  const auto rec = parse_recording_csv(make_csv(canonical_names(), 256), "S01");
  EXPECT_EQ(rec.n_samples(), 256u);
  EXPECT_EQ(rec.sampling_rate, 128u);
  EXPECT_DOUBLE_EQ(rec.at(3, 2), 302.25);
}

TEST(RecordingCsv, MissingChannelIsNamed) {
  auto names = canonical_names();
  names.pop_back();  // T8
  try {
    parse_recording_csv(make_csv(names, 4), "S01");
    FAIL() << "expected MissingChannel";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::MissingChannel);
    EXPECT_NE(std::string(e.what()).find("T8"), std::string::npos);
  }
}

TEST(RecordingCsv, PermutedColumnsMatchReferenceReorder) {
  auto names = canonical_names();
  std::rotate(names.rbegin(), names.rbegin() + 1, names.rend());  // T8 first
  ASSERT_EQ(names.front(), "T8");
  const auto text = make_csv(names, 16);
  const auto rec = parse_recording_csv(text, "S01");
  EXPECT_EQ(rec.samples, oracle::reorder_csv(text, canonical_names()));
  EXPECT_DOUBLE_EQ(rec.at(0, channel_index(Channel::AF3)), 1.25);
}

TEST(RecordingCsv, TimeColumnIgnored) {
  auto names = canonical_names();
  names.insert(names.begin(), "t");
  const auto text = make_csv(names, 8);
  const auto rec = parse_recording_csv(text, "S01");
  EXPECT_EQ(rec.samples, oracle::reorder_csv(text, canonical_names()));
}

TEST(RecordingCsv, Errors) {
  EXPECT_FATIGUE_ERROR(parse_recording_csv("", "S01"), ErrorCode::EmptyFile);
  EXPECT_FATIGUE_ERROR(parse_recording_csv(make_csv(canonical_names(), 0), "S01"), ErrorCode::EmptyFile);
  auto dup = canonical_names();
  dup.push_back("AF3");
  EXPECT_FATIGUE_ERROR(parse_recording_csv(make_csv(dup, 2), "S01"), ErrorCode::BadHeader);
  auto unknown = canonical_names();
  unknown.push_back("Cz");
  EXPECT_FATIGUE_ERROR(parse_recording_csv(make_csv(unknown, 2), "S01"), ErrorCode::BadHeader);

  auto text = make_csv(canonical_names(), 3);
  const auto pos = text.rfind("1.25");
  text.replace(pos, 4, "abc");
  try {
    parse_recording_csv(text, "S01");
    FAIL() << "expected NonNumericSample";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::NonNumericSample);
    EXPECT_NE(std::string(e.what()).find("row"), std::string::npos);
  }
  auto nan_text = make_csv(canonical_names(), 2);
  nan_text.replace(nan_text.rfind("0.25"), 4, "nan");
  EXPECT_FATIGUE_ERROR(parse_recording_csv(nan_text, "S01"), ErrorCode::NonNumericSample);
}

TEST(RecordingCsv, RoundTripIsExact) {
  SynthConfig cfg;
  cfg.n_segments = 3;
  cfg.seed = 17;
  const auto rec = synth_session(cfg).recording;
  const auto back = parse_recording_csv(format_recording_csv(rec), rec.subject_id);
  EXPECT_EQ(back.samples, rec.samples);
}

TEST(RecordingCsv, FileRoundTrip) {
  testutil::TempDir dir("sigio");
  SynthConfig cfg;
  cfg.n_segments = 2;
  const auto session = synth_session(cfg);
  save_recording(session.recording, dir.path() / "rec.csv");
  save_labels(session.labels, dir.path() / "labels.csv");
  EXPECT_EQ(load_recording(dir.path() / "rec.csv").samples, session.recording.samples);
  EXPECT_EQ(load_labels(dir.path() / "labels.csv"), session.labels);
  EXPECT_FATIGUE_ERROR(load_recording(dir.path() / "absent.csv"), ErrorCode::IoError);
}

TEST(Labels, ParseAndValidate) {
  const auto labels = parse_labels_csv("second,label\n1,low\n2,medium\n3,high\n");
  ASSERT_EQ(labels.size(), 3u);
  EXPECT_EQ(labels[2], FatigueLevel::High);
  EXPECT_FATIGUE_ERROR(parse_labels_csv("second,label\n1,low\n3,high\n"), ErrorCode::BadLabelFile);
  EXPECT_FATIGUE_ERROR(parse_labels_csv("second,label\n1,sleepy\n"), ErrorCode::BadLabelFile);
  EXPECT_FATIGUE_ERROR(parse_labels_csv("sec,lab\n1,low\n"), ErrorCode::BadHeader);
  EXPECT_FATIGUE_ERROR(parse_labels_csv(""), ErrorCode::EmptyFile);
}

TEST(Segmenting, FullSessionYields2400) {
  const auto segs = segment_recording(constant_recording(2400.0));
  ASSERT_EQ(segs.size(), 2400u);
  EXPECT_EQ(segs.front().index, 1u);
  EXPECT_EQ(segs.back().index, 2400u);
}

TEST(Segmenting, OneSecond) {
  const auto segs = segment_recording(constant_recording(1.0));
  ASSERT_EQ(segs.size(), 1u);
  EXPECT_EQ(segs[0].n_samples(), 128u);
  EXPECT_EQ(segs[0].data.size(), 128u * kNumChannels);
}

TEST(Segmenting, TrailingPartialSecondDroppedWithWarning) {
  testutil::WarningCapture warnings;
  const auto rec = constant_recording(2.5);
  const auto segs = segment_recording(rec);
  EXPECT_EQ(segs.size(), rec.n_samples() / rec.sampling_rate);
  EXPECT_EQ(segs.size(), 2u);
  ASSERT_FALSE(warnings.messages.empty());
  EXPECT_NE(warnings.messages.back().find("64"), std::string::npos);
}

TEST(Segmenting, ConcatenationReconstructsTruncatedRecording) {
  const auto rec = constant_recording(3.75);
  std::vector<double> joined;
  for (const auto& s : segment_recording(rec)) joined.insert(joined.end(), s.data.begin(), s.data.end());
  ASSERT_EQ(joined.size(), 3u * 128u * kNumChannels);
  EXPECT_TRUE(std::equal(joined.begin(), joined.end(), rec.samples.begin()));
}

TEST(Synth, SameSeedIsBitIdentical) {
  SynthConfig cfg;
  cfg.n_segments = 30;
  cfg.seed = 99;
  const auto a = synth_session(cfg);
  const auto b = synth_session(cfg);
  EXPECT_EQ(a.recording.samples, b.recording.samples);
  EXPECT_EQ(format_recording_csv(a.recording), format_recording_csv(b.recording));
  cfg.seed = 100;
  EXPECT_NE(synth_session(cfg).recording.samples, a.recording.samples);
}

TEST(Synth, LabelsFollowTemporalThirds) {
  SynthConfig cfg;
  cfg.n_segments = 30;
  const auto s = synth_session(cfg);
  ASSERT_EQ(s.labels.size(), 30u);
  ASSERT_EQ(s.recording.n_samples(), 30u * 128u);
  for (std::size_t i = 0; i < 30; ++i) {
    EXPECT_EQ(to_int(s.labels[i]), int(i / 10)) << i;
  }
}

TEST(Synth, RejectsInvalidConfig) {
  SynthConfig cfg;
  cfg.n_segments = 0;
  EXPECT_FATIGUE_ERROR(synth_session(cfg), ErrorCode::InvalidArgument);
  cfg.n_segments = 3;
  cfg.noise_std = -1.0;
  EXPECT_FATIGUE_ERROR(synth_session(cfg), ErrorCode::InvalidArgument);
}

namespace {

// Group means of the O1 alpha band power over one-second segments.
std::array<double, 3> alpha_group_means(const SynthConfig& cfg) {
  const auto s = synth_session(cfg);
  const auto segs = segment_recording(s.recording);
  std::array<double, 3> sum{};
  std::array<std::size_t, 3> n{};
  for (std::size_t i = 0; i < segs.size(); ++i) {
    const auto psd = periodogram(segs[i].channel(channel_index(Channel::O1)), 128.0);
    const int c = to_int(s.labels[i]);
    sum[c] += band_power(psd, Band::Alpha);
    ++n[c];
  }
  for (int c = 0; c < 3; ++c) sum[c] /= double(n[c]);
  return sum;
}

}  // namespace

TEST(Synth, NoClassEffectGivesMatchingAlphaPower) {
  SynthConfig cfg;
  cfg.n_segments = 1800;
  cfg.class_effect = 0.0;
  cfg.seed = 5;
  const auto m = alpha_group_means(cfg);
  const double lo = *std::min_element(m.begin(), m.end());
  const double hi = *std::max_element(m.begin(), m.end());
  EXPECT_LT((hi - lo) / lo, 0.05) << m[0] << " " << m[1] << " " << m[2];
}

TEST(Synth, ClassEffectOrdersAlphaPower) {
  SynthConfig cfg;
  cfg.n_segments = 600;
  cfg.class_effect = 2.0;
  cfg.noise_std = 0.5;
  const auto m = alpha_group_means(cfg);
  EXPECT_LT(m[0], m[1]);
  EXPECT_LT(m[1], m[2]);
}

TEST(Channels, CanonicalOrderAndParsing) {
  EXPECT_EQ(channel_name(Channel::AF3), "AF3");
  EXPECT_EQ(channel_name(Channel::T8), "T8");
  EXPECT_EQ(parse_channel("FC6"), Channel::FC6);
  EXPECT_FALSE(parse_channel("Cz").has_value());
  EXPECT_EQ(to_int(FatigueLevel::Low), 0);
  EXPECT_EQ(to_int(FatigueLevel::High), 2);
  EXPECT_EQ(parse_fatigue_level("medium"), FatigueLevel::Medium);
}
