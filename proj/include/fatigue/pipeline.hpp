#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "fatigue/classifiers.hpp"
#include "fatigue/cnn.hpp"
#include "fatigue/dsp.hpp"
#include "fatigue/eval.hpp"
#include "fatigue/signal_io.hpp"
#include "fatigue/topomap.hpp"

namespace fatigue {

inline constexpr std::string_view kToolVersion = "0.1.0";
inline constexpr std::string_view kSeedEnvVar = "FATIGUE_LAB_SEED";

struct FilterSettings {
  bool enabled = true;
  double low_hz = 4.0;
  double high_hz = 45.0;
  std::size_t taps = 129;
};

struct SynthSettings {
  std::size_t subjects = 1;
  std::size_t n_segments = 2400;
  double class_effect = 2.0;
  double noise_std = 2.0;
};

/// Every setting of a pipeline run. Defaults are the documented values.
struct PipelineConfig {
  std::uint64_t seed = 1;
  std::size_t workers = 0;  // 0 = hardware concurrency
  std::filesystem::path out_dir = "out";
  std::size_t sampling_rate = kDefaultSamplingRate;
  /// Recording CSVs; empty means the synth outputs under out_dir.
  std::vector<std::filesystem::path> recordings;
  /// Optional per-recording label files (same order as recordings).
  std::vector<std::filesystem::path> labels;
  std::filesystem::path montage;  // empty = built-in layout
  std::vector<SplitScheme> schemes = {SplitScheme::D1200};
  std::vector<FeatureCombination> combinations = {FeatureCombination::F_Entropy};
  std::vector<ClassifierKind> classifiers = {ClassifierKind::Cnn};
  std::size_t folds = 10;
  bool stratified = false;
  bool shuffle_labels = false;
  SynthSettings synth;
  FilterSettings filter;
  FeatureOptions features;
  TrainConfig cnn;
  BaselineConfig baseline;
};

/// JSON text -> config. Unknown keys and ill-typed values throw ConfigError.
/// `overrides` are `dotted.key=value` pairs; values parse as JSON, falling back to a string.
/// Precedence: overrides > FATIGUE_LAB_SEED (seed only) > config text > defaults.
PipelineConfig parse_config(std::string_view json_text, std::span<const std::string> overrides = {},
                            std::optional<std::string> env_seed = std::nullopt);
PipelineConfig load_config(const std::filesystem::path& path, std::span<const std::string> overrides = {},
                           std::optional<std::string> env_seed = std::nullopt);
/// Canonical JSON (sorted keys, every field present).
std::string config_to_json(const PipelineConfig& cfg);
/// Rejects values that would fail later (zero segments, empty lists ...).
void validate_config(const PipelineConfig& cfg);
/// FNV-1a 64 of the canonical JSON, hex.
std::string config_hash(const PipelineConfig& cfg);

std::string subject_name(std::size_t i);  // S01, S02, ...

struct SessionPaths {
  std::string subject;
  std::filesystem::path recording;
  std::optional<std::filesystem::path> labels;
};

std::vector<SessionPaths> session_paths(const PipelineConfig& cfg);
std::filesystem::path feature_path(const PipelineConfig& cfg, const std::string& subject);
std::filesystem::path cube_path(const PipelineConfig& cfg, const std::string& subject, FeatureCombination combo);

using ProgressFn = std::function<void(std::string_view)>;

/// Writes <out>/Sxx_signal.csv and <out>/Sxx_labels.csv per synthetic subject.
std::vector<SessionPaths> run_synth(const PipelineConfig& cfg, const ProgressFn& progress = {});

/// Filtered feature table for one recording (filter applied to the whole recording).
FeatureTable extract_session(const EegRecording& rec, std::span<const FatigueLevel> labels,
                             const PipelineConfig& cfg);

/// Writes features/<subject>_features.csv and cubes/<subject>_<combo>.eegcube.
void run_extract(const PipelineConfig& cfg, const ProgressFn& progress = {});

struct CvJob {
  SplitScheme scheme;
  FeatureCombination combo;
  ClassifierKind classifier;
  std::string subject;
};

std::vector<CvJob> cv_jobs(const PipelineConfig& cfg);

/// Labels used for one subject/scheme, shuffled when cfg.shuffle_labels is set.
std::vector<int> split_labels(const PipelineConfig& cfg, SplitScheme scheme, std::size_t subject_index);
std::uint64_t fold_seed(const PipelineConfig& cfg, SplitScheme scheme, std::size_t subject_index);

/// Executes one grid cell from persisted features / cubes.
RunRecord run_job(const PipelineConfig& cfg, const CvJob& job);

/// Runs every job (worker pool), writes runs/<id>/{folds.csv,manifest.json} and the report.
std::vector<RunRecord> run_cv_grid(const PipelineConfig& cfg, const ProgressFn& progress = {});

std::string run_manifest(const PipelineConfig& cfg, const RunRecord& run);

/// Rebuilds report tables from every runs/*/folds.csv + manifest.json under out_dir.
std::vector<RunRecord> load_runs(const std::filesystem::path& out_dir);
void write_report(const std::filesystem::path& out_dir, std::span<const RunRecord> runs);
ReportTables run_report(const PipelineConfig& cfg);

struct TrainOutput {
  std::filesystem::path model_path;
  std::optional<std::filesystem::path> history_path;
  double train_accuracy = 0.0;
};

/// Trains the first configured classifier/combination/scheme on the whole split of the
/// first subject and saves the model (CNNCKPT1 or MDLPAK1).
TrainOutput run_train(const PipelineConfig& cfg, const ProgressFn& progress = {});

}  // namespace fatigue
