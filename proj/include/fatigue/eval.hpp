#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "fatigue/classifiers.hpp"
#include "fatigue/cnn.hpp"
#include "fatigue/signal_io.hpp"
#include "fatigue/topomap.hpp"

namespace fatigue {

enum class SplitScheme { D1200, D1500, D1800 };

inline constexpr std::array<SplitScheme, 3> kAllSchemes = {SplitScheme::D1200, SplitScheme::D1500,
                                                           SplitScheme::D1800};

/// Inclusive 1-based second range.
struct Block {
  std::size_t first = 0;
  std::size_t last = 0;
  std::size_t size() const { return last - first + 1; }
};

std::array<Block, 3> scheme_blocks(SplitScheme scheme);
std::string_view scheme_name(SplitScheme scheme);     // "D1200"
std::string_view scheme_column(SplitScheme scheme);   // "1200s"
SplitScheme parse_scheme(std::string_view name);

struct Split {
  std::vector<std::size_t> segments;  // 1-based segment indices, ascending
  std::vector<FatigueLevel> labels;   // block 1 -> Low, 2 -> Medium, 3 -> High
};

Split make_split(SplitScheme scheme);

struct FoldPlan {
  std::size_t k = 10;
  std::uint64_t seed = 0;
  std::vector<std::size_t> assignments;  // fold index per instance

  std::vector<std::size_t> test_rows(std::size_t fold) const;
  std::vector<std::size_t> train_rows(std::size_t fold) const;
  std::size_t fold_size(std::size_t fold) const;
};

/// Seeded shuffle, then round-robin assignment. With `stratify_labels` each class is
/// shuffled and dealt separately, continuing the round-robin across classes.
FoldPlan kfold(std::size_t n, std::size_t k = 10, std::uint64_t seed = 1,
               std::span<const int> stratify_labels = {});

/// Rows = predicted class, columns = true class.
struct ConfusionMatrix3 {
  std::array<std::array<std::size_t, 3>, 3> counts{};

  void add(int truth, int pred, std::size_t n = 1);
  std::size_t total() const;
  std::size_t trace() const;
  ConfusionMatrix3& operator+=(const ConfusionMatrix3& other);
  bool operator==(const ConfusionMatrix3&) const = default;
};

ConfusionMatrix3 confusion(std::span<const int> preds, std::span<const int> labels);

/// Normal (class 0) versus fatigue (classes 1-2); nullopt marks 0/0.
struct Metrics {
  std::optional<double> acc, sen, spe, pre, npv;
  std::optional<double> acc3;
};

Metrics metrics(const ConfusionMatrix3& cm);

/// Four decimals, or "NA".
std::string format_metric(std::optional<double> v);

// ---- cross-validation -----------------------------------------------------

/// Returns predictions for `test`, trained on `train` only.
using FoldPredictor =
    std::function<std::vector<int>(std::span<const std::size_t> train, std::span<const std::size_t> test,
                                   std::size_t fold)>;

struct FoldResult {
  std::size_t fold = 0;
  ConfusionMatrix3 cm;
  double accuracy() const;
};

struct CvResult {
  std::vector<FoldResult> folds;
  double mean_accuracy() const;
  ConfusionMatrix3 pooled() const;
};

CvResult run_cv(std::span<const int> labels, const FoldPlan& plan, const FoldPredictor& predictor);

using StandardizerObserver = std::function<void(std::size_t fold, const Standardizer&)>;
using NormalizerObserver = std::function<void(std::size_t fold, const MapNormalizer&)>;

/// Standardizer + baseline classifier refitted per fold.
FoldPredictor flat_predictor(const FeatureMatrix& x, std::span<const int> labels, ClassifierKind kind,
                             const BaselineConfig& cfg, std::uint64_t seed,
                             StandardizerObserver observer = {});

/// Map normalizer + CNN refitted per fold; `raw_cubes` are unnormalized.
FoldPredictor cube_predictor(std::span<const EegCube> raw_cubes, std::span<const int> labels,
                             const TrainConfig& cfg, NormalizerObserver observer = {});

// ---- persistence and reports ----------------------------------------------

/// `fold,true,pred,count`, classes written 1..3, all nine cells per fold.
std::string format_fold_csv(const CvResult& result);
CvResult parse_fold_csv(std::string_view text);

struct RunRecord {
  SplitScheme scheme = SplitScheme::D1200;
  FeatureCombination combo = FeatureCombination::Frequency;
  ClassifierKind classifier = ClassifierKind::Cnn;
  std::string subject;
  CvResult result;
};

/// Directory name of a run: <scheme>_<combo>_<classifier>_<subject>.
std::string run_id(const RunRecord& run);

struct ReportTables {
  std::string table2;  // feature x data set, focus classifier
  std::string table3;  // classifier x feature + Mean
  std::string table4;  // subject x feature + Mean row, focus classifier
  std::string table6;  // feature x binarized metrics, focus classifier
};

/// Row order used for classifiers in the accuracy table.
inline constexpr std::array<ClassifierKind, 8> kReportClassifierOrder = {
    ClassifierKind::Svm, ClassifierKind::Rf,  ClassifierKind::Nb,  ClassifierKind::Cnn,
    ClassifierKind::Lssvm, ClassifierKind::Lr, ClassifierKind::Knn, ClassifierKind::Dt};

/// CNN when present, otherwise the first classifier in report order.
std::optional<ClassifierKind> focus_classifier(std::span<const RunRecord> runs);

ReportTables build_report(std::span<const RunRecord> runs);

}  // namespace fatigue
