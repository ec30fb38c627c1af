#include "fatigue/eval.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <map>
#include <numeric>
#include <sstream>

#include "fatigue/error.hpp"
#include "fatigue/rng.hpp"

namespace fatigue {

// ---- splits -----------------------------------------------------------------

std::array<Block, 3> scheme_blocks(SplitScheme scheme) {
  switch (scheme) {
    case SplitScheme::D1200: return {{{1, 400}, {1001, 1400}, {2001, 2400}}};
    case SplitScheme::D1500: return {{{1, 500}, {951, 1450}, {1901, 2400}}};
    case SplitScheme::D1800: return {{{1, 600}, {901, 1500}, {1801, 2400}}};
  }
  return {};
}

std::string_view scheme_name(SplitScheme scheme) {
  switch (scheme) {
    case SplitScheme::D1200: return "D1200";
    case SplitScheme::D1500: return "D1500";
    case SplitScheme::D1800: return "D1800";
  }
  return "?";
}

std::string_view scheme_column(SplitScheme scheme) {
  switch (scheme) {
    case SplitScheme::D1200: return "1200s";
    case SplitScheme::D1500: return "1500s";
    case SplitScheme::D1800: return "1800s";
  }
  return "?";
}

SplitScheme parse_scheme(std::string_view name) {
  std::string upper(name);
  std::transform(upper.begin(), upper.end(), upper.begin(), [](unsigned char c) { return std::toupper(c); });
  for (auto s : kAllSchemes) {
    if (upper == scheme_name(s) || name == scheme_column(s)) return s;
  }
  throw Error(ErrorCode::ConfigError, "unknown split scheme '" + std::string(name) + "' (expected D1200, D1500 or D1800)");
}

Split make_split(SplitScheme scheme) {
  Split s;
  const auto blocks = scheme_blocks(scheme);
  for (std::size_t b = 0; b < blocks.size(); ++b) {
    for (std::size_t i = blocks[b].first; i <= blocks[b].last; ++i) {
      s.segments.push_back(i);
      s.labels.push_back(static_cast<FatigueLevel>(b));
    }
  }
  return s;
}

// ---- folds ------------------------------------------------------------------

std::vector<std::size_t> FoldPlan::test_rows(std::size_t fold) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < assignments.size(); ++i) {
    if (assignments[i] == fold) out.push_back(i);
  }
  return out;
}

std::vector<std::size_t> FoldPlan::train_rows(std::size_t fold) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < assignments.size(); ++i) {
    if (assignments[i] != fold) out.push_back(i);
  }
  return out;
}

std::size_t FoldPlan::fold_size(std::size_t fold) const {
  return static_cast<std::size_t>(std::count(assignments.begin(), assignments.end(), fold));
}

FoldPlan kfold(std::size_t n, std::size_t k, std::uint64_t seed, std::span<const int> stratify_labels) {
  if (k == 0) throw Error(ErrorCode::InvalidArgument, "k must be >= 1");
  if (k > n) {
    throw Error(ErrorCode::KExceedsN, "k=" + std::to_string(k) + " exceeds n=" + std::to_string(n));
  }
  if (!stratify_labels.empty() && stratify_labels.size() != n) {
    throw Error(ErrorCode::LengthMismatch, "stratification labels differ in length from n");
  }
  FoldPlan plan;
  plan.k = k;
  plan.seed = seed;
  plan.assignments.assign(n, 0);
  Rng rng(seed);
  std::vector<std::vector<std::size_t>> groups;
  if (stratify_labels.empty()) {
    groups.emplace_back(n);
    std::iota(groups[0].begin(), groups[0].end(), std::size_t{0});
  } else {
    std::map<int, std::vector<std::size_t>> by_class;
    for (std::size_t i = 0; i < n; ++i) by_class[stratify_labels[i]].push_back(i);
    for (auto& [label, rows] : by_class) groups.push_back(std::move(rows));
  }
  std::size_t next = 0;
  for (auto& g : groups) {
    rng.shuffle(std::span<std::size_t>(g));
    for (std::size_t i : g) {
      plan.assignments[i] = next;
      next = (next + 1) % k;
    }
  }
  return plan;
}

// ---- confusion and metrics --------------------------------------------------

void ConfusionMatrix3::add(int truth, int pred, std::size_t n) {
  if (truth < 0 || truth > 2 || pred < 0 || pred > 2) {
    throw Error(ErrorCode::BadLabel, "class index outside {0,1,2}: true=" + std::to_string(truth) +
                                         " pred=" + std::to_string(pred));
  }
  counts[static_cast<std::size_t>(pred)][static_cast<std::size_t>(truth)] += n;
}

std::size_t ConfusionMatrix3::total() const {
  std::size_t s = 0;
  for (const auto& r : counts) s += std::accumulate(r.begin(), r.end(), std::size_t{0});
  return s;
}

std::size_t ConfusionMatrix3::trace() const { return counts[0][0] + counts[1][1] + counts[2][2]; }

ConfusionMatrix3& ConfusionMatrix3::operator+=(const ConfusionMatrix3& other) {
  for (std::size_t i = 0; i < 3; ++i) {
    for (std::size_t j = 0; j < 3; ++j) counts[i][j] += other.counts[i][j];
  }
  return *this;
}

ConfusionMatrix3 confusion(std::span<const int> preds, std::span<const int> labels) {
  if (preds.size() != labels.size()) {
    throw Error(ErrorCode::LengthMismatch, std::to_string(preds.size()) + " predictions for " +
                                               std::to_string(labels.size()) + " labels");
  }
  ConfusionMatrix3 cm;
  for (std::size_t i = 0; i < preds.size(); ++i) cm.add(labels[i], preds[i]);
  return cm;
}

namespace {

std::optional<double> ratio(std::size_t num, std::size_t den) {
  if (den == 0) return std::nullopt;
  return static_cast<double>(num) / static_cast<double>(den);
}

}  // namespace

Metrics metrics(const ConfusionMatrix3& cm) {
  const auto& c = cm.counts;
  const std::size_t tn = c[0][0];
  const std::size_t fn = c[0][1] + c[0][2];
  const std::size_t fp = c[1][0] + c[2][0];
  const std::size_t tp = c[1][1] + c[1][2] + c[2][1] + c[2][2];
  Metrics m;
  m.acc = ratio(tp + tn, tp + tn + fp + fn);
  m.sen = ratio(tp, tp + fn);
  m.spe = ratio(tn, tn + fp);
  m.pre = ratio(tp, tp + fp);
  m.npv = ratio(tn, tn + fn);
  m.acc3 = ratio(cm.trace(), cm.total());
  return m;
}

std::string format_metric(std::optional<double> v) {
  if (!v || !std::isfinite(*v)) return "NA";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4f", *v);
  return buf;
}

// ---- cross-validation -------------------------------------------------------

double FoldResult::accuracy() const {
  const std::size_t n = cm.total();
  return n ? static_cast<double>(cm.trace()) / static_cast<double>(n) : 0.0;
}

double CvResult::mean_accuracy() const {
  if (folds.empty()) return 0.0;
  double s = 0.0;
  for (const auto& f : folds) s += f.accuracy();
  return s / static_cast<double>(folds.size());
}

ConfusionMatrix3 CvResult::pooled() const {
  ConfusionMatrix3 cm;
  for (const auto& f : folds) cm += f.cm;
  return cm;
}

CvResult run_cv(std::span<const int> labels, const FoldPlan& plan, const FoldPredictor& predictor) {
  if (plan.assignments.size() != labels.size()) {
    throw Error(ErrorCode::LengthMismatch, "fold plan covers " + std::to_string(plan.assignments.size()) +
                                               " instances but there are " + std::to_string(labels.size()) +
                                               " labels");
  }
  CvResult result;
  for (std::size_t f = 0; f < plan.k; ++f) {
    const auto train = plan.train_rows(f);
    const auto test = plan.test_rows(f);
    const auto preds = predictor(train, test, f);
    if (preds.size() != test.size()) throw Error(ErrorCode::LengthMismatch, "predictor returned wrong count");
    FoldResult fr;
    fr.fold = f;
    for (std::size_t i = 0; i < test.size(); ++i) fr.cm.add(labels[test[i]], preds[i]);
    result.folds.push_back(fr);
  }
  return result;
}

FoldPredictor flat_predictor(const FeatureMatrix& x, std::span<const int> labels, ClassifierKind kind,
                             const BaselineConfig& cfg, std::uint64_t seed, StandardizerObserver observer) {
  return [&x, labels, kind, cfg, seed, observer](std::span<const std::size_t> train,
                                                 std::span<const std::size_t> test, std::size_t fold) {
    const FeatureMatrix xtr = x.select_rows(train);
    std::vector<int> ytr(train.size());
    for (std::size_t i = 0; i < train.size(); ++i) ytr[i] = labels[train[i]];
    const FlatClassifier clf = train_flat(kind, xtr, ytr, cfg, derive_seed(seed, fold));
    if (observer) observer(fold, clf.standardizer);
    std::vector<int> preds(test.size());
    for (std::size_t i = 0; i < test.size(); ++i) preds[i] = clf.predict(x.row(test[i]));
    return preds;
  };
}

FoldPredictor cube_predictor(std::span<const EegCube> raw_cubes, std::span<const int> labels,
                             const TrainConfig& cfg, NormalizerObserver observer) {
  return [raw_cubes, labels, cfg, observer](std::span<const std::size_t> train, std::span<const std::size_t> test,
                                            std::size_t fold) {
    MapNormalizer norm;
    norm.fit(raw_cubes, train);
    if (observer) observer(fold, norm);
    std::vector<Tensor> inputs;
    std::vector<int> ytr;
    inputs.reserve(train.size());
    for (std::size_t i : train) {
      inputs.push_back(cube_tensor(norm.apply(raw_cubes[i])));
      ytr.push_back(labels[i]);
    }
    TrainConfig fold_cfg = cfg;
    fold_cfg.seed = derive_seed(cfg.seed, fold);
    const TrainResult trained = fatigue::train(inputs, ytr, fold_cfg);
    std::vector<int> preds(test.size());
    for (std::size_t i = 0; i < test.size(); ++i) {
      preds[i] = predict_class(trained.model, cube_tensor(norm.apply(raw_cubes[test[i]])));
    }
    return preds;
  };
}

// ---- persistence ------------------------------------------------------------

std::string format_fold_csv(const CvResult& result) {
  std::string out = "fold,true,pred,count\n";
  for (const auto& f : result.folds) {
    for (std::size_t t = 0; t < 3; ++t) {
      for (std::size_t p = 0; p < 3; ++p) {
        out += std::to_string(f.fold + 1) + "," + std::to_string(t + 1) + "," + std::to_string(p + 1) + "," +
               std::to_string(f.cm.counts[p][t]) + "\n";
      }
    }
  }
  return out;
}

CvResult parse_fold_csv(std::string_view text) {
  std::istringstream in{std::string(text)};
  std::string line;
  if (!std::getline(in, line) || line != "fold,true,pred,count") {
    throw Error(ErrorCode::BadHeader, "fold CSV must start with 'fold,true,pred,count'");
  }
  std::map<std::size_t, ConfusionMatrix3> folds;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::array<std::size_t, 4> v{};
    std::size_t field = 0;
    const char* p = line.data();
    const char* end = line.data() + line.size();
    while (field < 4) {
      auto [next, ec] = std::from_chars(p, end, v[field]);
      if (ec != std::errc()) break;
      ++field;
      p = next;
      if (field < 4) {
        if (p == end || *p != ',') break;
        ++p;
      }
    }
    if (field != 4 || p != end || v[0] == 0 || v[1] < 1 || v[1] > 3 || v[2] < 1 || v[2] > 3) {
      throw Error(ErrorCode::BadLabel, "malformed fold CSV line " + std::to_string(line_no) + ": " + line);
    }
    folds[v[0] - 1].add(static_cast<int>(v[1] - 1), static_cast<int>(v[2] - 1), v[3]);
  }
  CvResult r;
  for (auto& [fold, cm] : folds) r.folds.push_back(FoldResult{fold, cm});
  return r;
}

std::string run_id(const RunRecord& run) {
  return std::string(scheme_name(run.scheme)) + "_" + std::string(combination_name(run.combo)) + "_" +
         std::string(classifier_name(run.classifier)) + "_" + run.subject;
}

// ---- reports ----------------------------------------------------------------

std::optional<ClassifierKind> focus_classifier(std::span<const RunRecord> runs) {
  for (auto k : {ClassifierKind::Cnn}) {
    if (std::any_of(runs.begin(), runs.end(), [k](const RunRecord& r) { return r.classifier == k; })) return k;
  }
  for (auto k : kReportClassifierOrder) {
    if (std::any_of(runs.begin(), runs.end(), [k](const RunRecord& r) { return r.classifier == k; })) return k;
  }
  return std::nullopt;
}

namespace {

std::optional<double> mean_of(const std::vector<double>& v) {
  if (v.empty()) return std::nullopt;
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

std::optional<double> mean_defined(const std::vector<std::optional<double>>& v) {
  std::vector<double> d;
  for (const auto& x : v) {
    if (x) d.push_back(*x);
  }
  return mean_of(d);
}

std::vector<std::string> subjects_in(std::span<const RunRecord> runs) {
  std::vector<std::string> s;
  for (const auto& r : runs) s.push_back(r.subject);
  std::sort(s.begin(), s.end());
  s.erase(std::unique(s.begin(), s.end()), s.end());
  return s;
}

/// Mean over subjects of the CV mean accuracy for one grid cell.
std::optional<double> cell(std::span<const RunRecord> runs, SplitScheme s, FeatureCombination c, ClassifierKind k,
                           const std::string* subject = nullptr) {
  std::vector<double> v;
  for (const auto& r : runs) {
    if (r.scheme == s && r.combo == c && r.classifier == k && (!subject || r.subject == *subject)) {
      v.push_back(r.result.mean_accuracy());
    }
  }
  return mean_of(v);
}

}  // namespace

ReportTables build_report(std::span<const RunRecord> runs) {
  ReportTables t;
  if (runs.empty()) throw Error(ErrorCode::EmptyData, "no completed runs to report");
  const ClassifierKind focus = *focus_classifier(runs);
  SplitScheme main_scheme = runs.front().scheme;
  for (auto s : kAllSchemes) {
    if (std::any_of(runs.begin(), runs.end(), [s](const RunRecord& r) { return r.scheme == s; })) {
      main_scheme = s;
      break;
    }
  }
  std::vector<FeatureCombination> combos;
  for (auto c : kReportCombinationOrder) {
    if (std::any_of(runs.begin(), runs.end(), [c](const RunRecord& r) { return r.combo == c; })) combos.push_back(c);
  }
  std::vector<ClassifierKind> classifiers;
  for (auto k : kReportClassifierOrder) {
    if (std::any_of(runs.begin(), runs.end(), [k](const RunRecord& r) { return r.classifier == k; })) {
      classifiers.push_back(k);
    }
  }
  const auto subjects = subjects_in(runs);

  // table 2: feature x data set
  t.table2 = "feature";
  for (auto s : kAllSchemes) t.table2 += "," + std::string(scheme_column(s));
  t.table2 += "\n";
  for (auto c : combos) {
    t.table2 += std::string(combination_name(c));
    for (auto s : kAllSchemes) t.table2 += "," + format_metric(cell(runs, s, c, focus));
    t.table2 += "\n";
  }

  // table 3: classifier x feature + Mean
  t.table3 = "classifier";
  for (auto c : combos) t.table3 += "," + std::string(combination_name(c));
  t.table3 += ",Mean\n";
  for (auto k : classifiers) {
    t.table3 += std::string(classifier_name(k));
    std::vector<std::optional<double>> row;
    for (auto c : combos) {
      row.push_back(cell(runs, main_scheme, c, k));
      t.table3 += "," + format_metric(row.back());
    }
    t.table3 += "," + format_metric(mean_defined(row)) + "\n";
  }

  // table 4: subject x feature + Mean row
  t.table4 = "subject";
  for (auto c : combos) t.table4 += "," + std::string(combination_name(c));
  t.table4 += "\n";
  std::vector<std::vector<std::optional<double>>> columns(combos.size());
  for (const auto& subj : subjects) {
    t.table4 += subj;
    for (std::size_t j = 0; j < combos.size(); ++j) {
      columns[j].push_back(cell(runs, main_scheme, combos[j], focus, &subj));
      t.table4 += "," + format_metric(columns[j].back());
    }
    t.table4 += "\n";
  }
  t.table4 += "Mean";
  for (const auto& col : columns) t.table4 += "," + format_metric(mean_defined(col));
  t.table4 += "\n";

  // table 6: feature x binarized metrics from the pooled matrix
  t.table6 = "feature,P_acc,P_npv,P_pre,P_sen,P_spe,Acc3\n";
  for (auto c : combos) {
    ConfusionMatrix3 cm;
    bool any = false;
    for (const auto& r : runs) {
      if (r.scheme == main_scheme && r.combo == c && r.classifier == focus) {
        cm += r.result.pooled();
        any = true;
      }
    }
    const Metrics m = any ? metrics(cm) : Metrics{};
    t.table6 += std::string(combination_name(c)) + "," + format_metric(m.acc) + "," + format_metric(m.npv) + "," +
                format_metric(m.pre) + "," + format_metric(m.sen) + "," + format_metric(m.spe) + "," +
                format_metric(m.acc3) + "\n";
  }
  return t;
}

}  // namespace fatigue
