#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace fatigue {

/// Row-major n x d matrix.
struct FeatureMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  FeatureMatrix() = default;
  FeatureMatrix(std::size_t n, std::size_t d) : rows(n), cols(d), data(n * d, 0.0) {}

  std::span<double> row(std::size_t i) { return {data.data() + i * cols, cols}; }
  std::span<const double> row(std::size_t i) const { return {data.data() + i * cols, cols}; }
  double& at(std::size_t i, std::size_t j) { return data[i * cols + j]; }
  double at(std::size_t i, std::size_t j) const { return data[i * cols + j]; }

  void push_row(std::span<const double> values);
  FeatureMatrix select_rows(std::span<const std::size_t> idx) const;
};

/// Per-column z-score fitted on training rows; zero-variance columns map to 0.
class Standardizer {
 public:
  void fit(const FeatureMatrix& x);
  FeatureMatrix apply(const FeatureMatrix& x) const;
  std::vector<double> apply_row(std::span<const double> row) const;

  bool fitted() const { return !mean_.empty(); }
  const std::vector<double>& mean() const { return mean_; }
  const std::vector<double>& stddev() const { return std_; }
  void set(std::vector<double> mean, std::vector<double> stddev);

 private:
  std::vector<double> mean_;
  std::vector<double> std_;
};

enum class ClassifierKind : std::uint8_t { Cnn, Lr, Lssvm, Svm, Rf, Knn, Dt, Nb };

inline constexpr std::array<ClassifierKind, 8> kAllClassifiers = {
    ClassifierKind::Cnn, ClassifierKind::Lr,  ClassifierKind::Lssvm, ClassifierKind::Svm,
    ClassifierKind::Rf,  ClassifierKind::Knn, ClassifierKind::Dt,    ClassifierKind::Nb};

std::string_view classifier_name(ClassifierKind kind);
ClassifierKind parse_classifier_kind(std::string_view name);
bool uses_ovo(ClassifierKind kind);

// ---- binary linear models -------------------------------------------------

struct LssvmModel {
  FeatureMatrix support;
  std::vector<double> alpha;
  double bias = 0.0;
  double decision(std::span<const double> x) const;
};

/// Dual LSSVM with linear kernel; y in {-1,+1}.
LssvmModel train_lssvm_binary(const FeatureMatrix& x, std::span<const int> y, double gamma = 2.0);
/// Max-norm residual of the assembled dual system at the stored solution.
double lssvm_residual(const FeatureMatrix& x, std::span<const int> y, double gamma, const LssvmModel& m);

struct SvmOptions {
  double c = 1.0;
  std::size_t epochs = 60;
  std::uint64_t seed = 1;
};

struct SvmModel {
  std::vector<double> w;
  double bias = 0.0;
  double decision(std::span<const double> x) const;
};

/// 0.5*|w|^2 + C * sum(hinge).
double svm_objective(const FeatureMatrix& x, std::span<const int> y, double c, const SvmModel& m);
SvmModel train_svm_binary(const FeatureMatrix& x, std::span<const int> y, const SvmOptions& opts = {});

struct LogRegOptions {
  double lambda = 1e-4;
  double tolerance = 1e-6;
  std::size_t max_iterations = 100;
};

struct LogRegModel {
  std::vector<double> w;
  double bias = 0.0;
  bool converged = false;
  std::size_t iterations = 0;
  double decision(std::span<const double> x) const;
  double probability(std::span<const double> x) const;
};

/// Gradient of mean log-loss + lambda/2 |w|^2 (bias unpenalized); last entry is d/db.
std::vector<double> logreg_gradient(const FeatureMatrix& x, std::span<const int> y, double lambda,
                                    const LogRegModel& m);
/// y in {0,1}; Newton iterations with backtracking.
LogRegModel train_logreg_binary(const FeatureMatrix& x, std::span<const int> y, const LogRegOptions& opts = {});

// ---- one-vs-one -------------------------------------------------------------

using BinaryModel = std::variant<LssvmModel, SvmModel, LogRegModel>;

/// Class pairs (negative, positive) in member order.
inline constexpr std::array<std::array<int, 2>, 3> kOvoPairs = {{{0, 1}, {1, 2}, {0, 2}}};

struct OvoEnsemble {
  ClassifierKind base_kind = ClassifierKind::Lr;
  std::array<BinaryModel, 3> members;
};

struct OvoVote {
  int label = 0;
  std::array<int, 3> votes{};
  std::array<double, 3> margin{};
};

/// Positive decision value votes for the pair's second class.
double binary_decision(const BinaryModel& m, std::span<const double> x);
/// Majority vote; 1-1-1 ties go to the largest summed signed margin, then the lowest class.
OvoVote ovo_combine(std::span<const double, 3> decisions);

struct BaselineConfig {
  double lssvm_gamma = 2.0;
  double svm_c = 1.0;
  std::size_t svm_epochs = 60;
  double lr_lambda = 1e-4;
  double lr_tolerance = 1e-6;
  std::size_t lr_max_iterations = 100;
  std::size_t knn_k = 50;
  double nb_var_floor = 1e-9;
  std::size_t dt_max_depth = 12;
  std::size_t dt_min_leaf = 5;
  std::size_t rf_trees = 200;
};

OvoEnsemble ovo_train(const FeatureMatrix& x, std::span<const int> y, ClassifierKind base_kind,
                      const BaselineConfig& cfg = {}, std::uint64_t seed = 1);
OvoVote ovo_vote(const OvoEnsemble& e, std::span<const double> x);
int ovo_predict(const OvoEnsemble& e, std::span<const double> x);

// ---- native multiclass ----------------------------------------------------

struct KnnModel {
  FeatureMatrix x;
  std::vector<int> y;
  std::size_t k = 50;
};

KnnModel knn_fit(const FeatureMatrix& x, std::span<const int> y, std::size_t k = 50);
int knn_predict(const KnnModel& m, std::span<const double> query);

struct GaussianNb {
  std::vector<int> classes;
  std::vector<double> log_prior;
  std::vector<std::vector<double>> mean;
  std::vector<std::vector<double>> var;
};

GaussianNb gaussian_nb_fit(const FeatureMatrix& x, std::span<const int> y, double var_floor = 1e-9);
std::vector<double> gaussian_nb_log_posterior(const GaussianNb& m, std::span<const double> x);
int gaussian_nb_predict(const GaussianNb& m, std::span<const double> x);

struct TreeNode {
  int feature = -1;  // -1 marks a leaf
  double threshold = 0.0;
  std::uint32_t left = 0;
  std::uint32_t right = 0;
  int label = 0;
};

struct DecisionTree {
  std::vector<TreeNode> nodes;
  std::size_t depth() const;
  std::size_t leaf_count() const;
};

struct TreeOptions {
  std::size_t max_depth = 12;
  std::size_t min_leaf = 5;
  std::size_t max_features = 0;  // 0 = all features at every split
  std::uint64_t seed = 1;
};

double gini(std::span<const std::size_t> class_counts);
DecisionTree decision_tree_fit(const FeatureMatrix& x, std::span<const int> y, const TreeOptions& opts = {});
int decision_tree_predict(const DecisionTree& t, std::span<const double> x);

struct ForestOptions {
  std::size_t n_trees = 200;
  std::uint64_t seed = 1;
  bool bootstrap = true;
  std::size_t max_depth = 12;
  std::size_t min_leaf = 5;
  std::size_t max_features = 0;  // 0 = ceil(sqrt(d))
};

struct RandomForest {
  std::vector<DecisionTree> trees;
  std::vector<int> oob_predictions;  // -1 where a row was never out of bag
};

RandomForest random_forest_fit(const FeatureMatrix& x, std::span<const int> y, const ForestOptions& opts = {});
int random_forest_predict(const RandomForest& f, std::span<const double> x);

// ---- uniform front end ----------------------------------------------------

using ModelVariant = std::variant<OvoEnsemble, KnnModel, GaussianNb, DecisionTree, RandomForest>;

/// Standardizer plus trained model for any non-CNN classifier.
struct FlatClassifier {
  ClassifierKind kind = ClassifierKind::Lr;
  Standardizer standardizer;
  ModelVariant model;

  int predict(std::span<const double> raw_row) const;
  std::vector<int> predict(const FeatureMatrix& raw) const;
};

/// Fits the standardizer on `x` and trains `kind` on the standardized rows.
FlatClassifier train_flat(ClassifierKind kind, const FeatureMatrix& x, std::span<const int> y,
                          const BaselineConfig& cfg = {}, std::uint64_t seed = 1);

/// MDLPAK1 container.
std::vector<std::uint8_t> encode_model(const FlatClassifier& c);
FlatClassifier decode_model(std::span<const std::uint8_t> bytes);
void save_model(const FlatClassifier& c, const std::filesystem::path& path);
FlatClassifier load_model(const std::filesystem::path& path);

}  // namespace fatigue
