#include "fatigue/classifiers.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>

#include "fatigue/binary_io.hpp"
#include "fatigue/error.hpp"
#include "fatigue/rng.hpp"

namespace fatigue {

namespace {

constexpr int kClasses = 3;

void check_xy(const FeatureMatrix& x, std::span<const int> y) {
  if (x.rows == 0 || x.cols == 0) throw Error(ErrorCode::EmptyData, "empty training matrix");
  if (x.rows != y.size()) {
    throw Error(ErrorCode::LengthMismatch,
                std::to_string(x.rows) + " rows but " + std::to_string(y.size()) + " labels");
  }
  for (double v : x.data) {
    if (!std::isfinite(v)) throw Error(ErrorCode::NonFiniteValue, "non-finite feature value");
  }
}

void check_multiclass_labels(std::span<const int> y) {
  for (int v : y) {
    if (v < 0 || v >= kClasses) throw Error(ErrorCode::BadLabel, "label " + std::to_string(v) + " not in {0,1,2}");
  }
}

void check_pm1(std::span<const int> y) {
  bool pos = false, neg = false;
  for (int v : y) {
    if (v == 1) pos = true;
    else if (v == -1) neg = true;
    else throw Error(ErrorCode::BadLabel, "binary labels must be -1 or +1");
  }
  if (!pos || !neg) throw Error(ErrorCode::SingleClass, "binary training set has a single class");
}

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

void check_query(std::size_t expected, std::span<const double> x) {
  if (x.size() != expected) {
    throw Error(ErrorCode::ShapeMismatch,
                "query has " + std::to_string(x.size()) + " features, model expects " + std::to_string(expected));
  }
}

int argmax_lowest(std::span<const double> v) {
  int best = 0;
  for (std::size_t i = 1; i < v.size(); ++i) {
    if (v[i] > v[static_cast<std::size_t>(best)]) best = static_cast<int>(i);
  }
  return best;
}

int majority(std::span<const std::size_t> counts) {
  int best = 0;
  for (std::size_t i = 1; i < counts.size(); ++i) {
    if (counts[i] > counts[static_cast<std::size_t>(best)]) best = static_cast<int>(i);
  }
  return best;
}

double softplus(double z) { return z > 0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z)); }
double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

}  // namespace

void FeatureMatrix::push_row(std::span<const double> values) {
  if (rows == 0 && cols == 0) cols = values.size();
  if (values.size() != cols) throw Error(ErrorCode::ShapeMismatch, "row length differs from matrix width");
  data.insert(data.end(), values.begin(), values.end());
  ++rows;
}

FeatureMatrix FeatureMatrix::select_rows(std::span<const std::size_t> idx) const {
  FeatureMatrix out(idx.size(), cols);
  for (std::size_t i = 0; i < idx.size(); ++i) {
    if (idx[i] >= rows) throw Error(ErrorCode::InvalidArgument, "row index out of range");
    std::copy_n(data.begin() + static_cast<std::ptrdiff_t>(idx[i] * cols), cols,
                out.data.begin() + static_cast<std::ptrdiff_t>(i * cols));
  }
  return out;
}

// ---- standardizer -----------------------------------------------------------

void Standardizer::fit(const FeatureMatrix& x) {
  if (x.rows == 0) throw Error(ErrorCode::EmptyData, "cannot fit a standardizer on zero rows");
  mean_.assign(x.cols, 0.0);
  std_.assign(x.cols, 0.0);
  const double n = static_cast<double>(x.rows);
  for (std::size_t i = 0; i < x.rows; ++i) {
    for (std::size_t j = 0; j < x.cols; ++j) mean_[j] += x.at(i, j);
  }
  for (double& m : mean_) m /= n;
  for (std::size_t i = 0; i < x.rows; ++i) {
    for (std::size_t j = 0; j < x.cols; ++j) {
      const double d = x.at(i, j) - mean_[j];
      std_[j] += d * d;
    }
  }
  for (std::size_t j = 0; j < x.cols; ++j) {
    std_[j] = std::sqrt(std_[j] / n);
    // relative threshold keeps near-constant columns from amplifying rounding noise
    if (std_[j] <= 1e-12 * std::max(1.0, std::abs(mean_[j]))) std_[j] = 0.0;
  }
}

void Standardizer::set(std::vector<double> mean, std::vector<double> stddev) {
  if (mean.size() != stddev.size()) throw Error(ErrorCode::ShapeMismatch, "mean/std length mismatch");
  mean_ = std::move(mean);
  std_ = std::move(stddev);
}

std::vector<double> Standardizer::apply_row(std::span<const double> row) const {
  if (!fitted()) throw Error(ErrorCode::UnfittedNormalizer, "standardizer used before fit");
  check_query(mean_.size(), row);
  std::vector<double> out(row.size());
  for (std::size_t j = 0; j < row.size(); ++j) out[j] = std_[j] > 0.0 ? (row[j] - mean_[j]) / std_[j] : 0.0;
  return out;
}

FeatureMatrix Standardizer::apply(const FeatureMatrix& x) const {
  FeatureMatrix out(x.rows, x.cols);
  for (std::size_t i = 0; i < x.rows; ++i) {
    const auto r = apply_row(x.row(i));
    std::copy(r.begin(), r.end(), out.row(i).begin());
  }
  return out;
}

// ---- names ------------------------------------------------------------------

std::string_view classifier_name(ClassifierKind kind) {
  switch (kind) {
    case ClassifierKind::Cnn: return "CNN";
    case ClassifierKind::Lr: return "LR";
    case ClassifierKind::Lssvm: return "LSSVM";
    case ClassifierKind::Svm: return "SVM";
    case ClassifierKind::Rf: return "RF";
    case ClassifierKind::Knn: return "KNN";
    case ClassifierKind::Dt: return "DT";
    case ClassifierKind::Nb: return "NB";
  }
  return "?";
}

ClassifierKind parse_classifier_kind(std::string_view name) {
  std::string upper(name);
  std::transform(upper.begin(), upper.end(), upper.begin(), [](unsigned char c) { return std::toupper(c); });
  for (auto k : kAllClassifiers) {
    if (classifier_name(k) == upper) return k;
  }
  throw Error(ErrorCode::ConfigError, "unknown classifier '" + std::string(name) +
                                          "' (expected CNN, LR, LSSVM, SVM, RF, KNN, DT or NB)");
}

bool uses_ovo(ClassifierKind kind) {
  return kind == ClassifierKind::Lr || kind == ClassifierKind::Lssvm || kind == ClassifierKind::Svm;
}

// ---- LSSVM ------------------------------------------------------------------

double LssvmModel::decision(std::span<const double> x) const {
  check_query(support.cols, x);
  double f = bias;
  for (std::size_t i = 0; i < support.rows; ++i) f += alpha[i] * dot(support.row(i), x);
  return f;
}

namespace {

Eigen::MatrixXd lssvm_system(const FeatureMatrix& x, double gamma) {
  const auto n = static_cast<Eigen::Index>(x.rows);
  const auto d = static_cast<Eigen::Index>(x.cols);
  Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> xm(x.data.data(), n, d);
  Eigen::MatrixXd a(n + 1, n + 1);
  a(0, 0) = 0.0;
  a.block(0, 1, 1, n).setOnes();
  a.block(1, 0, n, 1).setOnes();
  a.block(1, 1, n, n).noalias() = xm * xm.transpose();
  a.block(1, 1, n, n).diagonal().array() += 1.0 / gamma;
  return a;
}

}  // namespace

LssvmModel train_lssvm_binary(const FeatureMatrix& x, std::span<const int> y, double gamma) {
  check_xy(x, y);
  check_pm1(y);
  if (x.rows < 2) throw Error(ErrorCode::TooSmall, "LSSVM needs at least two rows");
  if (!(gamma > 0.0)) throw Error(ErrorCode::InvalidArgument, "gamma must be positive");
  const auto n = static_cast<Eigen::Index>(x.rows);
  const Eigen::MatrixXd a = lssvm_system(x, gamma);
  Eigen::VectorXd rhs(n + 1);
  rhs(0) = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) rhs(i + 1) = y[static_cast<std::size_t>(i)];
  Eigen::PartialPivLU<Eigen::MatrixXd> lu(a);
  if (!(lu.rcond() > 1e-15)) throw Error(ErrorCode::SingularSystem, "LSSVM system is numerically singular");
  const Eigen::VectorXd sol = lu.solve(rhs);
  if (!sol.allFinite()) throw Error(ErrorCode::SingularSystem, "LSSVM solution is not finite");
  LssvmModel m;
  m.support = x;
  m.bias = sol(0);
  m.alpha.assign(sol.data() + 1, sol.data() + n + 1);
  return m;
}

double lssvm_residual(const FeatureMatrix& x, std::span<const int> y, double gamma, const LssvmModel& m) {
  const auto n = static_cast<Eigen::Index>(x.rows);
  const Eigen::MatrixXd a = lssvm_system(x, gamma);
  Eigen::VectorXd sol(n + 1), rhs(n + 1);
  sol(0) = m.bias;
  rhs(0) = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    sol(i + 1) = m.alpha[static_cast<std::size_t>(i)];
    rhs(i + 1) = y[static_cast<std::size_t>(i)];
  }
  return (a * sol - rhs).cwiseAbs().maxCoeff();
}

// ---- SVM --------------------------------------------------------------------

double SvmModel::decision(std::span<const double> x) const {
  check_query(w.size(), x);
  return dot(w, x) + bias;
}

double svm_objective(const FeatureMatrix& x, std::span<const int> y, double c, const SvmModel& m) {
  double hinge = 0.0;
  for (std::size_t i = 0; i < x.rows; ++i) hinge += std::max(0.0, 1.0 - y[i] * m.decision(x.row(i)));
  return 0.5 * dot(m.w, m.w) + c * hinge;
}

SvmModel train_svm_binary(const FeatureMatrix& x, std::span<const int> y, const SvmOptions& opts) {
  check_xy(x, y);
  check_pm1(y);
  if (!(opts.c > 0.0) || opts.epochs == 0) throw Error(ErrorCode::InvalidArgument, "SVM needs C > 0 and epochs >= 1");
  const std::size_t n = x.rows, d = x.cols;
  const double lambda = 1.0 / (opts.c * static_cast<double>(n));
  const double radius = 1.0 / std::sqrt(lambda);

  SvmModel cur{std::vector<double>(d, 0.0), 0.0};
  SvmModel avg = cur;
  SvmModel best = cur;
  double best_obj = svm_objective(x, y, opts.c, best);
  std::size_t avg_count = 0;

  Rng rng(opts.seed);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::size_t t = 0;
  for (std::size_t epoch = 0; epoch < opts.epochs; ++epoch) {
    rng.shuffle(std::span<std::size_t>(order));
    for (std::size_t i : order) {
      ++t;
      const double eta = 1.0 / (lambda * static_cast<double>(t));
      const auto xi = x.row(i);
      const double yi = y[i];
      const double margin = yi * (dot(cur.w, xi) + cur.bias);
      const double shrink = 1.0 - eta * lambda;
      for (double& wj : cur.w) wj *= shrink;
      if (margin < 1.0) {
        for (std::size_t j = 0; j < d; ++j) cur.w[j] += eta * yi * xi[j];
        cur.bias += eta * yi / static_cast<double>(n);
      }
      const double norm = std::sqrt(dot(cur.w, cur.w));
      if (norm > radius) {
        for (double& wj : cur.w) wj *= radius / norm;
      }
    }
    // running average over the second half of the budget
    if (2 * epoch >= opts.epochs) {
      ++avg_count;
      const double a = 1.0 / static_cast<double>(avg_count);
      for (std::size_t j = 0; j < d; ++j) avg.w[j] += a * (cur.w[j] - avg.w[j]);
      avg.bias += a * (cur.bias - avg.bias);
    }
    for (const SvmModel* cand : {&cur, &avg}) {
      const double obj = svm_objective(x, y, opts.c, *cand);
      if (obj < best_obj) {
        best_obj = obj;
        best = *cand;
      }
    }
  }
  return best;
}

// ---- logistic regression ----------------------------------------------------

double LogRegModel::decision(std::span<const double> x) const {
  check_query(w.size(), x);
  return dot(w, x) + bias;
}

double LogRegModel::probability(std::span<const double> x) const { return sigmoid(decision(x)); }

namespace {

void check_01(std::span<const int> y) {
  bool pos = false, neg = false;
  for (int v : y) {
    if (v == 1) pos = true;
    else if (v == 0) neg = true;
    else throw Error(ErrorCode::BadLabel, "logistic labels must be 0 or 1");
  }
  if (!pos || !neg) throw Error(ErrorCode::SingleClass, "binary training set has a single class");
}

double logreg_objective(const FeatureMatrix& x, std::span<const int> y, double lambda, std::span<const double> w,
                        double b) {
  double loss = 0.0;
  for (std::size_t i = 0; i < x.rows; ++i) {
    const double z = dot(w, x.row(i)) + b;
    loss += softplus(z) - y[i] * z;
  }
  return loss / static_cast<double>(x.rows) + 0.5 * lambda * dot(w, w);
}

}  // namespace

std::vector<double> logreg_gradient(const FeatureMatrix& x, std::span<const int> y, double lambda,
                                    const LogRegModel& m) {
  const std::size_t d = x.cols;
  std::vector<double> g(d + 1, 0.0);
  for (std::size_t i = 0; i < x.rows; ++i) {
    const auto xi = x.row(i);
    const double r = sigmoid(dot(m.w, xi) + m.bias) - y[i];
    for (std::size_t j = 0; j < d; ++j) g[j] += r * xi[j];
    g[d] += r;
  }
  const double inv_n = 1.0 / static_cast<double>(x.rows);
  for (std::size_t j = 0; j < d; ++j) g[j] = g[j] * inv_n + lambda * m.w[j];
  g[d] *= inv_n;
  return g;
}

LogRegModel train_logreg_binary(const FeatureMatrix& x, std::span<const int> y, const LogRegOptions& opts) {
  check_xy(x, y);
  check_01(y);
  if (!(opts.lambda >= 0.0)) throw Error(ErrorCode::InvalidArgument, "lambda must be >= 0");
  const std::size_t n = x.rows, d = x.cols;
  const auto di = static_cast<Eigen::Index>(d);
  Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> xm(
      x.data.data(), static_cast<Eigen::Index>(n), di);

  LogRegModel m;
  m.w.assign(d, 0.0);
  double obj = logreg_objective(x, y, opts.lambda, m.w, m.bias);
  for (std::size_t iter = 0; iter < opts.max_iterations; ++iter) {
    const auto g = logreg_gradient(x, y, opts.lambda, m);
    const double gmax = std::abs(*std::max_element(g.begin(), g.end(), [](double a, double b) {
      return std::abs(a) < std::abs(b);
    }));
    if (gmax < opts.tolerance) {
      m.converged = true;
      break;
    }
    ++m.iterations;
    // Hessian of the augmented [w; b] system
    Eigen::MatrixXd h = Eigen::MatrixXd::Zero(di + 1, di + 1);
    Eigen::VectorXd s(static_cast<Eigen::Index>(n));
    for (std::size_t i = 0; i < n; ++i) {
      const double p = sigmoid(dot(m.w, x.row(i)) + m.bias);
      s(static_cast<Eigen::Index>(i)) = p * (1.0 - p);
    }
    const double inv_n = 1.0 / static_cast<double>(n);
    h.topLeftCorner(di, di).noalias() = inv_n * (xm.transpose() * s.asDiagonal() * xm);
    const Eigen::VectorXd xs = inv_n * (xm.transpose() * s);
    h.block(0, di, di, 1) = xs;
    h.block(di, 0, 1, di) = xs.transpose();
    h(di, di) = inv_n * s.sum();
    h.topLeftCorner(di, di).diagonal().array() += opts.lambda;
    h.diagonal().array() += 1e-12;
    const Eigen::VectorXd gv = Eigen::Map<const Eigen::VectorXd>(g.data(), di + 1);
    Eigen::VectorXd step = h.ldlt().solve(gv);
    if (!step.allFinite()) step = gv;

    double t = 1.0;
    const double slope = gv.dot(step);
    bool accepted = false;
    for (int ls = 0; ls < 60; ++ls) {
      std::vector<double> w2(d);
      for (std::size_t j = 0; j < d; ++j) w2[j] = m.w[j] - t * step(static_cast<Eigen::Index>(j));
      const double b2 = m.bias - t * step(di);
      const double obj2 = logreg_objective(x, y, opts.lambda, w2, b2);
      if (obj2 <= obj - 1e-4 * t * slope || (ls > 40 && obj2 <= obj)) {
        m.w = std::move(w2);
        m.bias = b2;
        obj = obj2;
        accepted = true;
        break;
      }
      t *= 0.5;
    }
    if (!accepted) {
      const auto g2 = logreg_gradient(x, y, opts.lambda, m);
      m.converged = std::all_of(g2.begin(), g2.end(), [&](double v) { return std::abs(v) < opts.tolerance; });
      return m;
    }
  }
  if (!m.converged) {
    const auto g = logreg_gradient(x, y, opts.lambda, m);
    m.converged = std::all_of(g.begin(), g.end(), [&](double v) { return std::abs(v) < opts.tolerance; });
  }
  return m;
}

// ---- OVO --------------------------------------------------------------------

double binary_decision(const BinaryModel& m, std::span<const double> x) {
  return std::visit([&](const auto& model) { return model.decision(x); }, m);
}

OvoVote ovo_combine(std::span<const double, 3> decisions) {
  OvoVote v;
  for (std::size_t p = 0; p < kOvoPairs.size(); ++p) {
    const int neg = kOvoPairs[p][0], pos = kOvoPairs[p][1];
    const double f = decisions[p];
    ++v.votes[static_cast<std::size_t>(f > 0.0 ? pos : neg)];
    v.margin[static_cast<std::size_t>(pos)] += f;
    v.margin[static_cast<std::size_t>(neg)] -= f;
  }
  const int top = *std::max_element(v.votes.begin(), v.votes.end());
  int best = -1;
  for (int c = 0; c < kClasses; ++c) {
    if (v.votes[static_cast<std::size_t>(c)] != top) continue;
    if (best < 0 || v.margin[static_cast<std::size_t>(c)] > v.margin[static_cast<std::size_t>(best)]) best = c;
  }
  v.label = best;
  return v;
}

OvoEnsemble ovo_train(const FeatureMatrix& x, std::span<const int> y, ClassifierKind base_kind,
                      const BaselineConfig& cfg, std::uint64_t seed) {
  check_xy(x, y);
  check_multiclass_labels(y);
  if (!uses_ovo(base_kind)) {
    throw Error(ErrorCode::InvalidArgument, std::string(classifier_name(base_kind)) + " is not an OVO base learner");
  }
  for (int c = 0; c < kClasses; ++c) {
    if (std::find(y.begin(), y.end(), c) == y.end()) {
      throw Error(ErrorCode::MissingClass, "class " + std::to_string(c) + " absent from the training set");
    }
  }
  OvoEnsemble e;
  e.base_kind = base_kind;
  for (std::size_t p = 0; p < kOvoPairs.size(); ++p) {
    const int neg = kOvoPairs[p][0], pos = kOvoPairs[p][1];
    std::vector<std::size_t> rows;
    std::vector<int> pm, zo;
    for (std::size_t i = 0; i < y.size(); ++i) {
      if (y[i] == neg || y[i] == pos) {
        rows.push_back(i);
        pm.push_back(y[i] == pos ? 1 : -1);
        zo.push_back(y[i] == pos ? 1 : 0);
      }
    }
    const FeatureMatrix sub = x.select_rows(rows);
    switch (base_kind) {
      case ClassifierKind::Lssvm: e.members[p] = train_lssvm_binary(sub, pm, cfg.lssvm_gamma); break;
      case ClassifierKind::Svm:
        e.members[p] = train_svm_binary(sub, pm, SvmOptions{cfg.svm_c, cfg.svm_epochs, derive_seed(seed, p)});
        break;
      default:
        e.members[p] =
            train_logreg_binary(sub, zo, LogRegOptions{cfg.lr_lambda, cfg.lr_tolerance, cfg.lr_max_iterations});
        break;
    }
  }
  return e;
}

OvoVote ovo_vote(const OvoEnsemble& e, std::span<const double> x) {
  std::array<double, 3> f{};
  for (std::size_t p = 0; p < 3; ++p) f[p] = binary_decision(e.members[p], x);
  return ovo_combine(f);
}

int ovo_predict(const OvoEnsemble& e, std::span<const double> x) { return ovo_vote(e, x).label; }

// ---- KNN --------------------------------------------------------------------

KnnModel knn_fit(const FeatureMatrix& x, std::span<const int> y, std::size_t k) {
  check_xy(x, y);
  check_multiclass_labels(y);
  if (k == 0) throw Error(ErrorCode::InvalidArgument, "k must be >= 1");
  if (k > x.rows) {
    throw Error(ErrorCode::KTooLarge, "k=" + std::to_string(k) + " exceeds the " + std::to_string(x.rows) +
                                          " training rows; lower baseline.knn_k or use more data");
  }
  return KnnModel{x, std::vector<int>(y.begin(), y.end()), k};
}

int knn_predict(const KnnModel& m, std::span<const double> query) {
  check_query(m.x.cols, query);
  std::vector<std::pair<double, std::size_t>> dist(m.x.rows);
  for (std::size_t i = 0; i < m.x.rows; ++i) {
    const auto r = m.x.row(i);
    double s = 0.0;
    for (std::size_t j = 0; j < r.size(); ++j) {
      const double d = r[j] - query[j];
      s += d * d;
    }
    dist[i] = {s, i};
  }
  std::partial_sort(dist.begin(), dist.begin() + static_cast<std::ptrdiff_t>(m.k), dist.end());
  std::array<std::size_t, kClasses> counts{};
  for (std::size_t i = 0; i < m.k; ++i) ++counts[static_cast<std::size_t>(m.y[dist[i].second])];
  return majority(counts);
}

// ---- Gaussian NB ------------------------------------------------------------

GaussianNb gaussian_nb_fit(const FeatureMatrix& x, std::span<const int> y, double var_floor) {
  check_xy(x, y);
  check_multiclass_labels(y);
  GaussianNb m;
  const std::size_t d = x.cols;
  for (int c = 0; c < kClasses; ++c) {
    std::vector<std::size_t> rows;
    for (std::size_t i = 0; i < y.size(); ++i) {
      if (y[i] == c) rows.push_back(i);
    }
    if (rows.empty()) continue;
    if (rows.size() < 2) {
      throw Error(ErrorCode::ClassTooSmall, "class " + std::to_string(c) + " has fewer than 2 rows");
    }
    std::vector<double> mu(d, 0.0), var(d, 0.0);
    for (std::size_t i : rows) {
      for (std::size_t j = 0; j < d; ++j) mu[j] += x.at(i, j);
    }
    for (double& v : mu) v /= static_cast<double>(rows.size());
    for (std::size_t i : rows) {
      for (std::size_t j = 0; j < d; ++j) {
        const double diff = x.at(i, j) - mu[j];
        var[j] += diff * diff;
      }
    }
    for (double& v : var) v = std::max(v / static_cast<double>(rows.size()), var_floor);
    m.classes.push_back(c);
    m.log_prior.push_back(std::log(static_cast<double>(rows.size()) / static_cast<double>(y.size())));
    m.mean.push_back(std::move(mu));
    m.var.push_back(std::move(var));
  }
  return m;
}

std::vector<double> gaussian_nb_log_posterior(const GaussianNb& m, std::span<const double> x) {
  std::vector<double> out(m.classes.size());
  for (std::size_t c = 0; c < m.classes.size(); ++c) {
    check_query(m.mean[c].size(), x);
    double lp = m.log_prior[c];
    for (std::size_t j = 0; j < x.size(); ++j) {
      const double v = m.var[c][j];
      const double diff = x[j] - m.mean[c][j];
      lp += -0.5 * std::log(2.0 * std::numbers::pi * v) - diff * diff / (2.0 * v);
    }
    out[c] = lp;
  }
  return out;
}

int gaussian_nb_predict(const GaussianNb& m, std::span<const double> x) {
  const auto lp = gaussian_nb_log_posterior(m, x);
  return m.classes[static_cast<std::size_t>(argmax_lowest(lp))];
}

// ---- CART -------------------------------------------------------------------

double gini(std::span<const std::size_t> class_counts) {
  const double n = static_cast<double>(std::accumulate(class_counts.begin(), class_counts.end(), std::size_t{0}));
  if (n == 0.0) return 0.0;
  double s = 1.0;
  for (std::size_t c : class_counts) {
    const double p = static_cast<double>(c) / n;
    s -= p * p;
  }
  return s;
}

std::size_t DecisionTree::depth() const {
  if (nodes.empty()) return 0;
  std::vector<std::pair<std::uint32_t, std::size_t>> stack{{0, 0}};
  std::size_t best = 0;
  while (!stack.empty()) {
    auto [i, dep] = stack.back();
    stack.pop_back();
    best = std::max(best, dep);
    if (nodes[i].feature >= 0) {
      stack.push_back({nodes[i].left, dep + 1});
      stack.push_back({nodes[i].right, dep + 1});
    }
  }
  return best;
}

std::size_t DecisionTree::leaf_count() const {
  return static_cast<std::size_t>(
      std::count_if(nodes.begin(), nodes.end(), [](const TreeNode& n) { return n.feature < 0; }));
}

namespace {

class TreeBuilder {
 public:
  TreeBuilder(const FeatureMatrix& x, std::span<const int> y, const TreeOptions& opts)
      : x_(x), y_(y), opts_(opts), rng_(opts.seed) {}

  DecisionTree build(std::vector<std::size_t> rows) {
    tree_.nodes.clear();
    grow(rows, 0);
    return std::move(tree_);
  }

 private:
  std::uint32_t grow(std::vector<std::size_t>& rows, std::size_t depth) {
    std::array<std::size_t, kClasses> counts{};
    for (std::size_t r : rows) ++counts[static_cast<std::size_t>(y_[r])];
    const auto id = static_cast<std::uint32_t>(tree_.nodes.size());
    tree_.nodes.push_back(TreeNode{-1, 0.0, 0, 0, majority(counts)});

    const bool pure = std::count_if(counts.begin(), counts.end(), [](std::size_t c) { return c > 0; }) <= 1;
    if (pure || depth >= opts_.max_depth || rows.size() < 2 * opts_.min_leaf) return id;

    const auto features = candidate_features();
    int best_f = -1;
    double best_t = 0.0;
    double best_imp = std::numeric_limits<double>::infinity();
    std::vector<std::pair<double, int>> vals(rows.size());
    const double n = static_cast<double>(rows.size());
    for (std::size_t f : features) {
      for (std::size_t i = 0; i < rows.size(); ++i) vals[i] = {x_.at(rows[i], f), y_[rows[i]]};
      std::sort(vals.begin(), vals.end());
      std::array<std::size_t, kClasses> left{};
      std::array<std::size_t, kClasses> right = counts;
      for (std::size_t i = 0; i + 1 < vals.size(); ++i) {
        ++left[static_cast<std::size_t>(vals[i].second)];
        --right[static_cast<std::size_t>(vals[i].second)];
        if (!(vals[i].first < vals[i + 1].first)) continue;
        const std::size_t nl = i + 1, nr = vals.size() - nl;
        if (nl < opts_.min_leaf || nr < opts_.min_leaf) continue;
        const double imp = (static_cast<double>(nl) * gini(left) + static_cast<double>(nr) * gini(right)) / n;
        if (imp < best_imp - 1e-12) {
          best_imp = imp;
          best_f = static_cast<int>(f);
          best_t = 0.5 * (vals[i].first + vals[i + 1].first);
        }
      }
    }
    if (best_f < 0) return id;

    std::vector<std::size_t> lrows, rrows;
    for (std::size_t r : rows) (x_.at(r, static_cast<std::size_t>(best_f)) <= best_t ? lrows : rrows).push_back(r);
    rows.clear();
    rows.shrink_to_fit();
    const std::uint32_t l = grow(lrows, depth + 1);
    const std::uint32_t r = grow(rrows, depth + 1);
    tree_.nodes[id].feature = best_f;
    tree_.nodes[id].threshold = best_t;
    tree_.nodes[id].left = l;
    tree_.nodes[id].right = r;
    return id;
  }

  std::vector<std::size_t> candidate_features() {
    std::vector<std::size_t> all(x_.cols);
    std::iota(all.begin(), all.end(), std::size_t{0});
    const std::size_t m = opts_.max_features;
    if (m == 0 || m >= x_.cols) return all;
    // partial Fisher-Yates
    for (std::size_t i = 0; i < m; ++i) std::swap(all[i], all[i + rng_.below(x_.cols - i)]);
    all.resize(m);
    std::sort(all.begin(), all.end());
    return all;
  }

  const FeatureMatrix& x_;
  std::span<const int> y_;
  TreeOptions opts_;
  Rng rng_;
  DecisionTree tree_;
};

}  // namespace

DecisionTree decision_tree_fit(const FeatureMatrix& x, std::span<const int> y, const TreeOptions& opts) {
  check_xy(x, y);
  check_multiclass_labels(y);
  if (opts.min_leaf == 0) throw Error(ErrorCode::InvalidArgument, "min_leaf must be >= 1");
  if (x.rows < opts.min_leaf) throw Error(ErrorCode::EmptyData, "fewer rows than min_leaf");
  std::vector<std::size_t> rows(x.rows);
  std::iota(rows.begin(), rows.end(), std::size_t{0});
  return TreeBuilder(x, y, opts).build(std::move(rows));
}

int decision_tree_predict(const DecisionTree& t, std::span<const double> x) {
  if (t.nodes.empty()) throw Error(ErrorCode::EmptyData, "empty tree");
  std::uint32_t i = 0;
  while (t.nodes[i].feature >= 0) {
    const auto f = static_cast<std::size_t>(t.nodes[i].feature);
    if (f >= x.size()) throw Error(ErrorCode::ShapeMismatch, "query narrower than the training data");
    i = x[f] <= t.nodes[i].threshold ? t.nodes[i].left : t.nodes[i].right;
  }
  return t.nodes[i].label;
}

RandomForest random_forest_fit(const FeatureMatrix& x, std::span<const int> y, const ForestOptions& opts) {
  check_xy(x, y);
  check_multiclass_labels(y);
  if (opts.n_trees == 0) throw Error(ErrorCode::InvalidArgument, "n_trees must be >= 1");
  if (x.rows < opts.min_leaf) throw Error(ErrorCode::EmptyData, "fewer rows than min_leaf");
  const std::size_t n = x.rows;
  const std::size_t mf =
      opts.max_features ? opts.max_features
                        : static_cast<std::size_t>(std::ceil(std::sqrt(static_cast<double>(x.cols))));
  RandomForest forest;
  std::vector<std::array<std::size_t, kClasses>> oob(n, std::array<std::size_t, kClasses>{});
  std::vector<bool> any_oob(n, false);
  for (std::size_t t = 0; t < opts.n_trees; ++t) {
    const std::uint64_t tree_seed = derive_seed(opts.seed, t);
    std::vector<std::size_t> rows(n);
    std::vector<bool> in_bag(n, !opts.bootstrap);
    if (opts.bootstrap) {
      Rng boot(derive_seed(tree_seed, 0xB007));
      for (std::size_t i = 0; i < n; ++i) {
        rows[i] = boot.below(n);
        in_bag[rows[i]] = true;
      }
      std::sort(rows.begin(), rows.end());
    } else {
      std::iota(rows.begin(), rows.end(), std::size_t{0});
    }
    TreeOptions to{opts.max_depth, opts.min_leaf, mf, tree_seed};
    forest.trees.push_back(TreeBuilder(x, y, to).build(std::move(rows)));
    for (std::size_t i = 0; i < n; ++i) {
      if (in_bag[i]) continue;
      any_oob[i] = true;
      ++oob[i][static_cast<std::size_t>(decision_tree_predict(forest.trees.back(), x.row(i)))];
    }
  }
  forest.oob_predictions.resize(n);
  for (std::size_t i = 0; i < n; ++i) forest.oob_predictions[i] = any_oob[i] ? majority(oob[i]) : -1;
  return forest;
}

int random_forest_predict(const RandomForest& f, std::span<const double> x) {
  std::array<std::size_t, kClasses> votes{};
  for (const auto& t : f.trees) ++votes[static_cast<std::size_t>(decision_tree_predict(t, x))];
  return majority(votes);
}

// ---- front end --------------------------------------------------------------

int FlatClassifier::predict(std::span<const double> raw_row) const {
  const auto z = standardizer.apply_row(raw_row);
  return std::visit(
      [&](const auto& m) -> int {
        using T = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<T, OvoEnsemble>) return ovo_predict(m, z);
        else if constexpr (std::is_same_v<T, KnnModel>) return knn_predict(m, z);
        else if constexpr (std::is_same_v<T, GaussianNb>) return gaussian_nb_predict(m, z);
        else if constexpr (std::is_same_v<T, DecisionTree>) return decision_tree_predict(m, z);
        else return random_forest_predict(m, z);
      },
      model);
}

std::vector<int> FlatClassifier::predict(const FeatureMatrix& raw) const {
  std::vector<int> out(raw.rows);
  for (std::size_t i = 0; i < raw.rows; ++i) out[i] = predict(raw.row(i));
  return out;
}

FlatClassifier train_flat(ClassifierKind kind, const FeatureMatrix& x, std::span<const int> y,
                          const BaselineConfig& cfg, std::uint64_t seed) {
  if (kind == ClassifierKind::Cnn) throw Error(ErrorCode::InvalidArgument, "CNN does not take flat features");
  check_xy(x, y);
  FlatClassifier c;
  c.kind = kind;
  c.standardizer.fit(x);
  const FeatureMatrix z = c.standardizer.apply(x);
  switch (kind) {
    case ClassifierKind::Lr:
    case ClassifierKind::Lssvm:
    case ClassifierKind::Svm: c.model = ovo_train(z, y, kind, cfg, seed); break;
    case ClassifierKind::Knn: c.model = knn_fit(z, y, cfg.knn_k); break;
    case ClassifierKind::Nb: c.model = gaussian_nb_fit(z, y, cfg.nb_var_floor); break;
    case ClassifierKind::Dt:
      c.model = decision_tree_fit(z, y, TreeOptions{cfg.dt_max_depth, cfg.dt_min_leaf, 0, seed});
      break;
    case ClassifierKind::Rf:
      c.model = random_forest_fit(z, y, ForestOptions{cfg.rf_trees, seed, true, cfg.dt_max_depth, cfg.dt_min_leaf, 0});
      break;
    case ClassifierKind::Cnn: break;
  }
  return c;
}

// ---- MDLPAK1 ----------------------------------------------------------------

namespace {

void put_vec(ByteWriter& w, std::span<const double> v) {
  for (double x : v) w.f64(x);
}

std::vector<double> get_vec(ByteReader& r, std::size_t n) {
  if (r.remaining() / 8 < n) r.fail("truncated vector");
  std::vector<double> v(n);
  for (double& x : v) x = r.f64();
  return v;
}

void put_tree(ByteWriter& w, const DecisionTree& t) {
  w.u32(static_cast<std::uint32_t>(t.nodes.size()));
  for (const auto& n : t.nodes) {
    w.u32(static_cast<std::uint32_t>(static_cast<std::int32_t>(n.feature)));
    w.f64(n.threshold);
    w.u32(n.left);
    w.u32(n.right);
    w.u8(static_cast<std::uint8_t>(n.label));
  }
}

DecisionTree get_tree(ByteReader& r) {
  DecisionTree t;
  const std::uint32_t count = r.u32();
  if (count == 0 || r.remaining() / 21 < count) r.fail("bad tree node count");
  t.nodes.resize(count);
  for (auto& n : t.nodes) {
    n.feature = static_cast<std::int32_t>(r.u32());
    n.threshold = r.f64();
    n.left = r.u32();
    n.right = r.u32();
    n.label = r.u8();
    if (n.feature >= 0 && (n.left >= count || n.right >= count)) r.fail("tree child index out of range");
  }
  return t;
}

void put_binary(ByteWriter& w, const BinaryModel& m) {
  if (const auto* l = std::get_if<LssvmModel>(&m)) {
    w.u32(static_cast<std::uint32_t>(l->support.rows));
    w.u32(static_cast<std::uint32_t>(l->support.cols));
    put_vec(w, l->support.data);
    put_vec(w, l->alpha);
    w.f64(l->bias);
  } else if (const auto* s = std::get_if<SvmModel>(&m)) {
    w.u32(static_cast<std::uint32_t>(s->w.size()));
    put_vec(w, s->w);
    w.f64(s->bias);
  } else {
    const auto& g = std::get<LogRegModel>(m);
    w.u32(static_cast<std::uint32_t>(g.w.size()));
    put_vec(w, g.w);
    w.f64(g.bias);
    w.u8(g.converged ? 1 : 0);
    w.u32(static_cast<std::uint32_t>(g.iterations));
  }
}

BinaryModel get_binary(ByteReader& r, ClassifierKind kind) {
  if (kind == ClassifierKind::Lssvm) {
    LssvmModel l;
    const std::uint32_t n = r.u32(), d = r.u32();
    l.support.rows = n;
    l.support.cols = d;
    l.support.data = get_vec(r, static_cast<std::size_t>(n) * d);
    l.alpha = get_vec(r, n);
    l.bias = r.f64();
    return l;
  }
  if (kind == ClassifierKind::Svm) {
    SvmModel s;
    s.w = get_vec(r, r.u32());
    s.bias = r.f64();
    return s;
  }
  LogRegModel g;
  g.w = get_vec(r, r.u32());
  g.bias = r.f64();
  g.converged = r.u8() != 0;
  g.iterations = r.u32();
  return g;
}

}  // namespace

std::vector<std::uint8_t> encode_model(const FlatClassifier& c) {
  ByteWriter p;
  const auto& mean = c.standardizer.mean();
  p.u32(static_cast<std::uint32_t>(mean.size()));
  put_vec(p, mean);
  put_vec(p, c.standardizer.stddev());
  std::visit(
      [&](const auto& m) {
        using T = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<T, OvoEnsemble>) {
          for (const auto& b : m.members) put_binary(p, b);
        } else if constexpr (std::is_same_v<T, KnnModel>) {
          p.u32(static_cast<std::uint32_t>(m.k));
          p.u32(static_cast<std::uint32_t>(m.x.rows));
          p.u32(static_cast<std::uint32_t>(m.x.cols));
          put_vec(p, m.x.data);
          for (int y : m.y) p.u8(static_cast<std::uint8_t>(y));
        } else if constexpr (std::is_same_v<T, GaussianNb>) {
          p.u32(static_cast<std::uint32_t>(m.classes.size()));
          p.u32(static_cast<std::uint32_t>(m.mean.empty() ? 0 : m.mean[0].size()));
          for (std::size_t k = 0; k < m.classes.size(); ++k) {
            p.u8(static_cast<std::uint8_t>(m.classes[k]));
            p.f64(m.log_prior[k]);
            put_vec(p, m.mean[k]);
            put_vec(p, m.var[k]);
          }
        } else if constexpr (std::is_same_v<T, DecisionTree>) {
          put_tree(p, m);
        } else {
          p.u32(static_cast<std::uint32_t>(m.trees.size()));
          for (const auto& t : m.trees) put_tree(p, t);
          p.u32(static_cast<std::uint32_t>(m.oob_predictions.size()));
          for (int o : m.oob_predictions) p.u32(static_cast<std::uint32_t>(static_cast<std::int32_t>(o)));
        }
      },
      c.model);
  const auto payload = p.take();
  ByteWriter w;
  w.bytes("MDLP");
  w.u8(0x01);
  w.u8(static_cast<std::uint8_t>(c.kind));
  w.u64(payload.size());
  w.bytes(std::string_view(reinterpret_cast<const char*>(payload.data()), payload.size()));
  return w.take();
}

FlatClassifier decode_model(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes, ErrorCode::BadModelFile);
  r.expect("MDLP");
  if (r.u8() != 0x01) r.fail("unsupported model version");
  const std::uint8_t kind_byte = r.u8();
  if (kind_byte == 0 || kind_byte > static_cast<std::uint8_t>(ClassifierKind::Nb)) r.fail("unknown classifier kind");
  const std::uint64_t len = r.u64();
  if (len != r.remaining()) r.fail("payload length does not match file size");

  FlatClassifier c;
  c.kind = static_cast<ClassifierKind>(kind_byte);
  const std::uint32_t d = r.u32();
  auto mean = get_vec(r, d);
  auto sd = get_vec(r, d);
  c.standardizer.set(std::move(mean), std::move(sd));
  switch (c.kind) {
    case ClassifierKind::Lr:
    case ClassifierKind::Lssvm:
    case ClassifierKind::Svm: {
      OvoEnsemble e;
      e.base_kind = c.kind;
      for (auto& m : e.members) m = get_binary(r, c.kind);
      c.model = std::move(e);
      break;
    }
    case ClassifierKind::Knn: {
      KnnModel k;
      k.k = r.u32();
      const std::uint32_t n = r.u32(), cols = r.u32();
      k.x.rows = n;
      k.x.cols = cols;
      k.x.data = get_vec(r, static_cast<std::size_t>(n) * cols);
      k.y.resize(n);
      for (int& y : k.y) y = r.u8();
      if (k.k == 0 || k.k > n) r.fail("k out of range");
      c.model = std::move(k);
      break;
    }
    case ClassifierKind::Nb: {
      GaussianNb g;
      const std::uint32_t nc = r.u32(), cols = r.u32();
      for (std::uint32_t k = 0; k < nc; ++k) {
        g.classes.push_back(r.u8());
        g.log_prior.push_back(r.f64());
        g.mean.push_back(get_vec(r, cols));
        g.var.push_back(get_vec(r, cols));
      }
      if (g.classes.empty()) r.fail("no classes");
      c.model = std::move(g);
      break;
    }
    case ClassifierKind::Dt: c.model = get_tree(r); break;
    case ClassifierKind::Rf: {
      RandomForest f;
      const std::uint32_t nt = r.u32();
      for (std::uint32_t t = 0; t < nt; ++t) f.trees.push_back(get_tree(r));
      const std::uint32_t no = r.u32();
      if (r.remaining() / 4 < no) r.fail("truncated oob predictions");
      for (std::uint32_t i = 0; i < no; ++i) f.oob_predictions.push_back(static_cast<std::int32_t>(r.u32()));
      if (f.trees.empty()) r.fail("forest has no trees");
      c.model = std::move(f);
      break;
    }
    case ClassifierKind::Cnn: break;
  }
  if (r.remaining() != 0) r.fail("trailing bytes in payload");
  return c;
}

void save_model(const FlatClassifier& c, const std::filesystem::path& path) {
  write_binary_file(path, encode_model(c));
}

FlatClassifier load_model(const std::filesystem::path& path) { return decode_model(read_binary_file(path)); }

}  // namespace fatigue
