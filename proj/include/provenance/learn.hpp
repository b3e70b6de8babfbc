#pragma once

// L1-penalized squared-hinge linear SVMs (coordinate descent with Newton
// steps), one-vs-rest, balanced class weights, stratified k-fold.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <map>
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "provenance/error.hpp"

namespace provenance {

/// Dense row-major matrix.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), data(r * c, fill) {}

  static Matrix from_rows(const std::vector<std::vector<double>>& rs) {
    Matrix m(rs.size(), rs.empty() ? 0 : rs.front().size());
    for (std::size_t i = 0; i < rs.size(); ++i) {
      if (rs[i].size() != m.cols) throw Error(ErrorCode::DimensionMismatch, "ragged rows");
      std::copy(rs[i].begin(), rs[i].end(), m.data.begin() + static_cast<std::ptrdiff_t>(i * m.cols));
    }
    return m;
  }

  double& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
  std::span<const double> row(std::size_t r) const { return std::span<const double>(data).subspan(r * cols, cols); }
};

enum class ClassWeighting { Balanced, Uniform };

struct TrainConfig {
  double C = 1.0;
  double tolerance = 1e-4;
  int max_epochs = 1000;
  ClassWeighting weighting = ClassWeighting::Balanced;
  std::uint64_t seed = 0;
};

struct TrainingInfo {
  double objective = 0.0;
  int epochs = 0;
  bool converged = false;
  std::vector<double> objective_trace;  // objective after each accepted epoch, starting with the initial point
};

struct LinearModel {
  std::vector<double> weights;
  double bias = 0.0;
  std::string positive_label = "+1";
  std::string negative_label = "-1";
  TrainingInfo info;

  double decision(std::span<const double> x) const {
    if (x.size() != weights.size())
      throw Error(ErrorCode::DimensionMismatch,
                  "input has " + std::to_string(x.size()) + " dims, model " + std::to_string(weights.size()));
    double s = bias;
    for (std::size_t i = 0; i < x.size(); ++i) s += weights[i] * x[i];
    return s;
  }
};

struct OneVsRestModel {
  std::vector<std::string> labels;
  std::vector<LinearModel> models;  // models[i] separates labels[i] from the rest
};

/// Unbiased 64-bit draw in [0, n) for seeded, platform-independent shuffles.
inline std::uint64_t uniform_index(std::mt19937_64& rng, std::uint64_t n) {
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() - std::numeric_limits<std::uint64_t>::max() % n;
  std::uint64_t v = 0;
  do {
    v = rng();
  } while (v >= limit);
  return v % n;
}

template <class T>
void seeded_shuffle(std::vector<T>& v, std::mt19937_64& rng) {
  for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[uniform_index(rng, i)]);
}

// ---------------------------------------------------------------------------
// Class weights

inline std::map<std::string, double> balanced_class_weights(std::span<const std::string> labels) {
  std::map<std::string, std::size_t> counts;
  for (const auto& l : labels) ++counts[l];
  std::map<std::string, double> w;
  const double n = static_cast<double>(labels.size());
  const double k = static_cast<double>(counts.size());
  for (const auto& [l, c] : counts) w[l] = n / (k * static_cast<double>(c));
  return w;
}

inline std::vector<double> sample_weights_for(std::span<const std::string> labels, ClassWeighting weighting) {
  std::vector<double> s(labels.size(), 1.0);
  if (weighting == ClassWeighting::Uniform) return s;
  const auto w = balanced_class_weights(labels);
  for (std::size_t i = 0; i < labels.size(); ++i) s[i] = w.at(labels[i]);
  return s;
}

// ---------------------------------------------------------------------------
// Binary L1-SVM

/// Value of ||w||_1 + C * sum_i s_i * max(0, 1 - y_i (w.x_i + b))^2.
inline double svm_objective(const Matrix& X, std::span<const int> y, std::span<const double> s, double C,
                            std::span<const double> w, double b) {
  double reg = 0.0;
  for (double v : w) reg += std::abs(v);
  double loss = 0.0;
  for (std::size_t i = 0; i < X.rows; ++i) {
    double d = b;
    const auto r = X.row(i);
    for (std::size_t j = 0; j < X.cols; ++j) d += w[j] * r[j];
    const double m = 1.0 - y[i] * d;
    if (m > 0) loss += s[i] * m * m;
  }
  return reg + C * loss;
}

namespace detail {

struct Column {
  std::vector<std::uint32_t> index;
  std::vector<double> value;
};

class L1SvmSolver {
 public:
  L1SvmSolver(const Matrix& X, std::span<const int> y, std::span<const double> s, const TrainConfig& cfg)
      : X_(X), y_(y), s_(s), cfg_(cfg), cols_(X.cols + 1), w_(X.cols + 1, 0.0), margin_(X.rows, 1.0) {
    for (std::size_t i = 0; i < X.rows; ++i) {
      for (std::size_t j = 0; j < X.cols; ++j) {
        const double v = X(i, j);
        if (v != 0.0) {
          cols_[j].index.push_back(static_cast<std::uint32_t>(i));
          cols_[j].value.push_back(v);
        }
      }
      cols_.back().index.push_back(static_cast<std::uint32_t>(i));  // bias column
      cols_.back().value.push_back(1.0);
    }
  }

  TrainingInfo run() {
    TrainingInfo info;
    const std::size_t n = cols_.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::mt19937_64 rng(cfg_.seed);
    double f = objective();
    info.objective_trace.push_back(f);
    std::vector<double> saved_w;
    std::vector<double> saved_margin;
    for (int epoch = 0; epoch < cfg_.max_epochs; ++epoch) {
      saved_w = w_;
      saved_margin = margin_;
      seeded_shuffle(order, rng);
      for (std::size_t j : order) update(j, j + 1 == n);
      refresh_margins();
      const double f_new = objective();
      if (!(f_new <= f)) {
        // Rounding noise near the optimum; keep the better point and stop.
        w_ = saved_w;
        margin_ = saved_margin;
        info.converged = true;
        break;
      }
      info.epochs = epoch + 1;
      info.objective_trace.push_back(f_new);
      const double decrease = f - f_new;
      f = f_new;
      if (decrease <= cfg_.tolerance * std::max(f, 1e-300)) {
        info.converged = true;
        break;
      }
    }
    info.objective = f;
    return info;
  }

  std::vector<double> weights() const { return std::vector<double>(w_.begin(), w_.end() - 1); }
  double bias() const { return w_.back(); }

 private:
  double objective() const {
    double reg = 0.0;
    for (std::size_t j = 0; j + 1 < w_.size(); ++j) reg += std::abs(w_[j]);
    double loss = 0.0;
    for (std::size_t i = 0; i < margin_.size(); ++i)
      if (margin_[i] > 0) loss += s_[i] * margin_[i] * margin_[i];
    return reg + cfg_.C * loss;
  }

  void refresh_margins() {
    for (std::size_t i = 0; i < margin_.size(); ++i) {
      double d = w_.back();
      const auto r = X_.row(i);
      for (std::size_t j = 0; j < X_.cols; ++j) d += w_[j] * r[j];
      margin_[i] = 1.0 - y_[i] * d;
    }
  }

  // One Newton step on coordinate j with Armijo backtracking; the step is
  // dropped if no sufficient decrease is found.
  void update(std::size_t j, bool is_bias) {
    const Column& col = cols_[j];
    if (col.index.empty()) {
      w_[j] = 0.0;
      return;
    }
    const double C = cfg_.C;
    double G = 0.0;
    double H = 0.0;
    double loss_old = 0.0;
    for (std::size_t t = 0; t < col.index.size(); ++t) {
      const std::size_t i = col.index[t];
      const double m = margin_[i];
      if (m > 0) {
        const double sv = s_[i] * col.value[t];
        G -= 2.0 * C * y_[i] * sv * m;
        H += 2.0 * C * sv * col.value[t];
        loss_old += s_[i] * m * m;
      }
    }
    loss_old *= C;
    H = std::max(H, 1e-12);
    const double wj = w_[j];
    double d = 0.0;
    if (is_bias) {
      d = -G / H;
    } else {
      const double Gp = G + 1.0;
      const double Gn = G - 1.0;
      if (Gp < H * wj)
        d = -Gp / H;
      else if (Gn > H * wj)
        d = -Gn / H;
      else
        d = -wj;
    }
    if (std::abs(d) < 1e-14) return;
    const double reg_old = is_bias ? 0.0 : std::abs(wj);
    double delta = G * d + (is_bias ? 0.0 : std::abs(wj + d) - reg_old);
    constexpr double sigma = 0.01;
    for (int step = 0; step < 20; ++step) {
      double loss_new = 0.0;
      for (std::size_t t = 0; t < col.index.size(); ++t) {
        const std::size_t i = col.index[t];
        const double m = margin_[i] - y_[i] * d * col.value[t];
        if (m > 0) loss_new += s_[i] * m * m;
      }
      loss_new *= C;
      const double reg_new = is_bias ? 0.0 : std::abs(wj + d);
      if (reg_new - reg_old + loss_new - loss_old <= sigma * delta) {
        w_[j] = wj + d;
        for (std::size_t t = 0; t < col.index.size(); ++t) {
          const std::size_t i = col.index[t];
          margin_[i] -= y_[i] * d * col.value[t];
        }
        return;
      }
      d *= 0.5;
      delta = G * d + (is_bias ? 0.0 : std::abs(wj + d) - reg_old);
    }
  }

  const Matrix& X_;
  std::span<const int> y_;
  std::span<const double> s_;
  TrainConfig cfg_;
  std::vector<Column> cols_;
  std::vector<double> w_;  // last entry is the bias
  std::vector<double> margin_;
};

}  // namespace detail

/// Trains on y in {-1, +1}. sample_weights empty means all ones.
inline LinearModel train_l1_svm(const Matrix& X, std::span<const int> y, std::span<const double> sample_weights,
                                const TrainConfig& config, std::string positive_label = "+1",
                                std::string negative_label = "-1") {
  if (y.size() != X.rows) throw Error(ErrorCode::DimensionMismatch, "label count differs from row count");
  if (!sample_weights.empty() && sample_weights.size() != X.rows)
    throw Error(ErrorCode::DimensionMismatch, "sample weight count differs from row count");
  if (!(config.C > 0) || !(config.tolerance > 0) || config.max_epochs <= 0)
    throw Error(ErrorCode::InvalidArgument, "C, tolerance and max epochs must be positive");
  bool pos = false;
  bool neg = false;
  for (int v : y) {
    if (v == 1)
      pos = true;
    else if (v == -1)
      neg = true;
    else
      throw Error(ErrorCode::InvalidArgument, "binary labels must be -1 or +1");
  }
  if (!pos || !neg) throw Error(ErrorCode::SingleClassInput, "training data holds a single class");
  std::vector<double> ones;
  if (sample_weights.empty()) {
    ones.assign(X.rows, 1.0);
    sample_weights = ones;
  }
  detail::L1SvmSolver solver(X, y, sample_weights, config);
  LinearModel m;
  m.info = solver.run();
  m.weights = solver.weights();
  m.bias = solver.bias();
  m.positive_label = std::move(positive_label);
  m.negative_label = std::move(negative_label);
  return m;
}

/// Binary training from string labels; `positive` names the +1 class.
inline LinearModel train_binary(const Matrix& X, std::span<const std::string> labels, const std::string& positive,
                                const std::string& negative, const TrainConfig& config) {
  std::vector<int> y(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) y[i] = labels[i] == positive ? 1 : -1;
  const auto s = sample_weights_for(labels, config.weighting);
  return train_l1_svm(X, y, s, config, positive, negative);
}

inline std::vector<std::string> sorted_labels(std::span<const std::string> labels) {
  std::vector<std::string> out(labels.begin(), labels.end());
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

inline OneVsRestModel train_one_vs_rest(const Matrix& X, std::span<const std::string> labels, const TrainConfig& config) {
  OneVsRestModel m;
  m.labels = sorted_labels(labels);
  if (m.labels.size() < 2) throw Error(ErrorCode::SingleClassInput, "one-vs-rest needs at least two labels");
  for (const auto& l : m.labels) {
    std::vector<std::string> bin(labels.size());
    for (std::size_t i = 0; i < labels.size(); ++i) bin[i] = labels[i] == l ? l : "rest";
    m.models.push_back(train_binary(X, bin, l, "rest", config));
  }
  return m;
}

// ---------------------------------------------------------------------------
// Prediction

inline const std::string& predict(const LinearModel& m, std::span<const double> x) {
  return m.decision(x) >= 0.0 ? m.positive_label : m.negative_label;
}

inline std::vector<double> decision_values(const OneVsRestModel& m, std::span<const double> x) {
  std::vector<double> d;
  d.reserve(m.models.size());
  for (const auto& lm : m.models) d.push_back(lm.decision(x));
  return d;
}

inline std::size_t argmax_first(std::span<const double> v) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < v.size(); ++i)
    if (v[i] > v[best]) best = i;
  return best;
}

inline const std::string& predict(const OneVsRestModel& m, std::span<const double> x) {
  const auto d = decision_values(m, x);
  return m.labels[argmax_first(d)];
}

/// A trained task classifier: a single binary model for two labels or OvR.
using Classifier = std::variant<LinearModel, OneVsRestModel>;

inline Classifier train_classifier(const Matrix& X, std::span<const std::string> labels, const TrainConfig& config) {
  const auto ls = sorted_labels(labels);
  if (ls.size() < 2) throw Error(ErrorCode::SingleClassInput, "classifier needs at least two labels");
  if (ls.size() == 2) return train_binary(X, labels, ls[0], ls[1], config);
  return train_one_vs_rest(X, labels, config);
}

inline const std::string& predict(const Classifier& c, std::span<const double> x) {
  return std::visit([&](const auto& m) -> const std::string& { return predict(m, x); }, c);
}

/// Raw margins: one value for a binary model, one per label for OvR.
inline std::vector<double> decision_values(const Classifier& c, std::span<const double> x) {
  if (const auto* b = std::get_if<LinearModel>(&c)) return {b->decision(x)};
  return decision_values(std::get<OneVsRestModel>(c), x);
}

// ---------------------------------------------------------------------------
// Cross-validation

struct FoldAssignment {
  int k = 0;
  std::vector<int> fold;
};

inline FoldAssignment stratified_kfold(std::span<const std::string> labels, int k, std::uint64_t seed) {
  if (k < 2) throw Error(ErrorCode::InvalidArgument, "k must be at least 2");
  std::map<std::string, std::vector<std::size_t>> by_class;
  for (std::size_t i = 0; i < labels.size(); ++i) by_class[labels[i]].push_back(i);
  for (const auto& [l, idx] : by_class)
    if (idx.size() < static_cast<std::size_t>(k))
      throw Error(ErrorCode::ClassTooSmall, "class '" + l + "' has " + std::to_string(idx.size()) +
                                                " samples, fewer than k=" + std::to_string(k));
  FoldAssignment a;
  a.k = k;
  a.fold.assign(labels.size(), 0);
  std::mt19937_64 rng(seed);
  std::size_t next = 0;
  for (auto& [l, idx] : by_class) {
    seeded_shuffle(idx, rng);
    for (std::size_t i : idx) a.fold[i] = static_cast<int>(next++ % static_cast<std::size_t>(k));
  }
  return a;
}

struct CvResult {
  std::vector<double> fold_accuracies;
  double mean_accuracy = 0.0;
  std::size_t evaluated = 0;
};

/// Runs `train_eval(train_indices, test_indices)` per fold; it returns the
/// number of correctly classified test samples.
template <class TrainEval>
CvResult run_folds(const FoldAssignment& folds, TrainEval&& train_eval) {
  CvResult r;
  for (int f = 0; f < folds.k; ++f) {
    std::vector<std::size_t> train;
    std::vector<std::size_t> test;
    for (std::size_t i = 0; i < folds.fold.size(); ++i) (folds.fold[i] == f ? test : train).push_back(i);
    if (test.empty()) continue;
    const std::size_t correct = train_eval(std::as_const(train), std::as_const(test));
    r.fold_accuracies.push_back(static_cast<double>(correct) / static_cast<double>(test.size()));
    r.evaluated += test.size();
  }
  if (!r.fold_accuracies.empty())
    r.mean_accuracy = std::accumulate(r.fold_accuracies.begin(), r.fold_accuracies.end(), 0.0) /
                      static_cast<double>(r.fold_accuracies.size());
  return r;
}

inline Matrix select_rows(const Matrix& X, std::span<const std::size_t> idx) {
  Matrix out(idx.size(), X.cols);
  for (std::size_t r = 0; r < idx.size(); ++r)
    std::copy_n(X.data.begin() + static_cast<std::ptrdiff_t>(idx[r] * X.cols), X.cols,
                out.data.begin() + static_cast<std::ptrdiff_t>(r * X.cols));
  return out;
}

/// Cross-validation on a fixed feature matrix (no corpus-relative features).
inline CvResult cross_validate_matrix(const Matrix& X, std::span<const std::string> labels, const TrainConfig& config,
                                      int k, std::uint64_t seed) {
  const auto folds = stratified_kfold(labels, k, seed);
  return run_folds(folds, [&](const std::vector<std::size_t>& train, const std::vector<std::size_t>& test) {
    const Matrix Xt = select_rows(X, train);
    std::vector<std::string> yt;
    for (std::size_t i : train) yt.push_back(labels[i]);
    const Classifier c = train_classifier(Xt, yt, config);
    std::size_t correct = 0;
    for (std::size_t i : test) correct += predict(c, X.row(i)) == labels[i] ? 1 : 0;
    return correct;
  });
}

// ---------------------------------------------------------------------------
// Interpretation

struct WeightEntry {
  std::string feature;
  double weight = 0.0;
};

inline std::vector<WeightEntry> top_weights(const LinearModel& m, std::span<const std::string> names, std::size_t n) {
  if (names.size() != m.weights.size()) throw Error(ErrorCode::LayoutMismatch, "layout does not match model");
  std::vector<std::size_t> order(m.weights.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return std::abs(m.weights[a]) > std::abs(m.weights[b]); });
  n = std::min(n, order.size());
  std::vector<WeightEntry> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back({names[order[i]], m.weights[order[i]]});
  return out;
}

}  // namespace provenance
