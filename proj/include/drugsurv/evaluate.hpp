#pragma once

// Cross-validation, confusion matrices, one-vs-rest ROC/AUC, regression
// metrics and Bland-Altman agreement.

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <span>
#include <vector>

#include "drugsurv/cohort.hpp"
#include "drugsurv/error.hpp"
#include "drugsurv/learn/io.hpp"
#include "drugsurv/preprocess.hpp"
#include "drugsurv/random.hpp"

namespace drugsurv {

// ---------------------------------------------------------------------------
// Folds

/// Seeded shuffle of 0..n-1, then round-robin assignment to k folds. Each
/// fold is returned in ascending index order.
inline std::vector<std::vector<std::size_t>> kfold_split(std::size_t n, std::size_t k,
                                                         std::uint64_t seed) {
  if (k < 2) throw Error(Errc::InvalidConfig, "k must be >= 2");
  if (n < k)
    throw Error(Errc::TooFewRows, std::to_string(n) + " rows cannot fill " + std::to_string(k) + " folds");
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(seed);
  rng.shuffle(order);
  std::vector<std::vector<std::size_t>> folds(k);
  for (std::size_t i = 0; i < n; ++i) folds[i % k].push_back(order[i]);
  for (auto& f : folds) std::sort(f.begin(), f.end());
  return folds;
}

/// Single train/test split with `test_size` rows in the test part.
struct HoldoutSplit {
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;
};

inline HoldoutSplit holdout_split(std::size_t n, std::size_t test_size, std::uint64_t seed) {
  if (test_size == 0 || test_size >= n)
    throw Error(Errc::TooFewRows, "holdout needs 0 < test size < " + std::to_string(n));
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(seed);
  rng.shuffle(order);
  HoldoutSplit s;
  s.test.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(test_size));
  s.train.assign(order.begin() + static_cast<std::ptrdiff_t>(test_size), order.end());
  std::sort(s.test.begin(), s.test.end());
  std::sort(s.train.begin(), s.train.end());
  return s;
}

// ---------------------------------------------------------------------------
// Confusion matrix

struct ClassCounts {
  std::int64_t tp = 0, fp = 0, fn = 0, tn = 0;
  double accuracy() const {
    return static_cast<double>(tp + tn) / static_cast<double>(tp + fp + fn + tn);
  }
};

/// counts[predicted][true].
struct ConfusionMatrix {
  std::array<std::array<std::int64_t, kNumClasses>, kNumClasses> counts{};

  void add(OutcomeLabel truth, OutcomeLabel predicted, std::int64_t n = 1) {
    counts[label_index(predicted)][label_index(truth)] += n;
  }
  std::int64_t total() const {
    std::int64_t t = 0;
    for (const auto& row : counts)
      for (auto v : row) t += v;
    return t;
  }
  std::int64_t trace() const {
    std::int64_t t = 0;
    for (std::size_t k = 0; k < kNumClasses; ++k) t += counts[k][k];
    return t;
  }
  double micro_accuracy() const { return static_cast<double>(trace()) / static_cast<double>(total()); }

  /// One-vs-rest collapse for one label.
  ClassCounts class_counts(OutcomeLabel label) const {
    const auto c = label_index(label);
    ClassCounts out;
    for (std::size_t p = 0; p < kNumClasses; ++p) {
      for (std::size_t t = 0; t < kNumClasses; ++t) {
        const auto v = counts[p][t];
        if (p == c && t == c) out.tp += v;
        else if (p == c) out.fp += v;
        else if (t == c) out.fn += v;
        else out.tn += v;
      }
    }
    return out;
  }

  ConfusionMatrix& operator+=(const ConfusionMatrix& o) {
    for (std::size_t p = 0; p < kNumClasses; ++p)
      for (std::size_t t = 0; t < kNumClasses; ++t) counts[p][t] += o.counts[p][t];
    return *this;
  }
  friend bool operator==(const ConfusionMatrix&, const ConfusionMatrix&) = default;
};

struct ConfusionResult {
  ConfusionMatrix matrix;
  double accuracy = 0.0;                             // trace / total
  std::array<double, kNumClasses> class_accuracy{};  // (TP+TN)/total per label
};

inline ConfusionResult confusion_and_accuracy(std::span<const OutcomeLabel> truth,
                                              std::span<const OutcomeLabel> predicted) {
  if (truth.size() != predicted.size())
    throw Error(Errc::LengthMismatch, std::to_string(truth.size()) + " true labels vs " +
                                          std::to_string(predicted.size()) + " predictions");
  if (truth.empty()) throw Error(Errc::Empty, "no labels to evaluate");
  ConfusionResult r;
  for (std::size_t i = 0; i < truth.size(); ++i) r.matrix.add(truth[i], predicted[i]);
  r.accuracy = r.matrix.micro_accuracy();
  for (std::size_t k = 0; k < kNumClasses; ++k)
    r.class_accuracy[k] = r.matrix.class_counts(kAllLabels[k]).accuracy();
  return r;
}

/// Label vectors realizing a given matrix, in row-major (predicted, true)
/// order. Lets a reference matrix be fed back through confusion_and_accuracy.
inline std::pair<std::vector<OutcomeLabel>, std::vector<OutcomeLabel>> expand_confusion(
    const ConfusionMatrix& m) {
  std::vector<OutcomeLabel> truth, predicted;
  for (std::size_t p = 0; p < kNumClasses; ++p) {
    for (std::size_t t = 0; t < kNumClasses; ++t) {
      if (m.counts[p][t] < 0) throw Error(Errc::RangeViolation, "negative confusion count");
      for (std::int64_t c = 0; c < m.counts[p][t]; ++c) {
        truth.push_back(kAllLabels[t]);
        predicted.push_back(kAllLabels[p]);
      }
    }
  }
  return {truth, predicted};
}

// ---------------------------------------------------------------------------
// ROC

struct RocCurve {
  std::optional<RocGroup> group;
  std::vector<std::pair<double, double>> points;  // (fpr, tpr), (0,0) .. (1,1)
  std::vector<double> thresholds;                 // score at each point after the first
  double auc = 0.0;
  std::size_t positives = 0;
  std::size_t negatives = 0;
};

/// Binary ROC curve. Equal scores share one threshold, so the trapezoid
/// area equals the Mann-Whitney statistic with ties credited one half.
inline RocCurve roc_curve(std::span<const double> scores, const std::vector<bool>& positive) {
  if (scores.size() != positive.size())
    throw Error(Errc::LengthMismatch, "scores and labels differ in length");
  if (scores.empty()) throw Error(Errc::Empty, "no scores");
  RocCurve c;
  for (bool p : positive) (p ? c.positives : c.negatives) += 1;
  if (c.positives == 0 || c.negatives == 0)
    throw Error(Errc::OneClassOnly, "ROC needs both positives and negatives (" +
                                        std::to_string(c.positives) + " positive, " +
                                        std::to_string(c.negatives) + " negative)");
  for (double s : scores)
    if (!std::isfinite(s)) throw Error(Errc::RangeViolation, "non-finite score");

  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });

  const double p = static_cast<double>(c.positives);
  const double n = static_cast<double>(c.negatives);
  std::int64_t tp = 0, fp = 0;
  std::int64_t area2 = 0;  // twice the area in (count x count) units
  c.points.emplace_back(0.0, 0.0);
  for (std::size_t i = 0; i < order.size();) {
    const double threshold = scores[order[i]];
    const std::int64_t tp_prev = tp, fp_prev = fp;
    while (i < order.size() && scores[order[i]] == threshold) {
      (positive[order[i]] ? tp : fp) += 1;
      ++i;
    }
    area2 += (fp - fp_prev) * (tp + tp_prev);
    c.points.emplace_back(static_cast<double>(fp) / n, static_cast<double>(tp) / p);
    c.thresholds.push_back(threshold);
  }
  c.auc = static_cast<double>(area2) / (2.0 * p * n);
  return c;
}

/// One-vs-rest ROC for a discontinuation group: positives are rows whose
/// true label is in the group, scored by the summed probability of the
/// group's labels.
inline RocCurve roc_auc_ovr(std::span<const OutcomeLabel> truth, const Eigen::MatrixXd& scores,
                            RocGroup group) {
  if (static_cast<std::size_t>(scores.rows()) != truth.size())
    throw Error(Errc::LengthMismatch, "score matrix rows differ from label count");
  if (scores.cols() != static_cast<Eigen::Index>(kNumClasses))
    throw Error(Errc::LengthMismatch, "score matrix must have 6 columns");
  std::vector<double> s(truth.size(), 0.0);
  std::vector<bool> positive(truth.size());
  for (std::size_t i = 0; i < truth.size(); ++i) {
    positive[i] = in_group(truth[i], group);
    for (std::size_t k = 0; k < kNumClasses; ++k)
      if (in_group(kAllLabels[k], group)) s[i] += scores(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k));
  }
  auto c = roc_curve(s, positive);
  c.group = group;
  return c;
}

// ---------------------------------------------------------------------------
// Regression metrics and agreement

namespace detail {

inline void check_pairs(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size())
    throw Error(Errc::LengthMismatch, std::to_string(a.size()) + " actual vs " +
                                          std::to_string(b.size()) + " predicted values");
  if (a.empty()) throw Error(Errc::Empty, "no values");
  if (a.size() < 2) throw Error(Errc::TooFewRows, "need at least 2 pairs");
}

inline double mean(std::span<const double> v) {
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

inline double sample_sd(std::span<const double> v) {
  if (v.size() < 2) return 0.0;
  const double m = mean(v);
  double ss = 0.0;
  for (double x : v) ss += (x - m) * (x - m);
  return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

}  // namespace detail

inline double mean_absolute_error(std::span<const double> actual, std::span<const double> predicted) {
  detail::check_pairs(actual, predicted);
  double s = 0.0;
  for (std::size_t i = 0; i < actual.size(); ++i) s += std::abs(actual[i] - predicted[i]);
  return s / static_cast<double>(actual.size());
}

inline double pearson_r(std::span<const double> a, std::span<const double> b) {
  detail::check_pairs(a, b);
  const double ma = detail::mean(a), mb = detail::mean(b);
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  if (!(saa > 0.0) || !(sbb > 0.0)) throw Error(Errc::ZeroVariance, "Pearson r needs variance in both series");
  return std::clamp(sab / std::sqrt(saa * sbb), -1.0, 1.0);
}

struct RegressionMetrics {
  double mae = 0.0;
  double pearson = 0.0;
};

inline RegressionMetrics regression_metrics(std::span<const double> actual,
                                            std::span<const double> predicted) {
  return {mean_absolute_error(actual, predicted), pearson_r(actual, predicted)};
}

struct AgreementReport {
  std::vector<double> means;        // (actual + predicted) / 2
  std::vector<double> differences;  // actual - predicted
  double bias = 0.0;
  double sd = 0.0;
  double lower = 0.0;
  double upper = 0.0;
  double mae = 0.0;
  std::optional<double> pearson;  // absent when either series is constant
};

inline constexpr double kAgreementMultiplier = 1.96;

inline AgreementReport bland_altman(std::span<const double> actual, std::span<const double> predicted) {
  detail::check_pairs(actual, predicted);
  AgreementReport r;
  r.means.reserve(actual.size());
  r.differences.reserve(actual.size());
  for (std::size_t i = 0; i < actual.size(); ++i) {
    r.means.push_back((actual[i] + predicted[i]) / 2.0);
    r.differences.push_back(actual[i] - predicted[i]);
  }
  r.bias = detail::mean(r.differences);
  r.sd = detail::sample_sd(r.differences);
  r.lower = r.bias - kAgreementMultiplier * r.sd;
  r.upper = r.bias + kAgreementMultiplier * r.sd;
  r.mae = mean_absolute_error(actual, predicted);
  try {
    r.pearson = pearson_r(actual, predicted);
  } catch (const Error& e) {
    if (e.code() != Errc::ZeroVariance) throw;
  }
  return r;
}

// ---------------------------------------------------------------------------
// Cross-validation

namespace detail {

template <typename T>
std::vector<T> gather(std::span<const T> v, const std::vector<std::size_t>& idx) {
  std::vector<T> out;
  out.reserve(idx.size());
  for (auto i : idx) out.push_back(v[i]);
  return out;
}

inline std::vector<std::size_t> complement(std::size_t n, const std::vector<std::size_t>& part) {
  std::vector<char> in(n, 0);
  for (auto i : part) in[i] = 1;
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < n; ++i)
    if (!in[i]) out.push_back(i);
  return out;
}

[[noreturn]] inline void rethrow_in_fold(const Error& e, std::size_t fold) {
  throw Error(e.code(), "fold " + std::to_string(fold + 1) + ": " + e.detail());
}

}  // namespace detail

struct CvOptions {
  std::size_t k = 5;
  std::uint64_t seed = 0;
  bool keep_models = false;
};

struct CvReport {
  ModelKind kind = ModelKind::Glm;
  SchemaMode mode = SchemaMode::Baseline;
  std::vector<double> fold_accuracies;
  double mean_accuracy = 0.0;
  double sd_accuracy = 0.0;  // sample SD across folds
  double micro_accuracy = 0.0;
  ConfusionMatrix pooled;
  double seconds = 0.0;  // fit + predict, summed over folds
  std::vector<std::vector<std::size_t>> folds;
  Eigen::MatrixXd probabilities;  // out-of-fold, n x 6
  std::vector<OutcomeLabel> truth;
  std::vector<OutcomeLabel> predicted;
  std::vector<ModelArtifact> models;  // per fold when keep_models
};

/// k-fold cross-validation. Each fold derives its schema from its own
/// training rows, fits, and scores the held-out rows.
inline CvReport cross_validate(std::span<const PatientRecord> records, SchemaMode mode,
                               const ModelConfig& cfg, const CvOptions& opts) {
  if (!is_classifier(cfg.kind)) throw Error(Errc::WrongKind, "cross_validate needs a classifier");
  if (records.empty()) throw Error(Errc::EmptyCohort, "no records");
  cfg.validate();
  const auto n = records.size();
  CvReport r;
  r.kind = cfg.kind;
  r.mode = mode;
  r.folds = kfold_split(n, opts.k, opts.seed);
  r.probabilities = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(kNumClasses));
  r.predicted.assign(n, OutcomeLabel::Continue);
  r.truth.reserve(n);
  for (const auto& rec : records) r.truth.push_back(rec.outcome);

  for (std::size_t f = 0; f < r.folds.size(); ++f) {
    const auto& test_idx = r.folds[f];
    const auto train_idx = detail::complement(n, test_idx);
    const auto train = detail::gather(records, train_idx);
    const auto test = detail::gather(records, test_idx);
    try {
      const auto start = std::chrono::steady_clock::now();
      const auto schema = derive_schema(train, mode);
      const auto train_m = encode(train, schema);
      auto model = fit_model(train_m, cfg);
      const auto test_m = encode(test, schema);
      const auto proba = predict_proba(model, test_m);
      r.seconds += detail::seconds_since(start);

      std::vector<OutcomeLabel> fold_truth, fold_pred;
      for (std::size_t i = 0; i < test_idx.size(); ++i) {
        std::array<double, kNumClasses> p{};
        for (std::size_t k = 0; k < kNumClasses; ++k) {
          p[k] = proba(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k));
          r.probabilities(static_cast<Eigen::Index>(test_idx[i]), static_cast<Eigen::Index>(k)) = p[k];
        }
        r.predicted[test_idx[i]] = argmax_label(p);
        fold_truth.push_back(test[i].outcome);
        fold_pred.push_back(r.predicted[test_idx[i]]);
      }
      const auto cm = confusion_and_accuracy(fold_truth, fold_pred);
      r.fold_accuracies.push_back(cm.accuracy);
      r.pooled += cm.matrix;
      if (opts.keep_models) {
        model.schema = schema;
        r.models.push_back(std::move(model));
      }
    } catch (const Error& e) {
      detail::rethrow_in_fold(e, f);
    }
  }
  r.mean_accuracy = detail::mean(r.fold_accuracies);
  r.sd_accuracy = detail::sample_sd(r.fold_accuracies);
  r.micro_accuracy = r.pooled.micro_accuracy();
  return r;
}

inline CvReport cross_validate(std::span<const PatientRecord> records, SchemaMode mode,
                               const ModelConfig& cfg, std::size_t k, std::uint64_t seed) {
  return cross_validate(records, mode, cfg, CvOptions{k, seed, false});
}

/// Single split: fit on `split.train`, report accuracy and confusion on
/// `split.test`.
struct HoldoutReport {
  ConfusionResult result;
  Eigen::MatrixXd probabilities;
  std::vector<OutcomeLabel> truth;
  double seconds = 0.0;
};

inline HoldoutReport evaluate_holdout(std::span<const PatientRecord> records, SchemaMode mode,
                                      const ModelConfig& cfg, const HoldoutSplit& split) {
  const auto train = detail::gather(records, split.train);
  const auto test = detail::gather(records, split.test);
  HoldoutReport r;
  const auto start = std::chrono::steady_clock::now();
  const auto schema = derive_schema(train, mode);
  const auto model = fit_model(encode(train, schema), cfg);
  const auto test_m = encode(test, schema);
  r.probabilities = predict_proba(model, test_m);
  r.seconds = detail::seconds_since(start);
  std::vector<OutcomeLabel> pred;
  for (Eigen::Index i = 0; i < r.probabilities.rows(); ++i) {
    std::array<double, kNumClasses> p{};
    for (std::size_t k = 0; k < kNumClasses; ++k) p[k] = r.probabilities(i, static_cast<Eigen::Index>(k));
    pred.push_back(argmax_label(p));
  }
  r.truth = test_m.labels;
  r.result = confusion_and_accuracy(r.truth, pred);
  return r;
}

/// Out-of-fold treatment-length predictions (baseline schema per fold) and
/// their agreement with the observed lengths.
struct LengthCvReport {
  std::vector<std::vector<std::size_t>> folds;
  std::vector<double> actual;
  std::vector<double> predicted;
  AgreementReport agreement;
  double seconds = 0.0;
};

inline LengthCvReport cross_validate_length(std::span<const PatientRecord> records, const ModelConfig& cfg,
                                            const CvOptions& opts) {
  if (cfg.kind != ModelKind::LengthGlm) throw Error(Errc::WrongKind, "length evaluation needs length_glm");
  if (records.empty()) throw Error(Errc::EmptyCohort, "no records");
  const auto n = records.size();
  LengthCvReport r;
  r.folds = kfold_split(n, opts.k, opts.seed);
  r.predicted.assign(n, 0.0);
  for (const auto& rec : records) r.actual.push_back(rec.treatment_length_months);
  for (std::size_t f = 0; f < r.folds.size(); ++f) {
    const auto& test_idx = r.folds[f];
    const auto train = detail::gather(records, detail::complement(n, test_idx));
    const auto test = detail::gather(records, test_idx);
    try {
      const auto start = std::chrono::steady_clock::now();
      const auto schema = derive_schema(train, SchemaMode::Baseline);
      const auto model = fit_model(encode(train, schema), cfg);
      const auto pred = predict_lengths(model, encode(test, schema));
      r.seconds += detail::seconds_since(start);
      for (std::size_t i = 0; i < test_idx.size(); ++i) r.predicted[test_idx[i]] = pred[i];
    } catch (const Error& e) {
      detail::rethrow_in_fold(e, f);
    }
  }
  r.agreement = bland_altman(r.actual, r.predicted);
  return r;
}

}  // namespace drugsurv
