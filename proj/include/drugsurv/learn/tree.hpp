#pragma once

// CART induction shared by the decision tree, random forest (Gini) and
// gradient boosting (variance) learners.

#include <Eigen/Dense>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <numeric>
#include <optional>
#include <span>
#include <vector>

#include "drugsurv/learn/artifact.hpp"
#include "drugsurv/learn/linear.hpp"
#include "drugsurv/random.hpp"

namespace drugsurv {

struct TreeBuildOptions {
  int max_depth = 5;
  std::size_t min_leaf = 10;   // minimum weighted samples per child
  double min_gain = 1e-7;
  std::size_t features_per_split = 0;  // 0 or >= d: every feature
};

enum class SplitCriterion : std::uint8_t { Gini, Variance };

/// Training targets for one tree: class indices (Gini) or real values
/// (Variance), plus per-row multiplicities (bootstrap counts; 0 excludes).
struct TreeTargets {
  SplitCriterion criterion = SplitCriterion::Gini;
  std::span<const std::size_t> classes;
  std::span<const double> values;
  std::span<const double> weights;
};

/// Computes a regression leaf's value from the rows that reached it.
using LeafValueFn = std::function<double(std::span<const std::size_t>)>;

namespace detail {

struct NodeStats {
  double weight = 0.0;
  std::array<double, kNumClasses> counts{};
  double sum = 0.0;
  double sum_sq = 0.0;

  void add(const TreeTargets& t, std::size_t row) {
    const double w = t.weights[row];
    weight += w;
    if (t.criterion == SplitCriterion::Gini) {
      counts[t.classes[row]] += w;
    } else {
      sum += w * t.values[row];
      sum_sq += w * t.values[row] * t.values[row];
    }
  }

  /// Gini impurity, or mean squared deviation for the variance criterion.
  double impurity(SplitCriterion c) const {
    if (weight <= 0.0) return 0.0;
    if (c == SplitCriterion::Gini) {
      double s = 0.0;
      for (double v : counts) s += (v / weight) * (v / weight);
      return std::max(0.0, 1.0 - s);
    }
    return std::max(0.0, sum_sq / weight - (sum / weight) * (sum / weight));
  }
};

struct SplitChoice {
  int feature = -1;
  double threshold = 0.0;
  double gain = -1.0;
};

class TreeBuilder {
 public:
  TreeBuilder(const Eigen::MatrixXd& x, const TreeTargets& targets, const TreeBuildOptions& opts,
              Rng* rng, LeafValueFn leaf_value)
      : x_(x), t_(targets), opts_(opts), rng_(rng), leaf_value_(std::move(leaf_value)) {}

  Tree build() {
    const auto d = static_cast<std::size_t>(x_.cols());
    std::vector<std::vector<std::size_t>> sorted(d);
    std::vector<std::size_t> rows;
    for (std::size_t i = 0; i < static_cast<std::size_t>(x_.rows()); ++i)
      if (t_.weights[i] > 0.0) rows.push_back(i);
    for (std::size_t f = 0; f < d; ++f) {
      sorted[f] = rows;
      std::stable_sort(sorted[f].begin(), sorted[f].end(), [&](std::size_t a, std::size_t b) {
        return x_(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(f)) <
               x_(static_cast<Eigen::Index>(b), static_cast<Eigen::Index>(f));
      });
    }
    tree_.nodes.clear();
    grow(rows, sorted, 0);
    return std::move(tree_);
  }

 private:
  double value(std::size_t row, std::size_t f) const {
    return x_(static_cast<Eigen::Index>(row), static_cast<Eigen::Index>(f));
  }

  std::vector<std::size_t> candidate_features() {
    const auto d = static_cast<std::size_t>(x_.cols());
    if (opts_.features_per_split == 0 || opts_.features_per_split >= d || rng_ == nullptr) {
      std::vector<std::size_t> all(d);
      std::iota(all.begin(), all.end(), std::size_t{0});
      return all;
    }
    return rng_->sample_without_replacement(d, opts_.features_per_split);
  }

  SplitChoice best_split(const std::vector<std::vector<std::size_t>>& sorted, const NodeStats& node) {
    SplitChoice best;
    const double parent = node.impurity(t_.criterion);
    for (std::size_t f : candidate_features()) {
      const auto& order = sorted[f];
      NodeStats left;
      for (std::size_t pos = 0; pos + 1 < order.size(); ++pos) {
        left.add(t_, order[pos]);
        const double a = value(order[pos], f);
        const double b = value(order[pos + 1], f);
        if (!(a < b)) continue;
        const double right_weight = node.weight - left.weight;
        if (left.weight < static_cast<double>(opts_.min_leaf) ||
            right_weight < static_cast<double>(opts_.min_leaf))
          continue;
        NodeStats right;
        right.weight = right_weight;
        for (std::size_t k = 0; k < kNumClasses; ++k) right.counts[k] = node.counts[k] - left.counts[k];
        right.sum = node.sum - left.sum;
        right.sum_sq = node.sum_sq - left.sum_sq;
        const double children = (left.weight / node.weight) * left.impurity(t_.criterion) +
                                (right.weight / node.weight) * right.impurity(t_.criterion);
        const double gain = parent - children;
        if (gain > best.gain) {
          double mid = a + (b - a) / 2.0;
          if (!(mid < b)) mid = a;
          best = {static_cast<int>(f), mid, gain};
        }
      }
    }
    return best;
  }

  int grow(const std::vector<std::size_t>& rows, const std::vector<std::vector<std::size_t>>& sorted,
           int depth) {
    NodeStats stats;
    for (std::size_t r : rows) stats.add(t_, r);

    const int index = static_cast<int>(tree_.nodes.size());
    tree_.nodes.emplace_back();
    tree_.nodes[static_cast<std::size_t>(index)].histogram = stats.counts;

    const bool impure = stats.impurity(t_.criterion) > 0.0;
    std::optional<SplitChoice> split;
    if (depth < opts_.max_depth && impure) {
      auto s = best_split(sorted, stats);
      if (s.feature >= 0 && s.gain >= opts_.min_gain) split = s;
    }
    if (!split) {
      if (t_.criterion == SplitCriterion::Variance) {
        tree_.nodes[static_cast<std::size_t>(index)].value =
            leaf_value_ ? leaf_value_(rows) : (stats.weight > 0 ? stats.sum / stats.weight : 0.0);
      }
      return index;
    }

    const auto f = static_cast<std::size_t>(split->feature);
    std::vector<char> goes_left(static_cast<std::size_t>(x_.rows()), 0);
    std::vector<std::size_t> left_rows, right_rows;
    for (std::size_t r : rows) {
      if (value(r, f) <= split->threshold) {
        goes_left[r] = 1;
        left_rows.push_back(r);
      } else {
        right_rows.push_back(r);
      }
    }
    std::vector<std::vector<std::size_t>> left_sorted(sorted.size()), right_sorted(sorted.size());
    for (std::size_t g = 0; g < sorted.size(); ++g) {
      left_sorted[g].reserve(left_rows.size());
      right_sorted[g].reserve(right_rows.size());
      for (std::size_t r : sorted[g]) (goes_left[r] ? left_sorted[g] : right_sorted[g]).push_back(r);
    }

    auto& node = tree_.nodes[static_cast<std::size_t>(index)];
    node.feature = split->feature;
    node.threshold = split->threshold;
    const int left = grow(left_rows, left_sorted, depth + 1);
    const int right = grow(right_rows, right_sorted, depth + 1);
    tree_.nodes[static_cast<std::size_t>(index)].left = left;
    tree_.nodes[static_cast<std::size_t>(index)].right = right;
    return index;
  }

  const Eigen::MatrixXd& x_;
  TreeTargets t_;
  TreeBuildOptions opts_;
  Rng* rng_;
  LeafValueFn leaf_value_;
  Tree tree_;
};

}  // namespace detail

/// Grows one CART tree. Splits use midpoints between consecutive distinct
/// values; among equal gains the lowest feature index, then the lowest
/// threshold, wins. A node splits only while depth < max_depth, it is
/// impure, both children keep min_leaf weight and the gain is >= min_gain.
inline Tree build_tree(const Eigen::MatrixXd& x, const TreeTargets& targets,
                       const TreeBuildOptions& opts, Rng* rng = nullptr,
                       LeafValueFn leaf_value = {}) {
  return detail::TreeBuilder(x, targets, opts, rng, std::move(leaf_value)).build();
}

inline std::vector<std::size_t> label_indices(const std::vector<OutcomeLabel>& labels) {
  std::vector<std::size_t> out;
  out.reserve(labels.size());
  for (auto l : labels) out.push_back(label_index(l));
  return out;
}

/// Single CART classification tree with Gini impurity; leaves keep class
/// histograms.
inline ModelArtifact fit_tree(const FeatureMatrix& m, const ModelConfig& cfg) {
  cfg.validate();
  detail::check_rows(m);
  const auto start = std::chrono::steady_clock::now();
  auto a = detail::blank_artifact(ModelKind::Tree, cfg, m);
  a.active = detail::active_labels(m.labels);

  const auto classes = label_indices(m.labels);
  const std::vector<double> weights(m.rows(), 1.0);
  TreeTargets targets{SplitCriterion::Gini, classes, {}, weights};
  TreeBuildOptions opts{cfg.tree_max_depth, cfg.tree_min_leaf, cfg.tree_min_gain, 0};
  a.params = TreeParams{build_tree(m.x, targets, opts)};
  a.meta.iterations = 1;
  a.meta.seconds = detail::seconds_since(start);
  return a;
}

}  // namespace drugsurv
