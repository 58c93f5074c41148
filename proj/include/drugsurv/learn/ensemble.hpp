#pragma once

#include <Eigen/Dense>

#include <chrono>
#include <cmath>
#include <limits>
#include <vector>

#include "drugsurv/learn/artifact.hpp"
#include "drugsurv/learn/tree.hpp"
#include "drugsurv/random.hpp"

namespace drugsurv {

/// Random forest: each tree sees a bootstrap resample of the rows and
/// ceil(sqrt(d)) candidate features per split, drawn from its own RNG
/// stream derived from (seed, tree index). Prediction averages the trees'
/// normalized leaf histograms.
inline ModelArtifact fit_forest(const FeatureMatrix& m, const ModelConfig& cfg) {
  cfg.validate();
  detail::check_rows(m);
  const auto start = std::chrono::steady_clock::now();
  auto a = detail::blank_artifact(ModelKind::Forest, cfg, m);
  a.active = detail::active_labels(m.labels);

  const auto n = m.rows();
  const auto d = m.cols();
  const auto classes = label_indices(m.labels);
  std::size_t per_split = cfg.forest_features;
  if (per_split == 0)
    per_split = static_cast<std::size_t>(std::ceil(std::sqrt(static_cast<double>(d))));
  TreeBuildOptions opts{cfg.tree_max_depth, cfg.tree_min_leaf, cfg.tree_min_gain, per_split};

  ForestParams params;
  params.trees.reserve(cfg.forest_trees);
  for (std::size_t t = 0; t < cfg.forest_trees; ++t) {
    Rng rng = Rng::stream(cfg.seed, t);
    std::vector<double> weights(n, 0.0);
    if (cfg.forest_bootstrap) {
      for (std::size_t i = 0; i < n; ++i) weights[rng.index(n)] += 1.0;
    } else {
      weights.assign(n, 1.0);
    }
    TreeTargets targets{SplitCriterion::Gini, classes, {}, weights};
    params.trees.push_back(build_tree(m.x, targets, opts, &rng));
  }
  a.params = std::move(params);
  a.meta.iterations = static_cast<int>(cfg.forest_trees);
  a.meta.seconds = detail::seconds_since(start);
  return a;
}

namespace detail {

/// Mean multinomial deviance, -2/n * sum log p(y_i), over active labels.
inline double multinomial_deviance(const Eigen::MatrixXd& scores, const std::vector<std::size_t>& y,
                                   const std::array<bool, kNumClasses>& active) {
  double dev = 0.0;
  for (Eigen::Index i = 0; i < scores.rows(); ++i) {
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < kNumClasses; ++k)
      if (active[k]) mx = std::max(mx, scores(i, static_cast<Eigen::Index>(k)));
    double total = 0.0;
    for (std::size_t k = 0; k < kNumClasses; ++k)
      if (active[k]) total += std::exp(scores(i, static_cast<Eigen::Index>(k)) - mx);
    dev -= scores(i, static_cast<Eigen::Index>(y[static_cast<std::size_t>(i)])) - mx - std::log(total);
  }
  return 2.0 * dev / static_cast<double>(scores.rows());
}

inline void scale_leaves(Tree& t, double factor) {
  for (auto& node : t.nodes)
    if (node.is_leaf()) node.value *= factor;
}

}  // namespace detail

/// Multinomial-deviance gradient boosting. Scores start at the log class
/// priors; each round fits one regression tree per label to the residuals
/// (one-hot minus softmax probability) with Newton leaf values, scaled by
/// the shrinkage. A round whose update would raise the training deviance is
/// retried with half the step, so the deviance never increases.
inline ModelArtifact fit_gbt(const FeatureMatrix& m, const ModelConfig& cfg) {
  cfg.validate();
  detail::check_rows(m);
  const auto start = std::chrono::steady_clock::now();
  auto a = detail::blank_artifact(ModelKind::Gbt, cfg, m);
  a.active = detail::active_labels(m.labels);

  const auto n = m.rows();
  const auto y = label_indices(m.labels);
  std::array<double, kNumClasses> counts{};
  for (auto k : y) counts[k] += 1.0;
  GbtParams params;
  std::size_t num_active = 0;
  for (std::size_t k = 0; k < kNumClasses; ++k) {
    params.base_scores[k] = a.active[k] ? std::log(counts[k] / static_cast<double>(n)) : 0.0;
    num_active += a.active[k] ? 1 : 0;
  }

  Eigen::MatrixXd scores(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(kNumClasses));
  for (std::size_t k = 0; k < kNumClasses; ++k)
    scores.col(static_cast<Eigen::Index>(k)).setConstant(params.base_scores[k]);
  double deviance = detail::multinomial_deviance(scores, y, a.active);

  const std::vector<double> weights(n, 1.0);
  TreeBuildOptions opts{cfg.gbt_depth, cfg.tree_min_leaf, cfg.tree_min_gain, 0};
  const double leaf_scale = num_active > 1
                                ? static_cast<double>(num_active - 1) / static_cast<double>(num_active)
                                : 0.0;

  for (std::size_t round = 0; round < cfg.gbt_rounds && num_active > 1; ++round) {
    Eigen::MatrixXd prob(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(kNumClasses));
    for (Eigen::Index i = 0; i < static_cast<Eigen::Index>(n); ++i) {
      std::array<double, kNumClasses> s{};
      for (std::size_t k = 0; k < kNumClasses; ++k) s[k] = scores(i, static_cast<Eigen::Index>(k));
      const auto p = detail::softmax_active(s, a.active);
      for (std::size_t k = 0; k < kNumClasses; ++k) prob(i, static_cast<Eigen::Index>(k)) = p[k];
    }

    std::vector<Tree> trees(kNumClasses);
    Eigen::MatrixXd update = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n),
                                                   static_cast<Eigen::Index>(kNumClasses));
    for (std::size_t k = 0; k < kNumClasses; ++k) {
      if (!a.active[k]) continue;
      std::vector<double> residual(n);
      for (std::size_t i = 0; i < n; ++i)
        residual[i] = (y[i] == k ? 1.0 : 0.0) - prob(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k));
      auto newton_leaf = [&](std::span<const std::size_t> rows) {
        double num = 0.0, den = 0.0;
        for (auto r : rows) {
          num += residual[r];
          den += std::abs(residual[r]) * (1.0 - std::abs(residual[r]));
        }
        if (den < 1e-12) return 0.0;
        return leaf_scale * num / den;
      };
      TreeTargets targets{SplitCriterion::Variance, {}, residual, weights};
      trees[k] = build_tree(m.x, targets, opts, nullptr, newton_leaf);
      for (std::size_t i = 0; i < n; ++i)
        update(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) =
            trees[k].leaf_for(m.x.row(static_cast<Eigen::Index>(i))).value;
    }

    double step = cfg.gbt_shrinkage;
    double next_dev = deviance;
    for (int halving = 0; halving < 30; ++halving) {
      next_dev = detail::multinomial_deviance(scores + step * update, y, a.active);
      if (next_dev <= deviance) break;
      step *= 0.5;
    }
    if (next_dev > deviance) step = 0.0;
    for (auto& t : trees) detail::scale_leaves(t, step);
    if (step > 0.0) {
      scores += step * update;
      deviance = next_dev;
    }
    params.rounds.push_back(std::move(trees));
  }
  a.params = std::move(params);
  a.meta.iterations = static_cast<int>(std::get<GbtParams>(a.params).rounds.size());
  a.meta.objective = deviance;
  a.meta.seconds = detail::seconds_since(start);
  return a;
}

/// Training-set mean multinomial deviance after the first `rounds` rounds.
inline double gbt_training_deviance(const ModelArtifact& a, const FeatureMatrix& m,
                                    std::size_t rounds) {
  const auto& g = std::get<GbtParams>(a.params);
  Eigen::MatrixXd scores(m.x.rows(), static_cast<Eigen::Index>(kNumClasses));
  for (Eigen::Index i = 0; i < m.x.rows(); ++i) {
    const Eigen::RowVectorXd row = m.x.row(i);
    for (std::size_t k = 0; k < kNumClasses; ++k) {
      double s = g.base_scores[k];
      for (std::size_t r = 0; r < std::min(rounds, g.rounds.size()); ++r)
        if (a.active[k] && !g.rounds[r][k].nodes.empty()) s += g.rounds[r][k].leaf_for(row).value;
      scores(i, static_cast<Eigen::Index>(k)) = s;
    }
  }
  return detail::multinomial_deviance(scores, label_indices(m.labels), a.active);
}

}  // namespace drugsurv
