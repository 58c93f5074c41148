#pragma once

// Model configuration, the trained-artifact representation shared by every
// learner, and prediction.

#include <Eigen/Dense>

#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "drugsurv/cohort.hpp"
#include "drugsurv/error.hpp"
#include "drugsurv/preprocess.hpp"

namespace drugsurv {

enum class ModelKind : std::uint8_t { Glm, Logreg, Tree, Forest, Gbt, LengthGlm };

inline constexpr std::array<std::string_view, 6> kModelKindNames = {
    "glm", "logreg", "tree", "forest", "gbt", "length_glm"};

inline std::string_view kind_name(ModelKind k) { return kModelKindNames[static_cast<std::size_t>(k)]; }

inline ModelKind parse_kind(std::string_view s) {
  for (std::size_t i = 0; i < kModelKindNames.size(); ++i)
    if (kModelKindNames[i] == s) return static_cast<ModelKind>(i);
  throw Error(Errc::InvalidConfig, "unknown model kind '" + std::string(s) + "'");
}

inline bool is_classifier(ModelKind k) { return k != ModelKind::LengthGlm; }

struct ModelConfig {
  ModelKind kind = ModelKind::Glm;
  double lambda = 1e-4;
  int irls_max_iterations = 100;
  double irls_tolerance = 1e-8;
  int tree_max_depth = 5;
  std::size_t tree_min_leaf = 10;
  double tree_min_gain = 1e-7;
  std::size_t forest_trees = 200;
  std::size_t forest_features = 0;  // 0: ceil(sqrt(d))
  bool forest_bootstrap = true;
  std::size_t gbt_rounds = 200;
  double gbt_shrinkage = 0.1;
  int gbt_depth = 3;
  std::uint64_t seed = 0;

  void validate() const {
    auto fail = [](const std::string& m) { throw Error(Errc::InvalidConfig, m); };
    if (!(lambda >= 0.0) || !std::isfinite(lambda)) fail("lambda must be >= 0");
    if (irls_max_iterations < 1) fail("IRLS max iterations must be >= 1");
    if (!(irls_tolerance > 0.0)) fail("IRLS tolerance must be > 0");
    if (tree_max_depth < 0) fail("tree max depth must be >= 0");
    if (tree_min_leaf < 1) fail("tree min leaf must be >= 1");
    if (!(tree_min_gain >= 0.0)) fail("tree min gain must be >= 0");
    if (forest_trees < 1) fail("forest needs at least one tree");
    if (!(gbt_shrinkage >= 0.0 && gbt_shrinkage <= 1.0)) fail("gbt shrinkage must be in [0, 1]");
    if (gbt_depth < 0) fail("gbt depth must be >= 0");
  }
};

// ---------------------------------------------------------------------------
// Trees

struct TreeNode {
  int feature = -1;  // -1 for leaves
  double threshold = 0.0;
  int left = -1;
  int right = -1;
  std::array<double, kNumClasses> histogram{};  // weighted class counts
  double value = 0.0;                           // regression leaves

  bool is_leaf() const { return feature < 0; }
  friend bool operator==(const TreeNode&, const TreeNode&) = default;
};

/// Nodes in pre-order: root at 0, each left subtree before its right one.
struct Tree {
  std::vector<TreeNode> nodes;

  template <typename Row>
  const TreeNode& leaf_for(const Row& x) const {
    std::size_t i = 0;
    while (!nodes[i].is_leaf())
      i = static_cast<std::size_t>(x[nodes[i].feature] <= nodes[i].threshold ? nodes[i].left
                                                                              : nodes[i].right);
    return nodes[i];
  }

  std::size_t depth() const {
    std::size_t best = 0;
    std::vector<std::pair<std::size_t, std::size_t>> stack{{0, 0}};
    while (!stack.empty()) {
      auto [i, d] = stack.back();
      stack.pop_back();
      best = std::max(best, d);
      if (!nodes[i].is_leaf()) {
        stack.push_back({static_cast<std::size_t>(nodes[i].left), d + 1});
        stack.push_back({static_cast<std::size_t>(nodes[i].right), d + 1});
      }
    }
    return best;
  }

  friend bool operator==(const Tree&, const Tree&) = default;
};

// ---------------------------------------------------------------------------
// Artifact

/// Coefficients for glm / logreg: one row per label, column 0 the intercept.
struct LinearParams {
  Eigen::MatrixXd coefficients;
};

struct TreeParams {
  Tree tree;
};

struct ForestParams {
  std::vector<Tree> trees;
};

struct GbtParams {
  std::array<double, kNumClasses> base_scores{};
  std::vector<std::vector<Tree>> rounds;  // rounds x labels; empty tree for inactive labels
};

/// Length regressor: intercept followed by one weight per column.
struct LengthParams {
  Eigen::VectorXd coefficients;
};

using ModelParams = std::variant<LinearParams, TreeParams, ForestParams, GbtParams, LengthParams>;

struct TrainingMeta {
  int iterations = 0;
  double objective = 0.0;  // penalized log-likelihood, deviance or RSS
  double seconds = 0.0;
  double lambda_used = 0.0;
  std::vector<std::string> flags;  // e.g. "NonConvergence", "SingularSystem"

  bool has_flag(std::string_view f) const {
    return std::find(flags.begin(), flags.end(), f) != flags.end();
  }
};

struct ModelArtifact {
  ModelKind kind = ModelKind::Glm;
  ModelConfig config;
  std::string fingerprint;
  std::size_t width = 0;                        // encoded columns expected
  std::array<bool, kNumClasses> active{};       // labels seen in training
  ModelParams params;
  TrainingMeta meta;
  std::optional<FeatureSchema> schema;          // attached by the pipeline
};

struct Prediction {
  std::array<double, kNumClasses> probabilities{};
  OutcomeLabel predicted = OutcomeLabel::Continue;
};

/// First maximal entry; exact ties resolve to the lower label index.
inline OutcomeLabel argmax_label(const std::array<double, kNumClasses>& p) {
  std::size_t best = 0;
  for (std::size_t k = 1; k < kNumClasses; ++k)
    if (p[k] > p[best]) best = k;
  return kAllLabels[best];
}

namespace detail {

inline void normalize_active(std::array<double, kNumClasses>& p,
                             const std::array<bool, kNumClasses>& active) {
  double total = 0.0;
  for (std::size_t k = 0; k < kNumClasses; ++k) {
    if (!active[k]) p[k] = 0.0;
    total += p[k];
  }
  if (!(total > 0.0)) {
    std::size_t count = 0;
    for (bool a : active) count += a ? 1 : 0;
    for (std::size_t k = 0; k < kNumClasses; ++k)
      p[k] = active[k] ? 1.0 / static_cast<double>(count) : 0.0;
    return;
  }
  for (auto& v : p) v /= total;
}

/// Softmax over active labels only; inactive labels get probability 0.
inline std::array<double, kNumClasses> softmax_active(const std::array<double, kNumClasses>& s,
                                                      const std::array<bool, kNumClasses>& active) {
  double mx = -std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < kNumClasses; ++k)
    if (active[k]) mx = std::max(mx, s[k]);
  std::array<double, kNumClasses> p{};
  double total = 0.0;
  for (std::size_t k = 0; k < kNumClasses; ++k) {
    if (!active[k]) continue;
    p[k] = std::exp(s[k] - mx);
    total += p[k];
  }
  for (auto& v : p) v /= total;
  return p;
}

inline std::array<double, kNumClasses> leaf_distribution(const TreeNode& leaf,
                                                         const std::array<bool, kNumClasses>& active) {
  std::array<double, kNumClasses> p = leaf.histogram;
  normalize_active(p, active);
  return p;
}

inline double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

}  // namespace detail

/// Scores one encoded row without fingerprint checks.
template <typename Row>
std::array<double, kNumClasses> predict_proba_unchecked(const ModelArtifact& a, const Row& x) {
  std::array<double, kNumClasses> p{};
  switch (a.kind) {
    case ModelKind::Glm: {
      const auto& b = std::get<LinearParams>(a.params).coefficients;
      std::array<double, kNumClasses> s{};
      for (std::size_t k = 0; k < kNumClasses; ++k) {
        double z = b(static_cast<Eigen::Index>(k), 0);
        for (Eigen::Index j = 0; j < static_cast<Eigen::Index>(a.width); ++j)
          z += b(static_cast<Eigen::Index>(k), j + 1) * x[j];
        s[k] = z;
      }
      return detail::softmax_active(s, a.active);
    }
    case ModelKind::Logreg: {
      const auto& b = std::get<LinearParams>(a.params).coefficients;
      for (std::size_t k = 0; k < kNumClasses; ++k) {
        if (!a.active[k]) continue;
        double z = b(static_cast<Eigen::Index>(k), 0);
        for (Eigen::Index j = 0; j < static_cast<Eigen::Index>(a.width); ++j)
          z += b(static_cast<Eigen::Index>(k), j + 1) * x[j];
        p[k] = detail::sigmoid(z);
      }
      detail::normalize_active(p, a.active);
      return p;
    }
    case ModelKind::Tree:
      return detail::leaf_distribution(std::get<TreeParams>(a.params).tree.leaf_for(x), a.active);
    case ModelKind::Forest: {
      const auto& trees = std::get<ForestParams>(a.params).trees;
      for (const auto& t : trees) {
        const auto d = detail::leaf_distribution(t.leaf_for(x), a.active);
        for (std::size_t k = 0; k < kNumClasses; ++k) p[k] += d[k];
      }
      for (auto& v : p) v /= static_cast<double>(trees.size());
      detail::normalize_active(p, a.active);
      return p;
    }
    case ModelKind::Gbt: {
      const auto& g = std::get<GbtParams>(a.params);
      auto s = g.base_scores;
      for (const auto& round : g.rounds)
        for (std::size_t k = 0; k < kNumClasses; ++k)
          if (a.active[k] && !round[k].nodes.empty()) s[k] += round[k].leaf_for(x).value;
      return detail::softmax_active(s, a.active);
    }
    case ModelKind::LengthGlm:
      throw Error(Errc::WrongKind, "length_glm does not produce class probabilities");
  }
  return p;
}

inline void check_fingerprint(const ModelArtifact& a, std::string_view fingerprint) {
  if (fingerprint != a.fingerprint)
    throw Error(Errc::FingerprintMismatch, "row encoded under schema " + std::string(fingerprint) +
                                               ", model expects " + a.fingerprint);
}

inline Prediction predict(const ModelArtifact& a, const Eigen::RowVectorXd& row,
                          std::string_view fingerprint) {
  check_fingerprint(a, fingerprint);
  if (!is_classifier(a.kind))
    throw Error(Errc::WrongKind, "predict on a length regressor; use predict_length");
  Prediction out;
  out.probabilities = predict_proba_unchecked(a, row);
  out.predicted = argmax_label(out.probabilities);
  return out;
}

inline Prediction predict(const ModelArtifact& a, const FeatureMatrix& m, std::size_t row) {
  return predict(a, m.x.row(static_cast<Eigen::Index>(row)), m.fingerprint);
}

/// n x 6 probability matrix for every row of `m`.
inline Eigen::MatrixXd predict_proba(const ModelArtifact& a, const FeatureMatrix& m) {
  check_fingerprint(a, m.fingerprint);
  if (!is_classifier(a.kind)) throw Error(Errc::WrongKind, "not a classifier");
  Eigen::MatrixXd out(m.x.rows(), static_cast<Eigen::Index>(kNumClasses));
  for (Eigen::Index i = 0; i < m.x.rows(); ++i) {
    const Eigen::RowVectorXd row = m.x.row(i);
    const auto p = predict_proba_unchecked(a, row);
    for (std::size_t k = 0; k < kNumClasses; ++k) out(i, static_cast<Eigen::Index>(k)) = p[k];
  }
  return out;
}

/// Unclamped linear predictor of the length regressor.
inline double length_linear_predictor(const ModelArtifact& a, const Eigen::RowVectorXd& row) {
  const auto& b = std::get<LengthParams>(a.params).coefficients;
  double z = b[0];
  for (Eigen::Index j = 0; j < row.size(); ++j) z += b[j + 1] * row[j];
  return z;
}

/// Months, clamped at zero.
inline double predict_length(const ModelArtifact& a, const Eigen::RowVectorXd& row,
                             std::string_view fingerprint) {
  check_fingerprint(a, fingerprint);
  if (a.kind != ModelKind::LengthGlm) throw Error(Errc::WrongKind, "not a length regressor");
  return std::max(0.0, length_linear_predictor(a, row));
}

inline std::vector<double> predict_lengths(const ModelArtifact& a, const FeatureMatrix& m) {
  std::vector<double> out;
  out.reserve(m.rows());
  for (Eigen::Index i = 0; i < m.x.rows(); ++i)
    out.push_back(predict_length(a, m.x.row(i), m.fingerprint));
  return out;
}

}  // namespace drugsurv
