#pragma once

// Fit dispatch, model files (JSON, format_version 1) and interpretable tree
// export (indented text and DOT).

#include <algorithm>
#include <fstream>
#include <functional>
#include <iterator>
#include <sstream>
#include <string>
#include <vector>

#include "drugsurv/learn/artifact.hpp"
#include "drugsurv/learn/ensemble.hpp"
#include "drugsurv/learn/linear.hpp"
#include "drugsurv/learn/tree.hpp"
#include "drugsurv/text.hpp"
#include "json.hpp"

namespace drugsurv {

inline ModelArtifact fit_model(const FeatureMatrix& m, const ModelConfig& cfg) {
  switch (cfg.kind) {
    case ModelKind::Glm: return fit_glm(m, cfg);
    case ModelKind::Logreg: return fit_logreg(m, cfg);
    case ModelKind::Tree: return fit_tree(m, cfg);
    case ModelKind::Forest: return fit_forest(m, cfg);
    case ModelKind::Gbt: return fit_gbt(m, cfg);
    case ModelKind::LengthGlm: return fit_length_glm(m, cfg);
  }
  throw Error(Errc::InvalidConfig, "unknown model kind");
}

// ---------------------------------------------------------------------------
// JSON

inline constexpr int kModelFormatVersion = 1;

inline nlohmann::json to_json(const ModelConfig& c) {
  return {{"kind", kind_name(c.kind)},
          {"lambda", c.lambda},
          {"irls_max_iterations", c.irls_max_iterations},
          {"irls_tolerance", c.irls_tolerance},
          {"tree_max_depth", c.tree_max_depth},
          {"tree_min_leaf", c.tree_min_leaf},
          {"tree_min_gain", c.tree_min_gain},
          {"forest_trees", c.forest_trees},
          {"forest_features", c.forest_features},
          {"forest_bootstrap", c.forest_bootstrap},
          {"gbt_rounds", c.gbt_rounds},
          {"gbt_shrinkage", c.gbt_shrinkage},
          {"gbt_depth", c.gbt_depth},
          {"seed", c.seed}};
}

inline ModelConfig config_from_json(const nlohmann::json& j) {
  ModelConfig c;
  c.kind = parse_kind(j.at("kind").get<std::string>());
  c.lambda = j.value("lambda", c.lambda);
  c.irls_max_iterations = j.value("irls_max_iterations", c.irls_max_iterations);
  c.irls_tolerance = j.value("irls_tolerance", c.irls_tolerance);
  c.tree_max_depth = j.value("tree_max_depth", c.tree_max_depth);
  c.tree_min_leaf = j.value("tree_min_leaf", c.tree_min_leaf);
  c.tree_min_gain = j.value("tree_min_gain", c.tree_min_gain);
  c.forest_trees = j.value("forest_trees", c.forest_trees);
  c.forest_features = j.value("forest_features", c.forest_features);
  c.forest_bootstrap = j.value("forest_bootstrap", c.forest_bootstrap);
  c.gbt_rounds = j.value("gbt_rounds", c.gbt_rounds);
  c.gbt_shrinkage = j.value("gbt_shrinkage", c.gbt_shrinkage);
  c.gbt_depth = j.value("gbt_depth", c.gbt_depth);
  c.seed = j.value("seed", c.seed);
  return c;
}

namespace detail {

inline nlohmann::json tree_to_json(const Tree& t) {
  auto nodes = nlohmann::json::array();
  for (const auto& n : t.nodes) {
    nodes.push_back({{"feature", n.feature},
                     {"threshold", n.threshold},
                     {"left", n.left},
                     {"right", n.right},
                     {"histogram", n.histogram},
                     {"value", n.value}});
  }
  return nodes;
}

inline Tree tree_from_json(const nlohmann::json& j, std::size_t width) {
  Tree t;
  for (const auto& e : j) {
    TreeNode n;
    n.feature = e.at("feature").get<int>();
    n.threshold = e.at("threshold").get<double>();
    n.left = e.at("left").get<int>();
    n.right = e.at("right").get<int>();
    n.histogram = e.at("histogram").get<std::array<double, kNumClasses>>();
    n.value = e.at("value").get<double>();
    t.nodes.push_back(n);
  }
  // Structural checks: children in range and after their parent.
  const int count = static_cast<int>(t.nodes.size());
  for (int i = 0; i < count; ++i) {
    const auto& n = t.nodes[static_cast<std::size_t>(i)];
    if (n.is_leaf()) continue;
    if (n.feature >= static_cast<int>(width) || n.left <= i || n.right <= i || n.left >= count ||
        n.right >= count)
      throw Error(Errc::CorruptFile, "tree node " + std::to_string(i) + " is malformed");
  }
  return t;
}

inline nlohmann::json matrix_to_json(const Eigen::MatrixXd& m) {
  auto rows = nlohmann::json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    std::vector<double> row(static_cast<std::size_t>(m.cols()));
    for (Eigen::Index j = 0; j < m.cols(); ++j) row[static_cast<std::size_t>(j)] = m(i, j);
    rows.push_back(row);
  }
  return rows;
}

inline Eigen::MatrixXd matrix_from_json(const nlohmann::json& j, Eigen::Index rows, Eigen::Index cols) {
  if (!j.is_array() || static_cast<Eigen::Index>(j.size()) != rows)
    throw Error(Errc::CorruptFile, "coefficient matrix has the wrong row count");
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    const auto row = j[static_cast<std::size_t>(i)].get<std::vector<double>>();
    if (static_cast<Eigen::Index>(row.size()) != cols)
      throw Error(Errc::CorruptFile, "coefficient matrix has the wrong column count");
    for (Eigen::Index c = 0; c < cols; ++c) m(i, c) = row[static_cast<std::size_t>(c)];
  }
  return m;
}

}  // namespace detail

inline nlohmann::json to_json(const ModelArtifact& a) {
  nlohmann::json j;
  j["format_version"] = kModelFormatVersion;
  j["kind"] = kind_name(a.kind);
  j["schema_fingerprint"] = a.fingerprint;
  if (is_classifier(a.kind)) {
    auto classes = nlohmann::json::array();
    for (auto k : kLabelKeys) classes.push_back(k);
    j["classes"] = classes;
    j["active_classes"] = a.active;
  } else {
    j["classes"] = nlohmann::json::array();
    j["response_units"] = "months";
  }
  j["width"] = a.width;
  j["config"] = to_json(a.config);

  nlohmann::json params;
  std::visit(
      [&](const auto& p) {
        using P = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<P, LinearParams>) {
          params["coefficients"] = detail::matrix_to_json(p.coefficients);
        } else if constexpr (std::is_same_v<P, TreeParams>) {
          params["nodes"] = detail::tree_to_json(p.tree);
        } else if constexpr (std::is_same_v<P, ForestParams>) {
          auto trees = nlohmann::json::array();
          for (const auto& t : p.trees) trees.push_back(detail::tree_to_json(t));
          params["trees"] = trees;
        } else if constexpr (std::is_same_v<P, GbtParams>) {
          params["base_scores"] = p.base_scores;
          auto rounds = nlohmann::json::array();
          for (const auto& r : p.rounds) {
            auto per_class = nlohmann::json::array();
            for (const auto& t : r) per_class.push_back(detail::tree_to_json(t));
            rounds.push_back(per_class);
          }
          params["rounds"] = rounds;
        } else {
          std::vector<double> c(p.coefficients.data(), p.coefficients.data() + p.coefficients.size());
          params["coefficients"] = c;
        }
      },
      a.params);
  j["params"] = params;
  j["training_meta"] = {{"iterations", a.meta.iterations},
                        {"objective", a.meta.objective},
                        {"seconds", a.meta.seconds},
                        {"lambda_used", a.meta.lambda_used},
                        {"flags", a.meta.flags}};
  if (a.schema) j["schema"] = to_json(*a.schema);
  return j;
}

inline ModelArtifact artifact_from_json(const nlohmann::json& j) {
  ModelArtifact a;
  try {
    if (!j.is_object() || !j.contains("format_version"))
      throw Error(Errc::CorruptFile, "missing format_version");
    const int version = j.at("format_version").get<int>();
    if (version != kModelFormatVersion)
      throw Error(Errc::VersionMismatch, "model format_version " + std::to_string(version) +
                                             ", expected " + std::to_string(kModelFormatVersion));
    a.kind = parse_kind(j.at("kind").get<std::string>());
    a.fingerprint = j.at("schema_fingerprint").get<std::string>();
    a.width = j.at("width").get<std::size_t>();
    a.config = config_from_json(j.at("config"));
    if (is_classifier(a.kind)) a.active = j.at("active_classes").get<std::array<bool, kNumClasses>>();
    const auto& p = j.at("params");
    const auto cols = static_cast<Eigen::Index>(a.width + 1);
    switch (a.kind) {
      case ModelKind::Glm:
      case ModelKind::Logreg:
        a.params = LinearParams{detail::matrix_from_json(p.at("coefficients"),
                                                         static_cast<Eigen::Index>(kNumClasses), cols)};
        break;
      case ModelKind::Tree: a.params = TreeParams{detail::tree_from_json(p.at("nodes"), a.width)}; break;
      case ModelKind::Forest: {
        ForestParams f;
        for (const auto& t : p.at("trees")) f.trees.push_back(detail::tree_from_json(t, a.width));
        if (f.trees.empty()) throw Error(Errc::CorruptFile, "forest without trees");
        a.params = std::move(f);
        break;
      }
      case ModelKind::Gbt: {
        GbtParams g;
        g.base_scores = p.at("base_scores").get<std::array<double, kNumClasses>>();
        for (const auto& r : p.at("rounds")) {
          std::vector<Tree> per_class;
          for (const auto& t : r) per_class.push_back(detail::tree_from_json(t, a.width));
          if (per_class.size() != kNumClasses) throw Error(Errc::CorruptFile, "gbt round size");
          g.rounds.push_back(std::move(per_class));
        }
        a.params = std::move(g);
        break;
      }
      case ModelKind::LengthGlm: {
        const auto c = p.at("coefficients").get<std::vector<double>>();
        if (static_cast<Eigen::Index>(c.size()) != cols)
          throw Error(Errc::CorruptFile, "length coefficients have the wrong size");
        a.params = LengthParams{Eigen::Map<const Eigen::VectorXd>(c.data(), cols)};
        break;
      }
    }
    const auto& meta = j.at("training_meta");
    a.meta.iterations = meta.at("iterations").get<int>();
    a.meta.objective = meta.at("objective").get<double>();
    a.meta.seconds = meta.at("seconds").get<double>();
    a.meta.lambda_used = meta.value("lambda_used", 0.0);
    a.meta.flags = meta.value("flags", std::vector<std::string>{});
    if (j.contains("schema")) {
      a.schema = schema_from_json(j.at("schema"));
      if (a.schema->fingerprint() != a.fingerprint)
        throw Error(Errc::CorruptFile, "embedded schema does not match schema_fingerprint");
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::CorruptFile, e.what());
  }
  return a;
}

inline std::string serialize_model(const ModelArtifact& a) { return to_json(a).dump(1) + "\n"; }

inline ModelArtifact parse_model(std::string_view content) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(content);
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::CorruptFile, e.what());
  }
  return artifact_from_json(j);
}

inline void save_model(const ModelArtifact& a, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(Errc::IoError, "cannot open '" + path + "' for writing");
  out << serialize_model(a);
}

inline ModelArtifact load_model(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::IoError, "cannot open '" + path + "'");
  const std::string content((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return parse_model(content);
}

// ---------------------------------------------------------------------------
// Tree export
//
//   weight_kg <= 0.7530 (98.9 in source units)
//     leaf continue [adverse_event=2 patient_decision=0 ... continue=31]
//     ...
//
// Two spaces of indentation per level; an internal node is followed by its
// left (<= threshold) subtree, then its right subtree.

namespace detail {

inline std::vector<std::string> export_names(const ModelArtifact& a,
                                             const std::vector<std::string>& names) {
  if (!names.empty()) return names;
  if (a.schema) return a.schema->column_names();
  std::vector<std::string> out;
  for (std::size_t j = 0; j < a.width; ++j) out.push_back("x" + std::to_string(j));
  return out;
}

inline std::string histogram_text(const std::array<double, kNumClasses>& h) {
  std::string s = "[";
  for (std::size_t k = 0; k < kNumClasses; ++k) {
    if (k) s += ' ';
    s += std::string(kLabelKeys[k]) + "=" + text::format_double(h[k]);
  }
  return s + "]";
}

inline const Tree& tree_of(const ModelArtifact& a) {
  if (a.kind != ModelKind::Tree) throw Error(Errc::WrongKind, "export_tree needs a tree model");
  return std::get<TreeParams>(a.params).tree;
}

}  // namespace detail

inline std::string export_tree(const ModelArtifact& a, const std::vector<std::string>& names = {}) {
  const auto& tree = detail::tree_of(a);
  const auto cols = detail::export_names(a, names);
  std::string out;
  std::vector<std::pair<std::size_t, std::size_t>> stack{{0, 0}};
  while (!stack.empty()) {
    auto [i, depth] = stack.back();
    stack.pop_back();
    const auto& n = tree.nodes[i];
    out += std::string(2 * depth, ' ');
    if (n.is_leaf()) {
      out += "leaf " + std::string(label_key(argmax_label(n.histogram))) + " " +
             detail::histogram_text(n.histogram);
    } else {
      const auto f = static_cast<std::size_t>(n.feature);
      out += cols[f] + " <= " + text::format_double(n.threshold);
      if (a.schema && a.schema->columns()[f].kind == ColumnKind::Numeric) {
        const auto& c = a.schema->columns()[f];
        out += " (" + text::format_fixed(c.mean + c.sd * n.threshold, 2) + " in source units)";
      }
      stack.push_back({static_cast<std::size_t>(n.right), depth + 1});
      stack.push_back({static_cast<std::size_t>(n.left), depth + 1});
    }
    out += '\n';
  }
  return out;
}

/// Inverse of export_tree for the node structure (features, thresholds,
/// children, histograms).
inline Tree parse_tree_export(const std::string& exported, const std::vector<std::string>& names) {
  struct Line {
    std::size_t depth;
    std::string body;
  };
  std::vector<Line> lines;
  std::istringstream in(exported);
  std::string raw;
  while (std::getline(in, raw)) {
    if (text::trim(raw).empty()) continue;
    std::size_t spaces = 0;
    while (spaces < raw.size() && raw[spaces] == ' ') ++spaces;
    lines.push_back({spaces / 2, std::string(text::trim(std::string_view(raw).substr(spaces)))});
  }
  Tree tree;
  std::size_t pos = 0;
  std::function<int(std::size_t)> parse = [&](std::size_t depth) -> int {
    if (pos >= lines.size() || lines[pos].depth != depth)
      throw Error(Errc::CorruptFile, "tree export: unexpected indentation");
    const auto body = lines[pos++].body;
    const int index = static_cast<int>(tree.nodes.size());
    tree.nodes.emplace_back();
    if (body.rfind("leaf ", 0) == 0) {
      const auto open = body.find('[');
      const auto close = body.find(']');
      if (open == std::string::npos || close == std::string::npos)
        throw Error(Errc::CorruptFile, "tree export: leaf without histogram");
      auto entries = text::split(std::string_view(body).substr(open + 1, close - open - 1), ' ');
      if (entries.size() != kNumClasses) throw Error(Errc::CorruptFile, "tree export: histogram size");
      for (std::size_t k = 0; k < kNumClasses; ++k) {
        const auto eq = entries[k].find('=');
        auto v = text::parse_double(entries[k].substr(eq + 1));
        if (eq == std::string_view::npos || !v) throw Error(Errc::CorruptFile, "tree export: count");
        tree.nodes[static_cast<std::size_t>(index)].histogram[k] = *v;
      }
      return index;
    }
    const auto le = body.find(" <= ");
    if (le == std::string::npos) throw Error(Errc::CorruptFile, "tree export: bad split line");
    const auto name = body.substr(0, le);
    auto rest = std::string_view(body).substr(le + 4);
    rest = rest.substr(0, rest.find(' '));
    const auto it = std::find(names.begin(), names.end(), name);
    auto thr = text::parse_double(rest);
    if (it == names.end() || !thr) throw Error(Errc::CorruptFile, "tree export: unknown split");
    const int left = parse(depth + 1);
    const int right = parse(depth + 1);
    auto& node = tree.nodes[static_cast<std::size_t>(index)];
    node.feature = static_cast<int>(it - names.begin());
    node.threshold = *thr;
    node.left = left;
    node.right = right;
    return index;
  };
  parse(0);
  if (pos != lines.size()) throw Error(Errc::CorruptFile, "tree export: trailing lines");
  return tree;
}

inline std::string export_tree_dot(const ModelArtifact& a, const std::vector<std::string>& names = {}) {
  const auto& tree = detail::tree_of(a);
  const auto cols = detail::export_names(a, names);
  std::string out = "digraph tree {\n  node [shape=box, fontname=\"Helvetica\"];\n";
  for (std::size_t i = 0; i < tree.nodes.size(); ++i) {
    const auto& n = tree.nodes[i];
    std::string label;
    if (n.is_leaf())
      label = std::string(label_key(argmax_label(n.histogram))) + "\\n" + detail::histogram_text(n.histogram);
    else
      label = cols[static_cast<std::size_t>(n.feature)] + " <= " + text::format_double(n.threshold);
    out += "  n" + std::to_string(i) + " [label=\"" + label + "\"];\n";
  }
  for (std::size_t i = 0; i < tree.nodes.size(); ++i) {
    const auto& n = tree.nodes[i];
    if (n.is_leaf()) continue;
    out += "  n" + std::to_string(i) + " -> n" + std::to_string(n.left) + " [label=\"yes\"];\n";
    out += "  n" + std::to_string(i) + " -> n" + std::to_string(n.right) + " [label=\"no\"];\n";
  }
  return out + "}\n";
}

}  // namespace drugsurv
