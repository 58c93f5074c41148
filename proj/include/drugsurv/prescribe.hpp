#pragma once

// Input optimization: coordinate ascent over per-feature grids for the
// profile maximizing one label's predicted probability, then one-at-a-time
// sweeps that turn the optimum into per-feature threshold constraints.

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "drugsurv/cohort.hpp"
#include "drugsurv/error.hpp"
#include "drugsurv/learn/artifact.hpp"
#include "drugsurv/preprocess.hpp"
#include "drugsurv/text.hpp"
#include "json.hpp"

namespace drugsurv {

/// Candidate values for one feature: raw units for numerics, level indices
/// for categoricals and booleans.
struct FeatureGrid {
  Feature feature = Feature::AgeYears;
  std::vector<double> values;
};

inline constexpr std::size_t kDefaultGridPoints = 50;

inline std::vector<double> linspace(double lo, double hi, std::size_t points) {
  if (points == 0) return {};
  if (points == 1 || lo == hi) return {lo};
  std::vector<double> out(points);
  for (std::size_t i = 0; i < points; ++i)
    out[i] = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(points - 1);
  out.back() = hi;
  return out;
}

/// Default grid: `points` uniform steps over the feasible range for
/// continuous features, every integer for integer features, every level for
/// categoricals and booleans.
inline std::vector<double> default_grid(Feature f, std::size_t points = kDefaultGridPoints) {
  const auto& info = feature_info(f);
  switch (info.kind) {
    case FeatureKind::Continuous: return linspace(info.feasible_min, info.feasible_max, points);
    case FeatureKind::Integer: {
      std::vector<double> out;
      for (auto v = std::ceil(info.feasible_min); v <= info.feasible_max; v += 1.0) out.push_back(v);
      return out;
    }
    case FeatureKind::Boolean:
    case FeatureKind::Categorical: {
      std::vector<double> out;
      for (std::size_t l = 0; l < level_count(info); ++l) out.push_back(static_cast<double>(l));
      return out;
    }
  }
  return {};
}

inline std::vector<FeatureGrid> default_grids(const FeatureSchema& schema,
                                              std::size_t points = kDefaultGridPoints) {
  std::vector<FeatureGrid> out;
  for (const auto& s : schema.sources()) out.push_back({s.feature, default_grid(s.feature, points)});
  return out;
}

/// Fully observed record at the schema's training means (numerics) and modes
/// (categoricals, booleans).
inline PatientRecord center_profile(const FeatureSchema& schema) {
  PatientRecord r;
  for (const auto& info : kFeatures)
    if (info.optional) set_feature(r, info.id, std::nullopt);
  for (const auto& s : schema.sources()) set_feature(r, s.feature, s.center);
  // Optional features outside the schema stay absent; they have no columns.
  return r;
}

/// Class probabilities for a record under an artifact and its schema.
inline std::array<double, kNumClasses> profile_probabilities(const ModelArtifact& a,
                                                             const FeatureSchema& schema,
                                                             const PatientRecord& r) {
  check_fingerprint(a, schema.fingerprint());
  Eigen::RowVectorXd row(static_cast<Eigen::Index>(schema.width()));
  encode_row(r, schema, row);
  return predict_proba_unchecked(a, row);
}

// ---------------------------------------------------------------------------
// Sweeps

struct SweepCurve {
  Feature feature = Feature::AgeYears;
  std::vector<double> values;
  std::vector<std::array<double, kNumClasses>> probabilities;
};

inline SweepCurve sweep_feature(const ModelArtifact& a, const FeatureSchema& schema,
                                const PatientRecord& base, Feature feature,
                                const std::vector<double>& grid) {
  if (!schema.uses(feature))
    throw Error(Errc::UnknownFeature,
                "feature '" + std::string(feature_info(feature).name) + "' is not a model input");
  if (!is_classifier(a.kind)) throw Error(Errc::WrongKind, "sweeps need a classifier");
  SweepCurve c;
  c.feature = feature;
  c.values = grid;
  PatientRecord r = base;
  for (double v : grid) {
    set_feature(r, feature, v);
    c.probabilities.push_back(profile_probabilities(a, schema, r));
  }
  return c;
}

inline SweepCurve sweep_feature(const ModelArtifact& a, const FeatureSchema& schema,
                                const PatientRecord& base, std::string_view name,
                                std::size_t points = kDefaultGridPoints) {
  const auto f = find_feature(name);
  if (!f) throw Error(Errc::UnknownFeature, "unknown feature '" + std::string(name) + "'");
  if (!schema.uses(*f))
    throw Error(Errc::UnknownFeature, "feature '" + std::string(name) + "' is not a model input");
  return sweep_feature(a, schema, base, *f, default_grid(*f, points));
}

// ---------------------------------------------------------------------------
// Optimization

enum class Relation : std::uint8_t { AtMost, AtLeast, Equals, OneOf };

inline std::string_view relation_symbol(Relation r) {
  switch (r) {
    case Relation::AtMost: return "<=";
    case Relation::AtLeast: return ">=";
    case Relation::Equals: return "=";
    case Relation::OneOf: return "in";
  }
  return "";
}

struct ProfileConstraint {
  Feature feature = Feature::AgeYears;
  Relation relation = Relation::AtMost;
  std::vector<double> boundary;  // one value, or the admissible levels for OneOf
  double probability = 0.0;      // P(target) at the boundary (lowest over a level set)
};

struct OptimizeOptions {
  OutcomeLabel target = OutcomeLabel::Continue;
  double min_probability = 0.9;
  std::vector<FeatureGrid> grids;  // empty: default_grids(schema)
  int max_sweeps = 10;
  /// Product grids up to this many points are enumerated exactly; larger
  /// ones use coordinate ascent. 0 always uses coordinate ascent.
  std::size_t exhaustive_limit = 10000;
};

enum class SearchMethod : std::uint8_t { Exhaustive, CoordinateAscent };

inline std::string_view method_name(SearchMethod m) {
  return m == SearchMethod::Exhaustive ? "exhaustive" : "coordinate_ascent";
}

struct OptimizeResult {
  PatientRecord profile;
  std::array<double, kNumClasses> probabilities{};
  std::vector<ProfileConstraint> constraints;
  std::vector<FeatureGrid> grids;
  std::vector<double> sweep_objective;  // P(target) after each sweep
  int sweeps = 0;
  SearchMethod method = SearchMethod::CoordinateAscent;
  bool target_unreachable = false;
};

namespace detail {

inline std::size_t nearest_index(const std::vector<double>& grid, double v) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < grid.size(); ++i)
    if (std::abs(grid[i] - v) < std::abs(grid[best] - v)) best = i;
  return best;
}

inline void check_grid(const FeatureGrid& g, const FeatureSchema& schema) {
  const auto& info = feature_info(g.feature);
  if (!schema.uses(g.feature))
    throw Error(Errc::UnknownFeature, "grid for '" + std::string(info.name) + "', which is not a model input");
  if (g.values.empty()) throw Error(Errc::InvalidConfig, "empty grid for '" + std::string(info.name) + "'");
  for (double v : g.values) {
    const bool discrete = level_count(info) > 0;
    const bool ok = discrete ? (v >= 0 && v < static_cast<double>(level_count(info)) && v == std::floor(v))
                             : (v >= info.feasible_min && v <= info.feasible_max);
    if (!ok)
      throw Error(Errc::RangeViolation, "grid value " + text::format_double(v) + " outside the feasible range of '" +
                                            std::string(info.name) + "'");
  }
}

inline std::vector<ProfileConstraint> extract_constraints(const ModelArtifact& a, const FeatureSchema& schema,
                                                          const PatientRecord& optimum,
                                                          const std::vector<FeatureGrid>& grids,
                                                          std::size_t target, double min_p) {
  std::vector<ProfileConstraint> out;
  for (const auto& g : grids) {
    const auto curve = sweep_feature(a, schema, optimum, g.feature, g.values);
    std::vector<double> p;
    for (const auto& pr : curve.probabilities) p.push_back(pr[target]);
    const auto& info = feature_info(g.feature);
    if (level_count(info) > 0) {
      ProfileConstraint c{g.feature, Relation::Equals, {}, 1.0};
      for (std::size_t i = 0; i < p.size(); ++i) {
        if (p[i] < min_p) continue;
        c.boundary.push_back(g.values[i]);
        c.probability = std::min(c.probability, p[i]);
      }
      std::vector<double> all_levels = g.values;
      std::sort(all_levels.begin(), all_levels.end());
      all_levels.erase(std::unique(all_levels.begin(), all_levels.end()), all_levels.end());
      if (c.boundary.empty() || c.boundary.size() >= all_levels.size()) continue;
      std::sort(c.boundary.begin(), c.boundary.end());
      c.boundary.erase(std::unique(c.boundary.begin(), c.boundary.end()), c.boundary.end());
      if (c.boundary.size() >= all_levels.size()) continue;
      if (c.boundary.size() > 1) c.relation = Relation::OneOf;
      out.push_back(std::move(c));
      continue;
    }
    const auto at = nearest_index(g.values, *get_feature(optimum, g.feature));
    if (p[at] < min_p) continue;
    std::size_t lo = at, hi = at;
    while (lo > 0 && p[lo - 1] >= min_p) --lo;
    while (hi + 1 < p.size() && p[hi + 1] >= min_p) ++hi;
    if (lo > 0) out.push_back({g.feature, Relation::AtLeast, {g.values[lo]}, p[lo]});
    if (hi + 1 < p.size()) out.push_back({g.feature, Relation::AtMost, {g.values[hi]}, p[hi]});
  }
  return out;
}

}  // namespace detail

namespace detail {

inline std::size_t product_size(const std::vector<FeatureGrid>& grids, std::size_t cap) {
  std::size_t total = 1;
  for (const auto& g : grids) {
    if (total > cap / std::max<std::size_t>(g.values.size(), 1)) return cap + 1;
    total *= g.values.size();
  }
  return total;
}

/// Lexicographic enumeration (first grid slowest). The start profile is the
/// incumbent; a grid point replaces it only when strictly better, so the
/// earliest maximum wins.
inline PatientRecord exhaustive_search(const ModelArtifact& a, const FeatureSchema& schema,
                                       const PatientRecord& start, const std::vector<FeatureGrid>& grids,
                                       std::size_t target) {
  std::vector<std::size_t> pos(grids.size(), 0);
  PatientRecord best_r = start;
  double best = profile_probabilities(a, schema, start)[target];
  while (true) {
    PatientRecord r = start;
    for (std::size_t g = 0; g < grids.size(); ++g) set_feature(r, grids[g].feature, grids[g].values[pos[g]]);
    const double p = profile_probabilities(a, schema, r)[target];
    if (p > best) {
      best = p;
      best_r = r;
    }
    std::size_t g = grids.size();
    while (g > 0) {
      --g;
      if (++pos[g] < grids[g].values.size()) break;
      pos[g] = 0;
      if (g == 0) return best_r;
    }
    if (grids.empty()) return best_r;
  }
}

}  // namespace detail

/// Searches the grids for the profile maximizing P(target), starting from
/// the schema's mean/mode profile snapped to the grids. Small product grids
/// are enumerated exactly. Otherwise coordinate ascent: each sweep visits
/// the features in schema order and moves a feature to its grid argmax of
/// P(target) only when that strictly beats the incumbent (earliest grid
/// point among equals), stopping after a sweep without moves or
/// `max_sweeps` sweeps.
inline OptimizeResult optimize_profile(const ModelArtifact& a, const FeatureSchema& schema,
                                       const OptimizeOptions& opts = {}) {
  if (!is_classifier(a.kind)) throw Error(Errc::WrongKind, "optimize_profile needs a classifier");
  check_fingerprint(a, schema.fingerprint());
  if (!(opts.min_probability >= 0.0 && opts.min_probability <= 1.0))
    throw Error(Errc::InvalidConfig, "min probability must be in [0, 1]");
  if (opts.max_sweeps < 1) throw Error(Errc::InvalidConfig, "max sweeps must be >= 1");

  OptimizeResult res;
  res.grids = opts.grids.empty() ? default_grids(schema) : opts.grids;
  for (const auto& g : res.grids) detail::check_grid(g, schema);
  const auto target = label_index(opts.target);

  PatientRecord current = center_profile(schema);
  for (const auto& g : res.grids)
    set_feature(current, g.feature, g.values[detail::nearest_index(g.values, *get_feature(current, g.feature))]);
  double best = profile_probabilities(a, schema, current)[target];

  if (detail::product_size(res.grids, opts.exhaustive_limit) <= opts.exhaustive_limit) {
    res.method = SearchMethod::Exhaustive;
    current = detail::exhaustive_search(a, schema, current, res.grids, target);
    res.sweep_objective.push_back(profile_probabilities(a, schema, current)[target]);
  }
  for (int sweep = 0; res.method == SearchMethod::CoordinateAscent && sweep < opts.max_sweeps; ++sweep) {
    bool moved = false;
    for (const auto& g : res.grids) {
      PatientRecord trial = current;
      std::optional<std::size_t> arg;
      double arg_p = best;
      for (std::size_t i = 0; i < g.values.size(); ++i) {
        set_feature(trial, g.feature, g.values[i]);
        const double p = profile_probabilities(a, schema, trial)[target];
        if (p > arg_p) {
          arg_p = p;
          arg = i;
        }
      }
      if (arg) {
        set_feature(current, g.feature, g.values[*arg]);
        best = arg_p;
        moved = true;
      }
    }
    ++res.sweeps;
    res.sweep_objective.push_back(best);
    if (!moved) break;
  }

  res.profile = current;
  res.probabilities = profile_probabilities(a, schema, current);
  if (res.probabilities[target] < opts.min_probability) {
    res.target_unreachable = true;
    return res;
  }
  res.constraints = detail::extract_constraints(a, schema, current, res.grids, target, opts.min_probability);
  return res;
}

// ---------------------------------------------------------------------------
// JSON

inline nlohmann::json feature_value_json(Feature f, double v) {
  const auto& info = feature_info(f);
  switch (info.kind) {
    case FeatureKind::Categorical: return level_name(info, static_cast<std::size_t>(v));
    case FeatureKind::Boolean: return v >= 0.5;
    case FeatureKind::Integer: return static_cast<long long>(std::llround(v));
    case FeatureKind::Continuous: return v;
  }
  return v;
}

inline nlohmann::json probabilities_json(const std::array<double, kNumClasses>& p, int digits = 12) {
  nlohmann::json j = nlohmann::json::object();
  for (std::size_t k = 0; k < kNumClasses; ++k)
    j[std::string(kLabelKeys[k])] = text::round_significant(p[k], digits);
  return j;
}

inline nlohmann::json to_json(const ProfileConstraint& c) {
  nlohmann::json j;
  j["feature"] = feature_info(c.feature).name;
  j["relation"] = relation_symbol(c.relation);
  if (c.relation == Relation::OneOf) {
    auto levels = nlohmann::json::array();
    for (double v : c.boundary) levels.push_back(feature_value_json(c.feature, v));
    j["boundary"] = levels;
  } else {
    j["boundary"] = feature_value_json(c.feature, c.boundary.front());
  }
  j["probability"] = text::round_significant(c.probability, 12);
  return j;
}

/// Human-readable form, e.g. "weight_kg <= 97.35".
inline std::string describe(const ProfileConstraint& c) {
  std::string out = std::string(feature_info(c.feature).name) + " " + std::string(relation_symbol(c.relation)) + " ";
  const auto value = [&](double v) {
    const auto j = feature_value_json(c.feature, v);
    return j.is_string() ? j.get<std::string>() : j.dump();
  };
  if (c.relation == Relation::OneOf) {
    out += "{";
    for (std::size_t i = 0; i < c.boundary.size(); ++i) out += (i ? ", " : "") + value(c.boundary[i]);
    return out + "}";
  }
  return out + value(c.boundary.front());
}

inline nlohmann::json profile_json(const PatientRecord& r, const FeatureSchema& schema) {
  nlohmann::json j = nlohmann::json::object();
  for (const auto& s : schema.sources()) {
    const auto v = get_feature(r, s.feature);
    j[std::string(feature_info(s.feature).name)] = v ? feature_value_json(s.feature, *v) : nlohmann::json();
  }
  return j;
}

inline nlohmann::json to_json(const OptimizeResult& r, const FeatureSchema& schema, const OptimizeOptions& opts) {
  nlohmann::json j;
  j["target"] = label_key(opts.target);
  j["min_probability"] = opts.min_probability;
  j["profile"] = profile_json(r.profile, schema);
  j["probabilities"] = probabilities_json(r.probabilities);
  auto constraints = nlohmann::json::array();
  for (const auto& c : r.constraints) constraints.push_back(to_json(c));
  j["constraints"] = constraints;
  j["sweeps"] = r.sweeps;
  j["target_unreachable"] = r.target_unreachable;
  j["flags"] = r.target_unreachable ? nlohmann::json::array({"TargetUnreachable"}) : nlohmann::json::array();
  return j;
}

inline nlohmann::json to_json(const SweepCurve& c, int digits = 12) {
  nlohmann::json j;
  j["feature"] = feature_info(c.feature).name;
  auto values = nlohmann::json::array();
  for (double v : c.values) values.push_back(feature_value_json(c.feature, v));
  j["values"] = values;
  auto probs = nlohmann::json::array();
  for (const auto& p : c.probabilities) {
    auto row = nlohmann::json::array();
    for (double v : p) row.push_back(text::round_significant(v, digits));
    probs.push_back(row);
  }
  j["probabilities"] = probs;
  auto classes = nlohmann::json::array();
  for (auto k : kLabelKeys) classes.push_back(k);
  j["classes"] = classes;
  return j;
}

}  // namespace drugsurv
