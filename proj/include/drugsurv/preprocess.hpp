#pragma once

// Records -> numeric design matrix: categorical one-hot encoding, mean
// imputation with explicit missing indicators, training-fold standardization,
// and PCA-based feature screening.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "drugsurv/cohort.hpp"
#include "drugsurv/error.hpp"
#include "drugsurv/text.hpp"
#include "json.hpp"

namespace drugsurv {

enum class SchemaMode : std::uint8_t { Baseline, Retrospective };

inline std::string_view mode_name(SchemaMode m) {
  return m == SchemaMode::Baseline ? "baseline" : "retrospective";
}

inline SchemaMode parse_mode(std::string_view s) {
  if (s == "baseline") return SchemaMode::Baseline;
  if (s == "retrospective") return SchemaMode::Retrospective;
  throw Error(Errc::InvalidConfig, "unknown schema mode '" + std::string(s) + "'");
}

enum class ColumnKind : std::uint8_t { Numeric, OneHot, MissingIndicator };

inline std::string_view column_kind_name(ColumnKind k) {
  switch (k) {
    case ColumnKind::Numeric: return "numeric";
    case ColumnKind::OneHot: return "one_hot";
    case ColumnKind::MissingIndicator: return "missing_indicator";
  }
  return "";
}

struct Column {
  std::string name;
  Feature source = Feature::AgeYears;
  ColumnKind kind = ColumnKind::Numeric;
  std::size_t level = 0;   // one-hot level index
  double mean = 0.0;       // numeric: standardization statistics
  double sd = 1.0;
  bool constant = false;   // flagged when the training SD was zero
};

/// Per source feature: the training mean (numeric) or modal level
/// (boolean, categorical). Seeds the default profile for what-if queries.
struct SourceSummary {
  Feature feature = Feature::AgeYears;
  double center = 0.0;
};

class FeatureSchema {
 public:
  FeatureSchema() = default;
  FeatureSchema(SchemaMode mode, std::vector<Column> columns, std::vector<SourceSummary> sources)
      : mode_(mode), columns_(std::move(columns)), sources_(std::move(sources)) {
    fingerprint_ = compute_fingerprint(columns_);
  }

  SchemaMode mode() const { return mode_; }
  const std::vector<Column>& columns() const { return columns_; }
  const std::vector<SourceSummary>& sources() const { return sources_; }
  std::size_t width() const { return columns_.size(); }
  const std::string& fingerprint() const { return fingerprint_; }

  std::optional<std::size_t> column_index(std::string_view name) const {
    for (std::size_t i = 0; i < columns_.size(); ++i)
      if (columns_[i].name == name) return i;
    return std::nullopt;
  }

  bool uses(Feature f) const {
    return std::any_of(sources_.begin(), sources_.end(),
                       [f](const SourceSummary& s) { return s.feature == f; });
  }

  std::vector<std::string> column_names() const {
    std::vector<std::string> names;
    for (const auto& c : columns_) names.push_back(c.name);
    return names;
  }

  /// Stable hash of the ordered (name, kind) list; statistics do not enter.
  static std::string compute_fingerprint(const std::vector<Column>& columns) {
    std::string key;
    for (const auto& c : columns) {
      key += c.name;
      key += '|';
      key += column_kind_name(c.kind);
      key += ';';
    }
    return text::hex64(text::fnv1a(key));
  }

 private:
  SchemaMode mode_ = SchemaMode::Baseline;
  std::vector<Column> columns_;
  std::vector<SourceSummary> sources_;
  std::string fingerprint_;
};

struct FeatureMatrix {
  Eigen::MatrixXd x;                  // n x d, finite
  std::vector<OutcomeLabel> labels;   // row-aligned
  std::vector<double> lengths;        // months
  std::string fingerprint;            // producing schema
  std::vector<std::string> warnings;  // e.g. unknown category levels

  std::size_t rows() const { return static_cast<std::size_t>(x.rows()); }
  std::size_t cols() const { return static_cast<std::size_t>(x.cols()); }
};

/// Which source features a mode feeds to the learners.
inline std::vector<Feature> input_features(SchemaMode mode) {
  std::vector<Feature> out;
  for (const auto& info : kFeatures)
    if (info.id != Feature::TreatmentLength || mode == SchemaMode::Retrospective)
      out.push_back(info.id);
  return out;
}

inline std::string missing_column_name(const FeatureInfo& info) {
  return std::string(info.name) + "__missing";
}

inline std::string one_hot_name(const FeatureInfo& info, std::size_t level) {
  return std::string(info.name) + "=" + std::string(info.levels[level]);
}

/// Column layout follows the catalog order; categorical levels follow the
/// declared enum order and each optional source is followed by its
/// missing indicator. Statistics come from `training` only.
inline FeatureSchema derive_schema(std::span<const PatientRecord> training, SchemaMode mode) {
  if (training.empty()) throw Error(Errc::EmptyCohort, "schema derivation needs training rows");
  std::vector<Column> columns;
  std::vector<SourceSummary> sources;
  for (Feature f : input_features(mode)) {
    const auto& info = feature_info(f);
    std::vector<double> present;
    for (const auto& r : training)
      if (auto v = get_feature(r, f)) present.push_back(*v);

    if (info.kind == FeatureKind::Categorical) {
      std::vector<std::size_t> counts(info.levels.size(), 0);
      for (double v : present) ++counts[static_cast<std::size_t>(v)];
      const auto mode_level = static_cast<std::size_t>(
          std::max_element(counts.begin(), counts.end()) - counts.begin());
      for (std::size_t l = 0; l < info.levels.size(); ++l) {
        Column c;
        c.name = one_hot_name(info, l);
        c.source = f;
        c.kind = ColumnKind::OneHot;
        c.level = l;
        columns.push_back(std::move(c));
      }
      sources.push_back({f, static_cast<double>(mode_level)});
    } else {
      Column c;
      c.name = std::string(info.name);
      c.source = f;
      c.kind = ColumnKind::Numeric;
      if (!present.empty())
        c.mean = std::accumulate(present.begin(), present.end(), 0.0) /
                 static_cast<double>(present.size());
      double ss = 0.0;
      for (double v : present) ss += (v - c.mean) * (v - c.mean);
      const double sd =
          present.size() > 1 ? std::sqrt(ss / static_cast<double>(present.size() - 1)) : 0.0;
      if (sd > 1e-12) {
        c.sd = sd;
      } else {
        c.sd = 1.0;
        c.constant = true;
      }
      double center = c.mean;
      if (info.kind == FeatureKind::Boolean) center = c.mean >= 0.5 ? 1.0 : 0.0;
      sources.push_back({f, center});
      columns.push_back(std::move(c));
    }
    if (info.optional) {
      Column m;
      m.name = missing_column_name(info);
      m.source = f;
      m.kind = ColumnKind::MissingIndicator;
      columns.push_back(std::move(m));
    }
  }
  return FeatureSchema(mode, std::move(columns), std::move(sources));
}

/// Encodes one record into `out` (length = schema width). Returns false
/// when a categorical level has no column in the schema.
inline bool encode_row(const PatientRecord& r, const FeatureSchema& schema,
                       Eigen::Ref<Eigen::RowVectorXd> out) {
  bool level_known = true;
  const auto& cols = schema.columns();
  for (std::size_t j = 0; j < cols.size(); ++j) {
    const auto& c = cols[j];
    const auto v = get_feature(r, c.source);
    switch (c.kind) {
      case ColumnKind::Numeric: out[j] = v ? (*v - c.mean) / c.sd : 0.0; break;
      case ColumnKind::OneHot: out[j] = (v && static_cast<std::size_t>(*v) == c.level) ? 1.0 : 0.0; break;
      case ColumnKind::MissingIndicator: out[j] = v ? 0.0 : 1.0; break;
    }
  }
  // A categorical value whose level column is absent is treated as missing.
  for (const auto& src : schema.sources()) {
    const auto& info = feature_info(src.feature);
    if (info.kind != FeatureKind::Categorical) continue;
    const auto v = get_feature(r, src.feature);
    if (!v) continue;
    bool found = false;
    std::optional<std::size_t> indicator;
    for (std::size_t j = 0; j < cols.size(); ++j) {
      if (cols[j].source != src.feature) continue;
      if (cols[j].kind == ColumnKind::OneHot && cols[j].level == static_cast<std::size_t>(*v))
        found = true;
      if (cols[j].kind == ColumnKind::MissingIndicator) indicator = j;
    }
    if (!found) {
      level_known = false;
      if (indicator) out[*indicator] = 1.0;
    }
  }
  return level_known;
}

inline FeatureMatrix encode(std::span<const PatientRecord> records, const FeatureSchema& schema) {
  if (schema.width() == 0) throw Error(Errc::SchemaMismatch, "schema has no columns");
  FeatureMatrix m;
  m.x.resize(static_cast<Eigen::Index>(records.size()), static_cast<Eigen::Index>(schema.width()));
  m.labels.reserve(records.size());
  m.lengths.reserve(records.size());
  m.fingerprint = schema.fingerprint();
  Eigen::RowVectorXd row(static_cast<Eigen::Index>(schema.width()));
  for (std::size_t i = 0; i < records.size(); ++i) {
    const bool known = encode_row(records[i], schema, row);
    m.x.row(static_cast<Eigen::Index>(i)) = row;
    if (!known)
      m.warnings.push_back("row " + std::to_string(i + 1) +
                           ": category level without a schema column, encoded as missing");
    m.labels.push_back(records[i].outcome);
    m.lengths.push_back(records[i].treatment_length_months);
  }
  return m;
}

/// Removes the named columns (e.g. after PCA screening). The fingerprint
/// changes with the column list.
inline FeatureSchema drop_columns(const FeatureSchema& schema,
                                  const std::vector<std::string>& names) {
  std::vector<Column> kept;
  for (const auto& c : schema.columns())
    if (std::find(names.begin(), names.end(), c.name) == names.end()) kept.push_back(c);
  return FeatureSchema(schema.mode(), std::move(kept), schema.sources());
}

// ---------------------------------------------------------------------------
// PCA screening

struct PcaScreenReport {
  std::vector<double> eigenvalues;       // descending
  std::vector<double> explained_ratio;
  std::size_t retained = 0;
  std::vector<std::string> column_names;
  std::vector<double> max_abs_loading;   // per column, over retained components
  std::vector<std::string> dropped;
};

/// Eigen-decomposition of the d x d sample covariance. Keeps the smallest
/// number of components reaching `variance_threshold` of the total variance
/// and drops each column whose largest |loading| on those components is
/// below `loading_floor`.
inline PcaScreenReport pca_screen(const FeatureMatrix& matrix,
                                  const std::vector<std::string>& column_names,
                                  double variance_threshold = 0.95, double loading_floor = 0.1) {
  const auto n = matrix.x.rows();
  const auto d = matrix.x.cols();
  if (n <= 1) throw Error(Errc::DegenerateCovariance, "PCA needs at least two rows");
  if (static_cast<std::size_t>(d) != column_names.size())
    throw Error(Errc::SchemaMismatch, "column name count does not match matrix width");

  const Eigen::RowVectorXd mean = matrix.x.colwise().mean();
  const Eigen::MatrixXd centered = matrix.x.rowwise() - mean;
  const Eigen::MatrixXd cov = (centered.transpose() * centered) / static_cast<double>(n - 1);

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(cov);
  if (solver.info() != Eigen::Success)
    throw Error(Errc::DegenerateCovariance, "eigen-decomposition failed");

  PcaScreenReport rep;
  rep.column_names = column_names;
  const Eigen::VectorXd& ascending = solver.eigenvalues();
  std::vector<Eigen::Index> order;
  for (Eigen::Index i = d; i-- > 0;) order.push_back(i);
  double total = 0.0;
  for (auto i : order) {
    rep.eigenvalues.push_back(std::max(0.0, ascending[i]));
    total += rep.eigenvalues.back();
  }
  if (!(total > 0.0)) throw Error(Errc::DegenerateCovariance, "covariance has zero trace");

  double cumulative = 0.0;
  for (double ev : rep.eigenvalues) {
    rep.explained_ratio.push_back(ev / total);
    if (rep.retained == 0 || cumulative < variance_threshold - 1e-12) {
      cumulative += ev / total;
      ++rep.retained;
    }
  }

  rep.max_abs_loading.assign(static_cast<std::size_t>(d), 0.0);
  for (std::size_t c = 0; c < rep.retained; ++c) {
    const auto vec = solver.eigenvectors().col(order[c]);
    for (Eigen::Index j = 0; j < d; ++j)
      rep.max_abs_loading[static_cast<std::size_t>(j)] =
          std::max(rep.max_abs_loading[static_cast<std::size_t>(j)], std::abs(vec[j]));
  }
  for (std::size_t j = 0; j < column_names.size(); ++j)
    if (rep.max_abs_loading[j] < loading_floor) rep.dropped.push_back(column_names[j]);
  return rep;
}

inline PcaScreenReport pca_screen(const FeatureMatrix& matrix, const FeatureSchema& schema,
                                  double variance_threshold = 0.95, double loading_floor = 0.1) {
  return pca_screen(matrix, schema.column_names(), variance_threshold, loading_floor);
}

inline void write_pca_csv(std::ostream& out, const PcaScreenReport& rep) {
  out << "component,eigenvalue,ratio,cumulative_ratio\n";
  double cumulative = 0.0;
  for (std::size_t i = 0; i < rep.eigenvalues.size(); ++i) {
    cumulative += rep.explained_ratio[i];
    out << i + 1 << ',' << text::format_double(rep.eigenvalues[i]) << ','
        << text::format_double(rep.explained_ratio[i]) << ',' << text::format_double(cumulative)
        << '\n';
  }
}

// ---------------------------------------------------------------------------
// Schema persistence (embedded in model files)

inline nlohmann::json to_json(const FeatureSchema& schema) {
  nlohmann::json j;
  j["mode"] = mode_name(schema.mode());
  j["fingerprint"] = schema.fingerprint();
  auto& cols = j["columns"] = nlohmann::json::array();
  for (const auto& c : schema.columns()) {
    cols.push_back({{"name", c.name},
                    {"source", feature_info(c.source).name},
                    {"kind", column_kind_name(c.kind)},
                    {"level", c.level},
                    {"mean", c.mean},
                    {"sd", c.sd},
                    {"constant", c.constant}});
  }
  auto& src = j["sources"] = nlohmann::json::array();
  for (const auto& s : schema.sources())
    src.push_back({{"feature", feature_info(s.feature).name}, {"center", s.center}});
  return j;
}

inline FeatureSchema schema_from_json(const nlohmann::json& j) {
  try {
    const auto mode = parse_mode(j.at("mode").get<std::string>());
    std::vector<Column> columns;
    for (const auto& e : j.at("columns")) {
      Column c;
      c.name = e.at("name").get<std::string>();
      const auto src = find_feature(e.at("source").get<std::string>());
      if (!src) throw Error(Errc::SchemaMismatch, "unknown source feature in column " + c.name);
      c.source = *src;
      const auto kind = e.at("kind").get<std::string>();
      if (kind == "numeric") c.kind = ColumnKind::Numeric;
      else if (kind == "one_hot") c.kind = ColumnKind::OneHot;
      else if (kind == "missing_indicator") c.kind = ColumnKind::MissingIndicator;
      else throw Error(Errc::SchemaMismatch, "unknown column kind '" + kind + "'");
      c.level = e.at("level").get<std::size_t>();
      if (c.kind == ColumnKind::OneHot && c.level >= level_count(feature_info(c.source)))
        throw Error(Errc::SchemaMismatch, "level out of range in column " + c.name);
      c.mean = e.at("mean").get<double>();
      c.sd = e.at("sd").get<double>();
      c.constant = e.at("constant").get<bool>();
      columns.push_back(std::move(c));
    }
    std::vector<SourceSummary> sources;
    for (const auto& e : j.at("sources")) {
      const auto f = find_feature(e.at("feature").get<std::string>());
      if (!f) throw Error(Errc::SchemaMismatch, "unknown source feature in summary");
      sources.push_back({*f, e.at("center").get<double>()});
    }
    FeatureSchema schema(mode, std::move(columns), std::move(sources));
    if (j.contains("fingerprint") && j.at("fingerprint").get<std::string>() != schema.fingerprint())
      throw Error(Errc::CorruptFile, "stored schema fingerprint does not match its columns");
    return schema;
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::CorruptFile, std::string("schema: ") + e.what());
  }
}

}  // namespace drugsurv
