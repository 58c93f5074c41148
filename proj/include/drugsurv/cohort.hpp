#pragma once

// Patient data model, registry-style CSV ingestion and per-feature
// completeness.

#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <iomanip>
#include <istream>
#include <optional>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "drugsurv/error.hpp"
#include "drugsurv/text.hpp"

namespace drugsurv {

// ---------------------------------------------------------------------------
// Outcome labels

enum class OutcomeLabel : std::uint8_t {
  AdverseEvent,
  PatientDecision,
  LackOfEfficacy,
  LossToFollowUp,
  Other,
  Continue,
};

inline constexpr std::size_t kNumClasses = 6;

inline constexpr std::array<OutcomeLabel, kNumClasses> kAllLabels = {
    OutcomeLabel::AdverseEvent,   OutcomeLabel::PatientDecision, OutcomeLabel::LackOfEfficacy,
    OutcomeLabel::LossToFollowUp, OutcomeLabel::Other,           OutcomeLabel::Continue,
};

inline constexpr std::array<std::string_view, kNumClasses> kLabelKeys = {
    "adverse_event", "patient_decision", "lack_of_efficacy", "loss_to_follow_up", "other", "continue",
};

constexpr std::size_t label_index(OutcomeLabel l) { return static_cast<std::size_t>(l); }
constexpr std::string_view label_key(OutcomeLabel l) { return kLabelKeys[label_index(l)]; }

inline std::optional<OutcomeLabel> parse_label(std::string_view key) {
  for (std::size_t i = 0; i < kNumClasses; ++i)
    if (kLabelKeys[i] == key) return kAllLabels[i];
  return std::nullopt;
}

// Discontinuation groupings used for one-vs-rest ROC analysis.
enum class RocGroup : std::uint8_t { AnyReason, LackOfEfficacy, AdverseEvent, OtherReasons };

inline constexpr std::array<RocGroup, 4> kAllGroups = {
    RocGroup::AnyReason, RocGroup::LackOfEfficacy, RocGroup::AdverseEvent, RocGroup::OtherReasons};

constexpr std::string_view group_key(RocGroup g) {
  switch (g) {
    case RocGroup::AnyReason: return "any_reason";
    case RocGroup::LackOfEfficacy: return "lack_of_efficacy";
    case RocGroup::AdverseEvent: return "adverse_event";
    case RocGroup::OtherReasons: return "other_reasons";
  }
  return "";
}

struct GroupMembership {
  bool any_reason = false;             // every non-Continue label
  std::optional<RocGroup> cause;       // the specific cause group, if any
};

/// Continue has no discontinuation group; every other label belongs to
/// AnyReason plus exactly one cause group.
constexpr GroupMembership group_outcomes(OutcomeLabel label) {
  switch (label) {
    case OutcomeLabel::Continue: return {false, std::nullopt};
    case OutcomeLabel::LackOfEfficacy: return {true, RocGroup::LackOfEfficacy};
    case OutcomeLabel::AdverseEvent: return {true, RocGroup::AdverseEvent};
    case OutcomeLabel::PatientDecision:
    case OutcomeLabel::LossToFollowUp:
    case OutcomeLabel::Other: return {true, RocGroup::OtherReasons};
  }
  return {};
}

constexpr bool in_group(OutcomeLabel label, RocGroup group) {
  const auto m = group_outcomes(label);
  if (group == RocGroup::AnyReason) return m.any_reason;
  return m.cause.has_value() && *m.cause == group;
}

// ---------------------------------------------------------------------------
// Patient record

enum class Sex : std::uint8_t { Male, Female };
enum class Biologic : std::uint8_t { Adalimumab, Etanercept, Infliximab, Ustekinumab };

struct PatientRecord {
  double age_years = 0.0;
  Sex sex = Sex::Male;
  std::optional<double> height_cm;
  std::optional<double> weight_kg;
  std::optional<int> comorbidity_count;
  std::optional<double> age_at_diagnosis;
  bool psa_diagnosis = false;
  bool previous_mtx = false;
  std::optional<bool> concurrent_mtx;
  bool previous_biologic = false;
  std::optional<double> baseline_dlqi;
  std::optional<double> baseline_pasi;
  Biologic biologic = Biologic::Adalimumab;
  bool repeat_series = false;
  double treatment_length_months = 0.0;
  OutcomeLabel outcome = OutcomeLabel::Continue;

  friend bool operator==(const PatientRecord&, const PatientRecord&) = default;
};

// ---------------------------------------------------------------------------
// Feature catalog: one entry per input column of the cohort file, in
// Table-1 order. Categorical and boolean values travel as level indices.

enum class Feature : std::uint8_t {
  AgeYears,
  Sex,
  HeightCm,
  WeightKg,
  ComorbidityCount,
  AgeAtDiagnosis,
  PsaDiagnosis,
  PreviousMtx,
  ConcurrentMtx,
  PreviousBiologic,
  BaselineDlqi,
  BaselinePasi,
  Biologic,
  RepeatSeries,
  TreatmentLength,
};

inline constexpr std::size_t kNumFeatures = 15;

enum class FeatureKind : std::uint8_t { Continuous, Integer, Boolean, Categorical };

struct FeatureInfo {
  Feature id;
  std::string_view name;
  FeatureKind kind;
  bool optional;
  double valid_min;     // load-time validation
  double valid_max;
  double feasible_min;  // default search range for profile optimization
  double feasible_max;
  std::span<const std::string_view> levels;  // categorical only
};

namespace detail {
inline constexpr std::array<std::string_view, 2> kSexLevels = {"male", "female"};
inline constexpr std::array<std::string_view, 4> kBiologicLevels = {"adalimumab", "etanercept",
                                                                    "infliximab", "ustekinumab"};
inline constexpr double kInf = 1e300;
}  // namespace detail

inline constexpr std::array<FeatureInfo, kNumFeatures> kFeatures = {{
    {Feature::AgeYears, "age_years", FeatureKind::Continuous, false, 0, 120, 9, 83, {}},
    {Feature::Sex, "sex", FeatureKind::Categorical, false, 0, 1, 0, 1, detail::kSexLevels},
    {Feature::HeightCm, "height_cm", FeatureKind::Continuous, true, 0, 272, 110, 198, {}},
    {Feature::WeightKg, "weight_kg", FeatureKind::Continuous, true, 0, 650, 30, 180, {}},
    {Feature::ComorbidityCount, "comorbidity_count", FeatureKind::Integer, true, 0, 1000, 0, 5, {}},
    {Feature::AgeAtDiagnosis, "age_at_diagnosis", FeatureKind::Continuous, true, 0, 120, 9, 70, {}},
    {Feature::PsaDiagnosis, "psa_diagnosis", FeatureKind::Boolean, false, 0, 1, 0, 1, {}},
    {Feature::PreviousMtx, "previous_mtx", FeatureKind::Boolean, false, 0, 1, 0, 1, {}},
    {Feature::ConcurrentMtx, "concurrent_mtx", FeatureKind::Boolean, true, 0, 1, 0, 1, {}},
    {Feature::PreviousBiologic, "previous_biologic", FeatureKind::Boolean, false, 0, 1, 0, 1, {}},
    {Feature::BaselineDlqi, "baseline_dlqi", FeatureKind::Continuous, true, 0, 32, 0, 32, {}},
    {Feature::BaselinePasi, "baseline_pasi", FeatureKind::Continuous, true, 0, 72, 0, 39.4, {}},
    {Feature::Biologic, "biologic", FeatureKind::Categorical, false, 0, 3, 0, 3,
     detail::kBiologicLevels},
    {Feature::RepeatSeries, "repeat_series", FeatureKind::Boolean, false, 0, 1, 0, 1, {}},
    {Feature::TreatmentLength, "treatment_length_months", FeatureKind::Continuous, false, 0,
     detail::kInf, 0, 120, {}},
}};

constexpr const FeatureInfo& feature_info(Feature f) {
  return kFeatures[static_cast<std::size_t>(f)];
}

inline std::optional<Feature> find_feature(std::string_view name) {
  for (const auto& info : kFeatures)
    if (info.name == name) return info.id;
  return std::nullopt;
}

/// Number of discrete levels (booleans count as two); 0 for numeric features.
constexpr std::size_t level_count(const FeatureInfo& info) {
  if (info.kind == FeatureKind::Boolean) return 2;
  if (info.kind == FeatureKind::Categorical) return info.levels.size();
  return 0;
}

inline std::string level_name(const FeatureInfo& info, std::size_t level) {
  if (info.kind == FeatureKind::Categorical) return std::string(info.levels[level]);
  return level == 0 ? "0" : "1";
}

/// Feature value as a number: level index for categoricals, 0/1 for booleans.
inline std::optional<double> get_feature(const PatientRecord& r, Feature f) {
  auto opt = [](const auto& o) -> std::optional<double> {
    if (!o) return std::nullopt;
    return static_cast<double>(*o);
  };
  switch (f) {
    case Feature::AgeYears: return r.age_years;
    case Feature::Sex: return static_cast<double>(r.sex);
    case Feature::HeightCm: return r.height_cm;
    case Feature::WeightKg: return r.weight_kg;
    case Feature::ComorbidityCount: return opt(r.comorbidity_count);
    case Feature::AgeAtDiagnosis: return r.age_at_diagnosis;
    case Feature::PsaDiagnosis: return r.psa_diagnosis ? 1.0 : 0.0;
    case Feature::PreviousMtx: return r.previous_mtx ? 1.0 : 0.0;
    case Feature::ConcurrentMtx: return opt(r.concurrent_mtx);
    case Feature::PreviousBiologic: return r.previous_biologic ? 1.0 : 0.0;
    case Feature::BaselineDlqi: return r.baseline_dlqi;
    case Feature::BaselinePasi: return r.baseline_pasi;
    case Feature::Biologic: return static_cast<double>(r.biologic);
    case Feature::RepeatSeries: return r.repeat_series ? 1.0 : 0.0;
    case Feature::TreatmentLength: return r.treatment_length_months;
  }
  return std::nullopt;
}

/// Inverse of get_feature. Clearing a required feature is a no-op.
inline void set_feature(PatientRecord& r, Feature f, std::optional<double> v) {
  auto as_bool = [](double x) { return x >= 0.5; };
  switch (f) {
    case Feature::AgeYears: if (v) r.age_years = *v; break;
    case Feature::Sex: if (v) r.sex = static_cast<Sex>(static_cast<int>(*v)); break;
    case Feature::HeightCm: r.height_cm = v; break;
    case Feature::WeightKg: r.weight_kg = v; break;
    case Feature::ComorbidityCount:
      r.comorbidity_count = v ? std::optional<int>(static_cast<int>(std::lround(*v))) : std::nullopt;
      break;
    case Feature::AgeAtDiagnosis: r.age_at_diagnosis = v; break;
    case Feature::PsaDiagnosis: if (v) r.psa_diagnosis = as_bool(*v); break;
    case Feature::PreviousMtx: if (v) r.previous_mtx = as_bool(*v); break;
    case Feature::ConcurrentMtx:
      r.concurrent_mtx = v ? std::optional<bool>(as_bool(*v)) : std::nullopt;
      break;
    case Feature::PreviousBiologic: if (v) r.previous_biologic = as_bool(*v); break;
    case Feature::BaselineDlqi: r.baseline_dlqi = v; break;
    case Feature::BaselinePasi: r.baseline_pasi = v; break;
    case Feature::Biologic: if (v) r.biologic = static_cast<Biologic>(static_cast<int>(*v)); break;
    case Feature::RepeatSeries: if (v) r.repeat_series = as_bool(*v); break;
    case Feature::TreatmentLength: if (v) r.treatment_length_months = *v; break;
  }
}

/// Checks the record invariants; throws RangeViolation naming the column.
/// `row` is the 1-based data row used in diagnostics (0 when not from a file).
inline void validate_record(const PatientRecord& r, std::size_t row = 0) {
  for (const auto& info : kFeatures) {
    auto v = get_feature(r, info.id);
    if (!v) continue;
    if (*v < info.valid_min || *v > info.valid_max)
      throw RowError(Errc::RangeViolation, row, std::string(info.name),
                     "value " + text::format_double(*v) + " outside [" +
                         text::format_double(info.valid_min) + ", " +
                         text::format_double(info.valid_max) + "]");
  }
  if (r.age_at_diagnosis && *r.age_at_diagnosis > r.age_years)
    throw RowError(Errc::RangeViolation, row, "age_at_diagnosis",
                   "age at diagnosis " + text::format_double(*r.age_at_diagnosis) +
                       " exceeds age " + text::format_double(r.age_years));
}

// ---------------------------------------------------------------------------
// CSV

inline constexpr std::string_view kOutcomeColumn = "outcome";

inline std::string csv_header() {
  std::string h;
  for (const auto& info : kFeatures) {
    h += info.name;
    h += ',';
  }
  h += kOutcomeColumn;
  return h;
}

namespace detail {

inline std::string format_cell(const FeatureInfo& info, std::optional<double> v) {
  if (!v) return "";
  switch (info.kind) {
    case FeatureKind::Categorical: return std::string(info.levels[static_cast<std::size_t>(*v)]);
    case FeatureKind::Boolean: return *v >= 0.5 ? "1" : "0";
    case FeatureKind::Integer: return std::to_string(static_cast<long long>(std::llround(*v)));
    case FeatureKind::Continuous: return text::format_double(*v);
  }
  return "";
}

inline std::optional<double> parse_cell(const FeatureInfo& info, std::string_view cell,
                                        std::size_t row) {
  if (cell.empty()) {
    if (info.optional) return std::nullopt;
    throw RowError(Errc::TypeError, row, std::string(info.name), "required value is empty");
  }
  auto fail = [&](std::string_view expected) -> RowError {
    return RowError(Errc::TypeError, row, std::string(info.name),
                    "expected " + std::string(expected) + ", got '" + std::string(cell) + "'");
  };
  switch (info.kind) {
    case FeatureKind::Categorical:
      for (std::size_t i = 0; i < info.levels.size(); ++i)
        if (info.levels[i] == cell) return static_cast<double>(i);
      throw fail("one of the declared levels");
    case FeatureKind::Boolean:
      if (cell == "0") return 0.0;
      if (cell == "1") return 1.0;
      throw fail("0 or 1");
    case FeatureKind::Integer: {
      auto v = text::parse_int(cell);
      if (!v) throw fail("an integer");
      return static_cast<double>(*v);
    }
    case FeatureKind::Continuous: {
      auto v = text::parse_double(cell);
      if (!v) throw fail("a number");
      return *v;
    }
  }
  return std::nullopt;
}

}  // namespace detail

inline std::string format_csv_row(const PatientRecord& r) {
  std::string line;
  for (const auto& info : kFeatures) {
    line += detail::format_cell(info, get_feature(r, info.id));
    line += ',';
  }
  line += label_key(r.outcome);
  return line;
}

inline void write_cohort(std::ostream& out, std::span<const PatientRecord> records) {
  out << csv_header() << '\n';
  for (const auto& r : records) out << format_csv_row(r) << '\n';
}

inline void write_cohort(const std::string& path, std::span<const PatientRecord> records) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(Errc::IoError, "cannot open '" + path + "' for writing");
  write_cohort(out, records);
}

/// Maps header names to positions; every schema column must be present.
class CsvHeader {
 public:
  explicit CsvHeader(std::string_view line) {
    auto cells = text::split(text::trim(line), ',');
    for (const auto& info : kFeatures) positions_.push_back(locate(cells, info.name));
    outcome_ = locate(cells, kOutcomeColumn);
    width_ = cells.size();
  }

  std::size_t position(std::size_t feature_index) const { return positions_[feature_index]; }
  std::size_t outcome_position() const { return outcome_; }
  std::size_t width() const { return width_; }

 private:
  static std::size_t locate(const std::vector<std::string_view>& cells, std::string_view name) {
    for (std::size_t i = 0; i < cells.size(); ++i)
      if (text::trim(cells[i]) == name) return i;
    throw Error(Errc::MissingColumn, "header lacks column '" + std::string(name) + "'");
  }

  std::vector<std::size_t> positions_;
  std::size_t outcome_ = 0;
  std::size_t width_ = 0;
};

/// Parses one data line. `require_outcome` is false for prediction inputs,
/// where outcome and treatment length may be left empty.
inline PatientRecord parse_csv_row(const CsvHeader& header, std::string_view line, std::size_t row,
                                   bool require_outcome = true) {
  auto cells = text::split(text::trim(line), ',');
  if (cells.size() != header.width())
    throw RowError(Errc::TypeError, row, "*",
                   "expected " + std::to_string(header.width()) + " cells, got " +
                       std::to_string(cells.size()));
  PatientRecord r;
  for (std::size_t f = 0; f < kNumFeatures; ++f) {
    const auto& info = kFeatures[f];
    auto cell = text::trim(cells[header.position(f)]);
    if (!require_outcome && info.id == Feature::TreatmentLength && cell.empty()) continue;
    set_feature(r, info.id, detail::parse_cell(info, cell, row));
  }
  auto outcome_cell = text::trim(cells[header.outcome_position()]);
  if (require_outcome || !outcome_cell.empty()) {
    auto label = parse_label(outcome_cell);
    if (!label)
      throw RowError(Errc::TypeError, row, std::string(kOutcomeColumn),
                     "unknown outcome '" + std::string(outcome_cell) + "'");
    r.outcome = *label;
  }
  validate_record(r, row);
  return r;
}

namespace detail {

/// Next line that is neither blank nor a '#' comment.
inline bool next_line(std::istream& in, std::string& line) {
  while (std::getline(in, line)) {
    const auto t = text::trim(line);
    if (!t.empty() && t.front() != '#') return true;
  }
  return false;
}

}  // namespace detail

struct RowDiagnostic {
  std::size_t row;
  std::string column;
  std::string error;  // error name, e.g. "RangeViolation"
  std::string message;
};

struct CohortLoad {
  std::vector<PatientRecord> records;
  std::vector<RowDiagnostic> rejected;
};

/// Parses every data row; rows that fail are reported in `rejected` rather
/// than aborting the load. Record order follows the file.
inline CohortLoad parse_cohort_lenient(std::istream& in) {
  CohortLoad out;
  std::string line;
  if (!detail::next_line(in, line)) throw Error(Errc::MissingColumn, "file has no header row");
  CsvHeader header(line);
  std::size_t row = 0;
  while (detail::next_line(in, line)) {
    ++row;
    try {
      out.records.push_back(parse_csv_row(header, line, row));
    } catch (const RowError& e) {
      out.rejected.push_back({e.row(), e.column(), std::string(e.name()), e.what()});
    }
  }
  return out;
}

/// Strict load: the first bad row aborts with a located error.
inline std::vector<PatientRecord> parse_cohort(std::istream& in) {
  std::vector<PatientRecord> records;
  std::string line;
  if (!detail::next_line(in, line)) throw Error(Errc::MissingColumn, "file has no header row");
  CsvHeader header(line);
  std::size_t row = 0;
  while (detail::next_line(in, line)) records.push_back(parse_csv_row(header, line, ++row));
  return records;
}

inline std::vector<PatientRecord> load_cohort(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::IoError, "cannot open '" + path + "'");
  return parse_cohort(in);
}

// ---------------------------------------------------------------------------
// Completeness

struct CompletenessRow {
  std::string feature;
  double percent;  // rounded to 2 decimals
};

inline std::vector<CompletenessRow> completeness_report(std::span<const PatientRecord> records) {
  if (records.empty()) throw Error(Errc::EmptyCohort, "completeness of an empty cohort");
  std::vector<CompletenessRow> rows;
  const double n = static_cast<double>(records.size());
  for (const auto& info : kFeatures) {
    std::size_t present = 0;
    for (const auto& r : records)
      if (get_feature(r, info.id)) ++present;
    const double pct = std::round(100.0 * static_cast<double>(present) / n * 100.0) / 100.0;
    rows.push_back({std::string(info.name), pct});
  }
  return rows;
}

inline void write_completeness_csv(std::ostream& out, const std::vector<CompletenessRow>& rows) {
  out << "feature,percent_non_missing\n";
  for (const auto& r : rows) out << r.feature << ',' << text::format_fixed(r.percent, 2) << '\n';
}

}  // namespace drugsurv
