#pragma once

// Synthetic cohorts calibrated to registry-style marginals, with a
// planted softmax outcome mechanism and a planted linear treatment-length
// model. Outcomes and lengths are drawn from the fully observed latent record;
// completeness masking is applied afterwards.

#include <array>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "drugsurv/cohort.hpp"
#include "drugsurv/error.hpp"
#include "drugsurv/random.hpp"
#include "json.hpp"

namespace drugsurv {

struct NumericMarginal {
  double mean = 0.0;
  double sd = 1.0;
  double min = 0.0;
  double max = 1.0;
  double completeness = 1.0;
};

/// Level weights (counts or probabilities) plus the fraction of records
/// that carry the value.
struct CategoricalMarginal {
  std::vector<double> weights;
  double completeness = 1.0;
};

/// Inputs to the planted mechanisms, computed from the latent record.
enum class MechanismTerm : std::uint8_t {
  Intercept,
  AgeZ,             // (age - mean) / sd
  Female,
  WeightOver100,    // step at 100 kg
  ComorbidityCount,
  AgeAtDiagnosisZ,
  Psa,
  PreviousMtx,
  ConcurrentMtx,
  PreviousBiologic,
  DlqiZ,
  PasiZ,
  Etanercept,
  Infliximab,
  Ustekinumab,
  RepeatSeries,
};

inline constexpr std::size_t kNumTerms = 16;

inline constexpr std::array<std::string_view, kNumTerms> kTermNames = {
    "intercept",        "age_z",         "female",         "weight_over_100",
    "comorbidity_count", "age_at_diagnosis_z", "psa",      "previous_mtx",
    "concurrent_mtx",   "previous_biologic", "dlqi_z",     "pasi_z",
    "etanercept",       "infliximab",    "ustekinumab",    "repeat_series",
};

using TermVector = std::array<double, kNumTerms>;

struct CohortSpec {
  std::size_t n = 681;
  std::uint64_t seed = 42;

  NumericMarginal age{42.8, 13.0, 9, 83, 1.0};
  CategoricalMarginal sex{{375, 306}, 1.0};
  NumericMarginal height{174.1, 9.5, 110, 198, 0.7474};
  NumericMarginal weight{85.6, 18.0, 30, 180, 0.5727};
  CategoricalMarginal comorbidity{{395, 136, 40, 13, 6, 3}, 0.8708};  // counts 0..5
  NumericMarginal age_at_diagnosis{25.84, 12.0, 9, 70, 0.8032};
  CategoricalMarginal psa{{454, 227}, 1.0};
  CategoricalMarginal previous_mtx{{543, 138}, 1.0};
  CategoricalMarginal concurrent_mtx{{319, 49}, 0.5404};
  CategoricalMarginal previous_biologic{{464, 217}, 1.0};
  NumericMarginal dlqi{13.56, 7.5, 0, 32, 0.3818};
  NumericMarginal pasi{10.5, 6.5, 0, 39.4, 0.0825};
  CategoricalMarginal biologic{{253, 196, 117, 115}, 1.0};
  CategoricalMarginal repeat_series{{248, 433}, 1.0};

  /// Softmax logits per outcome label (rows in label order).
  std::array<TermVector, kNumClasses> outcome_coefficients{};
  /// Linear treatment-length model in months.
  TermVector length_coefficients{};
  double length_noise_sd = 5.6;

  /// Registry-calibrated marginals with the default planted mechanisms:
  /// previous biologic use and weight above 100 kg raise discontinuation
  /// odds; infliximab raises lack-of-efficacy.
  static CohortSpec defaults();

  void validate() const;
};

constexpr std::size_t term_index(MechanismTerm t) { return static_cast<std::size_t>(t); }

inline CohortSpec CohortSpec::defaults() {
  CohortSpec s;
  using T = MechanismTerm;
  auto set = [](TermVector& row, T term, double v) { row[term_index(term)] = v; };

  auto& ae = s.outcome_coefficients[label_index(OutcomeLabel::AdverseEvent)];
  set(ae, T::Intercept, -8.5);
  set(ae, T::AgeZ, 3.5);
  set(ae, T::Female, 2.5);
  set(ae, T::ComorbidityCount, 0.3);
  set(ae, T::PreviousMtx, 8.5);

  auto& pd = s.outcome_coefficients[label_index(OutcomeLabel::PatientDecision)];
  set(pd, T::Intercept, -3.2);
  set(pd, T::RepeatSeries, 0.5);

  auto& loe = s.outcome_coefficients[label_index(OutcomeLabel::LackOfEfficacy)];
  set(loe, T::Intercept, -8.0);
  set(loe, T::AgeZ, 0.7);
  set(loe, T::WeightOver100, 1.5);
  set(loe, T::Psa, 4.0);
  set(loe, T::PreviousBiologic, 10.0);
  set(loe, T::Infliximab, 7.0);
  set(loe, T::Ustekinumab, -7.0);

  auto& ltf = s.outcome_coefficients[label_index(OutcomeLabel::LossToFollowUp)];
  set(ltf, T::Intercept, -3.0);

  auto& other = s.outcome_coefficients[label_index(OutcomeLabel::Other)];
  set(other, T::Intercept, -3.0);

  auto& len = s.length_coefficients;
  set(len, T::Intercept, 40.0);
  set(len, T::AgeZ, 10.0);
  set(len, T::Female, -5.0);
  set(len, T::Psa, -6.0);
  set(len, T::PreviousMtx, -6.0);
  set(len, T::PreviousBiologic, -15.0);
  set(len, T::Infliximab, -10.0);
  set(len, T::Ustekinumab, 8.0);
  set(len, T::RepeatSeries, 10.0);
  s.length_noise_sd = 5.6;
  return s;
}

inline void CohortSpec::validate() const {
  auto fail = [](const std::string& what) { throw Error(Errc::InvalidSpec, what); };
  if (n == 0) fail("n must be positive");
  auto check_numeric = [&](const NumericMarginal& m, const char* name) {
    if (!(m.min <= m.mean && m.mean <= m.max))
      fail(std::string(name) + ": mean outside [min, max]");
    if (!(m.sd > 0.0)) fail(std::string(name) + ": sd must be positive");
    if (!(m.completeness >= 0.0 && m.completeness <= 1.0))
      fail(std::string(name) + ": completeness outside [0, 1]");
  };
  auto check_categorical = [&](const CategoricalMarginal& m, std::size_t levels, const char* name) {
    if (m.weights.size() != levels)
      fail(std::string(name) + ": expected " + std::to_string(levels) + " level weights");
    double total = 0.0;
    for (double w : m.weights) {
      if (!(w >= 0.0)) fail(std::string(name) + ": negative level weight");
      total += w;
    }
    if (!(total > 0.0)) fail(std::string(name) + ": level weights sum to zero");
    if (!(m.completeness >= 0.0 && m.completeness <= 1.0))
      fail(std::string(name) + ": completeness outside [0, 1]");
  };
  check_numeric(age, "age_years");
  check_categorical(sex, 2, "sex");
  check_numeric(height, "height_cm");
  check_numeric(weight, "weight_kg");
  check_categorical(comorbidity, 6, "comorbidity_count");
  check_numeric(age_at_diagnosis, "age_at_diagnosis");
  check_categorical(psa, 2, "psa_diagnosis");
  check_categorical(previous_mtx, 2, "previous_mtx");
  check_categorical(concurrent_mtx, 2, "concurrent_mtx");
  check_categorical(previous_biologic, 2, "previous_biologic");
  check_numeric(dlqi, "baseline_dlqi");
  check_numeric(pasi, "baseline_pasi");
  check_categorical(biologic, 4, "biologic");
  check_categorical(repeat_series, 2, "repeat_series");
  if (age.min < 0 || age.max > 120) fail("age_years range outside [0, 120]");
  if (dlqi.min < 0 || dlqi.max > 32) fail("baseline_dlqi range outside [0, 32]");
  if (pasi.min < 0 || pasi.max > 72) fail("baseline_pasi range outside [0, 72]");
  if (age_at_diagnosis.min > age.min)
    fail("age_at_diagnosis minimum exceeds the youngest possible age");
  if (!(length_noise_sd >= 0.0)) fail("length noise sd must be non-negative");
  for (const auto& row : outcome_coefficients)
    for (double c : row)
      if (!std::isfinite(c)) fail("non-finite outcome coefficient");
  for (double c : length_coefficients)
    if (!std::isfinite(c)) fail("non-finite length coefficient");
}

/// Mechanism inputs for a fully observed record.
inline TermVector mechanism_terms(const CohortSpec& spec, const PatientRecord& r) {
  TermVector t{};
  using T = MechanismTerm;
  auto put = [&](T term, double v) { t[term_index(term)] = v; };
  put(T::Intercept, 1.0);
  put(T::AgeZ, (r.age_years - spec.age.mean) / spec.age.sd);
  put(T::Female, r.sex == Sex::Female ? 1.0 : 0.0);
  put(T::WeightOver100, r.weight_kg.value_or(0.0) > 100.0 ? 1.0 : 0.0);
  put(T::ComorbidityCount, static_cast<double>(r.comorbidity_count.value_or(0)));
  put(T::AgeAtDiagnosisZ,
      (r.age_at_diagnosis.value_or(spec.age_at_diagnosis.mean) - spec.age_at_diagnosis.mean) /
          spec.age_at_diagnosis.sd);
  put(T::Psa, r.psa_diagnosis ? 1.0 : 0.0);
  put(T::PreviousMtx, r.previous_mtx ? 1.0 : 0.0);
  put(T::ConcurrentMtx, r.concurrent_mtx.value_or(false) ? 1.0 : 0.0);
  put(T::PreviousBiologic, r.previous_biologic ? 1.0 : 0.0);
  put(T::DlqiZ, (r.baseline_dlqi.value_or(spec.dlqi.mean) - spec.dlqi.mean) / spec.dlqi.sd);
  put(T::PasiZ, (r.baseline_pasi.value_or(spec.pasi.mean) - spec.pasi.mean) / spec.pasi.sd);
  put(T::Etanercept, r.biologic == Biologic::Etanercept ? 1.0 : 0.0);
  put(T::Infliximab, r.biologic == Biologic::Infliximab ? 1.0 : 0.0);
  put(T::Ustekinumab, r.biologic == Biologic::Ustekinumab ? 1.0 : 0.0);
  put(T::RepeatSeries, r.repeat_series ? 1.0 : 0.0);
  return t;
}

/// Planted outcome distribution for a fully observed record.
inline std::array<double, kNumClasses> planted_probabilities(const CohortSpec& spec,
                                                             const PatientRecord& latent) {
  const auto t = mechanism_terms(spec, latent);
  std::array<double, kNumClasses> logits{};
  for (std::size_t k = 0; k < kNumClasses; ++k) {
    double s = 0.0;
    for (std::size_t j = 0; j < kNumTerms; ++j) s += spec.outcome_coefficients[k][j] * t[j];
    logits[k] = s;
  }
  double mx = logits[0];
  for (double l : logits) mx = std::max(mx, l);
  double total = 0.0;
  for (auto& l : logits) {
    l = std::exp(l - mx);
    total += l;
  }
  for (auto& l : logits) l /= total;
  return logits;
}

/// Planted mean treatment length (before noise and truncation).
inline double planted_length_mean(const CohortSpec& spec, const PatientRecord& latent) {
  const auto t = mechanism_terms(spec, latent);
  double s = 0.0;
  for (std::size_t j = 0; j < kNumTerms; ++j) s += spec.length_coefficients[j] * t[j];
  return s;
}

struct SyntheticCohort {
  std::vector<PatientRecord> records;  // after completeness masking
  std::vector<PatientRecord> latent;   // fully observed
  std::vector<std::array<double, kNumClasses>> outcome_probabilities;
  std::vector<double> length_means;

  /// Expected accuracy of the planted-mechanism argmax classifier.
  double bayes_accuracy() const {
    if (outcome_probabilities.empty()) return 0.0;
    double acc = 0.0;
    for (const auto& p : outcome_probabilities) acc += *std::max_element(p.begin(), p.end());
    return acc / static_cast<double>(outcome_probabilities.size());
  }

  /// Accuracy of predicting every drawn outcome by the argmax of its planted
  /// probabilities (the realized counterpart of bayes_accuracy()).
  double planted_accuracy() const {
    if (outcome_probabilities.empty()) return 0.0;
    std::size_t hits = 0;
    for (std::size_t i = 0; i < outcome_probabilities.size(); ++i) {
      const auto& p = outcome_probabilities[i];
      const auto best = static_cast<std::size_t>(std::max_element(p.begin(), p.end()) - p.begin());
      hits += kAllLabels[best] == latent[i].outcome ? 1 : 0;
    }
    return static_cast<double>(hits) / static_cast<double>(outcome_probabilities.size());
  }
};

namespace detail {

inline double truncated_normal(Rng& rng, double mean, double sd, double lo, double hi) {
  for (int attempt = 0; attempt < 1000; ++attempt) {
    const double x = rng.normal(mean, sd);
    if (x >= lo && x <= hi) return x;
  }
  return std::clamp(mean, lo, hi);
}

inline double round_to(double v, double step) {
  const double inv = std::round(1.0 / step);
  return std::round(v * inv) / inv;
}

}  // namespace detail

inline SyntheticCohort synthesize_with_truth(const CohortSpec& spec) {
  spec.validate();
  Rng rng(spec.seed);
  SyntheticCohort out;
  out.records.reserve(spec.n);
  out.latent.reserve(spec.n);

  auto draw_numeric = [&](const NumericMarginal& m, double hi_cap = 1e300) {
    return detail::round_to(
        detail::truncated_normal(rng, m.mean, m.sd, m.min, std::min(m.max, hi_cap)), 0.1);
  };
  auto draw_level = [&](const CategoricalMarginal& m) { return rng.categorical(m.weights); };

  for (std::size_t i = 0; i < spec.n; ++i) {
    PatientRecord r;
    r.age_years = draw_numeric(spec.age);
    r.sex = draw_level(spec.sex) == 0 ? Sex::Male : Sex::Female;
    r.height_cm = draw_numeric(spec.height);
    r.weight_kg = draw_numeric(spec.weight);
    r.comorbidity_count = static_cast<int>(draw_level(spec.comorbidity));
    r.age_at_diagnosis = draw_numeric(spec.age_at_diagnosis, r.age_years);
    if (*r.age_at_diagnosis > r.age_years) r.age_at_diagnosis = r.age_years;
    r.psa_diagnosis = draw_level(spec.psa) == 1;
    r.previous_mtx = draw_level(spec.previous_mtx) == 1;
    r.concurrent_mtx = draw_level(spec.concurrent_mtx) == 1;
    r.previous_biologic = draw_level(spec.previous_biologic) == 1;
    r.baseline_dlqi = std::round(detail::truncated_normal(rng, spec.dlqi.mean, spec.dlqi.sd,
                                                          spec.dlqi.min, spec.dlqi.max));
    r.baseline_pasi = draw_numeric(spec.pasi);
    r.biologic = static_cast<Biologic>(draw_level(spec.biologic));
    r.repeat_series = draw_level(spec.repeat_series) == 1;

    const auto probs = planted_probabilities(spec, r);
    r.outcome = kAllLabels[rng.categorical(std::vector<double>(probs.begin(), probs.end()))];
    const double mean_length = planted_length_mean(spec, r);
    r.treatment_length_months =
        detail::round_to(std::max(0.0, rng.normal(mean_length, spec.length_noise_sd)), 0.01);

    PatientRecord observed = r;
    auto mask = [&](auto& field, double completeness) {
      if (!rng.bernoulli(completeness)) field.reset();
    };
    mask(observed.height_cm, spec.height.completeness);
    mask(observed.weight_kg, spec.weight.completeness);
    mask(observed.comorbidity_count, spec.comorbidity.completeness);
    mask(observed.age_at_diagnosis, spec.age_at_diagnosis.completeness);
    mask(observed.concurrent_mtx, spec.concurrent_mtx.completeness);
    mask(observed.baseline_dlqi, spec.dlqi.completeness);
    mask(observed.baseline_pasi, spec.pasi.completeness);

    out.latent.push_back(r);
    out.records.push_back(observed);
    out.outcome_probabilities.push_back(probs);
    out.length_means.push_back(mean_length);
  }
  return out;
}

inline std::vector<PatientRecord> synthesize_cohort(const CohortSpec& spec) {
  return synthesize_with_truth(spec).records;
}

// ---------------------------------------------------------------------------
// JSON. Every key is optional; absent keys keep the defaults() value.
//
// {
//   "n": 681, "seed": 42,
//   "marginals": {"weight_kg": {"mean": 85.6, "sd": 18, "min": 30, "max": 180,
//                               "completeness": 0.5727},
//                 "biologic": {"weights": [253, 196, 117, 115], "completeness": 1}},
//   "outcome_model": {"lack_of_efficacy": {"intercept": -1.6, "infliximab": 2.6}},
//   "length_model": {"coefficients": {"intercept": 40}, "noise_sd": 5.6}
// }

namespace detail {

template <typename F>
inline void for_each_marginal(CohortSpec& s, F&& f) {
  f("age_years", &s.age, nullptr);
  f("sex", nullptr, &s.sex);
  f("height_cm", &s.height, nullptr);
  f("weight_kg", &s.weight, nullptr);
  f("comorbidity_count", nullptr, &s.comorbidity);
  f("age_at_diagnosis", &s.age_at_diagnosis, nullptr);
  f("psa_diagnosis", nullptr, &s.psa);
  f("previous_mtx", nullptr, &s.previous_mtx);
  f("concurrent_mtx", nullptr, &s.concurrent_mtx);
  f("previous_biologic", nullptr, &s.previous_biologic);
  f("baseline_dlqi", &s.dlqi, nullptr);
  f("baseline_pasi", &s.pasi, nullptr);
  f("biologic", nullptr, &s.biologic);
  f("repeat_series", nullptr, &s.repeat_series);
}

inline std::size_t term_from_name(const std::string& name) {
  for (std::size_t j = 0; j < kNumTerms; ++j)
    if (kTermNames[j] == name) return j;
  throw Error(Errc::InvalidSpec, "unknown mechanism term '" + name + "'");
}

inline nlohmann::json terms_to_json(const TermVector& row) {
  nlohmann::json j = nlohmann::json::object();
  for (std::size_t t = 0; t < kNumTerms; ++t)
    if (row[t] != 0.0) j[std::string(kTermNames[t])] = row[t];
  return j;
}

inline void terms_from_json(const nlohmann::json& j, TermVector& row) {
  if (!j.is_object()) throw Error(Errc::InvalidSpec, "coefficient block must be an object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (!it.value().is_number())
      throw Error(Errc::InvalidSpec, "coefficient '" + it.key() + "' must be a number");
    row[term_from_name(it.key())] = it.value().get<double>();
  }
}

}  // namespace detail

inline nlohmann::json to_json(const CohortSpec& spec) {
  nlohmann::json j;
  j["n"] = spec.n;
  j["seed"] = spec.seed;
  auto& marginals = j["marginals"];
  CohortSpec copy = spec;
  detail::for_each_marginal(copy, [&](const char* name, NumericMarginal* num,
                                      CategoricalMarginal* cat) {
    if (num)
      marginals[name] = {{"mean", num->mean},
                         {"sd", num->sd},
                         {"min", num->min},
                         {"max", num->max},
                         {"completeness", num->completeness}};
    else
      marginals[name] = {{"weights", cat->weights}, {"completeness", cat->completeness}};
  });
  auto& outcome = j["outcome_model"];
  for (std::size_t k = 0; k < kNumClasses; ++k)
    outcome[std::string(kLabelKeys[k])] = detail::terms_to_json(spec.outcome_coefficients[k]);
  j["length_model"] = {{"coefficients", detail::terms_to_json(spec.length_coefficients)},
                       {"noise_sd", spec.length_noise_sd}};
  return j;
}

/// Overlays `j` on top of defaults(). Mechanism blocks, when present,
/// replace the default coefficients of that row entirely.
inline CohortSpec cohort_spec_from_json(const nlohmann::json& j) {
  CohortSpec s = CohortSpec::defaults();
  try {
    if (j.contains("n")) {
      const auto n = j.at("n").get<long long>();
      if (n <= 0) throw Error(Errc::InvalidSpec, "n must be positive");
      s.n = static_cast<std::size_t>(n);
    }
    if (j.contains("seed")) s.seed = j.at("seed").get<std::uint64_t>();
    if (j.contains("marginals")) {
      const auto& m = j.at("marginals");
      detail::for_each_marginal(s, [&](const char* name, NumericMarginal* num,
                                       CategoricalMarginal* cat) {
        if (!m.contains(name)) return;
        const auto& e = m.at(name);
        if (num) {
          num->mean = e.value("mean", num->mean);
          num->sd = e.value("sd", num->sd);
          num->min = e.value("min", num->min);
          num->max = e.value("max", num->max);
          num->completeness = e.value("completeness", num->completeness);
        } else {
          if (e.contains("weights")) cat->weights = e.at("weights").get<std::vector<double>>();
          cat->completeness = e.value("completeness", cat->completeness);
        }
      });
    }
    if (j.contains("outcome_model")) {
      const auto& om = j.at("outcome_model");
      for (auto it = om.begin(); it != om.end(); ++it) {
        auto label = parse_label(it.key());
        if (!label) throw Error(Errc::InvalidSpec, "unknown outcome '" + it.key() + "'");
        auto& row = s.outcome_coefficients[label_index(*label)];
        row.fill(0.0);
        detail::terms_from_json(it.value(), row);
      }
    }
    if (j.contains("length_model")) {
      const auto& lm = j.at("length_model");
      if (lm.contains("coefficients")) {
        s.length_coefficients.fill(0.0);
        detail::terms_from_json(lm.at("coefficients"), s.length_coefficients);
      }
      s.length_noise_sd = lm.value("noise_sd", s.length_noise_sd);
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::InvalidSpec, e.what());
  }
  s.validate();
  return s;
}

}  // namespace drugsurv
