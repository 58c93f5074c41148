#include <gtest/gtest.h>

#include <cmath>

#include "drugsurv/learn/io.hpp"
#include "drugsurv/prescribe.hpp"
#include "fixtures.hpp"
#include "oracles.hpp"

using namespace drugsurv;

namespace {

struct Fitted {
  FeatureSchema schema;
  ModelArtifact glm;
  ModelArtifact tree;
};

const Fitted& fitted() {
  static const Fitted f = [] {
    const auto records = fixtures::small_cohort(50, 681);
    Fitted out;
    out.schema = derive_schema(records, SchemaMode::Baseline);
    const auto m = encode(records, out.schema);
    out.glm = fit_model(m, ModelConfig{});
    ModelConfig cfg;
    cfg.kind = ModelKind::Tree;
    cfg.tree_min_leaf = 5;
    out.tree = fit_model(m, cfg);
    return out;
  }();
  return f;
}

// A cohort whose only signal is a weight step: above 100 kg patients stop
// for lack of efficacy, below it they continue.
std::vector<PatientRecord> weight_step_cohort(std::uint64_t seed) {
  auto spec = fixtures::small_spec(seed, 681);
  for (auto& row : spec.outcome_coefficients) {
    row = TermVector{};
    row[term_index(MechanismTerm::Intercept)] = -6.0;
  }
  spec.outcome_coefficients[label_index(OutcomeLabel::Continue)] = TermVector{};
  auto& loe = spec.outcome_coefficients[label_index(OutcomeLabel::LackOfEfficacy)];
  loe[term_index(MechanismTerm::Intercept)] = -5.0;
  loe[term_index(MechanismTerm::WeightOver100)] = 10.0;
  spec.weight.completeness = 1.0;
  return synthesize_cohort(spec);
}

std::vector<double> subgrid(Feature f, Rng& rng) {
  auto full = default_grid(f, 10);
  if (full.size() <= 10) return full;
  std::vector<double> out;
  for (auto i : rng.sample_without_replacement(full.size(), 10)) out.push_back(full[i]);
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace

TEST(Grids, DefaultsCoverFeasibleRange) {
  const auto age = default_grid(Feature::AgeYears, 5);
  ASSERT_EQ(age.size(), 5u);
  EXPECT_EQ(age.front(), feature_info(Feature::AgeYears).feasible_min);
  EXPECT_EQ(age.back(), feature_info(Feature::AgeYears).feasible_max);
  EXPECT_EQ(default_grid(Feature::Biologic), (std::vector<double>{0, 1, 2, 3}));
  EXPECT_EQ(default_grid(Feature::PreviousBiologic), (std::vector<double>{0, 1}));
  const auto comorb = default_grid(Feature::ComorbidityCount);
  for (double v : comorb) EXPECT_EQ(v, std::floor(v));
}

TEST(Profiles, CenterProfileIsComplete) {
  const auto& f = fitted();
  const auto r = center_profile(f.schema);
  for (const auto& s : f.schema.sources()) EXPECT_TRUE(get_feature(r, s.feature).has_value());
  const auto p = profile_probabilities(f.glm, f.schema, r);
  double total = 0.0;
  for (double v : p) total += v;
  EXPECT_NEAR(total, 1.0, 1e-12);
}

TEST(Sweep, OneCurvePointPerGridValue) {
  const auto& f = fitted();
  const auto c = sweep_feature(f.glm, f.schema, center_profile(f.schema), "weight_kg", 20);
  ASSERT_EQ(c.values.size(), 20u);
  ASSERT_EQ(c.probabilities.size(), 20u);
  // A linear model in weight moves every class monotonically along the sweep.
  const auto k = label_index(OutcomeLabel::Continue);
  const bool up = c.probabilities.back()[k] >= c.probabilities.front()[k];
  for (std::size_t i = 1; i < c.values.size(); ++i)
    if (up) EXPECT_GE(c.probabilities[i][k], c.probabilities[i - 1][k] - 1e-12);
    else EXPECT_LE(c.probabilities[i][k], c.probabilities[i - 1][k] + 1e-12);
  try {
    sweep_feature(f.glm, f.schema, center_profile(f.schema), "bmi");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::UnknownFeature);
  }
  EXPECT_THROW(sweep_feature(f.glm, f.schema, center_profile(f.schema), "treatment_length_months"), Error);
}

TEST(Optimize, MatchesBruteForceOnSmallGrids) {
  const auto& f = fitted();
  std::vector<Feature> inputs;
  for (const auto& s : f.schema.sources()) inputs.push_back(s.feature);
  Rng rng(8);
  for (int instance = 0; instance < 40; ++instance) {
    const auto& model = instance % 2 ? f.tree : f.glm;
    const auto target = kAllLabels[rng.index(kNumClasses)];
    const std::size_t count = 1 + rng.index(4);
    OptimizeOptions opts;
    opts.target = target;
    opts.min_probability = 0.0;
    std::vector<std::vector<double>> grids;
    for (auto i : rng.sample_without_replacement(inputs.size(), count)) {
      opts.grids.push_back({inputs[i], subgrid(inputs[i], rng)});
      grids.push_back(opts.grids.back().values);
    }
    const auto res = optimize_profile(model, f.schema, opts);
    EXPECT_EQ(res.method, SearchMethod::Exhaustive);

    const auto base = center_profile(f.schema);
    const auto [best, point] = oracle::brute_force_grid(grids, [&](const std::vector<double>& v) {
      auto r = base;
      for (std::size_t g = 0; g < v.size(); ++g) set_feature(r, opts.grids[g].feature, v[g]);
      return profile_probabilities(model, f.schema, r)[label_index(target)];
    });
    EXPECT_NEAR(res.probabilities[label_index(target)], best, 1e-12) << "instance " << instance;
  }
}

TEST(Optimize, CoordinateAscentNeverDecreases) {
  const auto& f = fitted();
  for (auto target : {OutcomeLabel::Continue, OutcomeLabel::AdverseEvent, OutcomeLabel::LackOfEfficacy}) {
    OptimizeOptions opts;
    opts.target = target;
    opts.exhaustive_limit = 0;
    opts.min_probability = 0.0;
    const auto res = optimize_profile(f.tree, f.schema, opts);
    EXPECT_EQ(res.method, SearchMethod::CoordinateAscent);
    ASSERT_FALSE(res.sweep_objective.empty());
    EXPECT_LE(res.sweeps, opts.max_sweeps);
    for (std::size_t i = 1; i < res.sweep_objective.size(); ++i)
      EXPECT_GE(res.sweep_objective[i], res.sweep_objective[i - 1]);
    EXPECT_DOUBLE_EQ(res.sweep_objective.back(), res.probabilities[label_index(target)]);
    // A local optimum: no single-feature move on the grids improves it.
    for (const auto& g : res.grids) {
      const auto curve = sweep_feature(f.tree, f.schema, res.profile, g.feature, g.values);
      for (const auto& p : curve.probabilities)
        EXPECT_LE(p[label_index(target)], res.probabilities[label_index(target)] + 1e-15);
    }
  }
}

TEST(Optimize, RecoversPlantedWeightThreshold) {
  const auto records = weight_step_cohort(42);
  const auto schema = derive_schema(records, SchemaMode::Baseline);
  ModelConfig cfg;
  cfg.kind = ModelKind::Tree;
  const auto model = fit_model(encode(records, schema), cfg);
  OptimizeOptions opts;
  opts.min_probability = 0.9;
  const auto res = optimize_profile(model, schema, opts);
  ASSERT_FALSE(res.target_unreachable);
  const auto grid = default_grid(Feature::WeightKg);
  const double step = grid[1] - grid[0];
  bool found = false;
  for (const auto& c : res.constraints) {
    if (c.feature != Feature::WeightKg || c.relation != Relation::AtMost) continue;
    found = true;
    EXPECT_NEAR(c.boundary.front(), 100.0, step);
    EXPECT_GE(c.probability, 0.9);
    EXPECT_EQ(describe(c).rfind("weight_kg <= ", 0), 0u);
  }
  EXPECT_TRUE(found);
}

TEST(Optimize, ConstraintShapes) {
  const auto& f = fitted();
  OptimizeOptions opts;
  opts.min_probability = 0.5;
  const auto res = optimize_profile(f.glm, f.schema, opts);
  for (const auto& c : res.constraints) {
    const auto& info = feature_info(c.feature);
    ASSERT_FALSE(c.boundary.empty());
    if (level_count(info) > 0) {
      EXPECT_TRUE(c.relation == Relation::Equals || c.relation == Relation::OneOf);
      EXPECT_EQ(c.boundary.size() > 1, c.relation == Relation::OneOf);
    } else {
      EXPECT_TRUE(c.relation == Relation::AtMost || c.relation == Relation::AtLeast);
      EXPECT_EQ(c.boundary.size(), 1u);
    }
    EXPECT_GE(c.probability, 0.5);
    const auto j = to_json(c);
    EXPECT_EQ(j["feature"], info.name);
    EXPECT_EQ(j["relation"], relation_symbol(c.relation));
  }
  ProfileConstraint level{Feature::Biologic, Relation::OneOf, {1, 3}, 0.9};
  EXPECT_EQ(describe(level), "biologic in {etanercept, ustekinumab}");
  ProfileConstraint flag{Feature::PreviousBiologic, Relation::Equals, {0}, 0.9};
  EXPECT_EQ(describe(flag), "previous_biologic = false");
  ProfileConstraint dlqi{Feature::BaselineDlqi, Relation::AtLeast, {16}, 0.9};
  EXPECT_EQ(describe(dlqi), "baseline_dlqi >= 16.0");
}

TEST(Optimize, UnreachableTargetIsFlagged) {
  const auto& f = fitted();
  OptimizeOptions opts;
  opts.target = OutcomeLabel::Other;
  opts.min_probability = 0.999;
  const auto res = optimize_profile(f.glm, f.schema, opts);
  EXPECT_TRUE(res.target_unreachable);
  EXPECT_TRUE(res.constraints.empty());
  EXPECT_EQ(to_json(res, f.schema, opts)["flags"][0], "TargetUnreachable");
}

TEST(Optimize, InvalidRequests) {
  const auto& f = fitted();
  auto expect_code = [&](Errc code, const OptimizeOptions& o) {
    try {
      optimize_profile(f.glm, f.schema, o);
      FAIL();
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), code);
    }
  };
  OptimizeOptions o;
  o.grids = {{Feature::WeightKg, {50.0, 500.0}}};
  expect_code(Errc::RangeViolation, o);
  o.grids = {{Feature::Biologic, {0.0, 4.0}}};
  expect_code(Errc::RangeViolation, o);
  o.grids = {{Feature::TreatmentLength, {10.0}}};
  expect_code(Errc::UnknownFeature, o);
  o.grids = {{Feature::WeightKg, {}}};
  expect_code(Errc::InvalidConfig, o);
  o = {};
  o.min_probability = 1.5;
  expect_code(Errc::InvalidConfig, o);
  o = {};
  o.max_sweeps = 0;
  expect_code(Errc::InvalidConfig, o);
  const auto records = fixtures::small_cohort(51, 100);
  const auto retro = derive_schema(records, SchemaMode::Retrospective);
  EXPECT_THROW(optimize_profile(f.glm, retro, OptimizeOptions{}), Error);
}
