#include <gtest/gtest.h>

#include <cmath>
#include <set>

#include "drugsurv/synth.hpp"
#include "fixtures.hpp"

using namespace drugsurv;

TEST(Synth, SameSeedSameCohort) {
  EXPECT_EQ(fixtures::small_cohort(11), fixtures::small_cohort(11));
  EXPECT_NE(fixtures::small_cohort(11), fixtures::small_cohort(12));
}

TEST(Synth, RecordsAreValid) {
  const auto c = synthesize_with_truth(fixtures::small_spec(3, 800));
  ASSERT_EQ(c.records.size(), 800u);
  for (std::size_t i = 0; i < c.records.size(); ++i) {
    EXPECT_NO_THROW(validate_record(c.records[i]));
    EXPECT_NO_THROW(validate_record(c.latent[i]));
    EXPECT_EQ(c.records[i].outcome, c.latent[i].outcome);
    EXPECT_GE(c.records[i].treatment_length_months, 0.0);
  }
}

TEST(Synth, MaskingOnlyClearsOptionalFeatures) {
  const auto c = synthesize_with_truth(fixtures::small_spec(4, 400));
  for (std::size_t i = 0; i < c.records.size(); ++i) {
    for (const auto& info : kFeatures) {
      const auto obs = get_feature(c.records[i], info.id);
      const auto lat = get_feature(c.latent[i], info.id);
      ASSERT_TRUE(lat.has_value());
      if (obs) EXPECT_EQ(*obs, *lat);
      else EXPECT_TRUE(info.optional) << info.name;
    }
  }
}

TEST(Synth, CompletenessTracksMarginals) {
  const auto records = fixtures::small_cohort(8, 4000);
  const auto rows = completeness_report(records);
  const auto spec = CohortSpec::defaults();
  auto pct = [&](std::string_view name) {
    for (const auto& r : rows)
      if (r.feature == name) return r.percent / 100.0;
    return -1.0;
  };
  EXPECT_NEAR(pct("weight_kg"), spec.weight.completeness, 0.03);
  EXPECT_NEAR(pct("baseline_dlqi"), spec.dlqi.completeness, 0.03);
  EXPECT_NEAR(pct("baseline_pasi"), spec.pasi.completeness, 0.03);
  EXPECT_DOUBLE_EQ(pct("biologic"), 1.0);
}

TEST(Synth, PlantedProbabilitiesAreDistributions) {
  const auto c = synthesize_with_truth(fixtures::small_spec(9, 200));
  for (const auto& p : c.outcome_probabilities) {
    double total = 0.0;
    for (double v : p) {
      EXPECT_GE(v, 0.0);
      total += v;
    }
    EXPECT_NEAR(total, 1.0, 1e-12);
  }
  EXPECT_GT(c.bayes_accuracy(), 0.5);
  EXPECT_LE(c.bayes_accuracy(), 1.0);
}

TEST(Synth, DefaultCohortUsesEveryLabel) {
  const auto records = synthesize_cohort(CohortSpec::defaults());
  std::set<OutcomeLabel> seen;
  for (const auto& r : records) seen.insert(r.outcome);
  EXPECT_EQ(seen.size(), kNumClasses);
}

TEST(Synth, LengthNoiseMatchesSpec) {
  const auto c = synthesize_with_truth(fixtures::small_spec(21, 5000));
  double ss = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < c.records.size(); ++i) {
    if (c.length_means[i] < 20.0) continue;  // away from truncation at 0
    const double e = c.records[i].treatment_length_months - c.length_means[i];
    ss += e * e;
    ++n;
  }
  EXPECT_NEAR(std::sqrt(ss / static_cast<double>(n)), 5.6, 0.25);
}

TEST(Synth, SpecJsonRoundTrip) {
  auto spec = CohortSpec::defaults();
  spec.n = 55;
  spec.seed = 99;
  spec.weight.completeness = 0.5;
  spec.length_noise_sd = 3.0;
  const auto back = cohort_spec_from_json(to_json(spec));
  EXPECT_EQ(to_json(back), to_json(spec));
  EXPECT_EQ(synthesize_cohort(back), synthesize_cohort(spec));
}

TEST(Synth, PartialJsonKeepsDefaults) {
  const auto spec = cohort_spec_from_json(nlohmann::json{{"n", 10}});
  EXPECT_EQ(spec.n, 10u);
  EXPECT_EQ(spec.seed, CohortSpec::defaults().seed);
  EXPECT_DOUBLE_EQ(spec.weight.mean, CohortSpec::defaults().weight.mean);
}

TEST(Synth, InvalidSpecsAreRejected) {
  auto spec = CohortSpec::defaults();
  spec.n = 0;
  EXPECT_THROW(spec.validate(), Error);
  spec = CohortSpec::defaults();
  spec.weight.completeness = 1.5;
  EXPECT_THROW(spec.validate(), Error);
  spec = CohortSpec::defaults();
  spec.biologic.weights = {1, 2};
  EXPECT_THROW(synthesize_cohort(spec), Error);
}
