#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "drugsurv/cohort.hpp"
#include "drugsurv/preprocess.hpp"
#include "drugsurv/random.hpp"
#include "drugsurv/synth.hpp"

namespace fixtures {

using namespace drugsurv;

// A random multinomial problem: standard-normal features and labels drawn
// from a random softmax over `classes` labels (Continue always included).
struct LinearInstance {
  FeatureMatrix matrix;
  std::vector<std::vector<double>> x;
  std::vector<int> y;                  // 0..classes-1, classes-1 = Continue
  std::vector<OutcomeLabel> labels;    // label of each class index
  double lambda = 0.1;
};

inline LinearInstance linear_instance(std::uint64_t seed, std::size_t n, std::size_t d, int classes,
                                      double lambda) {
  Rng rng(seed);
  LinearInstance inst;
  inst.lambda = lambda;
  static const OutcomeLabel pool[] = {OutcomeLabel::AdverseEvent, OutcomeLabel::PatientDecision,
                                      OutcomeLabel::LackOfEfficacy, OutcomeLabel::LossToFollowUp,
                                      OutcomeLabel::Other};
  for (int k = 0; k + 1 < classes; ++k) inst.labels.push_back(pool[k]);
  inst.labels.push_back(OutcomeLabel::Continue);

  std::vector<std::vector<double>> coef(static_cast<std::size_t>(classes), std::vector<double>(d + 1, 0.0));
  for (int k = 0; k + 1 < classes; ++k)
    for (auto& c : coef[static_cast<std::size_t>(k)]) c = rng.normal() * 0.8;

  inst.matrix.x.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<double> row(d);
    for (std::size_t j = 0; j < d; ++j) {
      row[j] = rng.normal();
      inst.matrix.x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = row[j];
    }
    std::vector<double> p(static_cast<std::size_t>(classes));
    double total = 0.0;
    for (int k = 0; k < classes; ++k) {
      double s = coef[static_cast<std::size_t>(k)][0];
      for (std::size_t j = 0; j < d; ++j) s += coef[static_cast<std::size_t>(k)][j + 1] * row[j];
      total += (p[static_cast<std::size_t>(k)] = std::exp(s));
    }
    double u = rng.uniform() * total;
    int label = classes - 1;
    for (int k = 0; k < classes; ++k) {
      u -= p[static_cast<std::size_t>(k)];
      if (u < 0) {
        label = k;
        break;
      }
    }
    // Every class appears at least once so all of them stay active.
    if (i < static_cast<std::size_t>(classes)) label = static_cast<int>(i);
    inst.x.push_back(row);
    inst.y.push_back(label);
    inst.matrix.labels.push_back(inst.labels[static_cast<std::size_t>(label)]);
    inst.matrix.lengths.push_back(0.0);
  }
  inst.matrix.fingerprint = "test";
  return inst;
}

inline CohortSpec small_spec(std::uint64_t seed, std::size_t n = 300) {
  auto spec = CohortSpec::defaults();
  spec.seed = seed;
  spec.n = n;
  return spec;
}

inline std::vector<PatientRecord> small_cohort(std::uint64_t seed, std::size_t n = 300) {
  return synthesize_cohort(small_spec(seed, n));
}

inline std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

// A fresh empty directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("drugsurv_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace fixtures
