#include <gtest/gtest.h>

#include <thread>

#include "drugsurv/http.hpp"
#include "drugsurv/learn/io.hpp"
#include "fixtures.hpp"

using namespace drugsurv;

namespace {

ModelArtifact trained(ModelKind kind, SchemaMode mode = SchemaMode::Baseline) {
  const auto records = fixtures::small_cohort(70, 300);
  const auto schema = derive_schema(records, mode);
  ModelConfig cfg;
  cfg.kind = kind;
  auto a = fit_model(encode(records, schema), cfg);
  a.schema = schema;
  return a;
}

const Service& service() {
  static const Service s(trained(ModelKind::Glm), trained(ModelKind::LengthGlm));
  return s;
}

nlohmann::json patient() {
  return {{"age_years", 47.5},        {"sex", "female"},        {"height_cm", 170.0},
          {"weight_kg", 101.0},       {"comorbidity_count", 1}, {"age_at_diagnosis", 22.0},
          {"psa_diagnosis", false},   {"previous_mtx", true},   {"concurrent_mtx", nullptr},
          {"previous_biologic", true}, {"baseline_dlqi", 14},    {"biologic", "ustekinumab"},
          {"repeat_series", false}};
}

}  // namespace

TEST(Service, PredictReturnsDistributionAndLength) {
  const auto r = service().predict(patient().dump());
  ASSERT_EQ(r.status, 200) << r.body.dump();
  double total = 0.0;
  for (auto k : kLabelKeys) total += r.body["probabilities"][std::string(k)].get<double>();
  EXPECT_NEAR(total, 1.0, 1e-9);
  EXPECT_TRUE(parse_label(r.body["predicted_class"].get<std::string>()).has_value());
  EXPECT_GE(r.body["predicted_length_months"].get<double>(), 0.0);
}

TEST(Service, PredictMatchesLibrary) {
  const auto& s = service();
  const auto r = s.predict(patient().dump());
  const auto record = record_from_json(patient(), s.required_fields());
  const auto p = profile_probabilities(s.classifier(), *s.classifier().schema, record);
  for (std::size_t k = 0; k < kNumClasses; ++k)
    EXPECT_NEAR(r.body["probabilities"][std::string(kLabelKeys[k])].get<double>(), p[k], 1e-11);
}

TEST(Service, BadRequests) {
  const auto& s = service();
  EXPECT_EQ(s.predict("{oops").status, 400);
  EXPECT_EQ(s.predict("[1,2]").status, 400);

  auto j = patient();
  j["age_years"] = "old";
  auto r = s.predict(j.dump());
  EXPECT_EQ(r.status, 400);
  EXPECT_EQ(r.body["error"], "TypeError");
  EXPECT_EQ(r.body["field"], "age_years");

  j = patient();
  j.erase("biologic");
  r = s.predict(j.dump());
  EXPECT_EQ(r.status, 422);
  EXPECT_EQ(r.body["error"], "MissingColumn");

  j = patient();
  j["weight_kg"] = 900.0;
  r = s.predict(j.dump());
  EXPECT_EQ(r.status, 422);
  EXPECT_EQ(r.body["error"], "RangeViolation");
  EXPECT_EQ(r.body["field"], "weight_kg");

  j = patient();
  j["biologic"] = "secukinumab";
  EXPECT_EQ(s.predict(j.dump()).status, 422);

  j = patient();
  j["age_at_diagnosis"] = 60.0;
  EXPECT_EQ(s.predict(j.dump()).status, 422);
}

TEST(Service, OptionalFieldsMayBeNullOrAbsent) {
  auto j = patient();
  j.erase("weight_kg");
  j["baseline_dlqi"] = nullptr;
  EXPECT_EQ(service().predict(j.dump()).status, 200);
}

TEST(Service, Optimize) {
  const auto& s = service();
  auto r = s.optimize(R"({"min_probability": 0.5, "target": "continue"})");
  ASSERT_EQ(r.status, 200) << r.body.dump();
  EXPECT_EQ(r.body["target"], "continue");
  EXPECT_TRUE(r.body["constraints"].is_array());
  EXPECT_TRUE(r.body["profile"].contains("weight_kg"));
  EXPECT_EQ(r.body["method"], "coordinate_ascent");
  EXPECT_EQ(s.optimize("").status, 200);
  EXPECT_EQ(s.optimize(R"({"min_probability": 2})").status, 422);
  EXPECT_EQ(s.optimize(R"({"min_probability": "high"})").status, 400);
  EXPECT_EQ(s.optimize(R"({"target": "cured"})").status, 422);
}

TEST(Service, Sweep) {
  const auto& s = service();
  auto r = s.sweep("weight_kg", "11");
  ASSERT_EQ(r.status, 200) << r.body.dump();
  EXPECT_EQ(r.body["values"].size(), 11u);
  EXPECT_EQ(r.body["probabilities"].size(), 11u);
  EXPECT_EQ(r.body["probabilities"][0].size(), kNumClasses);
  EXPECT_EQ(s.sweep("biologic", std::nullopt).body["values"][3], "ustekinumab");
  EXPECT_EQ(s.sweep("", std::nullopt).status, 400);
  EXPECT_EQ(s.sweep("weight_kg", "many").status, 400);
  EXPECT_EQ(s.sweep("weight_kg", "1").status, 422);
  EXPECT_EQ(s.sweep("bmi", std::nullopt).status, 422);
}

TEST(Service, MetaAndRouting) {
  const auto& s = service();
  const auto m = s.meta();
  EXPECT_EQ(m.status, 200);
  EXPECT_EQ(m.body["kinds"]["classifier"], "glm");
  EXPECT_EQ(m.body["kinds"]["length"], "length_glm");
  EXPECT_EQ(m.body["classes"].size(), kNumClasses);
  EXPECT_EQ(m.body["mode"], "baseline");
  EXPECT_EQ(m.body["schema_fingerprint"], s.classifier().fingerprint);
  bool saw_biologic = false;
  for (const auto& f : m.body["features"])
    if (f["name"] == "biologic") saw_biologic = f["levels"].size() == 4;
  EXPECT_TRUE(saw_biologic);
  EXPECT_EQ(s.handle("GET", "/model/meta", {}, "").body, m.body);
  EXPECT_EQ(s.handle("GET", "/nowhere", {}, "").status, 404);
  EXPECT_EQ(s.handle("GET", "/predict", {}, "").status, 404);
  EXPECT_EQ(s.handle("GET", "/sweep", {{"feature", "age_years"}, {"points", "3"}}, "").status, 200);
}

TEST(Service, RejectsUnusableModels) {
  EXPECT_THROW(Service(trained(ModelKind::LengthGlm)), Error);
  auto bare = trained(ModelKind::Glm);
  bare.schema.reset();
  EXPECT_THROW(Service{bare}, Error);
  EXPECT_THROW(Service(trained(ModelKind::Glm), trained(ModelKind::Tree)), Error);
}

TEST(Http, EndpointsOverLoopback) {
  httplib::Server server;
  int port = 0;
  std::mutex mu;
  std::condition_variable cv;
  std::thread thread([&] {
    serve_http(server, service(), ServeConfig{"127.0.0.1", 0}, [&](int p) {
      std::lock_guard<std::mutex> lock(mu);
      port = p;
      cv.notify_all();
    });
  });
  {
    std::unique_lock<std::mutex> lock(mu);
    ASSERT_TRUE(cv.wait_for(lock, std::chrono::seconds(10), [&] { return port > 0; }));
  }
  server.wait_until_ready();
  httplib::Client client("127.0.0.1", port);

  auto res = client.Get("/model/meta");
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 200);
  EXPECT_EQ(res->get_header_value("Content-Type"), "application/json");
  EXPECT_EQ(nlohmann::json::parse(res->body)["kinds"]["classifier"], "glm");

  res = client.Post("/predict", patient().dump(), "application/json");
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 200);
  EXPECT_EQ(nlohmann::json::parse(res->body), service().predict(patient().dump()).body);

  res = client.Post("/predict", "{bad", "application/json");
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 400);

  res = client.Get("/sweep?feature=weight_kg&points=5");
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 200);
  EXPECT_EQ(nlohmann::json::parse(res->body)["values"].size(), 5u);

  res = client.Post("/optimize", R"({"min_probability": 0.5})", "application/json");
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 200);

  res = client.Get("/missing");
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 404);

  server.stop();
  thread.join();
}
