#pragma once

// HTTP/JSON service over an immutable classifier (plus an optional length
// regressor). Handlers map a request to (status, JSON) without touching
// sockets; http.hpp binds them to routes.

#include <map>
#include <memory>
#include <optional>
#include <string>
#include <utility>

#include "drugsurv/cohort.hpp"
#include "drugsurv/error.hpp"
#include "drugsurv/learn/io.hpp"
#include "drugsurv/prescribe.hpp"
#include "drugsurv/text.hpp"
#include "json.hpp"

namespace drugsurv {

struct Response {
  int status = 200;
  nlohmann::json body;
};

/// A rejected request: HTTP status, error name, offending field (if any).
class RequestError : public std::runtime_error {
 public:
  RequestError(int status, std::string error, std::string field, const std::string& message)
      : std::runtime_error(message), status_(status), error_(std::move(error)), field_(std::move(field)) {}

  int status() const noexcept { return status_; }
  const std::string& error() const noexcept { return error_; }
  const std::string& field() const noexcept { return field_; }

  Response response() const {
    nlohmann::json b{{"error", error_}, {"message", what()}};
    if (!field_.empty()) b["field"] = field_;
    return {status_, b};
  }

 private:
  int status_;
  std::string error_;
  std::string field_;
};

inline int http_status(Errc code) {
  switch (code) {
    case Errc::TypeError:
    case Errc::CorruptFile: return 400;
    case Errc::MissingColumn:
    case Errc::RangeViolation:
    case Errc::UnknownFeature:
    case Errc::InvalidConfig:
    case Errc::SchemaMismatch:
    case Errc::FingerprintMismatch: return 422;
    default: return 500;
  }
}

/// Builds a record from a JSON patient object keyed by the cohort CSV column
/// names. Null or absent optionals become missing; `required` lists the
/// features that must be present. Wrong JSON types give 400, values outside
/// the feature's domain give 422.
inline PatientRecord record_from_json(const nlohmann::json& body, const std::vector<Feature>& required) {
  if (!body.is_object()) throw RequestError(400, "TypeError", "", "request body must be a JSON object");
  PatientRecord r;
  for (const auto& info : kFeatures) {
    const std::string name(info.name);
    const bool needed = std::find(required.begin(), required.end(), info.id) != required.end();
    const bool present = body.contains(name) && !body.at(name).is_null();
    if (!present) {
      if (needed) throw RequestError(422, "MissingColumn", name, "required field '" + name + "' is missing");
      if (info.optional) set_feature(r, info.id, std::nullopt);
      continue;
    }
    const auto& v = body.at(name);
    std::string cell;
    const auto type_error = [&](std::string_view expected) {
      return RequestError(400, "TypeError", name, "field '" + name + "' must be " + std::string(expected));
    };
    switch (info.kind) {
      case FeatureKind::Categorical:
        if (!v.is_string()) throw type_error("a string level");
        cell = v.get<std::string>();
        break;
      case FeatureKind::Boolean:
        if (v.is_boolean()) cell = v.get<bool>() ? "1" : "0";
        else if (v.is_number_integer() && (v.get<long long>() == 0 || v.get<long long>() == 1))
          cell = std::to_string(v.get<long long>());
        else throw type_error("a boolean");
        break;
      case FeatureKind::Integer:
        if (!v.is_number_integer()) throw type_error("an integer");
        cell = std::to_string(v.get<long long>());
        break;
      case FeatureKind::Continuous:
        if (!v.is_number()) throw type_error("a number");
        cell = text::format_double(v.get<double>());
        break;
    }
    try {
      set_feature(r, info.id, detail::parse_cell(info, cell, 0));
    } catch (const RowError& e) {
      throw RequestError(422, std::string(e.name()), name, "field '" + name + "': " + e.detail());
    }
  }
  try {
    validate_record(r);
  } catch (const RowError& e) {
    throw RequestError(422, std::string(e.name()), e.column(), e.detail());
  } catch (const Error& e) {
    throw RequestError(422, std::string(e.name()), "", e.detail());
  }
  return r;
}

inline nlohmann::json parse_body(const std::string& body) {
  try {
    return nlohmann::json::parse(body);
  } catch (const nlohmann::json::exception& e) {
    throw RequestError(400, "TypeError", "", std::string("malformed JSON: ") + e.what());
  }
}

class Service {
 public:
  explicit Service(ModelArtifact classifier, std::optional<ModelArtifact> length = std::nullopt)
      : classifier_(std::move(classifier)), length_(std::move(length)) {
    if (!is_classifier(classifier_.kind))
      throw Error(Errc::WrongKind, "the service needs a classifier as its primary model");
    if (!classifier_.schema) throw Error(Errc::SchemaMismatch, "classifier file has no embedded schema");
    check_fingerprint(classifier_, classifier_.schema->fingerprint());
    if (length_) {
      if (length_->kind != ModelKind::LengthGlm)
        throw Error(Errc::WrongKind, "the second model must be a length regressor");
      if (!length_->schema) throw Error(Errc::SchemaMismatch, "length model file has no embedded schema");
      check_fingerprint(*length_, length_->schema->fingerprint());
    }
    base_profile_ = center_profile(*classifier_.schema);
    for (const auto& info : kFeatures) {
      if (info.optional) continue;
      const bool used = classifier_.schema->uses(info.id) || (length_ && length_->schema->uses(info.id));
      if (used) required_.push_back(info.id);
    }
  }

  const ModelArtifact& classifier() const { return classifier_; }
  const std::optional<ModelArtifact>& length_model() const { return length_; }
  const PatientRecord& base_profile() const { return base_profile_; }
  const std::vector<Feature>& required_fields() const { return required_; }

  Response predict(const std::string& body) const {
    return guarded([&] {
      const auto record = record_from_json(parse_body(body), required_);
      const auto& schema = *classifier_.schema;
      const auto p = profile_probabilities(classifier_, schema, record);
      nlohmann::json out;
      out["probabilities"] = probabilities_json(p);
      out["predicted_class"] = label_key(argmax_label(p));
      if (length_) {
        Eigen::RowVectorXd row(static_cast<Eigen::Index>(length_->schema->width()));
        encode_row(record, *length_->schema, row);
        out["predicted_length_months"] =
            text::round_significant(predict_length(*length_, row, length_->schema->fingerprint()), 12);
      } else {
        out["predicted_length_months"] = nullptr;
      }
      return Response{200, out};
    });
  }

  Response optimize(const std::string& body) const {
    return guarded([&] {
      const auto j = body.empty() ? nlohmann::json::object() : parse_body(body);
      if (!j.is_object()) throw RequestError(400, "TypeError", "", "request body must be a JSON object");
      OptimizeOptions opts;
      if (j.contains("min_probability")) {
        if (!j.at("min_probability").is_number())
          throw RequestError(400, "TypeError", "min_probability", "min_probability must be a number");
        opts.min_probability = j.at("min_probability").get<double>();
        if (!(opts.min_probability >= 0.0 && opts.min_probability <= 1.0))
          throw RequestError(422, "RangeViolation", "min_probability", "min_probability must be in [0, 1]");
      }
      if (j.contains("target")) {
        const auto t = j.at("target").is_string() ? parse_label(j.at("target").get<std::string>()) : std::nullopt;
        if (!t) throw RequestError(422, "RangeViolation", "target", "target must be an outcome label");
        opts.target = *t;
      }
      const auto res = optimize_profile(classifier_, *classifier_.schema, opts);
      auto out = to_json(res, *classifier_.schema, opts);
      out["method"] = method_name(res.method);
      return Response{200, out};
    });
  }

  Response sweep(const std::string& feature, const std::optional<std::string>& points) const {
    return guarded([&] {
      if (feature.empty()) throw RequestError(400, "TypeError", "feature", "query parameter 'feature' is required");
      std::size_t n = kDefaultGridPoints;
      if (points) {
        const auto v = text::parse_int(*points);
        if (!v) throw RequestError(400, "TypeError", "points", "points must be an integer");
        if (*v < 2 || *v > 1000) throw RequestError(422, "RangeViolation", "points", "points must be in [2, 1000]");
        n = static_cast<std::size_t>(*v);
      }
      const auto curve = sweep_feature(classifier_, *classifier_.schema, base_profile_, feature, n);
      return Response{200, to_json(curve)};
    });
  }

  Response meta() const {
    nlohmann::json out;
    out["format_version"] = kModelFormatVersion;
    out["kinds"] = {{"classifier", kind_name(classifier_.kind)},
                    {"length", length_ ? nlohmann::json(kind_name(length_->kind)) : nlohmann::json()}};
    out["schema_fingerprint"] = classifier_.fingerprint;
    out["length_schema_fingerprint"] = length_ ? nlohmann::json(length_->fingerprint) : nlohmann::json();
    auto classes = nlohmann::json::array();
    for (auto k : kLabelKeys) classes.push_back(k);
    out["classes"] = classes;
    out["active_classes"] = classifier_.active;
    out["mode"] = mode_name(classifier_.schema->mode());
    auto meta_json = [](const TrainingMeta& m) {
      return nlohmann::json{{"iterations", m.iterations},
                            {"objective", m.objective},
                            {"seconds", m.seconds},
                            {"flags", m.flags}};
    };
    out["training_meta"] = meta_json(classifier_.meta);
    out["length_training_meta"] = length_ ? meta_json(length_->meta) : nlohmann::json();
    auto features = nlohmann::json::array();
    for (const auto& s : classifier_.schema->sources()) {
      const auto& info = feature_info(s.feature);
      nlohmann::json f{{"name", info.name},
                       {"optional", info.optional},
                       {"feasible_min", info.feasible_min},
                       {"feasible_max", info.feasible_max}};
      switch (info.kind) {
        case FeatureKind::Continuous: f["kind"] = "continuous"; break;
        case FeatureKind::Integer: f["kind"] = "integer"; break;
        case FeatureKind::Boolean: f["kind"] = "boolean"; break;
        case FeatureKind::Categorical: {
          f["kind"] = "categorical";
          auto levels = nlohmann::json::array();
          for (auto l : info.levels) levels.push_back(l);
          f["levels"] = levels;
          break;
        }
      }
      features.push_back(f);
    }
    out["features"] = features;
    out["base_profile"] = profile_json(base_profile_, *classifier_.schema);
    return {200, out};
  }

  /// Routes one request. `query` holds decoded query parameters.
  Response handle(std::string_view method, std::string_view path,
                  const std::map<std::string, std::string>& query, const std::string& body) const {
    if (method == "POST" && path == "/predict") return predict(body);
    if (method == "POST" && path == "/optimize") return optimize(body);
    if (method == "GET" && path == "/sweep") {
      const auto f = query.find("feature");
      const auto p = query.find("points");
      return sweep(f == query.end() ? "" : f->second,
                   p == query.end() ? std::nullopt : std::optional<std::string>(p->second));
    }
    if (method == "GET" && path == "/model/meta") return meta();
    return {404, {{"error", "NotFound"}, {"message", std::string(method) + " " + std::string(path)}}};
  }

 private:
  template <typename F>
  static Response guarded(F&& f) {
    try {
      return f();
    } catch (const RequestError& e) {
      return e.response();
    } catch (const Error& e) {
      return {http_status(e.code()), {{"error", std::string(e.name())}, {"message", e.detail()}}};
    }
  }

  ModelArtifact classifier_;
  std::optional<ModelArtifact> length_;
  PatientRecord base_profile_;
  std::vector<Feature> required_;
};

}  // namespace drugsurv
