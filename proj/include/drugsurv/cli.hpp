#pragma once

// Command-line front end:
//   drugsurv <synth|train|evaluate|length-eval|optimize|predict|serve> [--flag value]...
// Usage errors exit 2, data and model errors exit 1; both print a single
// line "error: <Name>: <message>" to stderr.

#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "drugsurv/cohort.hpp"
#include "drugsurv/evaluate.hpp"
#include "drugsurv/http.hpp"
#include "drugsurv/learn/io.hpp"
#include "drugsurv/prescribe.hpp"
#include "drugsurv/preprocess.hpp"
#include "drugsurv/report.hpp"
#include "drugsurv/serve.hpp"
#include "drugsurv/synth.hpp"

namespace drugsurv {

namespace cli {

struct ConfigFlags {
  std::string config_file;
  std::optional<double> lambda;
  std::optional<int> max_iterations;
  std::optional<double> tolerance;
  std::optional<int> max_depth;
  std::optional<std::size_t> min_leaf;
  std::optional<double> min_gain;
  std::optional<std::size_t> trees;
  std::optional<std::size_t> features_per_split;
  bool no_bootstrap = false;
  std::optional<std::size_t> rounds;
  std::optional<double> shrinkage;
  std::optional<int> gbt_depth;

  void attach(CLI::App* cmd) {
    cmd->add_option("--config", config_file, "Model configuration JSON (flags override it)");
    cmd->add_option("--lambda", lambda, "Ridge penalty");
    cmd->add_option("--max-iterations", max_iterations, "IRLS iteration cap");
    cmd->add_option("--tolerance", tolerance, "IRLS relative objective tolerance");
    cmd->add_option("--max-depth", max_depth, "Tree depth limit");
    cmd->add_option("--min-leaf", min_leaf, "Minimum rows per tree leaf");
    cmd->add_option("--min-gain", min_gain, "Minimum impurity gain for a split");
    cmd->add_option("--trees", trees, "Forest size");
    cmd->add_option("--features-per-split", features_per_split, "Forest candidate features per split (0: sqrt(d))");
    cmd->add_flag("--no-bootstrap", no_bootstrap, "Grow forest trees on the full sample");
    cmd->add_option("--rounds", rounds, "Boosting rounds");
    cmd->add_option("--shrinkage", shrinkage, "Boosting shrinkage");
    cmd->add_option("--gbt-depth", gbt_depth, "Boosting tree depth");
  }

  ModelConfig build(ModelKind kind, std::uint64_t seed) const {
    ModelConfig c;
    if (!config_file.empty()) {
      std::ifstream in(config_file);
      if (!in) throw Error(Errc::IoError, "cannot open '" + config_file + "'");
      try {
        auto j = nlohmann::json::parse(in);
        j["kind"] = kind_name(kind);
        c = config_from_json(j);
      } catch (const nlohmann::json::exception& e) {
        throw Error(Errc::InvalidConfig, config_file + ": " + e.what());
      }
    }
    c.kind = kind;
    c.seed = seed;
    if (lambda) c.lambda = *lambda;
    if (max_iterations) c.irls_max_iterations = *max_iterations;
    if (tolerance) c.irls_tolerance = *tolerance;
    if (max_depth) c.tree_max_depth = *max_depth;
    if (min_leaf) c.tree_min_leaf = *min_leaf;
    if (min_gain) c.tree_min_gain = *min_gain;
    if (trees) c.forest_trees = *trees;
    if (features_per_split) c.forest_features = *features_per_split;
    if (no_bootstrap) c.forest_bootstrap = false;
    if (rounds) c.gbt_rounds = *rounds;
    if (shrinkage) c.gbt_shrinkage = *shrinkage;
    if (gbt_depth) c.gbt_depth = *gbt_depth;
    c.validate();
    return c;
  }
};

inline std::string config_hash(const nlohmann::json& j) { return text::hex64(text::fnv1a(j.dump())); }

inline std::ofstream open_out(const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(Errc::IoError, "cannot open '" + path + "' for writing");
  return out;
}

inline void write_text(const std::string& path, const std::string& content) {
  auto out = open_out(path);
  out << content;
}

/// "roc.svg" + "tree" -> "roc_tree.svg" (used when several models share a path).
inline std::string with_suffix(const std::string& path, std::string_view suffix) {
  const auto dot = path.find_last_of('.');
  const auto slash = path.find_last_of('/');
  if (dot == std::string::npos || (slash != std::string::npos && dot < slash))
    return path + "_" + std::string(suffix);
  return path.substr(0, dot) + "_" + std::string(suffix) + path.substr(dot);
}

inline std::vector<ModelKind> parse_kinds(const std::string& list) {
  std::vector<ModelKind> out;
  for (auto part : text::split(list, ',')) out.push_back(parse_kind(text::trim(part)));
  if (out.empty()) throw Error(Errc::InvalidConfig, "no model kind given");
  return out;
}

inline nlohmann::json run_block(std::uint64_t seed, const std::string& hash) {
  return {{"seed", seed}, {"config_hash", hash}, {"format_version", kModelFormatVersion}};
}

inline void save_model_with_run(const ModelArtifact& a, const std::string& path, const nlohmann::json& run) {
  auto j = to_json(a);
  j["run"] = run;
  write_text(path, j.dump(1) + "\n");
}

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace cli

/// Runs one CLI invocation; `args` excludes the program name.
inline int run_cli(const std::vector<std::string>& args, std::ostream& out = std::cout,
                   std::ostream& err = std::cerr) {
  CLI::App app{"Drug-survival risk modelling: synthetic cohorts, training, evaluation, optimization, serving",
               "drugsurv"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all");

  // synth
  auto* synth = app.add_subcommand("synth", "Generate a synthetic cohort CSV");
  std::string spec_path, synth_out, completeness_out;
  std::optional<std::uint64_t> synth_seed;
  std::optional<std::size_t> synth_n;
  synth->add_option("--spec", spec_path, "Cohort spec JSON (defaults when omitted)");
  synth->add_option("--seed", synth_seed, "Generator seed (overrides the spec)");
  synth->add_option("--n", synth_n, "Row count (overrides the spec)");
  synth->add_option("--out", synth_out, "Cohort CSV to write")->required();
  synth->add_option("--completeness-out", completeness_out, "Per-feature completeness CSV");

  // shared
  std::string cohort_path, mode_str = "baseline";
  std::uint64_t seed = 0;

  // train
  auto* train = app.add_subcommand("train", "Fit a model and write its JSON file");
  std::string train_kind, train_out, tree_out, dot_out, pca_out;
  bool pca_screen_flag = false;
  cli::ConfigFlags train_flags;
  train->add_option("--model", train_kind, "glm|logreg|tree|forest|gbt|length_glm")->required();
  train->add_option("--cohort", cohort_path, "Training cohort CSV")->required();
  train->add_option("--out", train_out, "Model JSON to write")->required();
  train->add_option("--mode", mode_str, "baseline|retrospective");
  train->add_option("--seed", seed, "Seed for randomized learners");
  train->add_flag("--pca-screen", pca_screen_flag, "Drop columns with weak principal-component loadings");
  train->add_option("--pca-out", pca_out, "PCA screening report CSV");
  train->add_option("--export-tree", tree_out, "Indented text export (tree models)");
  train->add_option("--export-dot", dot_out, "Graphviz export (tree models)");
  train_flags.attach(train);

  // evaluate
  auto* evaluate = app.add_subcommand("evaluate", "k-fold cross-validation (one summary row per model)");
  std::string eval_kinds, eval_out, confusion_out, roc_out, auc_out, folds_out, holdout_out;
  std::size_t k = 5, holdout = 0;
  std::uint64_t eval_seed = 0;
  cli::ConfigFlags eval_flags;
  evaluate->add_option("--model", eval_kinds, "Model kind, or a comma-separated list")->required();
  evaluate->add_option("--cohort", cohort_path, "Cohort CSV")->required();
  evaluate->add_option("--k", k, "Number of folds");
  evaluate->add_option("--seed", eval_seed, "Fold shuffle and learner seed");
  evaluate->add_option("--mode", mode_str, "baseline|retrospective");
  evaluate->add_option("--out", eval_out, "Summary CSV (model,accuracy,sd,runtime_s)");
  evaluate->add_option("--confusion-out", confusion_out, "Pooled out-of-fold confusion matrix CSV");
  evaluate->add_option("--auc-out", auc_out, "One-vs-rest AUC table CSV");
  evaluate->add_option("--roc-out", roc_out, "One-vs-rest ROC curves SVG");
  evaluate->add_option("--folds-out", folds_out, "Per-fold accuracy CSV");
  evaluate->add_option("--holdout", holdout, "Also fit on a single split with this many test rows");
  evaluate->add_option("--holdout-confusion-out", holdout_out, "Confusion matrix CSV of the single split");
  eval_flags.attach(evaluate);

  // length-eval
  auto* length_eval = app.add_subcommand("length-eval", "Out-of-fold treatment-length agreement");
  std::string agreement_out, pairs_out, plot_out;
  std::size_t length_k = 5;
  std::uint64_t length_seed = 0;
  cli::ConfigFlags length_flags;
  length_eval->add_option("--cohort", cohort_path, "Cohort CSV")->required();
  length_eval->add_option("--k", length_k, "Number of folds");
  length_eval->add_option("--seed", length_seed, "Fold shuffle seed");
  length_eval->add_option("--out", agreement_out, "Agreement summary CSV");
  length_eval->add_option("--pairs-out", pairs_out, "Per-row mean/difference CSV");
  length_eval->add_option("--plot-out", plot_out, "Bland-Altman SVG");
  length_flags.attach(length_eval);

  // optimize
  auto* optimize = app.add_subcommand("optimize", "Search for the profile maximizing a label's probability");
  std::string model_file, optimize_out, target = "continue";
  double min_probability = 0.9;
  std::size_t points = kDefaultGridPoints;
  int max_sweeps = 10;
  optimize->add_option("--model-file", model_file, "Classifier JSON")->required();
  optimize->add_option("--min-probability", min_probability, "Probability the target label must reach");
  optimize->add_option("--target", target, "Outcome label to maximize");
  optimize->add_option("--points", points, "Grid points per continuous feature");
  optimize->add_option("--max-sweeps", max_sweeps, "Coordinate-ascent sweep limit");
  optimize->add_option("--out", optimize_out, "Profile JSON to write (stdout when omitted)");

  // predict
  auto* predict_cmd = app.add_subcommand("predict", "Class probabilities for one CSV row");
  std::string length_file, input_path, predict_out;
  std::size_t row_number = 1;
  predict_cmd->add_option("--model-file", model_file, "Classifier JSON")->required();
  predict_cmd->add_option("--length-model-file", length_file, "Length regressor JSON");
  predict_cmd->add_option("--input", input_path, "CSV with the cohort header")->required();
  predict_cmd->add_option("--row", row_number, "1-based data row to score");
  predict_cmd->add_option("--out", predict_out, "JSON to write (stdout when omitted)");

  // serve
  auto* serve = app.add_subcommand("serve", "Start the HTTP/JSON service");
  ServeConfig serve_cfg;
  serve->add_option("--model-file", model_file, "Classifier JSON")->required();
  serve->add_option("--length-model-file", length_file, "Length regressor JSON");
  serve->add_option("--host", serve_cfg.host, "Bind address");
  serve->add_option("--port", serve_cfg.port, "Port (0 picks a free one)");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    std::string msg = e.what();
    for (auto& ch : msg)
      if (ch == '\n') ch = ' ';
    err << "error: Usage: " << msg << '\n';
    return 2;
  }

  try {
    if (*synth) {
      CohortSpec spec = CohortSpec::defaults();
      if (!spec_path.empty()) {
        std::ifstream in(spec_path);
        if (!in) throw Error(Errc::IoError, "cannot open '" + spec_path + "'");
        nlohmann::json j;
        try {
          j = nlohmann::json::parse(in);
        } catch (const nlohmann::json::exception& e) {
          throw Error(Errc::InvalidSpec, spec_path + ": " + e.what());
        }
        spec = cohort_spec_from_json(j);
      }
      if (synth_seed) spec.seed = *synth_seed;
      if (synth_n) spec.n = *synth_n;
      spec.validate();
      const Provenance prov{spec.seed, cli::config_hash(to_json(spec)), kModelFormatVersion};
      const auto records = synthesize_cohort(spec);
      auto f = cli::open_out(synth_out);
      f << "# " << prov.line() << '\n';
      write_cohort(f, records);
      if (!completeness_out.empty()) {
        auto c = cli::open_out(completeness_out);
        c << "# " << prov.line() << '\n';
        write_completeness_csv(c, completeness_report(records));
      }
      return 0;
    }

    if (*train) {
      const auto mode = parse_mode(mode_str);
      const auto kind = parse_kind(train_kind);
      const auto cfg = train_flags.build(kind, seed);
      const auto records = load_cohort(cohort_path);
      auto schema = derive_schema(records, kind == ModelKind::LengthGlm ? SchemaMode::Baseline : mode);
      auto m = encode(records, schema);
      nlohmann::json hashed{{"command", "train"}, {"config", to_json(cfg)}, {"mode", mode_name(schema.mode())},
                            {"pca_screen", pca_screen_flag}};
      const Provenance prov{seed, cli::config_hash(hashed), kModelFormatVersion};
      if (pca_screen_flag || !pca_out.empty()) {
        const auto rep = pca_screen(m, schema);
        if (!pca_out.empty()) {
          auto f = cli::open_out(pca_out);
          f << "# " << prov.line() << '\n';
          write_pca_csv(f, rep);
        }
        if (pca_screen_flag && !rep.dropped.empty()) {
          schema = drop_columns(schema, rep.dropped);
          m = encode(records, schema);
        }
      }
      auto a = fit_model(m, cfg);
      a.schema = schema;
      cli::save_model_with_run(a, train_out, cli::run_block(seed, prov.config_hash));
      if (!tree_out.empty()) cli::write_text(tree_out, export_tree(a));
      if (!dot_out.empty()) cli::write_text(dot_out, export_tree_dot(a));
      for (const auto& flag : a.meta.flags) err << "warning: " << flag << '\n';
      return 0;
    }

    if (*evaluate) {
      const auto mode = parse_mode(mode_str);
      const auto kinds = cli::parse_kinds(eval_kinds);
      const auto records = load_cohort(cohort_path);
      std::vector<CvReport> reports;
      nlohmann::json hashed{{"command", "evaluate"}, {"k", k}, {"mode", mode_name(mode)}};
      for (auto kind : kinds) {
        const auto cfg = eval_flags.build(kind, eval_seed);
        hashed["configs"].push_back(to_json(cfg));
        reports.push_back(cross_validate(records, mode, cfg, k, eval_seed));
      }
      const Provenance prov{eval_seed, cli::config_hash(hashed), kModelFormatVersion};
      const bool many = kinds.size() > 1;
      auto path_for = [&](const std::string& p, ModelKind kind) {
        return many ? cli::with_suffix(p, kind_name(kind)) : p;
      };
      std::ostringstream table;
      write_cv_csv(table, reports);
      out << table.str();
      if (!eval_out.empty()) {
        auto f = cli::open_out(eval_out);
        write_cv_csv(f, reports, prov);
      }
      for (std::size_t i = 0; i < reports.size(); ++i) {
        const auto& r = reports[i];
        if (!confusion_out.empty()) {
          auto f = cli::open_out(path_for(confusion_out, r.kind));
          write_confusion_csv(f, r.pooled, prov);
        }
        if (!folds_out.empty()) {
          auto f = cli::open_out(path_for(folds_out, r.kind));
          write_folds_csv(f, r, prov);
        }
        if (!auc_out.empty() || !roc_out.empty()) {
          const auto table_auc = roc_table(r.truth, r.probabilities);
          if (!auc_out.empty()) {
            auto f = cli::open_out(path_for(auc_out, r.kind));
            write_auc_csv(f, table_auc, prov);
          }
          if (!roc_out.empty()) {
            auto f = cli::open_out(path_for(roc_out, r.kind));
            write_roc_svg(f, table_auc, "ROC (one-vs-rest), " + std::string(kind_name(r.kind)), prov);
          }
        }
        if (holdout > 0) {
          const auto split = holdout_split(records.size(), holdout, eval_seed);
          const auto h = evaluate_holdout(records, mode, eval_flags.build(kinds[i], eval_seed), split);
          out << "# holdout " << kind_name(r.kind) << " accuracy " << text::format_fixed(h.result.accuracy, 4)
              << " (" << h.result.matrix.trace() << "/" << h.result.matrix.total() << ")\n";
          if (!holdout_out.empty()) {
            auto f = cli::open_out(path_for(holdout_out, r.kind));
            write_confusion_csv(f, h.result.matrix, prov);
          }
        }
      }
      return 0;
    }

    if (*length_eval) {
      const auto cfg = length_flags.build(ModelKind::LengthGlm, length_seed);
      const auto records = load_cohort(cohort_path);
      const auto r = cross_validate_length(records, cfg, CvOptions{length_k, length_seed, false});
      nlohmann::json hashed{{"command", "length-eval"}, {"k", length_k}, {"config", to_json(cfg)}};
      const Provenance prov{length_seed, cli::config_hash(hashed), kModelFormatVersion};
      write_agreement_csv(out, r.agreement);
      if (!agreement_out.empty()) {
        auto f = cli::open_out(agreement_out);
        write_agreement_csv(f, r.agreement, prov);
      }
      if (!pairs_out.empty()) {
        auto f = cli::open_out(pairs_out);
        write_agreement_pairs_csv(f, r.agreement, prov);
      }
      if (!plot_out.empty()) {
        auto f = cli::open_out(plot_out);
        write_bland_altman_svg(f, r.agreement, "Bland-Altman: observed vs predicted length", prov);
      }
      return 0;
    }

    if (*optimize) {
      const auto a = load_model(model_file);
      if (!a.schema) throw Error(Errc::SchemaMismatch, "model file has no embedded schema");
      OptimizeOptions opts;
      const auto label = parse_label(target);
      if (!label) throw Error(Errc::InvalidConfig, "unknown target label '" + target + "'");
      opts.target = *label;
      opts.min_probability = min_probability;
      opts.max_sweeps = max_sweeps;
      opts.grids = default_grids(*a.schema, points);
      const auto res = optimize_profile(a, *a.schema, opts);
      auto j = to_json(res, *a.schema, opts);
      j["method"] = method_name(res.method);
      nlohmann::json hashed{{"command", "optimize"}, {"model", a.fingerprint}, {"target", target},
                            {"min_probability", min_probability}, {"points", points}, {"max_sweeps", max_sweeps}};
      j["run"] = cli::run_block(a.config.seed, cli::config_hash(hashed));
      const auto text_out = j.dump(1) + "\n";
      if (optimize_out.empty()) out << text_out;
      else cli::write_text(optimize_out, text_out);
      return 0;
    }

    if (*predict_cmd) {
      const auto a = load_model(model_file);
      if (!a.schema) throw Error(Errc::SchemaMismatch, "model file has no embedded schema");
      std::optional<ModelArtifact> len;
      if (!length_file.empty()) len = load_model(length_file);
      std::ifstream in(input_path, std::ios::binary);
      if (!in) throw Error(Errc::IoError, "cannot open '" + input_path + "'");
      std::string line;
      if (!detail::next_line(in, line)) throw Error(Errc::MissingColumn, "input has no header row");
      CsvHeader header(line);
      std::size_t row = 0;
      std::optional<PatientRecord> record;
      while (detail::next_line(in, line)) {
        if (++row == row_number) {
          record = parse_csv_row(header, line, row, false);
          break;
        }
      }
      if (!record) throw Error(Errc::TooFewRows, "input has no data row " + std::to_string(row_number));
      const Service service(a, len);
      nlohmann::json body = nlohmann::json::object();
      for (const auto& info : kFeatures) {
        const auto v = get_feature(*record, info.id);
        body[std::string(info.name)] = v ? feature_value_json(info.id, *v) : nlohmann::json();
      }
      const auto resp = service.predict(body.dump());
      if (resp.status != 200)
        throw Error(Errc::SchemaMismatch, resp.body.value("message", std::string("prediction failed")));
      auto j = resp.body;
      j["run"] = cli::run_block(a.config.seed, cli::config_hash({{"command", "predict"}, {"model", a.fingerprint},
                                                                 {"row", row_number}}));
      const auto text_out = j.dump(1) + "\n";
      if (predict_out.empty()) out << text_out;
      else cli::write_text(predict_out, text_out);
      return 0;
    }

    if (*serve) {
      auto a = load_model(model_file);
      std::optional<ModelArtifact> len;
      if (!length_file.empty()) len = load_model(length_file);
      const Service service(std::move(a), std::move(len));
      httplib::Server server;
      const bool ok = serve_http(server, service, serve_cfg, [&](int port) {
        out << "listening on " << serve_cfg.host << ":" << port << std::endl;
      });
      if (!ok) throw Error(Errc::IoError, "cannot bind " + serve_cfg.host + ":" + std::to_string(serve_cfg.port));
      return 0;
    }
  } catch (const Error& e) {
    std::string msg = e.what();
    for (auto& ch : msg)
      if (ch == '\n') ch = ' ';
    err << "error: " << msg << '\n';
    return 1;
  } catch (const std::exception& e) {
    err << "error: IoError: " << e.what() << '\n';
    return 1;
  }
  return 2;
}

inline int run_cli(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  std::vector<std::string> args;
  for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
  return run_cli(args, out, err);
}

}  // namespace drugsurv
