#include "hetrisk/cli.hpp"

#include <CLI11.hpp>

#include <csignal>
#include <cstdlib>
#include <iostream>
#include <random>

#include "hetrisk/bank.hpp"
#include "hetrisk/error.hpp"
#include "hetrisk/harness.hpp"
#include "hetrisk/model_io.hpp"
#include "hetrisk/service.hpp"
#include "hetrisk/synth.hpp"

namespace hetrisk {

namespace {

struct Context {
  std::string command;
  std::ostream& out;
  std::ostream& err;
};

std::uint64_t resolve_seed(const std::optional<std::uint64_t>& given) {
  if (given) return *given;
  std::random_device rd;
  return (static_cast<std::uint64_t>(rd()) << 32) ^ rd();
}

void print_seed(const Context& ctx, std::optional<std::uint64_t> seed) {
  if (seed) {
    ctx.err << "seed: " << *seed << "\n";
  } else {
    ctx.err << "seed: none (deterministic command)\n";
  }
}

std::string provenance_text(const Provenance& p) {
  return "command: " + p.command + "\nseed: " + (p.seed ? std::to_string(*p.seed) : std::string("none"));
}

Dataset read_dataset(const std::string& path) { return parse_cohort_csv(read_file(path)); }

std::vector<std::string> split_paths(const std::string& s) {
  std::vector<std::string> out;
  std::size_t start = 0;
  for (;;) {
    const auto comma = s.find(',', start);
    out.push_back(s.substr(start, comma == std::string::npos ? std::string::npos : comma - start));
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return out;
}

std::string preset_path(const std::string& name) {
  const std::string file = "preset-" + name + ".json";
  if (const char* dir = std::getenv("HETRISK_PRESETS")) return std::string(dir) + "/" + file;
  return file;
}

struct ImputationFlags {
  int imputations = 30;
  int cycles = 10;
  int donors = 5;
};

void add_imputation_flags(CLI::App* app, ImputationFlags& f) {
  app->add_option("--imputations", f.imputations, "Number of imputed datasets")->capture_default_str();
  app->add_option("--cycles", f.cycles, "Chained-equation cycles per dataset")->capture_default_str();
  app->add_option("--donors", f.donors, "Predictive mean matching donors")->capture_default_str();
}

StrategyConfig strategy_config(const ImputationFlags& f, std::uint64_t seed) {
  StrategyConfig cfg;
  cfg.imputation.imputations = f.imputations;
  cfg.imputation.cycles = f.cycles;
  cfg.imputation.donors = f.donors;
  cfg.imputation.seed = seed;
  validate(cfg.imputation);
  return cfg;
}

struct PredictFlags {
  std::optional<double> psa;
  std::optional<double> age;
  std::optional<double> volume;
  std::map<Factor, std::string> categorical;
  std::string request;
};

Json request_from_flags(const PredictFlags& f) {
  if (!f.request.empty()) {
    const std::string text = f.request.front() == '{' ? f.request : read_file(f.request);
    return parse_json(text, "request");
  }
  Json j = Json::object();
  if (f.psa) j["psa"] = *f.psa;
  if (f.age) j["age"] = *f.age;
  if (f.volume) j["volume"] = *f.volume;
  for (const auto& [factor, value] : f.categorical) j[std::string(name_of(factor))] = value;
  return j;
}

int cmd_simulate(const Context& ctx, const std::optional<std::string>& config, const std::optional<std::string>& preset,
                 double scale, const std::string& out, const std::optional<std::uint64_t>& seed_flag) {
  GeneratorConfig cfg;
  if (config) {
    cfg = parse_generator_config(read_file(*config));
  } else if (preset == "pbcg") {
    cfg = pbcg_preset(scale);
  } else {
    cfg = parse_generator_config(read_file(preset_path(*preset)));
  }
  if (seed_flag) cfg.seed = *seed_flag;
  print_seed(ctx, cfg.seed);
  const auto paths = split_paths(out);
  if (paths.empty() || paths.size() > 2 || paths.front().empty()) {
    throw UsageError("--out expects TRAIN.csv or TRAIN.csv,VALID.csv");
  }
  if (!cfg.validation_cohorts.empty() && paths.size() != 2) {
    throw UsageError("the config defines validation cohorts; --out needs TRAIN.csv,VALID.csv");
  }
  const SimulatedData data = simulate(cfg);
  const Provenance prov{ctx.command, cfg.seed};
  write_file(paths[0], write_cohort_csv(data.training, provenance_text(prov)));
  if (paths.size() == 2) write_file(paths[1], write_cohort_csv(data.validation, provenance_text(prov)));
  ctx.out << "training: " << data.training.size() << " records in " << data.training.cohorts().size()
          << " cohorts -> " << paths[0] << "\n";
  if (paths.size() == 2) {
    ctx.out << "validation: " << data.validation.size() << " records in " << data.validation.cohorts().size()
            << " cohorts -> " << paths[1] << "\n";
  }
  return kExitOk;
}

int cmd_fit(const Context& ctx, const std::string& method, const std::string& pattern_text, const std::string& train,
            const std::string& out, const ImputationFlags& imp, const std::optional<std::uint64_t>& seed_flag) {
  const Strategy s = parse_strategy(method);
  const PatternMask pattern = parse_pattern(pattern_text);
  const std::uint64_t seed = resolve_seed(seed_flag);
  print_seed(ctx, seed);
  const Dataset training = read_dataset(train);
  const RiskModel model = fit_strategy(s, training, pattern, strategy_config(imp, seed));
  write_file(out, save_model(model, {ctx.command, seed}));
  ctx.out << name_of(s);
  if (model.pattern) ctx.out << " pattern " << model.pattern->bits() << " {" << model.pattern->to_string() << "}";
  ctx.out << ": n=" << model.n << ", cohorts=" << model.cohorts.size() << ", components=" << model.components.size()
          << " -> " << out << "\n";
  for (const auto& w : model.warnings) ctx.err << "warning: " << w << "\n";
  return kExitOk;
}

int cmd_validate(const Context& ctx, const std::string& train, const std::string& test, bool loco,
                 const std::string& methods, const std::string& out, const std::string& csv,
                 const std::string& predictions_out, const ImputationFlags& imp, unsigned threads,
                 const std::optional<std::uint64_t>& seed_flag) {
  if (loco == !test.empty()) throw UsageError("validate needs exactly one of --test or --loco");
  if (loco && !predictions_out.empty()) throw UsageError("--predictions applies to --test validation only");
  const auto strategies = parse_strategy_list(methods);
  const std::uint64_t seed = resolve_seed(seed_flag);
  print_seed(ctx, seed);
  HarnessConfig cfg;
  cfg.seed = seed;
  cfg.threads = threads;
  cfg.strategy = strategy_config(imp, seed);
  const Dataset training = read_dataset(train);
  const Provenance prov{ctx.command, seed};
  std::string report;
  if (loco) {
    const CvReport r = loco_cv(training, strategies, cfg);
    report = to_json(r, prov, cfg).dump(2) + "\n";
    if (!csv.empty()) write_file(csv, cv_csv(r, prov));
    for (const auto& s : r.summary) {
      ctx.err << name_of(s.strategy) << ": " << s.cells_ok << "/" << training.cohorts().size() << " folds";
      if (s.auc) ctx.err << ", median AUC " << s.auc->median << ", median CIL " << s.cil->median << " points";
      ctx.err << "\n";
    }
  } else {
    const Dataset validation = read_dataset(test);
    const auto predictions = predict_validation(training, validation, strategies, cfg);
    const ValidationReport r = assemble_validation(training, validation, predictions, seed);
    if (!csv.empty()) write_file(csv, validation_csv(r, prov));
    if (!predictions_out.empty()) write_file(predictions_out, predictions_csv(predictions, validation, prov));
    report = to_json(r, prov, cfg).dump(2) + "\n";
    for (const auto& s : r.strategies) {
      ctx.err << name_of(s.strategy) << ": AUC " << s.auc.auc << " [" << s.auc.lo << ", " << s.auc.hi << "], CIL "
              << s.cil.value << " points [" << s.cil.lo << ", " << s.cil.hi << "]\n";
    }
  }
  if (out.empty()) {
    ctx.out << report;
  } else {
    write_file(out, report);
  }
  return kExitOk;
}

int cmd_bank_build(const Context& ctx, const std::string& train, const std::string& out, unsigned threads,
                   const std::optional<std::uint64_t>& seed_flag) {
  print_seed(ctx, seed_flag);
  const Dataset training = read_dataset(train);
  const ModelBank bank = build_bank(training, {FitConfig{}, threads}, {ctx.command, seed_flag});
  const std::string bytes = save_bank(bank);
  write_file(out, bytes);
  std::size_t unfittable = 0;
  for (const auto& e : bank.entries) unfittable += e.model ? 0 : 1;
  ctx.out << "bank: 1024 patterns (" << unfittable << " unfittable), id " << bank_id(bytes) << " -> " << out << "\n";
  return kExitOk;
}

int cmd_bank_inspect(const Context& ctx, const std::string& path, const std::string& pattern_text, bool as_json) {
  print_seed(ctx, std::nullopt);
  const ModelBank bank = load_bank(read_file(path));
  const PatternMask p = parse_pattern(pattern_text);
  if (!as_json) {
    ctx.out << format_inspection(bank, p);
    return kExitOk;
  }
  const auto& e = bank.entries[p.bits()];
  Json j;
  j["pattern"] = p.bits();
  j["factors"] = p.to_string();
  if (!e.model) {
    j["status"] = "unfittable";
    j["reason"] = e.unfittable_reason;
  } else {
    j["status"] = "ok";
    j["n"] = e.model->n;
    j["cohorts"] = e.model->cohorts;
    j["terms"] = Json::array();
    for (const auto& r : entry_odds_ratios(bank, p)) {
      j["terms"].push_back({{"term", r.term},
                            {"estimate", r.estimate},
                            {"std_error", r.std_error},
                            {"odds_ratio", r.odds_ratio},
                            {"ci_low", r.ci_low},
                            {"ci_high", r.ci_high},
                            {"p_value", r.p_value}});
    }
  }
  ctx.out << j.dump(2) << "\n";
  return kExitOk;
}

int cmd_predict(const Context& ctx, const std::string& bank_path, const std::string& model_path,
                const std::string& input, const std::string& out, const PredictFlags& flags) {
  print_seed(ctx, std::nullopt);
  if (bank_path.empty() == model_path.empty()) throw UsageError("predict needs exactly one of --bank or --model");
  if (!bank_path.empty()) {
    if (!input.empty()) throw UsageError("--input applies to --model predictions only");
    const std::string bytes = read_file(bank_path);
    const ModelBank bank = load_bank(bytes);
    const PatientRecord r = parse_predict_request(request_from_flags(flags));
    ctx.out << prediction_json(bank_predict(bank, r), bank_id(bytes)).dump() << "\n";
    return kExitOk;
  }
  const RiskModel model = load_model(read_file(model_path));
  if (!input.empty()) {
    const Dataset d = read_dataset(input);
    std::string csv = "# " + provenance_text({ctx.command, std::nullopt});
    for (std::size_t pos = 0; (pos = csv.find('\n', pos)) != std::string::npos; pos += 3) csv.replace(pos, 1, "\n# ");
    csv += "\nrow,cohort,risk\n";
    std::size_t unscored = 0;
    for (std::size_t i = 0; i < d.size(); ++i) {
      std::string risk = "NA";
      try {
        risk = format_double(predict_risk(model, d[i]));
      } catch (const DataError&) {
        ++unscored;
      }
      csv += std::to_string(i + 1) + "," + d[i].cohort + "," + risk + "\n";
    }
    if (unscored > 0) {
      ctx.err << "warning: " << unscored << " of " << d.size()
              << " records lack factors the model requires; their risk is NA\n";
    }
    if (out.empty()) {
      ctx.out << csv;
    } else {
      write_file(out, csv);
    }
    return kExitOk;
  }
  const PatientRecord r = parse_predict_request(request_from_flags(flags));
  const Prediction p = predict(model, r);
  Json j;
  j["risk"] = p.risk;
  j["strategy"] = name_of(p.strategy);
  j["n"] = p.n;
  j["cohorts"] = p.cohorts;
  j["pattern"] = p.pattern ? Json(p.pattern->bits()) : Json(nullptr);
  ctx.out << j.dump() << "\n";
  return kExitOk;
}

int cmd_serve(const Context& ctx, std::string bank_path, std::string listen, const std::string& cors) {
  print_seed(ctx, std::nullopt);
  if (bank_path.empty()) {
    if (const char* env = std::getenv("HR_BANK")) bank_path = env;
  }
  if (listen.empty()) {
    const char* env = std::getenv("HR_LISTEN");
    listen = env ? env : "127.0.0.1:8080";
  }
  const ListenAddress addr = parse_listen(listen);
  auto service = std::make_shared<const RiskService>(
      bank_path.empty() ? RiskService("no bank configured (use --bank or HR_BANK)") : RiskService::from_file(bank_path));
  if (!service->has_bank()) ctx.err << "warning: starting degraded: " << Json::parse(service->health().body)["reason"].get<std::string>() << "\n";

  sigset_t signals;
  sigemptyset(&signals);
  sigaddset(&signals, SIGINT);
  sigaddset(&signals, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &signals, nullptr);
  ServerOptions options{addr, cors.empty() ? std::nullopt : std::optional<std::string>(cors)};
  HttpServer server(service, options);
  const int port = server.start();
  ctx.err << "listening on " << addr.host << ":" << port << "\n";
  ctx.err.flush();
  int sig = 0;
  sigwait(&signals, &sig);
  server.stop();
  ctx.err << "stopped\n";
  return kExitOk;
}

int report_error(const Context& ctx, std::string_view kind, const std::string& message, int code) {
  Json j;
  j["error"] = {{"kind", kind}, {"message", message}, {"exit_code", code}};
  ctx.err << j.dump() << "\n";
  return code;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  std::string command = "hetrisk";
  for (std::size_t i = 1; i < args.size(); ++i) command += " " + args[i];
  const Context ctx{command, out, err};

  CLI::App app{"Risk models for heterogeneous missing data", "hetrisk"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "Show help for every subcommand");

  std::optional<std::uint64_t> seed;
  std::optional<std::string> config;
  std::optional<std::string> preset;
  double scale = 1.0;
  std::string out_path;
  auto* simulate_cmd = app.add_subcommand("simulate", "Generate synthetic multi-cohort data");
  auto* config_opt = simulate_cmd->add_option("--config", config, "Generator config JSON file");
  simulate_cmd->add_option("--preset", preset, "Built-in preset name (pbcg)")->excludes(config_opt);
  simulate_cmd->add_option("--scale", scale, "Multiply every cohort size (presets only)")->check(CLI::PositiveNumber);
  simulate_cmd->add_option("--out", out_path, "TRAIN.csv[,VALID.csv]")->required();
  simulate_cmd->add_option("--seed", seed, "Override the config seed");

  std::string method;
  std::string pattern = "0";
  std::string train;
  ImputationFlags imp;
  auto* fit_cmd = app.add_subcommand("fit", "Fit one strategy and write the model JSON");
  fit_cmd->add_option("--method", method, "Strategy id")->required();
  fit_cmd->add_option("--pattern", pattern, "Target pattern: 0..1023 or factor list")->capture_default_str();
  fit_cmd->add_option("--train", train, "Training CSV")->required()->check(CLI::ExistingFile);
  fit_cmd->add_option("--out", out_path, "Model JSON output")->required();
  fit_cmd->add_option("--seed", seed, "Random seed (generated and printed when absent)");
  add_imputation_flags(fit_cmd, imp);

  std::string test;
  bool loco = false;
  std::string methods = "all";
  std::string csv;
  std::string predictions_out;
  unsigned threads = 0;
  auto* validate_cmd = app.add_subcommand("validate", "External validation or leave-one-cohort-out CV");
  validate_cmd->add_option("--train", train, "Training CSV")->required()->check(CLI::ExistingFile);
  auto* test_opt = validate_cmd->add_option("--test", test, "Validation CSV")->check(CLI::ExistingFile);
  validate_cmd->add_flag("--loco", loco, "Leave-one-cohort-out over the training cohorts")->excludes(test_opt);
  validate_cmd->add_option("--methods", methods, "'all' or comma separated strategy ids")->capture_default_str();
  validate_cmd->add_option("--out", out_path, "Report JSON (stdout when absent)");
  validate_cmd->add_option("--csv", csv, "Flattened report table CSV");
  validate_cmd->add_option("--predictions", predictions_out, "Per-record predictions CSV (--test only)");
  validate_cmd->add_option("--seed", seed, "Random seed (generated and printed when absent)");
  validate_cmd->add_option("--threads", threads, "Worker threads for folds (0 = all cores)");
  add_imputation_flags(validate_cmd, imp);

  std::string bank_path;
  bool as_json = false;
  auto* bank_cmd = app.add_subcommand("bank", "Build or inspect the 1,024-pattern model bank");
  bank_cmd->require_subcommand(1);
  auto* build_cmd = bank_cmd->add_subcommand("build", "Fit available-cases models for every pattern");
  build_cmd->add_option("--train", train, "Training CSV")->required()->check(CLI::ExistingFile);
  build_cmd->add_option("--out", out_path, "Bank file")->required();
  build_cmd->add_option("--threads", threads, "Worker threads (0 = all cores)");
  build_cmd->add_option("--seed", seed, "Recorded in the artifact; the build itself is deterministic");
  auto* inspect_cmd = bank_cmd->add_subcommand("inspect", "Odds-ratio table of one bank entry");
  inspect_cmd->add_option("--bank", bank_path, "Bank file")->required()->check(CLI::ExistingFile);
  inspect_cmd->add_option("--pattern", pattern, "0..1023 or factor list")->capture_default_str();
  inspect_cmd->add_flag("--json", as_json, "Print JSON instead of a table");

  std::string model_path;
  std::string input;
  PredictFlags pf;
  auto* predict_cmd = app.add_subcommand("predict", "Predict risk from a bank or a fitted model");
  predict_cmd->add_option("--bank", bank_path, "Bank file")->check(CLI::ExistingFile);
  predict_cmd->add_option("--model", model_path, "Model JSON from 'fit'")->check(CLI::ExistingFile);
  predict_cmd->add_option("--input", input, "CSV of records to score (with --model)")->check(CLI::ExistingFile);
  predict_cmd->add_option("--out", out_path, "Output CSV for --input (stdout when absent)");
  predict_cmd->add_option("--request", pf.request, "Request JSON text or file, as sent to POST /predict");
  predict_cmd->add_option("--psa", pf.psa, "PSA, ng/mL");
  predict_cmd->add_option("--age", pf.age, "Age, years");
  predict_cmd->add_option("--volume", pf.volume, "Prostate volume, cc");
  std::map<Factor, std::string> categorical_values;
  for (Factor f : kOptionalFactors) {
    if (f == Factor::volume) continue;
    const std::string help = f == Factor::dre ? "normal or abnormal" : "no or yes";
    predict_cmd->add_option_function<std::string>(
        "--" + std::string(name_of(f)), [&pf, f](const std::string& v) { pf.categorical[f] = v; }, help);
  }

  std::string listen;
  std::string cors;
  auto* serve_cmd = app.add_subcommand("serve", "Serve bank predictions over HTTP");
  serve_cmd->add_option("--bank", bank_path, "Bank file (default: $HR_BANK)");
  serve_cmd->add_option("--listen", listen, "host:port (default: $HR_LISTEN or 127.0.0.1:8080)");
  serve_cmd->add_option("--cors-origin", cors, "Allowed browser origin for CORS ('*' for any)");

  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*simulate_cmd) {
      if (!config && !preset) throw UsageError("simulate needs --config or --preset");
      return cmd_simulate(ctx, config, preset, scale, out_path, seed);
    }
    if (*fit_cmd) return cmd_fit(ctx, method, pattern, train, out_path, imp, seed);
    if (*validate_cmd) {
      return cmd_validate(ctx, train, test, loco, methods, out_path, csv, predictions_out, imp, threads, seed);
    }
    if (*build_cmd) return cmd_bank_build(ctx, train, out_path, threads, seed);
    if (*inspect_cmd) return cmd_bank_inspect(ctx, bank_path, pattern, as_json);
    if (*predict_cmd) return cmd_predict(ctx, bank_path, model_path, input, out_path, pf);
    if (*serve_cmd) return cmd_serve(ctx, bank_path, listen, cors);
  } catch (const UsageError& e) {
    report_error(ctx, "usage", e.what(), kExitUsage);
    return kExitUsage;
  } catch (const RequestError& e) {
    std::string message = e.what();
    for (const auto& f : e.fields()) message += "; " + f.field + ": " + f.problem;
    return report_error(ctx, "data", message, kExitData);
  } catch (const DataError& e) {
    return report_error(ctx, "data", e.what(), kExitData);
  } catch (const NumericError& e) {
    return report_error(ctx, "numeric", e.what(), kExitNumeric);
  } catch (const Error& e) {
    return report_error(ctx, "runtime", e.what(), kExitData);
  }
  return kExitUsage;
}

int run_cli(int argc, char** argv) {
  std::vector<std::string> args(argv, argv + argc);
  return run_cli(args, std::cout, std::cerr);
}

}  // namespace hetrisk
