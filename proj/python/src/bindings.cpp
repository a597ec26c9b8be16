#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <sstream>

#include "hetrisk/bank.hpp"
#include "hetrisk/cli.hpp"
#include "hetrisk/harness.hpp"
#include "hetrisk/metrics.hpp"
#include "hetrisk/model_io.hpp"
#include "hetrisk/service.hpp"
#include "hetrisk/synth.hpp"

namespace py = pybind11;
using namespace hetrisk;

namespace {

Provenance python_provenance(const std::string& op, std::optional<std::uint64_t> seed) {
  return {"python: " + op, seed};
}

HarnessConfig harness_config(std::uint64_t seed, int imputations, int cycles, unsigned threads) {
  HarnessConfig cfg;
  cfg.seed = seed;
  cfg.threads = threads;
  cfg.strategy.imputation.imputations = imputations;
  cfg.strategy.imputation.cycles = cycles;
  cfg.strategy.imputation.seed = seed;
  validate(cfg.strategy.imputation);
  return cfg;
}

std::string simulate_py(std::optional<std::string> config_json, double scale, std::optional<std::uint64_t> seed) {
  GeneratorConfig cfg = config_json ? parse_generator_config(*config_json) : pbcg_preset(scale);
  if (seed) cfg.seed = *seed;
  const SimulatedData data = simulate(cfg);
  const std::string header = "seed: " + std::to_string(cfg.seed);
  Json out;
  out["seed"] = cfg.seed;
  out["training"] = write_cohort_csv(data.training, header);
  out["validation"] = data.validation.empty() ? Json(nullptr) : Json(write_cohort_csv(data.validation, header));
  return out.dump();
}

std::string fit_py(const std::string& method, const std::string& training_csv, const std::string& pattern,
                   std::uint64_t seed, int imputations, int cycles) {
  const Dataset training = parse_cohort_csv(training_csv);
  const auto cfg = harness_config(seed, imputations, cycles, 1);
  const RiskModel m = fit_strategy(parse_strategy(method), training, parse_pattern(pattern), cfg.strategy);
  return save_model(m, python_provenance("fit", seed));
}

double predict_model_py(const std::string& model_text, const std::string& record_json) {
  const RiskModel m = load_model(model_text);
  return predict(m, parse_predict_request(parse_json(record_json, "record"))).risk;
}

std::string validate_py(const std::string& training_csv, const std::string& validation_csv_text,
                        const std::string& methods, std::uint64_t seed, int imputations, int cycles,
                        unsigned threads) {
  const Dataset training = parse_cohort_csv(training_csv);
  const Dataset validation = parse_cohort_csv(validation_csv_text);
  const auto cfg = harness_config(seed, imputations, cycles, threads);
  py::gil_scoped_release release;
  const auto report = external_validate(training, validation, parse_strategy_list(methods), cfg);
  return to_json(report, python_provenance("validate", seed), cfg).dump();
}

std::string loco_py(const std::string& training_csv, const std::string& methods, std::uint64_t seed,
                    int imputations, int cycles, unsigned threads) {
  const Dataset training = parse_cohort_csv(training_csv);
  const auto cfg = harness_config(seed, imputations, cycles, threads);
  py::gil_scoped_release release;
  const auto report = loco_cv(training, parse_strategy_list(methods), cfg);
  return to_json(report, python_provenance("loco", seed), cfg).dump();
}

py::bytes build_bank_py(const std::string& training_csv, unsigned threads) {
  const Dataset training = parse_cohort_csv(training_csv);
  std::string bytes;
  {
    py::gil_scoped_release release;
    bytes = save_bank(build_bank(training, {FitConfig{}, threads}, python_provenance("build_bank", std::nullopt)));
  }
  return py::bytes(bytes);
}

std::string bank_predict_py(const std::string& bank_bytes, const std::string& request_json) {
  const ModelBank bank = load_bank(bank_bytes);
  const PatientRecord r = parse_predict_request(parse_json(request_json, "request"));
  return prediction_json(bank_predict(bank, r), bank_id(bank_bytes)).dump();
}

py::tuple run_cli_py(const std::vector<std::string>& args) {
  std::vector<std::string> full = {"hetrisk"};
  full.insert(full.end(), args.begin(), args.end());
  std::ostringstream out;
  std::ostringstream err;
  int code = 0;
  {
    py::gil_scoped_release release;
    code = run_cli(full, out, err);
  }
  return py::make_tuple(code, out.str(), err.str());
}

py::tuple response(const HttpResponse& r) { return py::make_tuple(r.status, r.body); }

}  // namespace

PYBIND11_MODULE(_hetrisk, m) {
  m.doc() = "Risk models for multi-cohort data with heterogeneous missing factors";

  static py::exception<Error> error(m, "Error", PyExc_RuntimeError);
  static py::exception<DataError> data_error(m, "DataError", error.ptr());
  static py::exception<NumericError> numeric_error(m, "NumericError", error.ptr());
  static py::exception<UsageError> usage_error(m, "UsageError", error.ptr());
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const DataError& e) {
      py::set_error(data_error, e.what());
    } catch (const NumericError& e) {
      py::set_error(numeric_error, e.what());
    } catch (const UsageError& e) {
      py::set_error(usage_error, e.what());
    } catch (const Error& e) {
      py::set_error(error, e.what());
    }
  });

  m.attr("API_VERSION") = kApiVersion;
  m.attr("BANK_FORMAT_VERSION") = kBankVersion;

  m.def("strategies", [] {
    std::vector<std::string> out;
    for (Strategy s : kAllStrategies) out.emplace_back(name_of(s));
    return out;
  });
  m.def("factor_schema", [] { return factor_schema().dump(); });
  m.def("simulate", &simulate_py, py::arg("config_json") = py::none(), py::arg("scale") = 1.0,
        py::arg("seed") = py::none());
  m.def("fit", &fit_py, py::arg("method"), py::arg("training_csv"), py::arg("pattern") = "0", py::arg("seed") = 0,
        py::arg("imputations") = 30, py::arg("cycles") = 10);
  m.def("predict_model", &predict_model_py, py::arg("model"), py::arg("record_json"));
  m.def("validate", &validate_py, py::arg("training_csv"), py::arg("validation_csv"), py::arg("methods") = "all",
        py::arg("seed") = 0, py::arg("imputations") = 30, py::arg("cycles") = 10, py::arg("threads") = 0);
  m.def("loco", &loco_py, py::arg("training_csv"), py::arg("methods") = "all", py::arg("seed") = 0,
        py::arg("imputations") = 30, py::arg("cycles") = 10, py::arg("threads") = 0);
  m.def("build_bank", &build_bank_py, py::arg("training_csv"), py::arg("threads") = 0);
  m.def("bank_id", [](const std::string& bytes) { return bank_id(bytes); });
  m.def("bank_predict", &bank_predict_py, py::arg("bank"), py::arg("request_json"));
  m.def("bank_inspect", [](const std::string& bytes, const std::string& pattern) {
    return format_inspection(load_bank(bytes), parse_pattern(pattern));
  });
  m.def("auc", [](const std::vector<double>& p, const std::vector<int>& y) { return auc(p, y); });
  m.def("cil", [](const std::vector<double>& p, const std::vector<int>& y) { return cil(p, y).value; });
  m.def("run_cli", &run_cli_py, py::arg("args"));

  py::class_<RiskService, std::shared_ptr<RiskService>>(m, "RiskService")
      .def_static("from_file", [](const std::string& path) { return std::make_shared<RiskService>(RiskService::from_file(path)); })
      .def_property_readonly("has_bank", &RiskService::has_bank)
      .def_property_readonly("bank_id", &RiskService::bank_id)
      .def("predict", [](const RiskService& s, const std::string& body) { return response(s.predict(body)); })
      .def("meta", [](const RiskService& s) { return response(s.meta()); })
      .def("health", [](const RiskService& s) { return response(s.health()); });
}
