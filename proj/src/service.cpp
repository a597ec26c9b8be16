#include "hetrisk/service.hpp"

#include <algorithm>
#include <cmath>
#include <thread>

#include "hetrisk/harness.hpp"

#include <httplib.h>

namespace hetrisk {

namespace {

std::optional<double> parse_binary(const Json& v, Factor f) {
  if (v.is_boolean()) return v.get<bool>() ? 1.0 : 0.0;
  if (v.is_string()) {
    const auto s = v.get<std::string>();
    if (f == Factor::dre) {
      if (s == "normal") return 0.0;
      if (s == "abnormal") return 1.0;
    } else {
      if (s == "no") return 0.0;
      if (s == "yes") return 1.0;
    }
  }
  if (v.is_number()) {
    const double d = v.get<double>();
    if (d == 0.0 || d == 1.0) return d;
  }
  return std::nullopt;
}

Json error_json(std::string_view message, const std::vector<FieldError>& fields) {
  Json j;
  j["status"] = "error";
  j["error"] = message;
  j["fields"] = Json::array();
  for (const auto& f : fields) j["fields"].push_back({{"field", f.field}, {"problem", f.problem}});
  j["api_version"] = kApiVersion;
  return j;
}

Json pattern_json(PatternMask p) {
  Json names = Json::array();
  for (Factor f : p.factors()) names.push_back(name_of(f));
  return {{"mask", p.bits()}, {"factors", names}};
}

Json n_summary(const ModelBank& bank) {
  std::vector<double> n;
  for (const auto& e : bank.entries) {
    if (e.model) n.push_back(static_cast<double>(e.model->n));
  }
  return {{"min", quantile(n, 0.0)},
          {"q25", quantile(n, 0.25)},
          {"median", quantile(n, 0.5)},
          {"q75", quantile(n, 0.75)},
          {"max", quantile(n, 1.0)}};
}

}  // namespace

PatientRecord parse_predict_request(const Json& body) {
  if (!body.is_object()) throw RequestError("request body must be a JSON object", {{"(body)", "not an object"}});
  std::vector<FieldError> errors;
  PatientRecord r;
  r.cohort = "request";
  for (const auto& [key, value] : body.items()) {
    if (key == "psa" || key == "age") continue;
    const auto f = try_parse_factor(key);
    if (!f) errors.push_back({key, "unknown field"});
  }
  auto mandatory = [&](const char* key, double& out) {
    const auto it = body.find(key);
    if (it == body.end() || it->is_null()) {
      errors.push_back({key, "required"});
    } else if (!it->is_number()) {
      errors.push_back({key, "must be a number"});
    } else {
      out = it->get<double>();
    }
  };
  mandatory("psa", r.psa);
  mandatory("age", r.age);
  if (body.contains("psa") && body["psa"].is_number() && !(r.psa > 0.0 && std::isfinite(r.psa))) {
    errors.push_back({"psa", "must be > 0"});
  }
  if (body.contains("age") && body["age"].is_number() && !(r.age >= 18.0 && r.age <= 120.0)) {
    errors.push_back({"age", "must be within [18, 120]"});
  }
  for (Factor f : kOptionalFactors) {
    const auto it = body.find(std::string(name_of(f)));
    if (it == body.end() || it->is_null()) continue;
    if (f == Factor::volume) {
      if (!it->is_number()) {
        errors.push_back({"volume", "must be a number of cc"});
      } else if (!(it->get<double>() > 0.0) || !std::isfinite(it->get<double>())) {
        errors.push_back({"volume", "must be > 0"});
      } else {
        r.set(f, it->get<double>());
      }
      continue;
    }
    const auto v = parse_binary(*it, f);
    if (!v) {
      errors.push_back({std::string(name_of(f)), f == Factor::dre ? "must be \"normal\" or \"abnormal\""
                                                                  : "must be \"no\" or \"yes\""});
    } else {
      r.set(f, *v);
    }
  }
  if (!errors.empty()) throw RequestError("invalid request", std::move(errors));
  return r;
}

Json prediction_json(const BankPrediction& p, std::string_view bank_id) {
  Json j;
  j["status"] = "ok";
  j["api_version"] = kApiVersion;
  j["risk"] = p.risk;
  j["observed_pattern"] = pattern_json(p.observed);
  j["pattern"] = pattern_json(p.used);
  j["fallback"] = p.fallback;
  j["substituted_pattern"] = p.fallback ? pattern_json(p.used) : Json(nullptr);
  j["model"] = {{"n", p.n}, {"cohort_count", p.cohorts.size()}, {"cohorts", p.cohorts}};
  j["bank"] = bank_id;
  j["warnings"] = p.warnings;
  return j;
}

Json factor_schema() {
  Json out = Json::array();
  for (Factor f : kAllFactors) {
    Json j;
    j["id"] = name_of(f);
    j["label"] = label_of(f);
    j["mandatory"] = is_mandatory(f);
    switch (kind_of(f)) {
      case FactorKind::continuous: j["kind"] = "continuous"; break;
      case FactorKind::categorical: j["kind"] = "categorical"; break;
      case FactorKind::binary: j["kind"] = "binary"; break;
    }
    if (f == Factor::psa) {
      j["unit"] = "ng/mL";
      j["range"] = {{"exclusive_min", 0}};
    } else if (f == Factor::age) {
      j["unit"] = "years";
      j["range"] = {{"min", 18}, {"max", 120}};
    } else if (f == Factor::volume) {
      j["unit"] = "cc";
      j["range"] = {{"exclusive_min", 0}};
    } else if (f == Factor::dre) {
      j["values"] = {"normal", "abnormal"};
    } else {
      j["values"] = {"no", "yes"};
    }
    out.push_back(j);
  }
  return out;
}

RiskService::RiskService(std::string unavailable_reason) : unavailable_reason_(std::move(unavailable_reason)) {}

RiskService::RiskService(ModelBank bank, std::string bank_id)
    : bank_(std::make_shared<const ModelBank>(std::move(bank))), bank_id_(std::move(bank_id)) {
  std::size_t fittable = 0;
  Json unfittable = Json::array();
  for (const auto& e : bank_->entries) {
    if (e.model) {
      ++fittable;
    } else {
      unfittable.push_back(e.pattern.bits());
    }
  }
  Json j;
  j["api_version"] = kApiVersion;
  j["bank"] = bank_id_;
  j["format_version"] = kBankVersion;
  j["training"] = {{"fingerprint", bank_->training_fingerprint},
                   {"n", bank_->training_n},
                   {"cohorts", bank_->cohorts}};
  j["pattern_count"] = bank_->entries.size();
  j["fittable_count"] = fittable;
  j["unfittable_patterns"] = unfittable;
  j["n_per_pattern"] = n_summary(*bank_);
  j["factors"] = factor_schema();
  j["pattern_order"] = Json::array();
  for (Factor f : kOptionalFactors) j["pattern_order"].push_back(name_of(f));
  meta_body_ = j.dump();
}

RiskService RiskService::from_file(const std::string& path) {
  try {
    const std::string bytes = read_file(path);
    return RiskService(load_bank(bytes), hetrisk::bank_id(bytes));
  } catch (const Error& e) {
    return RiskService(std::string("bank unavailable: ") + e.what());
  }
}

HttpResponse RiskService::predict(std::string_view body) const {
  if (!bank_) return {503, error_json(unavailable_reason_, {}).dump()};
  Json request;
  try {
    request = Json::parse(body.begin(), body.end());
  } catch (const nlohmann::json::parse_error& e) {
    return {400, error_json(std::string("malformed JSON: ") + e.what(), {{"(body)", "malformed JSON"}}).dump()};
  }
  try {
    const PatientRecord r = parse_predict_request(request);
    return {200, prediction_json(bank_predict(*bank_, r), bank_id_).dump()};
  } catch (const RequestError& e) {
    return {422, error_json(e.what(), e.fields()).dump()};
  } catch (const DataError& e) {
    return {422, error_json(e.what(), {}).dump()};
  } catch (const Error& e) {
    return {500, error_json(e.what(), {}).dump()};
  }
}

HttpResponse RiskService::meta() const {
  if (!bank_) return {503, error_json(unavailable_reason_, {}).dump()};
  return {200, meta_body_};
}

HttpResponse RiskService::health() const {
  Json j;
  j["api_version"] = kApiVersion;
  if (bank_) {
    j["status"] = "ok";
    j["bank"] = "loaded";
    j["bank_id"] = bank_id_;
  } else {
    j["status"] = "degraded";
    j["bank"] = "unavailable";
    j["reason"] = unavailable_reason_;
  }
  return {200, j.dump()};
}

ListenAddress parse_listen(std::string_view text) {
  ListenAddress a;
  std::string_view port = text;
  const auto colon = text.rfind(':');
  if (colon != std::string_view::npos) {
    if (colon > 0) a.host = std::string(text.substr(0, colon));
    port = text.substr(colon + 1);
  }
  if (port.empty() || port.size() > 5 || !std::all_of(port.begin(), port.end(), [](char c) { return c >= '0' && c <= '9'; })) {
    throw UsageError("invalid listen address '" + std::string(text) + "' (expected host:port)");
  }
  a.port = std::stoi(std::string(port));
  if (a.port > 65535) throw UsageError("port out of range in '" + std::string(text) + "'");
  return a;
}

struct HttpServer::Impl {
  std::shared_ptr<const RiskService> service;
  ServerOptions options;
  httplib::Server server;
  std::thread thread;
  int port = 0;
};

HttpServer::HttpServer(std::shared_ptr<const RiskService> service, ServerOptions options)
    : impl_(std::make_unique<Impl>()) {
  impl_->service = std::move(service);
  impl_->options = std::move(options);
  auto& s = impl_->server;
  const auto cors = impl_->options.cors_origin;
  auto reply = [cors](httplib::Response& res, const HttpResponse& r) {
    res.status = r.status;
    if (cors) res.set_header("Access-Control-Allow-Origin", *cors);
    res.set_content(r.body, "application/json");
  };
  const auto* svc = impl_->service.get();
  s.Post("/predict", [svc, reply](const httplib::Request& req, httplib::Response& res) {
    reply(res, svc->predict(req.body));
  });
  s.Get("/bank/meta", [svc, reply](const httplib::Request&, httplib::Response& res) { reply(res, svc->meta()); });
  s.Get("/health", [svc, reply](const httplib::Request&, httplib::Response& res) { reply(res, svc->health()); });
  if (cors) {
    s.Options(R"(/.*)", [cors](const httplib::Request&, httplib::Response& res) {
      res.status = 204;
      res.set_header("Access-Control-Allow-Origin", *cors);
      res.set_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS");
      res.set_header("Access-Control-Allow-Headers", "Content-Type");
    });
  }
}

HttpServer::~HttpServer() { stop(); }

int HttpServer::start() {
  auto& o = impl_->options.listen;
  if (o.port == 0) {
    impl_->port = impl_->server.bind_to_any_port(o.host);
  } else {
    impl_->port = impl_->server.bind_to_port(o.host, o.port) ? o.port : -1;
  }
  if (impl_->port < 0) {
    throw Error("cannot listen on " + o.host + ":" + std::to_string(o.port));
  }
  impl_->thread = std::thread([this] { impl_->server.listen_after_bind(); });
  impl_->server.wait_until_ready();
  return impl_->port;
}

void HttpServer::run() {
  start();
  impl_->thread.join();
}

void HttpServer::stop() {
  if (!impl_) return;
  impl_->server.stop();
  if (impl_->thread.joinable()) impl_->thread.join();
}

}  // namespace hetrisk
