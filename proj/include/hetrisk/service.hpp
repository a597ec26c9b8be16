#pragma once

#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "hetrisk/bank.hpp"
#include "hetrisk/error.hpp"
#include "hetrisk/model_io.hpp"

namespace hetrisk {

inline constexpr int kApiVersion = 1;

struct FieldError {
  std::string field;
  std::string problem;
};

/// A request that failed validation; carries every offending field.
class RequestError : public DataError {
 public:
  RequestError(std::string message, std::vector<FieldError> fields)
      : DataError(std::move(message)), fields_(std::move(fields)) {}
  const std::vector<FieldError>& fields() const { return fields_; }

 private:
  std::vector<FieldError> fields_;
};

/// psa and age are required; optional factors may be absent or null (not
/// available), "normal"/"abnormal" for dre, "no"/"yes" (or booleans) for
/// binaries, and a positive number of cc for volume. Unknown keys are rejected.
PatientRecord parse_predict_request(const Json& body);

/// Response body of a successful prediction.
Json prediction_json(const BankPrediction& p, std::string_view bank_id);

struct HttpResponse {
  int status = 200;
  std::string body;
};

/// Request handling independent of the HTTP transport. Immutable after
/// construction and safe to share between threads.
class RiskService {
 public:
  /// Degraded service: every bank-backed endpoint answers 503.
  explicit RiskService(std::string unavailable_reason);
  RiskService(ModelBank bank, std::string bank_id);
  /// Loads the bank; on failure the service starts degraded.
  static RiskService from_file(const std::string& path);

  bool has_bank() const { return bank_ != nullptr; }
  const std::string& bank_id() const { return bank_id_; }

  HttpResponse predict(std::string_view body) const;
  HttpResponse meta() const;
  HttpResponse health() const;

 private:
  std::shared_ptr<const ModelBank> bank_;
  std::string bank_id_;
  std::string unavailable_reason_;
  std::string meta_body_;
};

/// Schema of the twelve factors for form construction.
Json factor_schema();

struct ListenAddress {
  std::string host = "127.0.0.1";
  int port = 8080;
};

/// "host:port", ":port" or "port".
ListenAddress parse_listen(std::string_view text);

struct ServerOptions {
  ListenAddress listen;
  /// When set, CORS headers allow this origin ("*" for any).
  std::optional<std::string> cors_origin;
};

/// HTTP front end. start() binds (port 0 picks a free port) and serves on a
/// background thread; stop() shuts it down.
class HttpServer {
 public:
  HttpServer(std::shared_ptr<const RiskService> service, ServerOptions options);
  ~HttpServer();
  HttpServer(const HttpServer&) = delete;
  HttpServer& operator=(const HttpServer&) = delete;

  /// Returns the bound port. Throws Error when binding fails.
  int start();
  /// Serves on the calling thread until stop() is called from elsewhere.
  void run();
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace hetrisk
