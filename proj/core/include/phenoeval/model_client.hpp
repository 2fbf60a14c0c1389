#pragma once

#include <chrono>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <semaphore>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "phenoeval/error.hpp"
#include "phenoeval/prompts.hpp"

namespace phenoeval {

using Duration = std::chrono::nanoseconds;

double to_seconds(Duration d);

struct ModelConfig {
  std::string model_name;
  std::string endpoint_url = "http://127.0.0.1:11434/api/generate";
  double temperature = 0.0;
  double top_p = 0.99;
  std::chrono::milliseconds request_timeout{120'000};
  int max_retries = 2;
  int max_inflight = 1;

  bool operator==(const ModelConfig&) const = default;
};

// Throws ConfigError.
void validate_model_config(const ModelConfig& config);
void to_json(nlohmann::json& j, const ModelConfig& c);
void from_json(const nlohmann::json& j, ModelConfig& c);

struct Completion {
  std::string raw_text;
  Duration latency{0};
  int attempt_count = 1;

  bool operator==(const Completion&) const = default;
};

// Every attempt that failed at the transport level, in order.
class TransportError : public Error {
 public:
  TransportError(const std::string& what, std::vector<std::string> attempt_log)
      : Error(what), attempt_log_(std::move(attempt_log)) {}
  [[nodiscard]] const std::vector<std::string>& attempt_log() const { return attempt_log_; }

 private:
  std::vector<std::string> attempt_log_;
};

class ServerError : public Error {
 public:
  ServerError(int status, std::string body)
      : Error("model server returned HTTP " + std::to_string(status) + ": " + body),
        status_(status),
        body_(std::move(body)) {}
  [[nodiscard]] int status() const { return status_; }
  [[nodiscard]] const std::string& body() const { return body_; }

 private:
  int status_;
  std::string body_;
};

/// Anything that turns a prompt into a completion. `ordinal` is the request's
/// position in its run (1-based); only the mock uses it.
class CompletionBackend {
 public:
  virtual ~CompletionBackend() = default;
  virtual Completion complete(const PromptText& prompt, std::uint64_t ordinal) = 0;
  [[nodiscard]] virtual std::string model_name() const = 0;
};

// One HTTP exchange as seen by the retry loop. `error` is set when the
// request failed before a status line was received.
struct HttpExchange {
  std::optional<std::string> error;
  int status = 0;
  std::string body;
};

struct HttpRequest {
  std::string url;
  std::string body;
  std::uint64_t ordinal = 0;
  std::chrono::milliseconds timeout{0};
};

using HttpTransport = std::function<HttpExchange(const HttpRequest&)>;

// The cpp-httplib transport used by default.
HttpTransport make_httplib_transport();

// Request payload for one prompt: {model, prompt, temperature, top_p,
// stream:false} plus the same sampling values under `options` for servers
// that only read them there.
nlohmann::json build_request_payload(const ModelConfig& config, const PromptText& prompt);

// Extracts the completion text from a server response body. Accepts the
// `response` field and falls back to OpenAI-style `choices[0].text`.
std::string extract_response_text(const std::string& body);

/// Completion client for a local model server.
///
/// Retries only on transport failures (connection errors, timeouts); a
/// well-formed non-2xx response raises ServerError immediately. Latency is
/// that of the final, successful attempt. At most `max_inflight` requests are
/// outstanding at once across all threads sharing the client.
class HttpModelClient final : public CompletionBackend {
 public:
  explicit HttpModelClient(ModelConfig config, HttpTransport transport = make_httplib_transport());

  Completion complete(const PromptText& prompt, std::uint64_t ordinal) override;
  [[nodiscard]] std::string model_name() const override { return config_.model_name; }
  [[nodiscard]] const ModelConfig& config() const { return config_; }

 private:
  ModelConfig config_;
  HttpTransport transport_;
  std::unique_ptr<std::counting_semaphore<>> inflight_;
};

}  // namespace phenoeval
