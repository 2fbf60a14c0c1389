#include "phenoeval/model_client.hpp"

#include <httplib.h>

#include <algorithm>

namespace phenoeval {

namespace {

struct ParsedUrl {
  std::string origin;  // scheme://host:port
  std::string path;
};

ParsedUrl parse_url(const std::string& url) {
  constexpr std::string_view kHttp = "http://";
  if (!url.starts_with(kHttp)) {
    throw ConfigError("endpoint must be an http:// URL, got '" + url + "'");
  }
  const auto path_start = url.find('/', kHttp.size());
  ParsedUrl out;
  out.origin = url.substr(0, path_start);
  out.path = path_start == std::string::npos ? "/api/generate" : url.substr(path_start);
  if (out.origin.size() == kHttp.size()) throw ConfigError("endpoint URL has no host: '" + url + "'");
  return out;
}

class InflightGuard {
 public:
  explicit InflightGuard(std::counting_semaphore<>& sem) : sem_(sem) { sem_.acquire(); }
  ~InflightGuard() { sem_.release(); }
  InflightGuard(const InflightGuard&) = delete;
  InflightGuard& operator=(const InflightGuard&) = delete;

 private:
  std::counting_semaphore<>& sem_;
};

}  // namespace

double to_seconds(Duration d) { return std::chrono::duration<double>(d).count(); }

void validate_model_config(const ModelConfig& c) {
  if (c.model_name.empty()) throw ConfigError("model_name must not be empty");
  if (!(c.temperature >= 0.0)) throw ConfigError("temperature must be >= 0");
  if (!(c.top_p > 0.0 && c.top_p <= 1.0)) throw ConfigError("top_p must be in (0, 1]");
  if (c.max_retries < 0) throw ConfigError("max_retries must be >= 0");
  if (c.max_inflight < 1) throw ConfigError("max_inflight must be >= 1");
  if (c.request_timeout.count() <= 0) throw ConfigError("request_timeout must be positive");
}

void to_json(nlohmann::json& j, const ModelConfig& c) {
  j = nlohmann::json{{"model_name", c.model_name},
                     {"endpoint_url", c.endpoint_url},
                     {"temperature", c.temperature},
                     {"top_p", c.top_p},
                     {"request_timeout_ms", c.request_timeout.count()},
                     {"max_retries", c.max_retries},
                     {"max_inflight", c.max_inflight}};
}

void from_json(const nlohmann::json& j, ModelConfig& c) {
  c = ModelConfig{};
  j.at("model_name").get_to(c.model_name);
  if (j.contains("endpoint_url")) j.at("endpoint_url").get_to(c.endpoint_url);
  if (j.contains("temperature")) j.at("temperature").get_to(c.temperature);
  if (j.contains("top_p")) j.at("top_p").get_to(c.top_p);
  if (j.contains("request_timeout_ms")) c.request_timeout = std::chrono::milliseconds(j.at("request_timeout_ms").get<std::int64_t>());
  if (j.contains("max_retries")) j.at("max_retries").get_to(c.max_retries);
  if (j.contains("max_inflight")) j.at("max_inflight").get_to(c.max_inflight);
}

HttpTransport make_httplib_transport() {
  return [](const HttpRequest& req) -> HttpExchange {
    const ParsedUrl url = parse_url(req.url);
    httplib::Client client(url.origin);
    const auto timeout = std::chrono::duration_cast<std::chrono::microseconds>(req.timeout);
    client.set_connection_timeout(timeout);
    client.set_read_timeout(timeout);
    client.set_write_timeout(timeout);
    client.set_keep_alive(false);
    httplib::Headers headers{{"X-Request-Ordinal", std::to_string(req.ordinal)}};
    auto res = client.Post(url.path, headers, req.body, "application/json");
    HttpExchange ex;
    if (!res) {
      ex.error = httplib::to_string(res.error());
      return ex;
    }
    ex.status = res->status;
    ex.body = res->body;
    return ex;
  };
}

nlohmann::json build_request_payload(const ModelConfig& config, const PromptText& prompt) {
  return nlohmann::json{{"model", config.model_name},
                        {"prompt", prompt.text},
                        {"temperature", config.temperature},
                        {"top_p", config.top_p},
                        {"stream", false},
                        {"options", {{"temperature", config.temperature}, {"top_p", config.top_p}}}};
}

std::string extract_response_text(const std::string& body) {
  const auto doc = nlohmann::json::parse(body, nullptr, false);
  if (doc.is_discarded() || !doc.is_object()) throw DataError("response body is not a JSON object");
  if (doc.contains("response") && doc["response"].is_string()) return doc["response"].get<std::string>();
  if (doc.contains("choices") && doc["choices"].is_array() && !doc["choices"].empty()) {
    const auto& first = doc["choices"][0];
    if (first.contains("text") && first["text"].is_string()) return first["text"].get<std::string>();
  }
  throw DataError("response body has no 'response' text");
}

HttpModelClient::HttpModelClient(ModelConfig config, HttpTransport transport)
    : config_(std::move(config)), transport_(std::move(transport)) {
  validate_model_config(config_);
  parse_url(config_.endpoint_url);
  inflight_ = std::make_unique<std::counting_semaphore<>>(config_.max_inflight);
}

Completion HttpModelClient::complete(const PromptText& prompt, std::uint64_t ordinal) {
  HttpRequest req;
  req.url = config_.endpoint_url;
  req.body = build_request_payload(config_, prompt).dump();
  req.ordinal = ordinal;
  req.timeout = config_.request_timeout;

  InflightGuard guard(*inflight_);
  std::vector<std::string> log;
  const int attempts = config_.max_retries + 1;
  for (int attempt = 1; attempt <= attempts; ++attempt) {
    const auto start = std::chrono::steady_clock::now();
    HttpExchange ex = transport_(req);
    const auto latency = std::chrono::steady_clock::now() - start;
    if (ex.error) {
      log.push_back("attempt " + std::to_string(attempt) + ": " + *ex.error);
      continue;
    }
    if (ex.status < 200 || ex.status >= 300) throw ServerError(ex.status, ex.body);
    Completion c;
    try {
      c.raw_text = extract_response_text(ex.body);
    } catch (const DataError& e) {
      throw ServerError(ex.status, std::string(e.what()) + ": " + ex.body);
    }
    c.latency = std::max<Duration>(std::chrono::duration_cast<Duration>(latency), Duration{1});
    c.attempt_count = attempt;
    return c;
  }
  std::string what = "request to " + config_.endpoint_url + " failed after " + std::to_string(attempts) +
                     " attempt(s): " + log.back();
  throw TransportError(what, std::move(log));
}

}  // namespace phenoeval
