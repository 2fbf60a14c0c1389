#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <regex>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "phenoeval/model_client.hpp"

namespace phenoeval {

inline constexpr std::string_view kAnswerPlaceholder = "{{ANSWER}}";

// `match` is an ECMAScript regex searched anywhere in the prompt. The
// response may contain {{ANSWER}}, which is replaced by `answer` (inverted
// when the request is flipped).
struct MockRule {
  std::string match;
  std::string response;
  std::string answer = "YES";
  bool icase = false;
};

/// Deterministic scripted model. The response to a request is a pure function
/// of (script, prompt text, ordinal).
///
/// Format deviations prepend a free-text reasoning preamble to the response.
/// They apply when `ordinal % format_error_every == 0` or when the ordinal is
/// listed in `format_error_at`; flips work the same way with `flip_every` /
/// `flip_at`.
struct MockScript {
  std::vector<MockRule> rules;
  std::optional<std::uint64_t> format_error_every;
  std::optional<std::uint64_t> flip_every;
  std::set<std::uint64_t> format_error_at;
  std::set<std::uint64_t> flip_at;
  std::int64_t latency_ms = 1;
};

void validate_mock_script(const MockScript& script);
MockScript mock_script_from_json(const nlohmann::json& doc);
nlohmann::json mock_script_to_json(const MockScript& script);
MockScript load_mock_script(const std::filesystem::path& path);

// A keyword script for the shipped templates: respiratory devices and
// ventilation modes answer YES to the therapy prompt, sedatives and
// paralytics answer YES to the medication prompt, everything else NO.
MockScript default_mock_script();

// Well-formed response to `t` whose final answer is {{ANSWER}}.
std::string well_formed_response(const PromptTemplate& t);

bool mock_flips(const MockScript& script, std::uint64_t ordinal);
bool mock_deviates(const MockScript& script, std::uint64_t ordinal);

/// Throws ScriptError when no rule matches.
Completion mock_complete(const MockScript& script, const PromptText& prompt, std::uint64_t ordinal);

class MockModel final : public CompletionBackend {
 public:
  explicit MockModel(MockScript script, std::string name = "mock");

  Completion complete(const PromptText& prompt, std::uint64_t ordinal) override;
  [[nodiscard]] std::string model_name() const override { return name_; }
  [[nodiscard]] const MockScript& script() const { return script_; }

 private:
  MockScript script_;
  std::string name_;
  std::vector<std::regex> patterns_;
};

/// Serves a MockScript over the completion HTTP protocol. The ordinal comes
/// from the `X-Request-Ordinal` header when present, otherwise from an
/// internal counter. With `simulate_latency` the handler sleeps for
/// latency_ms before answering.
class MockServer {
 public:
  explicit MockServer(MockScript script, bool simulate_latency = true);
  ~MockServer();
  MockServer(const MockServer&) = delete;
  MockServer& operator=(const MockServer&) = delete;

  // Binds and serves on a background thread; returns the bound port.
  int start(const std::string& host = "127.0.0.1", int port = 0);
  // Serves on the calling thread until stop() is called.
  void listen_blocking(const std::string& host, int port);
  void stop();

  [[nodiscard]] std::uint64_t requests_served() const;
  [[nodiscard]] std::string generate_url() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace phenoeval
