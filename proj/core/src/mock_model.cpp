#include "phenoeval/mock_model.hpp"

#include <httplib.h>

#include <atomic>
#include <fstream>
#include <regex>
#include <thread>

#include "phenoeval/response_parser.hpp"

namespace phenoeval {

namespace {

constexpr std::string_view kReasoningPreamble =
    "<think>\nThe concept has to be compared with each definition before the questions can be answered.\n</think>\n";

std::string substitute_answer(std::string text, std::string_view answer) {
  for (auto pos = text.find(kAnswerPlaceholder); pos != std::string::npos;
       pos = text.find(kAnswerPlaceholder, pos + answer.size())) {
    text.replace(pos, kAnswerPlaceholder.size(), answer);
  }
  return text;
}

std::string invert(const std::string& answer) {
  if (answer == "YES") return "NO";
  if (answer == "NO") return "YES";
  return answer;
}

std::regex compile(const MockRule& rule) {
  auto flags = std::regex::ECMAScript;
  if (rule.icase) flags |= std::regex::icase;
  try {
    return std::regex(rule.match, flags);
  } catch (const std::regex_error& e) {
    throw ScriptError("invalid rule pattern '" + rule.match + "': " + e.what());
  }
}

Completion respond(const MockScript& script, const std::vector<std::regex>& patterns, const PromptText& prompt,
                   std::uint64_t ordinal) {
  if (ordinal == 0) throw ScriptError("request ordinals start at 1");
  for (std::size_t i = 0; i < script.rules.size(); ++i) {
    if (!std::regex_search(prompt.text, patterns[i])) continue;
    const MockRule& rule = script.rules[i];
    const std::string answer = mock_flips(script, ordinal) ? invert(rule.answer) : rule.answer;
    std::string text = substitute_answer(rule.response, answer);
    if (mock_deviates(script, ordinal)) text.insert(0, kReasoningPreamble);
    Completion c;
    c.raw_text = std::move(text);
    c.latency = std::chrono::milliseconds(script.latency_ms);
    c.attempt_count = 1;
    return c;
  }
  throw ScriptError("no mock rule matches the prompt (ordinal " + std::to_string(ordinal) + ")");
}

std::vector<std::regex> compile_all(const MockScript& script) {
  std::vector<std::regex> out;
  out.reserve(script.rules.size());
  for (const auto& r : script.rules) out.push_back(compile(r));
  return out;
}

}  // namespace

void validate_mock_script(const MockScript& script) {
  if (script.rules.empty()) throw ScriptError("mock script has no rules");
  if (script.format_error_every && *script.format_error_every < 1) throw ScriptError("format_error_every must be >= 1");
  if (script.flip_every && *script.flip_every < 1) throw ScriptError("flip_every must be >= 1");
  if (script.latency_ms < 1) throw ScriptError("latency_ms must be >= 1");
  for (const auto& r : script.rules) compile(r);
}

MockScript mock_script_from_json(const nlohmann::json& doc) {
  MockScript s;
  try {
    for (const auto& r : doc.at("rules")) {
      MockRule rule;
      r.at("match").get_to(rule.match);
      r.at("response").get_to(rule.response);
      if (r.contains("answer")) r.at("answer").get_to(rule.answer);
      if (r.contains("icase")) r.at("icase").get_to(rule.icase);
      s.rules.push_back(std::move(rule));
    }
    if (doc.contains("format_error_every") && !doc["format_error_every"].is_null()) {
      s.format_error_every = doc["format_error_every"].get<std::uint64_t>();
    }
    if (doc.contains("flip_every") && !doc["flip_every"].is_null()) s.flip_every = doc["flip_every"].get<std::uint64_t>();
    if (doc.contains("format_error_at")) s.format_error_at = doc["format_error_at"].get<std::set<std::uint64_t>>();
    if (doc.contains("flip_at")) s.flip_at = doc["flip_at"].get<std::set<std::uint64_t>>();
    if (doc.contains("latency_ms")) s.latency_ms = doc["latency_ms"].get<std::int64_t>();
  } catch (const nlohmann::json::exception& e) {
    throw ScriptError(std::string("mock script: ") + e.what());
  }
  validate_mock_script(s);
  return s;
}

nlohmann::json mock_script_to_json(const MockScript& s) {
  nlohmann::json rules = nlohmann::json::array();
  for (const auto& r : s.rules) {
    rules.push_back({{"match", r.match}, {"response", r.response}, {"answer", r.answer}, {"icase", r.icase}});
  }
  nlohmann::json j{{"rules", rules}, {"latency_ms", s.latency_ms}};
  if (s.format_error_every) j["format_error_every"] = *s.format_error_every;
  if (s.flip_every) j["flip_every"] = *s.flip_every;
  if (!s.format_error_at.empty()) j["format_error_at"] = s.format_error_at;
  if (!s.flip_at.empty()) j["flip_at"] = s.flip_at;
  return j;
}

MockScript load_mock_script(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ScriptError("cannot open mock script " + path.string());
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw ScriptError("mock script " + path.string() + ": " + e.what());
  }
  return mock_script_from_json(doc);
}

std::string well_formed_response(const PromptTemplate& t) {
  const auto ids = t.question_ids();
  std::string out;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    out += question_label(ids[i]);
    out += ' ';
    out += i + 1 == ids.size() ? std::string(kAnswerPlaceholder) : "Considered against the concept definitions.";
    out += '\n';
  }
  return out;
}

MockScript default_mock_script() {
  const std::string therapy = well_formed_response(default_template(PromptId::Therapy));
  const std::string medication = well_formed_response(default_template(PromptId::Medication));
  MockScript s;
  s.latency_ms = 250;
  s.rules = {
      {"for respiratory therapy: [^\\n]*(ventilat|bipap|cpap|intubat|extubat|endotracheal|tracheostomy|high flow|"
       "hi flow|optiflow|nasal cannula|non-invasive|noninvasive|\\bniv\\b|\\bpeep\\b|\\bvent\\b)",
       therapy, "YES", true},
      {"for respiratory therapy: ", therapy, "NO", false},
      {"for sedation or paralysis medication: [^\\n]*(propofol|midazolam|lorazepam|dexmedetomidine|precedex|"
       "ketamine|fentanyl|rocuronium|vecuronium|cisatracurium|succinylcholine|etomidate)",
       medication, "YES", true},
      {"for sedation or paralysis medication: ", medication, "NO", false},
  };
  return s;
}

bool mock_flips(const MockScript& script, std::uint64_t ordinal) {
  return (script.flip_every && ordinal % *script.flip_every == 0) || script.flip_at.contains(ordinal);
}

bool mock_deviates(const MockScript& script, std::uint64_t ordinal) {
  return (script.format_error_every && ordinal % *script.format_error_every == 0) ||
         script.format_error_at.contains(ordinal);
}

Completion mock_complete(const MockScript& script, const PromptText& prompt, std::uint64_t ordinal) {
  return respond(script, compile_all(script), prompt, ordinal);
}

MockModel::MockModel(MockScript script, std::string name) : script_(std::move(script)), name_(std::move(name)) {
  validate_mock_script(script_);
  patterns_ = compile_all(script_);
}

Completion MockModel::complete(const PromptText& prompt, std::uint64_t ordinal) {
  return respond(script_, patterns_, prompt, ordinal);
}

struct MockServer::Impl {
  MockScript script;
  bool simulate_latency;
  std::vector<std::regex> patterns;
  httplib::Server server;
  std::thread thread;
  std::atomic<std::uint64_t> counter{0};
  std::atomic<std::uint64_t> served{0};
  std::string host;
  int port = 0;

  void install() {
    server.Post(R"(/.*)", [this](const httplib::Request& req, httplib::Response& res) {
      const auto doc = nlohmann::json::parse(req.body, nullptr, false);
      if (doc.is_discarded() || !doc.contains("prompt") || !doc["prompt"].is_string()) {
        res.status = 400;
        res.set_content(R"({"error":"request must be JSON with a string 'prompt'"})", "application/json");
        return;
      }
      std::uint64_t ordinal = 0;
      if (req.has_header("X-Request-Ordinal")) {
        try {
          ordinal = std::stoull(req.get_header_value("X-Request-Ordinal"));
        } catch (const std::exception&) {
          ordinal = 0;
        }
      }
      if (ordinal == 0) ordinal = ++counter;
      try {
        const Completion c = respond(script, patterns, PromptText{doc["prompt"].get<std::string>()}, ordinal);
        if (simulate_latency) std::this_thread::sleep_for(c.latency);
        nlohmann::json body{{"model", doc.value("model", "mock")}, {"response", c.raw_text}, {"done", true}};
        res.set_content(body.dump(), "application/json");
        ++served;
      } catch (const ScriptError& e) {
        res.status = 422;
        res.set_content(nlohmann::json{{"error", e.what()}}.dump(), "application/json");
      }
    });
  }
};

MockServer::MockServer(MockScript script, bool simulate_latency) : impl_(std::make_unique<Impl>()) {
  validate_mock_script(script);
  impl_->script = std::move(script);
  impl_->simulate_latency = simulate_latency;
  impl_->patterns = compile_all(impl_->script);
  impl_->install();
}

MockServer::~MockServer() { stop(); }

int MockServer::start(const std::string& host, int port) {
  impl_->host = host;
  if (port == 0) {
    impl_->port = impl_->server.bind_to_any_port(host);
  } else {
    impl_->port = impl_->server.bind_to_port(host, port) ? port : -1;
  }
  if (impl_->port <= 0) throw ConfigError("mock server cannot bind " + host + ":" + std::to_string(port));
  impl_->thread = std::thread([this] { impl_->server.listen_after_bind(); });
  impl_->server.wait_until_ready();
  return impl_->port;
}

void MockServer::listen_blocking(const std::string& host, int port) {
  impl_->host = host;
  impl_->port = port;
  if (!impl_->server.listen(host, port)) throw ConfigError("mock server cannot listen on " + host + ":" + std::to_string(port));
}

void MockServer::stop() {
  if (!impl_) return;
  impl_->server.stop();
  if (impl_->thread.joinable()) impl_->thread.join();
}

std::uint64_t MockServer::requests_served() const { return impl_->served.load(); }

std::string MockServer::generate_url() const {
  return "http://" + impl_->host + ":" + std::to_string(impl_->port) + "/api/generate";
}

}  // namespace phenoeval
