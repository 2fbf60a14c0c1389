#include "test_support.hpp"

#include <atomic>
#include <fstream>
#include <random>
#include <sstream>
#include <unistd.h>

#include "phenoeval/prompts.hpp"

namespace phenoeval::testing {

namespace fs = std::filesystem;

TempDir::TempDir() {
  static std::atomic<int> counter{0};
  std::random_device rd;
  path_ = fs::temp_directory_path() /
          ("phenoeval-test-" + std::to_string(::getpid()) + "-" + std::to_string(counter++) + "-" + std::to_string(rd()));
  fs::create_directories(path_);
}

TempDir::~TempDir() {
  std::error_code ec;
  fs::remove_all(path_, ec);
}

fs::path source_dir() { return PHENOEVAL_SOURCE_DIR; }

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void write_file(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out << text;
}

std::vector<ConstructedConcept> synthetic_concepts(std::size_t n, const std::string& stem) {
  std::vector<ConstructedConcept> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) out.push_back(make_concept("Infusion Drug", stem + "-" + std::to_string(i)));
  return out;
}

std::vector<GroundTruthLabel> labels_for(std::span<const ConstructedConcept> concepts,
                                         const std::function<bool(const ConstructedConcept&)>& relevant) {
  std::vector<GroundTruthLabel> out;
  for (const auto& c : concepts) out.push_back({c.concept_id, relevant(c)});
  return out;
}

std::string regex_escape(std::string_view s) {
  static const std::string special = R"(\^$.|?*+()[]{}/)";
  std::string out;
  for (char c : s) {
    if (special.find(c) != std::string::npos) out.push_back('\\');
    out.push_back(c);
  }
  return out;
}

MockRule therapy_rule(const std::string& concept_pattern, const std::string& answer) {
  return {std::string(kTherapyInput) + concept_pattern, well_formed_response(default_template(PromptId::Therapy)),
          answer, false};
}

MockRule medication_rule(const std::string& concept_pattern, const std::string& answer) {
  return {std::string(kMedicationInput) + concept_pattern,
          well_formed_response(default_template(PromptId::Medication)), answer, false};
}

MockScript uniform_script(const std::string& therapy_answer, const std::string& medication_answer) {
  MockScript s;
  s.rules = {therapy_rule("", therapy_answer), medication_rule("", medication_answer)};
  return s;
}

MockScript therapy_yes_for(std::span<const ConstructedConcept> yes) {
  MockScript s;
  for (const auto& c : yes) s.rules.push_back(therapy_rule(regex_escape(c.rendered) + "\n", "YES"));
  s.rules.push_back(therapy_rule("", "NO"));
  s.rules.push_back(medication_rule("", "NO"));
  return s;
}

ModelConfig mock_model_config(const std::string& name) {
  ModelConfig cfg;
  cfg.model_name = name;
  return cfg;
}

MockHarness::MockHarness(MockScript script, const fs::path& root, int max_inflight)
    : store(root),
      model(std::move(script)),
      runner(store, model,
             [&] {
               ModelConfig cfg = mock_model_config();
               cfg.max_inflight = max_inflight;
               return cfg;
             }(),
             default_template(PromptId::Therapy), default_template(PromptId::Medication), "mock") {}

}  // namespace phenoeval::testing
