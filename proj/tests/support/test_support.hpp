#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "phenoeval/concepts.hpp"
#include "phenoeval/experiment_runner.hpp"
#include "phenoeval/mock_model.hpp"
#include "phenoeval/run_store.hpp"

namespace phenoeval::testing {

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  TempDir();
  ~TempDir();
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  [[nodiscard]] const std::filesystem::path& path() const { return path_; }
  [[nodiscard]] std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

std::filesystem::path source_dir();

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, const std::string& text);

// Infusion Drug concepts "<stem>-<i>" for i in [0, n).
std::vector<ConstructedConcept> synthetic_concepts(std::size_t n, const std::string& stem = "Drug");

std::vector<GroundTruthLabel> labels_for(std::span<const ConstructedConcept> concepts,
                                         const std::function<bool(const ConstructedConcept&)>& relevant);

// Regex fragments matching the input line of each shipped template.
inline constexpr const char* kTherapyInput = "for respiratory therapy: ";
inline constexpr const char* kMedicationInput = "for sedation or paralysis medication: ";

// A well-formed rule for one template. `concept_pattern` is a regex matched
// on the rest of the input line.
MockRule therapy_rule(const std::string& concept_pattern, const std::string& answer);
MockRule medication_rule(const std::string& concept_pattern, const std::string& answer);

// Answers every therapy and medication prompt well-formed with the given
// answers.
MockScript uniform_script(const std::string& therapy_answer = "NO", const std::string& medication_answer = "NO");

// A script whose therapy answer is YES exactly for the concepts in `yes`
// (matched by rendered text) and NO otherwise; medication always NO.
MockScript therapy_yes_for(std::span<const ConstructedConcept> yes);

std::string regex_escape(std::string_view s);

ModelConfig mock_model_config(const std::string& name = "mock");

// Runner over a MockModel with the shipped templates.
struct MockHarness {
  explicit MockHarness(MockScript script, const std::filesystem::path& root, int max_inflight = 1);

  RunStore store;
  MockModel model;
  ExperimentRunner runner;
};

}  // namespace phenoeval::testing
