#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "phenoeval/concepts.hpp"
#include "phenoeval/metrics.hpp"
#include "phenoeval/model_client.hpp"
#include "phenoeval/records.hpp"

namespace phenoeval {

enum class ExperimentKind { Accuracy, Consistency, Stability };
std::string_view to_string(ExperimentKind k);
ExperimentKind experiment_kind_from_string(std::string_view s);

/// Reproducibility envelope of one run. Written once when the run is created
/// and never modified afterwards; completion time lives in the report.
struct RunManifest {
  std::string run_id;
  ExperimentKind kind = ExperimentKind::Accuracy;
  ModelConfig model;
  std::string backend;  // "http" or "mock"
  std::string therapy_template_hash;
  std::string medication_template_hash;
  std::string sample_id;
  std::optional<std::uint64_t> seed;
  std::optional<Perturbation> perturbation;
  int k_runs = 1;
  bool include_unperturbed_prompt = true;
  std::optional<std::string> baseline_run_id;
  std::vector<ConstructedConcept> concepts;
  std::map<std::string, bool> truth;
  std::map<std::string, std::string> input_hashes;
  std::optional<std::string> time_to_minimum_viable_prompt;
  std::optional<std::string> tag;
  std::string started_at;

  bool operator==(const RunManifest&) const = default;
};

void to_json(nlohmann::json& j, const RunManifest& m);
void from_json(const nlohmann::json& j, RunManifest& m);

// SHA-256 over the ordered concept ids; identifies a concept sample.
std::string sample_id_of(const std::vector<ConstructedConcept>& concepts);

struct RunReport {
  std::string run_id;
  ExperimentKind kind = ExperimentKind::Accuracy;
  std::optional<Perturbation> perturbation;
  MetricReport metrics;
  std::uint64_t expected_records = 0;
  std::uint64_t recorded = 0;
  bool partial = false;
  std::uint64_t indeterminate_decisions = 0;
  std::optional<std::string> finished_at;

  bool operator==(const RunReport&) const = default;
};

void to_json(nlohmann::json& j, const RunReport& r);
void from_json(const nlohmann::json& j, RunReport& r);
std::string render_run_markdown(const RunReport& r);

/// Filesystem layout: <root>/<run_id>/{manifest.json, records.jsonl,
/// report.json, report.md}.
class RunStore {
 public:
  explicit RunStore(std::filesystem::path root);

  [[nodiscard]] const std::filesystem::path& root() const { return root_; }
  [[nodiscard]] std::filesystem::path run_dir(const std::string& run_id) const;
  [[nodiscard]] bool exists(const std::string& run_id) const;
  [[nodiscard]] std::vector<std::string> list_runs() const;

  // Refuses an existing run id (ConfigError).
  void create(const RunManifest& manifest);
  [[nodiscard]] RunManifest load_manifest(const std::string& run_id) const;
  // Sorted by ordinal. Throws NotFoundError for an unknown run.
  [[nodiscard]] std::vector<CompletionRecord> load_records(const std::string& run_id) const;

  void write_report(const RunReport& report) const;
  [[nodiscard]] std::optional<RunReport> load_report(const std::string& run_id) const;

  /// Serialized appender for records.jsonl. Each record is written as one
  /// line and flushed before append() returns.
  class RecordWriter {
   public:
    explicit RecordWriter(const std::filesystem::path& path);
    void append(const CompletionRecord& record);

   private:
    std::mutex mu_;
    std::ofstream out_;
  };

  [[nodiscard]] std::unique_ptr<RecordWriter> open_writer(const std::string& run_id) const;

 private:
  std::filesystem::path root_;
};

}  // namespace phenoeval
