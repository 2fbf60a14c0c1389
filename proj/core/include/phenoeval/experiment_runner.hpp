#pragma once

#include <atomic>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <unordered_set>
#include <vector>

#include "phenoeval/concepts.hpp"
#include "phenoeval/metrics.hpp"
#include "phenoeval/model_client.hpp"
#include "phenoeval/prompts.hpp"
#include "phenoeval/run_store.hpp"

namespace phenoeval {

// Experiment defaults.
inline constexpr std::size_t kDefaultSampleSize = 100;
inline constexpr std::size_t kDefaultRepeatConcepts = 10;
inline constexpr int kDefaultRepeats = 10;

struct RunOptions {
  std::string run_id;  // generated when empty
  int k_runs = kDefaultRepeats;
  bool include_unperturbed_prompt = true;
  // Concepts that must not appear in the sample (e.g. the prompt-engineering
  // sample).
  std::unordered_set<std::string> exclude;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> time_to_minimum_viable_prompt;
  std::optional<std::string> tag;
  std::map<std::string, std::string> input_hashes;
};

/// One request of a run plan. Ordinals are 1-based plan positions, so a
/// resumed run reissues missing requests under their original ordinals.
struct PlannedRequest {
  std::string concept_id;
  PromptId prompt_id = PromptId::Therapy;
  std::optional<Perturbation> perturbation;
  int run_index = 0;
  std::uint64_t ordinal = 0;
};

// Concept-major: for each concept, for each run index, therapy then
// medication.
std::vector<PlannedRequest> plan_requests(const RunManifest& manifest);

/// Stability baseline: the parsed outcome of run index 0, per
/// (concept, prompt), from an accuracy run.
Baseline baseline_from_records(std::span<const CompletionRecord> records);

// One decision per concept of an accuracy run that has both run-index-0
// responses recorded, in manifest order.
std::vector<FinalDecision> accuracy_decisions(const RunManifest& manifest, std::span<const CompletionRecord> records);

/// Report as a pure function of the manifest and persisted records.
/// Stability runs need the baseline run's records.
RunReport compute_report(const RunManifest& manifest, std::span<const CompletionRecord> records,
                         std::span<const CompletionRecord> baseline_records = {});
RunReport compute_report(const RunStore& store, const std::string& run_id);

/// Drives the accuracy, consistency and stability protocols against one
/// backend and persists every completion.
///
/// Requests are issued by up to `model.max_inflight` workers. Transport
/// failures leave a gap in the record set and mark the report partial;
/// resume() fills the gaps.
class ExperimentRunner {
 public:
  ExperimentRunner(RunStore& store, CompletionBackend& backend, ModelConfig model, PromptTemplate therapy,
                   PromptTemplate medication, std::string backend_kind = "http");

  RunReport run_accuracy(std::span<const ConstructedConcept> concepts, std::span<const GroundTruthLabel> truth,
                         RunOptions options = {});
  RunReport run_consistency(std::span<const ConstructedConcept> concepts, RunOptions options = {});
  RunReport run_stability(std::span<const ConstructedConcept> concepts, Perturbation perturbation,
                          const std::string& baseline_run_id, RunOptions options = {});

  // Issues only the planned requests that have no record yet.
  RunReport resume(const std::string& run_id);

  [[nodiscard]] std::uint64_t requests_issued() const { return issued_.load(); }
  [[nodiscard]] std::uint64_t transport_failures() const { return failures_.load(); }

 private:
  RunManifest make_manifest(ExperimentKind kind, std::span<const ConstructedConcept> concepts,
                            const RunOptions& options) const;
  RunReport execute(const RunManifest& manifest);

  RunStore& store_;
  CompletionBackend& backend_;
  ModelConfig model_;
  PromptTemplate therapy_;
  PromptTemplate medication_;
  std::string backend_kind_;
  std::atomic<std::uint64_t> issued_{0};
  std::atomic<std::uint64_t> failures_{0};
};

}  // namespace phenoeval
