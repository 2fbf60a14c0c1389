#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "phenoeval/metrics.hpp"
#include "phenoeval/run_store.hpp"

namespace phenoeval {

/// A reviewer's verdict on one false positive. Only the latest annotation per
/// (run_id, concept_id) counts.
struct Annotation {
  std::string annotation_id;
  std::string run_id;
  std::string concept_id;
  std::string reviewer;
  bool reclassify_to_tp = false;
  std::string rationale;
  std::string created_at;

  bool operator==(const Annotation&) const = default;
};

struct HallucinationRecord {
  std::string record_id;
  std::string run_id;
  std::string concept_id;
  PromptId prompt_id = PromptId::Therapy;
  std::string statement_excerpt;
  Severity severity = Severity::Minor;
  std::string reviewer;
  std::string created_at;

  bool operator==(const HallucinationRecord&) const = default;
};

using ReviewEvent = std::variant<Annotation, HallucinationRecord>;

void to_json(nlohmann::json& j, const Annotation& a);
void from_json(const nlohmann::json& j, Annotation& a);
void to_json(nlohmann::json& j, const HallucinationRecord& h);
void from_json(const nlohmann::json& j, HallucinationRecord& h);
nlohmann::json event_to_json(const ReviewEvent& e);
ReviewEvent event_from_json(const nlohmann::json& j);

struct FalsePositiveItem {
  std::string concept_id;
  std::string rendered;
  std::string therapy_raw_text;
  std::string medication_raw_text;
  bool truth = false;
  std::optional<Annotation> annotation;  // latest verdict, if reviewed
};
void to_json(nlohmann::json& j, const FalsePositiveItem& f);

// AUC values are absent when a class is empty.
struct QuasiUpdate {
  ConfusionCounts confusion;
  ConfusionCounts quasi_confusion;
  std::optional<double> auc;
  std::optional<double> quasi_auc;
  std::uint64_t reassigned = 0;

  bool operator==(const QuasiUpdate&) const = default;
};
void to_json(nlohmann::json& j, const QuasiUpdate& q);

struct HallucinationSummary {
  std::map<Severity, std::uint64_t> counts{{Severity::Minor, 0}, {Severity::Major, 0}, {Severity::Critical, 0}};
  std::uint64_t total = 0;
  std::uint64_t responses = 0;
  double per_response = 0.0;

  bool operator==(const HallucinationSummary&) const = default;
};
void to_json(nlohmann::json& j, const HallucinationSummary& h);

/// Review state of one run: the persisted records folded with the annotation
/// log. Immutable once built; apply() returns the successor state.
class ReviewState {
 public:
  ReviewState(RunManifest manifest, std::vector<CompletionRecord> records,
              std::vector<CompletionRecord> baseline_records = {});

  // Throws ValidationError / NotFoundError if `event` cannot be applied.
  void check(const ReviewEvent& event) const;
  [[nodiscard]] ReviewState apply(const ReviewEvent& event) const;

  [[nodiscard]] const RunManifest& manifest() const { return manifest_; }
  [[nodiscard]] const std::vector<CompletionRecord>& records() const { return records_; }
  [[nodiscard]] const RunReport& base_report() const { return base_; }
  [[nodiscard]] bool reviewable() const;
  [[nodiscard]] const std::vector<FinalDecision>& decisions() const { return decisions_; }
  [[nodiscard]] std::vector<FalsePositiveItem> false_positives() const;
  [[nodiscard]] QuasiUpdate quasi() const;
  [[nodiscard]] HallucinationSummary hallucinations() const;
  // Plain report with quasi accuracy and hallucination counts overlaid.
  [[nodiscard]] RunReport report() const;
  [[nodiscard]] std::vector<CompletionRecord> responses_for(const std::string& concept_id) const;
  [[nodiscard]] const std::vector<ReviewEvent>& events() const { return events_; }

 private:
  RunManifest manifest_;
  std::vector<CompletionRecord> records_;
  RunReport base_;
  std::vector<FinalDecision> decisions_;
  std::set<std::string> false_positive_ids_;
  std::map<std::string, Annotation> latest_annotation_;
  std::vector<HallucinationRecord> hallucinations_;
  std::vector<ReviewEvent> events_;
};

// Builds the state from scratch by folding `events` in order.
ReviewState fold_review(const RunManifest& manifest, std::vector<CompletionRecord> records,
                        std::span<const ReviewEvent> events, std::vector<CompletionRecord> baseline_records = {});

struct RunSummary {
  std::string run_id;
  ExperimentKind kind = ExperimentKind::Accuracy;
  std::string model_name;
  std::optional<Perturbation> perturbation;
  std::uint64_t records = 0;
};
void to_json(nlohmann::json& j, const RunSummary& s);

/// Human review over a RunStore.
///
/// Each run's events are kept in `annotations.jsonl` inside the run
/// directory. Writes are serialized; a write is appended to the log before
/// the new state is published, and a failed append leaves the state as it
/// was. Readers always see a complete state snapshot.
class ReviewService {
 public:
  using Clock = std::function<std::string()>;

  explicit ReviewService(RunStore& store, Clock clock = {});

  [[nodiscard]] std::vector<RunSummary> list_runs() const;
  [[nodiscard]] RunReport report(const std::string& run_id) const;
  [[nodiscard]] std::vector<FalsePositiveItem> list_false_positives(const std::string& run_id) const;
  [[nodiscard]] std::vector<CompletionRecord> responses(const std::string& run_id, const std::string& concept_id) const;
  [[nodiscard]] std::vector<ReviewEvent> events(const std::string& run_id) const;

  QuasiUpdate submit_annotation(Annotation a);
  HallucinationSummary submit_hallucination(HallucinationRecord h);

  // Snapshot of the current state (loaded from disk on first use).
  [[nodiscard]] std::shared_ptr<const ReviewState> state(const std::string& run_id) const;
  // Drops cached state so the next read folds the log from disk.
  void invalidate(const std::string& run_id);

  [[nodiscard]] std::filesystem::path log_path(const std::string& run_id) const;

 private:
  std::shared_ptr<const ReviewState> load_state(const std::string& run_id) const;
  void append_event(const std::string& run_id, const ReviewEvent& event);
  void publish(const std::string& run_id, std::shared_ptr<const ReviewState> next);

  RunStore& store_;
  Clock clock_;
  std::mutex write_mu_;
  mutable std::mutex cache_mu_;
  mutable std::map<std::string, std::shared_ptr<const ReviewState>> cache_;
};

std::vector<ReviewEvent> read_review_log(const std::filesystem::path& path);

/// HTTP JSON API over a ReviewService:
///   GET  /runs
///   GET  /runs/{id}/report
///   GET  /runs/{id}/false-positives
///   POST /runs/{id}/annotations
///   POST /runs/{id}/hallucinations
///   GET  /runs/{id}/responses?concept={cid}
/// plus static files from `static_dir` when given.
class ReviewHttpServer {
 public:
  ReviewHttpServer(ReviewService& service, std::optional<std::filesystem::path> static_dir = std::nullopt);
  ~ReviewHttpServer();
  ReviewHttpServer(const ReviewHttpServer&) = delete;
  ReviewHttpServer& operator=(const ReviewHttpServer&) = delete;

  // Background thread; returns the bound port.
  int start(const std::string& host = "127.0.0.1", int port = 0);
  void listen_blocking(const std::string& host, int port);
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace phenoeval
