#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "phenoeval/concepts.hpp"
#include "phenoeval/records.hpp"
#include "phenoeval/response_parser.hpp"

namespace phenoeval {

/// A rate that always carries its denominator.
struct Fraction {
  std::uint64_t numerator = 0;
  std::uint64_t denominator = 0;

  [[nodiscard]] double value() const;
  // "149/200 (74.5%)"; a full fraction prints "(100%)".
  [[nodiscard]] std::string to_string() const;
  // "74.5%" / "100%".
  [[nodiscard]] std::string percent_string() const;

  bool operator==(const Fraction&) const = default;
};

struct ConfusionCounts {
  std::uint64_t tp = 0;
  std::uint64_t fp = 0;
  std::uint64_t tn = 0;
  std::uint64_t fn = 0;
  std::uint64_t indeterminate = 0;

  [[nodiscard]] std::uint64_t total() const { return tp + fp + tn + fn + indeterminate; }
  bool operator==(const ConfusionCounts&) const = default;
};

enum class Severity { Minor, Major, Critical };
std::string_view to_string(Severity s);
Severity severity_from_string(std::string_view s);
// Reviewer-facing definition of each severity level.
std::string_view severity_help(Severity s);

// Indeterminate decisions are tallied separately and need no label; every
// other decision without a label raises DataError naming the concept.
ConfusionCounts confusion(std::span<const FinalDecision> decisions, std::span<const GroundTruthLabel> truth);

/// Area under the single-threshold ROC polygon (0,0)-(FPR,TPR)-(1,1), i.e.
/// (TPR + TNR) / 2. Throws MetricError if either class is empty.
double auc_binary(const ConfusionCounts& c);

/// Moves `reassigned_fp` false positives to true positives.
ConfusionCounts quasi_confusion(const ConfusionCounts& c, std::uint64_t reassigned_fp);

/// Sum over groups of the size of the group's majority value (ties go to the
/// value seen first) over the total number of outcomes.
Fraction consistency_rate(std::span<const std::vector<Outcome>> groups);

using BaselineKey = std::pair<std::string, PromptId>;
using Baseline = std::map<BaselineKey, Outcome>;

/// Perturbed outcomes equal to the baseline over the number of perturbed
/// records. Unparseable on either side counts as disagreement.
Fraction stability_rate(const Baseline& baseline, std::span<const CompletionRecord> perturbed);

/// Mean of the per-concept (therapy + medication) latency sums, in seconds.
double mean_latency(std::span<const Duration> per_concept_sums);

Fraction format_rate(std::span<const CompletionRecord> records);

struct MetricReport {
  std::string model_name;
  std::optional<double> mean_latency_seconds;
  std::optional<Fraction> format_rate;
  std::optional<Fraction> consistency_rate;
  std::map<Perturbation, Fraction> stability_rates;
  std::optional<ConfusionCounts> confusion;
  std::optional<double> auc;
  std::optional<ConfusionCounts> quasi_confusion;
  std::optional<double> quasi_auc;
  std::map<Severity, std::uint64_t> hallucination_counts{
      {Severity::Minor, 0}, {Severity::Major, 0}, {Severity::Critical, 0}};
  std::uint64_t responses = 0;

  // Merges the fields set in `other` into this report.
  void merge(const MetricReport& other);
  bool operator==(const MetricReport&) const = default;
};

void to_json(nlohmann::json& j, const Fraction& f);
void from_json(const nlohmann::json& j, Fraction& f);
void to_json(nlohmann::json& j, const ConfusionCounts& c);
void from_json(const nlohmann::json& j, ConfusionCounts& c);
void to_json(nlohmann::json& j, const MetricReport& r);
void from_json(const nlohmann::json& j, MetricReport& r);

/// Model-ability table with one column per model: latency, format accuracy,
/// consistency, the three stability rows, ROC, quasi ROC and hallucinations.
/// Missing values render as "-".
std::string render_markdown(std::span<const MetricReport> reports);

}  // namespace phenoeval
