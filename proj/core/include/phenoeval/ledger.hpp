#pragma once

#include <array>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

namespace phenoeval {

enum class LedgerCategory { DevelopmentEffort, DevelopmentSchedule };
enum class LedgerCriterion {
  ModelHostEnvironments,
  HardwareRequirements,
  SoftwareAvailability,
  TimeForPipelineDevelopment,
  TimeForManualReview,
  PhenotypeRuntime,
};
enum class Verdict { TraditionalSuperior, LLMSuperior, Tie, NotApplicable };

inline constexpr std::array<LedgerCriterion, 6> kAllCriteria = {
    LedgerCriterion::ModelHostEnvironments,      LedgerCriterion::HardwareRequirements,
    LedgerCriterion::SoftwareAvailability,       LedgerCriterion::TimeForPipelineDevelopment,
    LedgerCriterion::TimeForManualReview,        LedgerCriterion::PhenotypeRuntime,
};

std::string_view to_string(LedgerCategory c);
std::string_view to_string(LedgerCriterion c);
std::string_view to_string(Verdict v);
LedgerCategory ledger_category_from_string(std::string_view s);
LedgerCriterion ledger_criterion_from_string(std::string_view s);
Verdict verdict_from_string(std::string_view s);

// The category a criterion belongs to.
LedgerCategory category_of(LedgerCriterion c);
// Human-readable names used in the rendered table.
std::string_view display_name(LedgerCategory c);
std::string_view display_name(LedgerCriterion c);
std::string_view display_name(Verdict v);

/// One resource-requirements judgment comparing the traditional and
/// LLM-based approach.
struct LedgerEntry {
  LedgerCategory category = LedgerCategory::DevelopmentEffort;
  LedgerCriterion criterion = LedgerCriterion::ModelHostEnvironments;
  std::string traditional_note;
  std::string llm_note;
  Verdict verdict = Verdict::NotApplicable;
  std::string verdict_rationale;

  bool operator==(const LedgerEntry&) const = default;
};

void to_json(nlohmann::json& j, const LedgerEntry& e);
void from_json(const nlohmann::json& j, LedgerEntry& e);

std::vector<LedgerEntry> ledger_from_json(const nlohmann::json& doc);
nlohmann::json ledger_to_json(std::span<const LedgerEntry> entries);
std::vector<LedgerEntry> load_ledger(const std::filesystem::path& path);

// Every violation found; empty means the ledger is valid.
std::vector<std::string> validate_ledger(std::span<const LedgerEntry> entries);

/// Markdown comparison grouped by category, rows in criterion order, columns
/// Criterion | Traditional | LLM-based | Verdict. Throws ValidationError on an
/// invalid ledger.
std::string render_comparison(std::span<const LedgerEntry> entries);

// Inverse of render_comparison.
std::vector<LedgerEntry> parse_comparison(std::string_view markdown);

}  // namespace phenoeval
