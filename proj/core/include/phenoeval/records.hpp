#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <tuple>

#include <nlohmann/json.hpp>

#include "phenoeval/model_client.hpp"
#include "phenoeval/prompts.hpp"
#include "phenoeval/response_parser.hpp"

namespace phenoeval {

/// One model response with its provenance. The atom every metric is computed
/// from.
struct CompletionRecord {
  std::string run_id;
  std::string concept_id;
  PromptId prompt_id = PromptId::Therapy;
  std::optional<Perturbation> perturbation;
  int run_index = 0;
  std::uint64_t ordinal = 0;
  Duration latency{0};
  int attempt_count = 1;
  std::string raw_text;
  ParsedOutcome parsed;

  bool operator==(const CompletionRecord&) const = default;
};

// (run_id, concept_id, prompt_id, perturbation, run_index); unique per run.
using RecordKey = std::tuple<std::string, std::string, PromptId, std::optional<Perturbation>, int>;
RecordKey key_of(const CompletionRecord& r);

void to_json(nlohmann::json& j, const ParsedOutcome& p);
void from_json(const nlohmann::json& j, ParsedOutcome& p);
void to_json(nlohmann::json& j, const CompletionRecord& r);
void from_json(const nlohmann::json& j, CompletionRecord& r);

}  // namespace phenoeval
