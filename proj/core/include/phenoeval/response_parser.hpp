#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "phenoeval/prompts.hpp"

namespace phenoeval {

enum class Outcome { Yes, No, Unparseable };
enum class Decision { Yes, No, Indeterminate };
enum class AnswerSource { Anchor, Fallback, None };

std::string_view to_string(Outcome o);
std::string_view to_string(Decision d);
std::string_view to_string(AnswerSource s);
Outcome outcome_from_string(std::string_view s);
Decision decision_from_string(std::string_view s);

struct ParsedOutcome {
  Outcome value = Outcome::Unparseable;
  std::optional<std::size_t> anchor_offset;
  bool strict_format = false;
  AnswerSource source = AnswerSource::None;

  bool operator==(const ParsedOutcome&) const = default;
};

struct FinalDecision {
  std::string concept_id;
  ParsedOutcome therapy;
  ParsedOutcome medication;
  Decision decision = Decision::Indeterminate;
};

// Positions of a label ("Q4:") that are not preceded by a word character.
std::vector<std::size_t> find_label(std::string_view text, std::string_view label);

// The label a question id is answered under in a response.
std::string question_label(std::string_view question_id);

// Standalone YES/NO tokens, case-insensitive, delimited by non-word
// characters ("YES," counts, "EYES" does not).
struct AnswerToken {
  std::size_t offset;
  Outcome value;
};
std::vector<AnswerToken> answer_tokens(std::string_view text);

/// True iff every question label appears exactly once, in template order,
/// each followed by a non-empty answer, with only whitespace before the
/// first label.
bool validate_format(std::string_view raw_text, const PromptTemplate& t);

/// Reads the first YES/NO after the last occurrence of the final question's
/// label; without one, the last YES/NO anywhere; otherwise Unparseable.
ParsedOutcome extract_final_answer(std::string_view raw_text, const PromptTemplate& t);

/// YES if either outcome is YES, NO if both are NO, otherwise Indeterminate.
FinalDecision combine(const ParsedOutcome& therapy, const ParsedOutcome& medication, std::string concept_id);

}  // namespace phenoeval
