#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "phenoeval/concepts.hpp"

namespace phenoeval {

enum class PromptId { Therapy, Medication };
enum class SectionKind { Input, Instructions, ConceptDefinitions, Output };
enum class Perturbation { InstructionsAfterCriteria, QuestionsReversed, ConceptsReversed };

std::string_view to_string(PromptId id);
std::string_view to_string(SectionKind kind);
std::string_view to_string(Perturbation p);
PromptId prompt_id_from_string(std::string_view s);
SectionKind section_kind_from_string(std::string_view s);
// Accepts the enumerator name or its kebab-case CLI spelling
// ("instructions-after-criteria").
Perturbation perturbation_from_string(std::string_view s);
std::string_view cli_name(Perturbation p);

inline constexpr std::string_view kConceptPlaceholder = "{{CONCEPT}}";

struct PromptText {
  std::string text;

  bool operator==(const PromptText&) const = default;
};

// A `#Q` question or `#DEF` definition inside a section. `marker_line` is the
// raw marker line including its newline; `body` is everything up to the next
// marker.
struct Block {
  std::string id;
  std::string marker_line;
  std::string body;

  bool operator==(const Block&) const = default;
};

// `intro` is the text between the `#SECTION` line and the first block.
struct Section {
  SectionKind kind = SectionKind::Input;
  std::string marker_line;
  std::string intro;
  std::vector<Block> blocks;

  bool operator==(const Section&) const = default;
};

/// A sectioned classification prompt.
///
/// File format (line oriented, every line newline-terminated):
///
///     #PROMPT Therapy
///     #SECTION Input
///     ... {{CONCEPT}} ...
///     #SECTION Instructions
///     #SECTION ConceptDefinitions
///     #DEF IMV
///     #SECTION Output
///     #Q Q1
///
/// Text between `#PROMPT` and the first `#SECTION` is a comment and is not
/// rendered. Marker lines are stored verbatim so save(load(x)) == x.
struct PromptTemplate {
  PromptId prompt_id = PromptId::Therapy;
  std::string prompt_line;
  std::string preamble;
  std::vector<Section> sections;

  [[nodiscard]] std::vector<std::string> question_ids() const;
  [[nodiscard]] std::string final_question_id() const;
  [[nodiscard]] std::vector<std::string> definition_ids() const;
  [[nodiscard]] std::vector<SectionKind> section_order() const;
  [[nodiscard]] const Section& section(SectionKind kind) const;

  bool operator==(const PromptTemplate&) const = default;
};

// Throws TemplateError on malformed markers or invariant violations.
PromptTemplate parse_template(std::string_view text);
PromptTemplate load_template(const std::filesystem::path& path);
std::string save_template(const PromptTemplate& t);

// Throws TemplateError unless: one section of each kind, exactly one
// placeholder (inside Input), at least one question, and the final question
// asks for a YES/NO answer.
void validate_template(const PromptTemplate& t);

// Section content in template order with marker lines removed.
std::string body_text(const PromptTemplate& t);

/// Replaces the placeholder with `concept.rendered`.
PromptText render(const PromptTemplate& t, const ConstructedConcept& c);

/// Reorders a Therapy template. Throws ContractError for Medication templates.
PromptTemplate perturb(const PromptTemplate& t, Perturbation p);

// Shipped stand-in templates.
const PromptTemplate& default_template(PromptId id);
std::string_view default_template_text(PromptId id);

// SHA-256 of the saved template text.
std::string template_hash(const PromptTemplate& t);

}  // namespace phenoeval
