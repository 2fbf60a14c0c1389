#include "phenoeval/prompts.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <iterator>
#include <set>

#include "embedded_data.hpp"
#include "phenoeval/error.hpp"
#include "phenoeval/hashing.hpp"

namespace phenoeval {

namespace {

constexpr std::string_view kPromptMarker = "#PROMPT ";
constexpr std::string_view kSectionMarker = "#SECTION ";
constexpr std::string_view kQuestionMarker = "#Q ";
constexpr std::string_view kDefinitionMarker = "#DEF ";

std::string_view strip_eol(std::string_view line) {
  if (!line.empty() && line.back() == '\n') line.remove_suffix(1);
  if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
  return line;
}

std::string marker_argument(std::string_view line, std::string_view marker) {
  std::string_view arg = strip_eol(line).substr(marker.size());
  while (!arg.empty() && (arg.front() == ' ' || arg.front() == '\t')) arg.remove_prefix(1);
  while (!arg.empty() && (arg.back() == ' ' || arg.back() == '\t')) arg.remove_suffix(1);
  return std::string(arg);
}

std::size_t count_occurrences(std::string_view haystack, std::string_view needle) {
  std::size_t n = 0;
  for (auto pos = haystack.find(needle); pos != std::string_view::npos; pos = haystack.find(needle, pos + 1)) ++n;
  return n;
}

bool has_word(std::string_view text, std::string_view word) {
  auto is_word = [](char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_'; };
  for (auto pos = text.find(word); pos != std::string_view::npos; pos = text.find(word, pos + 1)) {
    const bool left = pos == 0 || !is_word(text[pos - 1]);
    const bool right = pos + word.size() >= text.size() || !is_word(text[pos + word.size()]);
    if (left && right) return true;
  }
  return false;
}

std::string section_text(const Section& s) {
  std::string out = s.intro;
  for (const auto& b : s.blocks) out += b.body;
  return out;
}

Section& section_mut(PromptTemplate& t, SectionKind kind) {
  for (auto& s : t.sections) {
    if (s.kind == kind) return s;
  }
  throw TemplateError(std::string("template has no ") + std::string(to_string(kind)) + " section");
}

}  // namespace

std::string_view to_string(PromptId id) { return id == PromptId::Therapy ? "Therapy" : "Medication"; }

std::string_view to_string(SectionKind kind) {
  switch (kind) {
    case SectionKind::Input: return "Input";
    case SectionKind::Instructions: return "Instructions";
    case SectionKind::ConceptDefinitions: return "ConceptDefinitions";
    case SectionKind::Output: return "Output";
  }
  return "?";
}

std::string_view to_string(Perturbation p) {
  switch (p) {
    case Perturbation::InstructionsAfterCriteria: return "InstructionsAfterCriteria";
    case Perturbation::QuestionsReversed: return "QuestionsReversed";
    case Perturbation::ConceptsReversed: return "ConceptsReversed";
  }
  return "?";
}

std::string_view cli_name(Perturbation p) {
  switch (p) {
    case Perturbation::InstructionsAfterCriteria: return "instructions-after-criteria";
    case Perturbation::QuestionsReversed: return "questions-reversed";
    case Perturbation::ConceptsReversed: return "concepts-reversed";
  }
  return "?";
}

PromptId prompt_id_from_string(std::string_view s) {
  if (s == "Therapy") return PromptId::Therapy;
  if (s == "Medication") return PromptId::Medication;
  throw TemplateError("unknown prompt id '" + std::string(s) + "'");
}

SectionKind section_kind_from_string(std::string_view s) {
  for (auto k : {SectionKind::Input, SectionKind::Instructions, SectionKind::ConceptDefinitions, SectionKind::Output}) {
    if (to_string(k) == s) return k;
  }
  throw TemplateError("unknown section kind '" + std::string(s) + "'");
}

Perturbation perturbation_from_string(std::string_view s) {
  for (auto p : {Perturbation::InstructionsAfterCriteria, Perturbation::QuestionsReversed,
                 Perturbation::ConceptsReversed}) {
    if (to_string(p) == s || cli_name(p) == s) return p;
  }
  throw ConfigError("unknown perturbation '" + std::string(s) + "'");
}

std::vector<std::string> PromptTemplate::question_ids() const {
  std::vector<std::string> ids;
  for (const auto& s : sections) {
    if (s.kind != SectionKind::Output) continue;
    for (const auto& b : s.blocks) ids.push_back(b.id);
  }
  return ids;
}

std::string PromptTemplate::final_question_id() const {
  auto ids = question_ids();
  if (ids.empty()) throw TemplateError("template has no output questions");
  return ids.back();
}

std::vector<std::string> PromptTemplate::definition_ids() const {
  std::vector<std::string> ids;
  for (const auto& s : sections) {
    if (s.kind != SectionKind::ConceptDefinitions) continue;
    for (const auto& b : s.blocks) ids.push_back(b.id);
  }
  return ids;
}

std::vector<SectionKind> PromptTemplate::section_order() const {
  std::vector<SectionKind> order;
  for (const auto& s : sections) order.push_back(s.kind);
  return order;
}

const Section& PromptTemplate::section(SectionKind kind) const {
  for (const auto& s : sections) {
    if (s.kind == kind) return s;
  }
  throw TemplateError(std::string("template has no ") + std::string(to_string(kind)) + " section");
}

PromptTemplate parse_template(std::string_view text) {
  if (text.empty() || text.back() != '\n') throw TemplateError("template must be non-empty and end with a newline");

  std::vector<std::string_view> lines;
  for (std::size_t start = 0; start < text.size();) {
    const auto end = text.find('\n', start);
    lines.push_back(text.substr(start, end - start + 1));
    start = end + 1;
  }

  PromptTemplate t;
  if (!lines.front().starts_with(kPromptMarker)) throw TemplateError("template must start with '#PROMPT <id>'");
  t.prompt_line = std::string(lines.front());
  t.prompt_id = prompt_id_from_string(marker_argument(lines.front(), kPromptMarker));

  for (std::size_t i = 1; i < lines.size(); ++i) {
    const std::string_view line = lines[i];
    const std::size_t line_no = i + 1;
    if (line.starts_with(kPromptMarker)) {
      throw TemplateError("line " + std::to_string(line_no) + ": duplicate #PROMPT marker");
    }
    if (line.starts_with(kSectionMarker)) {
      Section s;
      s.kind = section_kind_from_string(marker_argument(line, kSectionMarker));
      s.marker_line = std::string(line);
      t.sections.push_back(std::move(s));
      continue;
    }
    const bool is_question = line.starts_with(kQuestionMarker);
    const bool is_definition = line.starts_with(kDefinitionMarker);
    if (is_question || is_definition) {
      if (t.sections.empty()) throw TemplateError("line " + std::to_string(line_no) + ": block marker before any section");
      Section& current = t.sections.back();
      const SectionKind expected = is_question ? SectionKind::Output : SectionKind::ConceptDefinitions;
      if (current.kind != expected) {
        throw TemplateError("line " + std::to_string(line_no) + ": " + (is_question ? "#Q" : "#DEF") +
                            " marker is only allowed in the " + std::string(to_string(expected)) + " section");
      }
      Block b;
      b.id = marker_argument(line, is_question ? kQuestionMarker : kDefinitionMarker);
      if (b.id.empty()) throw TemplateError("line " + std::to_string(line_no) + ": block marker without an id");
      b.marker_line = std::string(line);
      current.blocks.push_back(std::move(b));
      continue;
    }
    if (t.sections.empty()) {
      t.preamble += line;
    } else if (t.sections.back().blocks.empty()) {
      t.sections.back().intro += line;
    } else {
      t.sections.back().blocks.back().body += line;
    }
  }
  validate_template(t);
  return t;
}

PromptTemplate load_template(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw TemplateError("cannot open template " + path.string());
  std::string text{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
  try {
    return parse_template(text);
  } catch (const TemplateError& e) {
    throw TemplateError(path.string() + ": " + e.what());
  }
}

std::string save_template(const PromptTemplate& t) {
  std::string out = t.prompt_line + t.preamble;
  for (const auto& s : t.sections) {
    out += s.marker_line;
    out += s.intro;
    for (const auto& b : s.blocks) {
      out += b.marker_line;
      out += b.body;
    }
  }
  return out;
}

void validate_template(const PromptTemplate& t) {
  for (auto kind : {SectionKind::Input, SectionKind::Instructions, SectionKind::ConceptDefinitions, SectionKind::Output}) {
    const auto n = std::count_if(t.sections.begin(), t.sections.end(), [kind](const Section& s) { return s.kind == kind; });
    if (n != 1) {
      throw TemplateError("template needs exactly one " + std::string(to_string(kind)) + " section, found " +
                          std::to_string(n));
    }
  }
  if (t.sections.size() != 4) throw TemplateError("template must have exactly four sections");

  const std::size_t in_input = count_occurrences(section_text(t.section(SectionKind::Input)), kConceptPlaceholder);
  const std::size_t total = count_occurrences(body_text(t), kConceptPlaceholder);
  if (in_input != 1 || total != 1) {
    throw TemplateError("template needs exactly one " + std::string(kConceptPlaceholder) +
                        " placeholder, inside the Input section");
  }

  const auto questions = t.question_ids();
  if (questions.empty()) throw TemplateError("Output section has no #Q questions");
  if (std::set<std::string>(questions.begin(), questions.end()).size() != questions.size()) {
    throw TemplateError("duplicate question id in Output section");
  }
  const auto defs = t.definition_ids();
  if (std::set<std::string>(defs.begin(), defs.end()).size() != defs.size()) {
    throw TemplateError("duplicate definition id in ConceptDefinitions section");
  }
  const std::string& final_body = t.section(SectionKind::Output).blocks.back().body;
  if (!has_word(final_body, "YES") || !has_word(final_body, "NO")) {
    throw TemplateError("final question '" + questions.back() + "' must ask for a YES or NO answer");
  }
}

std::string body_text(const PromptTemplate& t) {
  std::string out;
  for (const auto& s : t.sections) out += section_text(s);
  return out;
}

PromptText render(const PromptTemplate& t, const ConstructedConcept& c) {
  std::string text = body_text(t);
  const auto pos = text.find(kConceptPlaceholder);
  if (pos == std::string::npos) throw TemplateError("template has no concept placeholder");
  text.replace(pos, kConceptPlaceholder.size(), c.rendered);
  return PromptText{std::move(text)};
}

PromptTemplate perturb(const PromptTemplate& t, Perturbation p) {
  if (t.prompt_id != PromptId::Therapy) {
    throw ContractError("perturbations apply to the Therapy prompt only, got " + std::string(to_string(t.prompt_id)));
  }
  PromptTemplate out = t;
  switch (p) {
    case Perturbation::InstructionsAfterCriteria: {
      auto it = std::find_if(out.sections.begin(), out.sections.end(),
                             [](const Section& s) { return s.kind == SectionKind::Instructions; });
      Section moved = std::move(*it);
      out.sections.erase(it);
      auto defs = std::find_if(out.sections.begin(), out.sections.end(),
                               [](const Section& s) { return s.kind == SectionKind::ConceptDefinitions; });
      out.sections.insert(std::next(defs), std::move(moved));
      break;
    }
    case Perturbation::QuestionsReversed: {
      auto& blocks = section_mut(out, SectionKind::Output).blocks;
      if (blocks.size() > 2) std::reverse(blocks.begin(), std::prev(blocks.end()));
      break;
    }
    case Perturbation::ConceptsReversed: {
      auto& blocks = section_mut(out, SectionKind::ConceptDefinitions).blocks;
      std::reverse(blocks.begin(), blocks.end());
      break;
    }
  }
  return out;
}

std::string_view default_template_text(PromptId id) {
  return id == PromptId::Therapy ? embedded::kTherapyTemplate : embedded::kMedicationTemplate;
}

const PromptTemplate& default_template(PromptId id) {
  static const PromptTemplate therapy = parse_template(embedded::kTherapyTemplate);
  static const PromptTemplate medication = parse_template(embedded::kMedicationTemplate);
  return id == PromptId::Therapy ? therapy : medication;
}

std::string template_hash(const PromptTemplate& t) { return sha256_hex(save_template(t)); }

}  // namespace phenoeval
