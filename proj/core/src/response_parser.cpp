#include "phenoeval/response_parser.hpp"

#include <cctype>

#include "phenoeval/error.hpp"

namespace phenoeval {

namespace {

bool is_word_char(char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_'; }

bool iequals_at(std::string_view text, std::size_t pos, std::string_view word) {
  if (pos + word.size() > text.size()) return false;
  for (std::size_t i = 0; i < word.size(); ++i) {
    if (std::toupper(static_cast<unsigned char>(text[pos + i])) != word[i]) return false;
  }
  return true;
}

bool only_whitespace(std::string_view s) {
  for (char c : s) {
    if (!std::isspace(static_cast<unsigned char>(c))) return false;
  }
  return true;
}

}  // namespace

std::string_view to_string(Outcome o) {
  switch (o) {
    case Outcome::Yes: return "YES";
    case Outcome::No: return "NO";
    case Outcome::Unparseable: return "UNPARSEABLE";
  }
  return "?";
}

std::string_view to_string(Decision d) {
  switch (d) {
    case Decision::Yes: return "YES";
    case Decision::No: return "NO";
    case Decision::Indeterminate: return "INDETERMINATE";
  }
  return "?";
}

std::string_view to_string(AnswerSource s) {
  switch (s) {
    case AnswerSource::Anchor: return "anchor";
    case AnswerSource::Fallback: return "fallback";
    case AnswerSource::None: return "none";
  }
  return "?";
}

Outcome outcome_from_string(std::string_view s) {
  if (s == "YES") return Outcome::Yes;
  if (s == "NO") return Outcome::No;
  if (s == "UNPARSEABLE") return Outcome::Unparseable;
  throw DataError("unknown outcome '" + std::string(s) + "'");
}

Decision decision_from_string(std::string_view s) {
  if (s == "YES") return Decision::Yes;
  if (s == "NO") return Decision::No;
  if (s == "INDETERMINATE") return Decision::Indeterminate;
  throw DataError("unknown decision '" + std::string(s) + "'");
}

std::string question_label(std::string_view question_id) { return std::string(question_id) + ":"; }

std::vector<std::size_t> find_label(std::string_view text, std::string_view label) {
  std::vector<std::size_t> hits;
  if (label.empty()) return hits;
  for (auto pos = text.find(label); pos != std::string_view::npos; pos = text.find(label, pos + 1)) {
    if (pos == 0 || !is_word_char(text[pos - 1])) hits.push_back(pos);
  }
  return hits;
}

std::vector<AnswerToken> answer_tokens(std::string_view text) {
  std::vector<AnswerToken> tokens;
  std::size_t i = 0;
  while (i < text.size()) {
    if (!is_word_char(text[i])) {
      ++i;
      continue;
    }
    std::size_t end = i;
    while (end < text.size() && is_word_char(text[end])) ++end;
    const std::size_t len = end - i;
    if (len == 3 && iequals_at(text, i, "YES")) tokens.push_back({i, Outcome::Yes});
    if (len == 2 && iequals_at(text, i, "NO")) tokens.push_back({i, Outcome::No});
    i = end;
  }
  return tokens;
}

bool validate_format(std::string_view raw_text, const PromptTemplate& t) {
  const auto ids = t.question_ids();
  if (ids.empty()) return false;
  std::vector<std::size_t> positions;
  std::vector<std::size_t> lengths;
  for (const auto& id : ids) {
    const std::string label = question_label(id);
    const auto hits = find_label(raw_text, label);
    if (hits.size() != 1) return false;
    positions.push_back(hits.front());
    lengths.push_back(label.size());
  }
  for (std::size_t i = 1; i < positions.size(); ++i) {
    if (positions[i] <= positions[i - 1]) return false;
  }
  if (!only_whitespace(raw_text.substr(0, positions.front()))) return false;
  for (std::size_t i = 0; i < positions.size(); ++i) {
    const std::size_t start = positions[i] + lengths[i];
    const std::size_t end = i + 1 < positions.size() ? positions[i + 1] : raw_text.size();
    if (start > end || only_whitespace(raw_text.substr(start, end - start))) return false;
  }
  return true;
}

ParsedOutcome extract_final_answer(std::string_view raw_text, const PromptTemplate& t) {
  ParsedOutcome out;
  const std::string label = question_label(t.final_question_id());
  const auto hits = find_label(raw_text, label);
  if (!hits.empty()) {
    const std::size_t from = hits.back() + label.size();
    for (const auto& tok : answer_tokens(raw_text.substr(from))) {
      out.value = tok.value;
      out.anchor_offset = from + tok.offset;
      out.source = AnswerSource::Anchor;
      break;
    }
  }
  if (out.source == AnswerSource::None) {
    const auto tokens = answer_tokens(raw_text);
    if (!tokens.empty()) {
      out.value = tokens.back().value;
      out.anchor_offset = tokens.back().offset;
      out.source = AnswerSource::Fallback;
    }
  }
  out.strict_format = out.source == AnswerSource::Anchor && validate_format(raw_text, t);
  return out;
}

FinalDecision combine(const ParsedOutcome& therapy, const ParsedOutcome& medication, std::string concept_id) {
  FinalDecision d;
  d.concept_id = std::move(concept_id);
  d.therapy = therapy;
  d.medication = medication;
  if (therapy.value == Outcome::Yes || medication.value == Outcome::Yes) {
    d.decision = Decision::Yes;
  } else if (therapy.value == Outcome::No && medication.value == Outcome::No) {
    d.decision = Decision::No;
  } else {
    d.decision = Decision::Indeterminate;
  }
  return d;
}

}  // namespace phenoeval
