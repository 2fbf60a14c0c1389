#include "phenoeval/records.hpp"

namespace phenoeval {

RecordKey key_of(const CompletionRecord& r) {
  return {r.run_id, r.concept_id, r.prompt_id, r.perturbation, r.run_index};
}

void to_json(nlohmann::json& j, const ParsedOutcome& p) {
  j = nlohmann::json{{"value", to_string(p.value)},
                     {"anchor_offset", p.anchor_offset ? nlohmann::json(*p.anchor_offset) : nlohmann::json(nullptr)},
                     {"strict_format", p.strict_format},
                     {"source", to_string(p.source)}};
}

void from_json(const nlohmann::json& j, ParsedOutcome& p) {
  p.value = outcome_from_string(j.at("value").get<std::string>());
  const auto& off = j.at("anchor_offset");
  p.anchor_offset = off.is_null() ? std::nullopt : std::optional<std::size_t>(off.get<std::size_t>());
  j.at("strict_format").get_to(p.strict_format);
  const auto source = j.value("source", std::string("none"));
  p.source = source == "anchor" ? AnswerSource::Anchor : source == "fallback" ? AnswerSource::Fallback : AnswerSource::None;
}

void to_json(nlohmann::json& j, const CompletionRecord& r) {
  j = nlohmann::json{{"run_id", r.run_id},
                     {"concept_id", r.concept_id},
                     {"prompt_id", to_string(r.prompt_id)},
                     {"perturbation", r.perturbation ? nlohmann::json(to_string(*r.perturbation)) : nlohmann::json(nullptr)},
                     {"run_index", r.run_index},
                     {"ordinal", r.ordinal},
                     {"latency_ns", r.latency.count()},
                     {"attempt_count", r.attempt_count},
                     {"raw_text", r.raw_text},
                     {"parsed", r.parsed}};
}

void from_json(const nlohmann::json& j, CompletionRecord& r) {
  j.at("run_id").get_to(r.run_id);
  j.at("concept_id").get_to(r.concept_id);
  r.prompt_id = prompt_id_from_string(j.at("prompt_id").get<std::string>());
  const auto& p = j.at("perturbation");
  r.perturbation = p.is_null() ? std::nullopt : std::optional<Perturbation>(perturbation_from_string(p.get<std::string>()));
  j.at("run_index").get_to(r.run_index);
  j.at("ordinal").get_to(r.ordinal);
  r.latency = Duration(j.at("latency_ns").get<std::int64_t>());
  j.at("attempt_count").get_to(r.attempt_count);
  j.at("raw_text").get_to(r.raw_text);
  j.at("parsed").get_to(r.parsed);
}

}  // namespace phenoeval
