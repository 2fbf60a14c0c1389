#include "phenoeval/review_service.hpp"

#include <algorithm>
#include <fstream>

#include "phenoeval/error.hpp"
#include "phenoeval/experiment_runner.hpp"
#include "file_util.hpp"
#include "time_util.hpp"

namespace phenoeval {

namespace {

constexpr const char* kLogFile = "annotations.jsonl";

std::optional<double> safe_auc(const ConfusionCounts& c) {
  if (c.tp + c.fn == 0 || c.tn + c.fp == 0) return std::nullopt;
  return auc_binary(c);
}

}  // namespace

void to_json(nlohmann::json& j, const Annotation& a) {
  j = nlohmann::json{{"annotation_id", a.annotation_id}, {"run_id", a.run_id},
                     {"concept_id", a.concept_id},       {"reviewer", a.reviewer},
                     {"reclassify_to_tp", a.reclassify_to_tp}, {"rationale", a.rationale},
                     {"created_at", a.created_at}};
}

void from_json(const nlohmann::json& j, Annotation& a) {
  a = Annotation{};
  a.annotation_id = j.value("annotation_id", std::string());
  a.run_id = j.value("run_id", std::string());
  j.at("concept_id").get_to(a.concept_id);
  a.reviewer = j.value("reviewer", std::string());
  j.at("reclassify_to_tp").get_to(a.reclassify_to_tp);
  a.rationale = j.value("rationale", std::string());
  a.created_at = j.value("created_at", std::string());
}

void to_json(nlohmann::json& j, const HallucinationRecord& h) {
  j = nlohmann::json{{"record_id", h.record_id},
                     {"run_id", h.run_id},
                     {"concept_id", h.concept_id},
                     {"prompt_id", to_string(h.prompt_id)},
                     {"statement_excerpt", h.statement_excerpt},
                     {"severity", to_string(h.severity)},
                     {"reviewer", h.reviewer},
                     {"created_at", h.created_at}};
}

void from_json(const nlohmann::json& j, HallucinationRecord& h) {
  h = HallucinationRecord{};
  h.record_id = j.value("record_id", std::string());
  h.run_id = j.value("run_id", std::string());
  j.at("concept_id").get_to(h.concept_id);
  h.prompt_id = prompt_id_from_string(j.at("prompt_id").get<std::string>());
  j.at("statement_excerpt").get_to(h.statement_excerpt);
  h.severity = severity_from_string(j.at("severity").get<std::string>());
  h.reviewer = j.value("reviewer", std::string());
  h.created_at = j.value("created_at", std::string());
}

nlohmann::json event_to_json(const ReviewEvent& e) {
  return std::visit(
      [](const auto& v) {
        nlohmann::json j = v;
        j["type"] = std::is_same_v<std::decay_t<decltype(v)>, Annotation> ? "annotation" : "hallucination";
        return j;
      },
      e);
}

ReviewEvent event_from_json(const nlohmann::json& j) {
  const std::string type = j.at("type").get<std::string>();
  if (type == "annotation") return j.get<Annotation>();
  if (type == "hallucination") return j.get<HallucinationRecord>();
  throw DataError("unknown review event type '" + type + "'");
}

void to_json(nlohmann::json& j, const FalsePositiveItem& f) {
  j = nlohmann::json{{"concept_id", f.concept_id},
                     {"rendered", f.rendered},
                     {"therapy_raw_text", f.therapy_raw_text},
                     {"medication_raw_text", f.medication_raw_text},
                     {"truth", f.truth},
                     {"annotation", f.annotation ? nlohmann::json(*f.annotation) : nlohmann::json(nullptr)}};
}

void to_json(nlohmann::json& j, const QuasiUpdate& q) {
  j = nlohmann::json{{"confusion", q.confusion},
                     {"quasi_confusion", q.quasi_confusion},
                     {"auc", q.auc ? nlohmann::json(*q.auc) : nlohmann::json(nullptr)},
                     {"quasi_auc", q.quasi_auc ? nlohmann::json(*q.quasi_auc) : nlohmann::json(nullptr)},
                     {"reassigned", q.reassigned}};
}

void to_json(nlohmann::json& j, const HallucinationSummary& h) {
  nlohmann::json counts = nlohmann::json::object();
  for (const auto& [sev, n] : h.counts) counts[std::string(to_string(sev))] = n;
  j = nlohmann::json{{"counts", counts}, {"total", h.total}, {"responses", h.responses}, {"per_response", h.per_response}};
}

void to_json(nlohmann::json& j, const RunSummary& s) {
  j = nlohmann::json{{"run_id", s.run_id},
                     {"experiment_kind", to_string(s.kind)},
                     {"model_name", s.model_name},
                     {"perturbation", s.perturbation ? nlohmann::json(to_string(*s.perturbation)) : nlohmann::json(nullptr)},
                     {"records", s.records}};
}

ReviewState::ReviewState(RunManifest manifest, std::vector<CompletionRecord> records,
                         std::vector<CompletionRecord> baseline_records)
    : manifest_(std::move(manifest)), records_(std::move(records)) {
  base_ = compute_report(manifest_, records_, baseline_records);
  if (manifest_.kind == ExperimentKind::Accuracy) {
    decisions_ = accuracy_decisions(manifest_, records_);
    for (const auto& d : decisions_) {
      const auto it = manifest_.truth.find(d.concept_id);
      if (d.decision == Decision::Yes && it != manifest_.truth.end() && !it->second) {
        false_positive_ids_.insert(d.concept_id);
      }
    }
  }
}

bool ReviewState::reviewable() const { return manifest_.kind == ExperimentKind::Accuracy && base_.metrics.confusion; }

void ReviewState::check(const ReviewEvent& event) const {
  auto known_concept = [this](const std::string& id) {
    return std::any_of(manifest_.concepts.begin(), manifest_.concepts.end(),
                       [&](const ConstructedConcept& c) { return c.concept_id == id; });
  };
  if (const auto* a = std::get_if<Annotation>(&event)) {
    if (a->run_id != manifest_.run_id) throw ValidationError("annotation targets run '" + a->run_id + "'");
    if (a->annotation_id.empty()) throw ValidationError("annotation has no id");
    if (!known_concept(a->concept_id)) throw NotFoundError("unknown concept " + a->concept_id);
    if (!reviewable()) throw ValidationError("run '" + manifest_.run_id + "' is not an accuracy run");
    if (!false_positive_ids_.contains(a->concept_id)) {
      throw ValidationError("concept " + a->concept_id + " is not a false positive in run '" + manifest_.run_id + "'");
    }
    return;
  }
  const auto& h = std::get<HallucinationRecord>(event);
  if (h.run_id != manifest_.run_id) throw ValidationError("hallucination targets run '" + h.run_id + "'");
  if (h.record_id.empty()) throw ValidationError("hallucination record has no id");
  if (h.statement_excerpt.empty()) throw ValidationError("statement excerpt is empty");
  if (!known_concept(h.concept_id)) throw NotFoundError("unknown concept " + h.concept_id);
  const bool has_response = std::any_of(records_.begin(), records_.end(), [&](const CompletionRecord& r) {
    return r.concept_id == h.concept_id && r.prompt_id == h.prompt_id;
  });
  if (!has_response) {
    throw NotFoundError("no " + std::string(to_string(h.prompt_id)) + " response for concept " + h.concept_id);
  }
}

ReviewState ReviewState::apply(const ReviewEvent& event) const {
  check(event);
  ReviewState next = *this;
  if (const auto* a = std::get_if<Annotation>(&event)) {
    next.latest_annotation_[a->concept_id] = *a;
  } else {
    next.hallucinations_.push_back(std::get<HallucinationRecord>(event));
  }
  next.events_.push_back(event);
  return next;
}

std::vector<FalsePositiveItem> ReviewState::false_positives() const {
  std::vector<FalsePositiveItem> out;
  for (const auto& id : false_positive_ids_) {  // std::set keeps concept_id order
    FalsePositiveItem item;
    item.concept_id = id;
    for (const auto& c : manifest_.concepts) {
      if (c.concept_id == id) item.rendered = c.rendered;
    }
    for (const auto& r : records_) {
      if (r.concept_id != id || r.run_index != 0) continue;
      (r.prompt_id == PromptId::Therapy ? item.therapy_raw_text : item.medication_raw_text) = r.raw_text;
    }
    item.truth = false;
    if (const auto it = latest_annotation_.find(id); it != latest_annotation_.end()) item.annotation = it->second;
    out.push_back(std::move(item));
  }
  return out;
}

QuasiUpdate ReviewState::quasi() const {
  if (!reviewable()) throw ValidationError("run '" + manifest_.run_id + "' is not an accuracy run");
  QuasiUpdate q;
  q.confusion = *base_.metrics.confusion;
  for (const auto& [id, a] : latest_annotation_) {
    if (a.reclassify_to_tp) ++q.reassigned;
  }
  q.quasi_confusion = quasi_confusion(q.confusion, q.reassigned);
  q.auc = safe_auc(q.confusion);
  q.quasi_auc = safe_auc(q.quasi_confusion);
  return q;
}

HallucinationSummary ReviewState::hallucinations() const {
  HallucinationSummary s;
  for (const auto& h : hallucinations_) ++s.counts[h.severity];
  s.total = hallucinations_.size();
  s.responses = records_.size();
  s.per_response = s.responses == 0 ? 0.0 : static_cast<double>(s.total) / static_cast<double>(s.responses);
  return s;
}

RunReport ReviewState::report() const {
  RunReport r = base_;
  if (reviewable()) {
    const QuasiUpdate q = quasi();
    r.metrics.quasi_confusion = q.quasi_confusion;
    r.metrics.quasi_auc = q.quasi_auc;
  }
  r.metrics.hallucination_counts = hallucinations().counts;
  return r;
}

std::vector<CompletionRecord> ReviewState::responses_for(const std::string& concept_id) const {
  const bool known = std::any_of(manifest_.concepts.begin(), manifest_.concepts.end(),
                                 [&](const ConstructedConcept& c) { return c.concept_id == concept_id; });
  if (!known) throw NotFoundError("unknown concept " + concept_id);
  std::vector<CompletionRecord> out;
  std::copy_if(records_.begin(), records_.end(), std::back_inserter(out),
               [&](const CompletionRecord& r) { return r.concept_id == concept_id; });
  return out;
}

ReviewState fold_review(const RunManifest& manifest, std::vector<CompletionRecord> records,
                        std::span<const ReviewEvent> events, std::vector<CompletionRecord> baseline_records) {
  ReviewState state(manifest, std::move(records), std::move(baseline_records));
  for (const auto& e : events) state = state.apply(e);
  return state;
}

std::vector<ReviewEvent> read_review_log(const std::filesystem::path& path) {
  std::vector<ReviewEvent> events;
  std::ifstream in(path);
  if (!in) return events;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      events.push_back(event_from_json(nlohmann::json::parse(line)));
    } catch (const std::exception& e) {
      if (in.peek() == std::char_traits<char>::eof()) break;  // torn final append
      throw DataError(path.string() + " line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return events;
}

ReviewService::ReviewService(RunStore& store, Clock clock) : store_(store), clock_(std::move(clock)) {
  if (!clock_) clock_ = [] { return detail::now_utc_iso8601(); };
}

std::filesystem::path ReviewService::log_path(const std::string& run_id) const {
  return store_.run_dir(run_id) / kLogFile;
}

std::vector<RunSummary> ReviewService::list_runs() const {
  std::vector<RunSummary> out;
  for (const auto& id : store_.list_runs()) {
    const RunManifest m = store_.load_manifest(id);
    out.push_back({id, m.kind, m.model.model_name, m.perturbation, store_.load_records(id).size()});
  }
  return out;
}

std::shared_ptr<const ReviewState> ReviewService::load_state(const std::string& run_id) const {
  RunManifest manifest = store_.load_manifest(run_id);
  std::vector<CompletionRecord> baseline;
  if (manifest.kind == ExperimentKind::Stability && manifest.baseline_run_id) {
    baseline = store_.load_records(*manifest.baseline_run_id);
  }
  auto records = store_.load_records(run_id);
  const auto events = read_review_log(log_path(run_id));
  return std::make_shared<const ReviewState>(fold_review(manifest, std::move(records), events, std::move(baseline)));
}

std::shared_ptr<const ReviewState> ReviewService::state(const std::string& run_id) const {
  std::lock_guard lock(cache_mu_);
  auto& slot = cache_[run_id];
  if (!slot) {
    try {
      slot = load_state(run_id);
    } catch (...) {
      cache_.erase(run_id);
      throw;
    }
  }
  return slot;
}

void ReviewService::invalidate(const std::string& run_id) {
  std::lock_guard lock(cache_mu_);
  cache_.erase(run_id);
}

void ReviewService::publish(const std::string& run_id, std::shared_ptr<const ReviewState> next) {
  std::lock_guard lock(cache_mu_);
  cache_[run_id] = std::move(next);
}

void ReviewService::append_event(const std::string& run_id, const ReviewEvent& event) {
  const std::string line = event_to_json(event).dump() + "\n";
  detail::truncate_torn_tail(log_path(run_id));
  std::ofstream out(log_path(run_id), std::ios::app | std::ios::binary);
  if (!out) throw DataError("cannot open review log of run '" + run_id + "'");
  out.write(line.data(), static_cast<std::streamsize>(line.size()));
  out.flush();
  if (!out) throw DataError("failed to append to review log of run '" + run_id + "'");
}

RunReport ReviewService::report(const std::string& run_id) const { return state(run_id)->report(); }

std::vector<FalsePositiveItem> ReviewService::list_false_positives(const std::string& run_id) const {
  return state(run_id)->false_positives();
}

std::vector<CompletionRecord> ReviewService::responses(const std::string& run_id, const std::string& concept_id) const {
  return state(run_id)->responses_for(concept_id);
}

std::vector<ReviewEvent> ReviewService::events(const std::string& run_id) const { return state(run_id)->events(); }

QuasiUpdate ReviewService::submit_annotation(Annotation a) {
  std::lock_guard lock(write_mu_);
  const auto current = state(a.run_id);
  if (a.annotation_id.empty()) a.annotation_id = "ann-" + std::to_string(current->events().size() + 1);
  if (a.created_at.empty()) a.created_at = clock_();
  auto next = std::make_shared<const ReviewState>(current->apply(a));
  append_event(a.run_id, a);
  publish(a.run_id, next);
  return next->quasi();
}

HallucinationSummary ReviewService::submit_hallucination(HallucinationRecord h) {
  std::lock_guard lock(write_mu_);
  const auto current = state(h.run_id);
  if (h.record_id.empty()) h.record_id = "hal-" + std::to_string(current->events().size() + 1);
  if (h.created_at.empty()) h.created_at = clock_();
  auto next = std::make_shared<const ReviewState>(current->apply(h));
  append_event(h.run_id, h);
  publish(h.run_id, next);
  return next->hallucinations();
}

}  // namespace phenoeval
