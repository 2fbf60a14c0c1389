#include "phenoeval/experiment_runner.hpp"

#include <algorithm>
#include <cctype>
#include <exception>
#include <mutex>
#include <set>
#include <thread>

#include "phenoeval/error.hpp"
#include "phenoeval/response_parser.hpp"
#include "time_util.hpp"

namespace phenoeval {

namespace {

std::string slug(std::string_view s) {
  std::string out;
  for (char c : s) {
    if (std::isalnum(static_cast<unsigned char>(c))) {
      out.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    } else if (!out.empty() && out.back() != '-') {
      out.push_back('-');
    }
  }
  while (!out.empty() && out.back() == '-') out.pop_back();
  return out.empty() ? "model" : out;
}

const CompletionRecord* find_record(std::span<const CompletionRecord> records, const std::string& concept_id,
                                    PromptId prompt, int run_index) {
  for (const auto& r : records) {
    if (r.concept_id == concept_id && r.prompt_id == prompt && r.run_index == run_index) return &r;
  }
  return nullptr;
}

}  // namespace

std::vector<PlannedRequest> plan_requests(const RunManifest& manifest) {
  std::vector<PlannedRequest> plan;
  const int k = manifest.kind == ExperimentKind::Accuracy ? 1 : manifest.k_runs;
  const bool medication = manifest.kind != ExperimentKind::Stability || manifest.include_unperturbed_prompt;
  std::uint64_t ordinal = 0;
  for (const auto& c : manifest.concepts) {
    for (int run = 0; run < k; ++run) {
      plan.push_back({c.concept_id, PromptId::Therapy, manifest.perturbation, run, ++ordinal});
      if (medication) plan.push_back({c.concept_id, PromptId::Medication, std::nullopt, run, ++ordinal});
    }
  }
  return plan;
}

Baseline baseline_from_records(std::span<const CompletionRecord> records) {
  Baseline baseline;
  for (const auto& r : records) {
    if (r.run_index == 0 && !r.perturbation) baseline[{r.concept_id, r.prompt_id}] = r.parsed.value;
  }
  return baseline;
}

std::vector<FinalDecision> accuracy_decisions(const RunManifest& manifest, std::span<const CompletionRecord> records) {
  std::vector<FinalDecision> decisions;
  for (const auto& c : manifest.concepts) {
    const auto* therapy = find_record(records, c.concept_id, PromptId::Therapy, 0);
    const auto* medication = find_record(records, c.concept_id, PromptId::Medication, 0);
    if (therapy != nullptr && medication != nullptr) {
      decisions.push_back(combine(therapy->parsed, medication->parsed, c.concept_id));
    }
  }
  return decisions;
}

RunReport compute_report(const RunManifest& manifest, std::span<const CompletionRecord> records,
                         std::span<const CompletionRecord> baseline_records) {
  RunReport report;
  report.run_id = manifest.run_id;
  report.kind = manifest.kind;
  report.perturbation = manifest.perturbation;
  report.expected_records = plan_requests(manifest).size();
  report.recorded = records.size();
  report.partial = report.recorded < report.expected_records;

  MetricReport& m = report.metrics;
  m.model_name = manifest.model.model_name;
  m.responses = records.size();
  if (!records.empty()) m.format_rate = format_rate(records);

  switch (manifest.kind) {
    case ExperimentKind::Accuracy: {
      const auto decisions = accuracy_decisions(manifest, records);
      std::vector<Duration> latency_sums;
      for (const auto& c : manifest.concepts) {
        const auto* therapy = find_record(records, c.concept_id, PromptId::Therapy, 0);
        const auto* medication = find_record(records, c.concept_id, PromptId::Medication, 0);
        if (therapy != nullptr && medication != nullptr) latency_sums.push_back(therapy->latency + medication->latency);
      }
      std::vector<GroundTruthLabel> truth;
      for (const auto& [id, relevant] : manifest.truth) truth.push_back({id, relevant});
      const ConfusionCounts counts = confusion(decisions, truth);
      m.confusion = counts;
      report.indeterminate_decisions = counts.indeterminate;
      if (counts.tp + counts.fn > 0 && counts.tn + counts.fp > 0) m.auc = auc_binary(counts);
      if (!latency_sums.empty()) m.mean_latency_seconds = mean_latency(latency_sums);
      break;
    }
    case ExperimentKind::Consistency: {
      std::vector<std::vector<Outcome>> groups;
      for (const auto& c : manifest.concepts) {
        for (PromptId p : {PromptId::Therapy, PromptId::Medication}) {
          std::vector<Outcome> group;
          for (int run = 0; run < manifest.k_runs; ++run) {
            if (const auto* r = find_record(records, c.concept_id, p, run)) group.push_back(r->parsed.value);
          }
          if (!group.empty()) groups.push_back(std::move(group));
        }
      }
      m.consistency_rate = consistency_rate(groups);
      break;
    }
    case ExperimentKind::Stability: {
      if (!manifest.perturbation) throw DataError("stability run '" + manifest.run_id + "' has no perturbation");
      m.stability_rates[*manifest.perturbation] = stability_rate(baseline_from_records(baseline_records), records);
      break;
    }
  }
  return report;
}

RunReport compute_report(const RunStore& store, const std::string& run_id) {
  const RunManifest manifest = store.load_manifest(run_id);
  const auto records = store.load_records(run_id);
  std::vector<CompletionRecord> baseline;
  if (manifest.kind == ExperimentKind::Stability) {
    if (!manifest.baseline_run_id) throw DataError("stability run '" + run_id + "' has no baseline run");
    baseline = store.load_records(*manifest.baseline_run_id);
  }
  RunReport report = compute_report(manifest, records, baseline);
  if (auto stored = store.load_report(run_id)) report.finished_at = stored->finished_at;
  return report;
}

ExperimentRunner::ExperimentRunner(RunStore& store, CompletionBackend& backend, ModelConfig model,
                                   PromptTemplate therapy, PromptTemplate medication, std::string backend_kind)
    : store_(store),
      backend_(backend),
      model_(std::move(model)),
      therapy_(std::move(therapy)),
      medication_(std::move(medication)),
      backend_kind_(std::move(backend_kind)) {
  validate_model_config(model_);
  validate_template(therapy_);
  validate_template(medication_);
  if (therapy_.prompt_id != PromptId::Therapy || medication_.prompt_id != PromptId::Medication) {
    throw ConfigError("expected a Therapy and a Medication template");
  }
}

RunManifest ExperimentRunner::make_manifest(ExperimentKind kind, std::span<const ConstructedConcept> concepts,
                                            const RunOptions& options) const {
  if (concepts.empty()) throw ConfigError("no concepts to run");
  std::set<std::string> ids;
  for (const auto& c : concepts) {
    if (!ids.insert(c.concept_id).second) throw ConfigError("concept " + c.concept_id + " appears twice in the sample");
  }
  RunManifest m;
  m.kind = kind;
  m.model = model_;
  m.backend = backend_kind_;
  m.therapy_template_hash = template_hash(therapy_);
  m.medication_template_hash = template_hash(medication_);
  m.concepts.assign(concepts.begin(), concepts.end());
  m.sample_id = sample_id_of(m.concepts);
  m.seed = options.seed;
  m.k_runs = kind == ExperimentKind::Accuracy ? 1 : options.k_runs;
  m.include_unperturbed_prompt = options.include_unperturbed_prompt;
  m.input_hashes = options.input_hashes;
  m.time_to_minimum_viable_prompt = options.time_to_minimum_viable_prompt;
  m.tag = options.tag;
  m.started_at = detail::now_utc_iso8601();
  if (!options.run_id.empty()) {
    m.run_id = options.run_id;
  } else {
    const std::string base = slug(to_string(kind)) + "-" + slug(model_.model_name) + "-" + detail::compact_timestamp();
    m.run_id = base;
    for (int n = 2; store_.exists(m.run_id) || std::filesystem::exists(store_.root() / m.run_id); ++n) {
      m.run_id = base + "-" + std::to_string(n);
    }
  }
  return m;
}

RunReport ExperimentRunner::run_accuracy(std::span<const ConstructedConcept> concepts,
                                         std::span<const GroundTruthLabel> truth, RunOptions options) {
  for (const auto& c : concepts) {
    if (options.exclude.contains(c.concept_id)) {
      throw ConfigError("accuracy sample overlaps the excluded (prompt-engineering) sample at concept " + c.concept_id);
    }
  }
  RunManifest m = make_manifest(ExperimentKind::Accuracy, concepts, options);
  std::map<std::string, bool> labels;
  for (const auto& t : truth) labels[t.concept_id] = t.relevant;
  for (const auto& c : m.concepts) {
    const auto it = labels.find(c.concept_id);
    if (it == labels.end()) throw DataError("no ground truth label for concept " + c.concept_id + " (" + c.rendered + ")");
    m.truth[c.concept_id] = it->second;
  }
  store_.create(m);
  return execute(m);
}

RunReport ExperimentRunner::run_consistency(std::span<const ConstructedConcept> concepts, RunOptions options) {
  if (options.k_runs < 2) throw ConfigError("consistency runs need k >= 2");
  RunManifest m = make_manifest(ExperimentKind::Consistency, concepts, options);
  store_.create(m);
  return execute(m);
}

RunReport ExperimentRunner::run_stability(std::span<const ConstructedConcept> concepts, Perturbation perturbation,
                                          const std::string& baseline_run_id, RunOptions options) {
  if (options.k_runs < 1) throw ConfigError("stability runs need k >= 1");
  if (!store_.exists(baseline_run_id)) throw ConfigError("baseline run '" + baseline_run_id + "' does not exist");
  const RunManifest baseline_manifest = store_.load_manifest(baseline_run_id);
  if (baseline_manifest.kind != ExperimentKind::Accuracy) {
    throw ConfigError("baseline run '" + baseline_run_id + "' is not an accuracy run");
  }
  const Baseline baseline = baseline_from_records(store_.load_records(baseline_run_id));
  for (const auto& c : concepts) {
    for (PromptId p : {PromptId::Therapy, PromptId::Medication}) {
      if (!baseline.contains({c.concept_id, p})) {
        throw ConfigError("baseline run '" + baseline_run_id + "' has no " + std::string(to_string(p)) +
                          " response for concept " + c.concept_id);
      }
    }
  }
  perturb(therapy_, perturbation);  // rejects non-Therapy templates before anything is written
  RunManifest m = make_manifest(ExperimentKind::Stability, concepts, options);
  m.perturbation = perturbation;
  m.baseline_run_id = baseline_run_id;
  store_.create(m);
  return execute(m);
}

RunReport ExperimentRunner::resume(const std::string& run_id) {
  const RunManifest m = store_.load_manifest(run_id);
  if (m.model.model_name != model_.model_name) {
    throw ConfigError("run '" + run_id + "' was recorded with model '" + m.model.model_name + "', not '" +
                      model_.model_name + "'");
  }
  return execute(m);
}

RunReport ExperimentRunner::execute(const RunManifest& manifest) {
  if (manifest.therapy_template_hash != template_hash(therapy_) ||
      manifest.medication_template_hash != template_hash(medication_)) {
    throw ConfigError("templates differ from those recorded in run '" + manifest.run_id + "'");
  }
  const PromptTemplate therapy = manifest.perturbation ? perturb(therapy_, *manifest.perturbation) : therapy_;

  std::map<std::string, const ConstructedConcept*> by_id;
  for (const auto& c : manifest.concepts) by_id[c.concept_id] = &c;

  std::set<RecordKey> done;
  for (const auto& r : store_.load_records(manifest.run_id)) done.insert(key_of(r));
  std::vector<PlannedRequest> pending;
  for (auto& req : plan_requests(manifest)) {
    if (!done.contains({manifest.run_id, req.concept_id, req.prompt_id, req.perturbation, req.run_index})) {
      pending.push_back(std::move(req));
    }
  }

  auto writer = store_.open_writer(manifest.run_id);
  std::atomic<std::size_t> next{0};
  std::atomic<bool> abort{false};
  std::mutex error_mu;
  std::exception_ptr fatal;

  auto worker = [&] {
    while (!abort.load()) {
      const std::size_t i = next.fetch_add(1);
      if (i >= pending.size()) return;
      const PlannedRequest& req = pending[i];
      const PromptTemplate& tmpl = req.prompt_id == PromptId::Therapy ? therapy : medication_;
      try {
        const PromptText prompt = render(tmpl, *by_id.at(req.concept_id));
        ++issued_;
        const Completion completion = backend_.complete(prompt, req.ordinal);
        CompletionRecord rec;
        rec.run_id = manifest.run_id;
        rec.concept_id = req.concept_id;
        rec.prompt_id = req.prompt_id;
        rec.perturbation = req.perturbation;
        rec.run_index = req.run_index;
        rec.ordinal = req.ordinal;
        rec.latency = completion.latency;
        rec.attempt_count = completion.attempt_count;
        rec.raw_text = completion.raw_text;
        rec.parsed = extract_final_answer(completion.raw_text, tmpl);
        writer->append(rec);
      } catch (const TransportError&) {
        ++failures_;
      } catch (const ServerError&) {
        ++failures_;
      } catch (...) {
        std::lock_guard lock(error_mu);
        if (!fatal) fatal = std::current_exception();
        abort.store(true);
      }
    }
  };

  const std::size_t n_workers =
      std::min<std::size_t>(static_cast<std::size_t>(std::max(1, model_.max_inflight)), std::max<std::size_t>(1, pending.size()));
  if (n_workers == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < n_workers; ++w) pool.emplace_back(worker);
  }
  writer.reset();
  if (fatal) std::rethrow_exception(fatal);

  RunReport report = compute_report(store_, manifest.run_id);
  report.finished_at = detail::now_utc_iso8601();
  store_.write_report(report);
  return report;
}

}  // namespace phenoeval
