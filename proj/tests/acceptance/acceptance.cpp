// Acceptance gate: one PASS/FAIL line per criterion, nonzero exit on any
// failure. Tolerances and time budgets are pinned below.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "phenoeval/concepts.hpp"
#include "phenoeval/error.hpp"
#include "phenoeval/experiment_runner.hpp"
#include "phenoeval/ledger.hpp"
#include "phenoeval/metrics.hpp"
#include "phenoeval/mock_model.hpp"
#include "phenoeval/response_parser.hpp"
#include "phenoeval/review_service.hpp"
#include "test_support.hpp"

namespace pe = phenoeval;
namespace pt = phenoeval::testing;
using namespace std::chrono_literals;

namespace {

constexpr double kAucTolerance = 1e-12;
constexpr double kLatencyTolerance = 1e-9;

// Published model-ability values reproduced by the scripted fixtures.
constexpr const char* kFormatLow = "149/200 (74.5%)";
constexpr const char* kFormatHigh = "197/200 (98.5%)";
constexpr const char* kConsistencyLow = "197/200 (98.5%)";
constexpr const char* kFull = "200/200 (100%)";
constexpr const char* kStabilityInstructions = "190/200 (95.0%)";
constexpr const char* kStabilityQuestions = "191/200 (95.5%)";
constexpr const char* kStabilityNearFull = "199/200 (99.5%)";
constexpr double kReportedLatency = 11.3;

// Thrown by check() to fail the current criterion with a message.
struct CheckFailed {
  std::string what;
};

void check(bool ok, const std::string& what) {
  if (!ok) throw CheckFailed{what};
}

template <typename A, typename B>
void check_eq(const A& got, const B& want, const std::string& what) {
  if (!(got == want)) {
    std::ostringstream msg;
    msg << what << ": got " << got << ", want " << want;
    throw CheckFailed{msg.str()};
  }
}

struct Criterion {
  std::string name;
  std::chrono::milliseconds budget;
  std::function<std::string()> body;  // returns a short detail on success
};

pe::RunOptions named(const std::string& id, int k = pe::kDefaultRepeats) {
  pe::RunOptions o;
  o.run_id = id;
  o.k_runs = k;
  return o;
}

std::vector<pe::GroundTruthLabel> all_negative(const std::vector<pe::ConstructedConcept>& cs) {
  return pt::labels_for(cs, [](const auto&) { return false; });
}

std::string concept_templates() {
  struct Golden {
    std::string table;
    std::map<std::string, std::optional<std::string>> values;
    std::string rendered;
  };
  const std::vector<Golden> goldens = {
      {"Care Plan General", {{"cplgroup", "Airway"}, {"cplitemvalue", "Intubated"}},
       "Source = Care Plan General; Concept = Airway: Intubated"},
      {"Infusion Drug", {{"drugname", "Propofol (mcg/kg/min)"}}, "Source = Infusion Drug; Concept = Propofol (mcg/kg/min)"},
      {"Medication", {{"drugname", "ROCURONIUM 10 MG/ML IV SOLN"}},
       "Source = Medication; Concept = ROCURONIUM 10 MG/ML IV SOLN"},
      {"Note", {{"notevalue", "Ventilation"}, {"notetext", "on BiPAP overnight"}},
       "Source = Note; Concept = Ventilation: on BiPAP overnight"},
      {"Nurse Care", {{"cellattributevalue", "Oral care provided"}}, "Source = Nurse Care; Concept = Oral care provided"},
      {"Nurse Charting", {{"nursingchartcelltypevalname", "O2 Admin Device"}, {"nursingchartvalue", "BiPAP/CPAP"}},
       "Source = Nurse Charting; Concept = O2 Admin Device: BiPAP/CPAP"},
      {"Nurse Charting", {{"nursingchartcelltypevalname", "O2 Admin Device"}, {"nursingchartvalue", "nasal cannula"}},
       "Source = Nurse Charting; Concept = O2 Admin Device: nasal cannula"},
      {"Respiratory Care", {{"airwaytype", "Oral ETT"}}, "Source = Respiratory Care; Concept = Oral ETT"},
      {"Respiratory Charting",
       {{"respcharttypecat", "respFlowSettings"}, {"respchartvaluelabel", "FiO2"}, {"respchartvalue", "40"}},
       "Source = Respiratory Charting; Concept = respFlowSettings: FiO2: 40"},
      {"Treatment", {{"treatmentstring", "pulmonary|ventilation and oxygenation|non-invasive ventilation"}},
       "Source = Treatment; Concept = pulmonary|ventilation and oxygenation|non-invasive ventilation"},
  };
  std::set<std::string> tables;
  for (const auto& g : goldens) {
    const pe::TableSpec* spec = pe::find_spec_for_stem(pe::default_table_specs(), g.table);
    check(spec != nullptr, "no spec for " + g.table);
    const auto built = pe::build_concept(*spec, pe::RawRow{g.table, g.values});
    check(built.has_value(), "no concept for " + g.table);
    check_eq(built->rendered, g.rendered, g.table);
    tables.insert(g.table);
  }
  check_eq(tables.size(), std::size_t{9}, "tables covered");
  return "9 tables, " + std::to_string(goldens.size()) + " goldens";
}

std::string or_rule() {
  using O = pe::Outcome;
  using D = pe::Decision;
  const O values[] = {O::Yes, O::No, O::Unparseable};
  int cases = 0;
  for (O t : values) {
    for (O m : values) {
      pe::ParsedOutcome pt_, pm;
      pt_.value = t;
      pm.value = m;
      const D got = pe::combine(pt_, pm, "c").decision;
      const D want = (t == O::Yes || m == O::Yes) ? D::Yes : (t == O::No && m == O::No) ? D::No : D::Indeterminate;
      check(got == want, std::string(pe::to_string(t)) + "/" + std::string(pe::to_string(m)));
      ++cases;
    }
  }
  return std::to_string(cases) + " cases";
}

std::string auc_oracle() {
  std::mt19937_64 rng(20250101);
  std::uniform_int_distribution<int> n(0, 60);
  double worst = 0;
  for (int i = 0; i < 200; ++i) {
    pe::ConfusionCounts c;
    c.tp = n(rng);
    c.fp = n(rng);
    c.tn = n(rng);
    c.fn = n(rng);
    if (c.tp + c.fn == 0) c.fn = 1;
    if (c.tn + c.fp == 0) c.fp = 1;
    // Every (positive, negative) pair, hard scores 1/0, ties count half.
    double wins = 0;
    const std::uint64_t pos = c.tp + c.fn, neg = c.tn + c.fp;
    for (std::uint64_t p = 0; p < pos; ++p) {
      const int sp = p < c.tp ? 1 : 0;
      for (std::uint64_t q = 0; q < neg; ++q) {
        const int sn = q < c.fp ? 1 : 0;
        wins += sp > sn ? 1.0 : sp == sn ? 0.5 : 0.0;
      }
    }
    const double brute = wins / static_cast<double>(pos * neg);
    worst = std::max(worst, std::fabs(pe::auc_binary(c) - brute));
  }
  check(worst <= kAucTolerance, "max |delta| " + std::to_string(worst));
  char buf[64];
  std::snprintf(buf, sizeof buf, "200 fixtures, max |delta| %.1e", worst);
  return buf;
}

std::string table_fixtures() {
  pt::TempDir dir;
  const auto sample100 = pt::synthetic_concepts(100);
  const auto sample10 = pt::synthetic_concepts(10, "Repeat");
  std::vector<std::string> seen;

  auto accuracy_format = [&](pe::MockScript script, const std::string& id) {
    pt::MockHarness h(std::move(script), dir / id);
    return h.runner.run_accuracy(sample100, all_negative(sample100), named(id)).metrics.format_rate->to_string();
  };
  auto low = pt::uniform_script();
  low.format_error_every = 4;
  low.format_error_at = {1};
  check_eq(accuracy_format(low, "fmt-low"), std::string(kFormatLow), "format accuracy (low)");
  auto high = pt::uniform_script();
  high.format_error_every = 60;
  check_eq(accuracy_format(high, "fmt-high"), std::string(kFormatHigh), "format accuracy (high)");

  auto consistency = [&](pe::MockScript script, const std::string& id) {
    pt::MockHarness h(std::move(script), dir / id);
    return h.runner.run_consistency(sample10, named(id)).metrics.consistency_rate->to_string();
  };
  auto flips = pt::uniform_script("YES", "NO");
  flips.flip_every = 60;
  check_eq(consistency(flips, "cons-low"), std::string(kConsistencyLow), "consistency (low)");
  check_eq(consistency(pt::uniform_script("YES", "NO"), "cons-full"), std::string(kFull), "consistency (full)");

  // Stability runs share one clean accuracy baseline in one store.
  const auto store_dir = dir / "stability";
  {
    pt::MockHarness base(pt::uniform_script(), store_dir);
    base.runner.run_accuracy(sample10, all_negative(sample10), named("base", 1));
  }
  auto stability = [&](pe::MockScript script, pe::Perturbation p, const std::string& id) {
    pt::MockHarness h(std::move(script), store_dir);
    return h.runner.run_stability(sample10, p, "base", named(id)).metrics.stability_rates.at(p).to_string();
  };
  // One concept answers differently whenever the instructions follow the
  // definitions: 10 of 200 responses disagree.
  auto moved = pt::uniform_script();
  const std::string after_input = pt::regex_escape(sample10[3].rendered) + "\\n\\n### Concept Definitions";
  moved.rules.insert(moved.rules.begin(), pt::therapy_rule(after_input, "YES"));
  check_eq(stability(moved, pe::Perturbation::InstructionsAfterCriteria, "stab-moved"),
           std::string(kStabilityInstructions), "stability (instructions moved)");
  auto reversed = pt::uniform_script();
  reversed.flip_every = 22;
  check_eq(stability(reversed, pe::Perturbation::QuestionsReversed, "stab-questions"), std::string(kStabilityQuestions),
           "stability (questions reversed)");
  auto near = pt::uniform_script();
  near.flip_every = 200;
  check_eq(stability(near, pe::Perturbation::ConceptsReversed, "stab-concepts"), std::string(kStabilityNearFull),
           "stability (concepts reversed)");
  check_eq(stability(pt::uniform_script(), pe::Perturbation::ConceptsReversed, "stab-clean"), std::string(kFull),
           "stability (clean)");
  return "8 fractions reproduced";
}

std::string quasi_accuracy() {
  pt::TempDir dir;
  const auto concepts = pt::synthetic_concepts(30);
  // Concepts 0..9 are relevant and answered YES; concept 10 is a false positive.
  std::vector<pe::ConstructedConcept> yes(concepts.begin(), concepts.begin() + 11);
  pt::MockHarness h(pt::therapy_yes_for(yes), dir.path());
  const auto truth = pt::labels_for(concepts, [&](const pe::ConstructedConcept& c) {
    return std::find(concepts.begin(), concepts.begin() + 10, c) != concepts.begin() + 10;
  });
  h.runner.run_accuracy(concepts, truth, named("acc", 1));
  pe::ReviewService review(h.store);
  const auto fps = review.list_false_positives("acc");
  check_eq(fps.size(), std::size_t{1}, "false positives");
  const double before = *review.report("acc").metrics.auc;
  check(before < 1.0, "auc before review should be below 1");
  pe::Annotation a;
  a.run_id = "acc";
  a.concept_id = fps[0].concept_id;
  a.reviewer = "reviewer";
  a.reclassify_to_tp = true;
  a.rationale = "matches a therapy definition";
  const auto q = review.submit_annotation(a);
  check(q.quasi_auc && *q.quasi_auc == 1.0, "quasi auc is not exactly 1");
  check_eq(review.report("acc").metrics.quasi_auc.value_or(0.0), 1.0, "report quasi auc");
  char buf[80];
  std::snprintf(buf, sizeof buf, "auc %.3f -> quasi %.3f", before, *q.quasi_auc);
  return buf;
}

std::string latency() {
  pt::TempDir dir;
  const auto concepts = pt::synthetic_concepts(100);
  auto script = pt::uniform_script();
  script.latency_ms = 5650;  // two prompts per concept
  pt::MockHarness h(script, dir.path());
  const auto rep = h.runner.run_accuracy(concepts, all_negative(concepts), named("lat", 1));
  const double mean = *rep.metrics.mean_latency_seconds;
  check(std::fabs(mean - kReportedLatency) <= kLatencyTolerance, "mean latency " + std::to_string(mean));
  const std::vector<pe::MetricReport> cols = {rep.metrics};
  check(pe::render_markdown(cols).find("| 11.3 seconds |") != std::string::npos, "rendered latency");
  return "mean 11.3 s";
}

class FailAfter final : public pe::CompletionBackend {
 public:
  FailAfter(pe::CompletionBackend& inner, std::uint64_t last_ok) : inner_(inner), last_ok_(last_ok) {}
  pe::Completion complete(const pe::PromptText& p, std::uint64_t ordinal) override {
    if (ordinal > last_ok_) throw pe::TransportError("interrupted", {"attempt 1: interrupted"});
    return inner_.complete(p, ordinal);
  }
  [[nodiscard]] std::string model_name() const override { return inner_.model_name(); }

 private:
  pe::CompletionBackend& inner_;
  std::uint64_t last_ok_;
};

std::string resumability() {
  pt::TempDir dir;
  const auto concepts = pt::synthetic_concepts(100);
  const auto truth = pt::labels_for(concepts, [&](const auto& c) { return c == concepts[2] || c == concepts[9]; });
  auto script = pt::therapy_yes_for(std::vector<pe::ConstructedConcept>{concepts[2], concepts[40]});
  script.format_error_every = 9;

  pt::MockHarness full(script, dir / "full");
  auto uninterrupted = full.runner.run_accuracy(concepts, truth, named("run", 1));

  pe::RunStore store(dir / "split");
  pe::MockModel model(script);
  FailAfter cut(model, 120);  // 60% of 200
  pe::ExperimentRunner first(store, cut, pt::mock_model_config(), pe::default_template(pe::PromptId::Therapy),
                             pe::default_template(pe::PromptId::Medication), "mock");
  const auto partial = first.run_accuracy(concepts, truth, named("run", 1));
  check(partial.partial && partial.recorded == 120, "interrupted run should hold 120 records");
  pe::ExperimentRunner second(store, model, pt::mock_model_config(), pe::default_template(pe::PromptId::Therapy),
                              pe::default_template(pe::PromptId::Medication), "mock");
  auto resumed = second.resume("run");
  check_eq(second.requests_issued(), std::uint64_t{80}, "requests issued on resume");
  check(store.load_records("run") == full.store.load_records("run"), "record sets differ");
  resumed.finished_at.reset();
  uninterrupted.finished_at.reset();
  check(resumed == uninterrupted, "reports differ");

  const auto all = pt::synthetic_concepts(500);
  auto sample_file = [&](const std::string& name, std::uint64_t seed) {
    const auto path = dir / name;
    std::ofstream out(path);
    pe::write_concepts_jsonl(out, pe::sample(all, 100, seed));
    out.close();
    return pt::read_file(path);
  };
  check(sample_file("a.jsonl", 42) == sample_file("b.jsonl", 42), "same seed, different sample files");
  check(sample_file("c.jsonl", 42) != sample_file("d.jsonl", 43), "different seeds, same sample file");
  return "80 requests on resume, identical records and report";
}

std::string event_sourcing() {
  pt::TempDir dir;
  const auto concepts = pt::synthetic_concepts(30);
  std::vector<pe::ConstructedConcept> yes(concepts.begin(), concepts.begin() + 12);
  const auto truth = pt::labels_for(concepts, [&](const pe::ConstructedConcept& c) {
    return std::find(concepts.begin(), concepts.begin() + 6, c) != concepts.begin() + 6;
  });
  std::mt19937 rng(7);
  for (int seq = 0; seq < 50; ++seq) {
    const std::string id = "acc-" + std::to_string(seq);
    pt::MockHarness h(pt::therapy_yes_for(yes), dir.path());
    h.runner.run_accuracy(concepts, truth, named(id, 1));
    pe::ReviewService review(h.store);
    const auto fps = review.list_false_positives(id);
    std::uniform_int_distribution<int> len(1, 30), coin(0, 2), pick_fp(0, static_cast<int>(fps.size()) - 1),
        pick_any(0, 29), sev(0, 2);
    const int n = len(rng);
    for (int i = 0; i < n; ++i) {
      if (coin(rng) < 2) {
        pe::Annotation a;
        a.run_id = id;
        a.concept_id = fps[static_cast<std::size_t>(pick_fp(rng))].concept_id;
        a.reclassify_to_tp = coin(rng) != 0;
        review.submit_annotation(a);
      } else {
        pe::HallucinationRecord r;
        r.run_id = id;
        r.concept_id = concepts[static_cast<std::size_t>(pick_any(rng))].concept_id;
        r.prompt_id = coin(rng) ? pe::PromptId::Therapy : pe::PromptId::Medication;
        r.statement_excerpt = "invented detail";
        r.severity = static_cast<pe::Severity>(sev(rng));
        review.submit_hallucination(r);
      }
    }
    const auto incremental = review.state(id);
    const auto folded = pe::fold_review(h.store.load_manifest(id), h.store.load_records(id),
                                        pe::read_review_log(review.log_path(id)));
    check(folded.report() == incremental->report(), "report differs in sequence " + std::to_string(seq));
    check(folded.quasi() == incremental->quasi(), "quasi differs in sequence " + std::to_string(seq));
    check(folded.hallucinations() == incremental->hallucinations(),
          "hallucinations differ in sequence " + std::to_string(seq));
  }
  return "50 sequences";
}

std::string ledger() {
  const auto entries = pe::load_ledger(pt::source_dir() / "data/ledgers/arf_concept_classification.ledger.json");
  check(pe::validate_ledger(entries).empty(), "ledger has violations");
  const std::map<pe::LedgerCriterion, pe::Verdict> expected = {
      {pe::LedgerCriterion::ModelHostEnvironments, pe::Verdict::TraditionalSuperior},
      {pe::LedgerCriterion::HardwareRequirements, pe::Verdict::TraditionalSuperior},
      {pe::LedgerCriterion::SoftwareAvailability, pe::Verdict::TraditionalSuperior},
      {pe::LedgerCriterion::TimeForPipelineDevelopment, pe::Verdict::LLMSuperior},
      {pe::LedgerCriterion::TimeForManualReview, pe::Verdict::LLMSuperior},
      {pe::LedgerCriterion::PhenotypeRuntime, pe::Verdict::NotApplicable},
  };
  for (const auto& e : entries) check(expected.at(e.criterion) == e.verdict, std::string(pe::to_string(e.criterion)));
  const std::string md = pe::render_comparison(entries);
  std::size_t rows = 0;
  std::istringstream lines(md);
  for (std::string line; std::getline(lines, line);) {
    if (line.rfind("| ", 0) == 0 && line.find("**") != std::string::npos) ++rows;
  }
  check_eq(rows, std::size_t{6}, "rendered rows");
  check(pe::parse_comparison(md) == entries, "parse-back differs");
  return "6 rows, round trip exact";
}

}  // namespace

int main() {
  const std::vector<Criterion> criteria = {
      {"concept-templates", 1000ms, concept_templates},
      {"or-rule", 1000ms, or_rule},
      {"auc-oracle", 5000ms, auc_oracle},
      {"model-ability-fixtures", 30000ms, table_fixtures},
      {"quasi-accuracy", 5000ms, quasi_accuracy},
      {"latency-aggregation", 5000ms, latency},
      {"determinism-resume", 30000ms, resumability},
      {"event-sourcing", 60000ms, event_sourcing},
      {"ledger", 1000ms, ledger},
  };
  int failures = 0;
  for (const auto& c : criteria) {
    const auto start = std::chrono::steady_clock::now();
    std::string detail;
    bool ok = true;
    try {
      detail = c.body();
    } catch (const CheckFailed& e) {
      ok = false;
      detail = e.what;
    } catch (const std::exception& e) {
      ok = false;
      detail = std::string("exception: ") + e.what();
    }
    const auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() - start);
    if (ok && ms > c.budget) {
      ok = false;
      detail += " (over budget " + std::to_string(c.budget.count()) + " ms)";
    }
    failures += ok ? 0 : 1;
    std::cout << (ok ? "PASS " : "FAIL ") << c.name << " [" << ms.count() << " ms] " << detail << "\n";
  }
  std::cout << (failures == 0 ? "all criteria passed" : std::to_string(failures) + " criteria failed") << "\n";
  return failures == 0 ? 0 : 1;
}
