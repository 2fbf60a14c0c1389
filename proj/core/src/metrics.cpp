#include "phenoeval/metrics.hpp"

#include <algorithm>
#include <cstdio>
#include <sstream>
#include <unordered_map>

#include "phenoeval/error.hpp"

namespace phenoeval {

double Fraction::value() const {
  return denominator == 0 ? 0.0 : static_cast<double>(numerator) / static_cast<double>(denominator);
}

std::string Fraction::percent_string() const {
  if (denominator == 0) return "n/a";
  if (numerator == denominator) return "100%";
  // Tenths of a percent, rounded half up, in integer arithmetic.
  const std::uint64_t tenths = (numerator * 1000 + denominator / 2) / denominator;
  return std::to_string(tenths / 10) + "." + std::to_string(tenths % 10) + "%";
}

std::string Fraction::to_string() const {
  return std::to_string(numerator) + "/" + std::to_string(denominator) + " (" + percent_string() + ")";
}

std::string_view to_string(Severity s) {
  switch (s) {
    case Severity::Minor: return "Minor";
    case Severity::Major: return "Major";
    case Severity::Critical: return "Critical";
  }
  return "?";
}

Severity severity_from_string(std::string_view s) {
  if (s == "Minor") return Severity::Minor;
  if (s == "Major") return Severity::Major;
  if (s == "Critical") return Severity::Critical;
  throw ValidationError("severity must be Minor, Major or Critical, got '" + std::string(s) + "'");
}

std::string_view severity_help(Severity s) {
  switch (s) {
    case Severity::Minor: return "Little to no impact on the model's reasoning or final decision.";
    case Severity::Major: return "Affects the reasoning but not the final decision (right answer, wrong reason).";
    case Severity::Critical: return "Affects both the reasoning and the final decision.";
  }
  return "";
}

ConfusionCounts confusion(std::span<const FinalDecision> decisions, std::span<const GroundTruthLabel> truth) {
  std::unordered_map<std::string_view, bool> labels;
  labels.reserve(truth.size());
  for (const auto& t : truth) labels.emplace(t.concept_id, t.relevant);
  ConfusionCounts c;
  for (const auto& d : decisions) {
    if (d.decision == Decision::Indeterminate) {
      ++c.indeterminate;
      continue;
    }
    const auto it = labels.find(d.concept_id);
    if (it == labels.end()) throw DataError("no ground truth label for concept " + d.concept_id);
    const bool predicted = d.decision == Decision::Yes;
    if (predicted && it->second) ++c.tp;
    if (predicted && !it->second) ++c.fp;
    if (!predicted && it->second) ++c.fn;
    if (!predicted && !it->second) ++c.tn;
  }
  return c;
}

double auc_binary(const ConfusionCounts& c) {
  const std::uint64_t positives = c.tp + c.fn;
  const std::uint64_t negatives = c.tn + c.fp;
  if (positives == 0 || negatives == 0) {
    throw MetricError("ROC is undefined without both positive and negative ground truth (positives=" +
                      std::to_string(positives) + ", negatives=" + std::to_string(negatives) + ")");
  }
  const double tpr = static_cast<double>(c.tp) / static_cast<double>(positives);
  const double tnr = static_cast<double>(c.tn) / static_cast<double>(negatives);
  return (tpr + tnr) / 2.0;
}

ConfusionCounts quasi_confusion(const ConfusionCounts& c, std::uint64_t reassigned_fp) {
  if (reassigned_fp > c.fp) {
    throw ContractError("cannot reassign " + std::to_string(reassigned_fp) + " false positives, only " +
                        std::to_string(c.fp) + " exist");
  }
  ConfusionCounts q = c;
  q.fp -= reassigned_fp;
  q.tp += reassigned_fp;
  return q;
}

Fraction consistency_rate(std::span<const std::vector<Outcome>> groups) {
  Fraction f;
  for (const auto& group : groups) {
    if (group.empty()) throw ContractError("consistency group has no outcomes");
    std::uint64_t best = 0;
    // Iterating in first-seen order keeps the first value on ties.
    for (std::size_t i = 0; i < group.size(); ++i) {
      if (std::find(group.begin(), group.begin() + static_cast<std::ptrdiff_t>(i), group[i]) !=
          group.begin() + static_cast<std::ptrdiff_t>(i)) {
        continue;
      }
      const auto n = static_cast<std::uint64_t>(std::count(group.begin(), group.end(), group[i]));
      if (n > best) best = n;
    }
    f.numerator += best;
    f.denominator += group.size();
  }
  return f;
}

Fraction stability_rate(const Baseline& baseline, std::span<const CompletionRecord> perturbed) {
  Fraction f;
  for (const auto& r : perturbed) {
    const auto it = baseline.find({r.concept_id, r.prompt_id});
    if (it == baseline.end()) {
      throw DataError("no baseline outcome for concept " + r.concept_id + " / " + std::string(to_string(r.prompt_id)));
    }
    if (r.parsed.value != Outcome::Unparseable && r.parsed.value == it->second) ++f.numerator;
    ++f.denominator;
  }
  return f;
}

double mean_latency(std::span<const Duration> per_concept_sums) {
  if (per_concept_sums.empty()) throw MetricError("mean latency of an empty list");
  long double total_ns = 0;
  for (const auto& d : per_concept_sums) total_ns += static_cast<long double>(d.count());
  return static_cast<double>(total_ns / static_cast<long double>(per_concept_sums.size()) / 1e9L);
}

Fraction format_rate(std::span<const CompletionRecord> records) {
  Fraction f;
  for (const auto& r : records) {
    if (r.parsed.strict_format) ++f.numerator;
  }
  f.denominator = records.size();
  return f;
}

void MetricReport::merge(const MetricReport& o) {
  if (model_name.empty()) model_name = o.model_name;
  if (o.mean_latency_seconds) mean_latency_seconds = o.mean_latency_seconds;
  if (o.format_rate) format_rate = o.format_rate;
  if (o.consistency_rate) consistency_rate = o.consistency_rate;
  for (const auto& [p, f] : o.stability_rates) stability_rates[p] = f;
  if (o.confusion) confusion = o.confusion;
  if (o.auc) auc = o.auc;
  if (o.quasi_confusion) quasi_confusion = o.quasi_confusion;
  if (o.quasi_auc) quasi_auc = o.quasi_auc;
  for (const auto& [s, n] : o.hallucination_counts) hallucination_counts[s] += n;
  responses += o.responses;
}

void to_json(nlohmann::json& j, const Fraction& f) {
  j = nlohmann::json{{"numerator", f.numerator},
                     {"denominator", f.denominator},
                     {"value", f.value()},
                     {"display", f.to_string()}};
}

void from_json(const nlohmann::json& j, Fraction& f) {
  j.at("numerator").get_to(f.numerator);
  j.at("denominator").get_to(f.denominator);
}

void to_json(nlohmann::json& j, const ConfusionCounts& c) {
  j = nlohmann::json{{"tp", c.tp}, {"fp", c.fp}, {"tn", c.tn}, {"fn", c.fn}, {"indeterminate", c.indeterminate}};
}

void from_json(const nlohmann::json& j, ConfusionCounts& c) {
  j.at("tp").get_to(c.tp);
  j.at("fp").get_to(c.fp);
  j.at("tn").get_to(c.tn);
  j.at("fn").get_to(c.fn);
  j.at("indeterminate").get_to(c.indeterminate);
}

namespace {

template <typename T>
nlohmann::json opt(const std::optional<T>& v) {
  return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
}

template <typename T>
std::optional<T> opt_get(const nlohmann::json& j, const char* key) {
  if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
  return j.at(key).get<T>();
}

}  // namespace

void to_json(nlohmann::json& j, const MetricReport& r) {
  nlohmann::json stability = nlohmann::json::object();
  for (const auto& [p, f] : r.stability_rates) stability[std::string(to_string(p))] = f;
  nlohmann::json halluc = nlohmann::json::object();
  for (const auto& [s, n] : r.hallucination_counts) halluc[std::string(to_string(s))] = n;
  j = nlohmann::json{{"model_name", r.model_name},
                     {"mean_latency_seconds", opt(r.mean_latency_seconds)},
                     {"format_rate", opt(r.format_rate)},
                     {"consistency_rate", opt(r.consistency_rate)},
                     {"stability_rates", stability},
                     {"confusion", opt(r.confusion)},
                     {"auc", opt(r.auc)},
                     {"quasi_confusion", opt(r.quasi_confusion)},
                     {"quasi_auc", opt(r.quasi_auc)},
                     {"hallucination_counts", halluc},
                     {"responses", r.responses}};
}

void from_json(const nlohmann::json& j, MetricReport& r) {
  r = MetricReport{};
  j.at("model_name").get_to(r.model_name);
  r.mean_latency_seconds = opt_get<double>(j, "mean_latency_seconds");
  r.format_rate = opt_get<Fraction>(j, "format_rate");
  r.consistency_rate = opt_get<Fraction>(j, "consistency_rate");
  if (j.contains("stability_rates")) {
    for (const auto& [k, v] : j.at("stability_rates").items()) r.stability_rates[perturbation_from_string(k)] = v.get<Fraction>();
  }
  r.confusion = opt_get<ConfusionCounts>(j, "confusion");
  r.auc = opt_get<double>(j, "auc");
  r.quasi_confusion = opt_get<ConfusionCounts>(j, "quasi_confusion");
  r.quasi_auc = opt_get<double>(j, "quasi_auc");
  if (j.contains("hallucination_counts")) {
    for (const auto& [k, v] : j.at("hallucination_counts").items()) r.hallucination_counts[severity_from_string(k)] = v.get<std::uint64_t>();
  }
  r.responses = j.value("responses", std::uint64_t{0});
}

namespace {

std::string fixed(double v, int decimals) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", decimals, v);
  return buf;
}

}  // namespace

std::string render_markdown(std::span<const MetricReport> reports) {
  std::ostringstream out;
  auto row = [&](std::string_view label, auto&& cell) {
    out << "| " << label;
    for (const auto& r : reports) out << " | " << cell(r);
    out << " |\n";
  };
  auto dash = [](const auto& o, auto&& f) -> std::string { return o ? f(*o) : std::string("-"); };

  out << "| Criterion";
  for (const auto& r : reports) out << " | " << r.model_name;
  out << " |\n|---";
  for (std::size_t i = 0; i < reports.size(); ++i) out << "|---";
  out << "|\n";

  row("**Prompt Factors**", [](const MetricReport&) { return std::string(); });
  row("Model Response Latency", [&](const MetricReport& r) {
    return dash(r.mean_latency_seconds, [](double s) { return fixed(s, 1) + " seconds"; });
  });
  row("**Model Consistency**", [](const MetricReport&) { return std::string(); });
  row("Response Format Accuracy",
      [&](const MetricReport& r) { return dash(r.format_rate, [](const Fraction& f) { return f.to_string(); }); });
  row("Response Consistency",
      [&](const MetricReport& r) { return dash(r.consistency_rate, [](const Fraction& f) { return f.to_string(); }); });
  row("Prompt Stability", [](const MetricReport&) { return std::string(); });
  const std::pair<Perturbation, std::string_view> stability_rows[] = {
      {Perturbation::InstructionsAfterCriteria, "&nbsp;&nbsp;Instructions moved"},
      {Perturbation::QuestionsReversed, "&nbsp;&nbsp;Questions reversed"},
      {Perturbation::ConceptsReversed, "&nbsp;&nbsp;Concept order reversed"},
  };
  for (const auto& [p, label] : stability_rows) {
    row(label, [p = p](const MetricReport& r) {
      const auto it = r.stability_rates.find(p);
      return it == r.stability_rates.end() ? std::string("-") : it->second.to_string();
    });
  }
  row("**Response Correctness**", [](const MetricReport&) { return std::string(); });
  row("Accuracy (ROC)", [&](const MetricReport& r) { return dash(r.auc, [](double v) { return fixed(v, 3); }); });
  row("Quasi-Accuracy (ROC)",
      [&](const MetricReport& r) { return dash(r.quasi_auc, [](double v) { return fixed(v, 3); }); });
  row("Hallucinations (Minor / Major / Critical)", [](const MetricReport& r) {
    return std::to_string(r.hallucination_counts.at(Severity::Minor)) + " / " +
           std::to_string(r.hallucination_counts.at(Severity::Major)) + " / " +
           std::to_string(r.hallucination_counts.at(Severity::Critical));
  });
  out << "\nROC for hard YES/NO decisions is the area under the single-threshold ROC curve, (TPR + TNR) / 2.\n";
  return out.str();
}

}  // namespace phenoeval
