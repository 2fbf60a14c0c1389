#include "phenoeval/run_store.hpp"

#include <algorithm>
#include <sstream>

#include "phenoeval/error.hpp"
#include "phenoeval/hashing.hpp"
#include "file_util.hpp"

namespace phenoeval {

namespace fs = std::filesystem;

namespace {

constexpr const char* kManifest = "manifest.json";
constexpr const char* kRecords = "records.jsonl";
constexpr const char* kReportJson = "report.json";
constexpr const char* kReportMd = "report.md";

template <typename T>
nlohmann::json opt(const std::optional<T>& v) {
  return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
}

template <typename T>
std::optional<T> opt_get(const nlohmann::json& j, const char* key) {
  if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
  return j.at(key).get<T>();
}

nlohmann::json read_json_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw NotFoundError("cannot open " + path.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

void write_file_atomically(const fs::path& path, const std::string& content) {
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write " + tmp.string());
    out << content;
    out.flush();
    if (!out) throw DataError("write failed: " + tmp.string());
  }
  fs::rename(tmp, path);
}

bool valid_run_id(const std::string& id) {
  if (id.empty() || id == "." || id == "..") return false;
  return std::all_of(id.begin(), id.end(), [](char c) {
    return std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_' || c == '.';
  });
}

}  // namespace

std::string_view to_string(ExperimentKind k) {
  switch (k) {
    case ExperimentKind::Accuracy: return "Accuracy";
    case ExperimentKind::Consistency: return "Consistency";
    case ExperimentKind::Stability: return "Stability";
  }
  return "?";
}

ExperimentKind experiment_kind_from_string(std::string_view s) {
  if (s == "Accuracy") return ExperimentKind::Accuracy;
  if (s == "Consistency") return ExperimentKind::Consistency;
  if (s == "Stability") return ExperimentKind::Stability;
  throw DataError("unknown experiment kind '" + std::string(s) + "'");
}

std::string sample_id_of(const std::vector<ConstructedConcept>& concepts) {
  std::string joined;
  for (const auto& c : concepts) {
    joined += c.concept_id;
    joined += '\n';
  }
  return sha256_hex(joined);
}

void to_json(nlohmann::json& j, const RunManifest& m) {
  nlohmann::json truth = nlohmann::json::object();
  for (const auto& [id, relevant] : m.truth) truth[id] = relevant;
  j = nlohmann::json{
      {"run_id", m.run_id},
      {"experiment_kind", to_string(m.kind)},
      {"model", m.model},
      {"backend", m.backend},
      {"request_parameters",
       {{"temperature", m.model.temperature},
        {"top_p", m.model.top_p},
        {"other", "server defaults (max tokens, seed and all other options are not sent)"}}},
      {"templates", {{"therapy_sha256", m.therapy_template_hash}, {"medication_sha256", m.medication_template_hash}}},
      {"sample_id", m.sample_id},
      {"seed", opt(m.seed)},
      {"perturbation", m.perturbation ? nlohmann::json(to_string(*m.perturbation)) : nlohmann::json(nullptr)},
      {"k_runs", m.k_runs},
      {"include_unperturbed_prompt", m.include_unperturbed_prompt},
      {"baseline_run_id", opt(m.baseline_run_id)},
      {"concepts", m.concepts},
      {"truth", truth},
      {"input_hashes", m.input_hashes},
      {"time_to_minimum_viable_prompt", opt(m.time_to_minimum_viable_prompt)},
      {"tag", opt(m.tag)},
      {"started_at", m.started_at},
  };
}

void from_json(const nlohmann::json& j, RunManifest& m) {
  m = RunManifest{};
  j.at("run_id").get_to(m.run_id);
  m.kind = experiment_kind_from_string(j.at("experiment_kind").get<std::string>());
  j.at("model").get_to(m.model);
  m.backend = j.value("backend", std::string("http"));
  m.therapy_template_hash = j.at("templates").at("therapy_sha256").get<std::string>();
  m.medication_template_hash = j.at("templates").at("medication_sha256").get<std::string>();
  j.at("sample_id").get_to(m.sample_id);
  m.seed = opt_get<std::uint64_t>(j, "seed");
  if (auto p = opt_get<std::string>(j, "perturbation")) m.perturbation = perturbation_from_string(*p);
  j.at("k_runs").get_to(m.k_runs);
  m.include_unperturbed_prompt = j.value("include_unperturbed_prompt", true);
  m.baseline_run_id = opt_get<std::string>(j, "baseline_run_id");
  j.at("concepts").get_to(m.concepts);
  for (const auto& [id, v] : j.at("truth").items()) m.truth[id] = v.get<bool>();
  m.input_hashes = j.value("input_hashes", std::map<std::string, std::string>{});
  m.time_to_minimum_viable_prompt = opt_get<std::string>(j, "time_to_minimum_viable_prompt");
  m.tag = opt_get<std::string>(j, "tag");
  j.at("started_at").get_to(m.started_at);
}

void to_json(nlohmann::json& j, const RunReport& r) {
  j = nlohmann::json{{"run_id", r.run_id},
                     {"experiment_kind", to_string(r.kind)},
                     {"perturbation", r.perturbation ? nlohmann::json(to_string(*r.perturbation)) : nlohmann::json(nullptr)},
                     {"metrics", r.metrics},
                     {"expected_records", r.expected_records},
                     {"recorded", r.recorded},
                     {"partial", r.partial},
                     {"indeterminate_decisions", r.indeterminate_decisions},
                     {"finished_at", opt(r.finished_at)}};
}

void from_json(const nlohmann::json& j, RunReport& r) {
  r = RunReport{};
  j.at("run_id").get_to(r.run_id);
  r.kind = experiment_kind_from_string(j.at("experiment_kind").get<std::string>());
  if (auto p = opt_get<std::string>(j, "perturbation")) r.perturbation = perturbation_from_string(*p);
  j.at("metrics").get_to(r.metrics);
  j.at("expected_records").get_to(r.expected_records);
  j.at("recorded").get_to(r.recorded);
  j.at("partial").get_to(r.partial);
  r.indeterminate_decisions = j.value("indeterminate_decisions", std::uint64_t{0});
  r.finished_at = opt_get<std::string>(j, "finished_at");
}

std::string render_run_markdown(const RunReport& r) {
  std::ostringstream out;
  out << "# Run " << r.run_id << "\n\n";
  out << "- Experiment: " << to_string(r.kind);
  if (r.perturbation) out << " (" << to_string(*r.perturbation) << ")";
  out << "\n- Model: " << r.metrics.model_name << "\n";
  out << "- Records: " << r.recorded << " of " << r.expected_records << (r.partial ? " (partial run)" : "") << "\n";
  if (r.kind == ExperimentKind::Accuracy) out << "- Indeterminate decisions: " << r.indeterminate_decisions << "\n";
  if (r.metrics.confusion) {
    const auto& c = *r.metrics.confusion;
    out << "- Confusion: TP " << c.tp << ", FP " << c.fp << ", TN " << c.tn << ", FN " << c.fn << "\n";
  }
  out << "\n" << render_markdown(std::span<const MetricReport>(&r.metrics, 1));
  return out.str();
}

RunStore::RunStore(fs::path root) : root_(std::move(root)) {}

fs::path RunStore::run_dir(const std::string& run_id) const {
  if (!valid_run_id(run_id)) throw ConfigError("invalid run id '" + run_id + "'");
  return root_ / run_id;
}

bool RunStore::exists(const std::string& run_id) const {
  return valid_run_id(run_id) && fs::exists(root_ / run_id / kManifest);
}

std::vector<std::string> RunStore::list_runs() const {
  std::vector<std::string> ids;
  std::error_code ec;
  if (!fs::is_directory(root_, ec)) return ids;
  for (const auto& entry : fs::directory_iterator(root_)) {
    if (entry.is_directory() && fs::exists(entry.path() / kManifest)) ids.push_back(entry.path().filename().string());
  }
  std::sort(ids.begin(), ids.end());
  return ids;
}

void RunStore::create(const RunManifest& manifest) {
  const fs::path dir = run_dir(manifest.run_id);
  if (fs::exists(dir)) {
    throw ConfigError("run '" + manifest.run_id + "' already exists; runs are append-only, choose a new run id");
  }
  fs::create_directories(dir);
  write_file_atomically(dir / kManifest, nlohmann::json(manifest).dump(2) + "\n");
  std::ofstream(dir / kRecords, std::ios::app);
}

RunManifest RunStore::load_manifest(const std::string& run_id) const {
  if (!exists(run_id)) throw NotFoundError("unknown run '" + run_id + "'");
  try {
    return read_json_file(run_dir(run_id) / kManifest).get<RunManifest>();
  } catch (const nlohmann::json::exception& e) {
    throw DataError("manifest of run '" + run_id + "': " + e.what());
  }
}

std::vector<CompletionRecord> RunStore::load_records(const std::string& run_id) const {
  if (!exists(run_id)) throw NotFoundError("unknown run '" + run_id + "'");
  std::ifstream in(run_dir(run_id) / kRecords);
  std::vector<CompletionRecord> records;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      records.push_back(nlohmann::json::parse(line).get<CompletionRecord>());
    } catch (const std::exception& e) {
      // A torn final line is what an interrupted append leaves behind; the
      // request is simply missing and will be reissued on resume.
      if (in.peek() == std::char_traits<char>::eof()) break;
      throw DataError("records of run '" + run_id + "' line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  std::stable_sort(records.begin(), records.end(),
                   [](const CompletionRecord& a, const CompletionRecord& b) { return a.ordinal < b.ordinal; });
  return records;
}

void RunStore::write_report(const RunReport& report) const {
  const fs::path dir = run_dir(report.run_id);
  write_file_atomically(dir / kReportJson, nlohmann::json(report).dump(2) + "\n");
  write_file_atomically(dir / kReportMd, render_run_markdown(report));
}

std::optional<RunReport> RunStore::load_report(const std::string& run_id) const {
  const fs::path path = run_dir(run_id) / kReportJson;
  if (!fs::exists(path)) return std::nullopt;
  return read_json_file(path).get<RunReport>();
}

RunStore::RecordWriter::RecordWriter(const fs::path& path) {
  detail::truncate_torn_tail(path);
  out_.open(path, std::ios::app | std::ios::binary);
  if (!out_) throw DataError("cannot open " + path.string() + " for appending");
}

void RunStore::RecordWriter::append(const CompletionRecord& record) {
  const std::string line = nlohmann::json(record).dump() + "\n";
  std::lock_guard lock(mu_);
  out_.write(line.data(), static_cast<std::streamsize>(line.size()));
  out_.flush();
  if (!out_) throw DataError("failed to append record");
}

std::unique_ptr<RunStore::RecordWriter> RunStore::open_writer(const std::string& run_id) const {
  return std::make_unique<RecordWriter>(run_dir(run_id) / kRecords);
}

}  // namespace phenoeval
