#include "cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <memory>
#include <sstream>
#include <unordered_set>

#include "phenoeval/concepts.hpp"
#include "phenoeval/error.hpp"
#include "phenoeval/experiment_runner.hpp"
#include "phenoeval/hashing.hpp"
#include "phenoeval/ledger.hpp"
#include "phenoeval/mock_model.hpp"
#include "phenoeval/prompts.hpp"
#include "phenoeval/review_service.hpp"
#include "phenoeval/run_store.hpp"

namespace phenoeval::cli {

namespace fs = std::filesystem;

namespace {

struct ModelFlags {
  std::string model;
  std::string mock_script;
  std::string endpoint;
  std::optional<double> temperature;
  std::optional<double> top_p;
  std::optional<std::int64_t> timeout_ms;
  std::optional<int> max_retries;
  std::optional<int> max_inflight;
  std::string therapy_template;
  std::string medication_template;
};

struct Flags {
  std::string config;
  std::string runs_dir;
  std::optional<std::uint64_t> seed;

  std::vector<std::string> inputs;
  std::string table_specs;
  std::string out;
  std::string concepts;
  std::size_t n = kDefaultSampleSize;
  std::vector<std::string> exclude;

  ModelFlags model;
  std::string run_id;
  std::string tag;
  std::string truth;
  std::string time_to_mvp;
  int k = kDefaultRepeats;
  std::size_t m = kDefaultRepeatConcepts;
  std::string perturbation;
  std::string baseline;
  bool therapy_only = false;

  std::vector<std::string> run_ids;
  bool json = false;
  std::string ledger;

  std::string host = "127.0.0.1";
  int port = 0;
  std::string static_dir;
  bool no_latency = false;
};

std::string file_sha256(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return sha256_hex(buf.str());
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  out << text;
  if (!out) throw DataError("write failed: " + path.string());
}

fs::path resolve(const fs::path& base, const fs::path& p) { return p.is_absolute() || base.empty() ? p : base / p; }

void add_model_flags(CLI::App* cmd, ModelFlags& f) {
  cmd->add_option("--model", f.model, "Model name from the config, or 'mock' for the in-process scripted model")
      ->required();
  cmd->add_option("--mock-script", f.mock_script, "Mock script JSON (with --model mock)")->check(CLI::ExistingFile);
  cmd->add_option("--endpoint", f.endpoint, "Completion endpoint URL (overrides $" + std::string(kEndpointEnv) + ")");
  cmd->add_option("--temperature", f.temperature, "Sampling temperature");
  cmd->add_option("--top-p", f.top_p, "Nucleus sampling top_p");
  cmd->add_option("--timeout-ms", f.timeout_ms, "Per-request timeout in milliseconds");
  cmd->add_option("--max-retries", f.max_retries, "Retries after a transport failure");
  cmd->add_option("--max-inflight", f.max_inflight, "Concurrent requests");
  cmd->add_option("--therapy-template", f.therapy_template, "Therapy prompt template file")->check(CLI::ExistingFile);
  cmd->add_option("--medication-template", f.medication_template, "Medication prompt template file")
      ->check(CLI::ExistingFile);
}

/// Everything a run command needs, resolved from flags, config and env.
struct RunContext {
  ModelConfig model;
  std::unique_ptr<CompletionBackend> backend;
  std::string backend_kind;
  PromptTemplate therapy;
  PromptTemplate medication;
  std::map<std::string, std::string> input_hashes;
};

class Commands {
 public:
  Commands(Flags& f, std::ostream& out, std::ostream& err) : f_(f), out_(out), err_(err) {}

  void load_config() {
    if (!f_.config.empty()) config_ = load_global_config(f_.config);
  }

  RunStore store() const { return RunStore(f_.runs_dir.empty() ? config_.run_dir : fs::path(f_.runs_dir)); }

  std::uint64_t seed() const {
    if (f_.seed) return *f_.seed;
    if (config_.seed) return *config_.seed;
    throw ConfigError("no seed given; pass --seed or set \"seed\" in the config file");
  }

  void concepts_build() {
    const auto specs = f_.table_specs.empty() ? default_table_specs() : load_table_specs(f_.table_specs);
    std::vector<fs::path> paths(f_.inputs.begin(), f_.inputs.end());
    const auto concepts = build_concepts_from_files(paths, specs);
    std::ostringstream buf;
    write_concepts_jsonl(buf, concepts);
    write_text(f_.out, buf.str());
    out_ << "wrote " << concepts.size() << " concepts to " << f_.out << "\n";
  }

  void concepts_sample() {
    const auto all = read_concepts_jsonl_file(f_.concepts);
    const auto excluded = exclusion_set();
    const auto drawn = sample(all, f_.n, seed(), excluded);
    std::ostringstream buf;
    write_concepts_jsonl(buf, drawn);
    write_text(f_.out, buf.str());
    out_ << "sampled " << drawn.size() << " of " << all.size() << " concepts into " << f_.out << "\n";
  }

  int run_accuracy() {
    RunContext ctx = run_context();
    const auto concepts = read_concepts_jsonl_file(f_.concepts);
    const auto truth = read_truth_csv(fs::path(f_.truth));
    RunOptions opts = run_options(ctx);
    opts.exclude = exclusion_set();
    opts.input_hashes["concepts"] = file_sha256(f_.concepts);
    opts.input_hashes["truth"] = file_sha256(f_.truth);
    for (const auto& e : f_.exclude) opts.input_hashes["exclude:" + fs::path(e).filename().string()] = file_sha256(e);
    if (!f_.time_to_mvp.empty()) opts.time_to_minimum_viable_prompt = f_.time_to_mvp;
    return finish(runner(ctx).run_accuracy(concepts, truth, opts));
  }

  int run_consistency() {
    RunContext ctx = run_context();
    const auto concepts = repeat_subset(ctx);
    RunOptions opts = run_options(ctx);
    opts.k_runs = f_.k;
    return finish(runner(ctx).run_consistency(concepts, opts));
  }

  int run_stability() {
    RunContext ctx = run_context();
    const auto concepts = repeat_subset(ctx);
    RunOptions opts = run_options(ctx);
    opts.k_runs = f_.k;
    opts.include_unperturbed_prompt = !f_.therapy_only;
    return finish(runner(ctx).run_stability(concepts, perturbation_from_string(f_.perturbation), f_.baseline, opts));
  }

  int run_resume() {
    RunContext ctx = run_context();
    return finish(runner(ctx).resume(f_.run_id));
  }

  void report() {
    RunStore s = store();
    ReviewService review(s);
    std::vector<std::string> ids = f_.run_ids.empty() ? s.list_runs() : f_.run_ids;
    if (ids.empty()) throw NotFoundError("no runs in " + s.root().string());
    std::vector<RunReport> reports;
    for (const auto& id : ids) reports.push_back(review.report(id));

    std::string text;
    if (f_.json) {
      text = nlohmann::json(reports).dump(2) + "\n";
    } else {
      // One column per model. Accuracy runs merge last so their format
      // accuracy and latency win over those of the repeat protocols.
      std::vector<const RunReport*> order;
      for (const auto& r : reports) order.push_back(&r);
      std::stable_sort(order.begin(), order.end(), [](const RunReport* a, const RunReport* b) {
        return (a->kind == ExperimentKind::Accuracy) < (b->kind == ExperimentKind::Accuracy);
      });
      std::vector<MetricReport> columns;
      for (const RunReport* rp : order) {
        const RunReport& r = *rp;
        auto it = std::find_if(columns.begin(), columns.end(),
                               [&](const MetricReport& m) { return m.model_name == r.metrics.model_name; });
        if (it == columns.end()) {
          columns.push_back(r.metrics);
        } else {
          it->merge(r.metrics);
        }
      }
      text = render_markdown(columns);
    }
    if (f_.out.empty()) {
      out_ << text;
    } else {
      write_text(f_.out, text);
      out_ << "wrote " << f_.out << "\n";
    }
  }

  void ledger_render() {
    const auto entries = load_ledger(f_.ledger);
    const std::string md = render_comparison(entries);
    if (f_.out.empty()) {
      out_ << md;
    } else {
      write_text(f_.out, md);
      out_ << "wrote " << f_.out << "\n";
    }
  }

  int ledger_validate() {
    const auto violations = validate_ledger(load_ledger(f_.ledger));
    for (const auto& v : violations) err_ << "violation: " << v << "\n";
    if (violations.empty()) out_ << "ledger is valid\n";
    return violations.empty() ? kExitOk : kExitRuntime;
  }

  void review_serve() {
    RunStore s = store();
    ReviewService service(s);
    std::optional<fs::path> static_dir;
    if (!f_.static_dir.empty()) static_dir = f_.static_dir;
    ReviewHttpServer server(service, static_dir);
    const int port = f_.port == 0 ? 8080 : f_.port;
    out_ << "review API on http://" << f_.host << ":" << port << " serving " << s.root().string() << std::endl;
    server.listen_blocking(f_.host, port);
  }

  void mock_serve() {
    MockScript script = f_.model.mock_script.empty() ? default_mock_script() : load_mock_script(f_.model.mock_script);
    MockServer server(std::move(script), !f_.no_latency);
    const int port = f_.port == 0 ? 11434 : f_.port;
    out_ << "mock model on http://" << f_.host << ":" << port << "/api/generate" << std::endl;
    server.listen_blocking(f_.host, port);
  }

 private:
  std::unordered_set<std::string> exclusion_set() const {
    std::unordered_set<std::string> ids;
    for (const auto& path : f_.exclude) {
      for (const auto& c : read_concepts_jsonl_file(path)) ids.insert(c.concept_id);
    }
    return ids;
  }

  // The consistency and stability protocols use m concepts drawn from the
  // given sample; m = 0 takes the file as is.
  std::vector<ConstructedConcept> repeat_subset(RunContext& ctx) {
    const auto all = read_concepts_jsonl_file(f_.concepts);
    ctx.input_hashes["concepts"] = file_sha256(f_.concepts);
    if (f_.m == 0) return all;
    seed_used_ = seed();
    return sample(all, f_.m, *seed_used_, {});
  }

  RunOptions run_options(const RunContext& ctx) const {
    RunOptions opts;
    opts.run_id = f_.run_id;
    opts.seed = seed_used_;
    if (!f_.tag.empty()) opts.tag = f_.tag;
    opts.input_hashes = ctx.input_hashes;
    return opts;
  }

  ModelConfig model_config() const {
    const ModelFlags& mf = f_.model;
    ModelConfig cfg;
    cfg.model_name = mf.model;
    for (const auto& m : config_.models) {
      if (m.model_name == mf.model) cfg = m;
    }
    if (const char* env = std::getenv(kEndpointEnv); env != nullptr && *env != '\0') cfg.endpoint_url = env;
    if (!mf.endpoint.empty()) cfg.endpoint_url = mf.endpoint;
    if (mf.temperature) cfg.temperature = *mf.temperature;
    if (mf.top_p) cfg.top_p = *mf.top_p;
    if (mf.timeout_ms) cfg.request_timeout = std::chrono::milliseconds(*mf.timeout_ms);
    if (mf.max_retries) cfg.max_retries = *mf.max_retries;
    if (mf.max_inflight) cfg.max_inflight = *mf.max_inflight;
    validate_model_config(cfg);
    return cfg;
  }

  PromptTemplate load_prompt(PromptId id, const std::string& flag, const std::optional<fs::path>& configured,
                             std::map<std::string, std::string>& hashes) const {
    std::optional<fs::path> path;
    if (!flag.empty()) {
      path = flag;
    } else if (configured) {
      path = configured;
    }
    if (!path) return default_template(id);
    hashes[std::string("template:") + std::string(to_string(id))] = file_sha256(*path);
    PromptTemplate t = load_template(*path);
    if (t.prompt_id != id) throw ConfigError(path->string() + " is not a " + std::string(to_string(id)) + " template");
    return t;
  }

  RunContext run_context() {
    RunContext ctx;
    ctx.model = model_config();
    ctx.therapy = load_prompt(PromptId::Therapy, f_.model.therapy_template, config_.therapy_template, ctx.input_hashes);
    ctx.medication =
        load_prompt(PromptId::Medication, f_.model.medication_template, config_.medication_template, ctx.input_hashes);
    if (ctx.model.model_name == "mock") {
      MockScript script;
      if (f_.model.mock_script.empty()) {
        script = default_mock_script();
      } else {
        script = load_mock_script(f_.model.mock_script);
        ctx.input_hashes["mock_script"] = file_sha256(f_.model.mock_script);
      }
      ctx.backend = std::make_unique<MockModel>(std::move(script));
      ctx.backend_kind = "mock";
    } else {
      ctx.backend = std::make_unique<HttpModelClient>(ctx.model);
      ctx.backend_kind = "http";
    }
    return ctx;
  }

  ExperimentRunner& runner(RunContext& ctx) {
    store_ = std::make_unique<RunStore>(store());
    runner_ = std::make_unique<ExperimentRunner>(*store_, *ctx.backend, ctx.model, ctx.therapy, ctx.medication,
                                                 ctx.backend_kind);
    return *runner_;
  }

  int finish(const RunReport& report) {
    out_ << render_run_markdown(report);
    out_ << "\nrun directory: " << store_->run_dir(report.run_id).string() << "\n";
    if (report.partial) {
      err_ << "run " << report.run_id << " is partial (" << report.recorded << " of " << report.expected_records
           << " records, " << runner_->transport_failures() << " failed requests); continue it with "
           << "'phenoeval run resume " << report.run_id << " --model " << report.metrics.model_name << "'\n";
      return kExitRuntime;
    }
    return kExitOk;
  }

  Flags& f_;
  std::ostream& out_;
  std::ostream& err_;
  GlobalConfig config_;
  std::optional<std::uint64_t> seed_used_;
  std::unique_ptr<RunStore> store_;
  std::unique_ptr<ExperimentRunner> runner_;
};

}  // namespace

GlobalConfig global_config_from_json(const nlohmann::json& doc, const fs::path& base_dir) {
  GlobalConfig cfg;
  try {
    if (!doc.contains("models") || !doc["models"].is_array() || doc["models"].empty()) {
      throw ConfigError("config needs at least one entry in \"models\"");
    }
    for (const auto& m : doc["models"]) {
      ModelConfig mc = m.get<ModelConfig>();
      validate_model_config(mc);
      cfg.models.push_back(std::move(mc));
    }
    if (doc.contains("templates")) {
      const auto& t = doc["templates"];
      if (t.contains("therapy")) cfg.therapy_template = resolve(base_dir, t["therapy"].get<std::string>());
      if (t.contains("medication")) cfg.medication_template = resolve(base_dir, t["medication"].get<std::string>());
    }
    if (doc.contains("run_dir")) cfg.run_dir = resolve(base_dir, doc["run_dir"].get<std::string>());
    if (doc.contains("seed") && !doc["seed"].is_null()) cfg.seed = doc["seed"].get<std::uint64_t>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  return cfg;
}

GlobalConfig load_global_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  GlobalConfig cfg = global_config_from_json(doc, path.parent_path());
  std::error_code ec;
  fs::create_directories(cfg.run_dir, ec);
  if (ec || !fs::is_directory(cfg.run_dir)) throw ConfigError("run directory " + cfg.run_dir.string() + " is not writable");
  return cfg;
}

int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  Flags f;
  CLI::App app{"Evaluate LLMs on clinical concept classification", "phenoeval"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "phenoeval 0.1.0");
  app.add_option("--config", f.config, "Global config JSON")->check(CLI::ExistingFile);
  app.add_option("--runs-dir", f.runs_dir, "Run store directory (default: config run_dir or ./runs)");
  app.add_option("--seed", f.seed, "Seed for every random draw");

  auto* concepts = app.add_subcommand("concepts", "Build and sample constructed concepts");
  concepts->require_subcommand(1);
  auto* build = concepts->add_subcommand("build", "Build concepts from table CSV exports");
  build->add_option("--input", f.inputs, "Table CSV; the file name selects the table")
      ->required()
      ->check(CLI::ExistingFile);
  build->add_option("--table-specs", f.table_specs, "Table spec JSON (default: built-in)")->check(CLI::ExistingFile);
  build->add_option("--out", f.out, "Output JSON-lines file")->required();
  auto* sample_cmd = concepts->add_subcommand("sample", "Draw a seeded sample of concepts");
  sample_cmd->add_option("--concepts", f.concepts, "Concept JSON-lines file")->required()->check(CLI::ExistingFile);
  sample_cmd->add_option("--n", f.n, "Sample size")->capture_default_str();
  sample_cmd->add_option("--exclude", f.exclude, "Concept files whose concepts must not be drawn")
      ->check(CLI::ExistingFile);
  sample_cmd->add_option("--out", f.out, "Output JSON-lines file")->required();

  auto* run = app.add_subcommand("run", "Run an experiment");
  run->require_subcommand(1);
  auto add_run_flags = [&](CLI::App* cmd) {
    add_model_flags(cmd, f.model);
    cmd->add_option("--run-id", f.run_id, "Run id (default: generated)");
    cmd->add_option("--tag", f.tag, "Free-text tag stored in the manifest");
  };
  auto* accuracy = run->add_subcommand("accuracy", "Both prompts once per concept");
  add_run_flags(accuracy);
  accuracy->add_option("--concepts", f.concepts, "Concept sample")->required()->check(CLI::ExistingFile);
  accuracy->add_option("--truth", f.truth, "Ground truth CSV")->required()->check(CLI::ExistingFile);
  accuracy->add_option("--exclude", f.exclude, "Prompt-engineering sample(s) the sample must not overlap")
      ->check(CLI::ExistingFile);
  accuracy->add_option("--time-to-mvp", f.time_to_mvp, "Time to minimum viable prompt, recorded as given");
  auto* consistency = run->add_subcommand("consistency", "Repeated identical requests");
  add_run_flags(consistency);
  consistency->add_option("--concepts", f.concepts, "Concept sample")->required()->check(CLI::ExistingFile);
  consistency->add_option("--k", f.k, "Repeats per concept and prompt")->capture_default_str();
  consistency->add_option("--m", f.m, "Concepts drawn from the sample (0 = all, in file order)")->capture_default_str();
  auto* stability = run->add_subcommand("stability", "Perturbed therapy prompt against a baseline run");
  add_run_flags(stability);
  stability->add_option("--concepts", f.concepts, "Concept sample")->required()->check(CLI::ExistingFile);
  stability->add_option("--perturbation", f.perturbation, "Perturbation")
      ->required()
      ->check(CLI::IsMember({"instructions-after-criteria", "questions-reversed", "concepts-reversed"}));
  stability->add_option("--baseline", f.baseline, "Accuracy run id to compare against")->required();
  stability->add_option("--k", f.k, "Trials per concept")->capture_default_str();
  stability->add_option("--m", f.m, "Concepts drawn from the sample (0 = all, in file order)")->capture_default_str();
  stability->add_flag("--therapy-only", f.therapy_only, "Issue only the perturbed therapy prompt per trial");
  auto* resume = run->add_subcommand("resume", "Issue the missing requests of a partial run");
  add_model_flags(resume, f.model);
  resume->add_option("run_id", f.run_id, "Run id")->required();

  auto* report = app.add_subcommand("report", "Model-ability table over runs (all runs by default)");
  report->add_option("run_ids", f.run_ids, "Run ids");
  report->add_option("--out", f.out, "Write to a file instead of stdout");
  report->add_flag("--json", f.json, "Emit run reports as JSON");

  auto* ledger = app.add_subcommand("ledger", "Resource-requirements ledger");
  ledger->require_subcommand(1);
  auto* ledger_render = ledger->add_subcommand("render", "Render the comparison table");
  ledger_render->add_option("ledger", f.ledger, "Ledger JSON")->required()->check(CLI::ExistingFile);
  ledger_render->add_option("--out", f.out, "Write to a file instead of stdout");
  auto* ledger_validate = ledger->add_subcommand("validate", "List ledger violations");
  ledger_validate->add_option("ledger", f.ledger, "Ledger JSON")->required()->check(CLI::ExistingFile);

  auto* review = app.add_subcommand("review", "Human review service");
  review->require_subcommand(1);
  auto* review_serve = review->add_subcommand("serve", "Serve the review HTTP API");
  review_serve->add_option("--host", f.host)->capture_default_str();
  review_serve->add_option("--port", f.port, "Port (default 8080)");
  review_serve->add_option("--static", f.static_dir, "Review UI bundle directory")->check(CLI::ExistingDirectory);

  auto* mock = app.add_subcommand("mock", "Scripted model");
  mock->require_subcommand(1);
  auto* mock_serve = mock->add_subcommand("serve", "Serve the mock over HTTP");
  mock_serve->add_option("--host", f.host)->capture_default_str();
  mock_serve->add_option("--port", f.port, "Port (default 11434)");
  mock_serve->add_option("--script", f.model.mock_script, "Mock script JSON (default: built-in keyword script)")
      ->check(CLI::ExistingFile);
  mock_serve->add_flag("--no-latency", f.no_latency, "Answer without sleeping for latency_ms");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::CallForVersion& e) {
    out << e.what() << "\n";
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    err << "run 'phenoeval --help' for usage\n";
    return kExitUsage;
  }

  Commands cmd(f, out, err);
  try {
    cmd.load_config();
    if (*build) {
      cmd.concepts_build();
    } else if (*sample_cmd) {
      cmd.concepts_sample();
    } else if (*accuracy) {
      return cmd.run_accuracy();
    } else if (*consistency) {
      return cmd.run_consistency();
    } else if (*stability) {
      return cmd.run_stability();
    } else if (*resume) {
      return cmd.run_resume();
    } else if (*report) {
      cmd.report();
    } else if (*ledger_render) {
      cmd.ledger_render();
    } else if (*ledger_validate) {
      return cmd.ledger_validate();
    } else if (*review_serve) {
      cmd.review_serve();
    } else if (*mock_serve) {
      cmd.mock_serve();
    }
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitOk;
}

}  // namespace phenoeval::cli
