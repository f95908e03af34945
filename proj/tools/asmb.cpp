#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "asmb/config.hpp"
#include "asmb/synth.hpp"

// Command-line surface: gen / run / eval / report / selfcheck.
// Exit codes: 0 = ran (cell failures are recorded, not fatal),
// 2 = bad input, 3 = I/O failure.

namespace fs = std::filesystem;
using namespace asmb;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitBadInput = 2;
constexpr int kExitIo = 3;

std::string manifest_path_for(const std::string& suite_path) {
  const std::string ext = ".jsonl";
  if (suite_path.size() > ext.size() &&
      suite_path.compare(suite_path.size() - ext.size(), ext.size(), ext) == 0) {
    return suite_path.substr(0, suite_path.size() - ext.size()) + ".manifest.json";
  }
  return suite_path + ".manifest.json";
}

std::vector<HistoryMode> parse_modes(const std::string& csv) {
  std::vector<HistoryMode> modes;
  std::string part;
  std::istringstream in(csv);
  while (std::getline(in, part, ',')) {
    auto m = history_mode_from(trim(part));
    if (!m) throw ConfigError("unknown mode: " + part);
    modes.push_back(*m);
  }
  if (modes.empty()) throw ConfigError("no modes given");
  return modes;
}

std::map<std::string, double> parse_intent_mix(const std::string& csv) {
  std::map<std::string, double> mix;
  if (csv.empty()) return mix;
  std::string part;
  std::istringstream in(csv);
  while (std::getline(in, part, ',')) {
    const size_t colon = part.find(':');
    if (colon == std::string::npos) {
      throw ConfigError("intent mix entries look like name:fraction, got: " + part);
    }
    mix[trim(part.substr(0, colon))] = std::stod(part.substr(colon + 1));
  }
  return mix;
}

std::vector<RunRecord> load_run_records(const std::string& run_dir) {
  const fs::path dir = fs::path(run_dir) / "records";
  if (!fs::is_directory(dir)) {
    throw std::runtime_error("no records directory under " + run_dir);
  }
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.path().extension() == ".json") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  std::vector<RunRecord> records;
  for (const auto& file : files) {
    std::ifstream in(file);
    json j = json::parse(in, nullptr, false);
    if (j.is_discarded()) throw ParseError("malformed record file: " + file.string());
    records.push_back(run_record_from_json(j));
  }
  return records;
}

std::string suite_path_from_manifest(const std::string& run_dir) {
  std::ifstream in(fs::path(run_dir) / "manifest.json");
  if (!in) return "";
  json j = json::parse(in, nullptr, false);
  if (j.is_discarded() || !j.contains("suite_path")) return "";
  return j["suite_path"].get<std::string>();
}

/// Groups records into (policy, mode) cells in first-seen order and scores
/// each cell against the suite.
std::vector<MetricReport> evaluate_run(const std::vector<Task>& tasks,
                                       const std::vector<RunRecord>& records,
                                       const EvalOptions& opts) {
  std::vector<std::pair<std::string, HistoryMode>> order;
  std::map<std::string, std::vector<RunRecord>> groups;
  for (const auto& r : records) {
    const std::string key = r.policy + "\x1f" + std::string(to_string(r.mode));
    if (!groups.count(key)) order.emplace_back(r.policy, r.mode);
    groups[key].push_back(r);
  }
  std::vector<MetricReport> reports;
  for (const auto& [policy, mode] : order) {
    const std::string key = policy + "\x1f" + std::string(to_string(mode));
    reports.push_back(evaluate_cell(tasks, groups[key], opts));
  }
  return reports;
}

void write_report_files(const std::string& out_dir,
                        const std::vector<MetricReport>& reports) {
  fs::create_directories(out_dir);
  json all = json::array();
  for (const auto& r : reports) all.push_back(report_to_json(r));
  {
    std::ofstream out(fs::path(out_dir) / "report.json", std::ios::binary);
    if (!out) throw std::runtime_error("cannot write report.json in " + out_dir);
    out << all.dump(2) << "\n";
  }
  {
    std::ofstream out(fs::path(out_dir) / "report.txt", std::ios::binary);
    if (!out) throw std::runtime_error("cannot write report.txt in " + out_dir);
    out << render_comparison_table(reports);
  }
  {
    std::ofstream out(fs::path(out_dir) / "buckets.csv", std::ios::binary);
    if (!out) throw std::runtime_error("cannot write buckets.csv in " + out_dir);
    out << render_bucket_csv(reports);
  }
}

int cmd_gen(const SynthConfig& config, const std::string& out_path) {
  std::vector<std::string> issues = config.validate();
  if (!issues.empty()) {
    for (const auto& issue : issues) std::cerr << "invalid config: " << issue << "\n";
    return kExitBadInput;
  }
  GeneratedSuite suite;
  try {
    suite = generate_suite(config);
  } catch (const GenerationError& e) {
    std::cerr << "invalid config: " << e.what() << "\n";
    return kExitBadInput;
  }
  try {
    save_suite(out_path, suite.tasks);
    std::ofstream out(manifest_path_for(out_path), std::ios::binary);
    if (!out) throw std::runtime_error("cannot write manifest");
    out << manifest_to_json(suite.manifest).dump(2) << "\n";
  } catch (const std::exception& e) {
    std::cerr << "io error: " << e.what() << "\n";
    return kExitIo;
  }
  long steps = 0;
  for (const auto& t : suite.tasks) steps += t.length();
  std::cout << "wrote " << suite.tasks.size() << " tasks (" << steps
            << " steps) to " << out_path << "\n";
  std::cout << "manifest: " << manifest_path_for(out_path) << "\n";
  return kExitOk;
}

int cmd_run(const CliConfig& cli, const std::string& suite_path,
            const std::vector<std::string>& policy_specs, const std::string& modes_csv,
            const std::string& out_dir, bool trace) {
  std::vector<Task> tasks;
  try {
    tasks = load_suite(suite_path);
  } catch (const ParseError& e) {
    std::cerr << "suite parse error: " << e.what() << "\n";
    return kExitBadInput;
  } catch (const std::exception& e) {
    std::cerr << "io error: " << e.what() << "\n";
    return kExitIo;
  }

  std::vector<HistoryMode> modes;
  std::vector<std::shared_ptr<Policy>> policies;
  RunConfig run_config;
  try {
    modes = parse_modes(modes_csv);
    for (const auto& spec : policy_specs) policies.push_back(make_policy(spec, cli));
    run_config.strategy = parse_strategy(cli.strategy);
  } catch (const ConfigError& e) {
    std::cerr << "invalid config: " << e.what() << "\n";
    return kExitBadInput;
  }
  run_config.context_budget = cli.budget;
  run_config.seed = cli.seed;
  run_config.concurrency = cli.concurrency;
  if (trace) run_config.trace_dir = (fs::path(out_dir) / "trace").string();

  SuiteRunResult result;
  try {
    result = run_suite(tasks, policies, modes, run_config, out_dir, eval_options(cli));
    json extra;
    extra["suite_path"] = suite_path;
    json specs = json::array();
    for (const auto& s : policy_specs) specs.push_back(s);
    extra["policies"] = specs;
    extra["modes"] = modes_csv;
    extra["effective_config"] = cli.to_json();
    write_run_manifest(out_dir, run_config, extra);
  } catch (const std::exception& e) {
    std::cerr << "io error: " << e.what() << "\n";
    return kExitIo;
  }

  std::cout << render_comparison_table(result.report.cells);
  std::cout << "executed " << result.report.executed << " cells, resumed "
            << result.report.resumed << ", failures "
            << result.report.failures.size() << "\n";
  for (const auto& f : result.report.failures) {
    std::cout << "  failed: " << f.task_id << " / " << f.policy << " / "
              << to_string(f.mode) << ": " << f.error << "\n";
  }
  return kExitOk;
}

int cmd_eval(const CliConfig& cli, const std::string& run_dir,
             std::string suite_path) {
  if (suite_path.empty()) suite_path = suite_path_from_manifest(run_dir);
  if (suite_path.empty()) {
    std::cerr << "invalid config: no suite path (pass --suite or run manifest)\n";
    return kExitBadInput;
  }
  std::vector<Task> tasks;
  std::vector<RunRecord> records;
  try {
    tasks = load_suite(suite_path);
    records = load_run_records(run_dir);
  } catch (const ParseError& e) {
    std::cerr << "parse error: " << e.what() << "\n";
    return kExitBadInput;
  } catch (const std::exception& e) {
    std::cerr << "io error: " << e.what() << "\n";
    return kExitIo;
  }
  std::vector<MetricReport> reports;
  try {
    reports = evaluate_run(tasks, records, eval_options(cli));
  } catch (const ConfigError& e) {
    std::cerr << "invalid config: " << e.what() << "\n";
    return kExitBadInput;
  }
  try {
    write_report_files(run_dir, reports);
  } catch (const std::exception& e) {
    std::cerr << "io error: " << e.what() << "\n";
    return kExitIo;
  }
  std::cout << render_comparison_table(reports);
  for (const auto& r : reports) {
    for (const auto& missing : r.missing_tasks) {
      std::cout << "  missing record: " << r.policy << "/" << to_string(r.mode)
                << " task " << missing << "\n";
    }
    for (const auto& excluded : r.excluded_tasks) {
      std::cout << "  excluded from TCR: " << excluded << "\n";
    }
  }
  return kExitOk;
}

int cmd_report(const CliConfig& cli, const std::vector<std::string>& run_dirs,
               const std::string& out_dir) {
  std::vector<MetricReport> all;
  try {
    for (const auto& dir : run_dirs) {
      std::string suite_path = suite_path_from_manifest(dir);
      if (suite_path.empty()) {
        std::cerr << "invalid config: run dir has no manifest with suite_path: "
                  << dir << "\n";
        return kExitBadInput;
      }
      std::vector<Task> tasks = load_suite(suite_path);
      std::vector<RunRecord> records = load_run_records(dir);
      for (auto& rep : evaluate_run(tasks, records, eval_options(cli))) {
        all.push_back(std::move(rep));
      }
    }
  } catch (const ParseError& e) {
    std::cerr << "parse error: " << e.what() << "\n";
    return kExitBadInput;
  } catch (const std::exception& e) {
    std::cerr << "io error: " << e.what() << "\n";
    return kExitIo;
  }
  try {
    write_report_files(out_dir, all);
  } catch (const std::exception& e) {
    std::cerr << "io error: " << e.what() << "\n";
    return kExitIo;
  }
  std::cout << render_comparison_table(all);
  std::cout << "wrote report files to " << out_dir << "\n";
  return kExitOk;
}

int cmd_selfcheck(const std::string& suite_path) {
  std::vector<Task> tasks;
  try {
    tasks = load_suite(suite_path);
  } catch (const ParseError& e) {
    std::cerr << "suite parse error: " << e.what() << "\n";
    return kExitBadInput;
  } catch (const std::exception& e) {
    std::cerr << "io error: " << e.what() << "\n";
    return kExitIo;
  }
  std::optional<SynthConfig> config;
  {
    std::ifstream in(manifest_path_for(suite_path));
    if (in) {
      json j = json::parse(in, nullptr, false);
      if (!j.is_discarded() && j.contains("config")) {
        config = SynthConfig::from_json(j["config"]);
      }
    }
  }
  long violations = 0;
  for (const auto& task : tasks) {
    for (const auto& issue : self_check(task, config ? &*config : nullptr)) {
      std::cout << task.id << ": " << issue << "\n";
      ++violations;
    }
  }
  std::cout << tasks.size() << " tasks checked, " << violations << " violations\n";
  return violations == 0 ? kExitOk : kExitBadInput;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Anchored-memory GUI agent harness: synthetic suites, "
               "teacher-forced runs, and anchor-based evaluation"};
  app.require_subcommand(1);

  // Flag values land in `flags` first; the effective config is assembled
  // afterwards as defaults < file < env < flags.
  CliConfig flags;
  std::string config_file;
  app.add_option("--config", config_file, "JSON config file (flags override it)");

  // gen
  auto* gen = app.add_subcommand("gen", "generate a synthetic suite");
  SynthConfig synth;
  std::string gen_out = "suite.jsonl";
  std::string intent_mix_csv;
  gen->add_option("--out", gen_out, "suite output path (.jsonl)");
  gen->add_option("--tasks", synth.num_tasks, "number of tasks");
  gen->add_option("--seed", synth.seed, "suite seed");
  gen->add_option("--len-min", synth.len_min, "min task length");
  gen->add_option("--len-max", synth.len_max, "max task length");
  gen->add_option("--gap-min", synth.gap_min, "min dependency gap");
  gen->add_option("--gap-max", synth.gap_max, "max dependency gap");
  gen->add_option("--anchors-min", synth.anchors_min, "min anchors per task");
  gen->add_option("--anchors-max", synth.anchors_max, "max anchors per task");
  gen->add_option("--pool", synth.app_pool_size, "app pool size");
  gen->add_option("--profile", synth.profile, "standard | degradation");
  gen->add_option("--name", synth.suite_name, "suite name for the manifest");
  gen->add_option("--intent-mix", intent_mix_csv,
                  "e.g. lookup:0.5,purchase_order:0.5 (default uniform)");

  // run
  auto* run = app.add_subcommand("run", "run policies over a suite");
  std::string run_suite_path;
  std::string run_out = "runs/run";
  std::vector<std::string> run_policies;
  std::string run_modes = "raw,summary,asm";
  bool run_trace = false;
  run->add_option("--suite", run_suite_path, "suite file")->required();
  run->add_option("--out", run_out, "run directory");
  run->add_option("--policy", run_policies,
                  "policy spec: oracle | forgetful:window=N | llm (repeatable)")
      ->required();
  run->add_option("--modes", run_modes, "comma-separated history modes");
  run->add_flag("--trace", run_trace, "log prompts/responses verbatim");
  auto* opt_budget = run->add_option("--budget", flags.budget, "context token budget");
  auto* opt_strategy = run->add_option("--strategy", flags.strategy,
                                       "all_active | recency:k=N | link_closure");
  auto* opt_seed = run->add_option("--seed", flags.seed, "run seed");
  auto* opt_conc =
      run->add_option("--concurrency", flags.concurrency, "parallel task cap");
  auto* opt_endpoint =
      run->add_option("--endpoint", flags.endpoint, "chat endpoint URL");
  auto* opt_model = run->add_option("--model", flags.model, "model name");
  auto* opt_timeout =
      run->add_option("--timeout", flags.timeout_seconds, "endpoint timeout seconds");
  auto* opt_retries =
      run->add_option("--max-retries", flags.max_retries, "parse retries per step");
  auto* opt_temp =
      run->add_option("--temperature", flags.temperature, "sampling temperature");

  // eval
  auto* eval = app.add_subcommand("eval", "score a run directory");
  std::string eval_run_dir;
  std::string eval_suite;
  eval->add_option("--run", eval_run_dir, "run directory")->required();
  eval->add_option("--suite", eval_suite, "suite file (default: from manifest)");
  auto* opt_scope_e = eval->add_option("--tcr-scope", flags.tcr_scope, "closure | all");
  auto* opt_thresh_e =
      eval->add_option("--text-threshold", flags.text_threshold,
                       "binary text scoring threshold (default fractional)");

  // report
  auto* report = app.add_subcommand("report", "join runs into comparison tables");
  std::vector<std::string> report_dirs;
  std::string report_out = "report";
  report->add_option("dirs", report_dirs, "run directories")->required();
  report->add_option("--out", report_out, "output directory");
  auto* opt_scope_r =
      report->add_option("--tcr-scope", flags.tcr_scope, "closure | all");
  auto* opt_thresh_r =
      report->add_option("--text-threshold", flags.text_threshold,
                         "binary text scoring threshold (default fractional)");

  // selfcheck
  auto* selfcheck = app.add_subcommand("selfcheck", "validate a suite's anchors");
  std::string selfcheck_suite;
  selfcheck->add_option("--suite", selfcheck_suite, "suite file")->required();

  CLI11_PARSE(app, argc, argv);

  CliConfig cli;
  try {
    if (!config_file.empty()) apply_config_file(cli, config_file);
  } catch (const ConfigError& e) {
    std::cerr << "invalid config: " << e.what() << "\n";
    return kExitBadInput;
  }
  apply_env(cli);
  if (opt_budget->count()) cli.budget = flags.budget;
  if (opt_strategy->count()) cli.strategy = flags.strategy;
  if (opt_seed->count()) cli.seed = flags.seed;
  if (opt_conc->count()) cli.concurrency = flags.concurrency;
  if (opt_endpoint->count()) cli.endpoint = flags.endpoint;
  if (opt_model->count()) cli.model = flags.model;
  if (opt_timeout->count()) cli.timeout_seconds = flags.timeout_seconds;
  if (opt_retries->count()) cli.max_retries = flags.max_retries;
  if (opt_temp->count()) cli.temperature = flags.temperature;
  if (opt_scope_e->count() || opt_scope_r->count()) cli.tcr_scope = flags.tcr_scope;
  if (opt_thresh_e->count() || opt_thresh_r->count()) {
    cli.text_threshold = flags.text_threshold;
  }

  try {
    if (gen->parsed()) {
      synth.intent_mix = parse_intent_mix(intent_mix_csv);
      return cmd_gen(synth, gen_out);
    }
    if (run->parsed()) {
      return cmd_run(cli, run_suite_path, run_policies, run_modes, run_out, run_trace);
    }
    if (eval->parsed()) return cmd_eval(cli, eval_run_dir, eval_suite);
    if (report->parsed()) return cmd_report(cli, report_dirs, report_out);
    if (selfcheck->parsed()) return cmd_selfcheck(selfcheck_suite);
  } catch (const ConfigError& e) {
    std::cerr << "invalid config: " << e.what() << "\n";
    return kExitBadInput;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitIo;
  }
  return kExitOk;
}
