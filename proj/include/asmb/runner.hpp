#pragma once

#include <atomic>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <functional>
#include <memory>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include "asmb/metrics.hpp"
#include "asmb/policy.hpp"

// Teacher-forced execution over pre-recorded trajectories: the policy
// predicts at every step, the environment always advances along the ground
// truth, and the loop never stops early so AMS is defined per step.

namespace asmb {

inline constexpr std::string_view kToolVersion = "0.1.0";

struct RunConfig {
  RetrievalStrategy strategy;
  long context_budget = 2048;
  uint64_t seed = 0;
  int concurrency = 1;
  std::string trace_dir;  // empty disables prompt/response tracing

  std::string hash() const {
    json j;
    j["budget"] = context_budget;
    j["strategy"] = to_string(strategy);
    j["seed"] = seed;
    j["prompt_version"] = std::string(kPromptVersion);
    return stable_hash_hex(j.dump());
  }
};

namespace detail {

inline void write_trace(const std::string& trace_dir, const std::string& cell_name,
                        int step_index, const PromptBundle& bundle,
                        const PolicyResult& result) {
  namespace fs = std::filesystem;
  fs::create_directories(trace_dir);
  std::ofstream out(fs::path(trace_dir) / (cell_name + ".jsonl"), std::ios::app);
  json j;
  j["step_index"] = step_index;
  json messages = json::array();
  for (const auto& m : bundle.messages) {
    messages.push_back({{"role", m.role}, {"content", m.content}});
  }
  j["messages"] = messages;
  json exchanges = json::array();
  for (const auto& [req, resp] : result.exchanges) {
    exchanges.push_back({{"request", req}, {"response", resp}});
  }
  j["exchanges"] = exchanges;
  j["decision"] = action_to_json(result.decision.action);
  out << j.dump() << "\n";
}

inline std::string sanitize_name(std::string_view s) {
  std::string out;
  for (char c : s) {
    out.push_back(std::isalnum(static_cast<unsigned char>(c)) ? c : '_');
  }
  return out;
}

}  // namespace detail

inline std::string cell_name(const std::string& policy_name, HistoryMode mode,
                             const std::string& task_id) {
  return detail::sanitize_name(policy_name) + "__" +
         std::string(to_string(mode)) + "__" + detail::sanitize_name(task_id);
}

/// Runs one policy over one task in one history mode. The next state shown
/// is always the recorded one; predictions never branch the environment.
inline RunRecord run_task(const Task& task, Policy& policy, HistoryMode mode,
                          const RunConfig& config) {
  RunRecord record;
  record.task_id = task.id;
  record.mode = mode;
  record.policy = policy.name();
  record.config_hash = config.hash();

  MemoryBank bank(task.id);
  std::string model_summary;  // latest valid summary_en from an LLM policy
  const bool deterministic = policy.deterministic();
  const auto started = std::chrono::steady_clock::now();

  std::vector<Step> past;  // grows with the loop; raw mode reads it
  past.reserve(task.steps.size());

  for (int t = 0; t < task.length(); ++t) {
    const Step& step = task.steps[t];
    HistoryContext ctx;
    switch (mode) {
      case HistoryMode::Raw:
        ctx = render_raw_context(past, config.context_budget);
        break;
      case HistoryMode::Summary: {
        const std::string running =
            policy.scripted_summary()
                ? scripted_running_summary(task, t, config.context_budget)
                : model_summary;
        ctx = render_summary_context(running, config.context_budget);
        break;
      }
      case HistoryMode::Asm: {
        std::vector<Anchor> retrieved =
            retrieve(bank, step.state, task.instruction, config.strategy);
        ctx = render_asm_context(retrieved, config.context_budget);
        break;
      }
    }

    PromptBundle bundle = build_prompt(mode, task.instruction, ctx, step.state);
    StepView view{&task, t, &ctx, mode};
    PolicyResult result = policy.decide(bundle, view);

    StepRecord entry;
    entry.step_index = t;
    entry.predicted = result.decision.action;
    entry.gt = step.action;
    entry.context_tokens = ctx.token_estimate;
    entry.usage = result.usage;
    entry.wall_time_seconds = deterministic ? 0.0 : result.wall_time_seconds;
    for (auto& e : result.errors) record.errors.push_back(e);

    if (mode == HistoryMode::Asm) {
      MemoryBank::UpdateResult ur =
          bank.update(step.state, result.decision.action, result.decision.proposal);
      entry.proposal_outcome = ur.outcome;
      if (ur.outcome == "rejected") {
        record.errors.push_back({t, "proposal_error", ur.error});
      }
    }
    if (mode == HistoryMode::Summary && !policy.scripted_summary()) {
      if (!result.decision.summary_text.empty()) {
        model_summary = result.decision.summary_text;
      } else {
        record.errors.push_back(
            {t, "summary_carry_forward", "no valid summary_en; keeping previous"});
      }
    }
    if (!config.trace_dir.empty()) {
      detail::write_trace(config.trace_dir,
                          cell_name(policy.name(), mode, task.id), t, bundle, result);
    }
    record.steps.push_back(std::move(entry));
    past.push_back(step);
  }

  if (mode == HistoryMode::Asm) record.final_bank = bank.anchors();
  if (deterministic) {
    double sum = 0.0;
    for (const auto& s : record.steps) sum += s.wall_time_seconds;
    record.total_wall_seconds = sum;
  } else {
    record.total_wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - started)
            .count();
  }
  return record;
}

struct CellFailure {
  std::string task_id;
  std::string policy;
  HistoryMode mode = HistoryMode::Raw;
  std::string error;
};

struct SuiteReport {
  std::vector<MetricReport> cells;  // one per (policy, mode)
  std::vector<CellFailure> failures;
  int executed = 0;
  int resumed = 0;
};

struct SuiteRunResult {
  std::vector<RunRecord> records;
  SuiteReport report;
};

/// Executes the policies x modes matrix over every task, concurrency
/// capped. Cells are independent: each failure is quarantined, and record
/// order is fixed by (policy, mode, task) regardless of scheduling.
inline SuiteRunResult run_suite(
    const std::vector<Task>& tasks,
    const std::vector<std::shared_ptr<Policy>>& policies,
    const std::vector<HistoryMode>& modes, const RunConfig& config,
    const std::string& run_dir = "",
    const EvalOptions& eval_opts = {}) {
  namespace fs = std::filesystem;
  struct Cell {
    size_t policy_idx;
    HistoryMode mode;
    size_t task_idx;
  };
  std::vector<Cell> cells;
  for (size_t p = 0; p < policies.size(); ++p) {
    for (HistoryMode m : modes) {
      for (size_t t = 0; t < tasks.size(); ++t) cells.push_back({p, m, t});
    }
  }

  const std::string config_hash = config.hash();
  fs::path records_dir;
  if (!run_dir.empty()) {
    records_dir = fs::path(run_dir) / "records";
    fs::create_directories(records_dir);
  }

  SuiteRunResult result;
  result.records.resize(cells.size());
  std::vector<char> ok(cells.size(), 0);
  std::vector<std::string> cell_errors(cells.size());
  std::atomic<size_t> next{0};
  std::atomic<int> executed{0};
  std::atomic<int> resumed{0};

  auto worker = [&]() {
    while (true) {
      const size_t i = next.fetch_add(1);
      if (i >= cells.size()) return;
      const Cell& cell = cells[i];
      const Task& task = tasks[cell.task_idx];
      Policy& policy = *policies[cell.policy_idx];
      const std::string name = cell_name(policy.name(), cell.mode, task.id);
      try {
        if (!run_dir.empty()) {
          const fs::path file = records_dir / (name + ".json");
          if (fs::exists(file)) {
            std::ifstream in(file);
            json j = json::parse(in, nullptr, false);
            if (!j.is_discarded()) {
              RunRecord prev = run_record_from_json(j);
              if (prev.config_hash == config_hash && prev.policy == policy.name()) {
                result.records[i] = std::move(prev);
                ok[i] = 1;
                resumed.fetch_add(1);
                continue;
              }
            }
          }
        }
        RunRecord rec = run_task(task, policy, cell.mode, config);
        if (!run_dir.empty()) {
          std::ofstream out(records_dir / (name + ".json"), std::ios::binary);
          if (!out) {
            throw std::runtime_error("cannot write record file: " +
                                     (records_dir / (name + ".json")).string());
          }
          out << run_record_to_json(rec).dump(2) << "\n";
        }
        result.records[i] = std::move(rec);
        ok[i] = 1;
        executed.fetch_add(1);
      } catch (const std::exception& e) {
        cell_errors[i] = e.what();
      }
    }
  };

  const int threads = std::max(1, config.concurrency);
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int i = 0; i < threads; ++i) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }

  // Aggregate per (policy, mode) in declaration order.
  std::vector<RunRecord> flat;
  for (size_t i = 0; i < cells.size(); ++i) {
    if (ok[i]) {
      flat.push_back(result.records[i]);
    } else {
      result.report.failures.push_back({tasks[cells[i].task_idx].id,
                                        policies[cells[i].policy_idx]->name(),
                                        cells[i].mode, cell_errors[i]});
    }
  }
  result.records = flat;
  for (size_t p = 0; p < policies.size(); ++p) {
    for (HistoryMode m : modes) {
      std::vector<RunRecord> group;
      for (const auto& r : result.records) {
        if (r.policy == policies[p]->name() && r.mode == m) group.push_back(r);
      }
      if (!group.empty()) {
        result.report.cells.push_back(evaluate_cell(tasks, group, eval_opts));
      }
    }
  }
  result.report.executed = executed.load();
  result.report.resumed = resumed.load();
  return result;
}

inline void write_run_manifest(const std::string& run_dir, const RunConfig& config,
                               const json& extra) {
  namespace fs = std::filesystem;
  fs::create_directories(run_dir);
  json j = extra;
  j["config_hash"] = config.hash();
  j["tool_version"] = std::string(kToolVersion);
  j["prompt_version"] = std::string(kPromptVersion);
  j["context_budget"] = config.context_budget;
  j["strategy"] = to_string(config.strategy);
  j["seed"] = config.seed;
  j["concurrency"] = config.concurrency;
  const auto now = std::chrono::system_clock::now().time_since_epoch();
  j["written_at_epoch_ms"] =
      std::chrono::duration_cast<std::chrono::milliseconds>(now).count();
  std::ofstream out(fs::path(run_dir) / "manifest.json", std::ios::binary);
  if (!out) throw std::runtime_error("cannot write run manifest in " + run_dir);
  out << j.dump(2) << "\n";
}

}  // namespace asmb
