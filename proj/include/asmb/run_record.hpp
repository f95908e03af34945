#pragma once

#include <string>
#include <vector>

#include "asmb/serialize.hpp"

// Per-run artifacts: one RunRecord per (task, policy, mode) cell, holding
// the per-step predictions, token/latency accounting, proposal outcomes,
// and the final memory bank snapshot for asm runs.

namespace asmb {

struct StepUsage {
  long prompt_tokens = 0;
  long completion_tokens = 0;
  bool estimated = false;  // true when the fallback estimator filled counts

  long total() const { return prompt_tokens + completion_tokens; }
};

struct RunError {
  int step_index = -1;
  std::string kind;  // proposal_error | decision_failure | transport_failure |
                     // parse_retry | summary_carry_forward
  std::string message;
};

struct StepRecord {
  int step_index = 0;
  Action predicted;
  Action gt;
  long context_tokens = 0;  // token estimate of the rendered history block
  StepUsage usage;
  double wall_time_seconds = 0.0;
  std::string proposal_outcome = "none";  // none | accepted | duplicate |
                                          // rejected | invalidated
};

struct RunRecord {
  std::string task_id;
  HistoryMode mode = HistoryMode::Raw;
  std::string policy;
  std::string config_hash;
  std::vector<StepRecord> steps;
  std::vector<Anchor> final_bank;  // asm mode only
  std::vector<RunError> errors;
  double total_wall_seconds = 0.0;
};

inline json run_record_to_json(const RunRecord& r) {
  json j;
  j["task_id"] = r.task_id;
  j["mode"] = std::string(to_string(r.mode));
  j["policy"] = r.policy;
  j["config_hash"] = r.config_hash;
  json steps = json::array();
  for (const auto& s : r.steps) {
    json js;
    js["step_index"] = s.step_index;
    js["predicted"] = action_to_json(s.predicted);
    js["gt"] = action_to_json(s.gt);
    js["context_tokens"] = s.context_tokens;
    js["usage"] = {{"prompt_tokens", s.usage.prompt_tokens},
                   {"completion_tokens", s.usage.completion_tokens},
                   {"estimated", s.usage.estimated}};
    js["wall_time_seconds"] = s.wall_time_seconds;
    js["proposal_outcome"] = s.proposal_outcome;
    steps.push_back(js);
  }
  j["steps"] = steps;
  if (!r.final_bank.empty()) {
    json bank = json::array();
    for (const auto& a : r.final_bank) bank.push_back(anchor_to_json(a));
    j["final_bank"] = bank;
  }
  json errors = json::array();
  for (const auto& e : r.errors) {
    errors.push_back({{"step_index", e.step_index},
                      {"kind", e.kind},
                      {"message", e.message}});
  }
  j["errors"] = errors;
  j["total_wall_seconds"] = r.total_wall_seconds;
  return j;
}

inline RunRecord run_record_from_json(const json& j) {
  RunRecord r;
  r.task_id = detail::require_string(j, "task_id");
  auto m = history_mode_from(detail::require_string(j, "mode"));
  if (!m) throw ParseError("unknown history mode in run record");
  r.mode = *m;
  r.policy = detail::require_string(j, "policy");
  r.config_hash = detail::optional_string(j, "config_hash");
  for (const auto& js : detail::require_field(j, "steps")) {
    StepRecord s;
    s.step_index = detail::require_int(js, "step_index");
    s.predicted = action_from_json(detail::require_field(js, "predicted"));
    s.gt = action_from_json(detail::require_field(js, "gt"));
    s.context_tokens = detail::require_field(js, "context_tokens").get<long>();
    const json& ju = detail::require_field(js, "usage");
    s.usage.prompt_tokens = detail::require_field(ju, "prompt_tokens").get<long>();
    s.usage.completion_tokens = detail::require_field(ju, "completion_tokens").get<long>();
    s.usage.estimated = ju.value("estimated", false);
    s.wall_time_seconds = detail::require_field(js, "wall_time_seconds").get<double>();
    s.proposal_outcome = detail::optional_string(js, "proposal_outcome");
    r.steps.push_back(std::move(s));
  }
  if (j.contains("final_bank")) {
    for (const auto& ja : j["final_bank"]) r.final_bank.push_back(anchor_from_json(ja));
  }
  if (j.contains("errors")) {
    for (const auto& je : j["errors"]) {
      RunError e;
      e.step_index = detail::require_int(je, "step_index");
      e.kind = detail::require_string(je, "kind");
      e.message = detail::optional_string(je, "message");
      r.errors.push_back(std::move(e));
    }
  }
  r.total_wall_seconds = j.value("total_wall_seconds", 0.0);
  return r;
}

}  // namespace asmb
