#pragma once

#include <algorithm>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "asmb/run_record.hpp"

// Step-level action matching (type / distance / direction / text
// similarity), anchor-predicate evaluation, and the task- and suite-level
// scores built on them.

namespace asmb {

// Tap tolerance: normalized Euclidean distance of 0.14, i.e. 140 units on
// the 0-1000 grid. Compared with squared integers so the boundary is exact
// and inclusive.
inline constexpr long kTapToleranceSq = 140L * 140L;

/// Normalized Levenshtein similarity: 1 - edit_distance / max(len).
/// Two empty strings score 1.
inline double anls(std::string_view a, std::string_view b) {
  const size_t n = a.size();
  const size_t m = b.size();
  if (n == 0 && m == 0) return 1.0;
  std::vector<size_t> prev(m + 1);
  std::vector<size_t> cur(m + 1);
  for (size_t jj = 0; jj <= m; ++jj) prev[jj] = jj;
  for (size_t i = 1; i <= n; ++i) {
    cur[0] = i;
    for (size_t jj = 1; jj <= m; ++jj) {
      const size_t sub = prev[jj - 1] + (a[i - 1] == b[jj - 1] ? 0 : 1);
      cur[jj] = std::min({prev[jj] + 1, cur[jj - 1] + 1, sub});
    }
    std::swap(prev, cur);
  }
  const double dist = static_cast<double>(prev[m]);
  return 1.0 - dist / static_cast<double>(std::max(n, m));
}

struct MatchOptions {
  // When set, text steps score binary: 1 if anls >= threshold else 0.
  // Unset means fractional ANLS credit.
  std::optional<double> text_threshold;
};

/// Per-step correctness in [0,1]. Kind mismatch scores 0 except for the
/// swipe / swipe_two_points pair, which is compared by direction.
inline double action_match(const Action& pred, const Action& gt,
                           const UiElement* gt_element = nullptr,
                           const MatchOptions& opts = {}) {
  const bool pred_swipe = pred.kind == ActionKind::Swipe ||
                          pred.kind == ActionKind::SwipeTwoPoints;
  const bool gt_swipe =
      gt.kind == ActionKind::Swipe || gt.kind == ActionKind::SwipeTwoPoints;
  if (pred_swipe && gt_swipe) {
    auto dp = effective_swipe_direction(pred);
    auto dg = effective_swipe_direction(gt);
    return (dp && dg && *dp == *dg) ? 1.0 : 0.0;
  }
  if (pred.kind != gt.kind) return 0.0;

  switch (gt.kind) {
    case ActionKind::Tap:
    case ActionKind::LongPress: {
      const long dx = pred.x - gt.x;
      const long dy = pred.y - gt.y;
      if (dx * dx + dy * dy <= kTapToleranceSq) return 1.0;
      if (gt_element && gt_element->bbox.contains(pred.x, pred.y)) return 1.0;
      return 0.0;
    }
    case ActionKind::InputText: {
      const double sim = anls(pred.value, gt.value);
      if (opts.text_threshold) return sim >= *opts.text_threshold ? 1.0 : 0.0;
      return sim;
    }
    case ActionKind::OpenApp: {
      return normalize_text(pred.value) == normalize_text(gt.value) ? 1.0 : 0.0;
    }
    default:
      // wait / capture_screen / home / back / finish: kind match suffices
      return 1.0;
  }
}

/// The annotated element containing the ground-truth tap point, if the
/// state carries element annotations; distance-only matching otherwise.
inline const UiElement* gt_target_element(const Step& step) {
  if (step.action.kind != ActionKind::Tap &&
      step.action.kind != ActionKind::LongPress) {
    return nullptr;
  }
  return step.state.element_at(step.action.x, step.action.y);
}

/// Action Matching Score of one run: 100 x mean per-step action_match.
inline double ams(const RunRecord& record, const Task& task,
                  const MatchOptions& opts = {}) {
  if (record.steps.size() != task.steps.size()) {
    throw std::invalid_argument("record does not cover all task steps: " +
                                record.task_id);
  }
  if (record.steps.empty()) throw std::invalid_argument("empty record");
  double sum = 0.0;
  for (size_t i = 0; i < record.steps.size(); ++i) {
    sum += action_match(record.steps[i].predicted, task.steps[i].action,
                        gt_target_element(task.steps[i]), opts);
  }
  return 100.0 * sum / static_cast<double>(record.steps.size());
}

// ------------------------------------------------------- anchor predicates

// Evaluation walks the predicted action sequence. A predicate yields the
// earliest step at which it holds, or nullopt. Errors (ranges outside the
// task, dangling anchor references) surface as EvalError so the task can be
// excluded from the TCR denominator instead of silently failing.

struct EvalError {
  std::string message;
};

namespace detail {

struct PredicateEvaluator {
  const Task& task;
  const std::vector<Action>& predicted;
  // anchor id -> memoized satisfaction step (nullopt = unsatisfied)
  std::unordered_map<std::string, std::optional<int>> memo;
  std::unordered_set<std::string> in_progress;
  std::optional<EvalError> error;

  std::optional<int> satisfaction_step(const Anchor& anchor) {
    if (error) return std::nullopt;
    auto it = memo.find(anchor.id);
    if (it != memo.end()) return it->second;
    if (!in_progress.insert(anchor.id).second) {
      error = EvalError{"ordered_after cycle through anchor " + anchor.id};
      return std::nullopt;
    }
    std::optional<int> result = evaluate(anchor);
    in_progress.erase(anchor.id);
    memo[anchor.id] = result;
    return result;
  }

  std::optional<int> evaluate(const Anchor& anchor) {
    if (!anchor.predicate) {
      error = EvalError{"anchor " + anchor.id + " has no predicate"};
      return std::nullopt;
    }
    const AnchorPredicate& p = *anchor.predicate;
    const int n = static_cast<int>(predicted.size());
    if (p.step_lo < 0 || p.step_hi >= n || p.step_lo > p.step_hi) {
      error = EvalError{"anchor " + anchor.id + ": predicate step range [" +
                        std::to_string(p.step_lo) + "," + std::to_string(p.step_hi) +
                        "] outside run of " + std::to_string(n) + " steps"};
      return std::nullopt;
    }
    switch (p.kind) {
      case PredicateKind::ActionKindAtStepRange:
        for (int s = p.step_lo; s <= p.step_hi; ++s) {
          if (predicted[s].kind == p.action_kind) return s;
        }
        return std::nullopt;
      case PredicateKind::ValueContains:
        for (int s = p.step_lo; s <= p.step_hi; ++s) {
          if (!predicted[s].value.empty() &&
              contains_normalized(predicted[s].value, p.text)) {
            return s;
          }
        }
        return std::nullopt;
      case PredicateKind::ValueEqualsEvidence: {
        const EvidenceRef* ev = nullptr;
        for (const auto& e : anchor.evidence) {
          if (e.step_index == p.evidence_step) ev = &e;
        }
        if (!ev || ev->extracted_value.empty()) {
          error = EvalError{"anchor " + anchor.id +
                            ": no extracted evidence at step " +
                            std::to_string(p.evidence_step)};
          return std::nullopt;
        }
        for (int s = p.step_lo; s <= p.step_hi; ++s) {
          if (normalize_text(predicted[s].value) ==
              normalize_text(ev->extracted_value)) {
            return s;
          }
        }
        return std::nullopt;
      }
      case PredicateKind::ReachesStepWithApp:
        for (int s = p.step_lo; s <= p.step_hi; ++s) {
          if (predicted[s].kind == ActionKind::OpenApp &&
              normalize_text(predicted[s].value) == normalize_text(p.app)) {
            return s;
          }
        }
        return std::nullopt;
      case PredicateKind::OrderedAfter: {
        const Anchor* ref = task.find_anchor(p.anchor_id);
        if (!ref) {
          error = EvalError{"anchor " + anchor.id +
                            ": ordered_after references unknown anchor " + p.anchor_id};
          return std::nullopt;
        }
        std::optional<int> ref_step = satisfaction_step(*ref);
        if (error) return std::nullopt;
        if (!ref_step) return std::nullopt;
        for (int s = p.step_lo; s <= p.step_hi; ++s) {
          if (predicted[s].kind == p.action_kind) {
            return s > *ref_step ? std::optional<int>(s) : std::nullopt;
          }
        }
        return std::nullopt;
      }
    }
    return std::nullopt;
  }
};

inline std::vector<Action> predicted_actions(const RunRecord& record) {
  std::vector<Action> out;
  out.reserve(record.steps.size());
  for (const auto& s : record.steps) out.push_back(s.predicted);
  return out;
}

}  // namespace detail

/// Whether one ground-truth anchor's predicate is satisfied by the
/// predicted trajectory of a run.
inline bool check_anchor(const Anchor& anchor, const Task& task,
                         const RunRecord& record) {
  std::vector<Action> predicted = detail::predicted_actions(record);
  detail::PredicateEvaluator ev{task, predicted};
  std::optional<int> sat = ev.satisfaction_step(anchor);
  if (ev.error) throw std::invalid_argument(ev.error->message);
  return sat.has_value();
}

enum class TcrScope {
  FinishClosure,  // FINISH plus its prerequisite/result_of/enables closure
  AllAnchors,     // every annotated anchor must hold
};

/// Anchor ids reachable from the FINISH anchor via prerequisite, result_of
/// and enables links (blocks edges are not followed), FINISH included.
inline std::vector<std::string> finish_closure(const Task& task) {
  std::vector<std::string> order;
  if (task.final_anchor_id.empty()) return order;
  std::unordered_set<std::string> seen;
  std::vector<std::string> stack{task.final_anchor_id};
  while (!stack.empty()) {
    std::string id = stack.back();
    stack.pop_back();
    if (!seen.insert(id).second) continue;
    order.push_back(id);
    const Anchor* a = task.find_anchor(id);
    if (!a) continue;
    for (const auto& link : a->links) {
      if (link.relation == LinkRelation::Blocks) continue;
      stack.push_back(link.source_anchor_id);
    }
  }
  std::sort(order.begin(), order.end(), [&](const auto& x, const auto& y) {
    return task.anchor_step(x) < task.anchor_step(y);
  });
  return order;
}

struct AnchorCheck {
  std::string anchor_id;
  bool satisfied = false;
  std::optional<int> satisfied_at;
};

struct TaskOutcome {
  std::string task_id;
  bool evaluable = false;
  bool success = false;
  std::vector<AnchorCheck> checks;
  std::string exclusion_reason;  // set when not evaluable
};

/// Task-level success: the FINISH predicate and every predicate in scope
/// must hold over the predicted action sequence. Tasks whose anchors lack
/// predicates, or whose predicates are malformed, are excluded rather than
/// counted as failures.
inline TaskOutcome evaluate_task(const Task& task, const RunRecord& record,
                                 TcrScope scope = TcrScope::FinishClosure) {
  TaskOutcome out;
  out.task_id = task.id;
  if (task.final_anchor_id.empty() || !task.find_anchor(task.final_anchor_id)) {
    out.exclusion_reason = "no FINISH anchor annotated";
    return out;
  }
  if (record.steps.size() != task.steps.size()) {
    out.exclusion_reason = "record does not cover all task steps";
    return out;
  }

  std::vector<std::string> scope_ids;
  if (scope == TcrScope::FinishClosure) {
    scope_ids = finish_closure(task);
  } else {
    for (const Anchor* a : task.all_anchors()) scope_ids.push_back(a->id);
  }
  for (const auto& id : scope_ids) {
    const Anchor* a = task.find_anchor(id);
    if (!a || !a->predicate) {
      out.exclusion_reason = "anchor without predicate: " + id;
      return out;
    }
  }

  std::vector<Action> predicted = detail::predicted_actions(record);
  detail::PredicateEvaluator ev{task, predicted};
  bool all_ok = true;
  for (const auto& id : scope_ids) {
    const Anchor* a = task.find_anchor(id);
    std::optional<int> sat = ev.satisfaction_step(*a);
    if (ev.error) {
      out.checks.clear();
      out.exclusion_reason = "evaluation_error: " + ev.error->message;
      return out;
    }
    out.checks.push_back({id, sat.has_value(), sat});
    if (!sat) all_ok = false;
  }
  out.evaluable = true;
  out.success = all_ok;
  return out;
}

// ------------------------------------------------------------- aggregation

struct Efficiency {
  double avg_tokens = 0.0;
  double avg_time_seconds = 0.0;
  double estimated_fraction = 0.0;
};

/// Arithmetic means over all steps of all records.
inline Efficiency efficiency(const std::vector<RunRecord>& records) {
  long steps = 0;
  double tokens = 0.0;
  double time_s = 0.0;
  long estimated = 0;
  for (const auto& r : records) {
    for (const auto& s : r.steps) {
      ++steps;
      tokens += static_cast<double>(s.usage.total());
      time_s += s.wall_time_seconds;
      if (s.usage.estimated) ++estimated;
    }
  }
  if (steps == 0) throw std::invalid_argument("no steps");
  Efficiency e;
  e.avg_tokens = tokens / static_cast<double>(steps);
  e.avg_time_seconds = time_s / static_cast<double>(steps);
  e.estimated_fraction = static_cast<double>(estimated) / static_cast<double>(steps);
  return e;
}

struct GroupMetrics {
  double ams = 0.0;        // micro-averaged over steps, percent
  double tcr = 0.0;        // over evaluable tasks, percent
  int tasks = 0;
  int evaluable = 0;
  int successes = 0;
  long steps = 0;
  double match_sum = 0.0;  // raw per-step score sum behind `ams`

  void finish() {
    ams = steps > 0 ? 100.0 * match_sum / static_cast<double>(steps) : 0.0;
    tcr = evaluable > 0 ? 100.0 * successes / static_cast<double>(evaluable) : 0.0;
  }
};

struct MetricReport {
  std::string policy;
  HistoryMode mode = HistoryMode::Raw;
  GroupMetrics overall;
  double avg_tokens = 0.0;
  double avg_time_seconds = 0.0;
  double estimated_fraction = 0.0;
  double avg_context_tokens = 0.0;
  std::map<std::string, GroupMetrics> per_intent;
  std::map<int, GroupMetrics> per_bucket;  // key: bucket low bound (10-step)
  std::vector<TaskOutcome> task_outcomes;
  std::vector<std::string> excluded_tasks;  // id: reason
  std::vector<std::string> missing_tasks;   // suite tasks without a record
};

struct EvalOptions {
  TcrScope scope = TcrScope::FinishClosure;
  MatchOptions match;
};

inline int length_bucket(int length) { return (length / 10) * 10; }

/// Scores one (policy, mode) cell: a set of records against their tasks.
inline MetricReport evaluate_cell(
    const std::vector<Task>& tasks, const std::vector<RunRecord>& records,
    const EvalOptions& opts = {}) {
  MetricReport rep;
  std::unordered_map<std::string, const RunRecord*> by_task;
  for (const auto& r : records) by_task[r.task_id] = &r;
  if (!records.empty()) {
    rep.policy = records.front().policy;
    rep.mode = records.front().mode;
  }

  long context_steps = 0;
  double context_tokens = 0.0;
  std::vector<RunRecord> matched;
  for (const auto& task : tasks) {
    auto it = by_task.find(task.id);
    if (it == by_task.end()) {
      rep.missing_tasks.push_back(task.id);
      continue;
    }
    const RunRecord& rec = *it->second;
    matched.push_back(rec);

    GroupMetrics& intent_g = rep.per_intent[std::string(to_string(task.intent))];
    GroupMetrics& bucket_g = rep.per_bucket[length_bucket(task.length())];
    for (GroupMetrics* g : {&rep.overall, &intent_g, &bucket_g}) {
      g->tasks += 1;
    }
    if (rec.steps.size() == task.steps.size()) {
      for (size_t i = 0; i < rec.steps.size(); ++i) {
        const double score =
            action_match(rec.steps[i].predicted, task.steps[i].action,
                         gt_target_element(task.steps[i]), opts.match);
        for (GroupMetrics* g : {&rep.overall, &intent_g, &bucket_g}) {
          g->steps += 1;
          g->match_sum += score;
        }
        ++context_steps;
        context_tokens += static_cast<double>(rec.steps[i].context_tokens);
      }
    }

    TaskOutcome outcome = evaluate_task(task, rec, opts.scope);
    if (outcome.evaluable) {
      for (GroupMetrics* g : {&rep.overall, &intent_g, &bucket_g}) {
        g->evaluable += 1;
        if (outcome.success) g->successes += 1;
      }
    } else {
      rep.excluded_tasks.push_back(task.id + ": " + outcome.exclusion_reason);
    }
    rep.task_outcomes.push_back(std::move(outcome));
  }

  rep.overall.finish();
  for (auto& [k, g] : rep.per_intent) g.finish();
  for (auto& [k, g] : rep.per_bucket) g.finish();
  if (!matched.empty()) {
    bool any_steps = false;
    for (const auto& r : matched) any_steps = any_steps || !r.steps.empty();
    if (any_steps) {
      Efficiency e = efficiency(matched);
      rep.avg_tokens = e.avg_tokens;
      rep.avg_time_seconds = e.avg_time_seconds;
      rep.estimated_fraction = e.estimated_fraction;
    }
  }
  if (context_steps > 0) {
    rep.avg_context_tokens = context_tokens / static_cast<double>(context_steps);
  }
  return rep;
}

// ------------------------------------------------------------- rendering

inline json group_to_json(const GroupMetrics& g) {
  return json{{"ams", g.ams},       {"tcr", g.tcr},
              {"tasks", g.tasks},   {"evaluable", g.evaluable},
              {"successes", g.successes}, {"steps", g.steps}};
}

inline json report_to_json(const MetricReport& r) {
  json j;
  j["policy"] = r.policy;
  j["mode"] = std::string(to_string(r.mode));
  j["ams"] = r.overall.ams;
  j["tcr"] = r.overall.tcr;
  j["avg_tokens"] = r.avg_tokens;
  j["avg_time_seconds"] = r.avg_time_seconds;
  j["estimated_fraction"] = r.estimated_fraction;
  j["avg_context_tokens"] = r.avg_context_tokens;
  j["tasks"] = r.overall.tasks;
  j["evaluable_tasks"] = r.overall.evaluable;
  json intents = json::object();
  for (const auto& [k, g] : r.per_intent) intents[k] = group_to_json(g);
  j["per_intent"] = intents;
  json buckets = json::object();
  for (const auto& [k, g] : r.per_bucket) {
    buckets[std::to_string(k) + "-" + std::to_string(k + 9)] = group_to_json(g);
  }
  j["per_bucket"] = buckets;
  json outcomes = json::array();
  for (const auto& o : r.task_outcomes) {
    json jo;
    jo["task_id"] = o.task_id;
    jo["evaluable"] = o.evaluable;
    jo["success"] = o.success;
    if (!o.exclusion_reason.empty()) jo["exclusion_reason"] = o.exclusion_reason;
    json checks = json::array();
    for (const auto& c : o.checks) {
      json jc;
      jc["anchor_id"] = c.anchor_id;
      jc["satisfied"] = c.satisfied;
      if (c.satisfied_at) jc["satisfied_at"] = *c.satisfied_at;
      checks.push_back(jc);
    }
    jo["anchors"] = checks;
    outcomes.push_back(jo);
  }
  j["task_outcomes"] = outcomes;
  j["excluded_tasks"] = r.excluded_tasks;
  j["missing_tasks"] = r.missing_tasks;
  return j;
}

inline std::string format_fixed(double v, int decimals = 2) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f", decimals, v);
  return std::string(buf);
}

/// Side-by-side table over cells, one row per (policy, mode).
inline std::string render_comparison_table(const std::vector<MetricReport>& reports) {
  std::ostringstream os;
  os << "policy            mode      AMS      TCR      AvgTok    AvgTime   tasks\n";
  os << "----------------- -------- -------- -------- --------- --------- -----\n";
  for (const auto& r : reports) {
    char line[256];
    std::snprintf(line, sizeof(line), "%-17s %-8s %8.2f %8.2f %9.1f %9.3f %5d\n",
                  r.policy.c_str(), std::string(to_string(r.mode)).c_str(),
                  r.overall.ams, r.overall.tcr, r.avg_tokens, r.avg_time_seconds,
                  r.overall.tasks);
    os << line;
  }
  return os.str();
}

/// Per-length-bucket CSV across cells (one row per bucket per cell),
/// intended for plotting degradation curves.
inline std::string render_bucket_csv(const std::vector<MetricReport>& reports) {
  std::ostringstream os;
  os << "policy,mode,bucket_lo,bucket_hi,ams,tcr,tasks,steps\n";
  for (const auto& r : reports) {
    for (const auto& [lo, g] : r.per_bucket) {
      os << r.policy << "," << to_string(r.mode) << "," << lo << "," << (lo + 9)
         << "," << format_fixed(g.ams, 4) << "," << format_fixed(g.tcr, 4) << ","
         << g.tasks << "," << g.steps << "\n";
    }
  }
  return os.str();
}

}  // namespace asmb
