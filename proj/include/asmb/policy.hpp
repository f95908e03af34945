#pragma once

#include <cmath>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "asmb/memory.hpp"
#include "asmb/prompts.hpp"
#include "asmb/run_record.hpp"

// The decision function: what a policy returns per step, the structured
// output parser that turns model text into validated decisions, and the
// deterministic scripted policies used for desk-scale experiments.

namespace asmb {

struct PolicyDecision {
  Action action;
  std::string summary_text;  // summary mode only
  std::optional<AnchorProposal> proposal;
};

// Parse failures are typed so the retry loop can report its cause: text
// with no JSON object at all, a schema violation (named field), or an
// action that fails validation.
struct DecisionError {
  enum class Category { NoJson, Schema, ActionInvalid };
  Category category = Category::NoJson;
  std::string message;
};

inline std::string_view to_string(DecisionError::Category c) {
  switch (c) {
    case DecisionError::Category::NoJson: return "no_json";
    case DecisionError::Category::Schema: return "schema_violation";
    case DecisionError::Category::ActionInvalid: return "action_invalid";
  }
  return "?";
}

struct ParsedDecision {
  std::optional<PolicyDecision> decision;
  std::optional<DecisionError> error;

  bool ok() const { return decision.has_value(); }
};

namespace detail {

/// Balanced-brace scan for candidate JSON objects, string- and
/// escape-aware. Returns each top-level {...} span in order of appearance.
inline std::vector<std::string> candidate_json_objects(std::string_view text) {
  std::vector<std::string> out;
  for (size_t i = 0; i < text.size(); ++i) {
    if (text[i] != '{') continue;
    int depth = 0;
    bool in_string = false;
    bool escaped = false;
    for (size_t j = i; j < text.size(); ++j) {
      const char c = text[j];
      if (in_string) {
        if (escaped) {
          escaped = false;
        } else if (c == '\\') {
          escaped = true;
        } else if (c == '"') {
          in_string = false;
        }
        continue;
      }
      if (c == '"') {
        in_string = true;
      } else if (c == '{') {
        ++depth;
      } else if (c == '}') {
        if (--depth == 0) {
          out.emplace_back(text.substr(i, j - i + 1));
          i = j;  // resume scanning after this object
          break;
        }
      }
    }
  }
  return out;
}

inline ParsedDecision schema_error(std::string msg) {
  ParsedDecision p;
  p.error = DecisionError{DecisionError::Category::Schema, std::move(msg)};
  return p;
}

/// Coerce a JSON scalar to an integer coordinate. Accepts integers,
/// round-valued floats, and digit strings.
inline std::optional<int> coerce_coord(const json& v) {
  if (v.is_number_integer()) return v.get<int>();
  if (v.is_number_float()) {
    const double d = v.get<double>();
    return static_cast<int>(std::llround(d));
  }
  if (v.is_string()) {
    const std::string s = trim(v.get<std::string>());
    if (s.empty()) return std::nullopt;
    size_t pos = 0;
    try {
      const int parsed = std::stoi(s, &pos);
      if (pos == s.size()) return parsed;
    } catch (...) {
    }
    return std::nullopt;
  }
  return std::nullopt;
}

inline std::string coerce_string(const json& v) {
  if (v.is_string()) return v.get<std::string>();
  if (v.is_number() || v.is_boolean()) return v.dump();
  return "";
}

}  // namespace detail

/// Extracts the first parseable JSON object from raw model text (leading
/// prose is ignored), validates it against the mode's schema, and returns
/// a fully validated decision. Unused numeric fields are normalized to 0
/// before action validation so the schema-closure invariant holds.
inline ParsedDecision parse_decision(const std::string& raw_text, HistoryMode mode) {
  json root;
  bool found = false;
  for (const std::string& cand : detail::candidate_json_objects(raw_text)) {
    json j = json::parse(cand, nullptr, false);
    if (!j.is_discarded() && j.is_object()) {
      root = std::move(j);
      found = true;
      break;
    }
  }
  if (!found) {
    ParsedDecision p;
    p.error = DecisionError{DecisionError::Category::NoJson,
                            "no JSON object found in response"};
    return p;
  }

  auto action_it = root.find("action");
  if (action_it == root.end() || !action_it->is_object()) {
    return detail::schema_error("missing object field: action");
  }
  const json& ja = *action_it;
  auto kind_it = ja.find("action");
  if (kind_it == ja.end() || !kind_it->is_string()) {
    return detail::schema_error("missing string field: action.action");
  }
  auto kind = action_kind_from(kind_it->get<std::string>());
  if (!kind) {
    return detail::schema_error("action kind not in action space: " +
                                kind_it->get<std::string>());
  }

  Action action;
  action.kind = *kind;
  struct CoordField {
    const char* key;
    int Action::* member;
  };
  const CoordField coords[] = {{"x", &Action::x},
                               {"y", &Action::y},
                               {"x_end", &Action::x_end},
                               {"y_end", &Action::y_end}};
  for (const auto& f : coords) {
    auto it = ja.find(f.key);
    if (it == ja.end() || it->is_null()) continue;
    auto v = detail::coerce_coord(*it);
    if (!v) {
      return detail::schema_error(std::string("field is not a coordinate: action.") +
                                  f.key);
    }
    action.*(f.member) = *v;
  }
  if (ja.contains("value") && !ja["value"].is_null()) {
    action.value = detail::coerce_string(ja["value"]);
  }
  if (action.kind == ActionKind::Swipe) {
    if (ja.contains("direction") && ja["direction"].is_string()) {
      auto d = swipe_direction_from(normalize_text(ja["direction"].get<std::string>()));
      if (!d) {
        return detail::schema_error("unknown value for action.direction: " +
                                    ja["direction"].get<std::string>());
      }
      action.direction = d;
    }
    if (ja.contains("distance") && ja["distance"].is_string()) {
      action.distance_hint =
          distance_hint_from(normalize_text(ja["distance"].get<std::string>()));
    }
  }

  // Normalize fields the action kind does not use.
  const bool uses_point = action.kind == ActionKind::Tap ||
                          action.kind == ActionKind::LongPress ||
                          action.kind == ActionKind::Swipe ||
                          action.kind == ActionKind::SwipeTwoPoints;
  if (!uses_point) {
    action.x = 0;
    action.y = 0;
  }
  if (action.kind != ActionKind::SwipeTwoPoints) {
    action.x_end = 0;
    action.y_end = 0;
  }
  if (action.kind != ActionKind::InputText && action.kind != ActionKind::OpenApp) {
    action.value.clear();
  }

  std::vector<std::string> violations = validate_action(action);
  if (!violations.empty()) {
    ParsedDecision p;
    p.error = DecisionError{DecisionError::Category::ActionInvalid, violations.front()};
    return p;
  }

  PolicyDecision decision;
  decision.action = std::move(action);

  if (mode == HistoryMode::Summary) {
    if (root.contains("summary_en") && root["summary_en"].is_string()) {
      decision.summary_text = root["summary_en"].get<std::string>();
    }
  }

  if (mode == HistoryMode::Asm) {
    const std::string content = root.contains("content_en")
                                    ? detail::coerce_string(root["content_en"])
                                    : "";
    const bool wants_invalidate =
        root.contains("invalidate") && root["invalidate"].is_string() &&
        !trim(root["invalidate"].get<std::string>()).empty();
    if (!trim(content).empty() || wants_invalidate) {
      AnchorProposal prop;
      if (!trim(content).empty()) {
        const std::string trimmed = trim(content);
        if (trimmed.front() != '[') {
          return detail::schema_error(
              "content_en must start with a bracketed anchor category");
        }
        const size_t close = trimmed.find(']');
        if (close == std::string::npos) {
          return detail::schema_error(
              "content_en must start with a bracketed anchor category");
        }
        auto type = anchor_type_from_tag(trimmed.substr(1, close - 1));
        if (!type) {
          return detail::schema_error("unknown anchor category in content_en: " +
                                      trimmed.substr(0, close + 1));
        }
        prop.type = *type;
        prop.content = trim(trimmed.substr(close + 1));
        if (prop.content.empty()) {
          return detail::schema_error("content_en has no content after category tag");
        }
      }
      if (root.contains("description_en")) {
        prop.description = detail::coerce_string(root["description_en"]);
      }
      if (root.contains("extracted_value")) {
        prop.extracted_value = detail::coerce_string(root["extracted_value"]);
      }
      if (root.contains("causal_link") && root["causal_link"].is_object()) {
        const json& jl = root["causal_link"];
        const std::string source =
            jl.contains("source") ? detail::coerce_string(jl["source"]) : "";
        const std::string relation =
            jl.contains("relation") ? detail::coerce_string(jl["relation"]) : "";
        if (!trim(source).empty() || !trim(relation).empty()) {
          auto rel = link_relation_from(normalize_text(relation));
          if (!rel) {
            return detail::schema_error("unknown causal_link.relation: " + relation);
          }
          if (trim(source).empty()) {
            return detail::schema_error("causal_link.source must name an anchor");
          }
          prop.causal_link = CausalLink{trim(source), *rel};
        }
      }
      if (wants_invalidate) {
        prop.invalidate = trim(root["invalidate"].get<std::string>());
      }
      decision.proposal = std::move(prop);
    }
  }

  ParsedDecision p;
  p.decision = std::move(decision);
  return p;
}

// ------------------------------------------------------------- policies

struct StepView {
  const Task* task = nullptr;
  int step_index = 0;
  const HistoryContext* context = nullptr;
  HistoryMode mode = HistoryMode::Raw;
};

struct PolicyResult {
  PolicyDecision decision;
  StepUsage usage;
  double wall_time_seconds = 0.0;
  std::vector<RunError> errors;
  // Verbatim request/response pairs for --trace; empty for scripted runs.
  std::vector<std::pair<std::string, std::string>> exchanges;
};

class Policy {
 public:
  virtual ~Policy() = default;
  virtual std::string name() const = 0;
  // Deterministic policies report zero wall time so runs are byte-stable.
  virtual bool deterministic() const { return true; }
  // Scripted policies do not write summaries; the runner builds one.
  virtual bool scripted_summary() const { return true; }
  virtual PolicyResult decide(const PromptBundle& bundle, const StepView& view) = 0;
};

namespace detail {

/// Translate a ground-truth anchor into the proposal a policy would emit
/// for it: link sources are named by content because bank ids are minted
/// independently of task annotation ids.
inline AnchorProposal proposal_from_gt(const Task& task, const Anchor& gt) {
  AnchorProposal p;
  p.type = gt.type;
  p.content = gt.content;
  p.description = gt.description;
  for (const auto& ev : gt.evidence) {
    if (!ev.extracted_value.empty()) {
      p.extracted_value = ev.extracted_value;
      break;
    }
  }
  if (!gt.links.empty()) {
    const CausalLink& l = gt.links.front();
    const Anchor* source = task.find_anchor(l.source_anchor_id);
    p.causal_link = CausalLink{source ? source->content : l.source_anchor_id,
                               l.relation};
  }
  return p;
}

inline StepUsage scripted_usage(const PromptBundle& bundle, const Action& action) {
  StepUsage u;
  u.prompt_tokens = bundle.token_estimate;
  u.completion_tokens = estimate_tokens(action_to_json(action).dump());
  u.estimated = true;
  return u;
}

}  // namespace detail

/// Replays the ground-truth action and anchor annotation at every step.
class OraclePolicy : public Policy {
 public:
  std::string name() const override { return "oracle"; }

  PolicyResult decide(const PromptBundle& bundle, const StepView& view) override {
    PolicyResult res;
    const Step& step = view.task->steps[view.step_index];
    res.decision.action = step.action;
    if (!step.gt_anchors.empty()) {
      res.decision.proposal =
          detail::proposal_from_gt(*view.task, step.gt_anchors.front());
    }
    res.usage = detail::scripted_usage(bundle, res.decision.action);
    return res;
  }
};

/// Knows every ground-truth action but can only recall *values* that are
/// visible in its context window: the last `window` raw steps, the running
/// summary text, or the retrieved anchors. Values it cannot see are typed
/// as "UNKNOWN", which makes the history representation the sole causal
/// factor in its failures.
class ForgetfulPolicy : public Policy {
 public:
  explicit ForgetfulPolicy(int window) : window_(window) {}

  std::string name() const override {
    return "forgetful:window=" + std::to_string(window_);
  }
  int window() const { return window_; }

  PolicyResult decide(const PromptBundle& bundle, const StepView& view) override {
    PolicyResult res;
    const Step& step = view.task->steps[view.step_index];
    res.decision.action = step.action;
    if (step.action.kind == ActionKind::InputText &&
        !value_visible(step.action.value, view)) {
      res.decision.action.value = "UNKNOWN";
    }
    if (!step.gt_anchors.empty()) {
      res.decision.proposal =
          detail::proposal_from_gt(*view.task, step.gt_anchors.front());
    }
    res.usage = detail::scripted_usage(bundle, res.decision.action);
    return res;
  }

 private:
  bool value_visible(const std::string& value, const StepView& view) const {
    if (contains_normalized(view.task->instruction, value)) return true;
    // The current screen is always visible regardless of history mode.
    for (const auto& e : view.task->steps[view.step_index].state.elements) {
      if (contains_normalized(e.text, value)) return true;
    }
    const HistoryContext& ctx = *view.context;
    switch (view.mode) {
      case HistoryMode::Raw: {
        const size_t n = ctx.step_lines.size();
        const size_t begin = n > static_cast<size_t>(window_)
                                 ? n - static_cast<size_t>(window_)
                                 : 0;
        for (size_t i = begin; i < n; ++i) {
          if (contains_normalized(ctx.step_lines[i].second, value)) return true;
        }
        return false;
      }
      case HistoryMode::Summary:
        return contains_normalized(ctx.rendered_text, value);
      case HistoryMode::Asm:
        for (const Anchor& a : ctx.anchors) {
          for (const auto& ev : a.evidence) {
            if (normalize_text(ev.extracted_value) == normalize_text(value)) {
              return true;
            }
          }
          if (contains_normalized(a.content, value)) return true;
        }
        return false;
    }
    return false;
  }

  int window_ = 5;
};

/// Running summary used for scripted policies: the last 5 step summaries
/// observed so far, oldest dropped first when over budget. Models write
/// their own summary_en instead.
inline std::string scripted_running_summary(const Task& task, int step_index,
                                            long budget) {
  std::vector<const std::string*> summaries;
  for (int i = 0; i < step_index && i < task.length(); ++i) {
    if (!task.steps[i].summary.empty()) summaries.push_back(&task.steps[i].summary);
  }
  const size_t keep = 5;
  size_t begin = summaries.size() > keep ? summaries.size() - keep : 0;
  while (begin < summaries.size()) {
    std::string joined;
    for (size_t i = begin; i < summaries.size(); ++i) {
      if (!joined.empty()) joined += "; ";
      joined += *summaries[i];
    }
    if (estimate_tokens(joined) <= budget) return joined;
    ++begin;  // drop the oldest until the text fits
  }
  return "";
}

}  // namespace asmb
