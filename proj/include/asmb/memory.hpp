#pragma once

#include <algorithm>
#include <optional>
#include <sstream>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "asmb/domain.hpp"
#include "asmb/tokens.hpp"

// The three history representations handed to a policy: the raw step
// trace, a single running summary, and the anchored state memory — an
// insertion-ordered bank of anchors whose causal links form a DAG by
// construction (links only ever point backward).

namespace asmb {

// What a policy asks the bank to do after a step. Link and invalidate
// targets may name a bank anchor id or (normalized) anchor content.
struct AnchorProposal {
  AnchorType type = AnchorType::Subgoal;
  std::string content;
  std::string description;
  std::string extracted_value;  // value read off the current screen, if any
  std::optional<CausalLink> causal_link;
  std::string invalidate;  // anchor to mark invalidated, empty for none
};

struct RetrievalStrategy {
  enum class Kind { AllActive, RecencyTopK, LinkClosure };
  Kind kind = Kind::AllActive;
  int k = 5;  // RecencyTopK only

  static RetrievalStrategy all_active() { return {}; }
  static RetrievalStrategy recency_top_k(int k) {
    return {Kind::RecencyTopK, k};
  }
  static RetrievalStrategy link_closure() { return {Kind::LinkClosure, 0}; }
};

inline std::string to_string(const RetrievalStrategy& s) {
  switch (s.kind) {
    case RetrievalStrategy::Kind::AllActive: return "all_active";
    case RetrievalStrategy::Kind::RecencyTopK:
      return "recency_top_k(" + std::to_string(s.k) + ")";
    case RetrievalStrategy::Kind::LinkClosure: return "link_closure";
  }
  return "?";
}

class MemoryBank {
 public:
  explicit MemoryBank(std::string task_id = "") : task_id_(std::move(task_id)) {}

  const std::string& task_id() const { return task_id_; }
  int cursor() const { return cursor_; }
  const std::vector<Anchor>& anchors() const { return anchors_; }

  const Anchor* find(std::string_view id) const {
    auto it = index_.find(std::string(id));
    return it == index_.end() ? nullptr : &anchors_[it->second];
  }

  /// Resolves a proposal's link/invalidate target: exact id first, then
  /// normalized content match (newest wins).
  const Anchor* resolve(std::string_view ref) const {
    if (const Anchor* a = find(ref)) return a;
    const std::string norm = normalize_text(ref);
    if (norm.empty()) return nullptr;
    for (auto it = anchors_.rbegin(); it != anchors_.rend(); ++it) {
      if (normalize_text(it->content) == norm) return &*it;
    }
    return nullptr;
  }

  std::vector<const Anchor*> active() const {
    std::vector<const Anchor*> out;
    for (const auto& a : anchors_) {
      if (a.status == AnchorStatus::Active) out.push_back(&a);
    }
    return out;
  }

  bool has_active_finish() const {
    for (const auto& a : anchors_) {
      if (a.type == AnchorType::Finish && a.status == AnchorStatus::Active) return true;
    }
    return false;
  }

  struct UpdateResult {
    // none | accepted | duplicate | rejected | invalidated
    std::string outcome = "none";
    std::string anchor_id;  // id of the inserted anchor when accepted
    std::string error;      // human-readable cause when rejected
  };

  /// Advances the cursor and applies at most one proposal. Duplicate
  /// content of an active anchor is dropped; a result_of link supersedes
  /// its source; an invalidate request retires the named anchor. Proposals
  /// naming unknown anchors are rejected and leave the bank unchanged
  /// (except the cursor).
  UpdateResult update(const UiState& state, const Action& /*acted*/,
                      const std::optional<AnchorProposal>& proposal) {
    cursor_ = std::max(cursor_, state.step_index);
    UpdateResult res;
    if (!proposal) return res;

    // Resolve targets to ids up front: insertion below may reallocate the
    // anchor storage behind the pointers resolve() hands out.
    std::string link_target_id;
    if (proposal->causal_link) {
      const Anchor* t = resolve(proposal->causal_link->source_anchor_id);
      if (!t) {
        res.outcome = "rejected";
        res.error = "causal link names unknown anchor: " +
                    proposal->causal_link->source_anchor_id;
        return res;
      }
      link_target_id = t->id;
    }
    std::string invalidate_id;
    if (!proposal->invalidate.empty()) {
      const Anchor* t = resolve(proposal->invalidate);
      if (!t) {
        res.outcome = "rejected";
        res.error = "invalidate names unknown anchor: " + proposal->invalidate;
        return res;
      }
      invalidate_id = t->id;
    }

    bool inserted = false;
    if (!trim(proposal->content).empty()) {
      const std::string key = dedup_key(proposal->type, proposal->content);
      auto dup = dedup_.find(key);
      if (dup != dedup_.end() &&
          anchors_[index_.at(dup->second)].status == AnchorStatus::Active) {
        res.outcome = "duplicate";
        res.anchor_id = dup->second;
        return res;
      }
      Anchor a;
      a.id = "m" + std::to_string(anchors_.size() + 1);
      a.type = proposal->type;
      a.content = trim(proposal->content);
      a.description = proposal->description;
      EvidenceRef ev;
      ev.step_index = state.step_index;
      ev.extracted_value = proposal->extracted_value;
      a.evidence.push_back(ev);
      if (!link_target_id.empty()) {
        a.links.push_back({link_target_id, proposal->causal_link->relation});
      }
      // One active FINISH at most: a new FINISH supersedes an older one.
      if (a.type == AnchorType::Finish) {
        for (auto& old : anchors_) {
          if (old.type == AnchorType::Finish && old.status == AnchorStatus::Active) {
            retire(old.id, AnchorStatus::Superseded);
          }
        }
      }
      index_[a.id] = anchors_.size();
      dedup_[key] = a.id;
      res.outcome = "accepted";
      res.anchor_id = a.id;
      anchors_.push_back(std::move(a));
      inserted = true;

      if (!link_target_id.empty() &&
          proposal->causal_link->relation == LinkRelation::ResultOf) {
        retire(link_target_id, AnchorStatus::Superseded);
      }
    }

    if (!invalidate_id.empty()) {
      retire(invalidate_id, AnchorStatus::Invalidated);
      if (!inserted) res.outcome = "invalidated";
    }
    return res;
  }

  /// Topological-sort check over the link graph; the bank keeps this true
  /// by only ever linking to already-present anchors.
  bool acyclic() const {
    std::unordered_map<std::string, int> indegree;
    std::unordered_map<std::string, std::vector<std::string>> out_edges;
    for (const auto& a : anchors_) indegree[a.id] = 0;
    for (const auto& a : anchors_) {
      for (const auto& l : a.links) {
        if (!index_.count(l.source_anchor_id)) return false;
        out_edges[l.source_anchor_id].push_back(a.id);
        indegree[a.id] += 1;
      }
    }
    std::vector<std::string> queue;
    for (const auto& [id, d] : indegree) {
      if (d == 0) queue.push_back(id);
    }
    size_t visited = 0;
    while (!queue.empty()) {
      std::string id = queue.back();
      queue.pop_back();
      ++visited;
      for (const auto& next : out_edges[id]) {
        if (--indegree[next] == 0) queue.push_back(next);
      }
    }
    return visited == anchors_.size();
  }

 private:
  static std::string dedup_key(AnchorType t, std::string_view content) {
    return std::string(to_string(t)) + "\x1f" + normalize_text(content);
  }

  void retire(const std::string& id, AnchorStatus to) {
    auto it = index_.find(id);
    if (it == index_.end()) return;
    Anchor& a = anchors_[it->second];
    // Status moves one way out of Active and then never changes again.
    if (a.status == AnchorStatus::Active) a.status = to;
  }

  std::string task_id_;
  std::vector<Anchor> anchors_;                       // insertion order
  std::unordered_map<std::string, size_t> index_;     // id -> position
  std::unordered_map<std::string, std::string> dedup_;  // (type,content) -> id
  int cursor_ = -1;
};

namespace detail {

inline std::vector<std::string> tokenize_normalized(std::string_view text) {
  std::istringstream in(normalize_text(text));
  std::vector<std::string> out;
  std::string tok;
  while (in >> tok) out.push_back(tok);
  return out;
}

}  // namespace detail

/// Retrieval of Eq.-style "relevant subset": always a subset of the bank's
/// active anchors, in insertion order for all_active and recency_top_k; the
/// link_closure strategy lists seed matches first, then the anchors reached
/// through their prerequisite/enables sources.
inline std::vector<Anchor> retrieve(const MemoryBank& bank, const UiState& state,
                                    const std::string& instruction,
                                    const RetrievalStrategy& strategy) {
  std::vector<const Anchor*> active = bank.active();
  std::vector<Anchor> out;
  switch (strategy.kind) {
    case RetrievalStrategy::Kind::AllActive:
      for (const Anchor* a : active) out.push_back(*a);
      return out;
    case RetrievalStrategy::Kind::RecencyTopK: {
      const int k = std::max(1, strategy.k);
      size_t begin = active.size() > static_cast<size_t>(k)
                         ? active.size() - static_cast<size_t>(k)
                         : 0;
      for (size_t i = begin; i < active.size(); ++i) out.push_back(*active[i]);
      return out;
    }
    case RetrievalStrategy::Kind::LinkClosure: {
      std::unordered_set<std::string> seed_tokens;
      for (auto& t : detail::tokenize_normalized(instruction)) seed_tokens.insert(t);
      for (auto& t : detail::tokenize_normalized(state.app)) seed_tokens.insert(t);

      std::vector<std::string> order;
      std::unordered_set<std::string> seen;
      std::vector<std::string> frontier;
      for (const Anchor* a : active) {
        bool hit = false;
        for (auto& t : detail::tokenize_normalized(a->content)) {
          if (seed_tokens.count(t)) {
            hit = true;
            break;
          }
        }
        if (hit && seen.insert(a->id).second) {
          order.push_back(a->id);
          frontier.push_back(a->id);
        }
      }
      // Follow prerequisite/enables edges backward; inactive anchors are
      // traversed but never emitted.
      while (!frontier.empty()) {
        std::string id = frontier.front();
        frontier.erase(frontier.begin());
        const Anchor* a = bank.find(id);
        if (!a) continue;
        for (const auto& l : a->links) {
          if (l.relation != LinkRelation::Prerequisite &&
              l.relation != LinkRelation::Enables) {
            continue;
          }
          if (seen.insert(l.source_anchor_id).second) {
            order.push_back(l.source_anchor_id);
            frontier.push_back(l.source_anchor_id);
          }
        }
      }
      for (const auto& id : order) {
        const Anchor* a = bank.find(id);
        if (a && a->status == AnchorStatus::Active) out.push_back(*a);
      }
      return out;
    }
  }
  return out;
}

struct HistoryContext {
  HistoryMode mode = HistoryMode::Raw;
  std::string rendered_text;
  long token_estimate = 0;
  // Raw mode: the individual (step, line) entries that survived the budget.
  std::vector<std::pair<int, std::string>> step_lines;
  // Asm mode: the anchors that survived the budget, oldest first.
  std::vector<Anchor> anchors;
};

inline std::string action_brief(const Action& a) {
  switch (a.kind) {
    case ActionKind::Tap:
    case ActionKind::LongPress:
      return std::string(to_string(a.kind)) + "(" + std::to_string(a.x) + "," +
             std::to_string(a.y) + ")";
    case ActionKind::Swipe:
      return "swipe(" + std::string(a.direction ? to_string(*a.direction) : "?") + ")";
    case ActionKind::SwipeTwoPoints:
      return "swipe_two_points(" + std::to_string(a.x) + "," + std::to_string(a.y) +
             "->" + std::to_string(a.x_end) + "," + std::to_string(a.y_end) + ")";
    case ActionKind::InputText:
      return "input_text(\"" + a.value + "\")";
    case ActionKind::OpenApp:
      return "open_app(\"" + a.value + "\")";
    default:
      return std::string(to_string(a.kind));
  }
}

/// Compact one-line digest of a past step for raw history rendering.
inline std::string raw_step_line(const Step& step) {
  std::ostringstream os;
  os << "step " << step.state.step_index << " [" << step.state.app << "]";
  if (!step.state.elements.empty()) {
    os << " screen:";
    bool first = true;
    for (const auto& e : step.state.elements) {
      if (e.text.empty()) continue;
      os << (first ? " " : " | ") << e.text;
      first = false;
    }
  }
  os << " -> " << action_brief(step.action);
  return os.str();
}

/// Raw trace: the most recent (state digest, action) pairs that fit the
/// budget, oldest dropped first.
inline HistoryContext render_raw_context(const std::vector<Step>& steps_so_far,
                                         long budget) {
  HistoryContext ctx;
  ctx.mode = HistoryMode::Raw;
  std::vector<std::pair<int, std::string>> lines;
  long total = 0;
  for (auto it = steps_so_far.rbegin(); it != steps_so_far.rend(); ++it) {
    std::string line = raw_step_line(*it);
    long est = estimate_tokens(line);
    if (!lines.empty() && total + est > budget) break;
    if (lines.empty() && est > budget) break;  // not even one step fits
    total += est;
    lines.emplace_back(it->state.step_index, std::move(line));
  }
  std::reverse(lines.begin(), lines.end());
  std::ostringstream os;
  for (const auto& [idx, line] : lines) os << line << "\n";
  ctx.step_lines = std::move(lines);
  ctx.rendered_text = os.str();
  ctx.token_estimate = estimate_tokens(ctx.rendered_text);
  return ctx;
}

/// Coarse summary: the single running summary, passed through unchanged.
inline HistoryContext render_summary_context(const std::string& running_summary,
                                             long /*budget*/) {
  HistoryContext ctx;
  ctx.mode = HistoryMode::Summary;
  ctx.rendered_text = running_summary;
  ctx.token_estimate = estimate_tokens(ctx.rendered_text);
  return ctx;
}

inline std::string asm_anchor_line(const Anchor& a,
                                   const std::vector<Anchor>& pool) {
  std::ostringstream os;
  os << "[" << to_string(a.type) << "] " << a.content;
  if (!a.evidence.empty()) {
    os << " (evidence: steps";
    for (size_t i = 0; i < a.evidence.size(); ++i) {
      os << (i ? "," : " ") << a.evidence[i].step_index;
      if (!a.evidence[i].extracted_value.empty()) {
        os << " value \"" << a.evidence[i].extracted_value << "\"";
      }
    }
    os << ")";
  }
  if (!a.links.empty()) {
    os << " links:";
    for (const auto& l : a.links) {
      std::string source = l.source_anchor_id;
      for (const auto& other : pool) {
        if (other.id == l.source_anchor_id) {
          source = other.content;
          break;
        }
      }
      os << " " << to_string(l.relation) << "->" << source;
    }
  }
  return os.str();
}

/// Anchored state memory block: one line per retrieved anchor, newest
/// last. Under budget pressure CONTEXT_INFO anchors go first, then the
/// oldest SUBGOALs, then STATE_CHANGE and EXCEPTION; DEPENDENCY and FINISH
/// anchors are never dropped.
inline HistoryContext render_asm_context(const std::vector<Anchor>& anchors,
                                         long budget) {
  HistoryContext ctx;
  ctx.mode = HistoryMode::Asm;
  std::vector<bool> keep(anchors.size(), true);
  auto total_estimate = [&]() {
    long total = 0;
    for (size_t i = 0; i < anchors.size(); ++i) {
      if (keep[i]) total += estimate_tokens(asm_anchor_line(anchors[i], anchors));
    }
    return total;
  };
  const AnchorType drop_order[] = {AnchorType::ContextInfo, AnchorType::Subgoal,
                                   AnchorType::StateChange, AnchorType::Exception};
  for (AnchorType t : drop_order) {
    if (total_estimate() <= budget) break;
    for (size_t i = 0; i < anchors.size() && total_estimate() > budget; ++i) {
      if (keep[i] && anchors[i].type == t) keep[i] = false;
    }
  }
  std::ostringstream os;
  for (size_t i = 0; i < anchors.size(); ++i) {
    if (!keep[i]) continue;
    ctx.anchors.push_back(anchors[i]);
    os << asm_anchor_line(anchors[i], anchors) << "\n";
  }
  ctx.rendered_text = os.str();
  ctx.token_estimate = estimate_tokens(ctx.rendered_text);
  return ctx;
}

}  // namespace asmb
