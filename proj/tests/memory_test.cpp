#include <doctest.h>

#include <set>

#include "asmb/memory.hpp"
#include "asmb/policy.hpp"
#include "asmb/synth.hpp"

using namespace asmb;

namespace {

UiState state_at(int step, const std::string& app = "appx") {
  UiState s;
  s.step_index = step;
  s.screenshot_ref = "shot" + std::to_string(step);
  s.app = app;
  return s;
}

AnchorProposal proposal(AnchorType type, const std::string& content) {
  AnchorProposal p;
  p.type = type;
  p.content = content;
  return p;
}

}  // namespace

TEST_CASE("retrieve on an empty bank yields an empty list") {
  MemoryBank bank("t");
  CHECK(retrieve(bank, state_at(0), "do things", RetrievalStrategy::all_active()).empty());
  CHECK(retrieve(bank, state_at(0), "do things", RetrievalStrategy::link_closure()).empty());
}

TEST_CASE("all_active filters out retired anchors and keeps insertion order") {
  MemoryBank bank("t");
  bank.update(state_at(0), Action::tap(1, 1), proposal(AnchorType::Subgoal, "first"));
  bank.update(state_at(1), Action::tap(1, 1), proposal(AnchorType::Subgoal, "second"));
  AnchorProposal kill;
  kill.invalidate = "second";
  bank.update(state_at(2), Action::tap(1, 1), kill);

  auto got = retrieve(bank, state_at(3), "anything", RetrievalStrategy::all_active());
  REQUIRE(got.size() == 1);
  CHECK(got[0].content == "first");
}

TEST_CASE("recency_top_k returns the most recent active anchors") {
  MemoryBank bank("t");
  for (int i = 0; i < 6; ++i) {
    bank.update(state_at(i), Action::tap(1, 1),
                proposal(AnchorType::ContextInfo, "note number " + std::string(1, 'a' + i)));
  }
  auto got = retrieve(bank, state_at(7), "x", RetrievalStrategy::recency_top_k(2));
  REQUIRE(got.size() == 2);
  CHECK(got[0].content == "note number e");
  CHECK(got[1].content == "note number f");
}

TEST_CASE("link_closure returns seed matches plus their dependency sources") {
  MemoryBank bank("t");
  bank.update(state_at(0), Action::tap(1, 1),
              proposal(AnchorType::Subgoal, "account ready"));
  AnchorProposal dep = proposal(AnchorType::Dependency, "order placed for kettle");
  dep.causal_link = CausalLink{"account ready", LinkRelation::Prerequisite};
  bank.update(state_at(1), Action::tap(1, 1), dep);

  // seed match on "kettle" from the instruction, closure pulls the source
  auto got = retrieve(bank, state_at(2), "buy a kettle",
                      RetrievalStrategy::link_closure());
  REQUIRE(got.size() == 2);
  CHECK(got[0].content == "order placed for kettle");
  CHECK(got[1].content == "account ready");
}

TEST_CASE("first insertion records evidence at the current step") {
  MemoryBank bank("t");
  auto res = bank.update(state_at(4), Action::tap(1, 1),
                         proposal(AnchorType::Subgoal, "logged in"));
  CHECK(res.outcome == "accepted");
  REQUIRE(bank.anchors().size() == 1);
  const Anchor& a = bank.anchors()[0];
  CHECK(a.status == AnchorStatus::Active);
  REQUIRE(a.evidence.size() == 1);
  CHECK(a.evidence[0].step_index == 4);
  CHECK(bank.cursor() == 4);
}

TEST_CASE("duplicate content of an active anchor is dropped") {
  MemoryBank bank("t");
  bank.update(state_at(0), Action::tap(1, 1), proposal(AnchorType::Subgoal, "logged in"));
  auto res = bank.update(state_at(1), Action::tap(1, 1),
                         proposal(AnchorType::Subgoal, "  Logged   IN "));
  CHECK(res.outcome == "duplicate");
  CHECK(bank.anchors().size() == 1);
  CHECK(bank.cursor() == 1);  // cursor still advances
}

TEST_CASE("a result_of link supersedes its source") {
  MemoryBank bank("t");
  bank.update(state_at(0), Action::tap(1, 1), proposal(AnchorType::Subgoal, "cart open"));
  AnchorProposal b = proposal(AnchorType::Subgoal, "order confirmed");
  b.causal_link = CausalLink{"cart open", LinkRelation::ResultOf};
  auto res = bank.update(state_at(1), Action::tap(1, 1), b);
  CHECK(res.outcome == "accepted");
  REQUIRE(bank.anchors().size() == 2);
  CHECK(bank.anchors()[0].status == AnchorStatus::Superseded);
  CHECK(bank.anchors()[1].status == AnchorStatus::Active);
}

TEST_CASE("proposals naming unknown anchors are rejected without bank changes") {
  MemoryBank bank("t");
  bank.update(state_at(0), Action::tap(1, 1), proposal(AnchorType::Subgoal, "a"));
  AnchorProposal bad = proposal(AnchorType::Dependency, "b");
  bad.causal_link = CausalLink{"no_such_anchor", LinkRelation::Prerequisite};
  auto res = bank.update(state_at(1), Action::tap(1, 1), bad);
  CHECK(res.outcome == "rejected");
  CHECK(!res.error.empty());
  CHECK(bank.anchors().size() == 1);
  CHECK(bank.cursor() == 1);
}

TEST_CASE("render_asm_context on nothing is empty") {
  HistoryContext ctx = render_asm_context({}, 100);
  CHECK(ctx.rendered_text.empty());
  CHECK(ctx.token_estimate == 0);
}

TEST_CASE("a dependency anchor renders its value verbatim") {
  Anchor a;
  a.id = "m1";
  a.type = AnchorType::Dependency;
  a.content = "copied price 42 from shop page";
  a.evidence.push_back({3, std::nullopt, "42"});
  HistoryContext ctx = render_asm_context({a}, 1000);
  CHECK(ctx.rendered_text.find("42") != std::string::npos);
  CHECK(ctx.rendered_text.find("[DEPENDENCY]") != std::string::npos);
}

TEST_CASE("budget pressure drops context info and old subgoals, never dependencies") {
  std::vector<Anchor> anchors;
  for (int i = 0; i < 50; ++i) {
    Anchor a;
    a.id = "m" + std::to_string(i);
    a.evidence.push_back({i, std::nullopt, ""});
    if (i % 3 == 0) {
      a.type = AnchorType::Dependency;
      a.content = "copied code number " + std::string(5, 'a' + (i % 20)) + " for later";
    } else if (i % 3 == 1) {
      a.type = AnchorType::Subgoal;
      a.content = "finished stage " + std::string(5, 'a' + (i % 20)) + " of browsing";
    } else {
      a.type = AnchorType::ContextInfo;
      a.content = "saw banner " + std::string(5, 'a' + (i % 20)) + " on screen";
    }
    anchors.push_back(a);
  }
  HistoryContext ctx = render_asm_context(anchors, 250);
  CHECK(ctx.token_estimate <= 250);
  std::set<std::string> kept;
  for (const auto& a : ctx.anchors) kept.insert(a.id);
  int deps = 0;
  for (const auto& a : anchors) {
    if (a.type == AnchorType::Dependency) {
      ++deps;
      CHECK(kept.count(a.id));  // dependencies always survive
    }
    if (a.type == AnchorType::ContextInfo) {
      CHECK(!kept.count(a.id));  // context info goes first under this budget
    }
  }
  CHECK(deps > 0);
  // Subgoals are dropped oldest first: any kept subgoal is newer than any
  // dropped one.
  int last_dropped_subgoal = -1;
  int first_kept_subgoal = 1 << 20;
  for (int i = 0; i < 50; ++i) {
    if (anchors[i].type != AnchorType::Subgoal) continue;
    if (kept.count(anchors[i].id)) {
      first_kept_subgoal = std::min(first_kept_subgoal, i);
    } else {
      last_dropped_subgoal = std::max(last_dropped_subgoal, i);
    }
  }
  if (first_kept_subgoal < (1 << 20)) CHECK(last_dropped_subgoal < first_kept_subgoal);
}

TEST_CASE("raw context keeps the most recent steps under budget") {
  std::vector<Step> steps;
  for (int i = 0; i < 40; ++i) {
    Step s;
    s.state = state_at(i);
    s.action = Action::tap(100, 100);
    steps.push_back(s);
  }
  // Size the budget to exactly eight step lines.
  const long per_line = estimate_tokens(raw_step_line(steps[39]));
  HistoryContext ctx = render_raw_context(steps, 8 * per_line);
  REQUIRE(ctx.step_lines.size() == 8);
  CHECK(ctx.step_lines.front().first == 32);  // steps 33..40 in 1-based terms
  CHECK(ctx.step_lines.back().first == 39);
  CHECK(ctx.rendered_text.find("step 31 ") == std::string::npos);

  HistoryContext empty = render_raw_context({}, 100);
  CHECK(empty.rendered_text.empty());
}

TEST_CASE("summary context passes the running summary through unchanged") {
  const std::string summary = "logged in; copied code 4217; opened form";
  HistoryContext ctx = render_summary_context(summary, 10);
  CHECK(ctx.rendered_text == summary);
}

// Property suite: random proposal sequences keep the bank invariants.
TEST_CASE("random update sequences uphold bank invariants") {
  SplitMix rng(1234);
  for (int round = 0; round < 60; ++round) {
    MemoryBank bank("t");
    std::unordered_map<std::string, AnchorStatus> last_status;
    for (int step = 0; step < 30; ++step) {
      std::optional<AnchorProposal> prop;
      const int kind = rng.range(0, 4);
      if (kind > 0) {
        AnchorProposal p;
        p.type = static_cast<AnchorType>(rng.range(0, 5));
        p.content = "anchor " + std::to_string(rng.range(0, 12));
        if (kind == 2 && !bank.anchors().empty()) {
          const auto& target =
              bank.anchors()[rng.next() % bank.anchors().size()];
          p.causal_link = CausalLink{
              target.id, static_cast<LinkRelation>(rng.range(0, 3))};
        }
        if (kind == 3 && !bank.anchors().empty()) {
          p.invalidate = bank.anchors()[rng.next() % bank.anchors().size()].id;
        }
        if (kind == 4) {
          p.causal_link = CausalLink{"missing_anchor", LinkRelation::Prerequisite};
        }
        prop = p;
      }
      bank.update(state_at(step), Action::tap(1, 1), prop);

      CHECK(bank.acyclic());
      int active_finish = 0;
      for (const auto& a : bank.anchors()) {
        // one-way status transitions
        auto it = last_status.find(a.id);
        if (it != last_status.end() && it->second != AnchorStatus::Active) {
          CHECK(a.status == it->second);
        }
        last_status[a.id] = a.status;
        if (a.type == AnchorType::Finish && a.status == AnchorStatus::Active) {
          ++active_finish;
        }
      }
      CHECK(active_finish <= 1);

      // retrieval soundness across strategies
      std::set<std::string> active_ids;
      for (const Anchor* a : bank.active()) active_ids.insert(a->id);
      for (const RetrievalStrategy& strat :
           {RetrievalStrategy::all_active(), RetrievalStrategy::recency_top_k(3),
            RetrievalStrategy::link_closure()}) {
        for (const Anchor& a :
             retrieve(bank, state_at(step + 1), "anchor 3", strat)) {
          CHECK(active_ids.count(a.id));
        }
      }
    }
  }
}

TEST_CASE("retrieval is deterministic for identical inputs") {
  MemoryBank bank("t");
  for (int i = 0; i < 8; ++i) {
    bank.update(state_at(i), Action::tap(1, 1),
                proposal(static_cast<AnchorType>(i % 5), "item " + std::to_string(i)));
  }
  for (const RetrievalStrategy& strat :
       {RetrievalStrategy::all_active(), RetrievalStrategy::recency_top_k(4),
        RetrievalStrategy::link_closure()}) {
    auto a = retrieve(bank, state_at(9), "item 3", strat);
    auto b = retrieve(bank, state_at(9), "item 3", strat);
    REQUIRE(a.size() == b.size());
    for (size_t i = 0; i < a.size(); ++i) CHECK(a[i].id == b[i].id);
  }
}

// No-leakage: contexts for step t only depend on steps before t.
TEST_CASE("contexts are identical for tasks that agree before step t") {
  SynthConfig config;
  Task a = generate_task(derive_task_seed(77, 0), config, 0);
  Task b = a;
  const int t = a.length() - 1;
  b.steps[t].state.elements.clear();
  b.steps[t].action = Action::of(ActionKind::Wait);
  b.steps[t].gt_anchors.clear();
  b.final_anchor_id.clear();

  std::vector<Step> past_a(a.steps.begin(), a.steps.begin() + t);
  std::vector<Step> past_b(b.steps.begin(), b.steps.begin() + t);
  CHECK(render_raw_context(past_a, 2048).rendered_text ==
        render_raw_context(past_b, 2048).rendered_text);
  CHECK(scripted_running_summary(a, t, 2048) == scripted_running_summary(b, t, 2048));

  auto bank_for = [](const Task& task, int upto) {
    MemoryBank bank(task.id);
    for (int i = 0; i < upto; ++i) {
      if (task.steps[i].gt_anchors.empty()) {
        bank.update(task.steps[i].state, task.steps[i].action, std::nullopt);
      } else {
        bank.update(task.steps[i].state, task.steps[i].action,
                    detail::proposal_from_gt(task, task.steps[i].gt_anchors.front()));
      }
    }
    return bank;
  };
  MemoryBank bank_a = bank_for(a, t);
  MemoryBank bank_b = bank_for(b, t);
  auto ctx_a = render_asm_context(
      retrieve(bank_a, a.steps[t].state, a.instruction, RetrievalStrategy::all_active()),
      2048);
  auto ctx_b = render_asm_context(
      retrieve(bank_b, b.steps[t].state, b.instruction, RetrievalStrategy::all_active()),
      2048);
  CHECK(ctx_a.rendered_text == ctx_b.rendered_text);
}
