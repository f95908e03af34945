#include <doctest.h>

#include <cmath>

#include "asmb/metrics.hpp"
#include "asmb/synth.hpp"

using namespace asmb;

namespace {

RunRecord record_for(const Task& task, const std::vector<Action>& predicted) {
  RunRecord r;
  r.task_id = task.id;
  r.policy = "test";
  for (size_t i = 0; i < predicted.size(); ++i) {
    StepRecord s;
    s.step_index = static_cast<int>(i);
    s.predicted = predicted[i];
    s.gt = i < task.steps.size() ? task.steps[i].action : Action{};
    r.steps.push_back(s);
  }
  return r;
}

// Small hand-built task: observe a code, re-enter it, finish.
Task dependency_task() {
  Task t;
  t.id = "t_dep";
  t.instruction = "move the code across";
  t.intent = Intent::Lookup;
  t.apps = {"a", "b"};
  for (int i = 0; i < 4; ++i) {
    Step s;
    s.state.step_index = i;
    s.state.screenshot_ref = "s" + std::to_string(i);
    s.state.app = i < 2 ? "a" : "b";
    t.steps.push_back(s);
  }
  t.steps[0].action = Action::long_press(500, 140);
  t.steps[1].action = Action::open_app("b");
  t.steps[2].action = Action::input_text("42");
  t.steps[3].action = Action::of(ActionKind::Finish);

  Anchor dep;
  dep.id = "dep";
  dep.type = AnchorType::Dependency;
  dep.content = "copied price 42";
  dep.evidence.push_back({0, std::nullopt, "42"});
  dep.predicate = AnchorPredicate{PredicateKind::ValueContains, 2, 2, "42"};
  t.steps[0].gt_anchors.push_back(dep);

  Anchor fin;
  fin.id = "fin";
  fin.type = AnchorType::Finish;
  fin.content = "done";
  fin.evidence.push_back({3, std::nullopt, ""});
  AnchorPredicate fp;
  fp.kind = PredicateKind::ActionKindAtStepRange;
  fp.step_lo = 3;
  fp.step_hi = 3;
  fp.action_kind = ActionKind::Finish;
  fin.predicate = fp;
  fin.links.push_back({"dep", LinkRelation::Prerequisite});
  t.steps[3].gt_anchors.push_back(fin);
  t.final_anchor_id = "fin";
  return t;
}

}  // namespace

TEST_CASE("anls matches the classic examples") {
  CHECK(anls("hello", "hello") == doctest::Approx(1.0));
  CHECK(anls("kitten", "sitting") == doctest::Approx(1.0 - 3.0 / 7.0));
  CHECK(anls("", "abc") == doctest::Approx(0.0));
  CHECK(anls("", "") == doctest::Approx(1.0));
}

TEST_CASE("anls is symmetric, bounded, and 1 on identity") {
  SplitMix rng(7);
  auto random_string = [&]() {
    std::string s;
    const int n = rng.range(0, 12);
    for (int i = 0; i < n; ++i) s.push_back(static_cast<char>('a' + rng.range(0, 5)));
    return s;
  };
  for (int i = 0; i < 400; ++i) {
    const std::string a = random_string();
    const std::string b = random_string();
    const double ab = anls(a, b);
    CHECK(ab == anls(b, a));
    CHECK(ab >= 0.0);
    CHECK(ab <= 1.0);
    CHECK(anls(a, a) == doctest::Approx(1.0));
  }
}

TEST_CASE("tap matching accepts points within the distance tolerance") {
  CHECK(action_match(Action::tap(590, 500), Action::tap(500, 500)) == 1.0);
  CHECK(action_match(Action::tap(700, 500), Action::tap(500, 500)) == 0.0);
}

TEST_CASE("the 0.14 boundary is inclusive and sharp") {
  // (640,500) is exactly 140 grid units away; (641,500) is just beyond.
  CHECK(action_match(Action::tap(640, 500), Action::tap(500, 500)) == 1.0);
  CHECK(action_match(Action::tap(641, 500), Action::tap(500, 500)) == 0.0);
  // Non-axis-aligned exact boundary: 84^2 + 112^2 = 140^2.
  CHECK(action_match(Action::tap(584, 612), Action::tap(500, 500)) == 1.0);
  CHECK(action_match(Action::tap(584, 613), Action::tap(500, 500)) == 0.0);
}

TEST_CASE("element containment overrides the distance rule") {
  UiElement el;
  el.bbox = Bbox{400, 400, 700, 700};
  // distance ~0.2687 > 0.14 but inside the annotated element
  CHECK(action_match(Action::tap(690, 690), Action::tap(500, 500), &el) == 1.0);
  CHECK(action_match(Action::tap(690, 690), Action::tap(500, 500), nullptr) == 0.0);
}

TEST_CASE("swipe family is compared by direction") {
  const Action gt = Action::swipe(500, 800, SwipeDirection::Up);
  CHECK(action_match(Action::swipe_two_points(500, 800, 480, 300), gt) == 1.0);
  CHECK(action_match(Action::swipe_two_points(500, 300, 480, 800), gt) == 0.0);
  CHECK(action_match(Action::swipe(100, 100, SwipeDirection::Up), gt) == 1.0);
  CHECK(action_match(Action::swipe(100, 100, SwipeDirection::Left), gt) == 0.0);
}

TEST_CASE("kind mismatch scores zero") {
  CHECK(action_match(Action::swipe(1, 1, SwipeDirection::Up), Action::tap(1, 1)) == 0.0);
  CHECK(action_match(Action::tap(1, 1), Action::long_press(1, 1)) == 0.0);
}

TEST_CASE("text steps score fractional ANLS credit by default") {
  const Action gt = Action::input_text("sitting");
  const double got = action_match(Action::input_text("kitten"), gt);
  CHECK(got == doctest::Approx(1.0 - 3.0 / 7.0));

  MatchOptions binary;
  binary.text_threshold = 0.5;
  CHECK(action_match(Action::input_text("kitten"), gt, nullptr, binary) == 1.0);
  binary.text_threshold = 0.9;
  CHECK(action_match(Action::input_text("kitten"), gt, nullptr, binary) == 0.0);
}

TEST_CASE("open_app matches case-insensitively after trimming") {
  CHECK(action_match(Action::open_app("  Notes "), Action::open_app("notes")) == 1.0);
  CHECK(action_match(Action::open_app("maps"), Action::open_app("notes")) == 0.0);
}

TEST_CASE("ams averages per-step scores") {
  SynthConfig config;
  Task task = generate_task(derive_task_seed(4, 0), config, 0);
  std::vector<Action> oracle;
  for (const auto& s : task.steps) oracle.push_back(s.action);
  CHECK(ams(record_for(task, oracle), task) == doctest::Approx(100.0));

  // all-wait against a GT with exactly 2 waits among 20
  Task waits;
  waits.id = "t_w";
  waits.instruction = "x";
  waits.apps = {"a"};
  for (int i = 0; i < 20; ++i) {
    Step s;
    s.state.step_index = i;
    s.state.screenshot_ref = "s";
    s.state.app = "a";
    s.action = (i == 3 || i == 11) ? Action::of(ActionKind::Wait) : Action::tap(500, 500);
    waits.steps.push_back(s);
  }
  std::vector<Action> all_wait(20, Action::of(ActionKind::Wait));
  CHECK(ams(record_for(waits, all_wait), waits) == doctest::Approx(10.0));
}

TEST_CASE("one half-credit text step among ten exact steps gives 95") {
  Task t;
  t.id = "t_text";
  t.instruction = "x";
  t.apps = {"a"};
  for (int i = 0; i < 10; ++i) {
    Step s;
    s.state.step_index = i;
    s.state.screenshot_ref = "s";
    s.state.app = "a";
    s.action = i == 5 ? Action::input_text("abcd") : Action::tap(400, 400);
    t.steps.push_back(s);
  }
  std::vector<Action> pred;
  for (int i = 0; i < 10; ++i) {
    // "abcd" vs "abxy": distance 2, max 4 -> ANLS 0.5
    pred.push_back(i == 5 ? Action::input_text("abxy") : Action::tap(400, 400));
  }
  CHECK(ams(record_for(t, pred), t) == doctest::Approx(95.0));
}

TEST_CASE("ams requires full coverage") {
  SynthConfig config;
  Task task = generate_task(derive_task_seed(4, 1), config, 1);
  RunRecord r = record_for(task, {Action::tap(1, 1)});
  CHECK_THROWS_AS(ams(r, task), std::invalid_argument);
}

TEST_CASE("an unmet dependency fails the task even when FINISH holds") {
  Task t = dependency_task();
  std::vector<Action> pred = {Action::long_press(500, 140), Action::open_app("b"),
                              Action::input_text("UNKNOWN"),
                              Action::of(ActionKind::Finish)};
  TaskOutcome out = evaluate_task(t, record_for(t, pred));
  REQUIRE(out.evaluable);
  CHECK(!out.success);

  pred[2] = Action::input_text("the code is 42");
  out = evaluate_task(t, record_for(t, pred));
  CHECK(out.success);  // value_contains accepts containment
}

TEST_CASE("ordered_after fails when satisfaction order is violated") {
  // 5 steps: observe code, switch app, re-enter code, tap submit, finish.
  Task t;
  t.id = "t_order";
  t.instruction = "x";
  t.apps = {"a", "b"};
  for (int i = 0; i < 5; ++i) {
    Step s;
    s.state.step_index = i;
    s.state.screenshot_ref = "s";
    s.state.app = i < 1 ? "a" : "b";
    t.steps.push_back(s);
  }
  t.steps[0].action = Action::long_press(500, 140);
  t.steps[1].action = Action::open_app("b");
  t.steps[2].action = Action::input_text("42");
  t.steps[3].action = Action::tap(500, 500);
  t.steps[4].action = Action::of(ActionKind::Finish);

  Anchor dep;
  dep.id = "dep";
  dep.type = AnchorType::Dependency;
  dep.content = "copied 42";
  dep.evidence.push_back({0, std::nullopt, "42"});
  dep.predicate = AnchorPredicate{PredicateKind::ValueContains, 2, 2, "42"};
  t.steps[0].gt_anchors.push_back(dep);

  // The submit tap only counts if the earliest tap comes after the code
  // was re-entered.
  Anchor gate;
  gate.id = "gate";
  gate.type = AnchorType::Subgoal;
  gate.content = "submitted after filling";
  gate.evidence.push_back({3, std::nullopt, ""});
  AnchorPredicate gp;
  gp.kind = PredicateKind::OrderedAfter;
  gp.step_lo = 0;
  gp.step_hi = 4;
  gp.action_kind = ActionKind::Tap;
  gp.anchor_id = "dep";
  gate.predicate = gp;
  t.steps[3].gt_anchors.push_back(gate);

  Anchor fin;
  fin.id = "fin";
  fin.type = AnchorType::Finish;
  fin.content = "done";
  fin.evidence.push_back({4, std::nullopt, ""});
  AnchorPredicate fp;
  fp.kind = PredicateKind::ActionKindAtStepRange;
  fp.step_lo = 4;
  fp.step_hi = 4;
  fp.action_kind = ActionKind::Finish;
  fin.predicate = fp;
  fin.links.push_back({"dep", LinkRelation::Prerequisite});
  fin.links.push_back({"gate", LinkRelation::Prerequisite});
  t.steps[4].gt_anchors.push_back(fin);
  t.final_anchor_id = "fin";

  std::vector<Action> in_order = {Action::long_press(500, 140), Action::open_app("b"),
                                  Action::input_text("42"), Action::tap(500, 500),
                                  Action::of(ActionKind::Finish)};
  TaskOutcome ok = evaluate_task(t, record_for(t, in_order));
  REQUIRE(ok.evaluable);
  CHECK(ok.success);

  // Same anchors satisfied, but a stray early tap makes the earliest tap
  // precede the dependency: ordering violated, task fails.
  std::vector<Action> out_of_order = in_order;
  out_of_order[1] = Action::tap(500, 500);
  TaskOutcome bad = evaluate_task(t, record_for(t, out_of_order));
  REQUIRE(bad.evaluable);
  CHECK(!bad.success);
}

TEST_CASE("scope=all also gates on anchors outside the FINISH closure") {
  Task t = dependency_task();
  Anchor side;
  side.id = "side";
  side.type = AnchorType::ContextInfo;
  side.content = "saw a banner";
  side.evidence.push_back({1, std::nullopt, ""});
  AnchorPredicate sp;
  sp.kind = PredicateKind::ActionKindAtStepRange;
  sp.step_lo = 1;
  sp.step_hi = 1;
  sp.action_kind = ActionKind::Back;  // GT does open_app; predicted won't Back
  side.predicate = sp;
  t.steps[1].gt_anchors.push_back(side);

  std::vector<Action> pred = {Action::long_press(500, 140), Action::open_app("b"),
                              Action::input_text("42"),
                              Action::of(ActionKind::Finish)};
  TaskOutcome closure = evaluate_task(t, record_for(t, pred), TcrScope::FinishClosure);
  CHECK(closure.success);  // side anchor is causally disconnected
  TaskOutcome all = evaluate_task(t, record_for(t, pred), TcrScope::AllAnchors);
  REQUIRE(all.evaluable);
  CHECK(!all.success);
}

TEST_CASE("adding a satisfied constraint never rescues a failing task") {
  Task t = dependency_task();
  std::vector<Action> pred = {Action::long_press(500, 140), Action::open_app("b"),
                              Action::input_text("UNKNOWN"),
                              Action::of(ActionKind::Finish)};
  TaskOutcome before = evaluate_task(t, record_for(t, pred));
  REQUIRE(!before.success);

  Anchor extra;
  extra.id = "extra";
  extra.type = AnchorType::StateChange;
  extra.content = "switched to b";
  extra.evidence.push_back({1, std::nullopt, ""});
  AnchorPredicate ep;
  ep.kind = PredicateKind::ReachesStepWithApp;
  ep.step_lo = 1;
  ep.step_hi = 1;
  ep.app = "b";
  extra.predicate = ep;
  t.steps[1].gt_anchors.push_back(extra);
  for (auto& step : t.steps) {
    for (auto& a : step.gt_anchors) {
      if (a.id == t.final_anchor_id) {
        a.links.push_back({"extra", LinkRelation::Prerequisite});
      }
    }
  }
  TaskOutcome after = evaluate_task(t, record_for(t, pred));
  REQUIRE(after.evaluable);
  CHECK(!after.success);
}

TEST_CASE("malformed predicates exclude the task instead of failing it") {
  Task t = dependency_task();
  for (auto& step : t.steps) {
    for (auto& a : step.gt_anchors) {
      if (a.id == "dep") a.predicate->step_hi = 99;  // outside the run
    }
  }
  std::vector<Action> pred = {Action::long_press(500, 140), Action::open_app("b"),
                              Action::input_text("42"),
                              Action::of(ActionKind::Finish)};
  TaskOutcome out = evaluate_task(t, record_for(t, pred));
  CHECK(!out.evaluable);
  CHECK(out.exclusion_reason.find("evaluation_error") != std::string::npos);
}

TEST_CASE("tasks without a FINISH anchor are excluded and reported") {
  Task t = dependency_task();
  t.final_anchor_id.clear();
  std::vector<Action> pred(4, Action::of(ActionKind::Wait));
  TaskOutcome out = evaluate_task(t, record_for(t, pred));
  CHECK(!out.evaluable);
  CHECK(out.exclusion_reason.find("FINISH") != std::string::npos);
}

TEST_CASE("efficiency is the arithmetic mean over steps") {
  RunRecord r;
  r.task_id = "t";
  for (long tokens : {100L, 200L, 300L}) {
    StepRecord s;
    s.usage.prompt_tokens = tokens;
    s.usage.completion_tokens = 0;
    s.usage.estimated = tokens == 200;  // one estimated step of three
    s.wall_time_seconds = 0.5;
    r.steps.push_back(s);
  }
  Efficiency e = efficiency({r});
  CHECK(std::abs(e.avg_tokens - 200.0) < 1e-9);
  CHECK(e.avg_time_seconds == doctest::Approx(0.5));
  CHECK(e.estimated_fraction == doctest::Approx(1.0 / 3.0));
}

TEST_CASE("efficiency refuses an empty record set") {
  CHECK_THROWS_WITH_AS(efficiency({}), doctest::Contains("no steps"),
                       std::invalid_argument);
}

TEST_CASE("length buckets follow 10-step boundaries") {
  CHECK(length_bucket(12) == 10);
  CHECK(length_bucket(25) == 20);
  CHECK(length_bucket(41) == 40);

  SynthConfig config;
  std::vector<Task> tasks;
  std::vector<RunRecord> records;
  for (int len : {12, 25, 41}) {
    Task t;
    t.id = "t_len" + std::to_string(len);
    t.instruction = "x";
    t.apps = {"a"};
    for (int i = 0; i < len; ++i) {
      Step s;
      s.state.step_index = i;
      s.state.screenshot_ref = "s";
      s.state.app = "a";
      s.action = Action::tap(100, 100);
      t.steps.push_back(s);
    }
    std::vector<Action> pred(len, Action::tap(100, 100));
    records.push_back(record_for(t, pred));
    records.back().policy = "p";
    tasks.push_back(t);
  }
  MetricReport rep = evaluate_cell(tasks, records);
  REQUIRE(rep.per_bucket.size() == 3);
  CHECK(rep.per_bucket.count(10));
  CHECK(rep.per_bucket.count(20));
  CHECK(rep.per_bucket.count(40));
}

TEST_CASE("check_anchor evaluates one anchor against a run") {
  Task t = dependency_task();
  std::vector<Action> pred = {Action::long_press(500, 140), Action::open_app("b"),
                              Action::input_text("42"),
                              Action::of(ActionKind::Finish)};
  RunRecord rec = record_for(t, pred);
  const Anchor* dep = t.find_anchor("dep");
  REQUIRE(dep);
  CHECK(check_anchor(*dep, t, rec));
  rec.steps[2].predicted = Action::input_text("UNKNOWN");
  CHECK(!check_anchor(*dep, t, rec));
}
