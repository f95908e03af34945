#include <doctest.h>

#include "asmb/serialize.hpp"
#include "asmb/synth.hpp"

using namespace asmb;

namespace {

Task minimal_task() {
  Task t;
  t.id = "t_min";
  t.instruction = "tap the button";
  t.intent = Intent::Lookup;
  t.apps = {"appx"};
  Step s;
  s.state.step_index = 0;
  s.state.screenshot_ref = "shot0";
  s.state.app = "appx";
  s.action = Action::tap(500, 500);
  t.steps.push_back(s);
  return t;
}

}  // namespace

TEST_CASE("validate_action accepts well-formed actions") {
  CHECK(validate_action(Action::tap(500, 500)).empty());
  CHECK(validate_action(Action::open_app("notes")).empty());
  CHECK(validate_action(Action::swipe(500, 600, SwipeDirection::Up)).empty());
  CHECK(validate_action(Action::swipe_two_points(100, 100, 200, 400)).empty());
  CHECK(validate_action(Action::of(ActionKind::Finish)).empty());
}

TEST_CASE("validate_action reports out-of-range coordinates") {
  auto v = validate_action(Action::tap(1200, 500));
  REQUIRE(v.size() == 1);
  CHECK(v[0].find("x out of range") != std::string::npos);
}

TEST_CASE("validate_action rejects degenerate two-point swipes") {
  auto v = validate_action(Action::swipe_two_points(300, 300, 300, 300));
  REQUIRE(v.size() == 1);
  CHECK(v[0].find("endpoints must differ") != std::string::npos);
}

TEST_CASE("validate_action covers missing arguments and misuse") {
  Action swipe_no_dir = Action::of(ActionKind::Swipe);
  CHECK(!validate_action(swipe_no_dir).empty());

  Action text_empty = Action::of(ActionKind::InputText);
  CHECK(!validate_action(text_empty).empty());

  Action wait_with_coords = Action::of(ActionKind::Wait);
  wait_with_coords.x = 5;
  CHECK(!validate_action(wait_with_coords).empty());

  Action tap_with_dir = Action::tap(10, 10);
  tap_with_dir.direction = SwipeDirection::Up;
  CHECK(!validate_action(tap_with_dir).empty());
}

TEST_CASE("swipe_direction uses the dominant axis") {
  CHECK(swipe_direction(500, 800, 500, 200) == SwipeDirection::Up);
  CHECK(swipe_direction(100, 500, 900, 500) == SwipeDirection::Right);
  CHECK(swipe_direction(900, 500, 100, 500) == SwipeDirection::Left);
  CHECK(swipe_direction(500, 200, 500, 800) == SwipeDirection::Down);
}

TEST_CASE("swipe_direction breaks diagonal ties toward the vertical axis") {
  // |dx| == |dy| == 300; screen y grows downward
  CHECK(swipe_direction(100, 100, 400, 400) == SwipeDirection::Down);
  CHECK(swipe_direction(400, 400, 100, 100) == SwipeDirection::Up);
}

TEST_CASE("swipe_direction rejects identical endpoints") {
  CHECK_THROWS_AS(swipe_direction(5, 5, 5, 5), std::invalid_argument);
}

TEST_CASE("flipping both endpoints reverses the direction") {
  SplitMix rng(42);
  int checked = 0;
  while (checked < 500) {
    const int x = rng.range(0, 1000), y = rng.range(0, 1000);
    const int xe = rng.range(0, 1000), ye = rng.range(0, 1000);
    if (x == xe && y == ye) continue;
    ++checked;
    const SwipeDirection fwd = swipe_direction(x, y, xe, ye);
    const SwipeDirection rev = swipe_direction(xe, ye, x, y);
    switch (fwd) {
      case SwipeDirection::Up: CHECK(rev == SwipeDirection::Down); break;
      case SwipeDirection::Down: CHECK(rev == SwipeDirection::Up); break;
      case SwipeDirection::Left: CHECK(rev == SwipeDirection::Right); break;
      case SwipeDirection::Right: CHECK(rev == SwipeDirection::Left); break;
    }
  }
}

TEST_CASE("minimal task round-trips byte-identically") {
  Task t = minimal_task();
  const std::string once = serialize_task(t);
  Task parsed = parse_task(once);
  CHECK(parsed == t);
  CHECK(serialize_task(parsed) == once);
}

TEST_CASE("serialization is canonical on generated tasks") {
  SynthConfig config;
  config.num_tasks = 5;
  for (int i = 0; i < 5; ++i) {
    Task t = generate_task(derive_task_seed(3, i), config, i);
    const std::string s1 = serialize_task(t);
    const std::string s2 = serialize_task(parse_task(s1));
    CHECK(s1 == s2);
  }
}

TEST_CASE("parse_task names the missing field") {
  json j = task_to_json(minimal_task());
  j.erase("instruction");
  CHECK_THROWS_WITH_AS(parse_task(j.dump()),
                       doctest::Contains("missing field: instruction"), ParseError);
}

TEST_CASE("parse_task rejects forward causal links") {
  Task t = minimal_task();
  Step s2 = t.steps[0];
  s2.state.step_index = 1;

  Anchor early;
  early.id = "a_early";
  early.type = AnchorType::Subgoal;
  early.content = "logged in";
  early.evidence.push_back({0, std::nullopt, ""});
  early.links.push_back({"a_late", LinkRelation::Prerequisite});  // not yet created
  t.steps[0].gt_anchors.push_back(early);

  Anchor late;
  late.id = "a_late";
  late.type = AnchorType::StateChange;
  late.content = "switched app";
  late.evidence.push_back({1, std::nullopt, ""});
  s2.gt_anchors.push_back(late);
  t.steps.push_back(s2);

  CHECK_THROWS_WITH_AS(parse_task(serialize_task(t)),
                       doctest::Contains("causal link target not yet created"),
                       ParseError);
}

TEST_CASE("parse_task rejects unknown intents") {
  json j = task_to_json(minimal_task());
  j["intent"] = "buy_stuff";
  CHECK_THROWS_WITH_AS(parse_task(j.dump()), doctest::Contains("unknown intent"),
                       ParseError);
}

TEST_CASE("anchor links of generated tasks form a DAG") {
  SynthConfig config;
  for (int i = 0; i < 10; ++i) {
    Task t = generate_task(derive_task_seed(9, i), config, i);
    std::vector<const Anchor*> anchors = t.all_anchors();
    std::unordered_map<std::string, int> indegree;
    std::unordered_map<std::string, std::vector<std::string>> out;
    for (const Anchor* a : anchors) indegree[a->id] = 0;
    for (const Anchor* a : anchors) {
      for (const auto& l : a->links) {
        REQUIRE(indegree.count(l.source_anchor_id));
        out[l.source_anchor_id].push_back(a->id);
        indegree[a->id] += 1;
      }
    }
    std::vector<std::string> queue;
    for (auto& [id, d] : indegree) {
      if (d == 0) queue.push_back(id);
    }
    size_t seen = 0;
    while (!queue.empty()) {
      auto id = queue.back();
      queue.pop_back();
      ++seen;
      for (auto& nxt : out[id]) {
        if (--indegree[nxt] == 0) queue.push_back(nxt);
      }
    }
    CHECK(seen == anchors.size());
  }
}

TEST_CASE("normalize_text lowercases and collapses whitespace") {
  CHECK(normalize_text("  Hello   WORLD \t") == "hello world");
  CHECK(normalize_text("") == "");
  CHECK(contains_normalized("Copied Price 42 from shop", "price 42"));
}
