#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "asmb/metrics.hpp"
#include "asmb/serialize.hpp"

// Deterministic generator of long-horizon tasks with enforced cross-step
// causal dependencies: a value observed in one app must be re-entered in
// another app at least `gap` steps later. Every ground-truth anchor carries
// a machine-checkable predicate satisfied by the task's own actions.

namespace asmb {

inline constexpr std::string_view kGeneratorVersion = "synthgen-1";

class GenerationError : public std::runtime_error {
 public:
  explicit GenerationError(const std::string& msg) : std::runtime_error(msg) {}
};

// splitmix64; self-contained so suites are byte-stable across platforms
// and standard library versions.
class SplitMix {
 public:
  explicit SplitMix(uint64_t seed) : state_(seed) {}

  uint64_t next() {
    uint64_t z = (state_ += 0x9e3779b97f4a7c15ull);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

  // Inclusive bounds. Modulo bias is irrelevant at these range sizes.
  int range(int lo, int hi) {
    if (hi <= lo) return lo;
    return lo + static_cast<int>(next() % static_cast<uint64_t>(hi - lo + 1));
  }

  bool chance_percent(int percent) { return static_cast<int>(next() % 100) < percent; }

 private:
  uint64_t state_;
};

/// Per-task seed derivation: task i of a suite draws from
/// splitmix(suite_seed XOR (i+1)*golden_ratio), so tasks are independent
/// and generation is embarrassingly parallel.
inline uint64_t derive_task_seed(uint64_t suite_seed, int task_index) {
  return SplitMix(suite_seed ^
                  (static_cast<uint64_t>(task_index + 1) * 0x9e3779b97f4a7c15ull))
      .next();
}

struct SynthConfig {
  uint64_t seed = 0;
  int num_tasks = 100;
  int len_min = 20;
  int len_max = 60;
  int gap_min = 10;  // min steps between value observation and reuse
  int gap_max = 15;
  int anchors_min = 5;
  int anchors_max = 8;
  std::map<std::string, double> intent_mix;  // empty = uniform over 8 classes
  int app_pool_size = 12;
  // standard: one value chain per task, gap drawn from [gap_min, gap_max].
  // degradation: chain count and gap grow with task length, lengths cycle
  // round-robin so every 10-step bucket is evenly populated.
  std::string profile = "standard";
  std::string suite_name = "suite";

  std::vector<std::string> validate() const {
    std::vector<std::string> v;
    if (num_tasks < 1) v.push_back("num_tasks must be >= 1");
    if (len_min > len_max) v.push_back("length range is empty");
    if (gap_min > gap_max) v.push_back("dependency gap range is empty");
    if (anchors_min > anchors_max) v.push_back("anchors per task range is empty");
    if (len_min <= gap_max + 4) {
      v.push_back("min length must exceed max dependency gap + 4 (got length " +
                  std::to_string(len_min) + ", gap " + std::to_string(gap_max) + ")");
    }
    if (gap_min < 1) v.push_back("dependency gap must be >= 1");
    if (app_pool_size < 2 || app_pool_size > 12) {
      v.push_back("app_pool_size must be in [2,12]");
    }
    if (profile != "standard" && profile != "degradation") {
      v.push_back("unknown profile: " + profile);
    }
    for (const auto& [name, frac] : intent_mix) {
      if (!intent_from(name)) v.push_back("unknown intent in mix: " + name);
      if (frac < 0) v.push_back("negative intent fraction: " + name);
    }
    return v;
  }

  json to_json() const {
    json j;
    j["seed"] = seed;
    j["num_tasks"] = num_tasks;
    j["len_min"] = len_min;
    j["len_max"] = len_max;
    j["gap_min"] = gap_min;
    j["gap_max"] = gap_max;
    j["anchors_min"] = anchors_min;
    j["anchors_max"] = anchors_max;
    j["intent_mix"] = intent_mix;
    j["app_pool_size"] = app_pool_size;
    j["profile"] = profile;
    j["suite_name"] = suite_name;
    return j;
  }

  static SynthConfig from_json(const json& j) {
    SynthConfig c;
    if (j.contains("seed")) c.seed = j["seed"].get<uint64_t>();
    if (j.contains("num_tasks")) c.num_tasks = j["num_tasks"].get<int>();
    if (j.contains("len_min")) c.len_min = j["len_min"].get<int>();
    if (j.contains("len_max")) c.len_max = j["len_max"].get<int>();
    if (j.contains("gap_min")) c.gap_min = j["gap_min"].get<int>();
    if (j.contains("gap_max")) c.gap_max = j["gap_max"].get<int>();
    if (j.contains("anchors_min")) c.anchors_min = j["anchors_min"].get<int>();
    if (j.contains("anchors_max")) c.anchors_max = j["anchors_max"].get<int>();
    if (j.contains("intent_mix")) {
      c.intent_mix = j["intent_mix"].get<std::map<std::string, double>>();
    }
    if (j.contains("app_pool_size")) c.app_pool_size = j["app_pool_size"].get<int>();
    if (j.contains("profile")) c.profile = j["profile"].get<std::string>();
    if (j.contains("suite_name")) c.suite_name = j["suite_name"].get<std::string>();
    return c;
  }
};

namespace synth_detail {

inline const std::vector<std::string>& app_pool() {
  static const std::vector<std::string> apps = {
      "shopora", "cartly", "dealmart",  "notesy",  "chatter", "mailbee",
      "streamly", "mapgo",  "walletix", "bookly",  "foodlet", "cloudbin"};
  return apps;
}

inline const std::vector<std::string>& item_pool() {
  static const std::vector<std::string> items = {
      "kettle", "lamp",   "backpack", "headphones", "monitor",
      "blender", "tripod", "charger",  "speaker",    "keyboard"};
  return items;
}

inline const std::vector<std::string>& decoy_pool() {
  static const std::vector<std::string> decoys = {
      "Home",     "Search",  "Profile",       "Settings", "Offers",
      "Cart",     "Details", "Help",          "Filters",  "Sort",
      "Share",    "Wishlist", "Notifications", "Categories"};
  return decoys;
}

inline const std::vector<std::string>& value_label_pool() {
  static const std::vector<std::string> labels = {"Code", "Ref", "Ticket", "Voucher"};
  return labels;
}

// Instruction templates deliberately name the item and both apps but never
// the planted value; the value is only discoverable on the extraction page.
inline std::string instruction_for(Intent intent, const std::string& item,
                                   const std::string& app_a,
                                   const std::string& app_b) {
  switch (intent) {
    case Intent::Lookup:
      return "Find the listed reference code for the " + item + " in " + app_a +
             " and enter it in the claim form in " + app_b + ".";
    case Intent::CompareDecide:
      return "Check the " + item + " offer code in " + app_a +
             " and use it to redeem the better deal in " + app_b + ".";
    case Intent::PurchaseOrder:
      return "Copy the order code for the " + item + " from " + app_a +
             " and submit it with the checkout form in " + app_b + ".";
    case Intent::Booking:
      return "Look up the booking reference for the " + item + " rental in " +
             app_a + " and confirm it in " + app_b + ".";
    case Intent::Communicate:
      return "Get the pickup code for the " + item + " from " + app_a +
             " and send it through the form in " + app_b + ".";
    case Intent::ShareRecommend:
      return "Grab the promo code for the " + item + " in " + app_a +
             " and share it via the form in " + app_b + ".";
    case Intent::CreateContent:
      return "Note the serial code of the " + item + " from " + app_a +
             " and include it in your post draft in " + app_b + ".";
    case Intent::ConfigureAuthorize:
      return "Read the activation code for the " + item + " in " + app_a +
             " and enter it in the setup form in " + app_b + ".";
  }
  return "Complete the " + item + " workflow across " + app_a + " and " + app_b + ".";
}

inline Bbox row_bbox(int row) {
  const int y = 100 + row * 120;
  return Bbox{100, y, 900, y + 80};
}

/// A page of decoy elements with one optional featured element whose row
/// is rng-chosen; returns the featured element's index.
inline int build_page(UiState& state, SplitMix& rng, int decoys,
                      const std::string& featured_text,
                      const std::string& featured_role) {
  const auto& pool = decoy_pool();
  const int rows = decoys + (featured_text.empty() ? 0 : 1);
  const int featured_row = featured_text.empty() ? -1 : rng.range(0, rows - 1);
  int featured_index = -1;
  int pool_at = rng.range(0, static_cast<int>(pool.size()) - 1);
  for (int row = 0; row < rows; ++row) {
    UiElement e;
    e.bbox = row_bbox(row);
    if (row == featured_row) {
      e.text = featured_text;
      e.role = featured_role;
      featured_index = static_cast<int>(state.elements.size());
    } else {
      e.text = pool[pool_at % pool.size()];
      ++pool_at;
    }
    state.elements.push_back(e);
  }
  return featured_index;
}

struct ChainPlan {
  int extract_step = 0;
  int reuse_step = 0;
  std::string value;
  std::string label;
};

}  // namespace synth_detail

/// Number of value chains for a task of this length under the degradation
/// profile: grows from 1 at the shortest lengths to 9 at length 60, so the
/// fraction of history-dependent steps rises with task length.
inline int degradation_chain_count(int length) {
  return std::max(1, (length - 15) / 5);
}

inline Task generate_task(uint64_t task_seed, const SynthConfig& config,
                          int task_index = 0,
                          std::optional<Intent> forced_intent = std::nullopt) {
  using namespace synth_detail;
  SplitMix rng(task_seed);

  const bool degradation = config.profile == "degradation";
  int length;
  if (degradation) {
    const int span = config.len_max - config.len_min + 1;
    length = config.len_min + (task_index % span);
  } else {
    length = rng.range(config.len_min, config.len_max);
  }
  const int chains = degradation ? degradation_chain_count(length) : 1;
  const int gap = degradation ? std::max(config.gap_min, length / 2)
                              : rng.range(config.gap_min, config.gap_max);

  // Skeleton: open appA, search, extract values in appA, switch to appB
  // (optionally through a popup), open the form, re-enter the values,
  // finish. Extraction i sits at step 3+i, reuse i at step 3+gap+i.
  const int first_extract = 3;
  const int last_extract = first_extract + chains - 1;
  const int first_reuse = first_extract + gap;
  const int last_reuse = first_reuse + chains - 1;
  const int finish_step = length - 1;
  const int form_step = first_reuse - 1;
  // appA fillers occupy [last_extract+1, switch-1]; appB ones the rest.
  const int region = form_step - (last_extract + 1);  // slots before the form
  if (length < gap + chains + 4 || region < 1 || last_reuse > finish_step - 1) {
    throw GenerationError(
        "infeasible config: length " + std::to_string(length) + " cannot hold " +
        std::to_string(chains) + " chain(s) with dependency gap " +
        std::to_string(gap));
  }
  // The popup needs its own slot between the switch and the form.
  const bool popup = region >= 2 && rng.chance_percent(60);
  const int switch_step = last_extract + 1 + (region - 1 - (popup ? 1 : 0)) / 2;
  const int popup_step = popup ? switch_step + 1 : -1;

  Intent intent = forced_intent ? *forced_intent
                                : static_cast<Intent>(rng.range(0, 7));
  const auto& apps = app_pool();
  const int pool_n = std::min(config.app_pool_size, static_cast<int>(apps.size()));
  const int a_idx = rng.range(0, pool_n - 1);
  int b_idx = rng.range(0, pool_n - 2);
  if (b_idx >= a_idx) ++b_idx;
  const std::string app_a = apps[a_idx];
  const std::string app_b = apps[b_idx];
  const std::string item = item_pool()[rng.next() % item_pool().size()];

  Task task;
  task.id = "t" + std::to_string(task_index) + "_" + std::to_string(task_seed % 100000);
  task.intent = intent;
  task.instruction = instruction_for(intent, item, app_a, app_b);
  task.apps = {app_a, app_b};

  // Planted values: unique 4-digit codes; pure digits so a missed recall
  // scores exactly zero text similarity against the UNKNOWN placeholder.
  std::vector<ChainPlan> plan(chains);
  std::vector<std::string> used_values;
  for (int i = 0; i < chains; ++i) {
    std::string value;
    do {
      value = std::to_string(rng.range(1100, 9999));
    } while (std::find(used_values.begin(), used_values.end(), value) !=
             used_values.end());
    used_values.push_back(value);
    plan[i].extract_step = first_extract + i;
    plan[i].reuse_step = first_reuse + i;
    plan[i].value = value;
    plan[i].label = value_label_pool()[rng.next() % value_label_pool().size()];
  }

  // Summary-mode retention knob: the scripted summarizer keeps the last 5
  // step summaries, so the count of summarized steps between extraction
  // and reuse decides whether the extraction note is still visible at the
  // reuse step. Even task indices stay under the window, odd ones roll out.
  const int noise_summaries = (task_index % 2 == 0) ? 0 : 3;

  int anchor_seq = 0;
  auto next_anchor_id = [&]() { return task.id + "_a" + std::to_string(anchor_seq++); };
  std::string subgoal_id;
  std::string state_change_id;
  std::string exception_id;
  std::string form_subgoal_id;
  std::vector<std::string> dep_ids;

  std::vector<int> noise_steps;  // fillers that carry a noise summary
  {
    // Spread noise summaries over the filler span between the last
    // extraction and the form.
    int at = last_extract + 1;
    for (int k = 0; k < noise_summaries; ++k) {
      while (at == switch_step || at == popup_step) ++at;
      if (at >= form_step) break;
      noise_steps.push_back(at);
      ++at;
    }
  }

  const char* noise_texts[] = {"browsing listing results page",
                               "scrolled through more offers",
                               "checked item details briefly"};

  int filler_rot = rng.range(0, 3);
  for (int t = 0; t < length; ++t) {
    Step step;
    step.state.step_index = t;
    step.state.screenshot_ref = "shot_" + task.id + "_" + std::to_string(t);
    step.state.app = t == 0 ? "home" : (t <= switch_step ? app_a : app_b);

    const ChainPlan* extract = nullptr;
    const ChainPlan* reuse = nullptr;
    for (const auto& c : plan) {
      if (c.extract_step == t) extract = &c;
      if (c.reuse_step == t) reuse = &c;
    }

    if (t == 0) {
      build_page(step.state, rng, 2, app_a, "app_icon");
      step.action = Action::open_app(app_a);
    } else if (t == 1) {
      const int idx = build_page(step.state, rng, 3, "Search", "search_box");
      const UiElement& el = step.state.elements[idx];
      step.action = Action::tap(el.bbox.center_x(), el.bbox.center_y());
    } else if (t == 2) {
      build_page(step.state, rng, 3, "Search " + app_a, "search_box");
      step.action = Action::input_text(item);
      Anchor a;
      a.id = next_anchor_id();
      subgoal_id = a.id;
      a.type = AnchorType::Subgoal;
      a.content = "search for " + item + " submitted in " + app_a;
      a.description = "later result pages refer to this query";
      a.evidence.push_back({t, std::nullopt, ""});
      a.predicate = AnchorPredicate{PredicateKind::ValueContains, t, t, item};
      step.gt_anchors.push_back(a);
      step.summary = "searched " + app_a + " for the " + item;
    } else if (extract) {
      const std::string text = extract->label + ": " + extract->value;
      const int idx = build_page(step.state, rng, 3, text, "value_field");
      const UiElement& el = step.state.elements[idx];
      step.action = Action::long_press(el.bbox.center_x(), el.bbox.center_y());
      Anchor a;
      a.id = next_anchor_id();
      dep_ids.push_back(a.id);
      a.type = AnchorType::Dependency;
      a.content = "copied " + extract->label + " " + extract->value + " for the " +
                  item + " from " + app_a;
      a.description = "this code must be re-entered later in " + app_b;
      a.evidence.push_back({t, step.state.elements[idx].bbox, extract->value});
      // Alternate the two value predicate forms across chains.
      if ((extract - plan.data()) % 2 == 0) {
        a.predicate = AnchorPredicate{PredicateKind::ValueContains,
                                      extract->reuse_step, extract->reuse_step,
                                      extract->value};
      } else {
        AnchorPredicate p;
        p.kind = PredicateKind::ValueEqualsEvidence;
        p.step_lo = extract->reuse_step;
        p.step_hi = extract->reuse_step;
        p.evidence_step = t;
        a.predicate = p;
      }
      if (!subgoal_id.empty()) {
        a.links.push_back({subgoal_id, LinkRelation::Prerequisite});
      }
      step.gt_anchors.push_back(a);
      step.summary = "noted " + extract->label + " " + extract->value + " in " + app_a;
    } else if (t == switch_step) {
      build_page(step.state, rng, 4, "", "");
      step.action = Action::open_app(app_b);
      Anchor a;
      a.id = next_anchor_id();
      state_change_id = a.id;
      a.type = AnchorType::StateChange;
      a.content = "switched from " + app_a + " to " + app_b;
      a.description = "the remaining steps run in " + app_b;
      a.evidence.push_back({t, std::nullopt, ""});
      AnchorPredicate p;
      p.kind = PredicateKind::ReachesStepWithApp;
      p.step_lo = t;
      p.step_hi = t;
      p.app = app_b;
      a.predicate = p;
      step.gt_anchors.push_back(a);
      step.summary = "switched to " + app_b + " to continue";
    } else if (t == popup_step) {
      const int idx = build_page(step.state, rng, 2, "Close ad", "dismiss_button");
      const UiElement& el = step.state.elements[idx];
      step.action = Action::tap(el.bbox.center_x(), el.bbox.center_y());
      Anchor a;
      a.id = next_anchor_id();
      exception_id = a.id;
      a.type = AnchorType::Exception;
      a.content = "dismissed a popup ad blocking " + app_b;
      a.description = "the form is unreachable until the popup is closed";
      a.evidence.push_back({t, el.bbox, ""});
      AnchorPredicate p;
      p.kind = PredicateKind::ActionKindAtStepRange;
      p.step_lo = t;
      p.step_hi = t;
      p.action_kind = ActionKind::Tap;
      a.predicate = p;
      if (!state_change_id.empty()) {
        a.links.push_back({state_change_id, LinkRelation::Blocks});
      }
      step.gt_anchors.push_back(a);
      step.summary = "dismissed a popup ad";
    } else if (t == form_step) {
      const int idx = build_page(step.state, rng, 3, "Enter code", "form_field");
      const UiElement& el = step.state.elements[idx];
      step.action = Action::tap(el.bbox.center_x(), el.bbox.center_y());
      Anchor a;
      a.id = next_anchor_id();
      form_subgoal_id = a.id;
      a.type = AnchorType::Subgoal;
      a.content = "claim form opened in " + app_b;
      a.description = "codes can now be entered";
      a.evidence.push_back({t, el.bbox, ""});
      // Ordering constraint: the form tap only counts after the app switch
      // actually happened.
      AnchorPredicate p;
      p.kind = PredicateKind::OrderedAfter;
      p.step_lo = t;
      p.step_hi = t;
      p.action_kind = ActionKind::Tap;
      p.anchor_id = state_change_id;
      a.predicate = p;
      if (!state_change_id.empty()) {
        a.links.push_back({state_change_id, LinkRelation::ResultOf});
      }
      step.gt_anchors.push_back(a);
      step.summary = "opened the claim form in " + app_b;
    } else if (reuse) {
      build_page(step.state, rng, 3, "Enter code", "form_field");
      step.action = Action::input_text(reuse->value);
    } else if (t == finish_step) {
      build_page(step.state, rng, 2, "Submitted", "confirmation");
      step.action = Action::of(ActionKind::Finish);
      Anchor a;
      a.id = next_anchor_id();
      a.type = AnchorType::Finish;
      a.content = "claim submitted with the required codes in " + app_b;
      a.description = "terminal success state";
      a.evidence.push_back({t, std::nullopt, ""});
      AnchorPredicate p;
      p.kind = PredicateKind::ActionKindAtStepRange;
      p.step_lo = t;
      p.step_hi = t;
      p.action_kind = ActionKind::Finish;
      a.predicate = p;
      for (const auto& dep : dep_ids) {
        a.links.push_back({dep, LinkRelation::Prerequisite});
      }
      if (!exception_id.empty()) {
        a.links.push_back({exception_id, LinkRelation::Prerequisite});
      }
      if (!form_subgoal_id.empty()) {
        a.links.push_back({form_subgoal_id, LinkRelation::Enables});
      }
      step.gt_anchors.push_back(a);
      task.final_anchor_id = a.id;
    } else {
      // Filler: neutral navigation that no predicate depends on.
      const int idx = build_page(step.state, rng, 4, "", "");
      (void)idx;
      switch (filler_rot++ % 4) {
        case 0:
          step.action = Action::swipe(500, 600, SwipeDirection::Up, DistanceHint::Medium);
          break;
        case 1: {
          const UiElement& el = step.state.elements[0];
          step.action = Action::tap(el.bbox.center_x(), el.bbox.center_y());
          break;
        }
        case 2:
          step.action = Action::swipe(500, 400, SwipeDirection::Down, std::nullopt);
          break;
        case 3:
          step.action = Action::of(ActionKind::Wait);
          break;
      }
      for (size_t k = 0; k < noise_steps.size(); ++k) {
        if (noise_steps[k] == t) step.summary = noise_texts[k % 3];
      }
    }
    task.steps.push_back(std::move(step));
  }

  // Top up with CONTEXT_INFO anchors on appB fillers until the drawn
  // anchor target is met (or no filler slots remain).
  const int base_anchors = anchor_seq;
  const int target = rng.range(config.anchors_min, config.anchors_max);
  int wanted_context = std::max(0, std::min(2, target - base_anchors));
  for (int t = last_reuse + 1; t < finish_step && wanted_context > 0; ++t) {
    Step& step = task.steps[t];
    if (!step.gt_anchors.empty() || step.action.kind != ActionKind::Tap) continue;
    Anchor a;
    a.id = next_anchor_id();
    a.type = AnchorType::ContextInfo;
    a.content = "kept default delivery options in " + app_b;
    a.description = "no extra constraints were selected";
    a.evidence.push_back({t, std::nullopt, ""});
    AnchorPredicate p;
    p.kind = PredicateKind::ActionKindAtStepRange;
    p.step_lo = t;
    p.step_hi = t;
    p.action_kind = ActionKind::Tap;
    a.predicate = p;
    step.gt_anchors.push_back(a);
    --wanted_context;
  }

  return task;
}

// ---------------------------------------------------------------- suites

/// Exact intent allocation by largest remainder; ties resolve in enum
/// order. An empty mix means uniform over all 8 classes.
inline std::vector<Intent> allocate_intents(const SynthConfig& config) {
  std::vector<std::pair<Intent, double>> mix;
  if (config.intent_mix.empty()) {
    for (const auto& [intent, name] : kIntentNames) mix.emplace_back(intent, 1.0);
  } else {
    for (const auto& [name, frac] : config.intent_mix) {
      auto intent = intent_from(name);
      if (intent && frac > 0) mix.emplace_back(*intent, frac);
    }
    std::sort(mix.begin(), mix.end(),
              [](const auto& a, const auto& b) { return a.first < b.first; });
  }
  if (mix.empty()) throw GenerationError("intent mix selects no intents");
  double total = 0;
  for (const auto& [i, f] : mix) total += f;

  const int n = config.num_tasks;
  std::vector<int> counts(mix.size(), 0);
  std::vector<std::pair<double, size_t>> remainders;
  int assigned = 0;
  for (size_t k = 0; k < mix.size(); ++k) {
    const double exact = n * mix[k].second / total;
    counts[k] = static_cast<int>(exact);
    assigned += counts[k];
    remainders.emplace_back(exact - counts[k], k);
  }
  std::stable_sort(remainders.begin(), remainders.end(),
                   [](const auto& a, const auto& b) { return a.first > b.first; });
  for (int extra = 0; extra < n - assigned; ++extra) {
    counts[remainders[extra % remainders.size()].second] += 1;
  }

  std::vector<Intent> out;
  out.reserve(n);
  for (size_t k = 0; k < mix.size(); ++k) {
    for (int c = 0; c < counts[k]; ++c) out.push_back(mix[k].first);
  }
  return out;
}

struct GeneratedSuite {
  std::vector<Task> tasks;
  SuiteManifest manifest;
};

inline GeneratedSuite generate_suite(const SynthConfig& config) {
  std::vector<std::string> issues = config.validate();
  if (!issues.empty()) throw GenerationError(issues.front());

  std::vector<Intent> intents = allocate_intents(config);
  GeneratedSuite suite;
  suite.tasks.reserve(config.num_tasks);
  for (int i = 0; i < config.num_tasks; ++i) {
    suite.tasks.push_back(
        generate_task(derive_task_seed(config.seed, i), config, i, intents[i]));
  }
  suite.manifest.suite_name = config.suite_name;
  suite.manifest.seed = config.seed;
  suite.manifest.generator_version = std::string(kGeneratorVersion);
  suite.manifest.config = config.to_json();
  suite.manifest.config_hash = stable_hash_hex(config.to_json().dump());
  return suite;
}

// ---------------------------------------------------------------- checks

/// Replays the oracle against the task and verifies that the task is
/// internally sound: structure valid, every predicate satisfied by the
/// ground truth, predicates never ahead of their evidence, and dependency
/// gaps at least as wide as configured.
inline std::vector<std::string> self_check(const Task& task,
                                           const SynthConfig* config = nullptr) {
  std::vector<std::string> v = validate_task(task);
  if (!v.empty()) return v;

  if (task.final_anchor_id.empty()) {
    v.push_back("no FINISH anchor annotated");
    return v;
  }

  for (const Anchor* a : task.all_anchors()) {
    if (!a->predicate) {
      v.push_back("anchor without predicate: " + a->id);
      continue;
    }
    int max_evidence = -1;
    for (const auto& ev : a->evidence) max_evidence = std::max(max_evidence, ev.step_index);
    if (max_evidence >= 0 && a->predicate->step_hi < max_evidence) {
      v.push_back("anchor " + a->id + ": predicate precedes evidence");
    }
  }
  if (!v.empty()) return v;

  // Oracle replay: the GT actions must satisfy every annotated predicate.
  RunRecord oracle;
  oracle.task_id = task.id;
  oracle.policy = "selfcheck";
  for (int t = 0; t < task.length(); ++t) {
    StepRecord s;
    s.step_index = t;
    s.predicted = task.steps[t].action;
    s.gt = task.steps[t].action;
    oracle.steps.push_back(s);
  }
  TaskOutcome outcome = evaluate_task(task, oracle, TcrScope::AllAnchors);
  if (!outcome.evaluable) {
    v.push_back("oracle replay not evaluable: " + outcome.exclusion_reason);
  } else {
    for (const auto& check : outcome.checks) {
      if (!check.satisfied) {
        const Anchor* a = task.find_anchor(check.anchor_id);
        std::string kind = a && a->predicate
                               ? std::string(to_string(a->predicate->kind))
                               : "?";
        v.push_back(kind + " unsatisfied by GT: anchor " + check.anchor_id);
      }
    }
  }

  if (config) {
    for (const Anchor* a : task.all_anchors()) {
      if (a->type != AnchorType::Dependency || !a->predicate) continue;
      int evidence_step = -1;
      for (const auto& ev : a->evidence) {
        if (!ev.extracted_value.empty()) evidence_step = ev.step_index;
      }
      if (evidence_step < 0) continue;
      const int gap = a->predicate->step_lo - evidence_step;
      if (gap < config->gap_min) {
        v.push_back("anchor " + a->id + ": dependency gap " + std::to_string(gap) +
                    " below configured minimum " + std::to_string(config->gap_min));
      }
    }
  }
  return v;
}

}  // namespace asmb
