#pragma once

#include <algorithm>
#include <array>
#include <cctype>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

// Canonical data model for GUI interaction trajectories: actions on a
// normalized 0-1000 coordinate grid, recorded UI states, tasks, and the
// sparse intermediate-state anchors with their causal links.

namespace asmb {

// ---------------------------------------------------------------- actions

enum class ActionKind {
  OpenApp,
  Tap,
  LongPress,
  Swipe,
  InputText,
  SwipeTwoPoints,
  Wait,
  CaptureScreen,
  Home,
  Back,
  Finish,
};

inline constexpr std::array<std::pair<ActionKind, std::string_view>, 11>
    kActionKindNames{{
        {ActionKind::OpenApp, "open_app"},
        {ActionKind::Tap, "tap"},
        {ActionKind::LongPress, "long_press"},
        {ActionKind::Swipe, "swipe"},
        {ActionKind::InputText, "input_text"},
        {ActionKind::SwipeTwoPoints, "swipe_two_points"},
        {ActionKind::Wait, "wait"},
        {ActionKind::CaptureScreen, "capture_screen"},
        {ActionKind::Home, "home"},
        {ActionKind::Back, "back"},
        {ActionKind::Finish, "finish"},
    }};

inline std::string_view to_string(ActionKind kind) {
  for (const auto& [k, name] : kActionKindNames) {
    if (k == kind) return name;
  }
  return "?";
}

inline std::optional<ActionKind> action_kind_from(std::string_view name) {
  for (const auto& [k, n] : kActionKindNames) {
    if (n == name) return k;
  }
  return std::nullopt;
}

enum class SwipeDirection { Up, Down, Left, Right };

inline std::string_view to_string(SwipeDirection d) {
  switch (d) {
    case SwipeDirection::Up: return "up";
    case SwipeDirection::Down: return "down";
    case SwipeDirection::Left: return "left";
    case SwipeDirection::Right: return "right";
  }
  return "?";
}

inline std::optional<SwipeDirection> swipe_direction_from(std::string_view s) {
  if (s == "up") return SwipeDirection::Up;
  if (s == "down") return SwipeDirection::Down;
  if (s == "left") return SwipeDirection::Left;
  if (s == "right") return SwipeDirection::Right;
  return std::nullopt;
}

enum class DistanceHint { Short, Medium, Long };

inline std::string_view to_string(DistanceHint h) {
  switch (h) {
    case DistanceHint::Short: return "short";
    case DistanceHint::Medium: return "medium";
    case DistanceHint::Long: return "long";
  }
  return "?";
}

inline std::optional<DistanceHint> distance_hint_from(std::string_view s) {
  if (s == "short") return DistanceHint::Short;
  if (s == "medium") return DistanceHint::Medium;
  if (s == "long") return DistanceHint::Long;
  return std::nullopt;
}

// Coordinate grid bounds. (0,0) is top-left, (1000,1000) bottom-right.
inline constexpr int kCoordMax = 1000;

struct Action {
  ActionKind kind = ActionKind::Wait;
  int x = 0;
  int y = 0;
  int x_end = 0;
  int y_end = 0;
  std::string value;                          // input text or app name
  std::optional<SwipeDirection> direction;    // swipe only
  std::optional<DistanceHint> distance_hint;  // swipe only, advisory

  bool operator==(const Action&) const = default;

  static Action open_app(std::string app) {
    Action a;
    a.kind = ActionKind::OpenApp;
    a.value = std::move(app);
    return a;
  }
  static Action tap(int x, int y) {
    Action a;
    a.kind = ActionKind::Tap;
    a.x = x;
    a.y = y;
    return a;
  }
  static Action long_press(int x, int y) {
    Action a;
    a.kind = ActionKind::LongPress;
    a.x = x;
    a.y = y;
    return a;
  }
  static Action swipe(int x, int y, SwipeDirection d,
                      std::optional<DistanceHint> hint = std::nullopt) {
    Action a;
    a.kind = ActionKind::Swipe;
    a.x = x;
    a.y = y;
    a.direction = d;
    a.distance_hint = hint;
    return a;
  }
  static Action input_text(std::string text) {
    Action a;
    a.kind = ActionKind::InputText;
    a.value = std::move(text);
    return a;
  }
  static Action swipe_two_points(int x, int y, int x_end, int y_end) {
    Action a;
    a.kind = ActionKind::SwipeTwoPoints;
    a.x = x;
    a.y = y;
    a.x_end = x_end;
    a.y_end = y_end;
    return a;
  }
  static Action of(ActionKind kind) {
    Action a;
    a.kind = kind;
    return a;
  }
};

// ---------------------------------------------------------------- geometry

struct Bbox {
  int x_min = 0;
  int y_min = 0;
  int x_max = 0;
  int y_max = 0;

  bool operator==(const Bbox&) const = default;

  // Inclusive containment on the integer grid.
  bool contains(int x, int y) const {
    return x >= x_min && x <= x_max && y >= y_min && y <= y_max;
  }
  int center_x() const { return (x_min + x_max) / 2; }
  int center_y() const { return (y_min + y_max) / 2; }
  bool valid() const {
    return x_min < x_max && y_min < y_max && x_min >= 0 && y_min >= 0 &&
           x_max <= kCoordMax && y_max <= kCoordMax;
  }
};

/// Dominant-axis direction of a two-point swipe. Screen y grows downward,
/// so negative dy means up. Ties (|dx| == |dy|) go to the vertical axis.
inline SwipeDirection swipe_direction(int x, int y, int x_end, int y_end) {
  if (x == x_end && y == y_end) {
    throw std::invalid_argument("degenerate swipe: endpoints are identical");
  }
  const int dx = x_end - x;
  const int dy = y_end - y;
  if (std::abs(dy) >= std::abs(dx)) {
    return dy < 0 ? SwipeDirection::Up : SwipeDirection::Down;
  }
  return dx < 0 ? SwipeDirection::Left : SwipeDirection::Right;
}

/// Direction of any swipe-family action: the declared direction for swipe,
/// the derived one for swipe_two_points. Returns nullopt for degenerate or
/// non-swipe input.
inline std::optional<SwipeDirection> effective_swipe_direction(const Action& a) {
  if (a.kind == ActionKind::Swipe) return a.direction;
  if (a.kind == ActionKind::SwipeTwoPoints) {
    if (a.x == a.x_end && a.y == a.y_end) return std::nullopt;
    return swipe_direction(a.x, a.y, a.x_end, a.y_end);
  }
  return std::nullopt;
}

// ---------------------------------------------------------------- text utils

inline std::string trim(std::string_view s) {
  size_t b = 0;
  size_t e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return std::string(s.substr(b, e - b));
}

/// Lowercase, trim, and collapse internal whitespace runs to single spaces.
/// This is the canonical form used for anchor dedup and value matching.
inline std::string normalize_text(std::string_view s) {
  std::string out;
  out.reserve(s.size());
  bool in_ws = true;  // leading whitespace is dropped
  for (char c : s) {
    if (std::isspace(static_cast<unsigned char>(c))) {
      in_ws = true;
      continue;
    }
    if (in_ws && !out.empty()) out.push_back(' ');
    in_ws = false;
    out.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  }
  return out;
}

inline bool contains_normalized(std::string_view haystack, std::string_view needle) {
  return normalize_text(haystack).find(normalize_text(needle)) != std::string::npos;
}

// ---------------------------------------------------------------- validation

/// Collects every invariant violation of an action; a valid action yields
/// an empty list. Validation never throws.
inline std::vector<std::string> validate_action(const Action& a) {
  std::vector<std::string> v;
  auto coord = [&](int val, const char* name) {
    if (val < 0 || val > kCoordMax) {
      v.push_back(std::string(name) + " out of range [0," +
                  std::to_string(kCoordMax) + "]: " + std::to_string(val));
    }
  };
  coord(a.x, "x");
  coord(a.y, "y");
  coord(a.x_end, "x_end");
  coord(a.y_end, "y_end");

  const bool uses_point = a.kind == ActionKind::Tap ||
                          a.kind == ActionKind::LongPress ||
                          a.kind == ActionKind::Swipe ||
                          a.kind == ActionKind::SwipeTwoPoints;
  const bool uses_end = a.kind == ActionKind::SwipeTwoPoints;
  const bool uses_value =
      a.kind == ActionKind::InputText || a.kind == ActionKind::OpenApp;

  if (!uses_point && (a.x != 0 || a.y != 0)) {
    v.push_back("unused coordinates (x,y) must be 0 for " +
                std::string(to_string(a.kind)));
  }
  if (!uses_end && (a.x_end != 0 || a.y_end != 0)) {
    v.push_back("unused coordinates (x_end,y_end) must be 0 for " +
                std::string(to_string(a.kind)));
  }
  if (a.kind == ActionKind::SwipeTwoPoints && a.x == a.x_end && a.y == a.y_end) {
    v.push_back("swipe_two_points endpoints must differ");
  }
  if (a.kind == ActionKind::Swipe && !a.direction) {
    v.push_back("swipe requires direction");
  }
  if (a.kind != ActionKind::Swipe && a.direction) {
    v.push_back("direction is only valid for swipe");
  }
  if (a.kind != ActionKind::Swipe && a.distance_hint) {
    v.push_back("distance_hint is only valid for swipe");
  }
  if (uses_value && trim(a.value).empty()) {
    v.push_back(std::string(to_string(a.kind)) + " requires non-empty value");
  }
  return v;
}

// ---------------------------------------------------------------- UI state

struct UiElement {
  Bbox bbox;
  std::string text;  // visible text, may be empty
  std::string role;  // semantic label, may be empty

  bool operator==(const UiElement&) const = default;
};

struct UiState {
  int step_index = 0;
  std::string screenshot_ref;  // opaque; never decoded
  std::string app;
  std::vector<UiElement> elements;

  bool operator==(const UiState&) const = default;

  /// First annotated element containing the point, if any.
  const UiElement* element_at(int x, int y) const {
    for (const auto& e : elements) {
      if (e.bbox.contains(x, y)) return &e;
    }
    return nullptr;
  }
};

// ---------------------------------------------------------------- anchors

enum class AnchorType { Subgoal, StateChange, Dependency, Exception, ContextInfo, Finish };

inline constexpr std::array<std::pair<AnchorType, std::string_view>, 6>
    kAnchorTypeNames{{
        {AnchorType::Subgoal, "SUBGOAL"},
        {AnchorType::StateChange, "STATE_CHANGE"},
        {AnchorType::Dependency, "DEPENDENCY"},
        {AnchorType::Exception, "EXCEPTION"},
        {AnchorType::ContextInfo, "CONTEXT_INFO"},
        {AnchorType::Finish, "FINISH"},
    }};

inline std::string_view to_string(AnchorType t) {
  for (const auto& [k, n] : kAnchorTypeNames) {
    if (k == t) return n;
  }
  return "?";
}

inline std::optional<AnchorType> anchor_type_from(std::string_view s) {
  for (const auto& [k, n] : kAnchorTypeNames) {
    if (n == s) return k;
  }
  return std::nullopt;
}

/// Lowercase bracket tags as they appear in prompts ("[subgoal]" etc).
inline std::optional<AnchorType> anchor_type_from_tag(std::string_view s) {
  std::string lower = normalize_text(s);
  if (lower == "subgoal") return AnchorType::Subgoal;
  if (lower == "state_change") return AnchorType::StateChange;
  if (lower == "dependency") return AnchorType::Dependency;
  if (lower == "exception") return AnchorType::Exception;
  if (lower == "context_info") return AnchorType::ContextInfo;
  if (lower == "finish") return AnchorType::Finish;
  return std::nullopt;
}

inline std::string anchor_type_tag(AnchorType t) {
  std::string s(to_string(t));
  for (char& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return s;
}

enum class AnchorStatus { Active, Superseded, Invalidated };

inline std::string_view to_string(AnchorStatus s) {
  switch (s) {
    case AnchorStatus::Active: return "active";
    case AnchorStatus::Superseded: return "superseded";
    case AnchorStatus::Invalidated: return "invalidated";
  }
  return "?";
}

inline std::optional<AnchorStatus> anchor_status_from(std::string_view s) {
  if (s == "active") return AnchorStatus::Active;
  if (s == "superseded") return AnchorStatus::Superseded;
  if (s == "invalidated") return AnchorStatus::Invalidated;
  return std::nullopt;
}

enum class LinkRelation { Prerequisite, Enables, ResultOf, Blocks };

inline std::string_view to_string(LinkRelation r) {
  switch (r) {
    case LinkRelation::Prerequisite: return "prerequisite";
    case LinkRelation::Enables: return "enables";
    case LinkRelation::ResultOf: return "result_of";
    case LinkRelation::Blocks: return "blocks";
  }
  return "?";
}

inline std::optional<LinkRelation> link_relation_from(std::string_view s) {
  if (s == "prerequisite") return LinkRelation::Prerequisite;
  if (s == "enables") return LinkRelation::Enables;
  if (s == "result_of") return LinkRelation::ResultOf;
  if (s == "blocks") return LinkRelation::Blocks;
  return std::nullopt;
}

struct EvidenceRef {
  int step_index = 0;
  std::optional<Bbox> element_bbox;
  std::string extracted_value;  // empty when nothing was extracted

  bool operator==(const EvidenceRef&) const = default;
};

struct CausalLink {
  std::string source_anchor_id;
  LinkRelation relation = LinkRelation::Prerequisite;

  bool operator==(const CausalLink&) const = default;
};

// Machine-checkable success conditions attached to ground-truth anchors.
// Each form is evaluated against the *predicted* action sequence of a run.
enum class PredicateKind {
  ActionKindAtStepRange,  // some predicted action in [lo,hi] has this kind
  ValueContains,          // some predicted value in [lo,hi] contains `text`
  ValueEqualsEvidence,    // some predicted value in [lo,hi] equals the
                          // extracted_value of this anchor's evidence at
                          // `evidence_step`
  ReachesStepWithApp,     // some predicted open_app in [lo,hi] names `app`
  OrderedAfter,           // first kind-match in [lo,hi] happens strictly
                          // after anchor `anchor_id` is satisfied
};

inline std::string_view to_string(PredicateKind k) {
  switch (k) {
    case PredicateKind::ActionKindAtStepRange: return "action_kind_at_step_range";
    case PredicateKind::ValueContains: return "value_contains";
    case PredicateKind::ValueEqualsEvidence: return "value_equals_evidence";
    case PredicateKind::ReachesStepWithApp: return "reaches_step_with_app";
    case PredicateKind::OrderedAfter: return "ordered_after";
  }
  return "?";
}

inline std::optional<PredicateKind> predicate_kind_from(std::string_view s) {
  if (s == "action_kind_at_step_range") return PredicateKind::ActionKindAtStepRange;
  if (s == "value_contains") return PredicateKind::ValueContains;
  if (s == "value_equals_evidence") return PredicateKind::ValueEqualsEvidence;
  if (s == "reaches_step_with_app") return PredicateKind::ReachesStepWithApp;
  if (s == "ordered_after") return PredicateKind::OrderedAfter;
  return std::nullopt;
}

struct AnchorPredicate {
  PredicateKind kind = PredicateKind::ActionKindAtStepRange;
  int step_lo = 0;
  int step_hi = 0;
  std::string text;                          // ValueContains
  std::string app;                           // ReachesStepWithApp
  ActionKind action_kind = ActionKind::Tap;  // ActionKindAtStepRange, OrderedAfter
  int evidence_step = 0;                     // ValueEqualsEvidence
  std::string anchor_id;                     // OrderedAfter

  bool operator==(const AnchorPredicate&) const = default;
};

struct Anchor {
  std::string id;
  AnchorType type = AnchorType::Subgoal;
  std::string content;      // concise semantic statement
  std::string description;  // why it matters for later reasoning
  std::vector<EvidenceRef> evidence;
  std::vector<CausalLink> links;
  AnchorStatus status = AnchorStatus::Active;
  std::optional<AnchorPredicate> predicate;  // ground-truth anchors only

  bool operator==(const Anchor&) const = default;
};

// ---------------------------------------------------------------- tasks

enum class Intent {
  Lookup,
  CompareDecide,
  PurchaseOrder,
  Booking,
  Communicate,
  ShareRecommend,
  CreateContent,
  ConfigureAuthorize,
};

inline constexpr std::array<std::pair<Intent, std::string_view>, 8> kIntentNames{{
    {Intent::Lookup, "lookup"},
    {Intent::CompareDecide, "compare_decide"},
    {Intent::PurchaseOrder, "purchase_order"},
    {Intent::Booking, "booking"},
    {Intent::Communicate, "communicate"},
    {Intent::ShareRecommend, "share_recommend"},
    {Intent::CreateContent, "create_content"},
    {Intent::ConfigureAuthorize, "configure_authorize"},
}};

inline std::string_view to_string(Intent i) {
  for (const auto& [k, n] : kIntentNames) {
    if (k == i) return n;
  }
  return "?";
}

inline std::optional<Intent> intent_from(std::string_view s) {
  for (const auto& [k, n] : kIntentNames) {
    if (n == s) return k;
  }
  return std::nullopt;
}

// The three history representations a policy can be given.
enum class HistoryMode { Raw, Summary, Asm };

inline std::string_view to_string(HistoryMode m) {
  switch (m) {
    case HistoryMode::Raw: return "raw";
    case HistoryMode::Summary: return "summary";
    case HistoryMode::Asm: return "asm";
  }
  return "?";
}

inline std::optional<HistoryMode> history_mode_from(std::string_view s) {
  if (s == "raw") return HistoryMode::Raw;
  if (s == "summary") return HistoryMode::Summary;
  if (s == "asm") return HistoryMode::Asm;
  return std::nullopt;
}

struct Step {
  UiState state;
  Action action;  // ground truth
  std::string reasoning;
  std::string summary;
  std::vector<Anchor> gt_anchors;  // usually empty; anchors are sparse

  bool operator==(const Step&) const = default;
};

struct Task {
  std::string id;
  std::string instruction;
  Intent intent = Intent::Lookup;
  std::vector<std::string> apps;
  std::vector<Step> steps;
  std::string final_anchor_id;  // empty for imported tasks without anchors

  bool operator==(const Task&) const = default;

  int length() const { return static_cast<int>(steps.size()); }

  const Anchor* find_anchor(std::string_view anchor_id) const {
    for (const auto& step : steps) {
      for (const auto& a : step.gt_anchors) {
        if (a.id == anchor_id) return &a;
      }
    }
    return nullptr;
  }

  /// Step index at which an anchor was created, or -1.
  int anchor_step(std::string_view anchor_id) const {
    for (size_t i = 0; i < steps.size(); ++i) {
      for (const auto& a : steps[i].gt_anchors) {
        if (a.id == anchor_id) return static_cast<int>(i);
      }
    }
    return -1;
  }

  std::vector<const Anchor*> all_anchors() const {
    std::vector<const Anchor*> out;
    for (const auto& step : steps) {
      for (const auto& a : step.gt_anchors) out.push_back(&a);
    }
    return out;
  }
};

/// Full structural validation of a task; returns every violation found.
/// Parsing rejects tasks with violations, the generator self-checks with it.
inline std::vector<std::string> validate_task(const Task& t) {
  std::vector<std::string> v;
  if (t.steps.empty()) {
    v.push_back("task has no steps");
    return v;
  }
  for (size_t i = 0; i < t.steps.size(); ++i) {
    const Step& s = t.steps[i];
    if (s.state.step_index != static_cast<int>(i)) {
      v.push_back("step " + std::to_string(i) + ": step_index " +
                  std::to_string(s.state.step_index) + " does not match position");
    }
    for (const auto& e : s.state.elements) {
      if (!e.bbox.valid()) {
        v.push_back("step " + std::to_string(i) + ": element bbox invalid");
      }
    }
    for (const std::string& av : validate_action(s.action)) {
      v.push_back("step " + std::to_string(i) + ": " + av);
    }
    if (s.action.kind == ActionKind::Finish && i + 1 != t.steps.size()) {
      v.push_back("finish action at step " + std::to_string(i) + " is not last");
    }
  }

  // Anchors in creation order: ids unique, links strictly backward,
  // evidence never ahead of creation.
  std::unordered_map<std::string, size_t> creation_order;
  size_t order = 0;
  int finish_steps = 0;
  for (size_t i = 0; i < t.steps.size(); ++i) {
    bool step_has_finish = false;
    for (const auto& a : t.steps[i].gt_anchors) {
      if (creation_order.count(a.id)) {
        v.push_back("duplicate anchor id: " + a.id);
        continue;
      }
      for (const auto& ev : a.evidence) {
        if (ev.step_index < 0 || ev.step_index >= static_cast<int>(t.steps.size())) {
          v.push_back("anchor " + a.id + ": evidence step out of range");
        } else if (ev.step_index > static_cast<int>(i)) {
          v.push_back("anchor " + a.id + ": evidence step " +
                      std::to_string(ev.step_index) + " exceeds creation step " +
                      std::to_string(i));
        }
      }
      for (const auto& link : a.links) {
        auto it = creation_order.find(link.source_anchor_id);
        if (it == creation_order.end()) {
          v.push_back("anchor " + a.id + ": causal link target not yet created: " +
                      link.source_anchor_id);
        }
      }
      if (a.type == AnchorType::Finish) step_has_finish = true;
      creation_order[a.id] = order++;
    }
    if (step_has_finish) ++finish_steps;
  }
  if (finish_steps > 1) {
    v.push_back("more than one step carries a FINISH anchor");
  }
  if (!t.final_anchor_id.empty()) {
    const Anchor* fin = t.find_anchor(t.final_anchor_id);
    if (!fin) {
      v.push_back("final_anchor_id does not resolve: " + t.final_anchor_id);
    } else if (fin->type != AnchorType::Finish) {
      v.push_back("final_anchor_id is not a FINISH anchor: " + t.final_anchor_id);
    }
  }
  return v;
}

}  // namespace asmb
