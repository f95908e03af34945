#pragma once

#include <cstdio>
#include <fstream>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "asmb/domain.hpp"

// JSON wire format for tasks and suites. One task per line, snake_case
// keys, absent optionals omitted. Serialization is canonical: keys are
// emitted in sorted order and serialize(parse(serialize(t))) == serialize(t).

namespace asmb {

using json = nlohmann::json;

class ParseError : public std::runtime_error {
 public:
  explicit ParseError(const std::string& msg) : std::runtime_error(msg) {}
  ParseError(int line, const std::string& msg)
      : std::runtime_error("line " + std::to_string(line) + ": " + msg) {}
};

namespace detail {

inline const json& require_field(const json& j, const char* key) {
  auto it = j.find(key);
  if (it == j.end()) throw ParseError(std::string("missing field: ") + key);
  return *it;
}

inline std::string require_string(const json& j, const char* key) {
  const json& f = require_field(j, key);
  if (!f.is_string()) throw ParseError(std::string("field is not a string: ") + key);
  return f.get<std::string>();
}

inline int require_int(const json& j, const char* key) {
  const json& f = require_field(j, key);
  if (!f.is_number_integer()) throw ParseError(std::string("field is not an integer: ") + key);
  return f.get<int>();
}

inline std::string optional_string(const json& j, const char* key) {
  auto it = j.find(key);
  if (it == j.end() || it->is_null()) return "";
  if (!it->is_string()) throw ParseError(std::string("field is not a string: ") + key);
  return it->get<std::string>();
}

}  // namespace detail

// ---------------------------------------------------------------- bbox

inline json bbox_to_json(const Bbox& b) {
  return json::array({b.x_min, b.y_min, b.x_max, b.y_max});
}

inline Bbox bbox_from_json(const json& j) {
  if (!j.is_array() || j.size() != 4) {
    throw ParseError("bbox must be an array of 4 integers");
  }
  Bbox b;
  b.x_min = j[0].get<int>();
  b.y_min = j[1].get<int>();
  b.x_max = j[2].get<int>();
  b.y_max = j[3].get<int>();
  return b;
}

// ---------------------------------------------------------------- action

inline json action_to_json(const Action& a) {
  json j;
  j["kind"] = std::string(to_string(a.kind));
  j["x"] = a.x;
  j["y"] = a.y;
  j["x_end"] = a.x_end;
  j["y_end"] = a.y_end;
  j["value"] = a.value;
  if (a.direction) j["direction"] = std::string(to_string(*a.direction));
  if (a.distance_hint) j["distance_hint"] = std::string(to_string(*a.distance_hint));
  return j;
}

inline Action action_from_json(const json& j) {
  Action a;
  const std::string kind = detail::require_string(j, "kind");
  auto k = action_kind_from(kind);
  if (!k) throw ParseError("unknown action kind: " + kind);
  a.kind = *k;
  a.x = detail::require_int(j, "x");
  a.y = detail::require_int(j, "y");
  a.x_end = detail::require_int(j, "x_end");
  a.y_end = detail::require_int(j, "y_end");
  a.value = detail::optional_string(j, "value");
  if (j.contains("direction") && !j["direction"].is_null()) {
    auto d = swipe_direction_from(j["direction"].get<std::string>());
    if (!d) throw ParseError("unknown direction: " + j["direction"].get<std::string>());
    a.direction = d;
  }
  if (j.contains("distance_hint") && !j["distance_hint"].is_null()) {
    auto h = distance_hint_from(j["distance_hint"].get<std::string>());
    if (!h) throw ParseError("unknown distance_hint: " + j["distance_hint"].get<std::string>());
    a.distance_hint = h;
  }
  return a;
}

// ---------------------------------------------------------------- predicate

inline json predicate_to_json(const AnchorPredicate& p) {
  json j;
  j["kind"] = std::string(to_string(p.kind));
  j["step_lo"] = p.step_lo;
  j["step_hi"] = p.step_hi;
  switch (p.kind) {
    case PredicateKind::ActionKindAtStepRange:
      j["action_kind"] = std::string(to_string(p.action_kind));
      break;
    case PredicateKind::ValueContains:
      j["text"] = p.text;
      break;
    case PredicateKind::ValueEqualsEvidence:
      j["evidence_step"] = p.evidence_step;
      break;
    case PredicateKind::ReachesStepWithApp:
      j["app"] = p.app;
      break;
    case PredicateKind::OrderedAfter:
      j["action_kind"] = std::string(to_string(p.action_kind));
      j["anchor_id"] = p.anchor_id;
      break;
  }
  return j;
}

inline AnchorPredicate predicate_from_json(const json& j) {
  AnchorPredicate p;
  const std::string kind = detail::require_string(j, "kind");
  auto k = predicate_kind_from(kind);
  if (!k) throw ParseError("unknown predicate kind: " + kind);
  p.kind = *k;
  p.step_lo = detail::require_int(j, "step_lo");
  p.step_hi = detail::require_int(j, "step_hi");
  switch (p.kind) {
    case PredicateKind::ActionKindAtStepRange: {
      auto a = action_kind_from(detail::require_string(j, "action_kind"));
      if (!a) throw ParseError("unknown predicate action_kind");
      p.action_kind = *a;
      break;
    }
    case PredicateKind::ValueContains:
      p.text = detail::require_string(j, "text");
      break;
    case PredicateKind::ValueEqualsEvidence:
      p.evidence_step = detail::require_int(j, "evidence_step");
      break;
    case PredicateKind::ReachesStepWithApp:
      p.app = detail::require_string(j, "app");
      break;
    case PredicateKind::OrderedAfter: {
      auto a = action_kind_from(detail::require_string(j, "action_kind"));
      if (!a) throw ParseError("unknown predicate action_kind");
      p.action_kind = *a;
      p.anchor_id = detail::require_string(j, "anchor_id");
      break;
    }
  }
  return p;
}

// ---------------------------------------------------------------- anchor

inline json anchor_to_json(const Anchor& a) {
  json j;
  j["id"] = a.id;
  j["type"] = std::string(to_string(a.type));
  j["content"] = a.content;
  if (!a.description.empty()) j["description"] = a.description;
  json ev = json::array();
  for (const auto& e : a.evidence) {
    json je;
    je["step_index"] = e.step_index;
    if (e.element_bbox) je["element_bbox"] = bbox_to_json(*e.element_bbox);
    if (!e.extracted_value.empty()) je["extracted_value"] = e.extracted_value;
    ev.push_back(je);
  }
  j["evidence"] = ev;
  json links = json::array();
  for (const auto& l : a.links) {
    links.push_back({{"source_anchor_id", l.source_anchor_id},
                     {"relation", std::string(to_string(l.relation))}});
  }
  j["links"] = links;
  j["status"] = std::string(to_string(a.status));
  if (a.predicate) j["predicate"] = predicate_to_json(*a.predicate);
  return j;
}

inline Anchor anchor_from_json(const json& j) {
  Anchor a;
  a.id = detail::require_string(j, "id");
  auto t = anchor_type_from(detail::require_string(j, "type"));
  if (!t) throw ParseError("unknown anchor type in anchor " + a.id);
  a.type = *t;
  a.content = detail::require_string(j, "content");
  a.description = detail::optional_string(j, "description");
  for (const auto& je : detail::require_field(j, "evidence")) {
    EvidenceRef e;
    e.step_index = detail::require_int(je, "step_index");
    if (je.contains("element_bbox") && !je["element_bbox"].is_null()) {
      e.element_bbox = bbox_from_json(je["element_bbox"]);
    }
    e.extracted_value = detail::optional_string(je, "extracted_value");
    a.evidence.push_back(e);
  }
  for (const auto& jl : detail::require_field(j, "links")) {
    CausalLink l;
    l.source_anchor_id = detail::require_string(jl, "source_anchor_id");
    auto r = link_relation_from(detail::require_string(jl, "relation"));
    if (!r) throw ParseError("unknown link relation in anchor " + a.id);
    l.relation = *r;
    a.links.push_back(l);
  }
  std::string status_str = detail::optional_string(j, "status");
  if (status_str.empty()) status_str = "active";
  auto s = anchor_status_from(status_str);
  if (!s) throw ParseError("unknown anchor status in anchor " + a.id);
  a.status = *s;
  if (j.contains("predicate") && !j["predicate"].is_null()) {
    a.predicate = predicate_from_json(j["predicate"]);
  }
  return a;
}

// ---------------------------------------------------------------- task

inline json ui_state_to_json(const UiState& s) {
  json j;
  j["step_index"] = s.step_index;
  j["screenshot_ref"] = s.screenshot_ref;
  j["app"] = s.app;
  if (!s.elements.empty()) {
    json els = json::array();
    for (const auto& e : s.elements) {
      json je;
      je["bbox"] = bbox_to_json(e.bbox);
      if (!e.text.empty()) je["text"] = e.text;
      if (!e.role.empty()) je["role"] = e.role;
      els.push_back(je);
    }
    j["elements"] = els;
  }
  return j;
}

inline UiState ui_state_from_json(const json& j) {
  UiState s;
  s.step_index = detail::require_int(j, "step_index");
  s.screenshot_ref = detail::require_string(j, "screenshot_ref");
  s.app = detail::require_string(j, "app");
  if (j.contains("elements")) {
    for (const auto& je : j["elements"]) {
      UiElement e;
      e.bbox = bbox_from_json(detail::require_field(je, "bbox"));
      e.text = detail::optional_string(je, "text");
      e.role = detail::optional_string(je, "role");
      s.elements.push_back(e);
    }
  }
  return s;
}

inline json task_to_json(const Task& t) {
  json j;
  j["id"] = t.id;
  j["instruction"] = t.instruction;
  j["intent"] = std::string(to_string(t.intent));
  j["apps"] = t.apps;
  if (!t.final_anchor_id.empty()) j["final_anchor_id"] = t.final_anchor_id;
  json steps = json::array();
  for (const auto& st : t.steps) {
    json js;
    js["state"] = ui_state_to_json(st.state);
    js["action"] = action_to_json(st.action);
    if (!st.reasoning.empty()) js["reasoning"] = st.reasoning;
    if (!st.summary.empty()) js["summary"] = st.summary;
    if (!st.gt_anchors.empty()) {
      json anchors = json::array();
      for (const auto& a : st.gt_anchors) anchors.push_back(anchor_to_json(a));
      js["gt_anchors"] = anchors;
    }
    steps.push_back(js);
  }
  j["steps"] = steps;
  return j;
}

inline Task task_from_json(const json& j) {
  Task t;
  t.id = detail::require_string(j, "id");
  t.instruction = detail::require_string(j, "instruction");
  const std::string intent = detail::require_string(j, "intent");
  auto in = intent_from(intent);
  if (!in) throw ParseError("unknown intent: " + intent);
  t.intent = *in;
  for (const auto& app : detail::require_field(j, "apps")) {
    t.apps.push_back(app.get<std::string>());
  }
  t.final_anchor_id = detail::optional_string(j, "final_anchor_id");
  for (const auto& js : detail::require_field(j, "steps")) {
    Step st;
    st.state = ui_state_from_json(detail::require_field(js, "state"));
    st.action = action_from_json(detail::require_field(js, "action"));
    st.reasoning = detail::optional_string(js, "reasoning");
    st.summary = detail::optional_string(js, "summary");
    if (js.contains("gt_anchors")) {
      for (const auto& ja : js["gt_anchors"]) {
        st.gt_anchors.push_back(anchor_from_json(ja));
      }
    }
    t.steps.push_back(std::move(st));
  }
  std::vector<std::string> violations = validate_task(t);
  if (!violations.empty()) {
    throw ParseError("task " + t.id + ": " + violations.front());
  }
  return t;
}

/// Canonical single-line encoding (sorted keys, no whitespace).
inline std::string serialize_task(const Task& t) { return task_to_json(t).dump(); }

inline Task parse_task(const std::string& line) {
  json j = json::parse(line, nullptr, false);
  if (j.is_discarded()) throw ParseError("not valid JSON");
  if (!j.is_object()) throw ParseError("task record must be a JSON object");
  return task_from_json(j);
}

// ---------------------------------------------------------------- suites

struct SuiteManifest {
  std::string suite_name;
  uint64_t seed = 0;
  std::string generator_version;
  std::string config_hash;
  json config;  // effective generator configuration
};

inline json manifest_to_json(const SuiteManifest& m) {
  json j;
  j["suite_name"] = m.suite_name;
  j["seed"] = m.seed;
  j["generator_version"] = m.generator_version;
  j["config_hash"] = m.config_hash;
  j["config"] = m.config;
  return j;
}

inline SuiteManifest manifest_from_json(const json& j) {
  SuiteManifest m;
  m.suite_name = detail::require_string(j, "suite_name");
  m.seed = detail::require_field(j, "seed").get<uint64_t>();
  m.generator_version = detail::require_string(j, "generator_version");
  m.config_hash = detail::optional_string(j, "config_hash");
  if (j.contains("config")) m.config = j["config"];
  return m;
}

inline std::vector<Task> load_suite(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open suite file: " + path);
  std::vector<Task> tasks;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    try {
      tasks.push_back(parse_task(line));
    } catch (const ParseError& e) {
      throw ParseError(line_no, e.what());
    }
  }
  return tasks;
}

inline void save_suite(const std::string& path, const std::vector<Task>& tasks) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write suite file: " + path);
  for (const auto& t : tasks) out << serialize_task(t) << "\n";
}

// Stable 64-bit FNV-1a, used for config hashes in manifests.
inline std::string stable_hash_hex(std::string_view data) {
  uint64_t h = 1469598103934665603ull;
  for (unsigned char c : data) {
    h ^= c;
    h *= 1099511628211ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return std::string(buf);
}

}  // namespace asmb
