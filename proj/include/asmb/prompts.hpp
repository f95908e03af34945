#pragma once

#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "asmb/memory.hpp"

// Prompt assembly. Templates are bit-stable per version so token counts
// stay comparable across runs; the current-state digest is rendered by one
// function so it is byte-identical across history modes.

namespace asmb {

inline constexpr std::string_view kPromptVersion = "asmb-prompt-v1";

struct ChatMessage {
  std::string role;  // system | user
  std::string content;
};

struct PromptBundle {
  std::vector<ChatMessage> messages;
  HistoryMode mode = HistoryMode::Raw;
  long token_estimate = 0;
  std::vector<std::string> attachments;  // reserved for image support
};

namespace prompt_text {

inline constexpr std::string_view kCommonHead =
    "Mobile Assistant.\n"
    "\n"
    "I. Action Space\n"
    "Allowed actions: ["
    "{\"label\":\"Open App\",\"value\":\"open_app\"},"
    "{\"label\":\"Tap\",\"value\":\"tap\"},"
    "{\"label\":\"Long Press\",\"value\":\"long_press\"},"
    "{\"label\":\"Swipe\",\"value\":\"swipe\"},"
    "{\"label\":\"Input Text\",\"value\":\"input_text\"},"
    "{\"label\":\"Swipe (Two Points)\",\"value\":\"swipe_two_points\"},"
    "{\"label\":\"Wait\",\"value\":\"wait\"},"
    "{\"label\":\"Capture Screen\",\"value\":\"capture_screen\"},"
    "{\"label\":\"Home\",\"value\":\"home\"},"
    "{\"label\":\"Back\",\"value\":\"back\"},"
    "{\"label\":\"Finish\",\"value\":\"finish\"}]\n"
    "\n"
    "II. Field Requirements\n"
    "1. action.action: String. Must be in Action Space.\n"
    "2. action.x,y,x_end,y_end: Use normalized coords 0-1000. (0,0)=Top-Left. "
    "(1000,1000)=Bottom-Right. For \"tap\"/\"long_press\" use (x,y). For "
    "\"swipe_two_points\" use start(x,y) & end(x_end,y_end). Unused=0.\n"
    "3. action.value: String. Input text or app name.\n"
    "4. action.direction: String. \"up\"|\"down\"|\"left\"|\"right\" (for \"swipe\").\n"
    "5. action.distance: String. \"long\"|\"medium\"|\"short\" (for \"swipe\").\n"
    "\n"
    "III. Decision Principles\n"
    "Visual Evidence: Only act on what you see. If loading, use \"wait\".\n"
    "Precision: Target UI element center. Use 0-1000 scale carefully.\n"
    "Step-by-Step: Output ONE action per response.\n";

inline constexpr std::string_view kSummaryGuidelines =
    "\n"
    "IV. Summary Generation Guidelines\n"
    "The summary_en field represents a compact, high-level abstraction of the "
    "current task progress and interface state. It serves as persistent context "
    "for subsequent decision steps.\n"
    "\n"
    "When writing summary_en:\n"
    "1. Describe the current goal-relevant state of the task, not low-level UI "
    "details.\n"
    "2. Capture what has been accomplished so far and what remains unresolved.\n"
    "3. Include critical constraints, user inputs, or system feedback that affect "
    "future actions.\n"
    "4. Avoid step-by-step narration or coordinate-level descriptions.\n"
    "5. Keep the summary concise, factual, and stable across steps unless the task "
    "state meaningfully changes.\n"
    "\n"
    "The summary should enable future steps to reason about progress without "
    "access to full action history.\n";

inline constexpr std::string_view kAnchorGuidelines =
    "\n"
    "IV. Anchor and Causal Structure Generation Guidelines\n"
    "State anchors represent semantically meaningful task events that influence "
    "long-term planning and decision-making. Each anchor summarizes a key "
    "transition, dependency, or achievement. Beyond recording important states, "
    "explicitly identify causal links between anchors so that the interaction "
    "history is organized as a structured dependency graph rather than a flat "
    "list of events.\n"
    "\n"
    "Anchor categories:\n"
    "[subgoal] Achievement of an intermediate objective.\n"
    "[state_change] Entry into a new screen, mode, or functional state.\n"
    "[dependency] Completion of a prerequisite required for future steps.\n"
    "[exception] Errors, failures, or unexpected states requiring handling.\n"
    "[context_info] Important parameters, settings, or user-provided information.\n"
    "[finish] Final goal successfully completed.\n"
    "\n"
    "Causal link types:\n"
    "[prerequisite] A previous anchor must hold before the current one can occur.\n"
    "[enables] A previous anchor creates the condition for a future action or "
    "subgoal.\n"
    "[result_of] The current anchor is the direct result of a previous anchor or "
    "action outcome.\n"
    "[blocks] An exception or state prevents progress until resolved.\n"
    "\n"
    "When generating anchors and links:\n"
    "1. content_en should be a concise, category-tagged semantic statement "
    "describing the current anchor.\n"
    "2. description_en should explain why this anchor matters for subsequent "
    "reasoning and execution.\n"
    "3. If the current anchor has a direct causal dependency on a previous "
    "anchor, generate a causal link identifying the source anchor and relation "
    "type.\n"
    "4. Only create causal links for decision-critical dependencies, not for "
    "trivial temporal succession.\n"
    "5. Only generate anchors for durable and task-relevant events; avoid trivial "
    "UI transitions.\n"
    "6. Do not repeat previous anchors unless the task state fundamentally "
    "changes.\n"
    "7. Preserve both key intermediate states and the causal structure connecting "
    "them.\n";

inline constexpr std::string_view kRawOutput =
    "\n"
    "V. Output Format\n"
    "Return a single JSON object:\n"
    "{ \"action\": { \"action\": \"...\", \"x\": 0, \"y\": 0, \"value\": \"\", "
    "\"x_end\": 0, \"y_end\": 0 } }\n";

inline constexpr std::string_view kSummaryOutput =
    "\n"
    "V. Output Format\n"
    "Return a single JSON object:\n"
    "{ \"action\": { \"action\": \"...\", \"x\": 0, \"y\": 0, \"value\": \"\", "
    "\"x_end\": 0, \"y_end\": 0 }, \"summary_en\": \"...\" }\n";

inline constexpr std::string_view kAsmOutput =
    "\n"
    "V. Output Format\n"
    "Return a single JSON object:\n"
    "{ \"action\": { \"action\": \"...\", \"x\": 0, \"y\": 0, \"value\": \"\", "
    "\"x_end\": 0, \"y_end\": 0 }, \"content_en\": \"...\", "
    "\"description_en\": \"...\", \"causal_link\": { \"source\": \"...\", "
    "\"relation\": \"...\" } }\n";

}  // namespace prompt_text

inline std::string system_prompt(HistoryMode mode) {
  std::string out(prompt_text::kCommonHead);
  switch (mode) {
    case HistoryMode::Raw:
      out += prompt_text::kRawOutput;
      break;
    case HistoryMode::Summary:
      out += prompt_text::kSummaryGuidelines;
      out += prompt_text::kSummaryOutput;
      break;
    case HistoryMode::Asm:
      out += prompt_text::kAnchorGuidelines;
      out += prompt_text::kAsmOutput;
      break;
  }
  return out;
}

/// Textual digest of the current UI state. Identical across history modes
/// for the same step, so only the history block differentiates prompts.
inline std::string render_state_digest(const UiState& state) {
  std::ostringstream os;
  os << "App: " << state.app << "\n";
  os << "Screenshot: " << state.screenshot_ref << "\n";
  if (!state.elements.empty()) {
    os << "Elements:\n";
    for (const auto& e : state.elements) {
      os << "- \"" << e.text << "\"";
      if (!e.role.empty()) os << " (" << e.role << ")";
      os << " @ (" << e.bbox.x_min << "," << e.bbox.y_min << ","
         << e.bbox.x_max << "," << e.bbox.y_max << ")\n";
    }
  }
  return os.str();
}

inline PromptBundle build_prompt(HistoryMode mode, const std::string& instruction,
                                 const HistoryContext& context,
                                 const UiState& state) {
  PromptBundle bundle;
  bundle.mode = mode;
  bundle.messages.push_back({"system", system_prompt(mode)});
  std::ostringstream user;
  user << "Instruction: " << instruction << "\n\n";
  user << "Current state:\n" << render_state_digest(state) << "\n";
  user << "History:\n";
  user << (context.rendered_text.empty() ? "(none)\n" : context.rendered_text);
  bundle.messages.push_back({"user", user.str()});
  for (const auto& m : bundle.messages) {
    bundle.token_estimate += estimate_tokens(m.content);
  }
  return bundle;
}

}  // namespace asmb
