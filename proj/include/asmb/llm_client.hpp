#pragma once

#include <chrono>
#include <memory>
#include <string>
#include <thread>
#include <utility>

#include <httplib.h>
#include <json.hpp>

#include "asmb/policy.hpp"

// Chat-endpoint-backed policy. The wire contract is a JSON body
// {model, messages:[{role, content}], temperature}; the response must carry
// the generated text (choices[0].message.content, content, or text) and may
// carry token usage. Formatting failures are retried with a correction
// note, transport failures with backoff; the endpoint is called at most
// 1 + max_retries times per step.

namespace asmb {

struct InferenceEndpointConfig {
  std::string base_url;  // e.g. http://localhost:8000/v1/chat/completions
  std::string model;
  std::string api_key;
  double timeout_seconds = 60.0;
  int max_retries = 3;
  double temperature = 0.0;
  bool retry_backoff = true;  // tests disable the sleep
};

struct TransportReply {
  bool ok = false;
  std::string body;   // response body when ok
  std::string error;  // transport-level failure otherwise
};

class ChatTransport {
 public:
  virtual ~ChatTransport() = default;
  virtual TransportReply send(const json& request) = 0;
};

/// POSTs to the configured URL. A bare scheme://host[:port] falls back to
/// the conventional /v1/chat/completions path.
class HttpChatTransport : public ChatTransport {
 public:
  explicit HttpChatTransport(InferenceEndpointConfig config)
      : config_(std::move(config)) {
    split_url(config_.base_url, host_, path_);
  }

  TransportReply send(const json& request) override {
    httplib::Client client(host_);
    client.set_connection_timeout(std::chrono::milliseconds(
        static_cast<long>(config_.timeout_seconds * 1000)));
    client.set_read_timeout(std::chrono::milliseconds(
        static_cast<long>(config_.timeout_seconds * 1000)));
    httplib::Headers headers;
    if (!config_.api_key.empty()) {
      headers.emplace("Authorization", "Bearer " + config_.api_key);
    }
    auto res = client.Post(path_, headers, request.dump(), "application/json");
    TransportReply reply;
    if (!res) {
      reply.error = "transport error: " + httplib::to_string(res.error());
      return reply;
    }
    if (res->status < 200 || res->status >= 300) {
      reply.error = "endpoint returned HTTP " + std::to_string(res->status);
      return reply;
    }
    reply.ok = true;
    reply.body = res->body;
    return reply;
  }

 private:
  static void split_url(const std::string& url, std::string& host, std::string& path) {
    const size_t scheme = url.find("://");
    const size_t path_start =
        url.find('/', scheme == std::string::npos ? 0 : scheme + 3);
    if (path_start == std::string::npos) {
      host = url;
      path = "/v1/chat/completions";
    } else {
      host = url.substr(0, path_start);
      path = url.substr(path_start);
    }
  }

  InferenceEndpointConfig config_;
  std::string host_;
  std::string path_;
};

namespace detail {

/// Pulls the generated text out of a chat response body.
inline std::optional<std::string> response_text(const std::string& body) {
  json j = json::parse(body, nullptr, false);
  if (j.is_discarded() || !j.is_object()) return std::nullopt;
  if (j.contains("choices") && j["choices"].is_array() && !j["choices"].empty()) {
    const json& first = j["choices"][0];
    if (first.contains("message") && first["message"].is_object() &&
        first["message"].contains("content") &&
        first["message"]["content"].is_string()) {
      return first["message"]["content"].get<std::string>();
    }
    if (first.contains("text") && first["text"].is_string()) {
      return first["text"].get<std::string>();
    }
  }
  if (j.contains("content") && j["content"].is_string()) {
    return j["content"].get<std::string>();
  }
  if (j.contains("text") && j["text"].is_string()) {
    return j["text"].get<std::string>();
  }
  return std::nullopt;
}

inline std::optional<StepUsage> response_usage(const std::string& body) {
  json j = json::parse(body, nullptr, false);
  if (j.is_discarded() || !j.is_object() || !j.contains("usage")) return std::nullopt;
  const json& u = j["usage"];
  if (!u.is_object() || !u.contains("prompt_tokens") ||
      !u.contains("completion_tokens")) {
    return std::nullopt;
  }
  StepUsage usage;
  usage.prompt_tokens = u["prompt_tokens"].get<long>();
  usage.completion_tokens = u["completion_tokens"].get<long>();
  usage.estimated = false;
  return usage;
}

}  // namespace detail

class LlmPolicy : public Policy {
 public:
  LlmPolicy(InferenceEndpointConfig config, std::shared_ptr<ChatTransport> transport)
      : config_(std::move(config)), transport_(std::move(transport)) {}

  static std::unique_ptr<LlmPolicy> over_http(InferenceEndpointConfig config) {
    auto transport = std::make_shared<HttpChatTransport>(config);
    return std::make_unique<LlmPolicy>(std::move(config), std::move(transport));
  }

  std::string name() const override { return "llm:" + config_.model; }
  bool deterministic() const override { return false; }
  bool scripted_summary() const override { return false; }

  PolicyResult decide(const PromptBundle& bundle, const StepView& view) override {
    PolicyResult res;
    const auto started = std::chrono::steady_clock::now();
    json messages = json::array();
    for (const auto& m : bundle.messages) {
      messages.push_back({{"role", m.role}, {"content", m.content}});
    }

    const int attempts = 1 + std::max(0, config_.max_retries);
    std::string last_text;
    std::optional<StepUsage> reported;
    for (int attempt = 0; attempt < attempts; ++attempt) {
      json request = {{"model", config_.model},
                      {"messages", messages},
                      {"temperature", config_.temperature}};
      // Reserved for image support; text-only digests never fill it.
      if (!bundle.attachments.empty()) request["attachments"] = bundle.attachments;
      TransportReply reply = transport_->send(request);
      res.exchanges.emplace_back(request.dump(), reply.ok ? reply.body : reply.error);
      if (!reply.ok) {
        res.errors.push_back({view.step_index, "transport_failure", reply.error});
        if (config_.retry_backoff && attempt + 1 < attempts) {
          std::this_thread::sleep_for(std::chrono::milliseconds(100 * (attempt + 1)));
        }
        continue;
      }
      std::optional<std::string> text = detail::response_text(reply.body);
      if (!text) {
        res.errors.push_back({view.step_index, "transport_failure",
                              "endpoint response carries no generated text"});
        continue;
      }
      last_text = *text;
      reported = detail::response_usage(reply.body);
      ParsedDecision parsed = parse_decision(*text, view.mode);
      if (parsed.ok()) {
        res.decision = std::move(*parsed.decision);
        res.usage = finalize_usage(reported, bundle, last_text);
        res.wall_time_seconds = elapsed_seconds(started);
        return res;
      }
      res.errors.push_back({view.step_index, "parse_retry",
                            std::string(to_string(parsed.error->category)) + ": " +
                                parsed.error->message});
      messages.push_back({{"role", "user"},
                          {"content", "Previous response could not be used (" +
                                          parsed.error->message +
                                          "). Return a single JSON object exactly "
                                          "in the required output format."}});
    }

    // Retries exhausted: fall back to a harmless wait, never fabricate
    // progress.
    res.decision = PolicyDecision{};
    res.decision.action = Action::of(ActionKind::Wait);
    res.errors.push_back({view.step_index, "decision_failure",
                          "no valid decision after " + std::to_string(attempts) +
                              " attempts"});
    res.usage = finalize_usage(reported, bundle, last_text);
    res.wall_time_seconds = elapsed_seconds(started);
    return res;
  }

 private:
  static double elapsed_seconds(std::chrono::steady_clock::time_point start) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start)
        .count();
  }

  StepUsage finalize_usage(const std::optional<StepUsage>& reported,
                           const PromptBundle& bundle,
                           const std::string& completion_text) const {
    if (reported) return *reported;
    StepUsage usage;
    usage.prompt_tokens = bundle.token_estimate;
    usage.completion_tokens = estimate_tokens(completion_text);
    usage.estimated = true;
    return usage;
  }

  InferenceEndpointConfig config_;
  std::shared_ptr<ChatTransport> transport_;
};

}  // namespace asmb
