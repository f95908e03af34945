#pragma once

#include <cstdlib>
#include <fstream>
#include <memory>
#include <set>
#include <string>

#include "asmb/llm_client.hpp"
#include "asmb/runner.hpp"

// Effective configuration assembly for the CLI: defaults, then config
// file, then ASMB_* environment variables, then flags. Unknown file keys
// are rejected so typos fail loudly, and the effective configuration is
// echoed into every run manifest.

namespace asmb {

struct CliConfig {
  // endpoint
  std::string endpoint;
  std::string model;
  std::string api_key;
  double timeout_seconds = 60.0;
  int max_retries = 3;
  double temperature = 0.0;
  // execution
  long budget = 2048;
  std::string strategy = "all_active";
  uint64_t seed = 0;
  int concurrency = 1;
  // evaluation
  std::string tcr_scope = "closure";  // closure | all
  double text_threshold = -1.0;       // < 0: fractional ANLS credit

  json to_json() const {
    json j;
    j["endpoint"] = endpoint;
    j["model"] = model;
    // api_key deliberately not echoed
    j["timeout_seconds"] = timeout_seconds;
    j["max_retries"] = max_retries;
    j["temperature"] = temperature;
    j["budget"] = budget;
    j["strategy"] = strategy;
    j["seed"] = seed;
    j["concurrency"] = concurrency;
    j["tcr_scope"] = tcr_scope;
    j["text_threshold"] = text_threshold;
    return j;
  }
};

class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

inline void apply_config_file(CliConfig& config, const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path);
  json j = json::parse(in, nullptr, false);
  if (j.is_discarded() || !j.is_object()) {
    throw ConfigError("config file is not a JSON object: " + path);
  }
  static const std::set<std::string> known = {
      "endpoint",   "model",        "api_key",     "timeout_seconds",
      "max_retries", "temperature", "budget",      "strategy",
      "seed",       "concurrency",  "tcr_scope",   "text_threshold"};
  for (const auto& [key, value] : j.items()) {
    if (!known.count(key)) throw ConfigError("unknown config key: " + key);
    if (key == "endpoint") config.endpoint = value.get<std::string>();
    if (key == "model") config.model = value.get<std::string>();
    if (key == "api_key") config.api_key = value.get<std::string>();
    if (key == "timeout_seconds") config.timeout_seconds = value.get<double>();
    if (key == "max_retries") config.max_retries = value.get<int>();
    if (key == "temperature") config.temperature = value.get<double>();
    if (key == "budget") config.budget = value.get<long>();
    if (key == "strategy") config.strategy = value.get<std::string>();
    if (key == "seed") config.seed = value.get<uint64_t>();
    if (key == "concurrency") config.concurrency = value.get<int>();
    if (key == "tcr_scope") config.tcr_scope = value.get<std::string>();
    if (key == "text_threshold") config.text_threshold = value.get<double>();
  }
}

inline void apply_env(CliConfig& config) {
  if (const char* v = std::getenv("ASMB_ENDPOINT")) config.endpoint = v;
  if (const char* v = std::getenv("ASMB_MODEL")) config.model = v;
  if (const char* v = std::getenv("ASMB_API_KEY")) config.api_key = v;
}

inline RetrievalStrategy parse_strategy(const std::string& spec) {
  if (spec == "all_active") return RetrievalStrategy::all_active();
  if (spec == "link_closure") return RetrievalStrategy::link_closure();
  const std::string prefix_a = "recency:k=";
  const std::string prefix_b = "recency_top_k:k=";
  for (const std::string& prefix : {prefix_a, prefix_b}) {
    if (spec.rfind(prefix, 0) == 0) {
      const int k = std::atoi(spec.c_str() + prefix.size());
      if (k < 1) throw ConfigError("recency strategy requires k >= 1: " + spec);
      return RetrievalStrategy::recency_top_k(k);
    }
  }
  throw ConfigError("unknown retrieval strategy: " + spec);
}

/// Policy spec grammar: "oracle" | "forgetful:window=N" | "llm".
/// The llm policy reads endpoint/model/key from the effective config.
inline std::shared_ptr<Policy> make_policy(const std::string& spec,
                                           const CliConfig& config) {
  if (spec == "oracle") return std::make_shared<OraclePolicy>();
  const std::string forgetful_prefix = "forgetful:window=";
  if (spec.rfind(forgetful_prefix, 0) == 0) {
    const int window = std::atoi(spec.c_str() + forgetful_prefix.size());
    if (window < 1) throw ConfigError("forgetful policy requires window >= 1: " + spec);
    return std::make_shared<ForgetfulPolicy>(window);
  }
  if (spec == "forgetful") return std::make_shared<ForgetfulPolicy>(5);
  if (spec == "llm") {
    if (config.endpoint.empty()) {
      throw ConfigError(
          "llm policy requires an endpoint (flag, config file, or ASMB_ENDPOINT)");
    }
    InferenceEndpointConfig ep;
    ep.base_url = config.endpoint;
    ep.model = config.model.empty() ? "default" : config.model;
    ep.api_key = config.api_key;
    ep.timeout_seconds = config.timeout_seconds;
    ep.max_retries = config.max_retries;
    ep.temperature = config.temperature;
    return std::shared_ptr<Policy>(LlmPolicy::over_http(std::move(ep)).release());
  }
  throw ConfigError("unknown policy spec: " + spec);
}

inline EvalOptions eval_options(const CliConfig& config) {
  EvalOptions opts;
  if (config.tcr_scope == "all") {
    opts.scope = TcrScope::AllAnchors;
  } else if (config.tcr_scope == "closure") {
    opts.scope = TcrScope::FinishClosure;
  } else {
    throw ConfigError("unknown tcr_scope: " + config.tcr_scope);
  }
  if (config.text_threshold >= 0) opts.match.text_threshold = config.text_threshold;
  return opts;
}

}  // namespace asmb
