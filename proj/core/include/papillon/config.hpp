#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>

#include "papillon/chatio.hpp"
#include "papillon/harness.hpp"
#include "papillon/pipeline.hpp"

namespace papillon {

/// One backend definition from the config file. type "openai" talks to an
/// HTTP chat-completions endpoint; type "scripted" is the deterministic mock
/// with inline rules (offline runs and tests).
struct BackendEntry {
    std::string type = "openai";
    std::string url;
    std::string model;
    std::string api_key_env;
    Pricing pricing;
    Budget budget;
    int max_attempts = 3;
    int backoff_initial_ms = 250;
    int timeout_s = 120;
    std::vector<ScriptedRule> rules;                    // scripted only
    std::optional<ScriptedResponse> default_response;   // scripted only
};

struct AppConfig {
    std::map<std::string, BackendEntry> backends;  // keys: local, remote, judge, proposer, embedder
    std::filesystem::path run_dir = "runs";
    int concurrency = 4;
    bool caching = true;
    int max_output_tokens = 1024;
    std::optional<std::filesystem::path> prompts_file;  // optimized templates checkpoint
    int optimizer_trials = 200;
    std::size_t optimizer_minibatch_size = 25;
    std::size_t optimizer_promote_top_k = 5;
    std::uint64_t optimizer_seed = 0;
    std::size_t train_size = 150;
    std::size_t val_size = 150;
};

/// Parses the JSON config and applies the environment override layer
/// (PAPILLON_<ROLE>_URL / _MODEL / _API_KEY_ENV, PAPILLON_RUN_DIR, ...).
AppConfig load_config(const std::filesystem::path& path);
AppConfig config_from_json(const std::string& text);

/// Throws ConfigError when the named role has no backend entry.
std::shared_ptr<Backend> make_backend(const AppConfig& config,
                                      const std::string& role_key,
                                      BackendRole role);

/// Bundled seeds, or the checkpointed templates when prompts_file is set.
PipelinePrompts load_pipeline_prompts(const AppConfig& config);

/// Stage pricing derived from the configured backend prices.
harness::PricingTable pricing_from_config(const AppConfig& config);

}  // namespace papillon
