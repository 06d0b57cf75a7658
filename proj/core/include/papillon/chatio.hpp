#pragma once

#include <cstdint>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "papillon/errors.hpp"

namespace papillon {

enum class Role { system, user, assistant };

std::string to_string(Role role);

struct ChatMessage {
    Role role = Role::user;
    std::string content;
};

struct ChatRequest {
    std::vector<ChatMessage> messages;
    double temperature = 0.0;
    int max_output_tokens = 1024;
    std::string model_name;  // empty: the backend substitutes its configured model
};

struct TokenUsage {
    std::int64_t prompt_tokens = 0;
    std::int64_t completion_tokens = 0;

    friend bool operator==(const TokenUsage&, const TokenUsage&) = default;
};

TokenUsage accumulate_usage(std::span<const TokenUsage> usages);

struct ChatResponse {
    std::string content;
    TokenUsage usage;
    double latency_ms = 0.0;
    bool usage_estimated = false;  // upstream omitted usage, counts estimated
};

enum class BackendRole { trusted_local, untrusted_remote, judge, proposer, embedder };

std::string to_string(BackendRole role);

/// Dollar prices per million tokens, input and output side.
struct Pricing {
    double input_per_million = 0.0;
    double output_per_million = 0.0;
};

/// Zero means unlimited.
struct Budget {
    std::int64_t max_calls = 0;
    std::int64_t max_total_tokens = 0;
};

/// A chat-completion endpoint handle. Configuration is immutable after
/// construction; accounting state is internally synchronized so one handle can
/// serve concurrent in-flight requests.
class Backend {
public:
    virtual ~Backend() = default;

    Backend(const Backend&) = delete;
    Backend& operator=(const Backend&) = delete;

    ChatResponse chat(const ChatRequest& request);

    BackendRole role() const { return role_; }
    const std::string& name() const { return name_; }
    const Pricing& pricing() const { return pricing_; }

    std::int64_t call_count() const;
    TokenUsage accumulated_usage() const;

protected:
    Backend(BackendRole role, std::string name, Pricing pricing, Budget budget);

    virtual ChatResponse perform(const ChatRequest& request) = 0;

private:
    void check_budget() const;
    void charge(const TokenUsage& usage);

    BackendRole role_;
    std::string name_;
    Pricing pricing_;
    Budget budget_;

    mutable std::mutex mutex_;
    std::int64_t calls_ = 0;
    TokenUsage total_;
};

/// Issues one chat completion against a backend. Validates the request shape,
/// enforces the backend budget, and accumulates token usage.
ChatResponse chat(Backend& backend, const ChatRequest& request);

// --- HTTP backend -------------------------------------------------------------

struct HttpBackendConfig {
    std::string base_url;     // e.g. "https://api.openai.com/v1"
    std::string model;
    std::string api_key_env;  // name of the env var holding the bearer token
    int max_attempts = 3;
    int backoff_initial_ms = 250;
    int timeout_s = 120;
    Pricing pricing;
    Budget budget;
};

/// OpenAI-style chat-completions client: POST {base_url}/chat/completions with
/// a messages array, reads choices[0].message.content and the usage object.
class HttpBackend final : public Backend {
public:
    HttpBackend(BackendRole role, std::string name, HttpBackendConfig config);

protected:
    ChatResponse perform(const ChatRequest& request) override;

private:
    HttpBackendConfig config_;
};

// --- scripted mock backend ------------------------------------------------------

struct ScriptedResponse {
    std::string content;
    std::optional<TokenUsage> usage;  // absent: estimated from text
    bool fail = false;                // throw TransportError instead of answering
    std::string failure_message = "scripted transport failure";
};

/// Matches against the concatenated message contents of a request.
struct ScriptedRule {
    std::string pattern;
    bool is_regex = false;
    ScriptedResponse response;
};

/// Deterministic mock: first matching rule fires, a default fires when none
/// match, and every served request lands in an inspectable transcript.
class ScriptedBackend final : public Backend {
public:
    ScriptedBackend(BackendRole role,
                    std::string name,
                    std::vector<ScriptedRule> rules,
                    std::optional<ScriptedResponse> default_response = std::nullopt,
                    Pricing pricing = {},
                    Budget budget = {});

    std::vector<ChatRequest> transcript() const;
    std::size_t request_count() const;

protected:
    ChatResponse perform(const ChatRequest& request) override;

private:
    std::vector<ScriptedRule> rules_;
    std::optional<ScriptedResponse> default_response_;

    mutable std::mutex transcript_mutex_;
    std::vector<ChatRequest> transcript_;
};

std::shared_ptr<ScriptedBackend> scripted_mock(
    std::vector<ScriptedRule> rules,
    std::optional<ScriptedResponse> default_response = std::nullopt,
    BackendRole role = BackendRole::judge);

/// The text a scripted rule is matched against.
std::string concatenated_messages(const ChatRequest& request);

}  // namespace papillon
