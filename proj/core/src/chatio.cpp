#include "papillon/chatio.hpp"

#include <chrono>
#include <cstdlib>
#include <regex>
#include <stdexcept>
#include <thread>

#include <httplib.h>
#include <json.hpp>

#include "papillon/util.hpp"

namespace papillon {

using nlohmann::json;

std::string to_string(Role role) {
    switch (role) {
        case Role::system: return "system";
        case Role::user: return "user";
        case Role::assistant: return "assistant";
    }
    return "user";
}

std::string to_string(BackendRole role) {
    switch (role) {
        case BackendRole::trusted_local: return "local";
        case BackendRole::untrusted_remote: return "remote";
        case BackendRole::judge: return "judge";
        case BackendRole::proposer: return "proposer";
        case BackendRole::embedder: return "embedder";
    }
    return "unknown";
}

TokenUsage accumulate_usage(std::span<const TokenUsage> usages) {
    TokenUsage total;
    for (const auto& u : usages) {
        total.prompt_tokens += u.prompt_tokens;
        total.completion_tokens += u.completion_tokens;
    }
    return total;
}

// --- Backend ---------------------------------------------------------------

Backend::Backend(BackendRole role, std::string name, Pricing pricing, Budget budget)
    : role_(role), name_(std::move(name)), pricing_(pricing), budget_(budget) {}

std::int64_t Backend::call_count() const {
    std::lock_guard lock(mutex_);
    return calls_;
}

TokenUsage Backend::accumulated_usage() const {
    std::lock_guard lock(mutex_);
    return total_;
}

void Backend::check_budget() const {
    std::lock_guard lock(mutex_);
    if (budget_.max_calls > 0 && calls_ >= budget_.max_calls) {
        throw BudgetExceeded("backend '" + name_ + "' reached its call ceiling of " +
                             std::to_string(budget_.max_calls));
    }
    if (budget_.max_total_tokens > 0 &&
        total_.prompt_tokens + total_.completion_tokens >= budget_.max_total_tokens) {
        throw BudgetExceeded("backend '" + name_ + "' reached its token ceiling of " +
                             std::to_string(budget_.max_total_tokens));
    }
}

void Backend::charge(const TokenUsage& usage) {
    std::lock_guard lock(mutex_);
    ++calls_;
    total_.prompt_tokens += usage.prompt_tokens;
    total_.completion_tokens += usage.completion_tokens;
}

ChatResponse Backend::chat(const ChatRequest& request) {
    if (request.messages.empty()) {
        throw std::invalid_argument("chat request has no messages");
    }
    const Role last = request.messages.back().role;
    if (last != Role::user && last != Role::system) {
        throw std::invalid_argument("last chat message must have role user or system");
    }
    if (request.temperature < 0.0) {
        throw std::invalid_argument("temperature must be >= 0");
    }
    if (request.max_output_tokens <= 0) {
        throw std::invalid_argument("max_output_tokens must be positive");
    }
    for (const auto& m : request.messages) {
        if (!util::valid_utf8(m.content)) {
            throw std::invalid_argument("message content is not valid UTF-8");
        }
    }
    check_budget();
    ChatResponse response = perform(request);
    charge(response.usage);
    return response;
}

ChatResponse chat(Backend& backend, const ChatRequest& request) {
    return backend.chat(request);
}

// --- HttpBackend -------------------------------------------------------------

namespace {

struct ParsedUrl {
    std::string origin;  // scheme://host[:port]
    std::string prefix;  // path prefix, possibly empty
};

ParsedUrl parse_base_url(const std::string& url) {
    static const std::regex re(R"(^(https?://[^/]+)(/.*)?$)", std::regex::icase);
    std::smatch m;
    if (!std::regex_match(url, m, re)) {
        throw ConfigError("invalid backend URL: " + url);
    }
    ParsedUrl out;
    out.origin = m[1].str();
    out.prefix = m[2].matched ? m[2].str() : "";
    while (!out.prefix.empty() && out.prefix.back() == '/') {
        out.prefix.pop_back();
    }
    return out;
}

std::int64_t estimate_prompt_tokens(const ChatRequest& request) {
    std::int64_t n = 0;
    for (const auto& m : request.messages) {
        n += util::approx_token_count(m.content);
    }
    return n;
}

}  // namespace

HttpBackend::HttpBackend(BackendRole role, std::string name, HttpBackendConfig config)
    : Backend(role, std::move(name), config.pricing, config.budget),
      config_(std::move(config)) {
    parse_base_url(config_.base_url);  // validate eagerly
}

ChatResponse HttpBackend::perform(const ChatRequest& request) {
    const ParsedUrl url = parse_base_url(config_.base_url);

    json body;
    body["model"] = request.model_name.empty() ? config_.model : request.model_name;
    body["temperature"] = request.temperature;
    body["max_tokens"] = request.max_output_tokens;
    body["messages"] = json::array();
    for (const auto& m : request.messages) {
        body["messages"].push_back({{"role", to_string(m.role)}, {"content", m.content}});
    }

    httplib::Headers headers = {{"Content-Type", "application/json"}};
    if (!config_.api_key_env.empty()) {
        if (const char* key = std::getenv(config_.api_key_env.c_str()); key && *key) {
            headers.emplace("Authorization", std::string("Bearer ") + key);
        }
    }

    const std::string payload = body.dump();
    const std::string path = url.prefix + "/chat/completions";
    std::string last_error;

    const int attempts = std::max(1, config_.max_attempts);
    for (int attempt = 1; attempt <= attempts; ++attempt) {
        if (attempt > 1) {
            const auto backoff = std::chrono::milliseconds(
                static_cast<std::int64_t>(config_.backoff_initial_ms) << (attempt - 2));
            std::this_thread::sleep_for(backoff);
        }

        httplib::Client client(url.origin);
        client.set_connection_timeout(config_.timeout_s, 0);
        client.set_read_timeout(config_.timeout_s, 0);

        const auto start = std::chrono::steady_clock::now();
        httplib::Result result = client.Post(path, headers, payload, "application/json");
        const double latency_ms =
            std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start)
                .count();

        if (!result) {
            last_error = "connection failed: " + httplib::to_string(result.error());
            continue;  // transient, retry
        }
        if (result->status == 429 || result->status >= 500) {
            last_error = "HTTP " + std::to_string(result->status);
            continue;  // transient, retry
        }
        if (result->status != 200) {
            throw TransportError("backend '" + name() + "' returned HTTP " +
                                 std::to_string(result->status));
        }

        json parsed;
        try {
            parsed = json::parse(result->body);
        } catch (const json::exception& e) {
            throw ProtocolError("backend '" + name() + "' returned non-JSON payload: " + e.what());
        }
        if (!parsed.contains("choices") || !parsed["choices"].is_array() ||
            parsed["choices"].empty() || !parsed["choices"][0].contains("message")) {
            throw ProtocolError("backend '" + name() + "' payload lacks choices[0].message");
        }
        const auto& message = parsed["choices"][0]["message"];
        if (!message.contains("content") || !message["content"].is_string()) {
            throw ProtocolError("backend '" + name() + "' payload lacks message content");
        }

        ChatResponse response;
        response.content = message["content"].get<std::string>();
        response.latency_ms = latency_ms;
        if (parsed.contains("usage") && parsed["usage"].is_object() &&
            parsed["usage"].value("prompt_tokens", -1) >= 0 &&
            parsed["usage"].value("completion_tokens", -1) >= 0) {
            response.usage.prompt_tokens = parsed["usage"]["prompt_tokens"].get<std::int64_t>();
            response.usage.completion_tokens =
                parsed["usage"]["completion_tokens"].get<std::int64_t>();
        } else {
            response.usage.prompt_tokens = estimate_prompt_tokens(request);
            response.usage.completion_tokens = util::approx_token_count(response.content);
            response.usage_estimated = true;
        }
        return response;
    }

    throw TransportError("backend '" + name() + "' unreachable after " +
                         std::to_string(attempts) + " attempts: " + last_error);
}

// --- ScriptedBackend -----------------------------------------------------------

std::string concatenated_messages(const ChatRequest& request) {
    std::string out;
    for (const auto& m : request.messages) {
        if (!out.empty()) out.push_back('\n');
        out += m.content;
    }
    return out;
}

ScriptedBackend::ScriptedBackend(BackendRole role,
                                 std::string name,
                                 std::vector<ScriptedRule> rules,
                                 std::optional<ScriptedResponse> default_response,
                                 Pricing pricing,
                                 Budget budget)
    : Backend(role, std::move(name), pricing, budget),
      rules_(std::move(rules)),
      default_response_(std::move(default_response)) {}

std::vector<ChatRequest> ScriptedBackend::transcript() const {
    std::lock_guard lock(transcript_mutex_);
    return transcript_;
}

std::size_t ScriptedBackend::request_count() const {
    std::lock_guard lock(transcript_mutex_);
    return transcript_.size();
}

ChatResponse ScriptedBackend::perform(const ChatRequest& request) {
    {
        std::lock_guard lock(transcript_mutex_);
        transcript_.push_back(request);
    }

    const std::string haystack = concatenated_messages(request);
    const ScriptedResponse* chosen = nullptr;
    for (const auto& rule : rules_) {
        bool hit;
        if (rule.is_regex) {
            hit = std::regex_search(haystack, std::regex(rule.pattern));
        } else {
            hit = haystack.find(rule.pattern) != std::string::npos;
        }
        if (hit) {
            chosen = &rule.response;
            break;
        }
    }
    if (!chosen) {
        if (!default_response_) {
            throw NoRuleMatched("no scripted rule matched and no default is configured");
        }
        chosen = &*default_response_;
    }
    if (chosen->fail) {
        throw TransportError(chosen->failure_message);
    }

    ChatResponse response;
    response.content = chosen->content;
    if (chosen->usage) {
        response.usage = *chosen->usage;
    } else {
        response.usage.prompt_tokens = estimate_prompt_tokens(request);
        response.usage.completion_tokens = util::approx_token_count(response.content);
        response.usage_estimated = true;
    }
    return response;
}

std::shared_ptr<ScriptedBackend> scripted_mock(std::vector<ScriptedRule> rules,
                                               std::optional<ScriptedResponse> default_response,
                                               BackendRole role) {
    return std::make_shared<ScriptedBackend>(role, "mock-" + to_string(role), std::move(rules),
                                             std::move(default_response));
}

}  // namespace papillon
