#include "papillon/config.hpp"

#include <cstdlib>
#include <regex>

#include <json.hpp>

#include "papillon/errors.hpp"
#include "papillon/util.hpp"

namespace papillon {

using nlohmann::json;

namespace {

BackendEntry backend_entry_from_json(const json& j, const std::string& role_key) {
    BackendEntry entry;
    entry.type = j.value("type", "openai");
    entry.url = j.value("url", "");
    entry.model = j.value("model", "");
    entry.api_key_env = j.value("api_key_env", "");
    entry.pricing.input_per_million = j.value("price_in_per_million", 0.0);
    entry.pricing.output_per_million = j.value("price_out_per_million", 0.0);
    entry.budget.max_calls = j.value("max_calls", 0);
    entry.budget.max_total_tokens = j.value("max_total_tokens", 0);
    entry.max_attempts = j.value("max_attempts", 3);
    entry.backoff_initial_ms = j.value("backoff_initial_ms", 250);
    entry.timeout_s = j.value("timeout_s", 120);
    if (entry.pricing.input_per_million < 0.0 || entry.pricing.output_per_million < 0.0) {
        throw ConfigError("backend '" + role_key + "' has a negative price");
    }
    if (entry.type == "scripted") {
        for (const auto& r : j.value("rules", json::array())) {
            ScriptedRule rule;
            rule.pattern = r.at("match").get<std::string>();
            rule.is_regex = r.value("regex", false);
            if (rule.is_regex) {
                try {
                    std::regex probe(rule.pattern);
                } catch (const std::regex_error& e) {
                    throw ConfigError("backend '" + role_key + "' has a bad regex rule '" +
                                      rule.pattern + "': " + e.what());
                }
            }
            rule.response.content = r.at("response").get<std::string>();
            if (r.contains("prompt_tokens") || r.contains("completion_tokens")) {
                rule.response.usage = TokenUsage{r.value("prompt_tokens", std::int64_t{0}),
                                                 r.value("completion_tokens", std::int64_t{0})};
            }
            rule.response.fail = r.value("fail", false);
            entry.rules.push_back(std::move(rule));
        }
        if (j.contains("default_response")) {
            ScriptedResponse fallback;
            fallback.content = j["default_response"].get<std::string>();
            entry.default_response = std::move(fallback);
        }
    } else if (entry.type == "openai") {
        if (entry.url.empty()) {
            throw ConfigError("backend '" + role_key + "' needs a url");
        }
    } else {
        throw ConfigError("backend '" + role_key + "' has unknown type '" + entry.type + "'");
    }
    return entry;
}

void apply_env_overrides(AppConfig& config) {
    const auto env = [](const std::string& name) -> std::optional<std::string> {
        if (const char* v = std::getenv(name.c_str()); v && *v) return std::string(v);
        return std::nullopt;
    };
    if (const auto v = env("PAPILLON_RUN_DIR")) config.run_dir = *v;
    if (const auto v = env("PAPILLON_CONCURRENCY")) config.concurrency = std::stoi(*v);
    if (const auto v = env("PAPILLON_CACHING")) config.caching = (*v == "1" || *v == "true");
    for (auto& [role_key, entry] : config.backends) {
        const std::string prefix = "PAPILLON_" + util::lower_ascii(role_key);
        std::string upper = prefix;
        for (char& c : upper) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
        if (const auto v = env(upper + "_URL")) entry.url = *v;
        if (const auto v = env(upper + "_MODEL")) entry.model = *v;
        if (const auto v = env(upper + "_API_KEY_ENV")) entry.api_key_env = *v;
    }
}

}  // namespace

AppConfig config_from_json(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config is not valid JSON: ") + e.what());
    }
    AppConfig config;
    try {
        if (j.contains("backends")) {
            for (const auto& [role_key, value] : j["backends"].items()) {
                config.backends[role_key] = backend_entry_from_json(value, role_key);
            }
        }
        config.run_dir = j.value("run_dir", std::string("runs"));
        config.concurrency = j.value("concurrency", 4);
        config.caching = j.value("caching", true);
        config.max_output_tokens = j.value("max_output_tokens", 1024);
        if (j.contains("prompts_file") && !j["prompts_file"].is_null()) {
            config.prompts_file = j["prompts_file"].get<std::string>();
        }
        if (j.contains("optimizer")) {
            const auto& opt = j["optimizer"];
            config.optimizer_trials = opt.value("trials", 200);
            config.optimizer_minibatch_size = opt.value("minibatch_size", std::size_t{25});
            config.optimizer_promote_top_k = opt.value("promote_top_k", std::size_t{5});
            config.optimizer_seed = opt.value("seed", std::uint64_t{0});
            config.train_size = opt.value("train_size", std::size_t{150});
            config.val_size = opt.value("val_size", std::size_t{150});
        }
    } catch (const json::exception& e) {
        throw ConfigError(std::string("bad config shape: ") + e.what());
    }
    if (config.concurrency < 1) {
        throw ConfigError("concurrency must be >= 1");
    }
    apply_env_overrides(config);
    return config;
}

AppConfig load_config(const std::filesystem::path& path) {
    std::string text;
    try {
        text = util::read_file(path);
    } catch (const IoError& e) {
        throw ConfigError(e.what());
    }
    return config_from_json(text);
}

std::shared_ptr<Backend> make_backend(const AppConfig& config,
                                      const std::string& role_key,
                                      BackendRole role) {
    const auto it = config.backends.find(role_key);
    if (it == config.backends.end()) {
        throw ConfigError("config has no '" + role_key + "' backend");
    }
    const BackendEntry& entry = it->second;
    if (entry.type == "scripted") {
        return std::make_shared<ScriptedBackend>(role, role_key, entry.rules,
                                                 entry.default_response, entry.pricing,
                                                 entry.budget);
    }
    HttpBackendConfig http;
    http.base_url = entry.url;
    http.model = entry.model;
    http.api_key_env = entry.api_key_env;
    http.max_attempts = entry.max_attempts;
    http.backoff_initial_ms = entry.backoff_initial_ms;
    http.timeout_s = entry.timeout_s;
    http.pricing = entry.pricing;
    http.budget = entry.budget;
    return std::make_shared<HttpBackend>(role, role_key, std::move(http));
}

PipelinePrompts load_pipeline_prompts(const AppConfig& config) {
    if (config.prompts_file) {
        return prompts_from_json(util::read_file(*config.prompts_file));
    }
    return PipelinePrompts::seeds();
}

harness::PricingTable pricing_from_config(const AppConfig& config) {
    harness::PricingTable pricing;
    const auto price_of = [&](const std::string& role_key) -> harness::PricePerMillion {
        const auto it = config.backends.find(role_key);
        if (it == config.backends.end()) return {};
        return {it->second.pricing.input_per_million, it->second.pricing.output_per_million};
    };
    pricing["creator"] = price_of("local");
    pricing["aggregator"] = price_of("local");
    pricing["local"] = price_of("local");
    pricing["remote"] = price_of("remote");
    return pricing;
}

}  // namespace papillon
