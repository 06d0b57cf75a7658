#include "papillon/pipeline.hpp"

#include <chrono>
#include <fstream>

#include <json.hpp>

#include "papillon/errors.hpp"
#include "papillon/prompts.hpp"
#include "papillon/util.hpp"

namespace papillon {

using nlohmann::json;

namespace {

constexpr const char* kCreatorStage = "creator";
constexpr const char* kRemoteStage = "remote";
constexpr const char* kAggregatorStage = "aggregator";

bool declares(const PromptTemplate& tmpl, const std::string& name, FieldDirection direction) {
    for (const auto& f : tmpl.fields) {
        if (f.name == name && f.direction == direction) return true;
    }
    return false;
}

double elapsed_ms(std::chrono::steady_clock::time_point start) {
    return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start)
        .count();
}

}  // namespace

PipelinePrompts PipelinePrompts::seeds() {
    return {prompts::creator_seed_template(), prompts::aggregator_seed_template()};
}

void PipelinePrompts::validate() const {
    creator.validate();
    aggregator.validate();
    if (!declares(creator, "userQuery", FieldDirection::input) ||
        !declares(creator, "createdPrompt", FieldDirection::output)) {
        throw std::invalid_argument(
            "creator template must declare input userQuery and output createdPrompt");
    }
    if (!declares(aggregator, "userQuery", FieldDirection::input) ||
        !declares(aggregator, "modelExampleResponses", FieldDirection::input) ||
        !declares(aggregator, "finalOutput", FieldDirection::output)) {
        throw std::invalid_argument(
            "aggregator template must declare inputs userQuery, modelExampleResponses and output "
            "finalOutput");
    }
}

std::string prompts_to_json(const PipelinePrompts& prompts) {
    nlohmann::ordered_json j;
    j["creator"] = json::parse(template_to_json(prompts.creator));
    j["aggregator"] = json::parse(template_to_json(prompts.aggregator));
    return j.dump(2) + "\n";
}

PipelinePrompts prompts_from_json(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw SchemaError(1, std::string("invalid prompts JSON: ") + e.what());
    }
    if (!j.contains("creator") || !j.contains("aggregator")) {
        throw SchemaError(1, "prompts JSON needs creator and aggregator templates");
    }
    PipelinePrompts prompts;
    prompts.creator = template_from_json(j["creator"].dump());
    prompts.aggregator = template_from_json(j["aggregator"].dump());
    prompts.validate();
    return prompts;
}

// --- trace serialization -----------------------------------------------------

std::string trace_to_json(const PipelineTrace& trace) {
    nlohmann::ordered_json j;
    j["query_id"] = trace.query_id;
    j["user_query"] = trace.user_query;
    j["created_prompt"] = trace.created_prompt;
    j["remote_response"] = trace.remote_response;
    j["final_output"] = trace.final_output;
    j["usage_by_stage"] = nlohmann::ordered_json::object();
    for (const auto& [stage, usage] : trace.usage_by_stage) {
        j["usage_by_stage"][stage] = {{"prompt_tokens", usage.prompt_tokens},
                                      {"completion_tokens", usage.completion_tokens}};
    }
    j["timings_ms"] = nlohmann::ordered_json::object();
    for (const auto& [stage, ms] : trace.timings_ms) {
        j["timings_ms"][stage] = ms;
    }
    j["parse_fallback_used"] = trace.parse_fallback_used;
    j["cache_hit"] = trace.cache_hit;
    return j.dump();
}

PipelineTrace trace_from_json(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw SchemaError(1, std::string("invalid trace JSON: ") + e.what());
    }
    PipelineTrace trace;
    try {
        trace.query_id = j.at("query_id").get<std::string>();
        trace.user_query = j.at("user_query").get<std::string>();
        trace.created_prompt = j.at("created_prompt").get<std::string>();
        trace.remote_response = j.at("remote_response").get<std::string>();
        trace.final_output = j.at("final_output").get<std::string>();
        for (const auto& [stage, usage] : j.at("usage_by_stage").items()) {
            trace.usage_by_stage[stage] = {usage.at("prompt_tokens").get<std::int64_t>(),
                                           usage.at("completion_tokens").get<std::int64_t>()};
        }
        if (j.contains("timings_ms")) {
            for (const auto& [stage, ms] : j.at("timings_ms").items()) {
                trace.timings_ms[stage] = ms.get<double>();
            }
        }
        trace.parse_fallback_used = j.value("parse_fallback_used", false);
        trace.cache_hit = j.value("cache_hit", false);
    } catch (const json::exception& e) {
        throw SchemaError(1, std::string("trace JSON missing fields: ") + e.what());
    }
    return trace;
}

// --- PromptCache --------------------------------------------------------------

PromptCache::PromptCache() = default;

PromptCache::PromptCache(std::filesystem::path file) : file_(std::move(file)) {
    if (file_.empty() || !std::filesystem::exists(file_)) {
        return;
    }
    const std::string content = util::read_file(file_);
    for (const auto& line : util::split_lines(content)) {
        if (util::trim(line).empty()) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::exception&) {
            continue;  // skip corrupt tail lines, e.g. from a crashed run
        }
        if (!j.contains("key") || !j.contains("value")) continue;
        std::promise<std::string> ready;
        ready.set_value(j["value"].get<std::string>());
        entries_.emplace(j["key"].get<std::string>(), ready.get_future().share());
    }
}

std::size_t PromptCache::size() const {
    std::lock_guard lock(mutex_);
    return entries_.size();
}

std::pair<std::string, bool> PromptCache::get_or_compute(
    const std::string& key, const std::function<std::string()>& compute) {
    std::shared_future<std::string> fut;
    std::promise<std::string> prom;
    bool owner = false;
    {
        std::lock_guard lock(mutex_);
        const auto it = entries_.find(key);
        if (it != entries_.end()) {
            fut = it->second;
        } else {
            fut = prom.get_future().share();
            entries_.emplace(key, fut);
            owner = true;
        }
    }
    if (!owner) {
        return {fut.get(), true};
    }
    try {
        std::string value = compute();
        prom.set_value(value);
        if (!file_.empty()) {
            std::lock_guard lock(mutex_);
            if (file_.has_parent_path()) {
                std::error_code ec;
                std::filesystem::create_directories(file_.parent_path(), ec);
            }
            std::ofstream out(file_, std::ios::app | std::ios::binary);
            out << json{{"key", key}, {"value", value}}.dump() << "\n";
        }
        return {std::move(value), false};
    } catch (...) {
        prom.set_exception(std::current_exception());
        std::lock_guard lock(mutex_);
        entries_.erase(key);  // let later callers retry
        throw;
    }
}

// --- stages --------------------------------------------------------------------

StageOutcome create_prompt(Backend& local_backend,
                           const PipelinePrompts& prompts,
                           const std::string& query,
                           int max_output_tokens) {
    if (query.empty()) {
        throw std::invalid_argument("query is empty");
    }
    const auto start = std::chrono::steady_clock::now();
    ChatRequest request = render(prompts.creator, {{"userQuery", query}});
    request.max_output_tokens = max_output_tokens;
    const ChatResponse response = chat(local_backend, request);

    StageOutcome outcome;
    outcome.text = parse_primary_or_fallback(prompts.creator, response.content, "createdPrompt",
                                             outcome.fallback_used);
    outcome.usage = response.usage;
    outcome.latency_ms = elapsed_ms(start);
    if (util::trim(outcome.text).empty()) {
        throw EmptyCreation("creator produced an empty prompt");
    }
    return outcome;
}

StageOutcome remote_respond(Backend& remote_backend, const std::string& created_prompt,
                            int max_output_tokens) {
    if (created_prompt.empty()) {
        throw std::invalid_argument("created prompt is empty");
    }
    const auto start = std::chrono::steady_clock::now();
    ChatRequest request;
    request.max_output_tokens = max_output_tokens;
    request.messages.push_back({Role::user, created_prompt});
    const ChatResponse response = chat(remote_backend, request);

    StageOutcome outcome;
    outcome.text = response.content;
    outcome.usage = response.usage;
    outcome.latency_ms = elapsed_ms(start);
    return outcome;
}

StageOutcome aggregate(Backend& local_backend,
                       const PipelinePrompts& prompts,
                       const std::string& query,
                       const std::string& remote_response,
                       int max_output_tokens) {
    if (query.empty() || remote_response.empty()) {
        throw std::invalid_argument("aggregate needs both the query and the remote response");
    }
    const auto start = std::chrono::steady_clock::now();
    ChatRequest request = render(
        prompts.aggregator, {{"userQuery", query}, {"modelExampleResponses", remote_response}});
    request.max_output_tokens = max_output_tokens;
    const ChatResponse response = chat(local_backend, request);

    StageOutcome outcome;
    outcome.text = parse_primary_or_fallback(prompts.aggregator, response.content, "finalOutput",
                                             outcome.fallback_used);
    outcome.usage = response.usage;
    outcome.latency_ms = elapsed_ms(start);
    if (util::trim(outcome.text).empty()) {
        throw EmptyCreation("aggregator produced an empty final output");
    }
    return outcome;
}

// --- Pipeline --------------------------------------------------------------------

Pipeline::Pipeline(std::shared_ptr<Backend> local_backend,
                   std::shared_ptr<Backend> remote_backend,
                   PipelinePrompts prompts,
                   PipelineOptions options)
    : local_(std::move(local_backend)),
      remote_(std::move(remote_backend)),
      prompts_(std::move(prompts)),
      options_(std::move(options)) {
    prompts_.validate();
    creator_digest_ = template_digest(prompts_.creator);
    if (options_.caching) {
        cache_ = options_.cache_file.empty() ? std::make_unique<PromptCache>()
                                             : std::make_unique<PromptCache>(options_.cache_file);
    }
}

PipelineTrace Pipeline::run(const std::string& query_id, const std::string& query) const {
    PipelineTrace trace;
    trace.query_id = query_id;
    trace.user_query = query;

    // Creator stage, possibly served from the cache keyed on (query_id, creator
    // template digest) so optimizer trials with changed prompts never reuse a
    // stale creation.
    try {
        if (cache_) {
            const std::string key = query_id + "\x1f" + creator_digest_;
            StageOutcome outcome;
            bool computed = false;
            const auto [value, hit] = cache_->get_or_compute(key, [&] {
                outcome = create_prompt(*local_, prompts_, query, options_.max_output_tokens);
                computed = true;
                return outcome.text;
            });
            trace.created_prompt = value;
            trace.cache_hit = hit;
            if (computed) {
                trace.usage_by_stage[kCreatorStage] = outcome.usage;
                trace.timings_ms[kCreatorStage] = outcome.latency_ms;
                trace.parse_fallback_used = outcome.fallback_used;
            } else {
                trace.usage_by_stage[kCreatorStage] = {};
                trace.timings_ms[kCreatorStage] = 0.0;
            }
        } else {
            const StageOutcome outcome = create_prompt(*local_, prompts_, query, options_.max_output_tokens);
            trace.created_prompt = outcome.text;
            trace.usage_by_stage[kCreatorStage] = outcome.usage;
            trace.timings_ms[kCreatorStage] = outcome.latency_ms;
            trace.parse_fallback_used = outcome.fallback_used;
        }
    } catch (const BudgetExceeded&) {
        throw;
    } catch (const std::exception& e) {
        throw StageError(Stage::creator, e.what());
    }

    try {
        const StageOutcome outcome =
            remote_respond(*remote_, trace.created_prompt, options_.max_output_tokens);
        trace.remote_response = outcome.text;
        trace.usage_by_stage[kRemoteStage] = outcome.usage;
        trace.timings_ms[kRemoteStage] = outcome.latency_ms;
    } catch (const BudgetExceeded&) {
        throw;
    } catch (const std::exception& e) {
        throw StageError(Stage::remote, e.what());
    }

    try {
        const StageOutcome outcome = aggregate(*local_, prompts_, query, trace.remote_response,
                                               options_.max_output_tokens);
        trace.final_output = outcome.text;
        trace.usage_by_stage[kAggregatorStage] = outcome.usage;
        trace.timings_ms[kAggregatorStage] = outcome.latency_ms;
        trace.parse_fallback_used = trace.parse_fallback_used || outcome.fallback_used;
    } catch (const BudgetExceeded&) {
        throw;
    } catch (const std::exception& e) {
        throw StageError(Stage::aggregator, e.what());
    }

    return trace;
}

}  // namespace papillon
