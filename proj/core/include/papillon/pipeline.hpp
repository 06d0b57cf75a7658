#pragma once

#include <filesystem>
#include <functional>
#include <future>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <unordered_map>

#include "papillon/chatio.hpp"
#include "papillon/structio.hpp"

namespace papillon {

/// The two trusted-model prompts driving a delegation run.
struct PipelinePrompts {
    PromptTemplate creator;
    PromptTemplate aggregator;

    /// Bundled zero-shot starting prompts.
    static PipelinePrompts seeds();

    /// Enforces the field schema: creator takes userQuery and yields
    /// createdPrompt; aggregator takes userQuery + modelExampleResponses and
    /// yields finalOutput.
    void validate() const;
};

/// Checkpoint form of a prompt pair: one JSON document holding both templates.
std::string prompts_to_json(const PipelinePrompts& prompts);
PipelinePrompts prompts_from_json(const std::string& text);

struct PipelineTrace {
    std::string query_id;
    std::string user_query;
    std::string created_prompt;
    std::string remote_response;
    std::string final_output;
    std::map<std::string, TokenUsage> usage_by_stage;  // keys: creator, remote, aggregator
    std::map<std::string, double> timings_ms;
    bool parse_fallback_used = false;
    bool cache_hit = false;
};

std::string trace_to_json(const PipelineTrace& trace);
PipelineTrace trace_from_json(const std::string& text);

/// Created-prompt cache with atomic get-or-compute: concurrent callers for the
/// same key wait on one computation. Optionally persists as a JSONL key-value
/// file under the run directory.
class PromptCache {
public:
    PromptCache();                                   // in-memory only
    explicit PromptCache(std::filesystem::path file);  // loads and appends

    /// Returns (value, hit). On a miss, runs `compute` exactly once per key
    /// even under concurrency and stores the result.
    std::pair<std::string, bool> get_or_compute(const std::string& key,
                                                const std::function<std::string()>& compute);

    std::size_t size() const;

private:
    std::filesystem::path file_;
    mutable std::mutex mutex_;
    std::unordered_map<std::string, std::shared_future<std::string>> entries_;
};

struct StageOutcome {
    std::string text;
    TokenUsage usage;
    double latency_ms = 0.0;
    bool fallback_used = false;
};

/// Renders the creator template for the query against the trusted model and
/// returns the created prompt. Throws EmptyCreation when the result is empty
/// even after the whole-completion fallback.
StageOutcome create_prompt(Backend& local_backend,
                           const PipelinePrompts& prompts,
                           const std::string& query,
                           int max_output_tokens = 1024);

/// One remote call whose user content is exactly the created prompt.
StageOutcome remote_respond(Backend& remote_backend, const std::string& created_prompt,
                            int max_output_tokens = 1024);

/// Fuses the remote response with the raw query on the trusted model.
StageOutcome aggregate(Backend& local_backend,
                       const PipelinePrompts& prompts,
                       const std::string& query,
                       const std::string& remote_response,
                       int max_output_tokens = 1024);

struct PipelineOptions {
    bool caching = false;
    std::filesystem::path cache_file;  // empty: in-memory cache
    int max_output_tokens = 1024;
};

/// creator -> remote -> aggregator, fail-fast. The untrusted backend only ever
/// sees the created prompt.
class Pipeline {
public:
    Pipeline(std::shared_ptr<Backend> local_backend,
             std::shared_ptr<Backend> remote_backend,
             PipelinePrompts prompts,
             PipelineOptions options = {});

    /// Throws StageError naming the failing stage.
    PipelineTrace run(const std::string& query_id, const std::string& query) const;

    const PipelinePrompts& prompts() const { return prompts_; }
    Backend& local() const { return *local_; }
    Backend& remote() const { return *remote_; }
    const PipelineOptions& options() const { return options_; }

private:
    std::shared_ptr<Backend> local_;
    std::shared_ptr<Backend> remote_;
    PipelinePrompts prompts_;
    PipelineOptions options_;
    std::string creator_digest_;
    std::unique_ptr<PromptCache> cache_;
};

}  // namespace papillon
