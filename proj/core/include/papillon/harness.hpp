#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "papillon/chatio.hpp"
#include "papillon/pipeline.hpp"
#include "papillon/pupa.hpp"

namespace papillon::harness {

/// One (record, system) scoring outcome. Rows persist before aggregation so
/// interrupted runs resume instead of re-spending judge calls.
struct EvalRow {
    std::string record_id;
    std::string system;  // papillon | direct | redacted | local
    pupa::Category category = pupa::Category::other;
    bool failed = false;
    std::string error;
    int qual = 0;
    double leak = 0.0;               // 0-1 scale in rows; scaled at aggregation
    std::optional<int> pwf;          // judged only where the objective needs it
    std::optional<double> composite;
    int judge_calls = 0;
    std::map<std::string, TokenUsage> usage_by_stage;
    std::optional<PipelineTrace> trace;  // in memory; persisted to traces.jsonl
};

std::string row_to_json(const EvalRow& row);
EvalRow row_from_json(const std::string& text);

struct PricePerMillion {
    double input = 0.0;
    double output = 0.0;
};

/// Prices keyed by stage name (creator/remote/aggregator/local).
using PricingTable = std::map<std::string, PricePerMillion>;

struct StageCost {
    std::int64_t prompt_tokens = 0;
    std::int64_t completion_tokens = 0;
    double cost = 0.0;
};

struct CostReport {
    std::int64_t total_prompt_tokens = 0;
    std::int64_t total_completion_tokens = 0;
    double total_cost = 0.0;
    std::map<std::string, StageCost> per_stage;
    // Per-record average remote-stage token deltas against the direct
    // baseline; absent when no baseline rows are supplied.
    std::optional<double> avg_prompt_token_delta;
    std::optional<double> avg_completion_token_delta;
};

struct CategoryAggregate {
    std::size_t n = 0;
    double mean_qual = 0.0;
    double mean_leak = 0.0;
};

struct AggregateReport {
    std::string system;
    std::size_t n = 0;         // rows entering the means
    std::size_t excluded = 0;  // failed rows left out of the means
    std::size_t resumed = 0;   // records already present in the row file
    double mean_qual = 0.0;    // 0-100 scale
    double mean_leak = 0.0;    // 0-100 scale
    std::map<pupa::Category, CategoryAggregate> by_category;
    CostReport cost;
};

struct EvalOptions {
    std::filesystem::path out_dir;  // empty: nothing persisted
    PricingTable pricing;           // empty: no cost figures
    int concurrency = 1;
};

/// Runs the pipeline per record and judges quality against the target and
/// leakage of the created prompt. Failed records become flagged rows excluded
/// from the means.
AggregateReport eval_pipeline(const std::vector<pupa::PupaRecord>& dataset,
                              const Pipeline& pipeline,
                              Backend& judge_backend,
                              const EvalOptions& options = {});

/// The remote model answers the raw query; leakage is 100 by construction.
AggregateReport eval_baseline_direct(const std::vector<pupa::PupaRecord>& dataset,
                                     Backend& remote_backend,
                                     Backend& judge_backend,
                                     const EvalOptions& options = {});

/// The remote model answers the redacted query; leakage is 0 by construction.
/// Throws MissingRedaction when a record lacks redacted_query.
AggregateReport eval_baseline_redacted(const std::vector<pupa::PupaRecord>& dataset,
                                       Backend& remote_backend,
                                       Backend& judge_backend,
                                       const EvalOptions& options = {});

/// The trusted model answers the raw query directly; nothing reaches the
/// remote side, so leakage is 0 by construction.
AggregateReport eval_baseline_local(const std::vector<pupa::PupaRecord>& dataset,
                                    Backend& local_backend,
                                    Backend& judge_backend,
                                    const EvalOptions& options = {});

/// Exact token-by-price totals over non-failed rows. Throws MissingPricing
/// when a stage present in the rows has no price entry. With baseline rows,
/// reports per-record average remote-token deltas (row minus baseline).
CostReport cost_report(const std::vector<EvalRow>& rows,
                       const PricingTable& pricing,
                       const std::vector<EvalRow>* baseline_rows = nullptr);

/// dot(a,b) / (|a||b|). Throws DimensionMismatch or ZeroVector.
double cosine(std::span<const double> a, std::span<const double> b);

class Embedder {
public:
    virtual ~Embedder() = default;
    virtual std::vector<double> embed(const std::string& text) = 0;
};

/// OpenAI-style embeddings endpoint: POST {base_url}/embeddings.
class HttpEmbedder final : public Embedder {
public:
    HttpEmbedder(std::string base_url, std::string model, std::string api_key_env);
    std::vector<double> embed(const std::string& text) override;

private:
    std::string base_url_;
    std::string model_;
    std::string api_key_env_;
};

/// Mean cosine between each row's final output and its remote response.
/// Rows without a trace are skipped.
double similarity_report(const std::vector<EvalRow>& rows, Embedder& embedder);

enum class ReportFormat { json, csv, markdown };

void emit_report(const AggregateReport& report,
                 const std::vector<EvalRow>& rows,
                 ReportFormat format,
                 const std::filesystem::path& path);

std::string report_to_json(const AggregateReport& report);
std::string rows_to_csv(const std::vector<EvalRow>& rows);
std::string report_to_markdown(const AggregateReport& report);

std::vector<EvalRow> load_rows(const std::filesystem::path& out_dir);

}  // namespace papillon::harness
