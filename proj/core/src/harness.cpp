#include "papillon/harness.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <mutex>
#include <regex>
#include <set>

#include <httplib.h>
#include <json.hpp>

#include "papillon/errors.hpp"
#include "papillon/judge.hpp"
#include "papillon/util.hpp"

namespace papillon::harness {

using nlohmann::json;

namespace {

constexpr const char* kRowsFile = "rows.jsonl";
constexpr const char* kTracesFile = "traces.jsonl";

}  // namespace

// --- row serialization ---------------------------------------------------------

std::string row_to_json(const EvalRow& row) {
    nlohmann::ordered_json j;
    j["record_id"] = row.record_id;
    j["system"] = row.system;
    j["category"] = pupa::to_string(row.category);
    j["failed"] = row.failed;
    j["error"] = row.error;
    j["qual"] = row.qual;
    j["leak"] = row.leak;
    j["pwf"] = row.pwf ? json(*row.pwf) : json(nullptr);
    j["composite"] = row.composite ? json(*row.composite) : json(nullptr);
    j["judge_calls"] = row.judge_calls;
    j["usage_by_stage"] = nlohmann::ordered_json::object();
    for (const auto& [stage, usage] : row.usage_by_stage) {
        j["usage_by_stage"][stage] = {{"prompt_tokens", usage.prompt_tokens},
                                      {"completion_tokens", usage.completion_tokens}};
    }
    return j.dump();
}

EvalRow row_from_json(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw SchemaError(1, std::string("invalid row JSON: ") + e.what());
    }
    EvalRow row;
    try {
        row.record_id = j.at("record_id").get<std::string>();
        row.system = j.at("system").get<std::string>();
        row.category = pupa::category_from_string(j.value("category", "other"));
        row.failed = j.value("failed", false);
        row.error = j.value("error", "");
        row.qual = j.value("qual", 0);
        row.leak = j.value("leak", 0.0);
        if (j.contains("pwf") && !j["pwf"].is_null()) row.pwf = j["pwf"].get<int>();
        if (j.contains("composite") && !j["composite"].is_null()) {
            row.composite = j["composite"].get<double>();
        }
        row.judge_calls = j.value("judge_calls", 0);
        if (j.contains("usage_by_stage")) {
            for (const auto& [stage, usage] : j["usage_by_stage"].items()) {
                row.usage_by_stage[stage] = {usage.at("prompt_tokens").get<std::int64_t>(),
                                             usage.at("completion_tokens").get<std::int64_t>()};
            }
        }
    } catch (const json::exception& e) {
        throw SchemaError(1, std::string("row JSON missing fields: ") + e.what());
    }
    return row;
}

std::vector<EvalRow> load_rows(const std::filesystem::path& out_dir) {
    std::vector<EvalRow> rows;
    const auto rows_path = out_dir / kRowsFile;
    if (out_dir.empty() || !std::filesystem::exists(rows_path)) {
        return rows;
    }
    std::size_t line_no = 0;
    for (const auto& line : util::split_lines(util::read_file(rows_path))) {
        ++line_no;
        if (util::trim(line).empty()) continue;
        try {
            rows.push_back(row_from_json(line));
        } catch (const SchemaError& e) {
            throw SchemaError(line_no, e.what());
        }
    }
    // Rejoin persisted traces by query id where available.
    const auto traces_path = out_dir / kTracesFile;
    if (std::filesystem::exists(traces_path)) {
        std::map<std::string, PipelineTrace> traces;
        for (const auto& line : util::split_lines(util::read_file(traces_path))) {
            if (util::trim(line).empty()) continue;
            PipelineTrace trace = trace_from_json(line);
            traces[trace.query_id] = std::move(trace);
        }
        for (auto& row : rows) {
            const auto it = traces.find(row.record_id);
            if (it != traces.end()) row.trace = it->second;
        }
    }
    return rows;
}

// --- shared evaluation driver -----------------------------------------------------

namespace {

struct RowSink {
    std::filesystem::path rows_path;
    std::filesystem::path traces_path;
    std::mutex mutex;

    void append(const EvalRow& row) {
        if (rows_path.empty()) return;
        std::lock_guard lock(mutex);
        std::ofstream rows_out(rows_path, std::ios::app | std::ios::binary);
        rows_out << row_to_json(row) << "\n";
        if (row.trace) {
            std::ofstream traces_out(traces_path, std::ios::app | std::ios::binary);
            traces_out << trace_to_json(*row.trace) << "\n";
        }
    }
};

AggregateReport aggregate_rows(const std::string& system,
                               std::vector<EvalRow> rows,
                               std::size_t resumed,
                               const PricingTable& pricing) {
    AggregateReport report;
    report.system = system;
    report.resumed = resumed;

    double qual_sum = 0.0;
    double leak_sum = 0.0;
    std::map<pupa::Category, std::array<double, 3>> by_category;  // n, qual, leak
    for (const auto& row : rows) {
        if (row.system != system) continue;
        if (row.failed) {
            ++report.excluded;
            continue;
        }
        ++report.n;
        qual_sum += row.qual;
        leak_sum += row.leak;
        auto& slot = by_category[row.category];
        slot[0] += 1.0;
        slot[1] += row.qual;
        slot[2] += row.leak;
    }
    if (report.n > 0) {
        report.mean_qual = 100.0 * qual_sum / static_cast<double>(report.n);
        report.mean_leak = 100.0 * leak_sum / static_cast<double>(report.n);
    }
    for (const auto& [category, slot] : by_category) {
        CategoryAggregate agg;
        agg.n = static_cast<std::size_t>(slot[0]);
        agg.mean_qual = 100.0 * slot[1] / slot[0];
        agg.mean_leak = 100.0 * slot[2] / slot[0];
        report.by_category[category] = agg;
    }
    if (!pricing.empty()) {
        std::vector<EvalRow> scored;
        for (auto& row : rows) {
            if (row.system == system && !row.failed) scored.push_back(std::move(row));
        }
        report.cost = cost_report(scored, pricing);
    }
    return report;
}

using RecordScorer = std::function<EvalRow(const pupa::PupaRecord&)>;

AggregateReport run_eval(const std::string& system,
                         const std::vector<pupa::PupaRecord>& dataset,
                         const EvalOptions& options,
                         const RecordScorer& scorer) {
    if (dataset.empty()) {
        throw EmptyDataset("evaluation dataset is empty");
    }

    RowSink sink;
    std::vector<EvalRow> existing;
    if (!options.out_dir.empty()) {
        std::filesystem::create_directories(options.out_dir);
        sink.rows_path = options.out_dir / kRowsFile;
        sink.traces_path = options.out_dir / kTracesFile;
        existing = load_rows(options.out_dir);
    }
    std::set<std::string> done;
    for (const auto& row : existing) {
        if (row.system == system) done.insert(row.record_id);
    }

    std::vector<const pupa::PupaRecord*> todo;
    for (const auto& record : dataset) {
        if (!done.count(record.id)) todo.push_back(&record);
    }
    const std::size_t resumed = dataset.size() - todo.size();

    std::vector<EvalRow> fresh(todo.size());
    util::parallel_for(todo.size(), options.concurrency, [&](std::size_t i) {
        const pupa::PupaRecord& record = *todo[i];
        EvalRow row;
        row.record_id = record.id;
        row.system = system;
        row.category = record.category;
        try {
            row = scorer(record);
            row.record_id = record.id;
            row.system = system;
            row.category = record.category;
        } catch (const Error& e) {
            row.failed = true;
            row.error = e.what();
        }
        sink.append(row);
        fresh[i] = std::move(row);
    });

    std::vector<EvalRow> all = existing;
    for (auto& row : fresh) all.push_back(std::move(row));
    return aggregate_rows(system, std::move(all), resumed, options.pricing);
}

}  // namespace

AggregateReport eval_pipeline(const std::vector<pupa::PupaRecord>& dataset,
                              const Pipeline& pipeline,
                              Backend& judge_backend,
                              const EvalOptions& options) {
    return run_eval("papillon", dataset, options, [&](const pupa::PupaRecord& record) {
        EvalRow row;
        PipelineTrace trace = pipeline.run(record.id, record.user_query);
        row.qual = judge::qual(judge_backend, record.user_query, trace.final_output,
                               record.target_response);
        row.leak =
            judge::leak(judge_backend, trace.created_prompt, record.pii_unit_values());
        row.judge_calls = 2 + static_cast<int>(record.pii_units.size());
        row.usage_by_stage = trace.usage_by_stage;
        row.trace = std::move(trace);
        return row;
    });
}

namespace {

EvalRow single_backend_row(Backend& backend,
                           Backend& judge_backend,
                           const pupa::PupaRecord& record,
                           const std::string& query,
                           const std::string& stage_name,
                           double fixed_leak) {
    ChatRequest request;
    request.messages.push_back({Role::user, query});
    const ChatResponse response = chat(backend, request);

    EvalRow row;
    row.qual = judge::qual(judge_backend, record.user_query, response.content,
                           record.target_response);
    row.leak = fixed_leak;  // by construction, no leakage judging for baselines
    row.judge_calls = 2;
    row.usage_by_stage[stage_name] = response.usage;
    return row;
}

}  // namespace

AggregateReport eval_baseline_direct(const std::vector<pupa::PupaRecord>& dataset,
                                     Backend& remote_backend,
                                     Backend& judge_backend,
                                     const EvalOptions& options) {
    return run_eval("direct", dataset, options, [&](const pupa::PupaRecord& record) {
        return single_backend_row(remote_backend, judge_backend, record, record.user_query,
                                  "remote", 1.0);
    });
}

AggregateReport eval_baseline_redacted(const std::vector<pupa::PupaRecord>& dataset,
                                       Backend& remote_backend,
                                       Backend& judge_backend,
                                       const EvalOptions& options) {
    for (const auto& record : dataset) {
        if (record.redacted_query.empty()) {
            throw MissingRedaction("record '" + record.id + "' has no redacted_query");
        }
    }
    return run_eval("redacted", dataset, options, [&](const pupa::PupaRecord& record) {
        return single_backend_row(remote_backend, judge_backend, record, record.redacted_query,
                                  "remote", 0.0);
    });
}

AggregateReport eval_baseline_local(const std::vector<pupa::PupaRecord>& dataset,
                                    Backend& local_backend,
                                    Backend& judge_backend,
                                    const EvalOptions& options) {
    return run_eval("local", dataset, options, [&](const pupa::PupaRecord& record) {
        return single_backend_row(local_backend, judge_backend, record, record.user_query,
                                  "local", 0.0);
    });
}

// --- cost ------------------------------------------------------------------------

CostReport cost_report(const std::vector<EvalRow>& rows,
                       const PricingTable& pricing,
                       const std::vector<EvalRow>* baseline_rows) {
    CostReport report;
    long double total_cost = 0.0L;
    for (const auto& row : rows) {
        if (row.failed) continue;
        for (const auto& [stage, usage] : row.usage_by_stage) {
            const auto it = pricing.find(stage);
            if (it == pricing.end()) {
                throw MissingPricing("no pricing entry for stage '" + stage + "'");
            }
            auto& slot = report.per_stage[stage];
            slot.prompt_tokens += usage.prompt_tokens;
            slot.completion_tokens += usage.completion_tokens;
            const long double cost =
                static_cast<long double>(usage.prompt_tokens) * it->second.input / 1e6L +
                static_cast<long double>(usage.completion_tokens) * it->second.output / 1e6L;
            slot.cost += static_cast<double>(cost);
            total_cost += cost;
            report.total_prompt_tokens += usage.prompt_tokens;
            report.total_completion_tokens += usage.completion_tokens;
        }
    }
    report.total_cost = static_cast<double>(total_cost);

    if (baseline_rows) {
        std::map<std::string, TokenUsage> base_remote;
        for (const auto& row : *baseline_rows) {
            if (row.failed) continue;
            const auto it = row.usage_by_stage.find("remote");
            if (it != row.usage_by_stage.end()) base_remote[row.record_id] = it->second;
        }
        long double prompt_delta = 0.0L;
        long double completion_delta = 0.0L;
        std::size_t matched = 0;
        for (const auto& row : rows) {
            if (row.failed) continue;
            const auto mine = row.usage_by_stage.find("remote");
            if (mine == row.usage_by_stage.end()) continue;
            const auto base = base_remote.find(row.record_id);
            if (base == base_remote.end()) continue;
            prompt_delta += static_cast<long double>(mine->second.prompt_tokens -
                                                     base->second.prompt_tokens);
            completion_delta += static_cast<long double>(mine->second.completion_tokens -
                                                         base->second.completion_tokens);
            ++matched;
        }
        if (matched > 0) {
            report.avg_prompt_token_delta =
                static_cast<double>(prompt_delta / static_cast<long double>(matched));
            report.avg_completion_token_delta =
                static_cast<double>(completion_delta / static_cast<long double>(matched));
        }
    }
    return report;
}

// --- cosine and similarity ----------------------------------------------------------

double cosine(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) {
        throw DimensionMismatch("vectors have dimensions " + std::to_string(a.size()) + " and " +
                                std::to_string(b.size()));
    }
    double dot = 0.0;
    double na = 0.0;
    double nb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        dot += a[i] * b[i];
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    if (na == 0.0 || nb == 0.0) {
        throw ZeroVector("cosine of a zero vector is undefined");
    }
    return dot / (std::sqrt(na) * std::sqrt(nb));
}

HttpEmbedder::HttpEmbedder(std::string base_url, std::string model, std::string api_key_env)
    : base_url_(std::move(base_url)), model_(std::move(model)),
      api_key_env_(std::move(api_key_env)) {}

std::vector<double> HttpEmbedder::embed(const std::string& text) {
    static const std::regex re(R"(^(https?://[^/]+)(/.*)?$)", std::regex::icase);
    std::smatch m;
    if (!std::regex_match(base_url_, m, re)) {
        throw ConfigError("invalid embedder URL: " + base_url_);
    }
    std::string prefix = m[2].matched ? m[2].str() : "";
    while (!prefix.empty() && prefix.back() == '/') prefix.pop_back();

    httplib::Client client(m[1].str());
    httplib::Headers headers = {{"Content-Type", "application/json"}};
    if (!api_key_env_.empty()) {
        if (const char* key = std::getenv(api_key_env_.c_str()); key && *key) {
            headers.emplace("Authorization", std::string("Bearer ") + key);
        }
    }
    const json body = {{"model", model_}, {"input", text}};
    const httplib::Result result =
        client.Post(prefix + "/embeddings", headers, body.dump(), "application/json");
    if (!result || result->status != 200) {
        throw TransportError("embedder request failed");
    }
    try {
        const json parsed = json::parse(result->body);
        return parsed.at("data").at(0).at("embedding").get<std::vector<double>>();
    } catch (const json::exception& e) {
        throw ProtocolError(std::string("malformed embedding payload: ") + e.what());
    }
}

double similarity_report(const std::vector<EvalRow>& rows, Embedder& embedder) {
    double total = 0.0;
    std::size_t counted = 0;
    for (const auto& row : rows) {
        if (row.failed || !row.trace) continue;
        const std::vector<double> a = embedder.embed(row.trace->final_output);
        const std::vector<double> b = embedder.embed(row.trace->remote_response);
        total += cosine(a, b);
        ++counted;
    }
    if (counted == 0) {
        throw EmptyDataset("no rows with traces to compare");
    }
    return total / static_cast<double>(counted);
}

// --- report emission -------------------------------------------------------------------

std::string report_to_json(const AggregateReport& report) {
    nlohmann::ordered_json j;
    j["system"] = report.system;
    j["n"] = report.n;
    j["excluded"] = report.excluded;
    j["resumed"] = report.resumed;
    j["mean_qual"] = report.mean_qual;
    j["mean_leak"] = report.mean_leak;
    j["by_category"] = nlohmann::ordered_json::object();
    for (const auto& [category, agg] : report.by_category) {
        j["by_category"][pupa::to_string(category)] = {
            {"n", agg.n}, {"mean_qual", agg.mean_qual}, {"mean_leak", agg.mean_leak}};
    }
    nlohmann::ordered_json cost;
    cost["total_prompt_tokens"] = report.cost.total_prompt_tokens;
    cost["total_completion_tokens"] = report.cost.total_completion_tokens;
    cost["total_cost"] = report.cost.total_cost;
    cost["per_stage"] = nlohmann::ordered_json::object();
    for (const auto& [stage, slot] : report.cost.per_stage) {
        cost["per_stage"][stage] = {{"prompt_tokens", slot.prompt_tokens},
                                    {"completion_tokens", slot.completion_tokens},
                                    {"cost", slot.cost}};
    }
    cost["avg_prompt_token_delta"] = report.cost.avg_prompt_token_delta
                                         ? json(*report.cost.avg_prompt_token_delta)
                                         : json(nullptr);
    cost["avg_completion_token_delta"] = report.cost.avg_completion_token_delta
                                             ? json(*report.cost.avg_completion_token_delta)
                                             : json(nullptr);
    j["cost"] = cost;
    return j.dump(2) + "\n";
}

std::string rows_to_csv(const std::vector<EvalRow>& rows) {
    std::string out =
        "record_id,system,category,failed,qual,leak,pwf,composite,judge_calls\n";
    for (const auto& row : rows) {
        out += row.record_id + "," + row.system + "," + pupa::to_string(row.category) + "," +
               (row.failed ? "true" : "false") + "," + std::to_string(row.qual) + "," +
               std::to_string(row.leak) + "," +
               (row.pwf ? std::to_string(*row.pwf) : "") + "," +
               (row.composite ? std::to_string(*row.composite) : "") + "," +
               std::to_string(row.judge_calls) + "\n";
    }
    return out;
}

namespace {

std::string fixed1(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.1f", v);
    return buf;
}

}  // namespace

std::string report_to_markdown(const AggregateReport& report) {
    std::string out;
    out += "| System | n | Qual | Leak | ΔPrompt Tokens | ΔCompletion Tokens |\n";
    out += "|---|---|---|---|---|---|\n";
    out += "| " + report.system + " | " + std::to_string(report.n) + " | " +
           fixed1(report.mean_qual) + " | " + fixed1(report.mean_leak) + " | " +
           (report.cost.avg_prompt_token_delta ? fixed1(*report.cost.avg_prompt_token_delta)
                                               : "n/a") +
           " | " +
           (report.cost.avg_completion_token_delta
                ? fixed1(*report.cost.avg_completion_token_delta)
                : "n/a") +
           " |\n";
    if (!report.by_category.empty()) {
        out += "\n| Category | n | Qual | Leak |\n|---|---|---|---|\n";
        for (const auto& [category, agg] : report.by_category) {
            out += "| " + pupa::to_string(category) + " | " + std::to_string(agg.n) + " | " +
                   fixed1(agg.mean_qual) + " | " + fixed1(agg.mean_leak) + " |\n";
        }
    }
    return out;
}

void emit_report(const AggregateReport& report,
                 const std::vector<EvalRow>& rows,
                 ReportFormat format,
                 const std::filesystem::path& path) {
    switch (format) {
        case ReportFormat::json:
            util::write_file(path, report_to_json(report));
            return;
        case ReportFormat::csv:
            util::write_file(path, rows_to_csv(rows));
            return;
        case ReportFormat::markdown:
            util::write_file(path, report_to_markdown(report));
            return;
    }
    throw IoError("unknown report format");
}

}  // namespace papillon::harness
