// papillon: privacy-conscious delegation of user queries to a remote model.
//
// Subcommands: run, eval, optimize, mine, stats, serve. Everything is driven
// by a JSON config file; credentials come from environment variables named in
// the config and never appear on the command line or in any output.

#include <cstdlib>
#include <iostream>

#include <CLI11.hpp>

#include "papillon/config.hpp"
#include "papillon/errors.hpp"
#include "papillon/harness.hpp"
#include "papillon/optimizer.hpp"
#include "papillon/pipeline.hpp"
#include "papillon/proxy.hpp"
#include "papillon/pupa.hpp"
#include "papillon/util.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitPartial = 1;
constexpr int kExitConfig = 2;

using namespace papillon;

std::shared_ptr<Pipeline> build_pipeline(const AppConfig& config) {
    auto local = make_backend(config, "local", BackendRole::trusted_local);
    auto remote = make_backend(config, "remote", BackendRole::untrusted_remote);
    PipelineOptions options;
    options.caching = config.caching;
    if (config.caching && !config.run_dir.empty()) {
        options.cache_file = config.run_dir / "prompt-cache.jsonl";
    }
    options.max_output_tokens = config.max_output_tokens;
    return std::make_shared<Pipeline>(std::move(local), std::move(remote),
                                      load_pipeline_prompts(config), std::move(options));
}

int cmd_run(const AppConfig& config, const std::string& query, bool as_json) {
    const auto pipeline = build_pipeline(config);
    try {
        const PipelineTrace trace = pipeline->run(util::fnv1a64_hex(query), query);
        if (as_json) {
            std::cout << trace_to_json(trace) << "\n";
        } else {
            std::cout << trace.final_output << "\n";
        }
        return kExitOk;
    } catch (const StageError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitPartial;
    }
}

int cmd_eval(const AppConfig& config,
             const std::string& dataset_path,
             const std::string& system,
             const std::string& out_dir) {
    const std::vector<pupa::PupaRecord> dataset = pupa::load(dataset_path);

    harness::EvalOptions options;
    options.out_dir = out_dir;
    options.pricing = pricing_from_config(config);
    options.concurrency = config.concurrency;

    auto judge = make_backend(config, "judge", BackendRole::judge);
    harness::AggregateReport report;
    if (system == "papillon") {
        report = harness::eval_pipeline(dataset, *build_pipeline(config), *judge, options);
    } else if (system == "direct") {
        auto remote = make_backend(config, "remote", BackendRole::untrusted_remote);
        report = harness::eval_baseline_direct(dataset, *remote, *judge, options);
    } else if (system == "redacted") {
        auto remote = make_backend(config, "remote", BackendRole::untrusted_remote);
        report = harness::eval_baseline_redacted(dataset, *remote, *judge, options);
    } else {
        auto local = make_backend(config, "local", BackendRole::trusted_local);
        report = harness::eval_baseline_local(dataset, *local, *judge, options);
    }

    const std::vector<harness::EvalRow> rows = harness::load_rows(out_dir);
    std::vector<harness::EvalRow> system_rows;
    std::vector<harness::EvalRow> direct_rows;
    for (const auto& row : rows) {
        if (row.system == report.system) system_rows.push_back(row);
        if (row.system == "direct" && !row.failed) direct_rows.push_back(row);
    }
    // When the same out dir holds a direct-baseline run, report the remote
    // token deltas against it.
    if (report.system != "direct" && !direct_rows.empty() && !options.pricing.empty()) {
        std::vector<harness::EvalRow> scored;
        for (const auto& row : system_rows) {
            if (!row.failed) scored.push_back(row);
        }
        report.cost = harness::cost_report(scored, options.pricing, &direct_rows);
    }
    harness::emit_report(report, system_rows, harness::ReportFormat::json,
                         std::filesystem::path(out_dir) / ("report-" + system + ".json"));
    harness::emit_report(report, system_rows, harness::ReportFormat::csv,
                         std::filesystem::path(out_dir) / ("rows-" + system + ".csv"));
    harness::emit_report(report, system_rows, harness::ReportFormat::markdown,
                         std::filesystem::path(out_dir) / ("report-" + system + ".md"));

    std::cout << harness::report_to_markdown(report);
    return report.excluded > 0 ? kExitPartial : kExitOk;
}

int cmd_optimize(const AppConfig& config,
                 const std::string& dataset_path,
                 int trials,
                 std::uint64_t seed,
                 const std::string& out_dir) {
    const std::vector<pupa::PupaRecord> dataset = pupa::load(dataset_path);
    const pupa::TrainValSplit split =
        pupa::sample_train_val(dataset, config.train_size, config.val_size, seed);
    if (split.scaled) {
        std::cerr << "warning: dataset smaller than requested train/val sizes, sampled "
                  << split.train.size() << "/" << split.val.size() << " instead\n";
    }

    optimizer::OptimizerConfig opt;
    opt.trials = trials;
    opt.minibatch_size = std::min(config.optimizer_minibatch_size, split.train.size());
    opt.train = split.train;
    opt.val = split.val;
    opt.seed = seed;
    opt.promote_top_k = config.optimizer_promote_top_k;

    optimizer::ScoringBackends backends;
    backends.local = make_backend(config, "local", BackendRole::trusted_local);
    backends.remote = make_backend(config, "remote", BackendRole::untrusted_remote);
    backends.judge = make_backend(config, "judge", BackendRole::judge);
    auto proposer = make_backend(config, "proposer", BackendRole::proposer);

    optimizer::OptimizeSinks sinks;
    sinks.trial_log = std::filesystem::path(out_dir) / "trials.jsonl";
    sinks.checkpoint = std::filesystem::path(out_dir) / "best_prompts.json";

    const PipelinePrompts seeds = load_pipeline_prompts(config);
    if (trials == 0) {
        // Nothing to search; the seeds are the result.
        util::write_file(sinks.checkpoint, prompts_to_json(seeds));
        util::write_file(sinks.trial_log, "");
        std::cout << "trials=0, seed prompts written unchanged\n";
        return kExitOk;
    }

    try {
        const optimizer::OptimizeResult result =
            optimizer::optimize(opt, backends, *proposer, seeds, sinks);
        std::cout << "best full-train score: " << result.best_full_score << "\n"
                  << "validation score: " << result.val_score << "\n"
                  << "best prompts: " << sinks.checkpoint.string() << "\n";
        return kExitOk;
    } catch (const BudgetExceeded& e) {
        std::cerr << "aborted on budget: " << e.what() << " (best-so-far persisted)\n";
        return kExitPartial;
    }
}

int cmd_mine(const AppConfig& config,
             const std::string& corpus_path,
             const std::string& out_path,
             bool anonymize_names) {
    const std::vector<pupa::Conversation> corpus = pupa::load_corpus(corpus_path);
    auto annotator = make_backend(config, "judge", BackendRole::judge);
    pupa::MinerBackends backends;
    backends.classifier = annotator.get();
    backends.context_judge = annotator.get();
    backends.redactor = annotator.get();

    pupa::BuildResult result =
        pupa::build(corpus, backends, pupa::Subset::custom, config.concurrency);
    if (anonymize_names) {
        result.records = pupa::anonymize(result.records);
    }
    pupa::save(out_path, result.records);
    std::cout << "wrote " << result.records.size() << " records to " << out_path << "\n";
    for (const auto& skip : result.skipped) {
        std::cerr << "skipped conversation " << skip.conversation_id << ": " << skip.reason
                  << "\n";
    }
    return result.skipped.empty() ? kExitOk : kExitPartial;
}

int cmd_stats(const std::string& dataset_path) {
    const std::vector<pupa::PupaRecord> dataset = pupa::load(dataset_path);
    const pupa::DatasetStats stats = pupa::stats(dataset);
    std::cout << "Records: " << stats.count << "\n";
    for (const auto& [category, pct] : stats.pct_by_category) {
        std::printf("%%(%s): %.2f\n", pupa::to_string(category).c_str(), pct);
    }
    std::printf("Avg. PII units: %.2f\n", stats.avg_pii_units);
    std::printf("Avg. prompt len: %.1f\n", stats.avg_prompt_len);
    std::printf("Avg. completion len: %.1f\n", stats.avg_completion_len);
    return kExitOk;
}

int cmd_serve(const AppConfig& config, int port, const std::string& host, bool tracing) {
    ProxyOptions options;
    options.host = host;
    options.port = port;
    options.concurrency_limit = config.concurrency;
    options.tracing = tracing;
    options.run_dir = config.run_dir;
    ProxyServer server(build_pipeline(config), options);
    std::cerr << "listening on " << host << ":" << port << "\n";
    server.run();
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"privacy-conscious delegation pipeline"};
    app.require_subcommand(1);

    std::string config_path = "papillon.json";
    if (const char* env = std::getenv("PAPILLON_CONFIG"); env && *env) {
        config_path = env;
    }
    app.add_option("--config", config_path, "path to the JSON config file");

    auto* run_cmd = app.add_subcommand("run", "run one query through the pipeline");
    std::string query;
    bool as_json = false;
    run_cmd->add_option("--query", query, "the user query")->required();
    run_cmd->add_flag("--json", as_json, "print the full trace as JSON");

    auto* eval_cmd = app.add_subcommand("eval", "score a dataset with one system");
    std::string dataset_path;
    std::string system = "papillon";
    std::string out_dir = "eval-out";
    eval_cmd->add_option("--dataset", dataset_path, "dataset JSONL")->required();
    eval_cmd->add_option("--system", system, "system to evaluate")
        ->check(CLI::IsMember({"papillon", "direct", "redacted", "local"}));
    eval_cmd->add_option("--out", out_dir, "output directory")->required();

    auto* opt_cmd = app.add_subcommand("optimize", "search for better pipeline prompts");
    std::string opt_dataset;
    int trials = -1;
    std::uint64_t seed = 0;
    std::string opt_out = "optimize-out";
    opt_cmd->add_option("--dataset", opt_dataset, "dataset JSONL")->required();
    opt_cmd->add_option("--trials", trials, "number of proposal trials");
    opt_cmd->add_option("--seed", seed, "RNG seed");
    opt_cmd->add_option("--out", opt_out, "output directory")->required();

    auto* mine_cmd = app.add_subcommand("mine", "build records from a conversation corpus");
    std::string corpus_path;
    std::string mine_out;
    bool anonymize_names = false;
    mine_cmd->add_option("--corpus", corpus_path, "corpus JSONL")->required();
    mine_cmd->add_option("--out", mine_out, "output dataset JSONL")->required();
    mine_cmd->add_flag("--anonymize", anonymize_names, "replace PII units with pseudonyms");

    auto* stats_cmd = app.add_subcommand("stats", "print dataset statistics");
    std::string stats_dataset;
    stats_cmd->add_option("--dataset", stats_dataset, "dataset JSONL")->required();

    auto* serve_cmd = app.add_subcommand("serve", "serve the chat-completions proxy");
    int port = 8188;
    std::string host = "127.0.0.1";
    bool tracing = false;
    serve_cmd->add_option("--port", port, "port to listen on");
    serve_cmd->add_option("--host", host, "address to bind");
    serve_cmd->add_flag("--trace", tracing, "persist per-run traces");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitConfig;
    }

    try {
        if (*stats_cmd) {
            return cmd_stats(stats_dataset);
        }
        const AppConfig config = load_config(config_path);
        if (*run_cmd) {
            return cmd_run(config, query, as_json);
        }
        if (*eval_cmd) {
            return cmd_eval(config, dataset_path, system, out_dir);
        }
        if (*opt_cmd) {
            const int effective_trials = trials >= 0 ? trials : config.optimizer_trials;
            return cmd_optimize(config, opt_dataset, effective_trials, seed, opt_out);
        }
        if (*mine_cmd) {
            return cmd_mine(config, corpus_path, mine_out, anonymize_names);
        }
        if (*serve_cmd) {
            return cmd_serve(config, port, host, tracing);
        }
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const SchemaError& e) {
        std::cerr << "schema error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const IoError& e) {
        std::cerr << "io error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitPartial;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitPartial;
    }
    return kExitOk;
}
