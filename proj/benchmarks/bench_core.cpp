#include <benchmark/benchmark.h>

#include <random>

#include "papillon/harness.hpp"
#include "papillon/judge.hpp"
#include "papillon/piiex.hpp"
#include "papillon/pipeline.hpp"
#include "papillon/prompts.hpp"
#include "papillon/structio.hpp"
#include "support/helpers.hpp"

using namespace papillon;
using testsupport::scripted;
using testsupport::triple_completion;

namespace {

std::string lorem(std::size_t words) {
    static const char* bank[] = {"write", "an", "email", "to", "the", "team", "about",
                                 "the", "quarterly", "report", "and", "keep", "it", "short"};
    std::string out;
    for (std::size_t i = 0; i < words; ++i) {
        if (i) out += ' ';
        out += bank[i % std::size(bank)];
    }
    return out;
}

void BM_render_creator(benchmark::State& state) {
    const PromptTemplate tmpl = prompts::creator_seed_template();
    const std::map<std::string, std::string> inputs{{"userQuery", lorem(200)}};
    for (auto _ : state) {
        benchmark::DoNotOptimize(render(tmpl, inputs));
    }
}
BENCHMARK(BM_render_creator);

void BM_parse_completion(benchmark::State& state) {
    const PromptTemplate tmpl = prompts::creator_seed_template();
    const std::string completion =
        triple_completion({{"rationale", lorem(60)}, {"createdPrompt", lorem(150)}});
    for (auto _ : state) {
        benchmark::DoNotOptimize(parse(tmpl, completion));
    }
}
BENCHMARK(BM_parse_completion);

void BM_extract_spans(benchmark::State& state) {
    const int n = static_cast<int>(state.range(0));
    std::string original;
    std::string redacted;
    for (int i = 0; i < n; ++i) {
        original += lorem(12) + " NAME" + std::to_string(i) + " ";
        redacted += lorem(12) + " [REDACTED] ";
    }
    for (auto _ : state) {
        benchmark::DoNotOptimize(piiex::extract_spans(original, redacted));
    }
}
BENCHMARK(BM_extract_spans)->Arg(4)->Arg(32);

void BM_parse_verdict(benchmark::State& state) {
    const std::string completion =
        "Reasoning: Let's think step by step in order to weigh both responses against the "
        "request. Response A covers every point.\nOutput: Yes, response A is at least as good.";
    for (auto _ : state) {
        benchmark::DoNotOptimize(judge::parse_verdict(completion));
    }
}
BENCHMARK(BM_parse_verdict);

void BM_cosine(benchmark::State& state) {
    std::mt19937_64 rng(1);
    std::vector<double> a(384);
    std::vector<double> b(384);
    for (std::size_t i = 0; i < a.size(); ++i) {
        a[i] = static_cast<double>(rng() % 1000) / 500.0 - 1.0;
        b[i] = static_cast<double>(rng() % 1000) / 500.0 - 1.0;
    }
    for (auto _ : state) {
        benchmark::DoNotOptimize(harness::cosine(a, b));
    }
}
BENCHMARK(BM_cosine);

void BM_pipeline_run_mocked(benchmark::State& state) {
    auto local = scripted_mock(
        {
            {"[[[ ### modelExampleResponses ### ]]]", false,
             scripted(triple_completion({{"finalOutput", lorem(150)}}))},
            {"[[[ ### userQuery ### ]]]", false,
             scripted(triple_completion({{"createdPrompt", lorem(80)}}))},
        },
        std::nullopt, BackendRole::trusted_local);
    auto remote = scripted_mock({}, scripted(lorem(200)), BackendRole::untrusted_remote);
    const Pipeline pipeline(local, remote, PipelinePrompts::seeds());
    std::size_t i = 0;
    for (auto _ : state) {
        benchmark::DoNotOptimize(pipeline.run("q" + std::to_string(i++), lorem(120)));
    }
}
BENCHMARK(BM_pipeline_run_mocked);

}  // namespace

BENCHMARK_MAIN();
