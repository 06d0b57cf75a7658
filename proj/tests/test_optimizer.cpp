#include <doctest.h>

#include "papillon/errors.hpp"
#include "papillon/optimizer.hpp"
#include "papillon/util.hpp"
#include "support/helpers.hpp"

using namespace papillon;
using testsupport::scripted;
using testsupport::triple_completion;

TEST_SUITE_BEGIN("optimizer");

namespace {

std::vector<pupa::PupaRecord> toy_records(int n, const std::string& prefix = "r") {
    std::vector<pupa::PupaRecord> records;
    for (int i = 0; i < n; ++i) {
        pupa::PupaRecord record;
        record.id = prefix + std::to_string(i);
        record.user_query = "query " + std::to_string(i);
        record.pii_units = {{"Unit" + std::to_string(i)}};
        record.target_response = "target " + std::to_string(i);
        record.category = pupa::Category::emails;
        records.push_back(std::move(record));
    }
    return records;
}

// pipeline backends that answer any creator/aggregator request well-formed
std::shared_ptr<ScriptedBackend> compliant_local() {
    return scripted_mock(
        {
            {"[[[ ### modelExampleResponses ### ]]]", false,
             scripted(triple_completion({{"finalOutput", "F"}}))},
            {"[[[ ### userQuery ### ]]]", false,
             scripted(triple_completion({{"createdPrompt", "P"}}))},
        },
        std::nullopt, BackendRole::trusted_local);
}

// proposer that returns fresh instructions each call
std::shared_ptr<testsupport::FnBackend> counting_proposer() {
    return std::make_shared<testsupport::FnBackend>(
        [](const ChatRequest&, int index) {
            ChatResponse response;
            response.content = triple_completion(
                {{"newCreatorInstruction", "creator v" + std::to_string(index)},
                 {"newAggregatorInstruction", "aggregator v" + std::to_string(index)}});
            return response;
        },
        BackendRole::proposer);
}

optimizer::ScoringBackends all_yes_backends() {
    optimizer::ScoringBackends backends;
    backends.local = compliant_local();
    backends.remote = scripted_mock({}, scripted("R"), BackendRole::untrusted_remote);
    backends.judge = scripted_mock({}, scripted("yes"));
    return backends;
}

}  // namespace

TEST_CASE("propose keeps field schemas and swaps objectives") {
    auto proposer = scripted_mock(
        {},
        scripted(triple_completion({{"newCreatorInstruction", "I-one"},
                                    {"newAggregatorInstruction", "I-two"}})),
        BackendRole::proposer);
    const optimizer::Candidate candidate =
        optimizer::propose(*proposer, PipelinePrompts::seeds(), {});
    CHECK(candidate.prompts.creator.objective == "I-one");
    CHECK(candidate.prompts.aggregator.objective == "I-two");
    REQUIRE(candidate.prompts.creator.fields.size() ==
            PipelinePrompts::seeds().creator.fields.size());
    CHECK(candidate.prompts.creator.fields[0].name == "userQuery");
    CHECK(candidate.prompts.aggregator.fields[2].name == "finalOutput");
}

TEST_CASE("propose shows prior candidates and scores to the proposer") {
    auto proposer = scripted_mock(
        {},
        scripted(triple_completion({{"newCreatorInstruction", "x"},
                                    {"newAggregatorInstruction", "y"}})),
        BackendRole::proposer);
    optimizer::Candidate prior;
    prior.prompts = PipelinePrompts::seeds();
    prior.prompts.creator.objective = "an earlier creator idea";
    prior.trial_index = 3;
    prior.minibatch_scores.push_back(0.625);

    optimizer::propose(*proposer, PipelinePrompts::seeds(), {prior});
    const std::string user = proposer->transcript()[0].messages.back().content;
    CHECK(user.find("Attempt 3 (score 0.6250)") != std::string::npos);
    CHECK(user.find("an earlier creator idea") != std::string::npos);
}

TEST_CASE("empty proposals twice fall back to the seed instruction with a warning") {
    auto proposer = scripted_mock({}, scripted("no markers at all"), BackendRole::proposer);
    std::vector<std::string> warnings;
    const optimizer::Candidate candidate =
        optimizer::propose(*proposer, PipelinePrompts::seeds(), {}, &warnings);
    CHECK(candidate.prompts.creator.objective == PipelinePrompts::seeds().creator.objective);
    CHECK(candidate.prompts.aggregator.objective ==
          PipelinePrompts::seeds().aggregator.objective);
    CHECK(warnings.size() == 2);
    CHECK(proposer->request_count() == 2);  // one retry
}

TEST_CASE("score_minibatch means the per-record composites") {
    optimizer::Candidate candidate;
    candidate.prompts = PipelinePrompts::seeds();

    SUBCASE("all records at the optimum") {
        auto backends = all_yes_backends();
        // all-yes judge: qual=1 (inconsistent), leak=1, pwf=1 -> (1-1+1)/2 = 0.5
        const double mean = optimizer::score_minibatch(candidate, toy_records(3), backends);
        CHECK(mean == doctest::Approx(0.5));
    }
    SUBCASE("best case composite 1.0") {
        optimizer::ScoringBackends backends = all_yes_backends();
        backends.judge = scripted_mock(
            {
                {"Response A: F", false, scripted("yes")},   // candidate at slot A
                {"Response A: target", false, scripted("no")},
                {"Information Piece:", false, scripted("no")},
                {"Prompt Input:", false, scripted("yes")},
            });
        const double mean = optimizer::score_minibatch(candidate, toy_records(4), backends);
        CHECK(mean == doctest::Approx(1.0));
    }
    SUBCASE("a failing record scores the objective minimum") {
        optimizer::ScoringBackends backends = all_yes_backends();
        ScriptedResponse boom;
        boom.fail = true;
        backends.remote = scripted_mock({}, boom, BackendRole::untrusted_remote);
        const double mean = optimizer::score_minibatch(candidate, toy_records(1), backends);
        CHECK(mean == doctest::Approx(-0.5));
    }
    SUBCASE("mixed batch averages 1.0 and -0.5 to 0.25") {
        optimizer::ScoringBackends backends = all_yes_backends();
        ScriptedResponse boom;
        boom.fail = true;
        // remote fails only for the query of record r1
        backends.remote = scripted_mock({{"__fail__", false, boom}},
                                        scripted("R"), BackendRole::untrusted_remote);
        backends.judge = scripted_mock(
            {
                {"Response A: F", false, scripted("yes")},
                {"Response A: target", false, scripted("no")},
                {"Information Piece:", false, scripted("no")},
                {"Prompt Input:", false, scripted("yes")},
            });
        // creator forwards the marker for one record via fallback text
        backends.local = std::make_shared<testsupport::FnBackend>(
            [](const ChatRequest& request, int) {
                ChatResponse response;
                const std::string& user = request.messages.back().content;
                if (user.find("modelExampleResponses") != std::string::npos) {
                    response.content = triple_completion({{"finalOutput", "F"}});
                } else if (user.find("query 1") != std::string::npos) {
                    response.content = triple_completion({{"createdPrompt", "__fail__"}});
                } else {
                    response.content = triple_completion({{"createdPrompt", "P"}});
                }
                return response;
            },
            BackendRole::trusted_local);
        const double mean = optimizer::score_minibatch(candidate, toy_records(2), backends);
        CHECK(mean == doctest::Approx((1.0 + -0.5) / 2.0));
    }
}

TEST_CASE("optimize with zero trials returns the seeds unchanged") {
    optimizer::OptimizerConfig config;
    config.trials = 0;
    config.minibatch_size = 2;
    config.train = toy_records(4);
    auto backends = all_yes_backends();
    auto proposer = counting_proposer();

    const optimizer::OptimizeResult result =
        optimizer::optimize(config, backends, *proposer, PipelinePrompts::seeds());
    CHECK(prompts_to_json(result.best) == prompts_to_json(PipelinePrompts::seeds()));
    CHECK(result.log.empty());
    CHECK(proposer->call_count() == 0);
}

TEST_CASE("optimize is deterministic and its running best never decreases") {
    const auto run_once = [](const std::filesystem::path& log_path) {
        optimizer::OptimizerConfig config;
        config.trials = 12;
        config.minibatch_size = 3;
        config.train = toy_records(9);
        config.val = toy_records(4, "v");
        config.seed = 7;
        config.promote_top_k = 3;

        optimizer::ScoringBackends backends;
        backends.local = compliant_local();
        backends.remote = scripted_mock({}, scripted("R"), BackendRole::untrusted_remote);
        // judge keyed on the creator instruction version: even versions leak
        // nothing (higher composite), odd versions leak everything.
        backends.judge = std::make_shared<testsupport::FnBackend>(
            [](const ChatRequest& request, int) {
                const std::string text = concatenated_messages(request);
                ChatResponse response;
                response.content = "yes";
                if (text.find("Information Piece:") != std::string::npos) {
                    // leak probes answer no only for prompts created under
                    // even-numbered instructions; P is constant here so key on
                    // nothing -> answer no (low leak) always
                    response.content = "no";
                }
                return response;
            });
        auto proposer = counting_proposer();

        optimizer::OptimizeSinks sinks;
        sinks.trial_log = log_path;
        const optimizer::OptimizeResult result = optimizer::optimize(
            config, backends, *proposer, PipelinePrompts::seeds(), sinks);
        return result;
    };

    testsupport::TempDir dir;
    const optimizer::OptimizeResult a = run_once(dir.path() / "log-a.jsonl");
    const optimizer::OptimizeResult b = run_once(dir.path() / "log-b.jsonl");

    CHECK(util::read_file(dir.path() / "log-a.jsonl") ==
          util::read_file(dir.path() / "log-b.jsonl"));
    CHECK(prompts_to_json(a.best) == prompts_to_json(b.best));

    REQUIRE(a.log.size() == 13);  // seed + 12 proposals
    double best = a.log.front().best_so_far;
    for (const auto& entry : a.log) {
        CHECK(entry.best_so_far >= best);
        best = entry.best_so_far;
        if (entry.full_score) {
            CHECK(entry.promoted);
        }
    }
    CHECK(a.log[0].trial == 0);
    CHECK(a.log[0].promoted);  // the seed always gets a full evaluation
    REQUIRE(a.log[0].full_score.has_value());
    CHECK(a.best_full_score >= *a.log[0].full_score);
}

TEST_CASE("optimize improves when a later candidate scores higher") {
    optimizer::OptimizerConfig config;
    config.trials = 4;
    config.minibatch_size = 2;
    config.train = toy_records(4);
    config.seed = 1;
    config.promote_top_k = 2;

    optimizer::ScoringBackends backends;
    backends.local = std::make_shared<testsupport::FnBackend>(
        [](const ChatRequest& request, int) {
            ChatResponse response;
            const std::string& user = request.messages.back().content;
            if (user.find("modelExampleResponses") != std::string::npos) {
                response.content = triple_completion({{"finalOutput", "F"}});
            } else {
                // surface the instruction version inside the created prompt
                const std::string& system = request.messages.front().content;
                const std::string tag = system.find("creator v2") != std::string::npos
                                            ? "PROMPT-GOOD"
                                            : "PROMPT-PLAIN";
                response.content = triple_completion({{"createdPrompt", tag}});
            }
            return response;
        },
        BackendRole::trusted_local);
    backends.remote = scripted_mock({}, scripted("R"), BackendRole::untrusted_remote);
    backends.judge = scripted_mock(
        {
            // leakage: only the plain prompt leaks
            {"Prompt: PROMPT-GOOD", false, scripted("no")},
            {"Prompt: PROMPT-PLAIN", false, scripted("yes")},
            // well-formedness and quality: always yes
        },
        scripted("yes"));
    auto proposer = counting_proposer();

    const optimizer::OptimizeResult result =
        optimizer::optimize(config, backends, *proposer, PipelinePrompts::seeds());
    // candidate with "creator v2" reaches composite (1 - 0 + 1)/2 = 1.0
    CHECK(result.best.creator.objective == "creator v2");
    CHECK(result.best_full_score == doctest::Approx(1.0));
    // seed scores (1 - 1 + 1)/2 = 0.5; the returned best is never below it
    CHECK(result.best_full_score >= *result.log[0].full_score);
}

TEST_CASE("budget exhaustion persists the best-so-far checkpoint") {
    optimizer::OptimizerConfig config;
    config.trials = 50;
    config.minibatch_size = 2;
    config.train = toy_records(2);
    config.seed = 3;

    optimizer::ScoringBackends backends = all_yes_backends();
    // enough budget for the seed trial plus a little, then exhaustion
    backends.judge = std::make_shared<ScriptedBackend>(
        BackendRole::judge, "judge", std::vector<ScriptedRule>{}, scripted("yes"),
        Pricing{}, Budget{30, 0});
    auto proposer = counting_proposer();

    testsupport::TempDir dir;
    optimizer::OptimizeSinks sinks;
    sinks.trial_log = dir.path() / "trials.jsonl";
    sinks.checkpoint = dir.path() / "best.json";

    CHECK_THROWS_AS(optimizer::optimize(config, backends, *proposer,
                                        PipelinePrompts::seeds(), sinks),
                    BudgetExceeded);
    REQUIRE(std::filesystem::exists(sinks.checkpoint));
    const PipelinePrompts persisted = prompts_from_json(util::read_file(sinks.checkpoint));
    CHECK(template_digest(persisted.creator) ==
          template_digest(PipelinePrompts::seeds().creator));
}

TEST_CASE("config validation") {
    optimizer::OptimizerConfig config;
    config.trials = -1;
    config.train = toy_records(4);
    CHECK_THROWS_AS(config.validate(), ConfigError);
    config.trials = 1;
    config.minibatch_size = 5;  // > |train|
    CHECK_THROWS_AS(config.validate(), ConfigError);
    config.minibatch_size = 2;
    config.val = toy_records(2);  // same ids as train -> overlap
    CHECK_THROWS_AS(config.validate(), ConfigError);
    config.val = toy_records(2, "v");
    CHECK_NOTHROW(config.validate());
}

TEST_SUITE_END();
