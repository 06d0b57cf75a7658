#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "papillon/chatio.hpp"
#include "papillon/pipeline.hpp"
#include "papillon/pupa.hpp"

namespace papillon::optimizer {

struct Candidate {
    PipelinePrompts prompts;
    int trial_index = 0;
    std::vector<double> minibatch_scores;
    std::optional<double> full_score;  // set only when promoted to full-train eval
};

struct OptimizerConfig {
    int trials = 200;
    std::size_t minibatch_size = 25;
    std::vector<pupa::PupaRecord> train;
    std::vector<pupa::PupaRecord> val;
    std::uint64_t seed = 0;
    std::size_t promote_top_k = 5;

    /// Throws ConfigError when sizes or the train/val id overlap are invalid.
    void validate() const;
};

struct ScoringBackends {
    std::shared_ptr<Backend> local;
    std::shared_ptr<Backend> remote;
    std::shared_ptr<Backend> judge;
};

struct TrialLogEntry {
    int trial = 0;
    std::string creator_digest;
    std::string aggregator_digest;
    double minibatch_score = 0.0;
    std::optional<double> full_score;
    bool promoted = false;
    double best_so_far = 0.0;
    std::vector<std::string> warnings;
};

std::string trial_log_entry_to_json(const TrialLogEntry& entry);

struct OptimizeSinks {
    std::filesystem::path trial_log;   // JSONL, appended per trial
    std::filesystem::path checkpoint;  // best prompts, rewritten on improvement
};

struct OptimizeResult {
    PipelinePrompts best;
    std::vector<TrialLogEntry> log;
    double best_full_score = 0.0;
    double val_score = 0.0;
};

/// Asks the proposer model for one rewritten instruction per pipeline stage;
/// field schemas stay fixed. A malformed proposal is retried once, then the
/// seed instruction is kept for that stage with a warning.
Candidate propose(Backend& proposer_backend,
                  const PipelinePrompts& seed_prompts,
                  const std::vector<Candidate>& history,
                  std::vector<std::string>* warnings = nullptr);

/// Mean composite over the batch. A record whose pipeline run fails scores the
/// objective minimum (-0.5); budget exhaustion propagates.
double score_minibatch(const Candidate& candidate,
                       const std::vector<pupa::PupaRecord>& batch,
                       const ScoringBackends& backends);

/// Proposer-driven instruction search: the seed is trial 0 and always a
/// candidate; each trial scores a seeded-random mini-batch; the running top-k
/// by mini-batch mean get full-train evaluations; the best full-train score
/// wins, ties to the earlier trial. On BudgetExceeded the best-so-far is
/// persisted before the error propagates.
OptimizeResult optimize(const OptimizerConfig& config,
                        const ScoringBackends& backends,
                        Backend& proposer_backend,
                        const PipelinePrompts& seed_prompts,
                        const OptimizeSinks& sinks = {});

}  // namespace papillon::optimizer
