#include "papillon/optimizer.hpp"

#include <algorithm>
#include <fstream>
#include <iostream>
#include <random>
#include <set>

#include <json.hpp>

#include "papillon/errors.hpp"
#include "papillon/judge.hpp"
#include "papillon/util.hpp"

namespace papillon::optimizer {

using nlohmann::json;

void OptimizerConfig::validate() const {
    if (trials < 0) {
        throw ConfigError("trials must be >= 0");
    }
    if (train.empty()) {
        throw ConfigError("training set is empty");
    }
    if (minibatch_size == 0 || minibatch_size > train.size()) {
        throw ConfigError("minibatch_size must lie in [1, |train|]");
    }
    if (promote_top_k == 0) {
        throw ConfigError("promote_top_k must be >= 1");
    }
    std::set<std::string> train_ids;
    for (const auto& r : train) train_ids.insert(r.id);
    for (const auto& r : val) {
        if (train_ids.count(r.id)) {
            throw ConfigError("train and val overlap on record id " + r.id);
        }
    }
}

namespace {

PromptTemplate proposer_template() {
    PromptTemplate tmpl;
    tmpl.marker_style = MarkerStyle::triple_bracket;
    tmpl.objective =
        "You improve the instructions of a two-stage assistant. The first stage rewrites a "
        "private user request into a privacy-preserving prompt for a stronger remote model; the "
        "second stage combines the remote model's answer with the original request into the "
        "final response. Study the current instructions and the scored earlier attempts, then "
        "propose one improved instruction for each stage. Each instruction must be "
        "self-contained plain text without examples.";
    tmpl.fields = {
        {"currentCreatorInstruction", "", FieldDirection::input},
        {"currentAggregatorInstruction", "", FieldDirection::input},
        {"attemptHistory", "Earlier proposals with their scores, best first.",
         FieldDirection::input},
        {"newCreatorInstruction", "", FieldDirection::output},
        {"newAggregatorInstruction", "", FieldDirection::output},
    };
    return tmpl;
}

std::string format_history(const std::vector<Candidate>& history) {
    // Up to the 10 best prior candidates by mini-batch mean, best first.
    std::vector<const Candidate*> ranked;
    for (const auto& c : history) {
        if (!c.minibatch_scores.empty()) ranked.push_back(&c);
    }
    std::sort(ranked.begin(), ranked.end(), [](const Candidate* a, const Candidate* b) {
        if (a->minibatch_scores.back() != b->minibatch_scores.back()) {
            return a->minibatch_scores.back() > b->minibatch_scores.back();
        }
        return a->trial_index < b->trial_index;
    });
    if (ranked.size() > 10) ranked.resize(10);
    if (ranked.empty()) {
        return "(none yet)";
    }
    std::string out;
    for (const auto* c : ranked) {
        char score[32];
        std::snprintf(score, sizeof(score), "%.4f", c->minibatch_scores.back());
        if (!out.empty()) out += "\n\n";
        out += "Attempt " + std::to_string(c->trial_index) + " (score " + score + "):\n";
        out += "Creator instruction: " + c->prompts.creator.objective + "\n";
        out += "Aggregator instruction: " + c->prompts.aggregator.objective;
    }
    return out;
}

struct Proposal {
    std::string creator;
    std::string aggregator;
};

Proposal ask_proposer(Backend& proposer_backend,
                      const PromptTemplate& tmpl,
                      const PipelinePrompts& seed_prompts,
                      const std::string& history_text) {
    const ChatRequest request =
        render(tmpl, {{"currentCreatorInstruction", seed_prompts.creator.objective},
                      {"currentAggregatorInstruction", seed_prompts.aggregator.objective},
                      {"attemptHistory", history_text}});
    const ChatResponse response = chat(proposer_backend, request);
    Proposal proposal;
    try {
        const ParsedOutput parsed = parse(tmpl, response.content);
        if (const auto it = parsed.values.find("newCreatorInstruction");
            it != parsed.values.end()) {
            proposal.creator = util::trim(it->second);
        }
        if (const auto it = parsed.values.find("newAggregatorInstruction");
            it != parsed.values.end()) {
            proposal.aggregator = util::trim(it->second);
        }
    } catch (const ParseFailure&) {
    }
    return proposal;
}

/// Deterministic bounded draw, independent of standard-library distribution
/// internals so trial logs replay identically everywhere.
std::size_t bounded_uniform(std::mt19937_64& rng, std::size_t bound) {
    const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                                std::numeric_limits<std::uint64_t>::max() % bound;
    std::uint64_t draw;
    do {
        draw = rng();
    } while (draw >= limit);
    return static_cast<std::size_t>(draw % bound);
}

std::vector<std::size_t> sample_indices(std::mt19937_64& rng, std::size_t n, std::size_t k) {
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    for (std::size_t i = 0; i < k; ++i) {
        const std::size_t j = i + bounded_uniform(rng, n - i);
        std::swap(order[i], order[j]);
    }
    order.resize(k);
    return order;
}

}  // namespace

Candidate propose(Backend& proposer_backend,
                  const PipelinePrompts& seed_prompts,
                  const std::vector<Candidate>& history,
                  std::vector<std::string>* warnings) {
    const PromptTemplate tmpl = proposer_template();
    const std::string history_text = format_history(history);

    Proposal proposal = ask_proposer(proposer_backend, tmpl, seed_prompts, history_text);
    if (proposal.creator.empty() || proposal.aggregator.empty()) {
        const Proposal retry = ask_proposer(proposer_backend, tmpl, seed_prompts, history_text);
        if (proposal.creator.empty()) proposal.creator = retry.creator;
        if (proposal.aggregator.empty()) proposal.aggregator = retry.aggregator;
    }

    Candidate candidate;
    candidate.prompts = seed_prompts;  // field schemas stay fixed
    if (proposal.creator.empty()) {
        if (warnings) warnings->push_back("proposer gave no creator instruction, keeping seed");
    } else {
        candidate.prompts.creator.objective = proposal.creator;
    }
    if (proposal.aggregator.empty()) {
        if (warnings) warnings->push_back("proposer gave no aggregator instruction, keeping seed");
    } else {
        candidate.prompts.aggregator.objective = proposal.aggregator;
    }
    return candidate;
}

double score_minibatch(const Candidate& candidate,
                       const std::vector<pupa::PupaRecord>& batch,
                       const ScoringBackends& backends) {
    if (batch.empty()) {
        throw std::invalid_argument("mini-batch is empty");
    }
    const Pipeline pipeline(backends.local, backends.remote, candidate.prompts);
    double total = 0.0;
    for (const auto& record : batch) {
        try {
            const PipelineTrace trace = pipeline.run(record.id, record.user_query);
            const int q = judge::qual(*backends.judge, record.user_query, trace.final_output,
                                      record.target_response);
            const double l =
                judge::leak(*backends.judge, trace.created_prompt, record.pii_unit_values());
            const int p = judge::pwf(*backends.judge, trace.created_prompt);
            total += judge::composite(q, l, p);
        } catch (const BudgetExceeded&) {
            throw;
        } catch (const Error& e) {
            // Worst case rather than a skip: prompts that crash the pipeline on
            // hard records must not score better for it.
            std::cerr << "[optimizer] record " << record.id << " failed: " << e.what() << "\n";
            total += -0.5;
        }
    }
    return total / static_cast<double>(batch.size());
}

std::string trial_log_entry_to_json(const TrialLogEntry& entry) {
    nlohmann::ordered_json j;
    j["trial"] = entry.trial;
    j["creator_digest"] = entry.creator_digest;
    j["aggregator_digest"] = entry.aggregator_digest;
    j["minibatch_score"] = entry.minibatch_score;
    if (entry.full_score) {
        j["full_score"] = *entry.full_score;
    } else {
        j["full_score"] = nullptr;
    }
    j["promoted"] = entry.promoted;
    j["best_so_far"] = entry.best_so_far;
    j["warnings"] = entry.warnings;
    return j.dump();
}

namespace {

class TrialLogWriter {
public:
    explicit TrialLogWriter(const std::filesystem::path& path) {
        if (path.empty()) return;
        if (path.has_parent_path()) {
            std::error_code ec;
            std::filesystem::create_directories(path.parent_path(), ec);
        }
        out_.open(path, std::ios::trunc | std::ios::binary);
        if (!out_) {
            throw IoError("cannot open trial log: " + path.string());
        }
    }

    void append(const TrialLogEntry& entry) {
        if (!out_.is_open()) return;
        out_ << trial_log_entry_to_json(entry) << "\n";
        out_.flush();
    }

private:
    std::ofstream out_;
};

void write_checkpoint(const OptimizeSinks& sinks, const PipelinePrompts& best) {
    if (sinks.checkpoint.empty()) return;
    util::write_file(sinks.checkpoint, prompts_to_json(best));
}

}  // namespace

OptimizeResult optimize(const OptimizerConfig& config,
                        const ScoringBackends& backends,
                        Backend& proposer_backend,
                        const PipelinePrompts& seed_prompts,
                        const OptimizeSinks& sinks) {
    config.validate();
    seed_prompts.validate();

    OptimizeResult result;
    if (config.trials == 0) {
        result.best = seed_prompts;
        return result;
    }

    std::mt19937_64 rng(config.seed);
    TrialLogWriter log_writer(sinks.trial_log);

    std::vector<Candidate> candidates;
    std::vector<double> minibatch_means;  // across all candidates, for the top-k gate
    int best_trial = -1;
    double best_full = 0.0;

    const auto promote_threshold = [&]() {
        std::vector<double> sorted = minibatch_means;
        std::sort(sorted.begin(), sorted.end(), std::greater<>());
        const std::size_t k = std::min(config.promote_top_k, sorted.size());
        return sorted[k - 1];
    };

    try {
        for (int trial = 0; trial <= config.trials; ++trial) {
            Candidate candidate;
            std::vector<std::string> warnings;
            if (trial == 0) {
                candidate.prompts = seed_prompts;
            } else {
                candidate = propose(proposer_backend, seed_prompts, candidates, &warnings);
            }
            candidate.trial_index = trial;

            const auto batch_indices =
                sample_indices(rng, config.train.size(), config.minibatch_size);
            std::vector<pupa::PupaRecord> batch;
            batch.reserve(batch_indices.size());
            for (const auto i : batch_indices) batch.push_back(config.train[i]);

            const double mean = score_minibatch(candidate, batch, backends);
            candidate.minibatch_scores.push_back(mean);
            minibatch_means.push_back(mean);

            // The seed always gets a full-train evaluation (it is the baseline
            // the search must not regress below); proposals only when they
            // enter the running top-k of mini-batch means.
            const bool promoted = trial == 0 || mean >= promote_threshold();
            if (promoted) {
                candidate.full_score = score_minibatch(candidate, config.train, backends);
                if (best_trial < 0 || *candidate.full_score > best_full) {
                    best_trial = trial;
                    best_full = *candidate.full_score;
                    write_checkpoint(sinks, candidate.prompts);
                }
            }

            TrialLogEntry entry;
            entry.trial = trial;
            entry.creator_digest = template_digest(candidate.prompts.creator);
            entry.aggregator_digest = template_digest(candidate.prompts.aggregator);
            entry.minibatch_score = mean;
            entry.full_score = candidate.full_score;
            entry.promoted = promoted;
            entry.best_so_far = best_full;
            entry.warnings = std::move(warnings);
            log_writer.append(entry);
            result.log.push_back(entry);

            candidates.push_back(std::move(candidate));
        }
    } catch (const BudgetExceeded&) {
        if (best_trial >= 0) {
            write_checkpoint(sinks, candidates[static_cast<std::size_t>(best_trial)].prompts);
        }
        throw;
    }

    const Candidate& best = candidates[static_cast<std::size_t>(best_trial)];
    result.best = best.prompts;
    result.best_full_score = best_full;
    if (!config.val.empty()) {
        result.val_score = score_minibatch(best, config.val, backends);
    }
    write_checkpoint(sinks, result.best);
    return result;
}

}  // namespace papillon::optimizer
