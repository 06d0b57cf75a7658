#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "papillon/chatio.hpp"

namespace papillon::judge {

/// A free-text judge answer and the boolean it reduces to. `value` is always
/// derived from `raw` by parse_verdict, never set independently.
struct Verdict {
    std::string raw;
    bool value = false;
};

Verdict make_verdict(std::string raw);

/// True iff the answer starts with "yes" after trimming whitespace and leading
/// punctuation and lowercasing. When the completion carries a reasoning
/// section, the rule applies to the text after the final "Output:" label.
/// Unparseable text is false.
bool parse_verdict(std::string_view raw);

/// One pairwise quality call: is A at least as good as B for this query?
Verdict judge_quality_once(Backend& judge_backend,
                           const std::string& query,
                           const std::string& response_a,
                           const std::string& response_b);

/// Two-permutation quality score. Judges (candidate, target) and then the
/// reversed order; identical answers mean the judgment is inconsistent and the
/// candidates count as equivalent (score 1), otherwise the first answer wins.
/// Exactly two judge calls.
int qual(Backend& judge_backend,
         const std::string& query,
         const std::string& candidate,
         const std::string& target);

/// Fraction of the given information units the judge finds present in the
/// created prompt. One judge call per unit; 0.0 when the unit list is empty
/// (nothing can leak).
double leak(Backend& judge_backend,
            const std::string& created_prompt,
            const std::vector<std::string>& pii_units);

/// 1 iff the judge deems the text a valid standalone model prompt.
int pwf(Backend& judge_backend, const std::string& created_prompt);

/// (qual - leak + pwf) / 2, in [-0.5, 1]. Throws RangeError on out-of-range
/// input.
double composite(int qual_score, double leak_score, int pwf_score);

struct ScoreReport {
    int qual = 0;
    double leak = 0.0;
    int pwf = 0;
    double composite = 0.0;
    int judge_calls = 0;
};

/// All three metrics plus the composite for one record: 2 + n + 1 judge calls.
ScoreReport score(Backend& judge_backend,
                  const std::string& query,
                  const std::string& candidate,
                  const std::string& target,
                  const std::string& created_prompt,
                  const std::vector<std::string>& pii_units);

}  // namespace papillon::judge
