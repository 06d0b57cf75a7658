#include "papillon/judge.hpp"

#include <cctype>

#include "papillon/errors.hpp"
#include "papillon/prompts.hpp"
#include "papillon/structio.hpp"
#include "papillon/util.hpp"

namespace papillon::judge {

bool parse_verdict(std::string_view raw) {
    std::string_view text = raw;
    if (const auto pos = text.rfind("Output:"); pos != std::string_view::npos) {
        text.remove_prefix(pos + 7);
    }
    std::size_t i = 0;
    while (i < text.size()) {
        const auto c = static_cast<unsigned char>(text[i]);
        if (std::isspace(c) || std::ispunct(c)) {
            ++i;
        } else {
            break;
        }
    }
    text.remove_prefix(i);
    return util::starts_with(util::lower_ascii(text.substr(0, 3)), "yes");
}

Verdict make_verdict(std::string raw) {
    Verdict v;
    v.value = parse_verdict(raw);
    v.raw = std::move(raw);
    return v;
}

Verdict judge_quality_once(Backend& judge_backend,
                           const std::string& query,
                           const std::string& response_a,
                           const std::string& response_b) {
    const ChatRequest request = render(prompts::quality_judge_template(),
                                       {{"User Query", query},
                                        {"Response A", response_a},
                                        {"Response B", response_b}});
    return make_verdict(chat(judge_backend, request).content);
}

int qual(Backend& judge_backend,
         const std::string& query,
         const std::string& candidate,
         const std::string& target) {
    const bool s1 = judge_quality_once(judge_backend, query, candidate, target).value;
    const bool s2 = judge_quality_once(judge_backend, query, target, candidate).value;
    if (s1 == s2) {
        return 1;  // inconsistent judgment: candidates count as equivalent
    }
    return s1 ? 1 : 0;
}

double leak(Backend& judge_backend,
            const std::string& created_prompt,
            const std::vector<std::string>& pii_units) {
    if (pii_units.empty()) {
        return 0.0;
    }
    const PromptTemplate tmpl = prompts::leakage_judge_template();
    int present = 0;
    for (const auto& unit : pii_units) {
        const ChatRequest request =
            render(tmpl, {{"Information Piece", unit}, {"Prompt", created_prompt}});
        if (make_verdict(chat(judge_backend, request).content).value) {
            ++present;
        }
    }
    return static_cast<double>(present) / static_cast<double>(pii_units.size());
}

int pwf(Backend& judge_backend, const std::string& created_prompt) {
    const ChatRequest request =
        render(prompts::well_formedness_judge_template(), {{"Prompt Input", created_prompt}});
    return make_verdict(chat(judge_backend, request).content).value ? 1 : 0;
}

double composite(int qual_score, double leak_score, int pwf_score) {
    if (qual_score != 0 && qual_score != 1) {
        throw RangeError("qual must be 0 or 1");
    }
    if (leak_score < 0.0 || leak_score > 1.0) {
        throw RangeError("leak must lie in [0, 1]");
    }
    if (pwf_score != 0 && pwf_score != 1) {
        throw RangeError("pwf must be 0 or 1");
    }
    return (static_cast<double>(qual_score) - leak_score + static_cast<double>(pwf_score)) / 2.0;
}

ScoreReport score(Backend& judge_backend,
                  const std::string& query,
                  const std::string& candidate,
                  const std::string& target,
                  const std::string& created_prompt,
                  const std::vector<std::string>& pii_units) {
    ScoreReport report;
    report.qual = qual(judge_backend, query, candidate, target);
    report.leak = leak(judge_backend, created_prompt, pii_units);
    report.pwf = pwf(judge_backend, created_prompt);
    report.composite = composite(report.qual, report.leak, report.pwf);
    report.judge_calls = 2 + static_cast<int>(pii_units.size()) + 1;
    return report;
}

}  // namespace papillon::judge
