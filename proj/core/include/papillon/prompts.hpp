#pragma once

#include <string>
#include <string_view>

#include "papillon/structio.hpp"

namespace papillon::prompts {

/// Bump when any bundled prompt text changes; emitted in trial logs and traces
/// so runs record which prompt generation produced them.
inline constexpr std::string_view resource_version = "1";

// Judge templates (plain-header style, completion cued by the first output
// field's label).
PromptTemplate quality_judge_template();
PromptTemplate leakage_judge_template();
PromptTemplate well_formedness_judge_template();

// Pipeline seed templates (triple-bracket style).
PromptTemplate creator_seed_template();
PromptTemplate aggregator_seed_template();

// Single-message annotation prompts.
std::string redaction_prompt(const std::string& text, const std::string& marker = "[REDACTED]");
std::string span_extraction_prompt(const std::string& original, const std::string& redacted);
std::string context_dependence_prompt(const std::string& query, const std::string& history);

/// Conversation-topic labeling prompt. The taxonomy is a reconstruction; only
/// the first three labels map to dataset categories, everything else is Other.
std::string classification_prompt(const std::string& dialogue);

}  // namespace papillon::prompts
