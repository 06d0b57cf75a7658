#pragma once

#include <string>
#include <vector>

#include "papillon/chatio.hpp"

namespace papillon::piiex {

inline const std::string kDefaultMarker = "[REDACTED]";

struct RedactionResult {
    std::string original;
    std::string redacted;
    std::string marker = kDefaultMarker;

    std::size_t marker_count() const;
};

struct PiiUnit {
    std::string value;

    friend bool operator==(const PiiUnit&, const PiiUnit&) = default;
};

/// One model call with the redaction prompt; the completion is the redacted
/// text. The input text is returned unchanged in `original`.
RedactionResult redact(Backend& model_backend,
                       const std::string& text,
                       const std::string& marker = kDefaultMarker);

/// Recovers the redacted spans by aligning the literal segments around the
/// markers against the original, left to right. The first segment must anchor
/// at the start and the last at the end. Throws AlignmentFailure when a
/// segment cannot be located in order or when two markers are adjacent (the
/// split is ambiguous).
std::vector<std::string> extract_spans(const std::string& original,
                                       const std::string& redacted,
                                       const std::string& marker = kDefaultMarker);

/// Fallback when alignment fails: asks the model for the redacted segments,
/// one per line. Blank lines are dropped, values trimmed.
std::vector<std::string> extract_spans_llm(Backend& model_backend,
                                           const std::string& original,
                                           const std::string& redacted);

/// Keeps the first occurrence of each value; equality is after trimming and
/// ASCII case-folding. Empty values are dropped.
std::vector<PiiUnit> dedup(const std::vector<std::string>& units);

struct Extraction {
    std::vector<PiiUnit> units;
    RedactionResult redaction;
    bool llm_fallback_used = false;
};

/// redact -> extract_spans -> (on AlignmentFailure) extract_spans_llm -> dedup.
Extraction extract_pii(Backend& model_backend,
                       const std::string& text,
                       const std::string& marker = kDefaultMarker);

}  // namespace papillon::piiex
