#include "papillon/piiex.hpp"

#include "papillon/errors.hpp"
#include "papillon/prompts.hpp"
#include "papillon/util.hpp"

namespace papillon::piiex {

namespace {

std::vector<std::string> split_on_marker(const std::string& text, const std::string& marker) {
    std::vector<std::string> segments;
    std::size_t start = 0;
    while (true) {
        const std::size_t pos = text.find(marker, start);
        if (pos == std::string::npos) {
            segments.push_back(text.substr(start));
            break;
        }
        segments.push_back(text.substr(start, pos - start));
        start = pos + marker.size();
    }
    return segments;
}

}  // namespace

std::size_t RedactionResult::marker_count() const {
    if (marker.empty()) return 0;
    std::size_t count = 0;
    std::size_t pos = 0;
    while ((pos = redacted.find(marker, pos)) != std::string::npos) {
        ++count;
        pos += marker.size();
    }
    return count;
}

RedactionResult redact(Backend& model_backend, const std::string& text, const std::string& marker) {
    ChatRequest request;
    request.messages.push_back({Role::user, prompts::redaction_prompt(text, marker)});
    const ChatResponse response = chat(model_backend, request);

    RedactionResult result;
    result.original = text;
    result.redacted = response.content;
    result.marker = marker;
    return result;
}

std::vector<std::string> extract_spans(const std::string& original,
                                       const std::string& redacted,
                                       const std::string& marker) {
    const std::vector<std::string> segments = split_on_marker(redacted, marker);
    const std::size_t marker_count = segments.size() - 1;
    if (marker_count == 0) {
        return {};
    }
    // Two back-to-back markers leave an empty inner segment; there is no
    // deterministic way to split the covered text between them.
    for (std::size_t i = 1; i + 1 < segments.size(); ++i) {
        if (segments[i].empty()) {
            throw AlignmentFailure("adjacent markers make the span split ambiguous");
        }
    }

    if (!util::starts_with(original, segments.front())) {
        throw AlignmentFailure("leading segment does not match the original text");
    }

    std::vector<std::string> spans;
    spans.reserve(marker_count);
    std::size_t pos = segments.front().size();

    for (std::size_t i = 1; i + 1 < segments.size(); ++i) {
        const std::size_t hit = original.find(segments[i], pos);
        if (hit == std::string::npos) {
            throw AlignmentFailure("segment not found in order: '" + segments[i] + "'");
        }
        spans.push_back(original.substr(pos, hit - pos));
        pos = hit + segments[i].size();
    }

    const std::string& last = segments.back();
    if (last.empty()) {
        spans.push_back(original.substr(pos));
    } else {
        if (original.size() < last.size() || !util::ends_with(original, last) ||
            original.size() - last.size() < pos) {
            throw AlignmentFailure("trailing segment does not match the original text");
        }
        spans.push_back(original.substr(pos, original.size() - last.size() - pos));
    }
    return spans;
}

std::vector<std::string> extract_spans_llm(Backend& model_backend,
                                           const std::string& original,
                                           const std::string& redacted) {
    ChatRequest request;
    request.messages.push_back({Role::user, prompts::span_extraction_prompt(original, redacted)});
    const ChatResponse response = chat(model_backend, request);

    std::vector<std::string> spans;
    for (const auto& line : util::split_lines(response.content)) {
        std::string value = util::trim(line);
        if (!value.empty()) {
            spans.push_back(std::move(value));
        }
    }
    return spans;
}

std::vector<PiiUnit> dedup(const std::vector<std::string>& units) {
    std::vector<PiiUnit> out;
    std::vector<std::string> seen;
    for (const auto& unit : units) {
        const std::string value = util::trim(unit);
        if (value.empty()) continue;
        const std::string key = util::lower_ascii(value);
        bool duplicate = false;
        for (const auto& k : seen) {
            if (k == key) {
                duplicate = true;
                break;
            }
        }
        if (!duplicate) {
            seen.push_back(key);
            out.push_back({value});
        }
    }
    return out;
}

Extraction extract_pii(Backend& model_backend, const std::string& text, const std::string& marker) {
    Extraction result;
    result.redaction = redact(model_backend, text, marker);

    std::vector<std::string> spans;
    try {
        spans = extract_spans(result.redaction.original, result.redaction.redacted, marker);
    } catch (const AlignmentFailure&) {
        spans = extract_spans_llm(model_backend, result.redaction.original,
                                  result.redaction.redacted);
        result.llm_fallback_used = true;
    }
    result.units = dedup(spans);
    return result;
}

}  // namespace papillon::piiex
