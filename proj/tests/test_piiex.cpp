#include <doctest.h>

#include <random>

#include "papillon/errors.hpp"
#include "papillon/piiex.hpp"
#include "papillon/prompts.hpp"
#include "support/helpers.hpp"

using namespace papillon;
using testsupport::scripted;

TEST_SUITE_BEGIN("piiex");

namespace {

// Brute-force alignment oracle: enumerates every way to locate the segments in
// order and returns all distinct span vectors that reproduce the redacted
// text. Independent of the production greedy algorithm.
void enumerate_alignments(const std::string& original,
                          const std::vector<std::string>& segments,
                          std::size_t segment_index,
                          std::size_t from,
                          std::vector<std::string>& spans,
                          std::vector<std::vector<std::string>>& results) {
    if (segment_index == segments.size()) {
        return;
    }
    const std::string& segment = segments[segment_index];
    const bool last = segment_index + 1 == segments.size();
    if (last) {
        if (segment.empty()) {
            std::vector<std::string> done = spans;
            done.push_back(original.substr(from));
            results.push_back(std::move(done));
            return;
        }
        // the last segment must consume the rest of the original
        if (original.size() >= from + segment.size() &&
            original.compare(original.size() - segment.size(), segment.size(), segment) == 0 &&
            original.size() - segment.size() >= from) {
            std::vector<std::string> done = spans;
            done.push_back(original.substr(from, original.size() - segment.size() - from));
            results.push_back(std::move(done));
        }
        return;
    }
    if (segment_index == 0) {
        if (original.compare(0, segment.size(), segment) != 0) return;
        enumerate_alignments(original, segments, 1, segment.size(), spans, results);
        return;
    }
    std::size_t pos = from;
    while ((pos = original.find(segment, pos)) != std::string::npos) {
        spans.push_back(original.substr(from, pos - from));
        enumerate_alignments(original, segments, segment_index + 1, pos + segment.size(), spans,
                             results);
        spans.pop_back();
        ++pos;
    }
}

std::vector<std::vector<std::string>> oracle_alignments(const std::string& original,
                                                        const std::string& redacted,
                                                        const std::string& marker) {
    std::vector<std::string> segments;
    std::size_t start = 0;
    while (true) {
        const std::size_t pos = redacted.find(marker, start);
        if (pos == std::string::npos) {
            segments.push_back(redacted.substr(start));
            break;
        }
        segments.push_back(redacted.substr(start, pos - start));
        start = pos + marker.size();
    }
    std::vector<std::vector<std::string>> results;
    std::vector<std::string> spans;
    enumerate_alignments(original, segments, 0, 0, spans, results);
    return results;
}

}  // namespace

TEST_CASE("extract_spans recovers the worked example") {
    const std::string original = "Hi Jacob (PM), Since Hanisha is going on maternity";
    const std::string redacted = "Hi [REDACTED] (PM), Since [REDACTED] is going on maternity";
    const std::vector<std::string> spans = piiex::extract_spans(original, redacted);
    REQUIRE(spans.size() == 2);
    CHECK(spans[0] == "Jacob");
    CHECK(spans[1] == "Hanisha");
}

TEST_CASE("no marker means no spans") {
    const std::string text = "nothing personal here";
    CHECK(piiex::extract_spans(text, text).empty());
}

TEST_CASE("marker at the start of the text") {
    const std::vector<std::string> spans =
        piiex::extract_spans("Alice wrote this", "[REDACTED] wrote this");
    REQUIRE(spans.size() == 1);
    CHECK(spans[0] == "Alice");
    // the brute-force oracle agrees and finds exactly one alignment
    const auto all = oracle_alignments("Alice wrote this", "[REDACTED] wrote this", "[REDACTED]");
    REQUIRE(all.size() == 1);
    CHECK(all[0] == spans);
}

TEST_CASE("marker at the end of the text") {
    const std::vector<std::string> spans =
        piiex::extract_spans("Send it to Bob", "Send it to [REDACTED]");
    REQUIRE(spans.size() == 1);
    CHECK(spans[0] == "Bob");
}

TEST_CASE("span count equals marker count on success") {
    const std::string original = "a A b B c C d";
    const std::string redacted = "a [REDACTED] b [REDACTED] c [REDACTED] d";
    CHECK(piiex::extract_spans(original, redacted).size() == 3);
}

TEST_CASE("greedy alignment agrees with the brute-force oracle") {
    const std::vector<std::pair<std::string, std::string>> cases = {
        {"Alice wrote this", "[REDACTED] wrote this"},
        {"meet Omar at HSBC tomorrow", "meet [REDACTED] at [REDACTED] tomorrow"},
        {"Dear Priya, your visa for Canada is ready",
         "Dear [REDACTED], your visa for [REDACTED] is ready"},
    };
    for (const auto& [original, redacted] : cases) {
        CAPTURE(original);
        const auto all = oracle_alignments(original, redacted, "[REDACTED]");
        REQUIRE(all.size() == 1);  // unambiguous instance
        CHECK(piiex::extract_spans(original, redacted) == all[0]);
    }
}

TEST_CASE("misaligned segments raise AlignmentFailure") {
    CHECK_THROWS_AS(piiex::extract_spans("the original words",
                                         "totally [REDACTED] rewritten"),
                    AlignmentFailure);
    // rewritten prefix
    CHECK_THROWS_AS(piiex::extract_spans("Hello Jacob", "Hi [REDACTED]"), AlignmentFailure);
    // rewritten suffix
    CHECK_THROWS_AS(piiex::extract_spans("Hi Jacob here", "Hi [REDACTED] there"),
                    AlignmentFailure);
}

TEST_CASE("adjacent markers are ambiguous and refused") {
    CHECK_THROWS_AS(
        piiex::extract_spans("Jane Smith wrote", "[REDACTED][REDACTED] wrote"),
        AlignmentFailure);
}

TEST_CASE("round trip: replace spans with markers, extract them back") {
    // Spans and surrounding text use disjoint alphabets, which keeps every
    // generated instance unambiguous (the informal argument: a separator
    // segment can never match inside a span, so the leftmost locations are the
    // true ones).
    std::mt19937_64 rng(2024);
    const std::string span_alphabet = "ABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789";
    const std::string text_alphabet = "abcdefghijklmnopqrstuvwxyz ,.";
    for (int round = 0; round < 300; ++round) {
        const std::size_t n_spans = 1 + rng() % 5;
        std::vector<std::string> spans;
        std::string original;
        std::string redacted;
        // optional prefix
        if (rng() % 4 != 0) {
            const std::string prefix = testsupport::random_text(rng, 1, 12, text_alphabet);
            original += prefix;
            redacted += prefix;
        }
        for (std::size_t i = 0; i < n_spans; ++i) {
            const std::string span = testsupport::random_text(rng, 1, 8, span_alphabet);
            spans.push_back(span);
            original += span;
            redacted += "[REDACTED]";
            if (i + 1 < n_spans || rng() % 4 != 0) {
                const std::string separator = testsupport::random_text(rng, 1, 10, text_alphabet);
                original += separator;
                redacted += separator;
            }
        }
        CAPTURE(original);
        CAPTURE(redacted);
        const std::vector<std::string> got = piiex::extract_spans(original, redacted);
        CHECK(got == spans);
    }
}

TEST_CASE("redact sends the redaction prompt verbatim and returns the completion") {
    const std::string input = "Hi Jacob (PM), Since Hanisha is going on maternity";
    const std::string scripted_redaction =
        "Hi [REDACTED] (PM), Since [REDACTED] is going on maternity";
    auto mock = scripted_mock({}, scripted(scripted_redaction));
    const piiex::RedactionResult result = piiex::redact(*mock, input);
    CHECK(result.original == input);
    CHECK(result.redacted == scripted_redaction);
    CHECK(result.marker_count() == 2);

    const auto transcript = mock->transcript();
    REQUIRE(transcript.size() == 1);
    CHECK(transcript[0].messages.back().content == prompts::redaction_prompt(input));
    CHECK(transcript[0].messages.back().content.find(
              "Replace all removed PII with '[REDACTED]'.") != std::string::npos);
}

TEST_CASE("redact passthrough when the model returns the input unchanged") {
    auto mock = testsupport::FnBackend([](const ChatRequest& request, int) {
        // echo the text after the prompt preamble
        const std::string& content = request.messages.back().content;
        const std::string needle = "Please repeat this process with the following text:\n";
        ChatResponse response;
        response.content = content.substr(content.find(needle) + needle.size());
        return response;
    });
    const piiex::RedactionResult result = piiex::redact(mock, "no names at all");
    CHECK(result.redacted == "no names at all");
    CHECK(result.marker_count() == 0);
    CHECK(piiex::extract_spans(result.original, result.redacted).empty());
}

TEST_CASE("redaction model failure surfaces with no partial result") {
    ScriptedResponse boom;
    boom.fail = true;
    auto mock = scripted_mock({}, boom);
    CHECK_THROWS_AS(piiex::redact(*mock, "text"), TransportError);
}

TEST_CASE("extract_spans_llm splits lines, trims, drops blanks") {
    SUBCASE("two names") {
        auto mock = scripted_mock({}, scripted("Jacob\nHanisha"));
        CHECK(piiex::extract_spans_llm(*mock, "o", "r") ==
              std::vector<std::string>{"Jacob", "Hanisha"});
        const auto transcript = mock->transcript();
        CHECK(transcript[0].messages.back().content ==
              prompts::span_extraction_prompt("o", "r"));
    }
    SUBCASE("empty completion") {
        auto mock = scripted_mock({}, scripted(""));
        CHECK(piiex::extract_spans_llm(*mock, "o", "r").empty());
    }
    SUBCASE("surrounding spaces and blank lines") {
        auto mock = scripted_mock({}, scripted("  Jacob  \n\n  Hanisha\n"));
        CHECK(piiex::extract_spans_llm(*mock, "o", "r") ==
              std::vector<std::string>{"Jacob", "Hanisha"});
    }
}

TEST_CASE("dedup folds case, trims, keeps first occurrences") {
    const auto units = piiex::dedup({"Alice", "alice", "Bob"});
    REQUIRE(units.size() == 2);
    CHECK(units[0].value == "Alice");
    CHECK(units[1].value == "Bob");

    CHECK(piiex::dedup({}).empty());

    const auto exact = piiex::dedup({"X", "Y", "X"});
    REQUIRE(exact.size() == 2);
    CHECK(exact[0].value == "X");
    CHECK(exact[1].value == "Y");

    const auto trimmed = piiex::dedup({"  Omar ", "Omar", "", "   "});
    REQUIRE(trimmed.size() == 1);
    CHECK(trimmed[0].value == "Omar");
}

TEST_CASE("dedup is idempotent") {
    std::mt19937_64 rng(3);
    const std::string alphabet = "abcABC";
    for (int round = 0; round < 50; ++round) {
        std::vector<std::string> units;
        const std::size_t n = rng() % 8;
        for (std::size_t i = 0; i < n; ++i) {
            units.push_back(testsupport::random_text(rng, 1, 3, alphabet));
        }
        const auto once = piiex::dedup(units);
        std::vector<std::string> values;
        for (const auto& u : once) values.push_back(u.value);
        const auto twice = piiex::dedup(values);
        CHECK(once == twice);
    }
}

TEST_CASE("extract_pii composes the stages") {
    SUBCASE("echoing redactor yields no units") {
        auto mock = testsupport::FnBackend([](const ChatRequest& request, int) {
            const std::string& content = request.messages.back().content;
            const std::string needle = "Please repeat this process with the following text:\n";
            ChatResponse response;
            response.content = content.substr(content.find(needle) + needle.size());
            return response;
        });
        const piiex::Extraction extraction = piiex::extract_pii(mock, "hello world");
        CHECK(extraction.units.empty());
        CHECK_FALSE(extraction.llm_fallback_used);
    }
    SUBCASE("well-aligned markers over two names") {
        auto mock = scripted_mock(
            {{"Please edit the provided text", false,
              scripted("Hi [REDACTED], meet [REDACTED] tomorrow")}});
        const piiex::Extraction extraction =
            piiex::extract_pii(*mock, "Hi Jacob, meet Hanisha tomorrow");
        REQUIRE(extraction.units.size() == 2);
        CHECK(extraction.units[0].value == "Jacob");
        CHECK(extraction.units[1].value == "Hanisha");
        CHECK_FALSE(extraction.llm_fallback_used);
        CHECK(extraction.redaction.redacted == "Hi [REDACTED], meet [REDACTED] tomorrow");
    }
    SUBCASE("misaligned redaction falls back to the model") {
        auto mock = scripted_mock({
            {"Please edit the provided text", false,
             scripted("Hello [REDACTED] how are you")},  // rewrote 'Hi' to 'Hello'
            {"what are the contents of", false, scripted("Jacob")},
        });
        const piiex::Extraction extraction = piiex::extract_pii(*mock, "Hi Jacob how are you");
        CHECK(extraction.llm_fallback_used);
        REQUIRE(extraction.units.size() == 1);
        CHECK(extraction.units[0].value == "Jacob");
        CHECK(mock->request_count() == 2);
    }
    SUBCASE("duplicate spans are de-duplicated") {
        auto mock = scripted_mock(
            {{"Please edit the provided text", false,
              scripted("[REDACTED] (PM) and [REDACTED] and [REDACTED] again")}});
        const piiex::Extraction extraction =
            piiex::extract_pii(*mock, "Hanisha (PM) and Jacob and hanisha again");
        REQUIRE(extraction.units.size() == 2);
        CHECK(extraction.units[0].value == "Hanisha");
        CHECK(extraction.units[1].value == "Jacob");
    }
}

TEST_CASE("extract_pii never returns an empty unit") {
    // marker replacing an empty span is degenerate but must not surface
    auto mock = scripted_mock(
        {{"Please edit the provided text", false, scripted("a[REDACTED]b")}});
    const piiex::Extraction extraction = piiex::extract_pii(*mock, "ab");
    CHECK(extraction.units.empty());
}

TEST_SUITE_END();
