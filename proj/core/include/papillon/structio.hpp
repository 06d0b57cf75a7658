#pragma once

#include <map>
#include <string>
#include <vector>

#include "papillon/chatio.hpp"

namespace papillon {

enum class FieldDirection { input, output };

struct FieldSpec {
    std::string name;
    std::string description;  // format line shown after "name:"; empty -> "${name}"
    FieldDirection direction = FieldDirection::input;
};

/// TripleBracket: values sit under "[[[ ### name ### ]]]" markers and the
/// completion ends with the marker for `completed`.
/// PlainHeader: "Name: value" header lines, with the prompt ending on the
/// first output field's label as the completion cue.
enum class MarkerStyle { triple_bracket, plain_header };

struct PromptTemplate {
    std::string objective;
    std::vector<FieldSpec> fields;
    MarkerStyle marker_style = MarkerStyle::triple_bracket;

    std::vector<FieldSpec> inputs() const;
    std::vector<FieldSpec> outputs() const;

    /// Throws std::invalid_argument unless there is at least one input and one
    /// output field, names are unique and non-empty, and the objective is
    /// non-empty.
    void validate() const;
};

struct ParsedOutput {
    std::map<std::string, std::string> values;  // keys within the declared output schema
    bool completed = false;
};

/// "[[[ ### name ### ]]]"
std::string field_marker(const std::string& name);

/// Builds the two-message request for a template: the system message carries
/// the field declarations and the objective, the user message the input values
/// in declared order. Throws MissingInput when an input value is absent.
ChatRequest render(const PromptTemplate& tmpl, const std::map<std::string, std::string>& inputs);

/// Recovers output-field values from a completion. Throws ParseFailure when no
/// declared output marker can be found at all.
ParsedOutput parse(const PromptTemplate& tmpl, const std::string& completion);

/// Call-site fallback rule: the parsed value of `primary_field` when present,
/// otherwise the whole completion (small models often ignore the scaffolding;
/// dropping such records would bias scores). Sets `fallback_used` accordingly.
std::string parse_primary_or_fallback(const PromptTemplate& tmpl,
                                      const std::string& completion,
                                      const std::string& primary_field,
                                      bool& fallback_used);

std::string template_to_json(const PromptTemplate& tmpl);
PromptTemplate template_from_json(const std::string& text);

/// Digest of the canonical JSON form; keys prompt caches and trial logs.
std::string template_digest(const PromptTemplate& tmpl);

}  // namespace papillon
