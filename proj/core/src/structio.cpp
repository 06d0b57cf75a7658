#include "papillon/structio.hpp"

#include <algorithm>
#include <set>
#include <stdexcept>

#include <json.hpp>

#include "papillon/errors.hpp"
#include "papillon/util.hpp"

namespace papillon {

using nlohmann::json;

namespace {

constexpr const char* kCompletedMarker = "[[[ ### completed ### ]]]";

std::string format_line(const FieldSpec& f) {
    if (!f.description.empty()) {
        return f.name + ": " + f.description;
    }
    return f.name + ": ${" + f.name + "}";
}

/// "Reasoning: Let's think step by step in order to ${reasoning}" cues the
/// completion as "Reasoning: Let's think step by step in order to".
std::string cue_line(const FieldSpec& f) {
    std::string prefix = f.description;
    if (const auto pos = prefix.find("${"); pos != std::string::npos) {
        prefix.resize(pos);
    }
    while (!prefix.empty() && prefix.back() == ' ') prefix.pop_back();
    if (prefix.empty()) {
        return f.name + ":";
    }
    return f.name + ": " + prefix;
}

ChatRequest make_request(std::string system_text, std::string user_text) {
    ChatRequest request;
    request.messages.push_back({Role::system, std::move(system_text)});
    request.messages.push_back({Role::user, std::move(user_text)});
    return request;
}

std::string render_triple_bracket_system(const PromptTemplate& tmpl) {
    const auto inputs = tmpl.inputs();
    const auto outputs = tmpl.outputs();

    std::string out = "Your input fields are:\n";
    for (std::size_t i = 0; i < inputs.size(); ++i) {
        out += std::to_string(i + 1) + ". `" + inputs[i].name + "` (str)";
        if (!inputs[i].description.empty()) out += ": " + inputs[i].description;
        out += "\n";
    }
    out += "\nYour output fields are:\n";
    for (std::size_t i = 0; i < outputs.size(); ++i) {
        out += std::to_string(i + 1) + ". `" + outputs[i].name + "` (str)";
        if (!outputs[i].description.empty()) out += ": " + outputs[i].description;
        out += "\n";
    }
    out += "\nAll interactions will be structured in the following way, with the appropriate "
           "values filled in.\n";
    for (const auto& f : tmpl.fields) {
        out += "\n" + field_marker(f.name) + "\n{" + f.name + "}\n";
    }
    out += "\n";
    out += kCompletedMarker;
    out += "\n\nIn adhering to this structure, your objective is: \n        " + tmpl.objective +
           "\n";
    out += "\nYou will receive some input fields in each interaction. Respond only with the "
           "corresponding output fields, starting with the field `" +
           outputs.front().name + "`";
    for (std::size_t i = 1; i < outputs.size(); ++i) {
        out += ", then `" + outputs[i].name + "`";
    }
    out += ", and then ending with the marker for `completed`.";
    return out;
}

std::string render_plain_header_system(const PromptTemplate& tmpl) {
    std::string out = tmpl.objective;
    out += "\n\n---\n\nFollow the following format.\n";
    for (const auto& f : tmpl.fields) {
        out += "\n" + format_line(f) + "\n";
    }
    out += "\n---";
    return out;
}

}  // namespace

std::vector<FieldSpec> PromptTemplate::inputs() const {
    std::vector<FieldSpec> out;
    for (const auto& f : fields) {
        if (f.direction == FieldDirection::input) out.push_back(f);
    }
    return out;
}

std::vector<FieldSpec> PromptTemplate::outputs() const {
    std::vector<FieldSpec> out;
    for (const auto& f : fields) {
        if (f.direction == FieldDirection::output) out.push_back(f);
    }
    return out;
}

void PromptTemplate::validate() const {
    if (objective.empty()) {
        throw std::invalid_argument("prompt template objective is empty");
    }
    std::set<std::string> seen;
    bool has_input = false;
    bool has_output = false;
    for (const auto& f : fields) {
        if (f.name.empty()) {
            throw std::invalid_argument("prompt template has a field with an empty name");
        }
        if (!seen.insert(f.name).second) {
            throw std::invalid_argument("duplicate field name: " + f.name);
        }
        if (f.direction == FieldDirection::input) has_input = true;
        if (f.direction == FieldDirection::output) has_output = true;
    }
    if (!has_input || !has_output) {
        throw std::invalid_argument("prompt template needs at least one input and one output field");
    }
}

std::string field_marker(const std::string& name) {
    return "[[[ ### " + name + " ### ]]]";
}

ChatRequest render(const PromptTemplate& tmpl, const std::map<std::string, std::string>& inputs) {
    tmpl.validate();
    const auto input_fields = tmpl.inputs();
    for (const auto& f : input_fields) {
        if (inputs.find(f.name) == inputs.end()) {
            throw MissingInput(f.name);
        }
    }

    if (tmpl.marker_style == MarkerStyle::triple_bracket) {
        std::string user;
        for (std::size_t i = 0; i < input_fields.size(); ++i) {
            if (i > 0) user += "\n\n";
            user += field_marker(input_fields[i].name) + "\n" + inputs.at(input_fields[i].name);
        }
        return make_request(render_triple_bracket_system(tmpl), std::move(user));
    }

    std::string user;
    for (std::size_t i = 0; i < input_fields.size(); ++i) {
        if (i > 0) user += "\n\n";
        user += input_fields[i].name + ": " + inputs.at(input_fields[i].name);
    }
    user += "\n\n" + cue_line(tmpl.outputs().front());
    return make_request(render_plain_header_system(tmpl), std::move(user));
}

namespace {

ParsedOutput parse_triple_bracket(const PromptTemplate& tmpl, const std::string& completion) {
    // Boundaries are the markers of every declared field plus `completed`;
    // a value runs from its own marker to the next boundary.
    struct Hit {
        std::size_t pos;
        std::size_t end;
        const FieldSpec* field;  // nullptr for the completed marker
    };
    std::vector<Hit> hits;
    for (const auto& f : tmpl.fields) {
        const std::string marker = field_marker(f.name);
        std::size_t from = 0;
        while (true) {
            const std::size_t pos = completion.find(marker, from);
            if (pos == std::string::npos) break;
            hits.push_back({pos, pos + marker.size(), &f});
            from = pos + marker.size();
        }
    }
    bool completed = false;
    {
        const std::size_t pos = completion.find(kCompletedMarker);
        if (pos != std::string::npos) {
            completed = true;
            hits.push_back({pos, pos + std::string(kCompletedMarker).size(), nullptr});
        }
    }
    std::sort(hits.begin(), hits.end(), [](const Hit& a, const Hit& b) { return a.pos < b.pos; });

    ParsedOutput out;
    out.completed = completed;
    for (std::size_t i = 0; i < hits.size(); ++i) {
        const Hit& hit = hits[i];
        if (!hit.field || hit.field->direction != FieldDirection::output) continue;
        const std::size_t value_end = (i + 1 < hits.size()) ? hits[i + 1].pos : completion.size();
        out.values[hit.field->name] =
            util::trim(completion.substr(hit.end, value_end - hit.end));
    }
    if (out.values.empty()) {
        throw ParseFailure("no declared output marker found in completion");
    }
    return out;
}

ParsedOutput parse_plain_header(const PromptTemplate& tmpl, const std::string& completion) {
    const auto outputs = tmpl.outputs();

    struct Hit {
        std::size_t pos;
        std::size_t end;
        const FieldSpec* field;
    };
    std::vector<Hit> hits;
    for (const auto& f : outputs) {
        const std::string header = f.name + ":";
        std::size_t from = 0;
        while (true) {
            const std::size_t pos = completion.find(header, from);
            if (pos == std::string::npos) break;
            // header must sit at the start of a line
            if (pos == 0 || completion[pos - 1] == '\n') {
                hits.push_back({pos, pos + header.size(), &f});
            }
            from = pos + header.size();
        }
    }
    std::sort(hits.begin(), hits.end(), [](const Hit& a, const Hit& b) { return a.pos < b.pos; });

    ParsedOutput out;
    // The prompt ends on the first output field's label, so text before any
    // explicit header continues that field.
    const std::size_t lead_end = hits.empty() ? completion.size() : hits.front().pos;
    const std::string lead = util::trim(completion.substr(0, lead_end));
    const bool first_has_header =
        std::any_of(hits.begin(), hits.end(),
                    [&](const Hit& h) { return h.field->name == outputs.front().name; });
    if (!lead.empty() && !first_has_header) {
        out.values[outputs.front().name] = lead;
    }
    for (std::size_t i = 0; i < hits.size(); ++i) {
        const std::size_t value_end = (i + 1 < hits.size()) ? hits[i + 1].pos : completion.size();
        out.values[hits[i].field->name] =
            util::trim(completion.substr(hits[i].end, value_end - hits[i].end));
    }
    // The final output field doubles as the completion signal for this style.
    out.completed = out.values.find(outputs.back().name) != out.values.end();
    if (out.values.empty()) {
        throw ParseFailure("no declared output header found in completion");
    }
    return out;
}

}  // namespace

ParsedOutput parse(const PromptTemplate& tmpl, const std::string& completion) {
    tmpl.validate();
    if (tmpl.marker_style == MarkerStyle::triple_bracket) {
        return parse_triple_bracket(tmpl, completion);
    }
    return parse_plain_header(tmpl, completion);
}

std::string parse_primary_or_fallback(const PromptTemplate& tmpl,
                                      const std::string& completion,
                                      const std::string& primary_field,
                                      bool& fallback_used) {
    try {
        const ParsedOutput parsed = parse(tmpl, completion);
        const auto it = parsed.values.find(primary_field);
        if (it != parsed.values.end() && !it->second.empty()) {
            fallback_used = false;
            return it->second;
        }
    } catch (const ParseFailure&) {
    }
    fallback_used = true;
    return util::trim(completion);
}

std::string template_to_json(const PromptTemplate& tmpl) {
    nlohmann::ordered_json j;
    j["objective"] = tmpl.objective;
    j["marker_style"] =
        tmpl.marker_style == MarkerStyle::triple_bracket ? "triple_bracket" : "plain_header";
    j["fields"] = nlohmann::ordered_json::array();
    for (const auto& f : tmpl.fields) {
        j["fields"].push_back({{"name", f.name},
                               {"description", f.description},
                               {"direction", f.direction == FieldDirection::input ? "input"
                                                                                  : "output"}});
    }
    return j.dump(2) + "\n";
}

PromptTemplate template_from_json(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw SchemaError(1, std::string("invalid template JSON: ") + e.what());
    }
    PromptTemplate tmpl;
    try {
        tmpl.objective = j.at("objective").get<std::string>();
        const std::string style = j.at("marker_style").get<std::string>();
        if (style == "triple_bracket") {
            tmpl.marker_style = MarkerStyle::triple_bracket;
        } else if (style == "plain_header") {
            tmpl.marker_style = MarkerStyle::plain_header;
        } else {
            throw SchemaError(1, "unknown marker_style: " + style);
        }
        for (const auto& f : j.at("fields")) {
            FieldSpec spec;
            spec.name = f.at("name").get<std::string>();
            spec.description = f.value("description", "");
            const std::string dir = f.at("direction").get<std::string>();
            if (dir == "input") {
                spec.direction = FieldDirection::input;
            } else if (dir == "output") {
                spec.direction = FieldDirection::output;
            } else {
                throw SchemaError(1, "unknown field direction: " + dir);
            }
            tmpl.fields.push_back(std::move(spec));
        }
    } catch (const json::exception& e) {
        throw SchemaError(1, std::string("template JSON missing fields: ") + e.what());
    }
    tmpl.validate();
    return tmpl;
}

std::string template_digest(const PromptTemplate& tmpl) {
    return util::fnv1a64_hex(template_to_json(tmpl));
}

}  // namespace papillon
