#include "papillon/pupa.hpp"

#include <algorithm>
#include <optional>
#include <fstream>
#include <random>
#include <sstream>

#include <json.hpp>

#include "papillon/errors.hpp"
#include "papillon/judge.hpp"
#include "papillon/prompts.hpp"
#include "papillon/util.hpp"

namespace papillon::pupa {

using nlohmann::json;

std::string to_string(Category category) {
    switch (category) {
        case Category::applications: return "applications";
        case Category::financial: return "financial";
        case Category::emails: return "emails";
        case Category::other: return "other";
    }
    return "other";
}

Category category_from_string(const std::string& name) {
    if (name == "applications") return Category::applications;
    if (name == "financial") return Category::financial;
    if (name == "emails") return Category::emails;
    if (name == "other") return Category::other;
    throw SchemaError(1, "unknown category: " + name);
}

Category category_from_label(const std::string& label) {
    std::string key = util::normalize_key(label);
    // peel surrounding punctuation the model may add (quotes, trailing period)
    while (!key.empty() && (key.front() == '"' || key.front() == '\'' || key.front() == '`')) {
        key.erase(key.begin());
    }
    while (!key.empty() && (key.back() == '"' || key.back() == '\'' || key.back() == '`' ||
                            key.back() == '.')) {
        key.pop_back();
    }
    if (key == "job, visa, & other applications" || key == "job, visa, and other applications" ||
        key == "applications") {
        return Category::applications;
    }
    if (key == "financial and corporate info" || key == "financial") {
        return Category::financial;
    }
    if (key == "quoted emails and messages" || key == "emails") {
        return Category::emails;
    }
    return Category::other;
}

std::string to_string(Subset subset) {
    switch (subset) {
        case Subset::tnb: return "tnb";
        case Subset::fresh: return "new";
        case Subset::custom: return "custom";
    }
    return "custom";
}

Subset subset_from_string(const std::string& name) {
    if (name == "tnb") return Subset::tnb;
    if (name == "new") return Subset::fresh;
    if (name == "custom") return Subset::custom;
    throw SchemaError(1, "unknown subset: " + name);
}

void Conversation::validate() const {
    if (turns.empty()) {
        throw std::invalid_argument("conversation '" + id + "' has no turns");
    }
    for (const auto& t : turns) {
        if (t.user.empty() || t.assistant.empty()) {
            throw std::invalid_argument("conversation '" + id + "' has a turn with empty text");
        }
    }
}

std::vector<std::string> PupaRecord::pii_unit_values() const {
    std::vector<std::string> out;
    out.reserve(pii_units.size());
    for (const auto& u : pii_units) out.push_back(u.value);
    return out;
}

// --- mining stages -----------------------------------------------------------

namespace {

std::string concatenated_dialogue(const Conversation& conversation) {
    std::string out;
    for (const auto& t : conversation.turns) {
        if (!out.empty()) out += "\n\n";
        out += "USER: " + t.user + "\nASSISTANT: " + t.assistant;
    }
    return out;
}

std::string concatenated_history(const std::vector<Turn>& history) {
    std::string out;
    for (const auto& t : history) {
        if (!out.empty()) out += "\n\n";
        out += "USER: " + t.user + "\nASSISTANT: " + t.assistant;
    }
    return out;
}

}  // namespace

Category classify(Backend& judge_backend, const Conversation& conversation) {
    conversation.validate();
    ChatRequest request;
    request.messages.push_back(
        {Role::user, prompts::classification_prompt(concatenated_dialogue(conversation))});
    const ChatResponse response = chat(judge_backend, request);
    return category_from_label(util::trim(response.content));
}

std::vector<TurnContext> split_turns(const Conversation& conversation) {
    conversation.validate();
    std::vector<TurnContext> out;
    out.reserve(conversation.turns.size());
    for (std::size_t i = 0; i < conversation.turns.size(); ++i) {
        TurnContext ctx;
        ctx.index = i;
        ctx.turn = conversation.turns[i];
        ctx.history.assign(conversation.turns.begin(),
                           conversation.turns.begin() + static_cast<std::ptrdiff_t>(i));
        out.push_back(std::move(ctx));
    }
    return out;
}

bool is_context_dependent(Backend& judge_backend,
                          const Turn& turn,
                          const std::vector<Turn>& history) {
    if (history.empty()) {
        return false;
    }
    ChatRequest request;
    request.messages.push_back(
        {Role::user,
         prompts::context_dependence_prompt(turn.user, concatenated_history(history))});
    const ChatResponse response = chat(judge_backend, request);
    return judge::parse_verdict(response.content);
}

BuildResult build(const std::vector<Conversation>& corpus,
                  const MinerBackends& backends,
                  Subset subset,
                  int concurrency) {
    if (!backends.classifier || !backends.context_judge || !backends.redactor) {
        throw ConfigError("build needs classifier, context judge, and redactor backends");
    }
    // Conversations are independent; process them in parallel and merge in
    // corpus order so the output is stable regardless of scheduling.
    std::vector<std::vector<PupaRecord>> records_by_conversation(corpus.size());
    std::vector<std::optional<SkipEntry>> skip_by_conversation(corpus.size());
    util::parallel_for(corpus.size(), concurrency, [&](std::size_t i) {
        const Conversation& conversation = corpus[i];
        try {
            conversation.validate();
            const Category category = classify(*backends.classifier, conversation);
            if (category == Category::other) {
                return;
            }
            for (const auto& ctx : split_turns(conversation)) {
                if (is_context_dependent(*backends.context_judge, ctx.turn, ctx.history)) {
                    continue;
                }
                const piiex::Extraction extraction =
                    piiex::extract_pii(*backends.redactor, ctx.turn.user);
                if (extraction.units.empty()) {
                    continue;
                }
                PupaRecord record;
                record.id = conversation.id + ":" + std::to_string(ctx.index);
                record.user_query = ctx.turn.user;
                record.pii_units = extraction.units;
                record.target_response = ctx.turn.assistant;
                record.category = category;
                record.subset = subset;
                record.source = {conversation.id, static_cast<int>(ctx.index)};
                record.redacted_query = extraction.redaction.redacted;
                records_by_conversation[i].push_back(std::move(record));
            }
        } catch (const std::exception& e) {
            skip_by_conversation[i] = SkipEntry{conversation.id, e.what()};
        }
    });

    BuildResult result;
    for (std::size_t i = 0; i < corpus.size(); ++i) {
        for (auto& record : records_by_conversation[i]) {
            result.records.push_back(std::move(record));
        }
        if (skip_by_conversation[i]) {
            result.skipped.push_back(*skip_by_conversation[i]);
        }
    }
    return result;
}

DatasetStats stats(const std::vector<PupaRecord>& records) {
    if (records.empty()) {
        throw EmptyDataset("stats over an empty record list");
    }
    DatasetStats out;
    out.count = records.size();
    std::map<Category, std::size_t> counts;
    double units = 0.0;
    double prompt_len = 0.0;
    double completion_len = 0.0;
    for (const auto& r : records) {
        ++counts[r.category];
        units += static_cast<double>(r.pii_units.size());
        prompt_len += static_cast<double>(r.user_query.size());
        completion_len += static_cast<double>(r.target_response.size());
    }
    const auto n = static_cast<double>(records.size());
    for (const auto& [category, count] : counts) {
        out.pct_by_category[category] = 100.0 * static_cast<double>(count) / n;
    }
    out.avg_pii_units = units / n;
    out.avg_prompt_len = prompt_len / n;
    out.avg_completion_len = completion_len / n;
    return out;
}

// --- persistence -----------------------------------------------------------------

std::string record_to_json(const PupaRecord& record) {
    nlohmann::ordered_json j;
    j["id"] = record.id;
    j["user_query"] = record.user_query;
    j["pii_units"] = nlohmann::ordered_json::array();
    for (const auto& u : record.pii_units) j["pii_units"].push_back(u.value);
    j["target_response"] = record.target_response;
    j["category"] = to_string(record.category);
    j["subset"] = to_string(record.subset);
    j["source"] = {{"conversation_id", record.source.conversation_id},
                   {"turn_index", record.source.turn_index}};
    j["redacted_query"] = record.redacted_query;
    return j.dump();
}

PupaRecord record_from_json(const std::string& text) {
    json j = json::parse(text);  // caller maps json::exception to SchemaError
    PupaRecord record;
    record.id = j.at("id").get<std::string>();
    record.user_query = j.at("user_query").get<std::string>();
    for (const auto& u : j.at("pii_units")) {
        record.pii_units.push_back({u.get<std::string>()});
    }
    record.target_response = j.at("target_response").get<std::string>();
    record.category = category_from_string(j.at("category").get<std::string>());
    record.subset = subset_from_string(j.value("subset", "custom"));
    if (j.contains("source")) {
        record.source.conversation_id = j["source"].value("conversation_id", "");
        record.source.turn_index = j["source"].value("turn_index", 0);
    }
    record.redacted_query = j.value("redacted_query", "");
    if (record.pii_units.empty()) {
        throw SchemaError(1, "record '" + record.id + "' has no pii_units");
    }
    if (record.target_response.empty()) {
        throw SchemaError(1, "record '" + record.id + "' has an empty target_response");
    }
    return record;
}

std::vector<PupaRecord> load(const std::filesystem::path& path) {
    const std::string content = util::read_file(path);
    std::vector<PupaRecord> records;
    std::size_t line_no = 0;
    for (const auto& line : util::split_lines(content)) {
        ++line_no;
        if (util::trim(line).empty()) continue;
        try {
            records.push_back(record_from_json(line));
        } catch (const SchemaError& e) {
            throw SchemaError(line_no, e.what());
        } catch (const std::exception& e) {
            throw SchemaError(line_no, e.what());
        }
    }
    return records;
}

void save(const std::filesystem::path& path, const std::vector<PupaRecord>& records) {
    std::string out;
    for (const auto& r : records) {
        out += record_to_json(r);
        out += "\n";
    }
    util::write_file(path, out);
}

std::vector<Conversation> load_corpus(const std::filesystem::path& path) {
    const std::string content = util::read_file(path);
    std::vector<Conversation> corpus;
    std::size_t line_no = 0;
    for (const auto& line : util::split_lines(content)) {
        ++line_no;
        if (util::trim(line).empty()) continue;
        try {
            const json j = json::parse(line);
            Conversation c;
            c.id = j.at("id").get<std::string>();
            for (const auto& t : j.at("turns")) {
                c.turns.push_back(
                    {t.at("user").get<std::string>(), t.at("assistant").get<std::string>()});
            }
            c.validate();
            corpus.push_back(std::move(c));
        } catch (const std::exception& e) {
            throw SchemaError(line_no, e.what());
        }
    }
    return corpus;
}

// --- sampling and anonymization -----------------------------------------------------

TrainValSplit sample_train_val(const std::vector<PupaRecord>& records,
                               std::size_t train_n,
                               std::size_t val_n,
                               std::uint64_t seed) {
    TrainValSplit split;
    std::size_t want_train = train_n;
    std::size_t want_val = val_n;
    if (records.size() < train_n + val_n) {
        want_train = std::min(train_n, records.size() / 2);
        want_val = std::min(val_n, records.size() - want_train);
        split.scaled = true;
    }
    std::vector<std::size_t> order(records.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::mt19937_64 rng(seed);
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t i = 0; i < want_train; ++i) split.train.push_back(records[order[i]]);
    for (std::size_t i = 0; i < want_val; ++i) {
        split.val.push_back(records[order[want_train + i]]);
    }
    return split;
}

namespace {

const std::vector<std::string>& pseudonym_table() {
    static const std::vector<std::string> table = {
        "Alex Morgan",   "Jordan Lee",   "Sam Rivera",  "Taylor Quinn", "Casey Brooks",
        "Riley Hayes",   "Morgan Ellis", "Jamie Parker", "Avery Sloan",  "Drew Campbell",
        "Cameron Reyes", "Devon Marsh",  "Harper Flynn", "Rowan Blake",  "Skyler Dane",
        "Emerson Gale",  "Finley Hart",  "Kendall Moss", "Logan Pryce",  "Marley Voss",
    };
    return table;
}

std::string replace_all(std::string text, const std::string& from, const std::string& to) {
    if (from.empty()) return text;
    std::size_t pos = 0;
    while ((pos = text.find(from, pos)) != std::string::npos) {
        text.replace(pos, from.size(), to);
        pos += to.size();
    }
    return text;
}

}  // namespace

std::vector<PupaRecord> anonymize(const std::vector<PupaRecord>& records) {
    const auto& table = pseudonym_table();
    std::vector<PupaRecord> out;
    out.reserve(records.size());
    std::map<std::string, std::string> substitution;
    for (const auto& record : records) {
        PupaRecord copy = record;
        for (auto& unit : copy.pii_units) {
            auto it = substitution.find(unit.value);
            if (it == substitution.end()) {
                const std::string replacement =
                    table[substitution.size() % table.size()] +
                    (substitution.size() >= table.size()
                         ? " " + std::to_string(substitution.size() / table.size())
                         : "");
                it = substitution.emplace(unit.value, replacement).first;
            }
            copy.user_query = replace_all(copy.user_query, unit.value, it->second);
            copy.target_response = replace_all(copy.target_response, unit.value, it->second);
            unit.value = it->second;
        }
        out.push_back(std::move(copy));
    }
    return out;
}

}  // namespace papillon::pupa
