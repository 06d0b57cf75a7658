#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "papillon/chatio.hpp"
#include "papillon/piiex.hpp"

namespace papillon::pupa {

enum class Category { applications, financial, emails, other };

std::string to_string(Category category);
Category category_from_string(const std::string& name);

/// Maps a free-text classifier label to a Category; unknown labels are Other.
/// Comparison tolerates casing, surrounding punctuation, and whitespace runs.
Category category_from_label(const std::string& label);

enum class Subset { tnb, fresh, custom };

std::string to_string(Subset subset);
Subset subset_from_string(const std::string& name);

struct Turn {
    std::string user;
    std::string assistant;
};

struct Conversation {
    std::string id;
    std::vector<Turn> turns;

    /// At least one turn, both texts of every turn non-empty.
    void validate() const;
};

struct SourceRef {
    std::string conversation_id;
    int turn_index = 0;
};

struct PupaRecord {
    std::string id;
    std::string user_query;
    std::vector<piiex::PiiUnit> pii_units;
    std::string target_response;
    Category category = Category::other;
    Subset subset = Subset::custom;
    SourceRef source;
    std::string redacted_query;

    std::vector<std::string> pii_unit_values() const;
};

struct DatasetStats {
    std::map<Category, double> pct_by_category;
    double avg_pii_units = 0.0;
    double avg_prompt_len = 0.0;      // characters
    double avg_completion_len = 0.0;  // characters
    std::size_t count = 0;
};

/// One model call over the concatenated dialogue; the completion label maps to
/// a Category.
Category classify(Backend& judge_backend, const Conversation& conversation);

struct TurnContext {
    std::size_t index = 0;
    Turn turn;
    std::vector<Turn> history;  // all turns before this one, in order
};

std::vector<TurnContext> split_turns(const Conversation& conversation);

/// Whether answering the turn requires the prior history. An empty history is
/// never context-dependent and costs no model call.
bool is_context_dependent(Backend& judge_backend,
                          const Turn& turn,
                          const std::vector<Turn>& history);

struct MinerBackends {
    Backend* classifier = nullptr;
    Backend* context_judge = nullptr;
    Backend* redactor = nullptr;
};

struct SkipEntry {
    std::string conversation_id;
    std::string reason;
};

struct BuildResult {
    std::vector<PupaRecord> records;
    std::vector<SkipEntry> skipped;
};

/// classify -> keep target categories -> split turns -> drop context-dependent
/// turns -> extract PII -> drop zero-PII turns. Per-conversation errors land in
/// the skip report and the build continues.
BuildResult build(const std::vector<Conversation>& corpus,
                  const MinerBackends& backends,
                  Subset subset = Subset::custom,
                  int concurrency = 1);

/// Throws EmptyDataset on an empty record list.
DatasetStats stats(const std::vector<PupaRecord>& records);

/// JSONL, one record per line, canonical key order. load reports the first bad
/// line via SchemaError.
std::vector<PupaRecord> load(const std::filesystem::path& path);
void save(const std::filesystem::path& path, const std::vector<PupaRecord>& records);

std::string record_to_json(const PupaRecord& record);
PupaRecord record_from_json(const std::string& text);

/// Corpus input format: one conversation per line,
/// {"id": ..., "turns": [{"user": ..., "assistant": ...}]}.
std::vector<Conversation> load_corpus(const std::filesystem::path& path);

struct TrainValSplit {
    std::vector<PupaRecord> train;
    std::vector<PupaRecord> val;
    bool scaled = false;  // dataset was too small for the requested sizes
};

/// Seeded sampling without replacement; ids in train and val are disjoint.
/// When the dataset cannot cover both sizes, the split is scaled down and
/// flagged.
TrainValSplit sample_train_val(const std::vector<PupaRecord>& records,
                               std::size_t train_n,
                               std::size_t val_n,
                               std::uint64_t seed);

/// Optional export pass replacing each distinct PII unit with a pseudonym from
/// a fixed table, applied to queries, targets, and the units themselves.
std::vector<PupaRecord> anonymize(const std::vector<PupaRecord>& records);

}  // namespace papillon::pupa
