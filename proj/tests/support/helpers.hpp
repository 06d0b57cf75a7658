#pragma once

#include <atomic>
#include <filesystem>
#include <functional>
#include <random>
#include <string>
#include <unistd.h>
#include <utility>
#include <vector>

#include "papillon/chatio.hpp"
#include "papillon/structio.hpp"
#include "papillon/util.hpp"

namespace testsupport {

/// Unique scratch directory removed on destruction.
class TempDir {
public:
    TempDir() {
        static std::atomic<int> counter{0};
        path_ = std::filesystem::temp_directory_path() /
                ("papillon-test-" + std::to_string(::getpid()) + "-" +
                 std::to_string(counter.fetch_add(1)));
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    const std::filesystem::path& path() const { return path_; }

private:
    std::filesystem::path path_;
};

/// Hand-built triple-bracket completion, independent of the library renderer.
inline std::string triple_completion(
    const std::vector<std::pair<std::string, std::string>>& fields, bool completed = true) {
    std::string out;
    for (const auto& [name, value] : fields) {
        out += "[[[ ### " + name + " ### ]]]\n" + value + "\n\n";
    }
    if (completed) {
        out += "[[[ ### completed ### ]]]";
    }
    return out;
}

/// Programmable backend for tests that need per-call behavior.
class FnBackend final : public papillon::Backend {
public:
    using Fn = std::function<papillon::ChatResponse(const papillon::ChatRequest&, int call_index)>;

    explicit FnBackend(Fn fn, papillon::BackendRole role = papillon::BackendRole::judge)
        : Backend(role, "fn-backend", {}, {}), fn_(std::move(fn)) {}

protected:
    papillon::ChatResponse perform(const papillon::ChatRequest& request) override {
        return fn_(request, index_.fetch_add(1));
    }

private:
    Fn fn_;
    std::atomic<int> index_{0};
};

inline papillon::ScriptedResponse scripted(std::string content) {
    papillon::ScriptedResponse r;
    r.content = std::move(content);
    return r;
}

inline papillon::ScriptedResponse scripted(std::string content, std::int64_t prompt_tokens,
                                           std::int64_t completion_tokens) {
    papillon::ScriptedResponse r;
    r.content = std::move(content);
    r.usage = papillon::TokenUsage{prompt_tokens, completion_tokens};
    return r;
}

inline std::string random_text(std::mt19937_64& rng, std::size_t min_len, std::size_t max_len,
                               std::string_view alphabet) {
    const std::size_t len = min_len + rng() % (max_len - min_len + 1);
    std::string out;
    out.reserve(len);
    for (std::size_t i = 0; i < len; ++i) {
        out.push_back(alphabet[rng() % alphabet.size()]);
    }
    return out;
}

}  // namespace testsupport
