#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <string_view>
#include <vector>

namespace papillon::util {

/// Runs fn(0..n-1) across up to `concurrency` worker threads. fn must handle
/// its own errors; an escaping exception terminates.
void parallel_for(std::size_t n, int concurrency, const std::function<void(std::size_t)>& fn);

std::string trim(std::string_view s);
std::string lower_ascii(std::string_view s);

/// Lowercased, trimmed, inner whitespace runs collapsed to single spaces.
/// Used to compare free-text labels and for de-duplication keys.
std::string normalize_key(std::string_view s);

/// Number of whitespace-separated runs; the fallback token estimate when an
/// upstream response omits usage counts.
std::int64_t approx_token_count(std::string_view text);

bool valid_utf8(std::string_view s);

/// 64-bit FNV-1a, hex-encoded. Digests prompt templates and cache keys.
std::string fnv1a64_hex(std::string_view data);

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::string_view content);

/// Splits on '\n'; a single trailing newline does not produce an empty tail.
std::vector<std::string> split_lines(std::string_view text);

std::string join(const std::vector<std::string>& parts, std::string_view sep);

bool starts_with(std::string_view s, std::string_view prefix);
bool ends_with(std::string_view s, std::string_view suffix);

}  // namespace papillon::util
