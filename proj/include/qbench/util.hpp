#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace qbench::util {

// FNV-1a 64-bit. Stable across runs and platforms; used for cache keys and
// prompt fingerprints, not for security.
std::uint64_t fnv1a_64(std::string_view data);
std::string hex64(std::uint64_t value);

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::string_view content);
// Write to a sibling temp file, then rename over the target.
void write_file_atomic(const std::filesystem::path& path, std::string_view content);
void append_line(const std::filesystem::path& path, std::string_view line);

std::vector<std::string> split_lines(std::string_view text);
std::string trim(std::string_view text);
std::string to_lower(std::string_view text);
bool starts_with(std::string_view text, std::string_view prefix);

std::string join(const std::vector<std::string>& parts, std::string_view sep);

// ISO-8601 UTC timestamp, second resolution.
std::string utc_timestamp();

std::optional<std::string> getenv_str(const std::string& name);

// Fresh unique directory under the system temp root. Caller removes it.
std::filesystem::path make_temp_dir(std::string_view prefix);

// Runs argv directly (no shell), inheriting stdio, and returns the exit code.
// A missing binary or abnormal termination reports 127.
int run_command(const std::vector<std::string>& argv);

}  // namespace qbench::util
