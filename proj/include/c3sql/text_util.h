#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace c3sql::text {

std::string to_lower(std::string_view s);
std::string to_upper(std::string_view s);
bool iequals(std::string_view a, std::string_view b);
std::string_view trim(std::string_view s);
std::string_view trim_right(std::string_view s);

bool is_identifier_char(char c);

// True when `s` starts with `keyword` (case-insensitive) followed by a
// non-identifier character or end of input.
bool starts_with_keyword(std::string_view s, std::string_view keyword);

std::vector<std::string_view> split_lines(std::string_view s);
std::string join(const std::vector<std::string>& parts, std::string_view sep);

std::string read_file(const std::filesystem::path& path);
// Writes via a sibling temp file and rename, so readers never see a partial file.
void write_file_atomic(const std::filesystem::path& path, std::string_view content);

}  // namespace c3sql::text
