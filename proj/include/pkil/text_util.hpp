#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace pkil {

using Json = nlohmann::json;

/// 64-bit FNV-1a over the raw bytes of `text`.
std::uint64_t fnv1a64(std::string_view text) noexcept;

/// Lower-case 16-digit hex rendering of a 64-bit value.
std::string hex64(std::uint64_t value);

/// Store key for arbitrary text content ("txt:" + hex FNV-1a).
std::string content_key(std::string_view text);

/// Lower-cased ASCII alphanumeric runs; everything else separates tokens.
std::vector<std::string> tokenize(std::string_view text);

std::string trim(std::string_view text);
std::string to_lower(std::string_view text);

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::string_view contents);

/// Calls `fn(line_number, record)` for every non-blank line of a JSON-lines
/// file. Malformed lines raise `Error{"malformed-record"}` naming the line.
void for_each_json_line(const std::filesystem::path& path,
                        const std::function<void(std::size_t, const Json&)>& fn);

}  // namespace pkil
