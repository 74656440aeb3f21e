#pragma once

// Plain-text helpers shared by every on-disk format in the project. Reals are
// written in shortest round-trip decimal form, so write + read is bit-exact.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace metahpo {

std::string format_double(double v);
double parse_double(std::string_view text, std::size_t line = 0);
std::int64_t parse_int(std::string_view text, std::size_t line = 0);

std::string_view trim(std::string_view s);
// Splits on `sep` and trims each field.
std::vector<std::string> split_fields(std::string_view line, char sep = ',');
std::string join(const std::vector<std::string>& parts, std::string_view sep = ",");

std::string read_file(const std::filesystem::path& path);
// Writes via a temporary file and rename so readers never see partial files.
void write_file_atomic(const std::filesystem::path& path, std::string_view contents);

// 64-bit FNV-1a, rendered as 16 hex digits.
std::string fnv1a_hex(std::string_view data);

}  // namespace metahpo
