#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "taskaff/types.hpp"

namespace taskaff::io {

// Shortest decimal that round-trips to the same double.
std::string format_double(double value);

// Parses a full token as a double; throws ParseError naming path:line.
double parse_double(std::string_view token, const std::string& path, std::size_t line);

// Dense matrix as headerless CSV, one row per line.
void write_matrix_csv(const std::filesystem::path& path, const Matrix& m);
Matrix read_matrix_csv(const std::filesystem::path& path);

void write_index_matrix_csv(const std::filesystem::path& path, const IndexMatrix& m);
IndexMatrix read_index_matrix_csv(const std::filesystem::path& path);

void write_text(const std::filesystem::path& path, std::string_view text);
std::string read_text(const std::filesystem::path& path);

// Throws MissingInput when the path does not exist.
void require_exists(const std::filesystem::path& path);

// 64-bit FNV-1a over the file bytes, rendered as 16 hex digits.
std::string file_hash(const std::filesystem::path& path);

std::vector<std::string_view> split_ws(std::string_view line);

}  // namespace taskaff::io
