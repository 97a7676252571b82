#include "taskaff/io.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "taskaff/error.hpp"

namespace taskaff::io {

namespace fs = std::filesystem;

std::string format_double(double value) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), value);
  if (ec != std::errc{}) throw Error("format_double: conversion failed");
  return std::string(buf, end);
}

double parse_double(std::string_view token, const std::string& path, std::size_t line) {
  double out = 0.0;
  const char* first = token.data();
  const char* last = token.data() + token.size();
  if (!token.empty() && *first == '+') ++first;
  auto [ptr, ec] = std::from_chars(first, last, out);
  if (ec != std::errc{} || ptr != last) {
    throw ParseError(path, line, "not a number: '" + std::string(token) + "'");
  }
  return out;
}

std::vector<std::string_view> split_ws(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t' || line[i] == '\r')) ++i;
    std::size_t j = i;
    while (j < line.size() && line[j] != ' ' && line[j] != '\t' && line[j] != '\r') ++j;
    if (j > i) out.push_back(line.substr(i, j - i));
    i = j;
  }
  return out;
}

namespace {

std::vector<std::string_view> split_commas(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  for (;;) {
    std::size_t pos = line.find(',', start);
    auto cell = line.substr(start, pos == std::string_view::npos ? pos : pos - start);
    while (!cell.empty() && (cell.back() == '\r' || cell.back() == ' ')) cell.remove_suffix(1);
    while (!cell.empty() && cell.front() == ' ') cell.remove_prefix(1);
    out.push_back(cell);
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

template <typename Scalar, typename Parse>
Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> read_csv(const fs::path& path,
                                                               Parse parse) {
  require_exists(path);
  std::ifstream in(path);
  std::vector<std::vector<Scalar>> rows;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line == "\r") continue;
    std::vector<Scalar> row;
    for (auto cell : split_commas(line)) row.push_back(parse(cell, lineno));
    if (!rows.empty() && row.size() != rows.front().size()) {
      throw ParseError(path.string(), lineno, "ragged row");
    }
    rows.push_back(std::move(row));
  }
  const auto cols = rows.empty() ? 0 : rows.front().size();
  Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> m(rows.size(), cols);
  for (std::size_t r = 0; r < rows.size(); ++r)
    for (std::size_t c = 0; c < cols; ++c) m(r, c) = rows[r][c];
  return m;
}

}  // namespace

void write_matrix_csv(const fs::path& path, const Matrix& m) {
  std::string out;
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      if (c) out += ',';
      out += format_double(m(r, c));
    }
    out += '\n';
  }
  write_text(path, out);
}

Matrix read_matrix_csv(const fs::path& path) {
  const auto name = path.string();
  return read_csv<double>(path, [&](std::string_view cell, std::size_t line) {
    return parse_double(cell, name, line);
  });
}

void write_index_matrix_csv(const fs::path& path, const IndexMatrix& m) {
  std::string out;
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      if (c) out += ',';
      out += std::to_string(m(r, c));
    }
    out += '\n';
  }
  write_text(path, out);
}

IndexMatrix read_index_matrix_csv(const fs::path& path) {
  const auto name = path.string();
  return read_csv<long>(path, [&](std::string_view cell, std::size_t line) {
    long v = 0;
    auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
    if (ec != std::errc{} || ptr != cell.data() + cell.size())
      throw ParseError(name, line, "not an integer: '" + std::string(cell) + "'");
    return v;
  });
}

void write_text(const fs::path& path, std::string_view text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot open for writing: " + path.string());
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!out) throw Error("write failed: " + path.string());
}

std::string read_text(const fs::path& path) {
  require_exists(path);
  std::ifstream in(path, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void require_exists(const fs::path& path) {
  if (!fs::exists(path)) throw MissingInput(path.string());
}

std::string file_hash(const fs::path& path) {
  const auto bytes = read_text(path);
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace taskaff::io
