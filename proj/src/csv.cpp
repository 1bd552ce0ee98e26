#include "flow/csv.hpp"

#include <array>
#include <charconv>
#include <fstream>
#include <sstream>

namespace flow::csv {

std::size_t Table::column(std::string_view name) const {
  for (std::size_t i = 0; i < header.size(); ++i)
    if (header[i] == name) return i;
  throw CsvError("missing column '" + std::string(name) + "'");
}

namespace {

std::vector<std::string> split(std::string_view line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto comma = line.find(',', start);
    out.emplace_back(line.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

}  // namespace

Table parse(std::string_view text) {
  Table t;
  std::size_t start = 0;
  bool first = true;
  std::size_t line_no = 0;
  while (start < text.size()) {
    auto end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(start, end - start);
    start = end + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.empty()) continue;
    auto fields = split(line);
    if (first) {
      t.header = std::move(fields);
      first = false;
    } else {
      if (fields.size() != t.header.size())
        throw CsvError("line " + std::to_string(line_no) + ": expected " + std::to_string(t.header.size()) +
                       " fields, got " + std::to_string(fields.size()));
      t.rows.push_back(std::move(fields));
    }
  }
  if (first) throw CsvError("empty CSV");
  return t;
}

Table read(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CsvError("cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str());
}

Table read(const std::filesystem::path& path, std::span<const std::string_view> expected_header) {
  Table t = read(path);
  bool ok = t.header.size() == expected_header.size();
  for (std::size_t i = 0; ok && i < expected_header.size(); ++i) ok = t.header[i] == expected_header[i];
  if (!ok) throw CsvError(path.string() + ": unexpected header");
  return t;
}

std::string join(std::span<const std::string> fields) {
  std::string out;
  for (std::size_t i = 0; i < fields.size(); ++i) {
    if (i) out += ',';
    out += fields[i];
  }
  return out;
}

std::string header_line(std::span<const std::string_view> names) {
  std::string out;
  for (std::size_t i = 0; i < names.size(); ++i) {
    if (i) out += ',';
    out += names[i];
  }
  return out;
}

std::string number(double v) {
  std::array<char, 64> buf{};
  auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  return std::string(buf.data(), ptr);
}

double to_double(const std::string& field) {
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), v);
  if (ec != std::errc() || ptr != field.data() + field.size()) throw CsvError("not a number: '" + field + "'");
  return v;
}

long long to_int(const std::string& field) {
  long long v = 0;
  auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), v);
  if (ec != std::errc() || ptr != field.data() + field.size()) throw CsvError("not an integer: '" + field + "'");
  return v;
}

void write_atomic(const std::filesystem::path& path, const std::string& content) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw CsvError("cannot write " + tmp.string());
    out << content;
    out.flush();
    if (!out) throw CsvError("write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

}  // namespace flow::csv
