#pragma once

#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace flow::csv {

class CsvError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  std::size_t column(std::string_view name) const;
};

/// Plain comma-separated text: no quoting, no embedded commas.
Table parse(std::string_view text);
Table read(const std::filesystem::path& path);
/// Like read(), but the header must match exactly.
Table read(const std::filesystem::path& path, std::span<const std::string_view> expected_header);

std::string join(std::span<const std::string> fields);
std::string header_line(std::span<const std::string_view> names);

/// Shortest representation that parses back to the same double.
std::string number(double v);
double to_double(const std::string& field);
long long to_int(const std::string& field);

/// Write to `<path>.tmp` and rename over `path`.
void write_atomic(const std::filesystem::path& path, const std::string& content);

}  // namespace flow::csv
