#pragma once

#include <filesystem>
#include <functional>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

namespace kpdisc::io {

namespace fs = std::filesystem;

/// Writes `path` through a sibling temporary file that is renamed into place,
/// so readers never observe a partially written file.
void atomic_write(const fs::path& path, const std::function<void(std::ostream&)>& writer,
                  bool binary = false);

void atomic_write_text(const fs::path& path, std::string_view text);

std::string read_text(const fs::path& path);

std::vector<std::string> split(std::string_view line, char sep);

std::string trim(std::string_view s);

/// Minimal CSV reader: first row is the header, no quoting.
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  std::size_t column(std::string_view name) const;
  bool has_column(std::string_view name) const;
};

CsvTable read_csv(const fs::path& path);

/// Shortest decimal text that round-trips the double exactly.
std::string format_double(double v);

/// Lower-case hex SHA-256 of a file's bytes.
std::string sha256_file(const fs::path& path);

}  // namespace kpdisc::io
