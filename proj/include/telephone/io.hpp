#pragma once

#include <istream>
#include <ostream>
#include <string>
#include <vector>

namespace telephone {

/// Quotes a field only when it contains a comma, quote or line break.
std::string csv_escape(const std::string& field);
void write_csv_row(std::ostream& out, const std::vector<std::string>& fields);
/// Reads one record, honoring quoted fields that span lines. Returns false at
/// end of input.
bool read_csv_row(std::istream& in, std::vector<std::string>& fields);

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  /// Index of a column; throws std::runtime_error naming the column if absent.
  std::size_t column(const std::string& name) const;
};

CsvTable read_csv(std::istream& in);
CsvTable read_csv_file(const std::string& path);

/// Writes to path.tmp and renames over path.
void write_file_atomic(const std::string& path, const std::string& content);
std::string read_file(const std::string& path);

/// Shortest decimal that round-trips.
std::string format_double(double x);

/// FNV-1a 64, hex. Used for output digests.
std::string digest_hex(const std::string& bytes);

}  // namespace telephone
