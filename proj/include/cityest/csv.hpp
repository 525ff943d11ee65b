#pragma once

#include <cstdint>
#include <istream>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

namespace cityest {

/// Shortest round-trip decimal representation of a double.
std::string format_double(double v);

/// Minimal CSV reader: comma separated, optional double quotes, header line
/// checked verbatim against the expected column list.
class CsvReader {
 public:
  CsvReader(std::istream& in, std::vector<std::string> expected_header, std::string source = "<stream>");

  /// False at end of input. Blank lines are skipped.
  bool next();
  const std::vector<std::string>& row() const { return fields_; }
  long line() const { return line_; }
  const std::string& source() const { return source_; }

  double get_double(std::size_t col) const;
  std::int64_t get_int(std::size_t col) const;
  const std::string& get(std::size_t col) const;

 private:
  [[noreturn]] void fail(const std::string& msg) const;

  std::istream* in_;
  std::string source_;
  std::size_t width_;
  long line_ = 0;
  std::vector<std::string> fields_;
};

class CsvWriter {
 public:
  CsvWriter(std::ostream& out, std::initializer_list<std::string_view> header);

  CsvWriter& operator<<(double v);
  CsvWriter& operator<<(std::int64_t v);
  CsvWriter& operator<<(int v) { return *this << static_cast<std::int64_t>(v); }
  CsvWriter& operator<<(std::size_t v) { return *this << static_cast<std::int64_t>(v); }
  CsvWriter& operator<<(std::string_view v);
  void end_row();

 private:
  void sep();
  std::ostream* out_;
  bool first_ = true;
};

std::vector<std::string> split(std::string_view s, char sep);

}  // namespace cityest
