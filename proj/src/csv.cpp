#include "cityest/csv.hpp"

#include "cityest/errors.hpp"

#include <charconv>
#include <cmath>

namespace cityest {

std::string format_double(double v) {
  if (v == 0.0) return "0";  // also folds -0
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

std::vector<std::string> split(std::string_view s, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  for (;;) {
    auto pos = s.find(sep, start);
    if (pos == std::string_view::npos) {
      out.emplace_back(s.substr(start));
      return out;
    }
    out.emplace_back(s.substr(start, pos - start));
    start = pos + 1;
  }
}

namespace {

std::vector<std::string> parse_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cur += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cur += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.push_back(std::move(cur));
      cur.clear();
    } else if (c != '\r') {
      cur += c;
    }
  }
  out.push_back(std::move(cur));
  return out;
}

}  // namespace

CsvReader::CsvReader(std::istream& in, std::vector<std::string> expected_header, std::string source)
    : in_(&in), source_(std::move(source)), width_(expected_header.size()) {
  std::string line;
  if (!std::getline(*in_, line)) fail("empty file, expected header");
  ++line_;
  auto header = parse_line(line);
  if (header != expected_header) {
    std::string want;
    for (std::size_t i = 0; i < expected_header.size(); ++i) want += (i ? "," : "") + expected_header[i];
    fail("unexpected header, expected '" + want + "'");
  }
}

bool CsvReader::next() {
  std::string line;
  while (std::getline(*in_, line)) {
    ++line_;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    fields_ = parse_line(line);
    if (fields_.size() != width_) {
      fail("expected " + std::to_string(width_) + " fields, got " + std::to_string(fields_.size()));
    }
    return true;
  }
  return false;
}

const std::string& CsvReader::get(std::size_t col) const { return fields_.at(col); }

double CsvReader::get_double(std::size_t col) const {
  const auto& s = get(col);
  double v = 0.0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size() || !std::isfinite(v)) {
    fail("invalid number '" + s + "'");
  }
  return v;
}

std::int64_t CsvReader::get_int(std::size_t col) const {
  const auto& s = get(col);
  std::int64_t v = 0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) fail("invalid integer '" + s + "'");
  return v;
}

void CsvReader::fail(const std::string& msg) const { throw ParseError(source_ + ": " + msg, line_); }

CsvWriter::CsvWriter(std::ostream& out, std::initializer_list<std::string_view> header) : out_(&out) {
  for (auto h : header) *this << h;
  end_row();
}

void CsvWriter::sep() {
  if (!first_) *out_ << ',';
  first_ = false;
}

CsvWriter& CsvWriter::operator<<(double v) {
  sep();
  *out_ << format_double(v);
  return *this;
}

CsvWriter& CsvWriter::operator<<(std::int64_t v) {
  sep();
  *out_ << v;
  return *this;
}

CsvWriter& CsvWriter::operator<<(std::string_view v) {
  sep();
  if (v.find_first_of(",\"\n") != std::string_view::npos) {
    *out_ << '"';
    for (char c : v) {
      if (c == '"') *out_ << '"';
      *out_ << c;
    }
    *out_ << '"';
  } else {
    *out_ << v;
  }
  return *this;
}

void CsvWriter::end_row() {
  *out_ << '\n';
  first_ = true;
}

}  // namespace cityest
