// Copyright (C) 2026 The eqsim-lab Authors
// SPDX-License-Identifier: Apache-2.0

#include "eqsim/textio.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "eqsim/error.hpp"

namespace eqsim {

std::string format_double(double value) {
  require(std::isfinite(value), ErrorKind::NonFinite, "cannot serialize a non-finite number");
  if (value == 0.0) value = 0.0;  // drop the sign of -0
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), value);
  return std::string(buf, res.ptr);
}

std::string format_doubles(const std::vector<double>& values) {
  std::string out;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i) out.push_back(',');
    out += format_double(values[i]);
  }
  return out;
}

namespace {

bool needs_quotes(std::string_view v) {
  if (v.empty()) return true;
  for (char c : v)
    if (c == ' ' || c == '\t' || c == '"' || c == '\\' || c == '=' || c == '#' || c == '\n') return true;
  return false;
}

bool valid_name(std::string_view s) {
  if (s.empty()) return false;
  for (char c : s)
    if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-' || c == '.')) return false;
  return true;
}

template <typename T>
T parse_number(const Record& r, std::string_view key, const std::string& text) {
  T value{};
  const char* first = text.data();
  const char* last = text.data() + text.size();
  const auto res = std::from_chars(first, last, value);
  if (res.ec != std::errc() || res.ptr != last) r.fail(key, "'" + text + "' is not a valid number");
  if constexpr (std::is_floating_point_v<T>) {
    if (!std::isfinite(value)) r.fail(key, "'" + text + "' is not finite");
  }
  return value;
}

std::vector<std::string> split_commas(const std::string& text) {
  std::vector<std::string> parts;
  if (text.empty()) return parts;
  std::size_t start = 0;
  while (true) {
    const auto comma = text.find(',', start);
    parts.push_back(text.substr(start, comma == std::string::npos ? std::string::npos : comma - start));
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return parts;
}

}  // namespace

Record& Record::add(std::string key, std::string value) {
  require(valid_name(key), ErrorKind::Schema, "invalid field name '" + key + "'");
  fields_.emplace_back(std::move(key), std::move(value));
  return *this;
}

bool Record::has(std::string_view key) const {
  for (const auto& [k, v] : fields_)
    if (k == key) return true;
  return false;
}

const std::string& Record::at(std::string_view key) const {
  for (const auto& [k, v] : fields_)
    if (k == key) return v;
  fail(key, "missing field");
}

std::string Record::get_string(std::string_view key, std::string fallback) const {
  return has(key) ? at(key) : fallback;
}

double Record::get_double(std::string_view key) const { return parse_number<double>(*this, key, at(key)); }
double Record::get_double(std::string_view key, double fallback) const {
  return has(key) ? get_double(key) : fallback;
}
long Record::get_long(std::string_view key) const { return parse_number<long>(*this, key, at(key)); }
long Record::get_long(std::string_view key, long fallback) const { return has(key) ? get_long(key) : fallback; }
std::uint64_t Record::get_u64(std::string_view key) const {
  return parse_number<std::uint64_t>(*this, key, at(key));
}
std::uint64_t Record::get_u64(std::string_view key, std::uint64_t fallback) const {
  return has(key) ? get_u64(key) : fallback;
}

bool Record::get_bool(std::string_view key) const {
  const auto& v = at(key);
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  fail(key, "'" + v + "' is not a boolean (true|false)");
}
bool Record::get_bool(std::string_view key, bool fallback) const { return has(key) ? get_bool(key) : fallback; }

std::vector<double> Record::get_doubles(std::string_view key) const {
  std::vector<double> out;
  for (const auto& part : split_commas(at(key))) out.push_back(parse_number<double>(*this, key, part));
  return out;
}

std::vector<long> Record::get_longs(std::string_view key) const {
  std::vector<long> out;
  for (const auto& part : split_commas(at(key))) out.push_back(parse_number<long>(*this, key, part));
  return out;
}

void Record::fail(std::string_view key, const std::string& what) const {
  throw Error(ErrorKind::Schema,
              "line " + std::to_string(line_) + ": " + kind_ + "." + std::string(key) + ": " + what);
}

std::string format_record(const Record& record) {
  std::string out = record.kind();
  for (const auto& [k, v] : record.fields()) {
    out.push_back(' ');
    out += k;
    out.push_back('=');
    if (!needs_quotes(v)) {
      out += v;
      continue;
    }
    out.push_back('"');
    for (char c : v) {
      if (c == '"' || c == '\\') {
        out.push_back('\\');
        out.push_back(c);
      } else if (c == '\n') {
        out += "\\n";
      } else {
        out.push_back(c);
      }
    }
    out.push_back('"');
  }
  return out;
}

Document::Document(std::string content_kind) {
  Record header("format");
  header.add("version", kFormatVersion).add("content", std::move(content_kind));
  records_.push_back(std::move(header));
}

Document& Document::add(Record record) {
  records_.push_back(std::move(record));
  return *this;
}

std::string Document::str() const {
  std::string out;
  for (const auto& r : records_) {
    out += format_record(r);
    out.push_back('\n');
  }
  return out;
}

namespace {

Record parse_line(std::string_view line, long line_no) {
  const auto fail = [&](const std::string& what) -> void {
    throw Error(ErrorKind::Schema, "line " + std::to_string(line_no) + ": " + what);
  };
  std::size_t pos = 0;
  const auto skip_space = [&] {
    while (pos < line.size() && (line[pos] == ' ' || line[pos] == '\t')) ++pos;
  };
  const auto read_name = [&] {
    const std::size_t start = pos;
    while (pos < line.size() && line[pos] != ' ' && line[pos] != '\t' && line[pos] != '=') ++pos;
    return std::string(line.substr(start, pos - start));
  };
  skip_space();
  std::string kind = read_name();
  if (!valid_name(kind)) fail("bad record kind '" + kind + "'");
  Record r(kind, line_no);
  while (true) {
    skip_space();
    if (pos >= line.size()) break;
    std::string key = read_name();
    if (!valid_name(key)) fail("bad field name '" + key + "'");
    if (pos >= line.size() || line[pos] != '=') fail("field '" + key + "' has no '='");
    ++pos;
    std::string value;
    if (pos < line.size() && line[pos] == '"') {
      ++pos;
      bool closed = false;
      while (pos < line.size()) {
        const char c = line[pos++];
        if (c == '"') {
          closed = true;
          break;
        }
        if (c == '\\') {
          if (pos >= line.size()) fail("dangling escape in field '" + key + "'");
          const char e = line[pos++];
          if (e == 'n') value.push_back('\n');
          else if (e == '"' || e == '\\') value.push_back(e);
          else fail("unknown escape in field '" + key + "'");
        } else {
          value.push_back(c);
        }
      }
      if (!closed) fail("unterminated quote in field '" + key + "'");
      if (pos < line.size() && line[pos] != ' ' && line[pos] != '\t') fail("junk after quoted field '" + key + "'");
    } else {
      const std::size_t start = pos;
      while (pos < line.size() && line[pos] != ' ' && line[pos] != '\t') ++pos;
      value = std::string(line.substr(start, pos - start));
      if (value.empty()) fail("field '" + key + "' has an empty value");
    }
    if (r.has(key)) fail("duplicate field '" + key + "'");
    r.add(std::move(key), std::move(value));
  }
  return r;
}

}  // namespace

std::vector<Record> parse_document(std::string_view text, std::string_view content_kind) {
  std::vector<Record> records;
  long line_no = 0;
  std::size_t start = 0;
  bool header_seen = false;
  while (start <= text.size()) {
    const auto nl = text.find('\n', start);
    std::string_view line = text.substr(start, nl == std::string_view::npos ? std::string_view::npos : nl - start);
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    const auto first = line.find_first_not_of(" \t");
    if (first != std::string_view::npos && line[first] != '#') {
      Record r = parse_line(line, line_no);
      if (!header_seen) {
        if (r.kind() != "format") r.fail("version", "document must start with a format record");
        if (r.get_long("version") != kFormatVersion)
          r.fail("version", "unsupported format version " + r.at("version"));
        if (!content_kind.empty() && r.at("content") != content_kind)
          r.fail("content", "expected '" + std::string(content_kind) + "', found '" + r.at("content") + "'");
        header_seen = true;
      } else {
        records.push_back(std::move(r));
      }
    }
    if (nl == std::string_view::npos) break;
    start = nl + 1;
  }
  if (!header_seen) throw Error(ErrorKind::Schema, "line 1: missing format record");
  return records;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  require(static_cast<bool>(in), ErrorKind::Io, "cannot open '" + path.string() + "' for reading");
  std::ostringstream ss;
  ss << in.rdbuf();
  require(!in.bad(), ErrorKind::Io, "error reading '" + path.string() + "'");
  return ss.str();
}

void write_file(const std::filesystem::path& path, const std::string& content) {
  std::error_code ec;
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path(), ec);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  require(static_cast<bool>(out), ErrorKind::Io, "cannot open '" + path.string() + "' for writing");
  out << content;
  out.flush();
  require(static_cast<bool>(out), ErrorKind::Io, "error writing '" + path.string() + "'");
}

}  // namespace eqsim
