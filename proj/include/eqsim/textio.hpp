// Copyright (C) 2026 The eqsim-lab Authors
// SPDX-License-Identifier: Apache-2.0

// Line-delimited record format used for every file the tools read or write.
// Grammar and examples: docs/FORMAT.md.

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace eqsim {

inline constexpr int kFormatVersion = 1;

/// Shortest decimal text that reads back to the same double.
std::string format_double(double value);
std::string format_doubles(const std::vector<double>& values);

class Record {
 public:
  Record() = default;
  explicit Record(std::string kind, long line = 0) : kind_(std::move(kind)), line_(line) {}

  const std::string& kind() const { return kind_; }
  long line() const { return line_; }
  const std::vector<std::pair<std::string, std::string>>& fields() const { return fields_; }

  Record& add(std::string key, std::string value);
  Record& add(std::string key, const char* value) { return add(std::move(key), std::string(value)); }
  Record& add(std::string key, std::string_view value) { return add(std::move(key), std::string(value)); }
  Record& add(std::string key, double value) { return add(std::move(key), format_double(value)); }
  Record& add(std::string key, long value) { return add(std::move(key), std::to_string(value)); }
  Record& add(std::string key, int value) { return add(std::move(key), std::to_string(value)); }
  Record& add(std::string key, long long value) { return add(std::move(key), std::to_string(value)); }
  Record& add(std::string key, std::uint64_t value) { return add(std::move(key), std::to_string(value)); }
  Record& add(std::string key, bool value) { return add(std::move(key), std::string(value ? "true" : "false")); }
  Record& add(std::string key, const std::vector<double>& values) { return add(std::move(key), format_doubles(values)); }

  bool has(std::string_view key) const;
  /// Throws Schema naming the line, record kind and key when absent.
  const std::string& at(std::string_view key) const;
  std::string get_string(std::string_view key, std::string fallback) const;

  double get_double(std::string_view key) const;
  double get_double(std::string_view key, double fallback) const;
  long get_long(std::string_view key) const;
  long get_long(std::string_view key, long fallback) const;
  std::uint64_t get_u64(std::string_view key) const;
  std::uint64_t get_u64(std::string_view key, std::uint64_t fallback) const;
  bool get_bool(std::string_view key) const;
  bool get_bool(std::string_view key, bool fallback) const;
  std::vector<double> get_doubles(std::string_view key) const;
  std::vector<long> get_longs(std::string_view key) const;

  /// Schema error that names this record's location and the key.
  [[noreturn]] void fail(std::string_view key, const std::string& what) const;

 private:
  std::string kind_;
  std::vector<std::pair<std::string, std::string>> fields_;
  long line_ = 0;
};

std::string format_record(const Record& record);

/// Appends records and renders them; the first line is always the format header.
class Document {
 public:
  explicit Document(std::string content_kind);
  Document& add(Record record);
  std::string str() const;

 private:
  std::vector<Record> records_;
};

/// Parses a whole document. When `content_kind` is nonempty, the header must
/// declare that kind.
std::vector<Record> parse_document(std::string_view text, std::string_view content_kind = {});

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, const std::string& content);

}  // namespace eqsim
