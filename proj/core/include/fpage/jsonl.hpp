#pragma once

#include <nlohmann/json.hpp>

#include <cstdio>
#include <filesystem>
#include <functional>
#include <string>

namespace fpage {

// Calls fn(record, line_number) for every non-blank line; line numbers are 1-based.
// Parse errors raise IoError naming the file and line.
void for_each_json_line(const std::filesystem::path& path,
                        const std::function<void(const nlohmann::json&, int)>& fn);

// Serializes one JSON value per line. dump() output is deterministic (object keys sorted).
class JsonLinesWriter {
 public:
  enum class Mode { kTruncate, kAppend };

  explicit JsonLinesWriter(const std::filesystem::path& path, Mode mode = Mode::kTruncate);
  ~JsonLinesWriter();
  JsonLinesWriter(const JsonLinesWriter&) = delete;
  JsonLinesWriter& operator=(const JsonLinesWriter&) = delete;

  void write(const nlohmann::json& record);
  // Flushes stdio buffers and fsyncs the file descriptor.
  void sync();
  void close();

 private:
  std::filesystem::path path_;
  std::FILE* file_ = nullptr;
};

// Whole-file helpers for small documents.
std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, const std::string& text);

}  // namespace fpage
