#include "fpage/jsonl.hpp"

#include "fpage/errors.hpp"

#include <fstream>
#include <sstream>

#include <unistd.h>

namespace fpage {

void for_each_json_line(const std::filesystem::path& path,
                        const std::function<void(const nlohmann::json&, int)>& fn) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::string line;
  int number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw IoError(path.string() + ":" + std::to_string(number) + ": malformed JSON: " + e.what());
    }
    fn(j, number);
  }
}

JsonLinesWriter::JsonLinesWriter(const std::filesystem::path& path, Mode mode) : path_(path) {
  file_ = std::fopen(path.string().c_str(), mode == Mode::kAppend ? "ab" : "wb");
  if (file_ == nullptr) throw IoError("cannot open " + path.string() + " for writing");
}

JsonLinesWriter::~JsonLinesWriter() {
  if (file_ != nullptr) std::fclose(file_);
}

void JsonLinesWriter::write(const nlohmann::json& record) {
  const std::string text = record.dump() + "\n";
  if (std::fwrite(text.data(), 1, text.size(), file_) != text.size()) throw IoError("write failed: " + path_.string());
}

void JsonLinesWriter::sync() {
  if (std::fflush(file_) != 0 || ::fsync(::fileno(file_)) != 0) throw IoError("fsync failed: " + path_.string());
}

void JsonLinesWriter::close() {
  if (file_ == nullptr) return;
  const int rc = std::fclose(file_);
  file_ = nullptr;
  if (rc != 0) throw IoError("close failed: " + path_.string());
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << text;
  if (!out) throw IoError("write failed: " + path.string());
}

}  // namespace fpage
