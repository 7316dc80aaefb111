#pragma once

#include <cstdio>
#include <filesystem>
#include <mutex>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace iclc {

struct JsonlContents {
  std::vector<nlohmann::json> records;
  bool torn_tail = false;  // last line had no newline and did not parse
};

// Reads one JSON value per line, skipping blank lines. An unterminated final
// line that fails to parse is reported as a torn tail rather than an error;
// any other malformed line throws ParseError with its line number.
JsonlContents read_jsonl(const std::filesystem::path& path);

// Drops bytes after the last newline. Returns the number removed.
std::size_t repair_torn_tail(const std::filesystem::path& path);

// Writes to a sibling temp file and renames it over `path`.
void write_file_atomic(const std::filesystem::path& path, const std::string& bytes);

std::string read_file(const std::filesystem::path& path);

// Serialized append-only sink. Each record is one line, flushed on write.
class JsonlSink {
 public:
  explicit JsonlSink(const std::filesystem::path& path);
  ~JsonlSink();
  JsonlSink(const JsonlSink&) = delete;
  JsonlSink& operator=(const JsonlSink&) = delete;

  void write(const nlohmann::json& record);
  std::size_t written() const;

 private:
  mutable std::mutex mu_;
  std::FILE* file_ = nullptr;
  std::filesystem::path path_;
  std::size_t written_ = 0;
};

}  // namespace iclc
