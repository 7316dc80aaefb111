#include "iclc/jsonl.hpp"

#include <fstream>
#include <sstream>

#include <fmt/format.h>

#include "iclc/error.hpp"

namespace iclc {

namespace fs = std::filesystem;
using nlohmann::json;

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(fmt::format("cannot open '{}'", path.string()));
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

JsonlContents read_jsonl(const fs::path& path) {
  const auto text = read_file(path);
  JsonlContents out;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos < text.size()) {
    const auto nl = text.find('\n', pos);
    const bool terminated = nl != std::string::npos;
    const auto line = std::string_view(text).substr(pos, (terminated ? nl : text.size()) - pos);
    pos = terminated ? nl + 1 : text.size();
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string_view::npos) continue;
    try {
      out.records.push_back(json::parse(line));
    } catch (const json::exception& e) {
      if (!terminated) {
        out.torn_tail = true;
        break;
      }
      throw ParseError(fmt::format("{}:{}: {}", path.string(), line_no, e.what()));
    }
  }
  return out;
}

std::size_t repair_torn_tail(const fs::path& path) {
  if (!fs::exists(path)) return 0;
  const auto text = read_file(path);
  const auto last = text.rfind('\n');
  const std::size_t keep = last == std::string::npos ? 0 : last + 1;
  if (keep == text.size()) return 0;
  fs::resize_file(path, keep);
  return text.size() - keep;
}

void write_file_atomic(const fs::path& path, const std::string& bytes) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(fmt::format("cannot write '{}'", tmp.string()));
    out << bytes;
    out.flush();
    if (!out) throw Error(fmt::format("short write to '{}'", tmp.string()));
  }
  fs::rename(tmp, path);
}

JsonlSink::JsonlSink(const fs::path& path) : path_(path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  file_ = std::fopen(path.c_str(), "ab");
  if (!file_) throw Error(fmt::format("cannot append to '{}'", path.string()));
}

JsonlSink::~JsonlSink() {
  if (file_) std::fclose(file_);
}

void JsonlSink::write(const json& record) {
  auto line = record.dump();
  line += '\n';
  std::lock_guard lock(mu_);
  if (std::fwrite(line.data(), 1, line.size(), file_) != line.size() || std::fflush(file_) != 0)
    throw Error(fmt::format("write to '{}' failed", path_.string()));
  ++written_;
}

std::size_t JsonlSink::written() const {
  std::lock_guard lock(mu_);
  return written_;
}

}  // namespace iclc
