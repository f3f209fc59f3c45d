#include "esgraph/io_util.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "esgraph/error.hpp"

namespace esgraph {

namespace fs = std::filesystem;
using nlohmann::json;

std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCategory::kIo, "cannot open file: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  if (in.bad()) fail(ErrorCategory::kIo, "read failed: " + path);
  return ss.str();
}

void write_file_atomic(const std::string& path, std::string_view content) {
  const fs::path target(path);
  if (target.has_parent_path()) {
    std::error_code ec;
    fs::create_directories(target.parent_path(), ec);
    if (ec) fail(ErrorCategory::kIo, "cannot create directory: " + target.parent_path().string());
  }
  const fs::path tmp = target.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) fail(ErrorCategory::kIo, "cannot open for write: " + tmp.string());
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    out.flush();
    if (!out) fail(ErrorCategory::kIo, "write failed: " + tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, target, ec);
  if (ec) fail(ErrorCategory::kIo, "rename failed: " + target.string());
}

json parse_json_text(const std::string& text, const std::string& origin) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    // Translate the byte offset to line/column.
    std::size_t line = 1, col = 1;
    const std::size_t stop = std::min(text.size(), e.byte > 0 ? e.byte - 1 : 0);
    for (std::size_t i = 0; i < stop; ++i) {
      if (text[i] == '\n') {
        ++line;
        col = 1;
      } else {
        ++col;
      }
    }
    fail(ErrorCategory::kFormat, origin + ":" + std::to_string(line) + ":" +
                                     std::to_string(col) + ": " + e.what());
  }
}

json load_json_file(const std::string& path) {
  return parse_json_text(read_text_file(path), path);
}

void save_json_file(const std::string& path, const json& j, int indent) {
  write_file_atomic(path, j.dump(indent) + "\n");
}

const json& require_field(const json& j, const char* key, const std::string& path) {
  if (!j.is_object() || !j.contains(key))
    fail(ErrorCategory::kFormat, "missing field: " + path + "." + key);
  return j.at(key);
}

double field_double(const json& j, const char* key, const std::string& path) {
  const json& f = require_field(j, key, path);
  if (!f.is_number())
    fail(ErrorCategory::kFormat, "expected number at " + path + "." + key);
  return f.get<double>();
}

int field_int(const json& j, const char* key, const std::string& path) {
  const json& f = require_field(j, key, path);
  if (!f.is_number_integer())
    fail(ErrorCategory::kFormat, "expected integer at " + path + "." + key);
  return f.get<int>();
}

}  // namespace esgraph
