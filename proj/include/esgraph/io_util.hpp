#pragma once

#include <string>
#include <string_view>

#include <json.hpp>

namespace esgraph {

std::string read_text_file(const std::string& path);

// Writes to <path>.tmp in the same directory, then renames. Parent
// directories are created as needed.
void write_file_atomic(const std::string& path, std::string_view content);

// Parse errors report origin plus line/column.
nlohmann::json parse_json_text(const std::string& text, const std::string& origin);
nlohmann::json load_json_file(const std::string& path);
void save_json_file(const std::string& path, const nlohmann::json& j, int indent = 1);

// Typed field access with json-path error messages.
const nlohmann::json& require_field(const nlohmann::json& j, const char* key,
                                    const std::string& path);
double field_double(const nlohmann::json& j, const char* key, const std::string& path);
int field_int(const nlohmann::json& j, const char* key, const std::string& path);

}  // namespace esgraph
