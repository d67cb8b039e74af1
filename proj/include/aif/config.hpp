#pragma once

#include <cstdint>
#include <filesystem>
#include <istream>
#include <string>
#include <utility>
#include <vector>

namespace aif {

/// Flat UTF-8 `key = value` text. Blank lines and lines starting with '#'
/// are ignored; a repeated key is an error.
class KeyValueFile {
public:
    static KeyValueFile parse(std::istream& in);
    static KeyValueFile load(const std::filesystem::path& path);

    const std::vector<std::pair<std::string, std::string>>& entries() const { return entries_; }

private:
    std::vector<std::pair<std::string, std::string>> entries_;
};

double parse_double_value(const std::string& key, const std::string& value);
std::int64_t parse_int_value(const std::string& key, const std::string& value);
bool parse_bool_value(const std::string& key, const std::string& value);

}  // namespace aif
