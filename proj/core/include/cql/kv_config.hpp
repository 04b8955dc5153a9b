#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace cql {

/// Shortest decimal text that parses back to exactly `v`.
std::string format_double(double v);

/// Strict full-string parse; `context` is echoed in the ParseError message.
double parse_double(std::string_view text, std::string_view context);
std::int64_t parse_int(std::string_view text, std::string_view context);
std::uint64_t parse_uint(std::string_view text, std::string_view context);

std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, std::string_view text);

/// Flat `key = value` text config. '#' starts a comment; blank lines are
/// ignored; duplicate keys are a ParseError. Values are fetched with get_*();
/// finish() throws ConfigError naming every key that was never consumed.
class KeyValueConfig {
public:
    static KeyValueConfig parse(std::string_view text, std::string source = "<string>");
    static KeyValueConfig load(const std::filesystem::path& path);

    bool contains(const std::string& key) const { return values_.count(key) != 0; }

    double get_double(const std::string& key, double fallback);
    std::uint64_t get_uint(const std::string& key, std::uint64_t fallback);
    bool get_bool(const std::string& key, bool fallback);
    std::string get_string(const std::string& key, std::string fallback);

    double require_double(const std::string& key);
    std::uint64_t require_uint(const std::string& key);

    void finish() const;

private:
    const std::string* lookup(const std::string& key);

    std::string source_;
    std::map<std::string, std::string> values_;
    std::set<std::string> consumed_;
};

/// Accumulates `key = value` lines in insertion order.
class KeyValueWriter {
public:
    KeyValueWriter& comment(std::string_view text);
    KeyValueWriter& add(std::string_view key, double v);
    KeyValueWriter& add(std::string_view key, std::uint64_t v);
    KeyValueWriter& add(std::string_view key, bool v);
    KeyValueWriter& add(std::string_view key, std::string_view v);
    KeyValueWriter& add(std::string_view key, const char* v) { return add(key, std::string_view(v)); }

    const std::string& str() const noexcept { return text_; }

private:
    std::string text_;
};

}  // namespace cql
