#include "cql/kv_config.hpp"

#include <array>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "cql/errors.hpp"

namespace cql {

namespace {

std::string_view trim(std::string_view s) {
    const auto first = s.find_first_not_of(" \t\r");
    if (first == std::string_view::npos) return {};
    const auto last = s.find_last_not_of(" \t\r");
    return s.substr(first, last - first + 1);
}

}  // namespace

std::string format_double(double v) {
    std::array<char, 64> buf{};
    auto [end, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
    if (ec != std::errc{}) throw NumericError("could not format double");
    return std::string(buf.data(), end);
}

double parse_double(std::string_view text, std::string_view context) {
    text = trim(text);
    double v = 0.0;
    const char* first = text.data();
    const char* last = text.data() + text.size();
    if (!text.empty() && *first == '+') ++first;
    auto [ptr, ec] = std::from_chars(first, last, v);
    if (ec != std::errc{} || ptr != last || text.empty()) {
        throw ParseError(std::string(context) + ": cannot parse '" + std::string(text) +
                         "' as a number");
    }
    return v;
}

std::int64_t parse_int(std::string_view text, std::string_view context) {
    text = trim(text);
    std::int64_t v = 0;
    auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
    if (ec != std::errc{} || ptr != text.data() + text.size() || text.empty()) {
        throw ParseError(std::string(context) + ": cannot parse '" + std::string(text) +
                         "' as an integer");
    }
    return v;
}

std::uint64_t parse_uint(std::string_view text, std::string_view context) {
    text = trim(text);
    std::uint64_t v = 0;
    auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
    if (ec != std::errc{} || ptr != text.data() + text.size() || text.empty()) {
        throw ParseError(std::string(context) + ": cannot parse '" + std::string(text) +
                         "' as a non-negative integer");
    }
    return v;
}

std::string read_text_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_text_file(const std::filesystem::path& path, std::string_view text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + path.string());
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    if (!out) throw IoError("write failed for " + path.string());
}

KeyValueConfig KeyValueConfig::parse(std::string_view text, std::string source) {
    KeyValueConfig cfg;
    cfg.source_ = std::move(source);
    std::size_t line_no = 0;
    while (!text.empty()) {
        const auto nl = text.find('\n');
        std::string_view line = text.substr(0, nl);
        text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
        ++line_no;
        if (const auto hash = line.find('#'); hash != std::string_view::npos) {
            line = line.substr(0, hash);
        }
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        const std::string where = cfg.source_ + ":" + std::to_string(line_no);
        if (eq == std::string_view::npos) {
            throw ParseError(where + ": expected 'key = value'");
        }
        std::string key(trim(line.substr(0, eq)));
        std::string value(trim(line.substr(eq + 1)));
        if (key.empty()) throw ParseError(where + ": empty key");
        if (!cfg.values_.emplace(key, value).second) {
            throw ParseError(where + ": duplicate key '" + key + "'");
        }
    }
    return cfg;
}

KeyValueConfig KeyValueConfig::load(const std::filesystem::path& path) {
    return parse(read_text_file(path), path.string());
}

const std::string* KeyValueConfig::lookup(const std::string& key) {
    auto it = values_.find(key);
    if (it == values_.end()) return nullptr;
    consumed_.insert(key);
    return &it->second;
}

double KeyValueConfig::get_double(const std::string& key, double fallback) {
    const auto* v = lookup(key);
    return v ? parse_double(*v, source_ + ": " + key) : fallback;
}

std::uint64_t KeyValueConfig::get_uint(const std::string& key, std::uint64_t fallback) {
    const auto* v = lookup(key);
    return v ? parse_uint(*v, source_ + ": " + key) : fallback;
}

bool KeyValueConfig::get_bool(const std::string& key, bool fallback) {
    const auto* v = lookup(key);
    if (!v) return fallback;
    if (*v == "true" || *v == "1") return true;
    if (*v == "false" || *v == "0") return false;
    throw ParseError(source_ + ": " + key + ": expected true/false, got '" + *v + "'");
}

std::string KeyValueConfig::get_string(const std::string& key, std::string fallback) {
    const auto* v = lookup(key);
    return v ? *v : fallback;
}

double KeyValueConfig::require_double(const std::string& key) {
    if (!contains(key)) throw ConfigError(source_ + ": missing key '" + key + "'");
    return get_double(key, 0.0);
}

std::uint64_t KeyValueConfig::require_uint(const std::string& key) {
    if (!contains(key)) throw ConfigError(source_ + ": missing key '" + key + "'");
    return get_uint(key, 0);
}

void KeyValueConfig::finish() const {
    std::string unknown;
    for (const auto& [k, v] : values_) {
        if (consumed_.count(k) == 0) unknown += (unknown.empty() ? "" : ", ") + k;
    }
    if (!unknown.empty()) throw ConfigError(source_ + ": unknown key(s): " + unknown);
}

KeyValueWriter& KeyValueWriter::comment(std::string_view text) {
    text_ += "# ";
    text_ += text;
    text_ += '\n';
    return *this;
}

KeyValueWriter& KeyValueWriter::add(std::string_view key, double v) {
    return add(key, std::string_view(format_double(v)));
}

KeyValueWriter& KeyValueWriter::add(std::string_view key, std::uint64_t v) {
    return add(key, std::string_view(std::to_string(v)));
}

KeyValueWriter& KeyValueWriter::add(std::string_view key, bool v) {
    return add(key, std::string_view(v ? "true" : "false"));
}

KeyValueWriter& KeyValueWriter::add(std::string_view key, std::string_view v) {
    text_ += key;
    text_ += " = ";
    text_ += v;
    text_ += '\n';
    return *this;
}

}  // namespace cql
