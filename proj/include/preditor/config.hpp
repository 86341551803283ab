// SPDX-License-Identifier: Apache-2.0
#pragma once

// Flat run configuration: "key = value" lines grouped under [section]
// headers, addressed as "section.key". '#' and ';' start comments.

#include <charconv>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "preditor/common.hpp"

namespace preditor {

namespace detail {

inline std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r\n");
    return std::string(s.substr(b, e - b + 1));
}

}  // namespace detail

class Config {
public:
    /// With a non-empty `known` set, any other key is rejected.
    explicit Config(std::set<std::string> known = {}) : known_(std::move(known)) {}

    static Config parse(std::string_view text, std::set<std::string> known = {}) {
        Config cfg(std::move(known));
        std::string section;
        std::size_t line_no = 0;
        std::istringstream is{std::string(text)};
        std::string raw;
        while (std::getline(is, raw)) {
            ++line_no;
            std::string line = raw;
            const auto comment = line.find_first_of("#;");
            if (comment != std::string::npos) line.erase(comment);
            line = detail::trim(line);
            if (line.empty()) continue;
            const std::string where = "line " + std::to_string(line_no);
            if (line.front() == '[') {
                if (line.back() != ']') throw ParseError(where, "unterminated section header '" + line + "'");
                section = detail::trim(std::string_view(line).substr(1, line.size() - 2));
                if (section.empty()) throw ParseError(where, "empty section name");
                continue;
            }
            const auto eq = line.find('=');
            if (eq == std::string::npos) throw ParseError(where, "expected 'key = value', got '" + line + "'");
            const std::string key = detail::trim(std::string_view(line).substr(0, eq));
            if (key.empty()) throw ParseError(where, "missing key before '='");
            const std::string full = section.empty() ? key : section + "." + key;
            cfg.set(full, detail::trim(std::string_view(line).substr(eq + 1)));
        }
        return cfg;
    }

    static Config load(const std::string& path, std::set<std::string> known = {}) {
        std::ifstream is(path);
        if (!is) throw ParseError("config", "cannot open config file " + path);
        std::stringstream buf;
        buf << is.rdbuf();
        return parse(buf.str(), std::move(known));
    }

    void set(const std::string& key, std::string value) {
        if (!known_.empty() && known_.count(key) == 0) throw ParseError(key, "unknown configuration key");
        values_[key] = std::move(value);
    }

    bool has(const std::string& key) const { return values_.count(key) > 0; }

    std::string get_string(const std::string& key, const std::string& fallback) const {
        auto it = values_.find(key);
        return it == values_.end() ? fallback : it->second;
    }

    double get_double(const std::string& key, double fallback) const {
        auto it = values_.find(key);
        if (it == values_.end()) return fallback;
        return parse_double(key, it->second);
    }

    long long get_int(const std::string& key, long long fallback) const {
        auto it = values_.find(key);
        if (it == values_.end()) return fallback;
        return parse_int(key, it->second);
    }

    std::uint64_t get_u64(const std::string& key, std::uint64_t fallback) const {
        auto it = values_.find(key);
        if (it == values_.end()) return fallback;
        const std::string& v = it->second;
        std::uint64_t out = 0;
        auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
        if (ec != std::errc{} || ptr != v.data() + v.size()) throw ParseError(key, "expected an unsigned integer, got '" + v + "'");
        return out;
    }

    bool get_bool(const std::string& key, bool fallback) const {
        auto it = values_.find(key);
        if (it == values_.end()) return fallback;
        const std::string& v = it->second;
        if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
        if (v == "false" || v == "0" || v == "no" || v == "off") return false;
        throw ParseError(key, "expected a boolean, got '" + v + "'");
    }

    /// Comma-separated list of reals.
    std::vector<double> get_doubles(const std::string& key, std::vector<double> fallback) const {
        auto it = values_.find(key);
        if (it == values_.end()) return fallback;
        std::vector<double> out;
        std::stringstream ss(it->second);
        std::string item;
        while (std::getline(ss, item, ',')) out.push_back(parse_double(key, detail::trim(item)));
        if (out.empty()) throw ParseError(key, "expected a comma-separated list of numbers");
        return out;
    }

    const std::map<std::string, std::string>& values() const { return values_; }

    /// Canonical text form: keys sorted, grouped by section.
    std::string to_string() const {
        std::ostringstream os;
        std::string current;
        bool first = true;
        for (const auto& [key, value] : values_) {
            const auto dot = key.find('.');
            const std::string section = dot == std::string::npos ? "" : key.substr(0, dot);
            const std::string name = dot == std::string::npos ? key : key.substr(dot + 1);
            if (first || section != current) {
                if (!first) os << '\n';
                if (!section.empty()) os << '[' << section << "]\n";
                current = section;
                first = false;
            }
            os << name << " = " << value << '\n';
        }
        return os.str();
    }

private:
    static double parse_double(const std::string& key, const std::string& v) {
        double out = 0.0;
        auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
        if (ec != std::errc{} || ptr != v.data() + v.size() || !std::isfinite(out)) {
            throw ParseError(key, "expected a number, got '" + v + "'");
        }
        return out;
    }

    static long long parse_int(const std::string& key, const std::string& v) {
        long long out = 0;
        auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
        if (ec != std::errc{} || ptr != v.data() + v.size()) throw ParseError(key, "expected an integer, got '" + v + "'");
        return out;
    }

    std::set<std::string> known_;
    std::map<std::string, std::string> values_;
};

}  // namespace preditor
