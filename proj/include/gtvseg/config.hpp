#pragma once

#include <algorithm>
#include <cstddef>
#include <istream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "gtvseg/error.hpp"

namespace gtv {

/// Flat `key = value` configuration. Keys may use dots ("size.mode") and a
/// `[section]` line prefixes the following keys with "section.". '#' starts a
/// comment. Later assignments override earlier ones.
class Config {
public:
    static Config parse(std::istream& in, const std::string& origin = "config") {
        Config cfg;
        std::string line, section;
        std::size_t no = 0;
        while (std::getline(in, line)) {
            ++no;
            if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
            line = trim(line);
            if (line.empty()) continue;
            const std::string where = origin + ":" + std::to_string(no);
            if (line.front() == '[') {
                require(line.back() == ']', ErrorKind::InvalidConfig, where + ": malformed section header");
                section = trim(line.substr(1, line.size() - 2));
                continue;
            }
            const auto eq = line.find('=');
            require(eq != std::string::npos, ErrorKind::InvalidConfig, where + ": expected key = value");
            std::string key = trim(line.substr(0, eq));
            require(!key.empty(), ErrorKind::InvalidConfig, where + ": empty key");
            if (!section.empty()) key = section + "." + key;
            cfg.set(key, trim(line.substr(eq + 1)));
        }
        return cfg;
    }

    static Config parse_string(const std::string& text) {
        std::istringstream in(text);
        return parse(in);
    }

    void set(const std::string& key, const std::string& value) { values_[key] = value; }
    bool has(const std::string& key) const { return values_.count(key) > 0; }
    const std::map<std::string, std::string>& values() const noexcept { return values_; }

    /// Copy every entry of `other` over this one.
    void merge(const Config& other) {
        for (const auto& [k, v] : other.values_) values_[k] = v;
    }

    std::string get_string(const std::string& key, const std::string& fallback) const {
        const auto it = values_.find(key);
        return it == values_.end() ? fallback : it->second;
    }

    double get_double(const std::string& key, double fallback) const {
        const auto it = values_.find(key);
        return it == values_.end() ? fallback : to_double(key, it->second);
    }

    std::size_t get_size(const std::string& key, std::size_t fallback) const {
        const auto it = values_.find(key);
        if (it == values_.end()) return fallback;
        const double v = to_double(key, it->second);
        require(v >= 0.0 && v == static_cast<double>(static_cast<std::size_t>(v)), ErrorKind::InvalidConfig,
                key + " must be a nonnegative integer");
        return static_cast<std::size_t>(v);
    }

    bool get_bool(const std::string& key, bool fallback) const {
        const auto it = values_.find(key);
        if (it == values_.end()) return fallback;
        const std::string& v = it->second;
        if (v == "1" || v == "true" || v == "yes" || v == "on") return true;
        if (v == "0" || v == "false" || v == "no" || v == "off") return false;
        fail(ErrorKind::InvalidConfig, key + ": expected a boolean, got '" + v + "'");
    }

    /// Comma-separated reals; `inf` is accepted.
    std::vector<double> get_list(const std::string& key) const {
        std::vector<double> out;
        const auto it = values_.find(key);
        if (it == values_.end()) return out;
        std::stringstream ss(it->second);
        std::string tok;
        while (std::getline(ss, tok, ',')) out.push_back(to_double(key, trim(tok)));
        return out;
    }

    /// Reject keys outside `known`.
    void check_keys(const std::set<std::string>& known) const {
        for (const auto& [k, v] : values_)
            require(known.count(k) > 0, ErrorKind::InvalidConfig, "unknown config key '" + k + "'");
    }

private:
    static std::string trim(const std::string& s) {
        const auto b = s.find_first_not_of(" \t\r\n");
        if (b == std::string::npos) return {};
        const auto e = s.find_last_not_of(" \t\r\n");
        return s.substr(b, e - b + 1);
    }

    static double to_double(const std::string& key, const std::string& v) {
        std::size_t used = 0;
        double out = 0.0;
        try {
            out = std::stod(v, &used);
        } catch (const std::exception&) {
            used = 0;
        }
        require(used > 0 && used == v.size(), ErrorKind::InvalidConfig, key + ": expected a number, got '" + v + "'");
        return out;
    }

    std::map<std::string, std::string> values_;
};

}  // namespace gtv
