#pragma once

#include <cctype>
#include <fstream>
#include <limits>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace combcascade {

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// INI-style configuration: [section] headers, key = value lines, '#'
/// comments. Keys are section-scoped; lookups track the schema so unknown
/// keys can be rejected up front.
class Config {
public:
    static Config parse_file(const std::string& path) {
        std::ifstream in(path);
        if (!in) throw ConfigError("cannot open config file: " + path);
        std::stringstream ss;
        ss << in.rdbuf();
        return parse_string(ss.str(), path);
    }

    static Config parse_string(const std::string& text, const std::string& origin = "<string>") {
        Config cfg;
        std::istringstream in(text);
        std::string line, section;
        int lineno = 0;
        while (std::getline(in, line)) {
            ++lineno;
            if (const auto pos = line.find('#'); pos != std::string::npos) line.erase(pos);
            line = trim(line);
            if (line.empty()) continue;
            if (line.front() == '[') {
                if (line.back() != ']')
                    throw ConfigError(origin + ":" + std::to_string(lineno) +
                                      ": malformed section header '" + line + "'");
                section = trim(line.substr(1, line.size() - 2));
                if (section.empty())
                    throw ConfigError(origin + ":" + std::to_string(lineno) + ": empty section name");
                continue;
            }
            const auto eq = line.find('=');
            if (eq == std::string::npos)
                throw ConfigError(origin + ":" + std::to_string(lineno) +
                                  ": expected 'key = value', got '" + line + "'");
            const std::string key = trim(line.substr(0, eq));
            const std::string value = trim(line.substr(eq + 1));
            if (key.empty())
                throw ConfigError(origin + ":" + std::to_string(lineno) + ": empty key");
            const std::string full = section + "." + key;
            if (cfg.values_.count(full))
                throw ConfigError(origin + ":" + std::to_string(lineno) + ": duplicate key '" +
                                  full + "'");
            cfg.values_[full] = value;
        }
        cfg.origin_ = origin;
        return cfg;
    }

    bool has(const std::string& section, const std::string& key) const {
        return values_.count(section + "." + key) != 0;
    }

    std::string get_string(const std::string& section, const std::string& key) const {
        const auto it = values_.find(section + "." + key);
        if (it == values_.end())
            throw ConfigError(origin_ + ": missing required key '" + section + "." + key + "'");
        return it->second;
    }
    std::string get_string(const std::string& section, const std::string& key,
                           const std::string& fallback) const {
        return has(section, key) ? get_string(section, key) : fallback;
    }

    double get_double(const std::string& section, const std::string& key) const {
        return to_double(section + "." + key, get_string(section, key));
    }
    double get_double(const std::string& section, const std::string& key, double fallback) const {
        return has(section, key) ? get_double(section, key) : fallback;
    }

    long get_int(const std::string& section, const std::string& key) const {
        const std::string s = get_string(section, key);
        std::size_t used = 0;
        long v = 0;
        try {
            v = std::stol(s, &used);
        } catch (const std::exception&) {
            used = 0;
        }
        if (used != s.size())
            throw ConfigError(origin_ + ": key '" + section + "." + key + "': not an integer: '" +
                              s + "'");
        return v;
    }
    long get_int(const std::string& section, const std::string& key, long fallback) const {
        return has(section, key) ? get_int(section, key) : fallback;
    }

    bool get_bool(const std::string& section, const std::string& key) const {
        const std::string s = get_string(section, key);
        if (s == "true" || s == "1" || s == "yes" || s == "on") return true;
        if (s == "false" || s == "0" || s == "no" || s == "off") return false;
        throw ConfigError(origin_ + ": key '" + section + "." + key + "': not a boolean: '" + s +
                          "'");
    }
    bool get_bool(const std::string& section, const std::string& key, bool fallback) const {
        return has(section, key) ? get_bool(section, key) : fallback;
    }

    /// Whitespace-separated list of doubles.
    std::vector<double> get_doubles(const std::string& section, const std::string& key) const {
        std::istringstream in(get_string(section, key));
        std::vector<double> out;
        std::string tok;
        while (in >> tok) out.push_back(to_double(section + "." + key, tok));
        if (out.empty())
            throw ConfigError(origin_ + ": key '" + section + "." + key + "': empty list");
        return out;
    }

    /// Rejects any key not in the allowed schema ("section.key" entries).
    void require_known_keys(const std::set<std::string>& allowed) const {
        std::string bad;
        for (const auto& [full, value] : values_)
            if (!allowed.count(full)) bad += (bad.empty() ? "" : ", ") + full;
        if (!bad.empty())
            throw ConfigError(origin_ + ": unknown configuration keys: " + bad);
    }

    const std::map<std::string, std::string>& entries() const { return values_; }

private:
    static std::string trim(const std::string& s) {
        std::size_t a = 0, b = s.size();
        while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
        while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
        return s.substr(a, b - a);
    }
    double to_double(const std::string& full, const std::string& s) const {
        std::size_t used = 0;
        double v = 0.0;
        if (s == "inf") return std::numeric_limits<double>::infinity();
        try {
            v = std::stod(s, &used);
        } catch (const std::exception&) {
            used = 0;
        }
        if (used != s.size())
            throw ConfigError(origin_ + ": key '" + full + "': not a number: '" + s + "'");
        return v;
    }

    std::map<std::string, std::string> values_;
    std::string origin_;
};

}  // namespace combcascade
