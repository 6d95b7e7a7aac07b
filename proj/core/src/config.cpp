#include "maskoff/config.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>

#include "maskoff/common.hpp"

namespace maskoff::cfg {

namespace {

std::string trim(const std::string& s) {
    const auto begin = s.find_first_not_of(" \t\r\n");
    if (begin == std::string::npos) return "";
    const auto end = s.find_last_not_of(" \t\r\n");
    return s.substr(begin, end - begin + 1);
}

}  // namespace

KeyValueConfig KeyValueConfig::from_file(const std::string& path) {
    std::ifstream in(path);
    MASKOFF_CHECK(in.good(), "cannot open config file ", path);
    std::stringstream buf;
    buf << in.rdbuf();
    return from_string(buf.str());
}

KeyValueConfig KeyValueConfig::from_string(const std::string& text) {
    KeyValueConfig cfg;
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        MASKOFF_CHECK(eq != std::string::npos, "config line ", lineno,
                      ": expected `key = value`, got '", line, "'");
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        MASKOFF_CHECK(!key.empty(), "config line ", lineno, ": empty key");
        cfg.set(key, value);
    }
    return cfg;
}

void KeyValueConfig::set(const std::string& key, const std::string& value) {
    if (values_.find(key) == values_.end()) order_.push_back(key);
    values_[key] = value;
}

bool KeyValueConfig::has(const std::string& key) const { return values_.count(key) != 0; }

std::string KeyValueConfig::get_str(const std::string& key) const {
    const auto it = values_.find(key);
    MASKOFF_CHECK(it != values_.end(), "missing config key '", key, "'");
    return it->second;
}

std::string KeyValueConfig::get_str(const std::string& key, const std::string& fallback) const {
    const auto it = values_.find(key);
    return it == values_.end() ? fallback : it->second;
}

int64_t KeyValueConfig::get_int(const std::string& key) const {
    const std::string v = get_str(key);
    try {
        size_t pos = 0;
        const int64_t out = std::stoll(v, &pos);
        MASKOFF_CHECK(pos == v.size(), "config key '", key, "': trailing junk in '", v, "'");
        return out;
    } catch (const std::logic_error&) {
        fail("config key '", key, "': '", v, "' is not an integer");
    }
}

int64_t KeyValueConfig::get_int(const std::string& key, int64_t fallback) const {
    return has(key) ? get_int(key) : fallback;
}

uint64_t KeyValueConfig::get_u64(const std::string& key, uint64_t fallback) const {
    if (!has(key)) return fallback;
    const std::string v = get_str(key);
    // std::stoull wraps negative input around instead of rejecting it.
    MASKOFF_CHECK(v.empty() || v[0] != '-', "config key '", key, "': '", v,
                  "' is not an unsigned integer");
    try {
        size_t pos = 0;
        const uint64_t out = std::stoull(v, &pos);
        MASKOFF_CHECK(pos == v.size(), "config key '", key, "': trailing junk in '", v, "'");
        return out;
    } catch (const std::logic_error&) {
        fail("config key '", key, "': '", v, "' is not an unsigned integer");
    }
}

double KeyValueConfig::get_double(const std::string& key) const {
    const std::string v = get_str(key);
    try {
        size_t pos = 0;
        const double out = std::stod(v, &pos);
        MASKOFF_CHECK(pos == v.size(), "config key '", key, "': trailing junk in '", v, "'");
        return out;
    } catch (const std::logic_error&) {
        fail("config key '", key, "': '", v, "' is not a number");
    }
}

double KeyValueConfig::get_double(const std::string& key, double fallback) const {
    return has(key) ? get_double(key) : fallback;
}

bool KeyValueConfig::get_bool(const std::string& key, bool fallback) const {
    if (!has(key)) return fallback;
    std::string v = get_str(key);
    std::transform(v.begin(), v.end(), v.begin(), [](unsigned char c) { return std::tolower(c); });
    if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
    if (v == "false" || v == "0" || v == "no" || v == "off") return false;
    fail("config key '", key, "': '", v, "' is not a boolean");
}

void KeyValueConfig::require_known(const std::vector<std::string>& allowed) const {
    for (const std::string& key : order_) {
        if (std::find(allowed.begin(), allowed.end(), key) == allowed.end())
            fail("unknown config key '", key, "'");
    }
}

std::vector<std::string> KeyValueConfig::keys() const { return order_; }

std::string KeyValueConfig::to_string() const {
    std::ostringstream os;
    for (const std::string& key : order_) os << key << " = " << values_.at(key) << "\n";
    return os.str();
}

}  // namespace maskoff::cfg
