#ifndef MASKOFF_CONFIG_HPP
#define MASKOFF_CONFIG_HPP

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace maskoff::cfg {

// Plain-text configuration: one `key = value` per line, `#` starts a comment.
// Later assignments win, so CLI overrides are applied by calling set() after
// parsing the file.
class KeyValueConfig {
public:
    KeyValueConfig() = default;

    static KeyValueConfig from_file(const std::string& path);
    static KeyValueConfig from_string(const std::string& text);

    void set(const std::string& key, const std::string& value);
    bool has(const std::string& key) const;

    // Typed getters; the defaulted forms fall back when the key is absent,
    // the plain forms throw. Malformed values always throw.
    std::string get_str(const std::string& key) const;
    std::string get_str(const std::string& key, const std::string& fallback) const;
    int64_t get_int(const std::string& key) const;
    int64_t get_int(const std::string& key, int64_t fallback) const;
    uint64_t get_u64(const std::string& key, uint64_t fallback) const;
    double get_double(const std::string& key) const;
    double get_double(const std::string& key, double fallback) const;
    bool get_bool(const std::string& key, bool fallback) const;

    // Typo guard: throws when a key is present that is not in `allowed`.
    void require_known(const std::vector<std::string>& allowed) const;

    std::vector<std::string> keys() const;  // insertion order
    std::string to_string() const;          // canonical `key = value` lines

private:
    std::vector<std::string> order_;
    std::map<std::string, std::string> values_;
};

}  // namespace maskoff::cfg

#endif
