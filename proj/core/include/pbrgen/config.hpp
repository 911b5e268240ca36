#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace pbrgen {

// Flat key/value config in a TOML subset: `key = value` lines, `#` comments,
// optional [section] headers that prefix following keys as "section.key".
// Values are quoted strings, integers, floats, or booleans; as an extension,
// bare single-word values parse as strings (so `--set wiring=one_way` works
// without shell quoting). Arrays and nested tables are out of scope.
//
// Insertion order is preserved so the echo written into a run directory is
// stable and diffable. parse(to_toml()) round-trips exactly.
class Config {
public:
    Config() = default;

    static Config parse_string(const std::string& text);
    static Config parse_file(const std::string& path);

    bool has(const std::string& key) const;

    // Raw setter; value is interpreted like a config-file token.
    void set(const std::string& key, const std::string& value);
    // "key=value" form used by --set flags.
    void apply_override(const std::string& assignment);

    std::string get_string(const std::string& key) const;
    std::string get_string(const std::string& key, const std::string& fallback) const;
    int64_t get_int(const std::string& key) const;
    int64_t get_int(const std::string& key, int64_t fallback) const;
    double get_double(const std::string& key) const;
    double get_double(const std::string& key, double fallback) const;
    bool get_bool(const std::string& key) const;
    bool get_bool(const std::string& key, bool fallback) const;

    // Keys in insertion order.
    const std::vector<std::string>& keys() const { return order_; }

    // Throws ConfigError naming the first key not in `known`.
    void require_known(const std::vector<std::string>& known) const;

    // Flat echo, one `key = value` line per entry, strings quoted.
    std::string to_toml() const;
    void write_file(const std::string& path) const;

private:
    enum class Kind { string, number, boolean };
    struct Entry {
        std::string value; // unquoted/unescaped for strings, raw text otherwise
        Kind kind = Kind::string;
    };

    const Entry& entry(const std::string& key) const;

    std::vector<std::string> order_;
    std::map<std::string, Entry> values_;
};

} // namespace pbrgen
