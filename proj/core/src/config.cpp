#include "pbrgen/config.hpp"

#include <cctype>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "pbrgen/errors.hpp"

namespace pbrgen {

namespace {

std::string trim(const std::string& s) {
    size_t a = 0, b = s.size();
    while (a < b && std::isspace(uint8_t(s[a]))) ++a;
    while (b > a && std::isspace(uint8_t(s[b - 1]))) --b;
    return s.substr(a, b - a);
}

bool valid_key(const std::string& k) {
    if (k.empty()) return false;
    for (char c : k)
        if (!(std::isalnum(uint8_t(c)) || c == '_' || c == '.' || c == '-')) return false;
    return true;
}

bool parses_as_int(const std::string& s) {
    if (s.empty()) return false;
    char* end = nullptr;
    errno = 0;
    (void)std::strtoll(s.c_str(), &end, 10);
    return errno == 0 && end == s.c_str() + s.size();
}

bool parses_as_double(const std::string& s) {
    if (s.empty()) return false;
    char* end = nullptr;
    errno = 0;
    (void)std::strtod(s.c_str(), &end);
    return errno == 0 && end == s.c_str() + s.size();
}

std::string unescape(const std::string& body, const std::string& context) {
    std::string out;
    for (size_t i = 0; i < body.size(); ++i) {
        if (body[i] != '\\') {
            out += body[i];
            continue;
        }
        if (++i == body.size()) throw ConfigError("dangling escape in " + context);
        switch (body[i]) {
            case '"': out += '"'; break;
            case '\\': out += '\\'; break;
            case 'n': out += '\n'; break;
            case 't': out += '\t'; break;
            default: throw ConfigError("unsupported escape in " + context);
        }
    }
    return out;
}

std::string escape(const std::string& s) {
    std::string out;
    for (char c : s) {
        switch (c) {
            case '"': out += "\\\""; break;
            case '\\': out += "\\\\"; break;
            case '\n': out += "\\n"; break;
            case '\t': out += "\\t"; break;
            default: out += c;
        }
    }
    return out;
}

} // namespace

Config Config::parse_string(const std::string& text) {
    Config cfg;
    std::istringstream in(text);
    std::string line, section;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const std::string where = "line " + std::to_string(lineno);
        // strip comment, respecting quotes
        bool in_quote = false;
        for (size_t i = 0; i < line.size(); ++i) {
            if (line[i] == '"' && (i == 0 || line[i - 1] != '\\')) in_quote = !in_quote;
            else if (line[i] == '#' && !in_quote) {
                line = line.substr(0, i);
                break;
            }
        }
        line = trim(line);
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']') throw ConfigError("unterminated section header at " + where);
            section = trim(line.substr(1, line.size() - 2));
            if (!valid_key(section)) throw ConfigError("bad section name at " + where);
            continue;
        }
        const size_t eq = line.find('=');
        if (eq == std::string::npos) throw ConfigError("expected key = value at " + where);
        std::string key = trim(line.substr(0, eq));
        if (!valid_key(key)) throw ConfigError("bad key '" + key + "' at " + where);
        if (!section.empty()) key = section + "." + key;
        cfg.set(key, trim(line.substr(eq + 1)));
    }
    return cfg;
}

Config Config::parse_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw IoError("config: cannot open " + path);
    std::ostringstream buf;
    buf << f.rdbuf();
    try {
        return parse_string(buf.str());
    } catch (const ConfigError& e) {
        throw ConfigError(path + ": " + e.what());
    }
}

bool Config::has(const std::string& key) const { return values_.count(key) != 0; }

void Config::set(const std::string& key, const std::string& value) {
    if (!valid_key(key)) throw ConfigError("bad key '" + key + "'");
    Entry e;
    const std::string v = trim(value);
    if (v.size() >= 2 && v.front() == '"' && v.back() == '"') {
        e.kind = Kind::string;
        e.value = unescape(v.substr(1, v.size() - 2), "value of " + key);
    } else if (v == "true" || v == "false") {
        e.kind = Kind::boolean;
        e.value = v;
    } else if (parses_as_int(v) || parses_as_double(v)) {
        e.kind = Kind::number;
        e.value = v;
    } else if (valid_key(v)) {
        // bare-word extension: single token, no spaces or punctuation
        e.kind = Kind::string;
        e.value = v;
    } else {
        throw ConfigError("unparsable value for '" + key + "': " + v);
    }
    if (!values_.count(key)) order_.push_back(key);
    values_[key] = e;
}

void Config::apply_override(const std::string& assignment) {
    const size_t eq = assignment.find('=');
    if (eq == std::string::npos || eq == 0)
        throw ConfigError("override must be key=value, got '" + assignment + "'");
    set(trim(assignment.substr(0, eq)), trim(assignment.substr(eq + 1)));
}

const Config::Entry& Config::entry(const std::string& key) const {
    const auto it = values_.find(key);
    if (it == values_.end()) throw ConfigError("missing config key '" + key + "'");
    return it->second;
}

std::string Config::get_string(const std::string& key) const { return entry(key).value; }

std::string Config::get_string(const std::string& key, const std::string& fallback) const {
    return has(key) ? get_string(key) : fallback;
}

int64_t Config::get_int(const std::string& key) const {
    const Entry& e = entry(key);
    if (e.kind != Kind::number || !parses_as_int(e.value))
        throw ConfigError("config key '" + key + "' is not an integer: " + e.value);
    return std::strtoll(e.value.c_str(), nullptr, 10);
}

int64_t Config::get_int(const std::string& key, int64_t fallback) const {
    return has(key) ? get_int(key) : fallback;
}

double Config::get_double(const std::string& key) const {
    const Entry& e = entry(key);
    if (e.kind != Kind::number)
        throw ConfigError("config key '" + key + "' is not a number: " + e.value);
    return std::strtod(e.value.c_str(), nullptr);
}

double Config::get_double(const std::string& key, double fallback) const {
    return has(key) ? get_double(key) : fallback;
}

bool Config::get_bool(const std::string& key) const {
    const Entry& e = entry(key);
    if (e.kind != Kind::boolean)
        throw ConfigError("config key '" + key + "' is not a boolean: " + e.value);
    return e.value == "true";
}

bool Config::get_bool(const std::string& key, bool fallback) const {
    return has(key) ? get_bool(key) : fallback;
}

void Config::require_known(const std::vector<std::string>& known) const {
    for (const std::string& k : order_) {
        bool ok = false;
        for (const std::string& allowed : known)
            if (k == allowed) {
                ok = true;
                break;
            }
        if (!ok) throw ConfigError("unknown config key '" + k + "'");
    }
}

std::string Config::to_toml() const {
    std::string out;
    for (const std::string& k : order_) {
        const Entry& e = values_.at(k);
        out += k;
        out += " = ";
        if (e.kind == Kind::string) {
            out += '"';
            out += escape(e.value);
            out += '"';
        } else {
            out += e.value;
        }
        out += '\n';
    }
    return out;
}

void Config::write_file(const std::string& path) const {
    std::ofstream f(path);
    if (!f) throw IoError("config: cannot write " + path);
    f << to_toml();
    if (!f) throw IoError("config: short write to " + path);
}

} // namespace pbrgen
