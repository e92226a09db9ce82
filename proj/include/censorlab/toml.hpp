// Small TOML subset parser, enough for censor.toml: [dotted.tables],
// key = value with strings, numbers, booleans, and single-line arrays.
#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "censorlab/util.hpp"

namespace censorlab::toml {

struct TomlError {
    uint32_t line = 0;
    std::string message;
};

struct Value {
    enum class Kind : uint8_t { string, integer, real, boolean, array, table } kind =
        Kind::table;
    std::string str;
    int64_t integer = 0;
    double real = 0;
    bool boolean = false;
    std::vector<Value> array;
    std::map<std::string, Value> table;

    bool is_table() const { return kind == Kind::table; }

    const Value* get(const std::string& key) const {
        if (kind != Kind::table) return nullptr;
        auto it = table.find(key);
        return it == table.end() ? nullptr : &it->second;
    }

    // Numeric accessor: integers promote to double.
    double as_number(double fallback = 0) const {
        if (kind == Kind::real) return real;
        if (kind == Kind::integer) return static_cast<double>(integer);
        return fallback;
    }

    std::string as_string(const std::string& fallback = "") const {
        return kind == Kind::string ? str : fallback;
    }

    int64_t as_int(int64_t fallback = 0) const {
        if (kind == Kind::integer) return integer;
        if (kind == Kind::real) return static_cast<int64_t>(real);
        return fallback;
    }

    bool as_bool(bool fallback = false) const {
        return kind == Kind::boolean ? boolean : fallback;
    }
};

namespace detail {

inline bool bare_key_char(char c) {
    return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') ||
           c == '_' || c == '-';
}

struct LineParser {
    std::string_view s;
    size_t i = 0;
    uint32_t line;

    void skip_ws() {
        while (i < s.size() && (s[i] == ' ' || s[i] == '\t')) ++i;
    }
    bool done() {
        skip_ws();
        return i >= s.size() || s[i] == '#';
    }

    Result<std::string, TomlError> parse_key() {
        skip_ws();
        if (i < s.size() && s[i] == '"') return parse_basic_string();
        size_t start = i;
        while (i < s.size() && bare_key_char(s[i])) ++i;
        if (i == start) return TomlError{line, "expected a key"};
        return std::string(s.substr(start, i - start));
    }

    Result<std::string, TomlError> parse_basic_string() {
        ++i;  // opening quote
        std::string out;
        while (i < s.size() && s[i] != '"') {
            char c = s[i++];
            if (c == '\\' && i < s.size()) {
                char e = s[i++];
                switch (e) {
                    case 'n': out += '\n'; break;
                    case 't': out += '\t'; break;
                    case 'r': out += '\r'; break;
                    case '"': out += '"'; break;
                    case '\\': out += '\\'; break;
                    default: return TomlError{line, "unsupported string escape"};
                }
            } else {
                out += c;
            }
        }
        if (i >= s.size()) return TomlError{line, "unterminated string"};
        ++i;  // closing quote
        return out;
    }

    Result<Value, TomlError> parse_value() {
        skip_ws();
        if (i >= s.size()) return TomlError{line, "expected a value"};
        char c = s[i];
        Value v;
        if (c == '"') {
            auto str = parse_basic_string();
            if (!str) return str.error();
            v.kind = Value::Kind::string;
            v.str = *str;
            return v;
        }
        if (c == '[') {
            ++i;
            v.kind = Value::Kind::array;
            skip_ws();
            if (i < s.size() && s[i] == ']') {
                ++i;
                return v;
            }
            for (;;) {
                auto elem = parse_value();
                if (!elem) return elem.error();
                v.array.push_back(std::move(*elem));
                skip_ws();
                if (i < s.size() && s[i] == ',') {
                    ++i;
                    continue;
                }
                if (i < s.size() && s[i] == ']') {
                    ++i;
                    return v;
                }
                return TomlError{line, "expected ',' or ']' in array"};
            }
        }
        // bare scalar: bool or number
        size_t start = i;
        while (i < s.size() && s[i] != ',' && s[i] != ']' && s[i] != '#' && s[i] != ' ' &&
               s[i] != '\t')
            ++i;
        std::string tok(s.substr(start, i - start));
        if (tok == "true" || tok == "false") {
            v.kind = Value::Kind::boolean;
            v.boolean = tok == "true";
            return v;
        }
        try {
            size_t used = 0;
            if (tok.find('.') == std::string::npos && tok.find('e') == std::string::npos &&
                tok.find('E') == std::string::npos) {
                v.kind = Value::Kind::integer;
                v.integer = std::stoll(tok, &used);
            } else {
                v.kind = Value::Kind::real;
                v.real = std::stod(tok, &used);
            }
            if (used != tok.size()) return TomlError{line, "malformed number: " + tok};
        } catch (...) {
            return TomlError{line, "unrecognized value: " + tok};
        }
        return v;
    }
};

} // namespace detail

inline Result<Value, TomlError> parse(std::string_view text) {
    Value root;
    Value* current = &root;
    uint32_t line_no = 0;
    size_t pos = 0;
    while (pos <= text.size()) {
        size_t eol = text.find('\n', pos);
        if (eol == std::string_view::npos) eol = text.size();
        std::string_view raw = text.substr(pos, eol - pos);
        pos = eol + 1;
        ++line_no;
        auto lineview = trim(raw);
        if (lineview.empty() || lineview.front() == '#') {
            if (pos > text.size()) break;
            continue;
        }

        detail::LineParser lp{lineview, 0, line_no};
        if (lineview.front() == '[') {
            // [table.path]
            lp.i = 1;
            current = &root;
            for (;;) {
                auto key = lp.parse_key();
                if (!key) return key.error();
                Value& child = current->table[*key];
                if (child.kind != Value::Kind::table && !child.table.empty())
                    return TomlError{line_no, "key redefined as table: " + *key};
                child.kind = Value::Kind::table;
                current = &child;
                lp.skip_ws();
                if (lp.i < lineview.size() && lineview[lp.i] == '.') {
                    ++lp.i;
                    continue;
                }
                break;
            }
            if (lp.i >= lineview.size() || lineview[lp.i] != ']')
                return TomlError{line_no, "missing ']' in table header"};
            ++lp.i;
            if (!lp.done()) return TomlError{line_no, "trailing content after table header"};
            continue;
        }

        auto key = lp.parse_key();
        if (!key) return key.error();
        lp.skip_ws();
        if (lp.i >= lineview.size() || lineview[lp.i] != '=')
            return TomlError{line_no, "expected '=' after key"};
        ++lp.i;
        auto value = lp.parse_value();
        if (!value) return value.error();
        if (!lp.done()) return TomlError{line_no, "trailing content after value"};
        if (current->table.count(*key))
            return TomlError{line_no, "duplicate key: " + *key};
        current->table[*key] = std::move(*value);
        if (pos > text.size()) break;
    }
    return root;
}

} // namespace censorlab::toml
