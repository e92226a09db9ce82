// CensorLang: the loop-free register DSL for per-connection censor programs.
//
// A program is a list of straight-line statements. Everything before the
// `process:` label runs once when a connection is created; the rest runs
// once per packet. A statement is an operation with an optional guard:
//
//   REGEX tls = "^[\x16\x17]\x03[\x00-\x09]"
//   COPY 0 -> reg:u32:0
//   process:
//   if reg:u32:0 GEQ 10: RETURN drop
//   INC reg:u32:0
//
// Registers are typed and indexed (reg:u32:0); `src`/`dst` registers live in
// per-host state, `model:<name>:in/out:<i>` are f32 scratch for ML models.
// Runtime faults never abort the pipeline: operations fall back to Accept,
// conditions to false, with the fault recorded.
#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

#include "censorlab/action.hpp"
#include "censorlab/models.hpp"
#include "censorlab/packet.hpp"
#include "censorlab/regex.hpp"
#include "censorlab/util.hpp"

namespace censorlab::lang {

// ---------------------------------------------------------------- registers

enum class RegClass : uint8_t { conn, src, dst, model_in, model_out };
enum class RegType : uint8_t { f32, f64, i32, u32, i64, u64, b };

inline size_t reg_type_width(RegType t) {
    switch (t) {
        case RegType::f32:
        case RegType::i32:
        case RegType::u32: return 4;
        case RegType::f64:
        case RegType::i64:
        case RegType::u64: return 8;
        case RegType::b: return 1;
    }
    return 0;
}

inline const char* to_string(RegType t) {
    switch (t) {
        case RegType::f32: return "f32";
        case RegType::f64: return "f64";
        case RegType::i32: return "i32";
        case RegType::u32: return "u32";
        case RegType::i64: return "i64";
        case RegType::u64: return "u64";
        case RegType::b: return "b";
    }
    return "?";
}

inline std::optional<RegType> parse_reg_type(std::string_view s) {
    if (s == "f32") return RegType::f32;
    if (s == "f64") return RegType::f64;
    if (s == "i32") return RegType::i32;
    if (s == "u32") return RegType::u32;
    if (s == "i64") return RegType::i64;
    if (s == "u64") return RegType::u64;
    if (s == "b") return RegType::b;
    return std::nullopt;
}

struct RegisterRef {
    RegClass cls = RegClass::conn;
    RegType type = RegType::u32;  // model registers are always f32
    uint32_t index = 0;
    std::string model;  // model_in / model_out only

    bool operator==(const RegisterRef&) const = default;

    std::string to_string() const {
        switch (cls) {
            case RegClass::conn:
                return std::string("reg:") + lang::to_string(type) + ":" +
                       std::to_string(index);
            case RegClass::src:
                return std::string("src:") + lang::to_string(type) + ":" +
                       std::to_string(index);
            case RegClass::dst:
                return std::string("dst:") + lang::to_string(type) + ":" +
                       std::to_string(index);
            case RegClass::model_in:
                return "model:" + model + ":in:" + std::to_string(index);
            case RegClass::model_out:
                return "model:" + model + ":out:" + std::to_string(index);
        }
        return "?";
    }
};

// ------------------------------------------------------------------- values

struct Value {
    enum class Kind : uint8_t { f, i, u, b } kind = Kind::i;
    double f = 0;
    int64_t i = 0;
    uint64_t u = 0;
    bool bv = false;

    static Value from_f(double v) { return {Kind::f, v, 0, 0, false}; }
    static Value from_i(int64_t v) { return {Kind::i, 0, v, 0, false}; }
    static Value from_u(uint64_t v) { return {Kind::u, 0, 0, v, false}; }
    static Value from_b(bool v) { return {Kind::b, 0, 0, 0, v}; }

    bool is_float() const { return kind == Kind::f; }
    bool is_bool() const { return kind == Kind::b; }

    double as_f64() const {
        switch (kind) {
            case Kind::f: return f;
            case Kind::i: return static_cast<double>(i);
            case Kind::u: return static_cast<double>(u);
            case Kind::b: return bv ? 1.0 : 0.0;
        }
        return 0;
    }

    int64_t as_i64_sat() const {
        switch (kind) {
            case Kind::f: {
                if (std::isnan(f)) return 0;
                if (f >= 9.2233720368547758e18) return std::numeric_limits<int64_t>::max();
                if (f <= -9.2233720368547758e18) return std::numeric_limits<int64_t>::min();
                return static_cast<int64_t>(f);
            }
            case Kind::i: return i;
            case Kind::u:
                return u > static_cast<uint64_t>(std::numeric_limits<int64_t>::max())
                           ? std::numeric_limits<int64_t>::max()
                           : static_cast<int64_t>(u);
            case Kind::b: return bv ? 1 : 0;
        }
        return 0;
    }

    uint64_t as_u64_sat() const {
        switch (kind) {
            case Kind::f: {
                if (std::isnan(f) || f <= 0) return 0;
                if (f >= 1.8446744073709552e19) return std::numeric_limits<uint64_t>::max();
                return static_cast<uint64_t>(f);
            }
            case Kind::i: return i < 0 ? 0 : static_cast<uint64_t>(i);
            case Kind::u: return u;
            case Kind::b: return bv ? 1 : 0;
        }
        return 0;
    }

    bool truthy() const {
        switch (kind) {
            case Kind::f: return f != 0;
            case Kind::i: return i != 0;
            case Kind::u: return u != 0;
            case Kind::b: return bv;
        }
        return false;
    }

    std::string to_string() const {
        char buf[40];
        switch (kind) {
            case Kind::f: std::snprintf(buf, sizeof buf, "%g", f); return buf;
            case Kind::i: return std::to_string(i);
            case Kind::u: return std::to_string(u);
            case Kind::b: return bv ? "true" : "false";
        }
        return "?";
    }
};

// Zero of a declared register type.
inline Value zero_value(RegType t) {
    switch (t) {
        case RegType::f32:
        case RegType::f64: return Value::from_f(0.0);
        case RegType::i32:
        case RegType::i64: return Value::from_i(0);
        case RegType::u32:
        case RegType::u64: return Value::from_u(0);
        case RegType::b: return Value::from_b(false);
    }
    return Value::from_i(0);
}

// Saturating coercion of an arbitrary value into a declared register type.
inline Value coerce_to(RegType t, const Value& v) {
    switch (t) {
        case RegType::f32: return Value::from_f(static_cast<float>(v.as_f64()));
        case RegType::f64: return Value::from_f(v.as_f64());
        case RegType::i32: {
            int64_t x = v.as_i64_sat();
            if (x > std::numeric_limits<int32_t>::max()) x = std::numeric_limits<int32_t>::max();
            if (x < std::numeric_limits<int32_t>::min()) x = std::numeric_limits<int32_t>::min();
            return Value::from_i(x);
        }
        case RegType::i64: return Value::from_i(v.as_i64_sat());
        case RegType::u32: {
            uint64_t x = v.as_u64_sat();
            if (x > std::numeric_limits<uint32_t>::max()) x = std::numeric_limits<uint32_t>::max();
            return Value::from_u(x);
        }
        case RegType::u64: return Value::from_u(v.as_u64_sat());
        case RegType::b: return Value::from_b(v.truthy());
    }
    return v;
}

// --------------------------------------------------------------- PacketView

enum class Field : uint8_t {
    payload_len,
    payload_popcount,
    payload_printable,
    payload_printable_run,
    payload_printable_prefix,
    direction,
    tcp_src,
    tcp_dst,
    udp_src,
    udp_dst,
    tcp_flag_syn,
    tcp_flag_ack,
    tcp_flag_fin,
    tcp_flag_rst,
    ip_ttl,
    conn_packet_count,
};

inline std::optional<Field> parse_field(std::string_view name) {
    if (name == "payload.len") return Field::payload_len;
    if (name == "payload.popcount") return Field::payload_popcount;
    if (name == "payload.printable") return Field::payload_printable;
    if (name == "payload.printable_run") return Field::payload_printable_run;
    if (name == "payload.printable_prefix") return Field::payload_printable_prefix;
    if (name == "direction") return Field::direction;
    if (name == "tcp.src") return Field::tcp_src;
    if (name == "tcp.dst") return Field::tcp_dst;
    if (name == "udp.src") return Field::udp_src;
    if (name == "udp.dst") return Field::udp_dst;
    if (name == "tcp.flags.syn") return Field::tcp_flag_syn;
    if (name == "tcp.flags.ack") return Field::tcp_flag_ack;
    if (name == "tcp.flags.fin") return Field::tcp_flag_fin;
    if (name == "tcp.flags.rst") return Field::tcp_flag_rst;
    if (name == "ip.ttl") return Field::ip_ttl;
    if (name == "conn.packet_count") return Field::conn_packet_count;
    return std::nullopt;
}

// Read-only packet facts exposed to programs. Null pkt means "no packet in
// scope" (the init section); every field then reads 0 with a fault.
struct PacketView {
    const ParsedPacket* pkt = nullptr;
    int direction = 0;           // 0 = initiator, 1 = responder
    uint64_t packet_count = 0;   // connection packets seen, current included

    // ok is cleared when the field is unavailable on this packet.
    Value field(Field f, bool& ok) const {
        ok = true;
        if (!pkt) {
            ok = false;
            return Value::from_u(0);
        }
        bool tcp = pkt->l4 && pkt->l4->proto == kProtoTcp;
        bool udp = pkt->l4 && pkt->l4->proto == kProtoUdp;
        switch (f) {
            case Field::payload_len: return Value::from_u(pkt->stats.len);
            case Field::payload_popcount: return Value::from_u(pkt->stats.popcount_sum);
            case Field::payload_printable: return Value::from_u(pkt->stats.printable_count);
            case Field::payload_printable_run:
                return Value::from_u(pkt->stats.printable_run_max);
            case Field::payload_printable_prefix:
                return Value::from_u(pkt->stats.printable_prefix_len);
            case Field::direction: return Value::from_u(direction == 0 ? 0 : 1);
            case Field::conn_packet_count: return Value::from_u(packet_count);
            case Field::ip_ttl:
                if (!pkt->ip) break;
                return Value::from_u(pkt->ip->ttl);
            case Field::tcp_src:
                if (!tcp) break;
                return Value::from_u(pkt->l4->src_port);
            case Field::tcp_dst:
                if (!tcp) break;
                return Value::from_u(pkt->l4->dst_port);
            case Field::udp_src:
                if (!udp) break;
                return Value::from_u(pkt->l4->src_port);
            case Field::udp_dst:
                if (!udp) break;
                return Value::from_u(pkt->l4->dst_port);
            case Field::tcp_flag_syn:
                if (!tcp) break;
                return Value::from_b(pkt->l4->flags.syn);
            case Field::tcp_flag_ack:
                if (!tcp) break;
                return Value::from_b(pkt->l4->flags.ack);
            case Field::tcp_flag_fin:
                if (!tcp) break;
                return Value::from_b(pkt->l4->flags.fin);
            case Field::tcp_flag_rst:
                if (!tcp) break;
                return Value::from_b(pkt->l4->flags.rst);
        }
        ok = false;
        return Value::from_u(0);
    }

    std::span<const uint8_t> payload() const {
        if (pkt && pkt->l4) return pkt->l4->payload;
        return {};
    }
};

// ---------------------------------------------------------------- program IR

enum class Opcode : uint8_t { copy, add, sub, mul, div, mod, band, bor, bxor, ret, model };

inline const char* to_string(Opcode op) {
    switch (op) {
        case Opcode::copy: return "COPY";
        case Opcode::add: return "ADD";
        case Opcode::sub: return "SUB";
        case Opcode::mul: return "MUL";
        case Opcode::div: return "DIV";
        case Opcode::mod: return "MOD";
        case Opcode::band: return "AND";
        case Opcode::bor: return "OR";
        case Opcode::bxor: return "XOR";
        case Opcode::ret: return "RETURN";
        case Opcode::model: return "MODEL";
    }
    return "?";
}

enum class Escalation : uint8_t { none, allow_all, drop_all };

struct Operand {
    enum class Kind : uint8_t { literal, field, reg } kind = Kind::literal;
    Value literal;
    Field field = Field::payload_len;
    uint32_t reg = 0;  // index into Program::registers
};

enum class CmpOp : uint8_t { lt, le, ne, eq, ge, gt, logical_and, logical_or, logical_xor };

struct Condition {
    bool is_regex = false;
    uint32_t regex_slot = 0;
    CmpOp op = CmpOp::eq;
    Operand lhs, rhs;
};

struct Operation {
    Opcode op = Opcode::copy;
    Operand a, b;            // copy uses a only
    uint32_t dst = 0;        // register table index
    Action ret_action;       // ret only
    Escalation ret_esc = Escalation::none;
    uint32_t model_slot = 0; // model only
};

struct Statement {
    std::optional<Condition> guard;
    Operation op;
    uint32_t line = 0;
};

struct ParseDiag {
    enum class Kind : uint8_t {
        syntax,
        missing_process_label,
        unknown_field,
        unknown_model,
        bad_model_index,
    } kind = Kind::syntax;
    uint32_t line = 0;
    uint32_t col = 0;
    std::string message;
};

struct ModelBinding {
    std::string name;
    uint32_t max_in_index = 0;   // highest register index referenced
    uint32_t max_out_index = 0;
    bool bound = false;
    size_t input_len = 0;        // from the model store, after bind
    size_t output_len = 0;
};

struct CostTable {
    std::map<std::string, double> weights;  // opcode mnemonic -> weight
    double weight_for(Opcode op) const {
        auto it = weights.find(to_string(op));
        return it == weights.end() ? 1.0 : it->second;
    }
};

struct AnalysisReport {
    size_t state_bytes = 0;        // per-connection `reg` registers
    size_t host_state_bytes = 0;   // src/dst registers, kept per host
    size_t model_state_bytes = 0;  // f32 scratch for referenced models
    std::map<std::string, size_t> op_histogram;
    double cost = 0;
    std::vector<std::string> models_used;
    size_t max_ops_per_packet = 0;  // guarded + unguarded ops in process section
};

// ------------------------------------------------------------------ parsing

namespace detail {

struct Token {
    enum class Kind : uint8_t { ident, number, string, sym, end } kind = Kind::end;
    std::string text;
    uint32_t col = 0;
    bool is_float = false;
    double fval = 0;
    int64_t ival = 0;
};

inline bool ident_char(char c) {
    return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') ||
           c == '_' || c == '.';
}

// Tokenize one statement (newlines already removed).
inline Result<std::vector<Token>, ParseDiag> tokenize(const std::string& text,
                                                      uint32_t line) {
    std::vector<Token> out;
    size_t i = 0;
    auto diag = [&](std::string msg) {
        return ParseDiag{ParseDiag::Kind::syntax, line, static_cast<uint32_t>(i + 1),
                         std::move(msg)};
    };
    while (i < text.size()) {
        char c = text[i];
        if (c == ' ' || c == '\t') {
            ++i;
            continue;
        }
        uint32_t col = static_cast<uint32_t>(i + 1);
        if (c == '"') {
            std::string s;
            ++i;
            bool closed = false;
            while (i < text.size()) {
                if (text[i] == '\\' && i + 1 < text.size() && text[i + 1] == '"') {
                    s += "\\\"";
                    i += 2;
                } else if (text[i] == '"') {
                    ++i;
                    closed = true;
                    break;
                } else {
                    s += text[i++];
                }
            }
            if (!closed) return diag("unterminated string");
            out.push_back({Token::Kind::string, s, col});
            continue;
        }
        if (text.compare(i, 2, "->") == 0) {
            out.push_back({Token::Kind::sym, "->", col});
            i += 2;
            continue;
        }
        auto two = text.substr(i, 2);
        if (two == "<=" || two == ">=" || two == "==" || two == "!=") {
            out.push_back({Token::Kind::sym, two, col});
            i += 2;
            continue;
        }
        if (c == ',' || c == ':' || c == '(' || c == ')' || c == '=' || c == '<' ||
            c == '>' || c == '.') {
            out.push_back({Token::Kind::sym, std::string(1, c), col});
            ++i;
            continue;
        }
        bool neg = (c == '-' || c == '+') && i + 1 < text.size() &&
                   (std::isdigit(static_cast<unsigned char>(text[i + 1])) ||
                    text[i + 1] == '.');
        if (std::isdigit(static_cast<unsigned char>(c)) || neg) {
            size_t start = i;
            if (neg) ++i;
            while (i < text.size() && std::isdigit(static_cast<unsigned char>(text[i]))) ++i;
            bool is_float = false;
            if (i < text.size() && text[i] == '.' && i + 1 < text.size() &&
                std::isdigit(static_cast<unsigned char>(text[i + 1]))) {
                is_float = true;
                ++i;
                while (i < text.size() && std::isdigit(static_cast<unsigned char>(text[i])))
                    ++i;
            }
            if (i < text.size() && (text[i] == 'e' || text[i] == 'E')) {
                size_t j = i + 1;
                if (j < text.size() && (text[j] == '+' || text[j] == '-')) ++j;
                if (j < text.size() && std::isdigit(static_cast<unsigned char>(text[j]))) {
                    is_float = true;
                    i = j;
                    while (i < text.size() &&
                           std::isdigit(static_cast<unsigned char>(text[i])))
                        ++i;
                }
            }
            Token t{Token::Kind::number, text.substr(start, i - start), col};
            t.is_float = is_float;
            try {
                if (is_float)
                    t.fval = std::stod(t.text);
                else
                    t.ival = std::stoll(t.text);
            } catch (...) {
                return diag("number out of range: " + t.text);
            }
            out.push_back(std::move(t));
            continue;
        }
        if (ident_char(c) && !std::isdigit(static_cast<unsigned char>(c))) {
            size_t start = i;
            while (i < text.size() && ident_char(text[i])) ++i;
            out.push_back({Token::Kind::ident, text.substr(start, i - start), col});
            continue;
        }
        return diag(std::string("unexpected character '") + c + "'");
    }
    out.push_back({Token::Kind::end, "", static_cast<uint32_t>(text.size() + 1)});
    return out;
}

} // namespace detail

class Env;

class Program {
public:
    std::vector<Statement> init_ops;
    std::vector<Statement> process_ops;
    std::vector<std::pair<std::string, ByteRegex>> regexes;
    std::vector<RegisterRef> registers;       // operands index into this table
    std::vector<ModelBinding> model_bindings; // one per referenced model

    static Result<Program, ParseDiag> parse(std::string_view source);

    // Resolves referenced models against the store: they must exist and the
    // referenced in/out register indices must fit the declared shapes.
    Result<Unit, ParseDiag> bind_models(const ModelStore& store) {
        for (auto& mb : model_bindings) {
            auto handle = store.get(mb.name);
            if (!handle)
                return ParseDiag{ParseDiag::Kind::unknown_model, 0, 0,
                                 "model not loaded: " + mb.name};
            if (mb.max_in_index >= handle->input_len)
                return ParseDiag{ParseDiag::Kind::bad_model_index, 0, 0,
                                 "model:" + mb.name + ":in:" +
                                     std::to_string(mb.max_in_index) + " exceeds input length " +
                                     std::to_string(handle->input_len)};
            if (mb.max_out_index >= handle->output_len)
                return ParseDiag{ParseDiag::Kind::bad_model_index, 0, 0,
                                 "model:" + mb.name + ":out:" +
                                     std::to_string(mb.max_out_index) +
                                     " exceeds output length " +
                                     std::to_string(handle->output_len)};
            mb.bound = true;
            mb.input_len = handle->input_len;
            mb.output_len = handle->output_len;
        }
        return Unit{};
    }

    std::set<std::string> referenced_models() const {
        std::set<std::string> out;
        for (const auto& mb : model_bindings) out.insert(mb.name);
        return out;
    }

    // Dense slot for each per-connection register, assigned in table order.
    uint32_t conn_slot(uint32_t reg_index) const { return conn_slots_[reg_index]; }
    size_t conn_reg_count() const { return conn_reg_count_; }

    AnalysisReport analyze(const CostTable& costs = {}) const {
        AnalysisReport r;
        std::set<std::pair<RegType, uint32_t>> conn_seen, host_seen;
        for (const auto& reg : registers) {
            switch (reg.cls) {
                case RegClass::conn:
                    if (conn_seen.insert({reg.type, reg.index}).second)
                        r.state_bytes += reg_type_width(reg.type);
                    break;
                case RegClass::src:
                case RegClass::dst:
                    if (host_seen.insert({reg.type, reg.index}).second)
                        r.host_state_bytes += reg_type_width(reg.type);
                    break;
                case RegClass::model_in:
                case RegClass::model_out: break;  // accounted via bindings below
            }
        }
        for (const auto& mb : model_bindings) {
            r.models_used.push_back(mb.name);
            // f32 scratch for the full declared shape once bound, otherwise
            // for the registers the program names.
            size_t regs = mb.bound ? mb.input_len + mb.output_len
                                   : static_cast<size_t>(mb.max_in_index) + 1 +
                                         mb.max_out_index + 1;
            r.model_state_bytes += 4 * regs;
        }
        auto count = [&](const std::vector<Statement>& ops) {
            for (const auto& st : ops) {
                ++r.op_histogram[to_string(st.op.op)];
                r.cost += costs.weight_for(st.op.op);
            }
        };
        count(init_ops);
        count(process_ops);
        r.max_ops_per_packet = process_ops.size();
        return r;
    }

private:
    friend class Env;
    std::vector<uint32_t> conn_slots_;
    size_t conn_reg_count_ = 0;

    void assign_slots() {
        conn_slots_.assign(registers.size(), 0);
        uint32_t next = 0;
        for (size_t i = 0; i < registers.size(); ++i)
            if (registers[i].cls == RegClass::conn) conn_slots_[i] = next++;
        conn_reg_count_ = next;
    }
};

// ---------------------------------------------------------------- parser

namespace detail {

// Token cursor over one statement.
struct Cursor {
    const std::vector<Token>& toks;
    size_t i = 0;
    uint32_t line;

    const Token& peek(size_t k = 0) const {
        size_t j = i + k;
        return j < toks.size() ? toks[j] : toks.back();
    }
    const Token& next() { return toks[i < toks.size() - 1 ? i++ : i]; }
    bool at_end() const { return peek().kind == Token::Kind::end; }

    bool accept_sym(std::string_view s) {
        if (peek().kind == Token::Kind::sym && peek().text == s) {
            next();
            return true;
        }
        return false;
    }

    ParseDiag diag(std::string msg) const {
        return ParseDiag{ParseDiag::Kind::syntax, line, peek().col, std::move(msg)};
    }
};

struct ProgramBuilder {
    Program prog;

    uint32_t intern_register(const RegisterRef& ref) {
        for (uint32_t i = 0; i < prog.registers.size(); ++i)
            if (prog.registers[i] == ref) return i;
        prog.registers.push_back(ref);
        if (ref.cls == RegClass::model_in || ref.cls == RegClass::model_out) {
            auto& mb = model_binding(ref.model);
            if (ref.cls == RegClass::model_in)
                mb.max_in_index = std::max(mb.max_in_index, ref.index);
            else
                mb.max_out_index = std::max(mb.max_out_index, ref.index);
        }
        return static_cast<uint32_t>(prog.registers.size() - 1);
    }

    ModelBinding& model_binding(const std::string& name) {
        for (auto& mb : prog.model_bindings)
            if (mb.name == name) return mb;
        prog.model_bindings.push_back(ModelBinding{name});
        return prog.model_bindings.back();
    }

    uint32_t model_slot(const std::string& name) {
        model_binding(name);
        for (uint32_t i = 0; i < prog.model_bindings.size(); ++i)
            if (prog.model_bindings[i].name == name) return i;
        return 0;
    }

    std::optional<uint32_t> regex_slot(const std::string& name) const {
        for (uint32_t i = 0; i < prog.regexes.size(); ++i)
            if (prog.regexes[i].first == name) return i;
        return std::nullopt;
    }

    // reg:u32:0 | reg:0.u32 | src:... | dst:... | model:name:in:0
    Result<uint32_t, ParseDiag> parse_register(Cursor& c) {
        const Token& head = c.peek();
        if (head.kind != Token::Kind::ident) return c.diag("expected a register");
        std::string cls = to_lower(head.text);
        RegisterRef ref;
        if (cls == "reg" || cls == "src" || cls == "dst") {
            ref.cls = cls == "reg"   ? RegClass::conn
                      : cls == "src" ? RegClass::src
                                     : RegClass::dst;
            c.next();
            if (!c.accept_sym(":")) return c.diag("expected ':' after register class");
            if (c.peek().kind == Token::Kind::ident) {
                // canonical class:type:index
                auto type = parse_reg_type(c.peek().text);
                if (!type) return c.diag("unknown register type: " + c.peek().text);
                c.next();
                ref.type = *type;
                if (!c.accept_sym(":")) return c.diag("expected ':' before register index");
                if (c.peek().kind != Token::Kind::number || c.peek().is_float ||
                    c.peek().ival < 0)
                    return c.diag("register index must be an unsigned integer");
                ref.index = static_cast<uint32_t>(c.next().ival);
            } else if (c.peek().kind == Token::Kind::number) {
                // class:index.type (accepted alternate spelling)
                if (c.peek().is_float || c.peek().ival < 0)
                    return c.diag("register index must be an unsigned integer");
                ref.index = static_cast<uint32_t>(c.next().ival);
                if (!c.accept_sym(".")) return c.diag("expected '.' before register type");
                auto type = c.peek().kind == Token::Kind::ident
                                ? parse_reg_type(c.peek().text)
                                : std::nullopt;
                if (!type) return c.diag("unknown register type");
                c.next();
                ref.type = *type;
            } else {
                return c.diag("malformed register");
            }
            return intern_register(ref);
        }
        if (cls == "model") {
            c.next();
            if (!c.accept_sym(":")) return c.diag("expected ':' after 'model'");
            if (c.peek().kind != Token::Kind::ident) return c.diag("expected model name");
            ref.model = c.next().text;
            if (!c.accept_sym(":")) return c.diag("expected ':' after model name");
            if (c.peek().kind != Token::Kind::ident) return c.diag("expected 'in' or 'out'");
            std::string dir = to_lower(c.next().text);
            if (dir != "in" && dir != "out") return c.diag("expected 'in' or 'out'");
            ref.cls = dir == "in" ? RegClass::model_in : RegClass::model_out;
            ref.type = RegType::f32;  // model registers carry 32-bit floats
            if (!c.accept_sym(":")) return c.diag("expected ':' before model register index");
            if (c.peek().kind != Token::Kind::number || c.peek().is_float ||
                c.peek().ival < 0)
                return c.diag("model register index must be an unsigned integer");
            ref.index = static_cast<uint32_t>(c.next().ival);
            return intern_register(ref);
        }
        return c.diag("expected a register");
    }

    static bool looks_like_register(const Cursor& c) {
        if (c.peek().kind != Token::Kind::ident) return false;
        std::string t = to_lower(c.peek().text);
        return (t == "reg" || t == "src" || t == "dst" || t == "model") &&
               c.peek(1).kind == Token::Kind::sym && c.peek(1).text == ":";
    }

    Result<Operand, ParseDiag> parse_operand(Cursor& c) {
        Operand o;
        const Token& t = c.peek();
        if (t.kind == Token::Kind::number) {
            o.kind = Operand::Kind::literal;
            o.literal = t.is_float ? Value::from_f(t.fval) : Value::from_i(t.ival);
            c.next();
            return o;
        }
        if (t.kind == Token::Kind::ident) {
            std::string low = to_lower(t.text);
            if (low == "true" || low == "false") {
                o.kind = Operand::Kind::literal;
                o.literal = Value::from_b(low == "true");
                c.next();
                return o;
            }
            if (low == "field") {
                c.next();
                if (!c.accept_sym(":")) return c.diag("expected ':' after 'field'");
                if (c.peek().kind != Token::Kind::ident)
                    return c.diag("expected a field name");
                auto f = parse_field(c.peek().text);
                if (!f)
                    return ParseDiag{ParseDiag::Kind::unknown_field, c.line, c.peek().col,
                                     "unknown field: " + c.peek().text};
                c.next();
                o.kind = Operand::Kind::field;
                o.field = *f;
                return o;
            }
            if (looks_like_register(c)) {
                auto reg = parse_register(c);
                if (!reg) return reg.error();
                o.kind = Operand::Kind::reg;
                o.reg = *reg;
                return o;
            }
        }
        return c.diag("expected a literal, field, or register");
    }

    static std::optional<CmpOp> parse_cmp(const Token& t) {
        if (t.kind == Token::Kind::sym) {
            if (t.text == "<") return CmpOp::lt;
            if (t.text == "<=") return CmpOp::le;
            if (t.text == "!=") return CmpOp::ne;
            if (t.text == "==") return CmpOp::eq;
            if (t.text == ">=") return CmpOp::ge;
            if (t.text == ">") return CmpOp::gt;
            return std::nullopt;
        }
        if (t.kind != Token::Kind::ident) return std::nullopt;
        std::string s = to_lower(t.text);
        if (s == "lt") return CmpOp::lt;
        if (s == "leq") return CmpOp::le;
        if (s == "neq") return CmpOp::ne;
        if (s == "eq") return CmpOp::eq;
        if (s == "geq") return CmpOp::ge;
        if (s == "gt") return CmpOp::gt;
        if (s == "and") return CmpOp::logical_and;
        if (s == "or") return CmpOp::logical_or;
        if (s == "xor") return CmpOp::logical_xor;
        return std::nullopt;
    }

    Result<Condition, ParseDiag> parse_condition(Cursor& c) {
        Condition cond;
        if (c.peek().kind == Token::Kind::ident && to_lower(c.peek().text) == "regex") {
            c.next();
            if (c.peek().kind != Token::Kind::ident)
                return c.diag("expected a regex name after REGEX");
            auto slot = regex_slot(c.peek().text);
            if (!slot) return c.diag("regex was never declared: " + c.peek().text);
            c.next();
            cond.is_regex = true;
            cond.regex_slot = *slot;
            return cond;
        }
        auto lhs = parse_operand(c);
        if (!lhs) return lhs.error();
        auto op = parse_cmp(c.peek());
        if (!op) return c.diag("expected a comparison operator");
        c.next();
        auto rhs = parse_operand(c);
        if (!rhs) return rhs.error();
        cond.lhs = *lhs;
        cond.op = *op;
        cond.rhs = *rhs;
        return cond;
    }

    Result<Action, ParseDiag> parse_action_tokens(Cursor& c, Escalation& esc) {
        if (c.peek().kind != Token::Kind::ident) return c.diag("expected an action");
        std::string name = to_lower(c.next().text);
        esc = Escalation::none;
        if (name == "allow" || name == "accept") return Action::accept();
        if (name == "ignore" || name == "none") return Action::none();
        if (name == "drop") return Action::drop();
        if (name == "allow_all") {
            esc = Escalation::allow_all;
            return Action::accept();
        }
        if (name == "drop_all") {
            esc = Escalation::drop_all;
            return Action::drop();
        }
        if (name == "reset") {
            uint32_t n = 1;
            if (c.accept_sym("(")) {
                if (c.peek().kind != Token::Kind::number || c.peek().is_float ||
                    c.peek().ival < 1)
                    return c.diag("reset count must be a positive integer");
                n = static_cast<uint32_t>(c.next().ival);
                if (!c.accept_sym(")")) return c.diag("expected ')'");
            }
            return Action::reset(n);
        }
        if (name == "delay") {
            if (!c.accept_sym(":")) return c.diag("expected ':' after delay");
            if (c.peek().kind != Token::Kind::number)
                return c.diag("expected a delay in seconds");
            const Token& t = c.next();
            double seconds = t.is_float ? t.fval : static_cast<double>(t.ival);
            if (seconds < 0) return c.diag("delay must be non-negative");
            return Action::delay(seconds);
        }
        return c.diag("unknown action: " + name);
    }

    Result<Operation, ParseDiag> parse_operation(Cursor& c) {
        if (c.peek().kind != Token::Kind::ident) return c.diag("expected an operation");
        std::string mn = to_lower(c.peek().text);
        Operation op;

        auto arith = [&](Opcode code) -> Result<Operation, ParseDiag> {
            c.next();
            op.op = code;
            auto a = parse_operand(c);
            if (!a) return a.error();
            if (!c.accept_sym(",")) return c.diag("expected ',' between operands");
            auto b = parse_operand(c);
            if (!b) return b.error();
            if (!c.accept_sym("->")) return c.diag("expected '->' before the destination");
            auto dst = parse_register(c);
            if (!dst) return dst.error();
            op.a = *a;
            op.b = *b;
            op.dst = *dst;
            return op;
        };

        if (mn == "add") return arith(Opcode::add);
        if (mn == "sub") return arith(Opcode::sub);
        if (mn == "mul") return arith(Opcode::mul);
        if (mn == "div") return arith(Opcode::div);
        if (mn == "mod") return arith(Opcode::mod);
        if (mn == "and") return arith(Opcode::band);
        if (mn == "or") return arith(Opcode::bor);
        if (mn == "xor") return arith(Opcode::bxor);

        if (mn == "copy") {
            c.next();
            op.op = Opcode::copy;
            auto a = parse_operand(c);
            if (!a) return a.error();
            if (c.accept_sym("->")) {
                auto dst = parse_register(c);
                if (!dst) return dst.error();
                op.a = *a;
                op.dst = *dst;
                return op;
            }
            // Two-operand spelling: the register operand is the destination;
            // with two registers the second one is.
            auto b = parse_operand(c);
            if (!b) return b.error();
            if (b->kind == Operand::Kind::reg) {
                op.a = *a;
                op.dst = b->reg;
                return op;
            }
            if (a->kind == Operand::Kind::reg) {
                op.a = *b;
                op.dst = a->reg;
                return op;
            }
            return c.diag("COPY needs a register destination");
        }
        if (mn == "inc") {
            c.next();
            auto reg = parse_register(c);
            if (!reg) return reg.error();
            op.op = Opcode::add;
            op.a = Operand{Operand::Kind::reg, {}, Field::payload_len, *reg};
            op.b = Operand{Operand::Kind::literal, Value::from_i(1)};
            op.dst = *reg;
            return op;
        }
        if (mn == "return") {
            c.next();
            op.op = Opcode::ret;
            auto action = parse_action_tokens(c, op.ret_esc);
            if (!action) return action.error();
            op.ret_action = *action;
            return op;
        }
        if (mn == "model") {
            c.next();
            if (c.peek().kind != Token::Kind::ident) return c.diag("expected a model name");
            op.op = Opcode::model;
            op.model_slot = model_slot(c.next().text);
            return op;
        }
        return c.diag("unknown operation: " + c.peek().text);
    }
};

// Comment- and quote-aware split of the source into (line, statement) pairs.
inline std::vector<std::pair<uint32_t, std::string>> split_statements(
    std::string_view source) {
    std::vector<std::pair<uint32_t, std::string>> out;
    uint32_t line = 1;
    std::string cur;
    bool in_string = false;
    auto flush = [&](uint32_t at) {
        auto t = trim(cur);
        if (!t.empty()) out.emplace_back(at, std::string(t));
        cur.clear();
    };
    for (size_t i = 0; i < source.size(); ++i) {
        char ch = source[i];
        if (ch == '\n') {
            flush(line);
            ++line;
            in_string = false;
            continue;
        }
        if (in_string) {
            cur += ch;
            if (ch == '\\' && i + 1 < source.size() && source[i + 1] == '"')
                cur += source[++i];
            else if (ch == '"')
                in_string = false;
            continue;
        }
        if (ch == '"') {
            in_string = true;
            cur += ch;
            continue;
        }
        if (ch == '#') {  // comment to end of line
            while (i + 1 < source.size() && source[i + 1] != '\n') ++i;
            continue;
        }
        if (ch == ';') {
            flush(line);
            continue;
        }
        cur += ch;
    }
    flush(line);
    return out;
}

} // namespace detail

inline Result<Program, ParseDiag> Program::parse(std::string_view source) {
    detail::ProgramBuilder b;
    bool seen_process = false;
    bool seen_operation = false;
    struct Pending {
        bool active = false;
        Condition cond;
        uint32_t line = 0;
    } pending_guard;

    auto statements = detail::split_statements(source);
    for (const auto& [line, text] : statements) {
        auto toks = detail::tokenize(text, line);
        if (!toks) return toks.error();
        detail::Cursor c{*toks, 0, line};
        if (c.at_end()) continue;

        // process label
        if (c.peek().kind == detail::Token::Kind::ident && c.peek().text == "process" &&
            c.peek(1).kind == detail::Token::Kind::sym && c.peek(1).text == ":" &&
            c.peek(2).kind == detail::Token::Kind::end) {
            if (pending_guard.active)
                return c.diag("guard has no operation before 'process:'");
            if (seen_process) return c.diag("duplicate 'process:' label");
            seen_process = true;
            continue;
        }

        // REGEX name = "pattern" declarations, in the header only
        if (c.peek().kind == detail::Token::Kind::ident &&
            to_lower(c.peek().text) == "regex" &&
            c.peek(1).kind == detail::Token::Kind::ident &&
            c.peek(2).kind == detail::Token::Kind::sym && c.peek(2).text == "=") {
            if (seen_process || seen_operation || pending_guard.active)
                return c.diag("regex declarations must precede all operations");
            c.next();
            std::string name = c.next().text;
            c.next();  // '='
            if (c.peek().kind != detail::Token::Kind::string)
                return c.diag("expected a quoted pattern");
            std::string pattern = c.next().text;
            if (!c.at_end()) return c.diag("trailing tokens after regex declaration");
            if (b.regex_slot(name))
                return c.diag("regex declared twice: " + name);
            auto re = ByteRegex::compile(pattern);
            if (!re)
                return ParseDiag{ParseDiag::Kind::syntax, line, c.peek().col,
                                 "bad regex '" + name + "': " + re.error().message};
            b.prog.regexes.emplace_back(name, std::move(*re));
            continue;
        }

        Statement st;
        st.line = line;

        if (pending_guard.active) {
            // This statement is the operation governed by the previous line's
            // dangling `if cond:`.
            if (c.peek().kind == detail::Token::Kind::ident &&
                to_lower(c.peek().text) == "if")
                return c.diag("a guard cannot govern another guard");
            auto op = b.parse_operation(c);
            if (!op) return op.error();
            if (!c.at_end()) return c.diag("trailing tokens after operation");
            st.guard = pending_guard.cond;
            st.line = pending_guard.line;
            st.op = *op;
            pending_guard = Pending{};
        } else if (c.peek().kind == detail::Token::Kind::ident &&
                   to_lower(c.peek().text) == "if") {
            c.next();
            auto cond = b.parse_condition(c);
            if (!cond) return cond.error();
            if (!c.accept_sym(":")) return c.diag("expected ':' after the condition");
            if (c.at_end()) {
                pending_guard = Pending{true, *cond, line};
                continue;
            }
            auto op = b.parse_operation(c);
            if (!op) return op.error();
            if (!c.at_end()) return c.diag("trailing tokens after operation");
            st.guard = *cond;
            st.op = *op;
        } else {
            auto op = b.parse_operation(c);
            if (!op) return op.error();
            if (!c.at_end()) return c.diag("trailing tokens after operation");
            st.op = *op;
        }

        seen_operation = true;
        if (!seen_process && st.op.op == Opcode::ret)
            return ParseDiag{ParseDiag::Kind::syntax, st.line, 1,
                             "RETURN is not allowed in the init section"};
        (seen_process ? b.prog.process_ops : b.prog.init_ops).push_back(std::move(st));
    }

    if (pending_guard.active)
        return ParseDiag{ParseDiag::Kind::syntax, pending_guard.line, 1,
                         "guard has no operation"};
    if (!seen_process)
        return ParseDiag{ParseDiag::Kind::missing_process_label, 0, 0,
                         "program has no 'process:' label"};

    b.prog.assign_slots();
    return std::move(b.prog);
}

// Host registers, keyed by (type, index); shared by connections via the host
// state store in flows.hpp.
using HostRegFile = std::unordered_map<uint64_t, Value>;

inline uint64_t host_reg_key(RegType t, uint32_t index) {
    return static_cast<uint64_t>(t) << 32 | index;
}

struct HostBinding {
    HostRegFile* src = nullptr;
    HostRegFile* dst = nullptr;
};

struct ExecOutcome {
    Action action = Action::accept();
    Escalation escalation = Escalation::none;
    std::vector<std::string> faults;
    uint32_t ops_executed = 0;
};

struct EnvError {
    std::string missing_model;
};

// Per-connection program state: the referenced `reg` registers plus f32
// scratch for each referenced model. Allocated only for what the program
// names, so the analyzer's byte accounting is exact.
class Env {
public:
    Env() = default;

    std::vector<Value> conn_regs;
    struct ModelScratch {
        std::vector<float> in, out;
    };
    std::vector<ModelScratch> model_scratch;

    static Result<Env, EnvError> create(const Program& prog, const ModelStore* store) {
        Env env;
        env.conn_regs.reserve(prog.conn_reg_count());
        for (size_t i = 0; i < prog.registers.size(); ++i)
            if (prog.registers[i].cls == RegClass::conn)
                env.conn_regs.push_back(zero_value(prog.registers[i].type));
        for (const auto& mb : prog.model_bindings) {
            if (!store || !store->get(mb.name)) return EnvError{mb.name};
            auto handle = store->get(mb.name);
            Env::ModelScratch s;
            s.in.assign(handle->input_len, 0.0f);
            s.out.assign(handle->output_len, 0.0f);
            env.model_scratch.push_back(std::move(s));
        }
        return env;
    }
};

// ------------------------------------------------------------- interpreter

namespace detail {

struct ExecCtx {
    Env& env;
    const Program& prog;
    const PacketView& view;
    const HostBinding& hosts;
    const ModelStore* models;
    ExecOutcome& out;

    Value read_reg(uint32_t idx) {
        const RegisterRef& ref = prog.registers[idx];
        switch (ref.cls) {
            case RegClass::conn: return env.conn_regs[prog.conn_slot(idx)];
            case RegClass::src:
            case RegClass::dst: {
                HostRegFile* file = ref.cls == RegClass::src ? hosts.src : hosts.dst;
                if (!file) {
                    out.faults.push_back("host register read without a bound host: " +
                                         ref.to_string());
                    return zero_value(ref.type);
                }
                auto it = file->find(host_reg_key(ref.type, ref.index));
                return it == file->end() ? zero_value(ref.type) : it->second;
            }
            case RegClass::model_in:
            case RegClass::model_out: {
                const auto& scratch = env.model_scratch[model_slot_of(ref)];
                const auto& vec =
                    ref.cls == RegClass::model_in ? scratch.in : scratch.out;
                if (ref.index >= vec.size()) return Value::from_f(0.0);
                return Value::from_f(vec[ref.index]);
            }
        }
        return Value::from_i(0);
    }

    bool write_reg(uint32_t idx, const Value& v) {
        const RegisterRef& ref = prog.registers[idx];
        switch (ref.cls) {
            case RegClass::conn:
                env.conn_regs[prog.conn_slot(idx)] = coerce_to(ref.type, v);
                return true;
            case RegClass::src:
            case RegClass::dst: {
                HostRegFile* file = ref.cls == RegClass::src ? hosts.src : hosts.dst;
                if (!file) {
                    out.faults.push_back("host register write without a bound host: " +
                                         ref.to_string());
                    return false;
                }
                (*file)[host_reg_key(ref.type, ref.index)] = coerce_to(ref.type, v);
                return true;
            }
            case RegClass::model_in: {
                auto& vec = env.model_scratch[model_slot_of(ref)].in;
                if (ref.index >= vec.size()) {
                    out.faults.push_back("model in-register out of range: " +
                                         ref.to_string());
                    return false;
                }
                vec[ref.index] = static_cast<float>(v.as_f64());
                return true;
            }
            case RegClass::model_out:
                out.faults.push_back("model out-registers are read-only: " +
                                     ref.to_string());
                return false;
        }
        return false;
    }

    uint32_t model_slot_of(const RegisterRef& ref) const {
        for (uint32_t i = 0; i < prog.model_bindings.size(); ++i)
            if (prog.model_bindings[i].name == ref.model) return i;
        return 0;  // unreachable: parser registers every referenced model
    }

    // ok cleared on fault (field unavailable).
    Value operand(const Operand& o, bool& ok) {
        ok = true;
        switch (o.kind) {
            case Operand::Kind::literal: return o.literal;
            case Operand::Kind::reg: return read_reg(o.reg);
            case Operand::Kind::field: {
                bool field_ok = true;
                Value v = view.field(o.field, field_ok);
                if (!field_ok)
                    out.faults.push_back("field unavailable on this packet; read as 0");
                return v;  // unavailable fields read as zero, execution continues
            }
        }
        return Value::from_i(0);
    }

    static int compare_numeric(const Value& a, const Value& b) {
        if (a.is_float() || b.is_float()) {
            double x = a.as_f64(), y = b.as_f64();
            if (x < y) return -1;
            if (x > y) return 1;
            return 0;
        }
        // Integer compare without precision loss: handle mixed signedness.
        bool a_neg = a.kind == Value::Kind::i && a.i < 0;
        bool b_neg = b.kind == Value::Kind::i && b.i < 0;
        if (a_neg != b_neg) return a_neg ? -1 : 1;
        if (a_neg) return a.i < b.i ? -1 : a.i > b.i ? 1 : 0;
        uint64_t x = a.as_u64_sat(), y = b.as_u64_sat();
        return x < y ? -1 : x > y ? 1 : 0;
    }

    bool eval_condition(const Condition& c) {
        if (c.is_regex) return prog.regexes[c.regex_slot].second.search(view.payload());
        bool ok_a = true, ok_b = true;
        Value a = operand(c.lhs, ok_a);
        Value b = operand(c.rhs, ok_b);
        switch (c.op) {
            case CmpOp::logical_and:
            case CmpOp::logical_or:
            case CmpOp::logical_xor: {
                if (!a.is_bool() || !b.is_bool()) {
                    out.faults.push_back("and/or/xor need boolean operands");
                    return false;
                }
                if (c.op == CmpOp::logical_and) return a.bv && b.bv;
                if (c.op == CmpOp::logical_or) return a.bv || b.bv;
                return a.bv != b.bv;
            }
            default: break;
        }
        int cmp = compare_numeric(a, b);
        switch (c.op) {
            case CmpOp::lt: return cmp < 0;
            case CmpOp::le: return cmp <= 0;
            case CmpOp::ne: return cmp != 0;
            case CmpOp::eq: return cmp == 0;
            case CmpOp::ge: return cmp >= 0;
            case CmpOp::gt: return cmp > 0;
            default: return false;
        }
    }

    static int64_t sat_i64(__int128 v) {
        if (v > std::numeric_limits<int64_t>::max()) return std::numeric_limits<int64_t>::max();
        if (v < std::numeric_limits<int64_t>::min()) return std::numeric_limits<int64_t>::min();
        return static_cast<int64_t>(v);
    }

    // Executes one operation; returns false when the program must terminate
    // (RETURN, or a fault that degrades to Accept).
    bool exec_op(const Operation& op) {
        ++out.ops_executed;
        switch (op.op) {
            case Opcode::ret:
                out.action = op.ret_action;
                out.escalation = op.ret_esc;
                return false;
            case Opcode::copy: {
                bool ok = true;
                Value v = operand(op.a, ok);
                write_reg(op.dst, v);
                return true;
            }
            case Opcode::model: return exec_model(op);
            default: break;
        }

        bool ok_a = true, ok_b = true;
        Value a = operand(op.a, ok_a);
        Value b = operand(op.b, ok_b);
        Value result;
        bool boolean_bitop = a.is_bool() && b.is_bool() &&
                             (op.op == Opcode::band || op.op == Opcode::bor ||
                              op.op == Opcode::bxor);
        if (boolean_bitop) {
            bool x = a.bv, y = b.bv;
            result = Value::from_b(op.op == Opcode::band   ? x && y
                                   : op.op == Opcode::bor  ? x || y
                                                           : x != y);
        } else if (a.is_float() || b.is_float()) {
            double x = a.as_f64(), y = b.as_f64();
            switch (op.op) {
                case Opcode::add: result = Value::from_f(x + y); break;
                case Opcode::sub: result = Value::from_f(x - y); break;
                case Opcode::mul: result = Value::from_f(x * y); break;
                case Opcode::div: result = Value::from_f(x / y); break;
                case Opcode::mod: result = Value::from_f(std::fmod(x, y)); break;
                case Opcode::band:
                case Opcode::bor:
                case Opcode::bxor:
                    out.faults.push_back("bitwise operation on float operands");
                    out.action = Action::accept();
                    return false;
                default: return false;
            }
        } else {
            int64_t x = a.as_i64_sat(), y = b.as_i64_sat();
            switch (op.op) {
                case Opcode::add: result = Value::from_i(sat_i64(static_cast<__int128>(x) + y)); break;
                case Opcode::sub: result = Value::from_i(sat_i64(static_cast<__int128>(x) - y)); break;
                case Opcode::mul: result = Value::from_i(sat_i64(static_cast<__int128>(x) * y)); break;
                case Opcode::div:
                case Opcode::mod:
                    if (y == 0) {
                        out.faults.push_back("division by zero");
                        out.action = Action::accept();
                        return false;
                    }
                    result = Value::from_i(op.op == Opcode::div ? x / y : x % y);
                    break;
                case Opcode::band:
                    result = Value::from_i(static_cast<int64_t>(
                        static_cast<uint64_t>(x) & static_cast<uint64_t>(y)));
                    break;
                case Opcode::bor:
                    result = Value::from_i(static_cast<int64_t>(
                        static_cast<uint64_t>(x) | static_cast<uint64_t>(y)));
                    break;
                case Opcode::bxor:
                    result = Value::from_i(static_cast<int64_t>(
                        static_cast<uint64_t>(x) ^ static_cast<uint64_t>(y)));
                    break;
                default: return false;
            }
        }
        write_reg(op.dst, result);
        return true;
    }

    bool exec_model(const Operation& op) {
        const ModelBinding& mb = prog.model_bindings[op.model_slot];
        auto& scratch = env.model_scratch[op.model_slot];
        if (!models) {
            out.faults.push_back("no model store attached");
            out.action = Action::accept();
            return false;
        }
        auto result = models->run(mb.name, scratch.in);
        if (!result) {
            out.faults.push_back("MODEL " + mb.name + ": " +
                                 std::string(to_string(result.error().code)) +
                                 (result.error().message.empty()
                                      ? ""
                                      : " (" + result.error().message + ")"));
            out.action = Action::accept();
            return false;
        }
        if (result->size() != scratch.out.size()) {
            out.faults.push_back("MODEL " + mb.name + ": output shape changed");
            out.action = Action::accept();
            return false;
        }
        scratch.out = *result;
        return true;
    }

    void run(const std::vector<Statement>& ops) {
        for (const auto& st : ops) {
            if (st.guard && !eval_condition(*st.guard)) continue;
            if (!exec_op(st.op)) return;
        }
    }
};

} // namespace detail

// Runs the per-packet section. Falling off the end accepts the packet.
inline ExecOutcome execute(Env& env, const Program& prog, const PacketView& view,
                           const HostBinding& hosts = {},
                           const ModelStore* models = nullptr) {
    ExecOutcome out;
    detail::ExecCtx ctx{env, prog, view, hosts, models, out};
    ctx.run(prog.process_ops);
    return out;
}

// Allocates registers and runs the init section once.
inline Result<Env, EnvError> new_env(const Program& prog, const ModelStore* models,
                                     const HostBinding& hosts = {},
                                     std::vector<std::string>* faults = nullptr) {
    auto env = Env::create(prog, models);
    if (!env) return env.error();
    ExecOutcome scratch;
    PacketView no_packet;  // fields are unavailable during init
    detail::ExecCtx ctx{*env, prog, no_packet, hosts, models, scratch};
    ctx.run(prog.init_ops);
    if (faults)
        faults->insert(faults->end(), scratch.faults.begin(), scratch.faults.end());
    return env;
}

// Exposed for tests: evaluates one condition against an environment.
inline bool eval_condition(Env& env, const Program& prog, const PacketView& view,
                           const Condition& cond, const HostBinding& hosts = {},
                           const ModelStore* models = nullptr,
                           std::vector<std::string>* faults = nullptr) {
    ExecOutcome out;
    detail::ExecCtx ctx{env, prog, view, hosts, models, out};
    bool r = ctx.eval_condition(cond);
    if (faults) faults->insert(faults->end(), out.faults.begin(), out.faults.end());
    return r;
}

// One line per named register with its current value, for the debug dump.
inline std::vector<std::string> format_registers(const Program& prog, const Env& env) {
    std::vector<std::string> out;
    for (size_t i = 0; i < prog.registers.size(); ++i) {
        const auto& ref = prog.registers[i];
        if (ref.cls == RegClass::conn) {
            out.push_back(ref.to_string() + "=" +
                          env.conn_regs[prog.conn_slot(static_cast<uint32_t>(i))].to_string());
        }
    }
    for (size_t s = 0; s < prog.model_bindings.size(); ++s) {
        const auto& mb = prog.model_bindings[s];
        const auto& scratch = env.model_scratch[s];
        for (size_t i = 0; i < scratch.in.size(); ++i)
            out.push_back("model:" + mb.name + ":in:" + std::to_string(i) + "=" +
                          std::to_string(scratch.in[i]));
        for (size_t i = 0; i < scratch.out.size(); ++i)
            out.push_back("model:" + mb.name + ":out:" + std::to_string(i) + "=" +
                          std::to_string(scratch.out[i]));
    }
    return out;
}

} // namespace censorlab::lang
