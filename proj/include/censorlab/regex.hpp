// Byte-oriented regular expressions compiled to a Thompson NFA and run with
// a Pike VM, so matching is O(pattern * input) with no backtracking.
//
// Supported syntax: literals, '.', character classes with ranges/negation,
// escapes (\xNN, \n, \r, \t, \0, \d \D \w \W \s \S, escaped punctuation),
// anchors ^ $, quantifiers * + ? {m} {m,} {m,n}, groups, alternation.
// Patterns are unanchored unless they use ^; there are no backreferences.
#pragma once

#include <bitset>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "censorlab/util.hpp"

namespace censorlab {

struct RegexError {
    size_t pos = 0;
    std::string message;
};

class ByteRegex {
public:
    static Result<ByteRegex, RegexError> compile(std::string_view pattern) {
        Parser p;
        p.src = pattern;
        auto ast = p.parse_alt();
        if (!p.err.message.empty()) return p.err;
        if (p.pos != pattern.size())
            return RegexError{p.pos, "unexpected ')'"};
        ByteRegex re;
        re.pattern_ = std::string(pattern);
        Compiler c{re.prog_};
        if (!c.emit(*ast)) return RegexError{0, "pattern expands to too many states"};
        re.prog_.push_back({Op::match, 0, 0, {}});
        return re;
    }

    bool search(std::span<const uint8_t> data) const {
        // Thread lists of program counters, deduplicated per input position.
        std::vector<uint32_t> clist, nlist;
        std::vector<uint32_t> seen(prog_.size(), 0);
        uint32_t gen = 0;
        bool matched = false;

        auto add = [&](auto&& self, std::vector<uint32_t>& list, uint32_t pc,
                       size_t pos) -> void {
            if (seen[pc] == gen) return;
            seen[pc] = gen;
            const Inst& in = prog_[pc];
            switch (in.op) {
                case Op::jmp: self(self, list, in.x, pos); break;
                case Op::split:
                    self(self, list, in.x, pos);
                    self(self, list, in.y, pos);
                    break;
                case Op::assert_start:
                    if (pos == 0) self(self, list, in.x, pos);
                    break;
                case Op::assert_end:
                    if (pos == data.size()) self(self, list, in.x, pos);
                    break;
                case Op::match: matched = true; break;
                default: list.push_back(pc); break;
            }
        };

        for (size_t pos = 0; pos <= data.size(); ++pos) {
            ++gen;
            for (uint32_t pc : clist) {
                if (seen[pc] == gen) continue;
                seen[pc] = gen;
                nlist.push_back(pc);
            }
            clist.swap(nlist);
            nlist.clear();
            // Unanchored search: seed a fresh attempt at every offset.
            add(add, clist, 0, pos);
            if (matched) return true;
            if (pos == data.size()) break;
            uint8_t b = data[pos];
            ++gen;
            for (uint32_t pc : clist) {
                const Inst& in = prog_[pc];
                if (in.op == Op::any || (in.op == Op::byte_set && in.set.test(b)))
                    add(add, nlist, pc + 1, pos + 1);
            }
            clist.swap(nlist);
            nlist.clear();
            if (matched) return true;
        }
        return matched;
    }

    bool search(std::string_view s) const {
        return search(std::span<const uint8_t>(
            reinterpret_cast<const uint8_t*>(s.data()), s.size()));
    }

    const std::string& pattern() const { return pattern_; }

private:
    enum class Op : uint8_t { byte_set, any, split, jmp, assert_start, assert_end, match };
    struct Inst {
        Op op;
        uint32_t x = 0;
        uint32_t y = 0;
        std::bitset<256> set;
    };

    static constexpr size_t kMaxInsts = 1 << 17;

    // --- AST ---
    struct Node {
        enum class Kind { set, any, start, end, cat, alt, rep } kind;
        std::bitset<256> set;                 // set
        std::vector<Node> children;           // cat/alt/rep
        uint32_t rep_min = 0, rep_max = 0;    // rep; rep_max 0 means unbounded
    };

    struct Parser {
        std::string_view src;
        size_t pos = 0;
        RegexError err;
        int depth = 0;

        bool fail(std::string message) {
            if (err.message.empty()) err = {pos, std::move(message)};
            return false;
        }
        bool eof() const { return pos >= src.size(); }
        char peek() const { return src[pos]; }

        std::optional<Node> parse_alt() {
            if (++depth > 64) {
                fail("pattern nests too deeply");
                return std::nullopt;
            }
            Node alt{Node::Kind::alt, {}, {}, 0, 0};
            for (;;) {
                auto seq = parse_seq();
                if (!seq) return std::nullopt;
                alt.children.push_back(std::move(*seq));
                if (eof() || peek() != '|') break;
                ++pos;
            }
            --depth;
            if (alt.children.size() == 1) return std::move(alt.children[0]);
            return alt;
        }

        std::optional<Node> parse_seq() {
            Node cat{Node::Kind::cat, {}, {}, 0, 0};
            while (!eof() && peek() != '|' && peek() != ')') {
                auto atom = parse_atom();
                if (!atom) return std::nullopt;
                if (!parse_quantifier(*atom)) return std::nullopt;
                cat.children.push_back(std::move(*atom));
            }
            return cat;
        }

        std::optional<Node> parse_atom() {
            char c = peek();
            if (c == '(') {
                ++pos;
                auto inner = parse_alt();
                if (!inner) return std::nullopt;
                if (eof() || peek() != ')') {
                    fail("missing ')'");
                    return std::nullopt;
                }
                ++pos;
                return inner;
            }
            if (c == '[') return parse_class();
            if (c == '.') {
                ++pos;
                return Node{Node::Kind::any, {}, {}, 0, 0};
            }
            if (c == '^') {
                ++pos;
                return Node{Node::Kind::start, {}, {}, 0, 0};
            }
            if (c == '$') {
                ++pos;
                return Node{Node::Kind::end, {}, {}, 0, 0};
            }
            if (c == '*' || c == '+' || c == '?') {
                fail("quantifier with nothing to repeat");
                return std::nullopt;
            }
            std::bitset<256> set;
            if (c == '\\') {
                if (!parse_escape(set)) return std::nullopt;
            } else {
                ++pos;
                set.set(static_cast<uint8_t>(c));
            }
            return Node{Node::Kind::set, set, {}, 0, 0};
        }

        // Escape starting at '\'; fills the byte set.
        bool parse_escape(std::bitset<256>& set) {
            ++pos;  // consume backslash
            if (eof()) return fail("dangling escape");
            char c = src[pos++];
            auto lit = [&](uint8_t b) {
                set.set(b);
                return true;
            };
            switch (c) {
                case 'n': return lit('\n');
                case 'r': return lit('\r');
                case 't': return lit('\t');
                case 'f': return lit('\f');
                case 'v': return lit('\v');
                case '0': return lit(0);
                case 'x': {
                    if (pos + 2 > src.size()) return fail("\\x needs two hex digits");
                    int hi = hex_digit(src[pos]), lo = hex_digit(src[pos + 1]);
                    if (hi < 0 || lo < 0) return fail("\\x needs two hex digits");
                    pos += 2;
                    return lit(static_cast<uint8_t>(hi << 4 | lo));
                }
                case 'd':
                case 'D': {
                    for (int b = '0'; b <= '9'; ++b) set.set(static_cast<size_t>(b));
                    if (c == 'D') set.flip();
                    return true;
                }
                case 'w':
                case 'W': {
                    for (int b = 'a'; b <= 'z'; ++b) set.set(static_cast<size_t>(b));
                    for (int b = 'A'; b <= 'Z'; ++b) set.set(static_cast<size_t>(b));
                    for (int b = '0'; b <= '9'; ++b) set.set(static_cast<size_t>(b));
                    set.set('_');
                    if (c == 'W') set.flip();
                    return true;
                }
                case 's':
                case 'S': {
                    for (uint8_t b : {' ', '\t', '\n', '\r', '\f', '\v'}) set.set(b);
                    if (c == 'S') set.flip();
                    return true;
                }
                default:
                    if ((c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z'))
                        return fail("unknown escape");
                    return lit(static_cast<uint8_t>(c));
            }
        }

        static int hex_digit(char c) {
            if (c >= '0' && c <= '9') return c - '0';
            if (c >= 'a' && c <= 'f') return c - 'a' + 10;
            if (c >= 'A' && c <= 'F') return c - 'A' + 10;
            return -1;
        }

        std::optional<Node> parse_class() {
            ++pos;  // consume '['
            std::bitset<256> set;
            bool negate = false;
            if (!eof() && peek() == '^') {
                negate = true;
                ++pos;
            }
            bool first = true;
            while (!eof() && (peek() != ']' || first)) {
                first = false;
                uint8_t lo;
                std::bitset<256> esc;
                if (peek() == '\\') {
                    size_t before = esc.count();
                    if (!parse_escape(esc)) return std::nullopt;
                    if (esc.count() - before != 1) {  // class shorthand like \d
                        set |= esc;
                        continue;
                    }
                    lo = first_bit(esc);
                } else {
                    lo = static_cast<uint8_t>(src[pos++]);
                }
                if (!eof() && peek() == '-' && pos + 1 < src.size() && src[pos + 1] != ']') {
                    ++pos;  // consume '-'
                    uint8_t hi;
                    if (peek() == '\\') {
                        std::bitset<256> esc2;
                        if (!parse_escape(esc2)) return std::nullopt;
                        if (esc2.count() != 1) {
                            fail("invalid range endpoint");
                            return std::nullopt;
                        }
                        hi = first_bit(esc2);
                    } else {
                        hi = static_cast<uint8_t>(src[pos++]);
                    }
                    if (hi < lo) {
                        fail("range out of order");
                        return std::nullopt;
                    }
                    for (int b = lo; b <= hi; ++b) set.set(static_cast<size_t>(b));
                } else {
                    set.set(lo);
                }
            }
            if (eof()) {
                fail("missing ']'");
                return std::nullopt;
            }
            ++pos;  // consume ']'
            if (negate) set.flip();
            return Node{Node::Kind::set, set, {}, 0, 0};
        }

        static uint8_t first_bit(const std::bitset<256>& s) {
            for (size_t i = 0; i < 256; ++i)
                if (s.test(i)) return static_cast<uint8_t>(i);
            return 0;
        }

        bool parse_quantifier(Node& atom) {
            if (eof()) return true;
            char c = peek();
            uint32_t lo = 0, hi = 0;  // hi 0 = unbounded
            if (c == '*') {
                ++pos;
            } else if (c == '+') {
                ++pos;
                lo = 1;
            } else if (c == '?') {
                ++pos;
                hi = 1;
            } else if (c == '{') {
                size_t save = pos;
                ++pos;
                if (!parse_uint(lo)) {
                    pos = save;
                    return true;  // literal '{' has no digits after it
                }
                hi = lo;
                if (!eof() && peek() == ',') {
                    ++pos;
                    hi = 0;
                    if (!eof() && peek() != '}' && !parse_uint(hi))
                        return fail("bad repetition bound");
                }
                if (eof() || peek() != '}') return fail("missing '}'");
                ++pos;
                if (hi != 0 && hi < lo) return fail("repetition bounds out of order");
                if (lo > 1000 || hi > 1000) return fail("repetition count too large");
            } else {
                return true;
            }
            if (atom.kind == Node::Kind::start || atom.kind == Node::Kind::end)
                return fail("quantified anchor");
            Node rep{Node::Kind::rep, {}, {}, lo, hi};
            rep.children.push_back(std::move(atom));
            atom = std::move(rep);
            // Reject a second quantifier in a row ("a**").
            if (!eof() && (peek() == '*' || peek() == '+' || peek() == '?'))
                return fail("double quantifier");
            return true;
        }

        bool parse_uint(uint32_t& out) {
            if (eof() || peek() < '0' || peek() > '9') return false;
            uint64_t v = 0;
            while (!eof() && peek() >= '0' && peek() <= '9') {
                v = v * 10 + static_cast<uint64_t>(peek() - '0');
                if (v > 1'000'000) v = 1'000'001;
                ++pos;
            }
            out = static_cast<uint32_t>(v);
            return true;
        }
    };

    // --- compiler ---
    struct Compiler {
        std::vector<Inst>& prog;

        bool full() const { return prog.size() >= kMaxInsts; }

        bool emit(const Node& n) {
            if (full()) return false;
            switch (n.kind) {
                case Node::Kind::set:
                    prog.push_back({Op::byte_set, 0, 0, n.set});
                    return true;
                case Node::Kind::any:
                    prog.push_back({Op::any, 0, 0, {}});
                    return true;
                case Node::Kind::start:
                case Node::Kind::end: {
                    prog.push_back({n.kind == Node::Kind::start ? Op::assert_start
                                                                : Op::assert_end,
                                    0, 0, {}});
                    size_t at = prog.size() - 1;
                    prog[at].x = static_cast<uint32_t>(prog.size());
                    return true;
                }
                case Node::Kind::cat:
                    for (const Node& c : n.children)
                        if (!emit(c)) return false;
                    return true;
                case Node::Kind::alt: {
                    std::vector<size_t> jumps;
                    for (size_t i = 0; i < n.children.size(); ++i) {
                        if (i + 1 < n.children.size()) {
                            size_t sp = prog.size();
                            prog.push_back({Op::split, 0, 0, {}});
                            prog[sp].x = static_cast<uint32_t>(prog.size());
                            if (!emit(n.children[i])) return false;
                            jumps.push_back(prog.size());
                            prog.push_back({Op::jmp, 0, 0, {}});
                            prog[sp].y = static_cast<uint32_t>(prog.size());
                        } else {
                            if (!emit(n.children[i])) return false;
                        }
                    }
                    for (size_t j : jumps) prog[j].x = static_cast<uint32_t>(prog.size());
                    return true;
                }
                case Node::Kind::rep: return emit_rep(n);
            }
            return false;
        }

        bool emit_rep(const Node& n) {
            const Node& inner = n.children[0];
            for (uint32_t i = 0; i < n.rep_min; ++i)
                if (full() || !emit(inner)) return false;
            if (n.rep_max == 0) {
                // unbounded tail: L: split(body, out); body; jmp L
                size_t sp = prog.size();
                prog.push_back({Op::split, 0, 0, {}});
                prog[sp].x = static_cast<uint32_t>(prog.size());
                if (!emit(inner)) return false;
                prog.push_back({Op::jmp, static_cast<uint32_t>(sp), 0, {}});
                prog[sp].y = static_cast<uint32_t>(prog.size());
                return true;
            }
            // bounded optional tail
            std::vector<size_t> splits;
            for (uint32_t i = n.rep_min; i < n.rep_max; ++i) {
                size_t sp = prog.size();
                prog.push_back({Op::split, 0, 0, {}});
                prog[sp].x = static_cast<uint32_t>(prog.size());
                splits.push_back(sp);
                if (full() || !emit(inner)) return false;
            }
            for (size_t sp : splits) prog[sp].y = static_cast<uint32_t>(prog.size());
            return true;
        }
    };

    std::vector<Inst> prog_;
    std::string pattern_;
};

} // namespace censorlab
