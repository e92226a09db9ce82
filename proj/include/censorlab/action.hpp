// Per-packet verdict vocabulary: None, Accept, Drop, Reset(N), Delay(s).
#pragma once

#include <cstdint>
#include <optional>
#include <string>

#include "censorlab/util.hpp"

namespace censorlab {

enum class ActionKind : uint8_t { none, accept, drop, reset, delay };

struct Action {
    ActionKind kind = ActionKind::none;
    uint32_t reset_count = 1;   // reset: n >= 1
    double delay_seconds = 0;   // delay: >= 0

    static Action none() { return {ActionKind::none}; }
    static Action accept() { return {ActionKind::accept}; }
    static Action drop() { return {ActionKind::drop}; }
    static Action reset(uint32_t n = 1) { return {ActionKind::reset, n < 1 ? 1 : n}; }
    static Action delay(double seconds) {
        Action a{ActionKind::delay};
        a.delay_seconds = seconds < 0 ? 0 : seconds;
        return a;
    }

    bool operator==(const Action&) const = default;

    bool is_interfering() const {
        return kind == ActionKind::drop || kind == ActionKind::reset ||
               kind == ActionKind::delay;
    }

    std::string to_string() const {
        switch (kind) {
            case ActionKind::none: return "none";
            case ActionKind::accept: return "accept";
            case ActionKind::drop: return "drop";
            case ActionKind::reset: return "reset(" + std::to_string(reset_count) + ")";
            case ActionKind::delay: {
                char buf[32];
                std::snprintf(buf, sizeof buf, "delay:%g", delay_seconds);
                return buf;
            }
        }
        return "?";
    }
};

// Accepts the config/IPC spellings: none|ignore, accept|allow, drop,
// reset, reset(N), delay:SECONDS.
inline std::optional<Action> parse_action(std::string_view token) {
    std::string t = to_lower(trim(token));
    if (t == "none" || t == "ignore") return Action::none();
    if (t == "accept" || t == "allow") return Action::accept();
    if (t == "drop") return Action::drop();
    if (t == "reset") return Action::reset(1);
    if (t.rfind("reset(", 0) == 0 && t.back() == ')') {
        try {
            long n = std::stol(t.substr(6, t.size() - 7));
            if (n < 1) return std::nullopt;
            return Action::reset(static_cast<uint32_t>(n));
        } catch (...) {
            return std::nullopt;
        }
    }
    if (t.rfind("delay:", 0) == 0) {
        try {
            double s = std::stod(t.substr(6));
            if (s < 0) return std::nullopt;
            return Action::delay(s);
        } catch (...) {
            return std::nullopt;
        }
    }
    return std::nullopt;
}

} // namespace censorlab
