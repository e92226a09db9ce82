// Line-oriented event log: one record per line, fixed field order
// (ts, pkt, conn, stage, action, fault) so runs can be diffed.
#pragma once

#include <cstdint>
#include <cstdio>
#include <fstream>
#include <mutex>
#include <string>
#include <vector>

namespace censorlab {

struct EventRecord {
    double ts = 0;
    uint64_t pkt = 0;          // 1-based packet ordinal within the run
    std::string conn;          // empty when no connection applies
    std::string stage;
    std::string action;
    std::string fault;

    std::string to_line() const {
        char head[64];
        std::snprintf(head, sizeof head, "ts=%.6f pkt=%llu", ts,
                      static_cast<unsigned long long>(pkt));
        std::string line = head;
        line += " conn=" + (conn.empty() ? "-" : conn);
        line += " stage=" + stage;
        line += " action=" + action;
        if (!fault.empty()) {
            std::string f = fault;
            for (char& c : f)
                if (c == '\n' || c == '"') c = ' ';
            line += " fault=\"" + f + "\"";
        }
        return line;
    }
};

class EventLog {
public:
    void open_file(const std::string& path) {
        std::lock_guard lock(mu_);
        if (!path.empty()) file_.open(path, std::ios::app);
    }

    void emit(EventRecord rec) {
        std::lock_guard lock(mu_);
        if (file_.is_open()) file_ << rec.to_line() << '\n' << std::flush;
        records_.push_back(std::move(rec));
    }

    std::vector<EventRecord> records() const {
        std::lock_guard lock(mu_);
        return records_;
    }

    std::vector<std::string> lines() const {
        std::lock_guard lock(mu_);
        std::vector<std::string> out;
        out.reserve(records_.size());
        for (const auto& r : records_) out.push_back(r.to_line());
        return out;
    }

    size_t size() const {
        std::lock_guard lock(mu_);
        return records_.size();
    }

    void clear() {
        std::lock_guard lock(mu_);
        records_.clear();
    }

private:
    mutable std::mutex mu_;
    std::vector<EventRecord> records_;
    std::ofstream file_;
};

} // namespace censorlab
