// Flow aggregation: normalized connection keys, per-connection state with
// the censor-program environment, and per-host register storage.
#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <unordered_map>
#include <vector>

#include "censorlab/action.hpp"
#include "censorlab/censorlang.hpp"
#include "censorlab/packet.hpp"

namespace censorlab {

// Normalized 5-tuple. The endpoint with the smaller port sorts first; equal
// ports fall back to address order so the key stays direction-independent.
struct ConnectionKey {
    IpAddr ip1, ip2;
    uint16_t port1 = 0, port2 = 0;
    uint8_t proto = 0;

    bool operator==(const ConnectionKey&) const = default;

    static ConnectionKey normalized(const IpAddr& src_ip, uint16_t src_port,
                                    const IpAddr& dst_ip, uint16_t dst_port,
                                    uint8_t proto) {
        ConnectionKey k;
        k.proto = proto;
        bool src_first;
        if (src_port < dst_port)
            src_first = true;
        else if (src_port > dst_port)
            src_first = false;
        else
            src_first = src_ip < dst_ip;
        if (src_first) {
            k.ip1 = src_ip;
            k.ip2 = dst_ip;
            k.port1 = src_port;
            k.port2 = dst_port;
        } else {
            k.ip1 = dst_ip;
            k.ip2 = src_ip;
            k.port1 = dst_port;
            k.port2 = src_port;
        }
        return k;
    }

    std::string to_string() const {
        const char* p = proto == kProtoTcp   ? "tcp"
                        : proto == kProtoUdp ? "udp"
                                             : "?";
        return ip1.to_string() + ":" + std::to_string(port1) + "-" + ip2.to_string() +
               ":" + std::to_string(port2) + "/" + p;
    }
};

struct ConnectionKeyHash {
    size_t operator()(const ConnectionKey& k) const {
        size_t h = std::hash<IpAddr>{}(k.ip1);
        hash_combine(h, std::hash<IpAddr>{}(k.ip2));
        hash_combine(h, k.port1);
        hash_combine(h, k.port2);
        hash_combine(h, k.proto);
        return h;
    }
};

enum class FlowErrc { no_transport_layer };

inline Result<ConnectionKey, FlowErrc> connection_key(const ParsedPacket& pkt) {
    if (!pkt.l4 || !pkt.ip) return FlowErrc::no_transport_layer;
    return ConnectionKey::normalized(pkt.ip->src_ip, pkt.l4->src_port, pkt.ip->dst_ip,
                                     pkt.l4->dst_port, pkt.ip->next_proto);
}

enum class Role : uint8_t { initiator, responder };

// Escalations latch for the life of the connection: once exempt or
// condemned, a connection never goes back.
enum class Override : uint8_t { none, exempt, condemned };

struct ConnectionState {
    ConnectionKey key;
    IpAddr initiator_ip;
    uint16_t initiator_port = 0;
    lang::Env env;
    Override verdict_override = Override::none;
    Action condemned_action = Action::drop();
    double created_at = 0;
    double last_seen = 0;
    uint64_t packet_count = 0;

    void escalate_exempt() {
        if (verdict_override == Override::none) verdict_override = Override::exempt;
    }
    void escalate_condemned(Action a) {
        if (verdict_override == Override::none) {
            verdict_override = Override::condemned;
            condemned_action = a;
        }
    }
};

// Registers shared by every connection touching a host, keyed by IP.
class HostStore {
public:
    lang::HostRegFile& file_for(const IpAddr& ip) { return hosts_[ip]; }
    size_t host_count() const { return hosts_.size(); }
    void clear() { hosts_.clear(); }

private:
    std::unordered_map<IpAddr, lang::HostRegFile> hosts_;
};

class FlowTable {
public:
    using EnvFactory = std::function<lang::Env(const ParsedPacket&)>;

    explicit FlowTable(double idle_timeout = 600.0, size_t max_connections = 0)
        : idle_timeout_(idle_timeout), max_connections_(max_connections) {}

    double idle_timeout() const { return idle_timeout_; }
    void set_idle_timeout(double seconds) { idle_timeout_ = seconds; }

    struct GetResult {
        ConnectionState* state = nullptr;
        bool is_new = false;
    };

    // Finds or creates the connection for the packet's key. On first sight
    // the initiator side is recorded and make_env runs the program's init
    // section. At the size cap the oldest connection is evicted first.
    GetResult get_or_create(const ConnectionKey& key, const ParsedPacket& pkt,
                            const EnvFactory& make_env) {
        auto it = table_.find(key);
        if (it != table_.end()) {
            it->second->last_seen = pkt.timestamp;
            ++it->second->packet_count;
            return {it->second.get(), false};
        }
        if (max_connections_ > 0 && table_.size() >= max_connections_) evict_oldest();
        auto state = std::make_unique<ConnectionState>();
        state->key = key;
        state->initiator_ip = pkt.ip->src_ip;
        state->initiator_port = pkt.l4->src_port;
        state->created_at = pkt.timestamp;
        state->last_seen = pkt.timestamp;
        state->packet_count = 1;
        if (make_env) state->env = make_env(pkt);
        ConnectionState* raw = state.get();
        table_.emplace(key, std::move(state));
        return {raw, true};
    }

    ConnectionState* find(const ConnectionKey& key) {
        auto it = table_.find(key);
        return it == table_.end() ? nullptr : it->second.get();
    }

    static Role direction(const ParsedPacket& pkt, const ConnectionState& state) {
        if (pkt.l4 && pkt.ip && pkt.l4->src_port == state.initiator_port &&
            pkt.ip->src_ip == state.initiator_ip)
            return Role::initiator;
        return Role::responder;
    }

    // Strict inequality: a connection idle exactly the timeout survives.
    size_t evict_idle(double now, double idle_timeout) {
        size_t evicted = 0;
        for (auto it = table_.begin(); it != table_.end();) {
            if (now - it->second->last_seen > idle_timeout) {
                it = table_.erase(it);
                ++evicted;
            } else {
                ++it;
            }
        }
        return evicted;
    }
    size_t evict_idle(double now) { return evict_idle(now, idle_timeout_); }

    size_t size() const { return table_.size(); }
    void clear() { table_.clear(); }

    template <typename F>
    void for_each(F&& f) const {
        for (const auto& [k, v] : table_) f(*v);
    }

private:
    void evict_oldest() {
        auto oldest = table_.begin();
        for (auto it = table_.begin(); it != table_.end(); ++it)
            if (it->second->last_seen < oldest->second->last_seen) oldest = it;
        if (oldest != table_.end()) table_.erase(oldest);
    }

    std::unordered_map<ConnectionKey, std::unique_ptr<ConnectionState>, ConnectionKeyHash>
        table_;
    double idle_timeout_ = 600.0;
    size_t max_connections_ = 0;  // 0 = unbounded
};

} // namespace censorlab
