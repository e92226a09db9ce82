// Allow/blocklists over the identifier classes of each layer:
// MAC, IP, IP subnet, port, (IP, port) service, 5-tuple connection.
//
// Blocklists are evaluated before allowlists; an allowlist with zero entries
// is disabled so a default configuration passes all traffic.
#pragma once

#include <algorithm>
#include <cstdint>
#include <memory>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <vector>

#include "censorlab/action.hpp"
#include "censorlab/net.hpp"
#include "censorlab/util.hpp"

namespace censorlab {

enum class IdClass : uint8_t {
    mac,
    ip,
    ip_subnet,
    tcp_port,
    udp_port,
    tcp_service,
    udp_service,
    tcp_connection,
    udp_connection,
};

inline const char* to_string(IdClass c) {
    switch (c) {
        case IdClass::mac: return "mac";
        case IdClass::ip: return "ip";
        case IdClass::ip_subnet: return "ip-subnet";
        case IdClass::tcp_port: return "tcp-port";
        case IdClass::udp_port: return "udp-port";
        case IdClass::tcp_service: return "tcp-service";
        case IdClass::udp_service: return "udp-service";
        case IdClass::tcp_connection: return "tcp-connection";
        case IdClass::udp_connection: return "udp-connection";
    }
    return "?";
}

inline std::optional<IdClass> parse_id_class(std::string_view name) {
    std::string n = to_lower(trim(name));
    if (n == "mac") return IdClass::mac;
    if (n == "ip") return IdClass::ip;
    if (n == "ip-subnet") return IdClass::ip_subnet;
    if (n == "tcp-port") return IdClass::tcp_port;
    if (n == "udp-port") return IdClass::udp_port;
    if (n == "tcp-service") return IdClass::tcp_service;
    if (n == "udp-service") return IdClass::udp_service;
    if (n == "tcp-connection") return IdClass::tcp_connection;
    if (n == "udp-connection") return IdClass::udp_connection;
    return std::nullopt;
}

struct ServiceId {
    IpAddr ip;
    uint16_t port = 0;
    bool operator==(const ServiceId&) const = default;
};

// Normalized per the flow-aggregation ordering, so one entry covers both
// packet directions.
struct ConnectionId {
    IpAddr ip1, ip2;
    uint16_t port1 = 0, port2 = 0;
    bool operator==(const ConnectionId&) const = default;

    static ConnectionId normalized(const IpAddr& a_ip, uint16_t a_port, const IpAddr& b_ip,
                                   uint16_t b_port) {
        ConnectionId c;
        if (endpoint_sorts_first(a_ip, a_port, b_ip, b_port)) {
            c.ip1 = a_ip;
            c.port1 = a_port;
            c.ip2 = b_ip;
            c.port2 = b_port;
        } else {
            c.ip1 = b_ip;
            c.port1 = b_port;
            c.ip2 = a_ip;
            c.port2 = a_port;
        }
        return c;
    }
};

struct ServiceIdHash {
    size_t operator()(const ServiceId& s) const {
        size_t h = std::hash<IpAddr>{}(s.ip);
        hash_combine(h, s.port);
        return h;
    }
};

struct ConnectionIdHash {
    size_t operator()(const ConnectionId& c) const {
        size_t h = std::hash<IpAddr>{}(c.ip1);
        hash_combine(h, std::hash<IpAddr>{}(c.ip2));
        hash_combine(h, c.port1);
        hash_combine(h, c.port2);
        return h;
    }
};

// Binary trie keyed on address bits; membership is containment by any
// stored prefix.
class SubnetTrie {
public:
    void insert(const Subnet& s) {
        Node* n = root(s.addr.is_v4);
        for (size_t i = 0; i < s.prefix_len; ++i) {
            auto& child = n->child[s.addr.bit(i) ? 1 : 0];
            if (!child) child = std::make_unique<Node>();
            n = child.get();
        }
        n->terminal = true;
        entries_.insert(s.to_string());
    }

    bool erase(const Subnet& s) {
        if (entries_.erase(s.to_string()) == 0) return false;
        Node* n = root(s.addr.is_v4);
        for (size_t i = 0; i < s.prefix_len && n; ++i)
            n = n->child[s.addr.bit(i) ? 1 : 0].get();
        if (n) n->terminal = false;  // dead branches are kept; lists are small
        return true;
    }

    bool contains_prefix_of(const IpAddr& ip) const {
        const Node* n = ip.is_v4 ? &v4_ : &v6_;
        size_t bits = ip.is_v4 ? 32 : 128;
        for (size_t i = 0; i <= bits; ++i) {
            if (n->terminal) return true;
            if (i == bits) break;
            n = n->child[ip.bit(i) ? 1 : 0].get();
            if (!n) return false;
        }
        return false;
    }

    size_t size() const { return entries_.size(); }
    bool empty() const { return entries_.empty(); }
    const std::set<std::string>& entries() const { return entries_; }

    void clear() {
        v4_ = Node{};
        v6_ = Node{};
        entries_.clear();
    }

private:
    struct Node {
        std::unique_ptr<Node> child[2];
        bool terminal = false;
    };
    Node* root(bool v4) { return v4 ? &v4_ : &v6_; }
    Node v4_, v6_;
    std::set<std::string> entries_;
};

// One identifier value, shaped by its class.
struct Identifier {
    IdClass cls = IdClass::ip;
    MacAddr mac;
    IpAddr ip;
    Subnet subnet;   // only as a list entry, never as a packet identifier
    uint16_t port = 0;
    ServiceId service;
    ConnectionId connection;

    static Identifier of_mac(MacAddr m) {
        Identifier id;
        id.cls = IdClass::mac;
        id.mac = m;
        return id;
    }
    static Identifier of_ip(IpAddr a) {
        Identifier id;
        id.cls = IdClass::ip;
        id.ip = a;
        return id;
    }
    static Identifier of_subnet(IdClass cls, Subnet s) {
        Identifier id;
        id.cls = cls;
        id.subnet = s;
        return id;
    }
    static Identifier of_port(IdClass cls, uint16_t p) {
        Identifier id;
        id.cls = cls;
        id.port = p;
        return id;
    }
    static Identifier of_service(IdClass cls, ServiceId s) {
        Identifier id;
        id.cls = cls;
        id.service = s;
        return id;
    }
    static Identifier of_connection(IdClass cls, ConnectionId c) {
        Identifier id;
        id.cls = cls;
        id.connection = c;
        return id;
    }
    // Probe for subnet lists: an address tested against the stored prefixes.
    static Identifier of_subnet_match(IpAddr a) {
        Identifier id;
        id.cls = IdClass::ip_subnet;
        id.ip = a;
        return id;
    }
};

// Builds an identifier from textual arguments, as used by the config file
// and the IPC commands. Connections take `ip ip port port`, matching the
// debug-dump argument order.
inline Result<Identifier, std::string> parse_identifier_args(
    IdClass cls, const std::vector<std::string>& args) {
    auto want = [&](size_t n) { return args.size() == n; };
    switch (cls) {
        case IdClass::mac: {
            if (!want(1)) return std::string("mac takes one argument");
            auto m = MacAddr::parse(args[0]);
            if (!m) return std::string("bad mac address: " + args[0]);
            return Identifier::of_mac(*m);
        }
        case IdClass::ip: {
            if (!want(1)) return std::string("ip takes one argument");
            auto a = IpAddr::parse(args[0]);
            if (!a) return std::string("bad ip address: " + args[0]);
            return Identifier::of_ip(*a);
        }
        case IdClass::ip_subnet: {
            if (!want(1)) return std::string("ip-subnet takes one argument");
            auto s = Subnet::parse(args[0]);
            if (!s) return std::string("bad subnet: " + args[0]);
            return Identifier::of_subnet(cls, *s);
        }
        case IdClass::tcp_port:
        case IdClass::udp_port: {
            if (!want(1)) return std::string("port takes one argument");
            try {
                long p = std::stol(args[0]);
                if (p < 0 || p > 65535) throw std::out_of_range("port");
                return Identifier::of_port(cls, static_cast<uint16_t>(p));
            } catch (...) {
                return std::string("bad port: " + args[0]);
            }
        }
        case IdClass::tcp_service:
        case IdClass::udp_service: {
            if (!want(2)) return std::string("service takes ip and port");
            auto a = IpAddr::parse(args[0]);
            if (!a) return std::string("bad ip address: " + args[0]);
            try {
                long p = std::stol(args[1]);
                if (p < 0 || p > 65535) throw std::out_of_range("port");
                return Identifier::of_service(cls, ServiceId{*a, static_cast<uint16_t>(p)});
            } catch (...) {
                return std::string("bad port: " + args[1]);
            }
        }
        case IdClass::tcp_connection:
        case IdClass::udp_connection: {
            if (!want(4)) return std::string("connection takes ip ip port port");
            auto a = IpAddr::parse(args[0]);
            auto b = IpAddr::parse(args[1]);
            if (!a || !b) return std::string("bad ip address");
            try {
                long p1 = std::stol(args[2]);
                long p2 = std::stol(args[3]);
                if (p1 < 0 || p1 > 65535 || p2 < 0 || p2 > 65535)
                    throw std::out_of_range("port");
                return Identifier::of_connection(
                    cls, ConnectionId::normalized(*a, static_cast<uint16_t>(p1), *b,
                                                  static_cast<uint16_t>(p2)));
            } catch (...) {
                return std::string("bad port");
            }
        }
    }
    return std::string("unknown identifier class");
}

enum class ListErrc { shape_mismatch, not_found };

// A single allow- or blocklist for one identifier class.
class FilterList {
public:
    FilterList() = default;
    FilterList(IdClass cls, bool is_allowlist)
        : cls_(cls), is_allowlist_(is_allowlist) {}

    IdClass id_class() const { return cls_; }
    bool is_allowlist() const { return is_allowlist_; }

    const Action& reject_action() const { return reject_action_; }
    void set_action(Action a) { reject_action_ = a; }

    // An allowlist with zero entries is disabled; blocklists are always live.
    bool enabled() const { return !is_allowlist_ || size() > 0; }

    size_t size() const {
        switch (cls_) {
            case IdClass::mac: return macs_.size();
            case IdClass::ip: return ips_.size();
            case IdClass::ip_subnet: return subnets_.size();
            case IdClass::tcp_port:
            case IdClass::udp_port: return ports_.size();
            case IdClass::tcp_service:
            case IdClass::udp_service: return services_.size();
            case IdClass::tcp_connection:
            case IdClass::udp_connection: return connections_.size();
        }
        return 0;
    }

    Result<bool, ListErrc> add(const Identifier& id) {
        if (id.cls != cls_) return ListErrc::shape_mismatch;
        switch (cls_) {
            case IdClass::mac: return macs_.insert(id.mac).second;
            case IdClass::ip: return ips_.insert(id.ip).second;
            case IdClass::ip_subnet: {
                bool fresh = !subnets_.entries().count(id.subnet.to_string());
                subnets_.insert(id.subnet);
                return fresh;
            }
            case IdClass::tcp_port:
            case IdClass::udp_port: return ports_.insert(id.port).second;
            case IdClass::tcp_service:
            case IdClass::udp_service: return services_.insert(id.service).second;
            case IdClass::tcp_connection:
            case IdClass::udp_connection:
                return connections_.insert(id.connection).second;
        }
        return ListErrc::shape_mismatch;
    }

    Result<bool, ListErrc> remove(const Identifier& id) {
        if (id.cls != cls_) return ListErrc::shape_mismatch;
        bool found = false;
        switch (cls_) {
            case IdClass::mac: found = macs_.erase(id.mac) > 0; break;
            case IdClass::ip: found = ips_.erase(id.ip) > 0; break;
            case IdClass::ip_subnet: found = subnets_.erase(id.subnet); break;
            case IdClass::tcp_port:
            case IdClass::udp_port: found = ports_.erase(id.port) > 0; break;
            case IdClass::tcp_service:
            case IdClass::udp_service: found = services_.erase(id.service) > 0; break;
            case IdClass::tcp_connection:
            case IdClass::udp_connection:
                found = connections_.erase(id.connection) > 0;
                break;
        }
        if (!found) return ListErrc::not_found;
        return true;
    }

    bool contains(const Identifier& id) const {
        if (id.cls != cls_) return false;
        switch (cls_) {
            case IdClass::mac: return macs_.count(id.mac) > 0;
            case IdClass::ip: return ips_.count(id.ip) > 0;
            case IdClass::ip_subnet: return subnets_.contains_prefix_of(id.ip);
            case IdClass::tcp_port:
            case IdClass::udp_port: return ports_.count(id.port) > 0;
            case IdClass::tcp_service:
            case IdClass::udp_service: return services_.count(id.service) > 0;
            case IdClass::tcp_connection:
            case IdClass::udp_connection:
                return connections_.count(id.connection) > 0;
        }
        return false;
    }

    // One display line per entry, sorted for stable listings.
    std::vector<std::string> list_entries() const {
        std::vector<std::string> out;
        switch (cls_) {
            case IdClass::mac:
                for (const auto& m : macs_) out.push_back(m.to_string());
                break;
            case IdClass::ip:
                for (const auto& a : ips_) out.push_back(a.to_string());
                break;
            case IdClass::ip_subnet:
                for (const auto& s : subnets_.entries()) out.push_back(s);
                break;
            case IdClass::tcp_port:
            case IdClass::udp_port:
                for (uint16_t p : ports_) out.push_back(std::to_string(p));
                break;
            case IdClass::tcp_service:
            case IdClass::udp_service:
                for (const auto& s : services_)
                    out.push_back(s.ip.to_string() + " " + std::to_string(s.port));
                break;
            case IdClass::tcp_connection:
            case IdClass::udp_connection:
                for (const auto& c : connections_)
                    out.push_back(c.ip1.to_string() + " " + c.ip2.to_string() + " " +
                                  std::to_string(c.port1) + " " + std::to_string(c.port2));
                break;
        }
        std::sort(out.begin(), out.end());
        return out;
    }

    void clear() {
        macs_.clear();
        ips_.clear();
        subnets_.clear();
        ports_.clear();
        services_.clear();
        connections_.clear();
    }

private:
    IdClass cls_ = IdClass::ip;
    bool is_allowlist_ = false;
    Action reject_action_ = Action::drop();

    std::unordered_set<MacAddr> macs_;
    std::unordered_set<IpAddr> ips_;
    SubnetTrie subnets_;
    std::unordered_set<uint16_t> ports_;
    std::unordered_set<ServiceId, ServiceIdHash> services_;
    std::unordered_set<ConnectionId, ConnectionIdHash> connections_;
};

// Blocklist membership rejects first; otherwise an enabled allowlist rejects
// non-members. No verdict means the identifier passes this class.
inline std::optional<Action> evaluate(const Identifier& id, const FilterList& blocklist,
                                      const FilterList& allowlist) {
    if (blocklist.contains(id)) return blocklist.reject_action();
    if (allowlist.enabled() && !allowlist.contains(id)) return allowlist.reject_action();
    return std::nullopt;
}

// All lists of both kinds, indexed by identifier class.
class FilterSet {
public:
    FilterSet() {
        for (IdClass c : kAllClasses) {
            lists_[index(c)][0] = FilterList(c, false);
            lists_[index(c)][1] = FilterList(c, true);
        }
    }

    static constexpr IdClass kAllClasses[] = {
        IdClass::mac,            IdClass::ip,          IdClass::ip_subnet,
        IdClass::tcp_port,       IdClass::udp_port,    IdClass::tcp_service,
        IdClass::udp_service,    IdClass::tcp_connection, IdClass::udp_connection,
    };

    FilterList& blocklist(IdClass c) { return lists_[index(c)][0]; }
    FilterList& allowlist(IdClass c) { return lists_[index(c)][1]; }
    const FilterList& blocklist(IdClass c) const { return lists_[index(c)][0]; }
    const FilterList& allowlist(IdClass c) const { return lists_[index(c)][1]; }

    FilterList& get(IdClass c, bool allow) { return lists_[index(c)][allow ? 1 : 0]; }

    std::optional<Action> evaluate_class(IdClass c, const Identifier& id) const {
        return evaluate(id, blocklist(c), allowlist(c));
    }

private:
    static size_t index(IdClass c) { return static_cast<size_t>(c); }
    FilterList lists_[9][2];
};

} // namespace censorlab
