// Address types and byte-order helpers shared by the parsing and
// frame-building layers.
#pragma once

#include <arpa/inet.h>

#include <array>
#include <compare>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <optional>
#include <span>
#include <string>

#include "censorlab/util.hpp"

namespace censorlab {

inline uint16_t load_be16(const uint8_t* p) {
    return static_cast<uint16_t>(p[0] << 8 | p[1]);
}
inline uint32_t load_be32(const uint8_t* p) {
    return static_cast<uint32_t>(p[0]) << 24 | static_cast<uint32_t>(p[1]) << 16 |
           static_cast<uint32_t>(p[2]) << 8 | static_cast<uint32_t>(p[3]);
}
inline void store_be16(uint8_t* p, uint16_t v) {
    p[0] = static_cast<uint8_t>(v >> 8);
    p[1] = static_cast<uint8_t>(v);
}
inline void store_be32(uint8_t* p, uint32_t v) {
    p[0] = static_cast<uint8_t>(v >> 24);
    p[1] = static_cast<uint8_t>(v >> 16);
    p[2] = static_cast<uint8_t>(v >> 8);
    p[3] = static_cast<uint8_t>(v);
}

struct MacAddr {
    std::array<uint8_t, 6> bytes{};

    bool operator==(const MacAddr&) const = default;
    auto operator<=>(const MacAddr&) const = default;

    static std::optional<MacAddr> parse(std::string_view s) {
        MacAddr m;
        unsigned b[6];
        std::string buf(s);
        if (std::sscanf(buf.c_str(), "%x:%x:%x:%x:%x:%x", &b[0], &b[1], &b[2], &b[3],
                        &b[4], &b[5]) != 6)
            return std::nullopt;
        for (int i = 0; i < 6; ++i) {
            if (b[i] > 0xFF) return std::nullopt;
            m.bytes[static_cast<size_t>(i)] = static_cast<uint8_t>(b[i]);
        }
        return m;
    }

    std::string to_string() const {
        char buf[18];
        std::snprintf(buf, sizeof buf, "%02x:%02x:%02x:%02x:%02x:%02x", bytes[0], bytes[1],
                      bytes[2], bytes[3], bytes[4], bytes[5]);
        return buf;
    }
};

// IPv4 or IPv6 address. v4 addresses keep their 4 bytes in bytes[0..3].
struct IpAddr {
    bool is_v4 = true;
    std::array<uint8_t, 16> bytes{};

    bool operator==(const IpAddr&) const = default;
    auto operator<=>(const IpAddr&) const = default;

    size_t width() const { return is_v4 ? 4 : 16; }

    static IpAddr v4(uint8_t a, uint8_t b, uint8_t c, uint8_t d) {
        IpAddr ip;
        ip.bytes = {a, b, c, d};
        return ip;
    }

    static IpAddr from_bytes(std::span<const uint8_t> b) {
        IpAddr ip;
        ip.is_v4 = b.size() == 4;
        std::memcpy(ip.bytes.data(), b.data(), b.size());
        return ip;
    }

    static std::optional<IpAddr> parse(std::string_view s) {
        std::string buf(s);
        IpAddr ip;
        if (inet_pton(AF_INET, buf.c_str(), ip.bytes.data()) == 1) {
            ip.is_v4 = true;
            return ip;
        }
        if (inet_pton(AF_INET6, buf.c_str(), ip.bytes.data()) == 1) {
            ip.is_v4 = false;
            return ip;
        }
        return std::nullopt;
    }

    std::string to_string() const {
        char buf[INET6_ADDRSTRLEN];
        if (inet_ntop(is_v4 ? AF_INET : AF_INET6, bytes.data(), buf, sizeof buf) == nullptr)
            return "?";
        return buf;
    }

    // Bit i counted from the most significant bit of the address.
    bool bit(size_t i) const { return (bytes[i / 8] >> (7 - i % 8)) & 1; }
};

struct Subnet {
    IpAddr addr;
    uint8_t prefix_len = 0;

    bool operator==(const Subnet&) const = default;

    bool contains(const IpAddr& ip) const {
        if (ip.is_v4 != addr.is_v4) return false;
        for (size_t i = 0; i < prefix_len; ++i)
            if (ip.bit(i) != addr.bit(i)) return false;
        return true;
    }

    static std::optional<Subnet> parse(std::string_view s) {
        size_t slash = s.find('/');
        if (slash == std::string_view::npos) return std::nullopt;
        auto ip = IpAddr::parse(s.substr(0, slash));
        if (!ip) return std::nullopt;
        int len = -1;
        try {
            len = std::stoi(std::string(s.substr(slash + 1)));
        } catch (...) {
            return std::nullopt;
        }
        size_t max = ip->is_v4 ? 32 : 128;
        if (len < 0 || static_cast<size_t>(len) > max) return std::nullopt;
        return Subnet{*ip, static_cast<uint8_t>(len)};
    }

    std::string to_string() const {
        return addr.to_string() + "/" + std::to_string(prefix_len);
    }
};

// Endpoint ordering shared by flow keys and connection identifiers: the
// smaller port sorts first; equal ports fall back to address order.
inline bool endpoint_sorts_first(const IpAddr& a_ip, uint16_t a_port, const IpAddr& b_ip,
                                 uint16_t b_port) {
    if (a_port != b_port) return a_port < b_port;
    return a_ip < b_ip;
}

// RFC 1071 ones'-complement sum; returns the folded 16-bit sum (not inverted).
inline uint32_t checksum_accumulate(std::span<const uint8_t> data, uint32_t acc = 0) {
    size_t i = 0;
    for (; i + 1 < data.size(); i += 2) acc += load_be16(&data[i]);
    if (i < data.size()) acc += static_cast<uint32_t>(data[i]) << 8;
    return acc;
}

inline uint16_t checksum_finish(uint32_t acc) {
    while (acc >> 16) acc = (acc & 0xFFFF) + (acc >> 16);
    return static_cast<uint16_t>(~acc & 0xFFFF);
}

inline uint16_t inet_checksum(std::span<const uint8_t> data) {
    return checksum_finish(checksum_accumulate(data));
}

} // namespace censorlab

template <>
struct std::hash<censorlab::MacAddr> {
    size_t operator()(const censorlab::MacAddr& m) const {
        size_t h = 0;
        for (uint8_t b : m.bytes) censorlab::hash_combine(h, b);
        return h;
    }
};

template <>
struct std::hash<censorlab::IpAddr> {
    size_t operator()(const censorlab::IpAddr& ip) const {
        size_t h = ip.is_v4 ? 4u : 16u;
        for (size_t i = 0; i < ip.width(); ++i) censorlab::hash_combine(h, ip.bytes[i]);
        return h;
    }
};
