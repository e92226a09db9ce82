// Frame construction: Ethernet/IPv4/IPv6 + TCP/UDP with valid checksums.
// The write path is independent of the parsers in packet.hpp.
#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "censorlab/net.hpp"
#include "censorlab/packet.hpp"

namespace censorlab::wire {

struct EthSpec {
    MacAddr src;
    MacAddr dst;
};

struct IpSpec {
    IpAddr src;
    IpAddr dst;
    uint8_t ttl = 64;
    uint16_t ipid = 0;      // v4
    bool dont_frag = true;  // v4
};

struct TcpSpec {
    uint16_t src_port = 0;
    uint16_t dst_port = 0;
    uint32_t seq = 0;
    uint32_t ack = 0;
    TcpFlags flags;
    uint16_t window = 65535;
};

struct UdpSpec {
    uint16_t src_port = 0;
    uint16_t dst_port = 0;
};

inline void append(std::vector<uint8_t>& out, std::span<const uint8_t> data) {
    out.insert(out.end(), data.begin(), data.end());
}

// TCP/UDP checksum pseudo-header accumulation.
inline uint32_t pseudo_header_sum(const IpAddr& src, const IpAddr& dst, uint8_t proto,
                                  size_t l4_len) {
    uint32_t acc = 0;
    acc = checksum_accumulate({src.bytes.data(), src.width()}, acc);
    acc = checksum_accumulate({dst.bytes.data(), dst.width()}, acc);
    acc += proto;
    acc += static_cast<uint32_t>(l4_len >> 16);
    acc += static_cast<uint32_t>(l4_len & 0xFFFF);
    return acc;
}

inline std::vector<uint8_t> build_tcp(const IpSpec& ip, const TcpSpec& tcp,
                                      std::span<const uint8_t> payload) {
    std::vector<uint8_t> seg(20);
    store_be16(&seg[0], tcp.src_port);
    store_be16(&seg[2], tcp.dst_port);
    store_be32(&seg[4], tcp.seq);
    store_be32(&seg[8], tcp.ack);
    seg[12] = 5 << 4;  // data offset, no options
    uint8_t f = 0;
    if (tcp.flags.fin) f |= 0x01;
    if (tcp.flags.syn) f |= 0x02;
    if (tcp.flags.rst) f |= 0x04;
    if (tcp.flags.psh) f |= 0x08;
    if (tcp.flags.ack) f |= 0x10;
    if (tcp.flags.urg) f |= 0x20;
    seg[13] = f;
    store_be16(&seg[14], tcp.window);
    append(seg, payload);
    uint32_t acc = pseudo_header_sum(ip.src, ip.dst, kProtoTcp, seg.size());
    store_be16(&seg[16], checksum_finish(checksum_accumulate(seg, acc)));
    return seg;
}

inline std::vector<uint8_t> build_udp(const IpSpec& ip, const UdpSpec& udp,
                                      std::span<const uint8_t> payload) {
    std::vector<uint8_t> seg(8);
    store_be16(&seg[0], udp.src_port);
    store_be16(&seg[2], udp.dst_port);
    store_be16(&seg[4], static_cast<uint16_t>(8 + payload.size()));
    append(seg, payload);
    uint32_t acc = pseudo_header_sum(ip.src, ip.dst, kProtoUdp, seg.size());
    uint16_t sum = checksum_finish(checksum_accumulate(seg, acc));
    if (sum == 0) sum = 0xFFFF;  // UDP transmits an all-ones checksum for zero
    store_be16(&seg[6], sum);
    return seg;
}

inline std::vector<uint8_t> build_ip(const IpSpec& ip, uint8_t proto,
                                     std::span<const uint8_t> l4) {
    std::vector<uint8_t> out;
    if (ip.src.is_v4) {
        out.resize(20);
        out[0] = 0x45;
        store_be16(&out[2], static_cast<uint16_t>(20 + l4.size()));
        store_be16(&out[4], ip.ipid);
        store_be16(&out[6], ip.dont_frag ? 0x4000 : 0x0000);
        out[8] = ip.ttl;
        out[9] = proto;
        std::memcpy(&out[12], ip.src.bytes.data(), 4);
        std::memcpy(&out[16], ip.dst.bytes.data(), 4);
        store_be16(&out[10], inet_checksum(out));
    } else {
        out.resize(40);
        out[0] = 0x60;
        store_be16(&out[4], static_cast<uint16_t>(l4.size()));
        out[6] = proto;
        out[7] = ip.ttl;
        std::memcpy(&out[8], ip.src.bytes.data(), 16);
        std::memcpy(&out[24], ip.dst.bytes.data(), 16);
    }
    append(out, l4);
    return out;
}

inline std::vector<uint8_t> build_ethernet(const EthSpec& eth, uint16_t ethertype,
                                           std::span<const uint8_t> payload) {
    std::vector<uint8_t> out(14);
    std::memcpy(&out[0], eth.dst.bytes.data(), 6);
    std::memcpy(&out[6], eth.src.bytes.data(), 6);
    store_be16(&out[12], ethertype);
    append(out, payload);
    return out;
}

inline std::vector<uint8_t> build_tcp_frame(const EthSpec& eth, const IpSpec& ip,
                                            const TcpSpec& tcp,
                                            std::span<const uint8_t> payload = {}) {
    auto seg = build_tcp(ip, tcp, payload);
    auto dgram = build_ip(ip, kProtoTcp, seg);
    return build_ethernet(eth, ip.src.is_v4 ? kEthertypeIpv4 : kEthertypeIpv6, dgram);
}

inline std::vector<uint8_t> build_udp_frame(const EthSpec& eth, const IpSpec& ip,
                                            const UdpSpec& udp,
                                            std::span<const uint8_t> payload = {}) {
    auto seg = build_udp(ip, udp, payload);
    auto dgram = build_ip(ip, kProtoUdp, seg);
    return build_ethernet(eth, ip.src.is_v4 ? kEthertypeIpv4 : kEthertypeIpv6, dgram);
}

} // namespace censorlab::wire
