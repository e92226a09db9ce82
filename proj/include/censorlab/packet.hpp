// Layered packet parsing: Ethernet, IPv4/IPv6/ARP, TCP/UDP, payload stats.
//
// All parsers are pure functions over immutable byte buffers. Parsed views
// hold spans into the input buffer and stay valid only as long as it does.
#pragma once

#include <bit>
#include <cstdint>
#include <optional>
#include <span>
#include <string>

#include "censorlab/net.hpp"
#include "censorlab/util.hpp"

namespace censorlab {

enum class LinkType : uint32_t {
    ethernet = 1,   // LINKTYPE_ETHERNET
    raw_ip = 101,   // LINKTYPE_RAW
};

enum class IfaceDir { unknown, ingress, egress };

inline constexpr uint16_t kEthertypeIpv4 = 0x0800;
inline constexpr uint16_t kEthertypeArp = 0x0806;
inline constexpr uint16_t kEthertypeVlan = 0x8100;
inline constexpr uint16_t kEthertypeIpv6 = 0x86DD;

inline constexpr uint8_t kProtoTcp = 6;
inline constexpr uint8_t kProtoUdp = 17;

enum class PacketErrc {
    truncated,
    unsupported,      // length-typed Ethernet, 802.1Q
    bad_version,
    bad_length,
    bad_data_offset,
    not_tcp_udp,
};

struct PacketError {
    PacketErrc code;
    std::string detail;
};

inline const char* to_string(PacketErrc c) {
    switch (c) {
        case PacketErrc::truncated: return "truncated";
        case PacketErrc::unsupported: return "unsupported";
        case PacketErrc::bad_version: return "bad-version";
        case PacketErrc::bad_length: return "bad-length";
        case PacketErrc::bad_data_offset: return "bad-data-offset";
        case PacketErrc::not_tcp_udp: return "not-tcp-udp";
    }
    return "?";
}

struct EthernetFrame {
    MacAddr src_mac;
    MacAddr dst_mac;
    uint16_t ethertype = 0;
    std::span<const uint8_t> payload;
};

struct IpDatagram {
    uint8_t version = 4;        // 4 or 6
    uint16_t header_len = 0;    // bytes, v6 includes skipped extension headers
    uint32_t total_len = 0;     // bytes including header
    uint8_t ttl = 0;            // hop limit on v6
    uint8_t next_proto = 0;
    IpAddr src_ip;
    IpAddr dst_ip;
    // v4 only
    uint8_t dscp = 0;
    uint8_t ecn = 0;
    uint16_t ipid = 0;
    bool dont_frag = false;
    bool more_frags = false;
    uint16_t frag_offset = 0;   // 8-octet units
    uint16_t checksum = 0;
    // v6 only
    uint8_t traffic_class = 0;
    uint32_t flow_label = 0;

    std::span<const uint8_t> payload;
};

struct TcpFlags {
    bool syn = false, ack = false, fin = false, rst = false, psh = false, urg = false;
};

struct TransportSegment {
    uint8_t proto = 0;          // kProtoTcp or kProtoUdp
    uint16_t src_port = 0;
    uint16_t dst_port = 0;
    uint32_t seq = 0;           // TCP only
    uint32_t ack = 0;           // TCP only
    TcpFlags flags;             // TCP only
    std::span<const uint8_t> payload;
};

struct PayloadStats {
    uint32_t len = 0;
    uint32_t popcount_sum = 0;
    uint32_t printable_count = 0;       // bytes in [0x20, 0x7E]
    uint32_t printable_run_max = 0;     // longest contiguous printable run
    uint32_t printable_prefix_len = 0;  // printable run starting at offset 0
};

struct ParsedPacket {
    std::optional<EthernetFrame> eth;
    std::optional<IpDatagram> ip;
    std::optional<bool> arp_valid;      // set iff the L3 payload was ARP
    std::optional<TransportSegment> l4;
    PayloadStats stats;                 // over the L4 payload; zeros without L4
    double timestamp = 0.0;             // seconds, microsecond precision
    IfaceDir iface_dir = IfaceDir::unknown;
};

inline bool is_printable_byte(uint8_t b) { return b >= 0x20 && b <= 0x7E; }

inline PayloadStats payload_stats(std::span<const uint8_t> payload) {
    PayloadStats s;
    s.len = static_cast<uint32_t>(payload.size());
    uint32_t run = 0;
    bool in_prefix = true;
    for (uint8_t b : payload) {
        s.popcount_sum += static_cast<uint32_t>(std::popcount(b));
        if (is_printable_byte(b)) {
            ++s.printable_count;
            ++run;
            if (run > s.printable_run_max) s.printable_run_max = run;
            if (in_prefix) ++s.printable_prefix_len;
        } else {
            run = 0;
            in_prefix = false;
        }
    }
    return s;
}

inline Result<EthernetFrame, PacketError> parse_ethernet(std::span<const uint8_t> bytes) {
    if (bytes.size() < 14)
        return PacketError{PacketErrc::truncated, "ethernet header needs 14 bytes"};
    EthernetFrame f;
    std::memcpy(f.dst_mac.bytes.data(), bytes.data(), 6);
    std::memcpy(f.src_mac.bytes.data(), bytes.data() + 6, 6);
    f.ethertype = load_be16(&bytes[12]);
    if (f.ethertype < 0x0600)
        return PacketError{PacketErrc::unsupported, "length-typed ethernet frame"};
    if (f.ethertype == kEthertypeVlan)
        return PacketError{PacketErrc::unsupported, "802.1Q frame"};
    f.payload = bytes.subspan(14);
    return f;
}

// ARP validity: hardware type 1 (Ethernet), protocol type IPv4, and the
// declared address lengths must fit in the buffer.
inline bool arp_is_valid(std::span<const uint8_t> bytes) {
    if (bytes.size() < 8) return false;
    uint16_t htype = load_be16(&bytes[0]);
    uint16_t ptype = load_be16(&bytes[2]);
    uint8_t hlen = bytes[4];
    uint8_t plen = bytes[5];
    uint16_t oper = load_be16(&bytes[6]);
    if (htype != 1 || ptype != kEthertypeIpv4) return false;
    if (oper != 1 && oper != 2) return false;
    return bytes.size() >= 8u + 2u * (static_cast<size_t>(hlen) + plen);
}

struct L3Parse {
    std::optional<IpDatagram> ip;
    std::optional<bool> arp_valid;
};

namespace detail {

inline Result<IpDatagram, PacketError> parse_ipv4(std::span<const uint8_t> bytes) {
    if (bytes.size() < 20)
        return PacketError{PacketErrc::truncated, "ipv4 header needs 20 bytes"};
    IpDatagram d;
    d.version = 4;
    uint8_t ihl = bytes[0] & 0x0F;
    d.header_len = static_cast<uint16_t>(ihl * 4);
    if (d.header_len < 20)
        return PacketError{PacketErrc::bad_length, "ipv4 ihl below 5"};
    d.total_len = load_be16(&bytes[2]);
    if (d.total_len < d.header_len)
        return PacketError{PacketErrc::bad_length, "total length below header length"};
    if (d.total_len > bytes.size())
        return PacketError{PacketErrc::bad_length, "total length exceeds buffer"};
    if (d.header_len > bytes.size())
        return PacketError{PacketErrc::truncated, "ipv4 options truncated"};
    d.dscp = bytes[1] >> 2;
    d.ecn = bytes[1] & 0x03;
    d.ipid = load_be16(&bytes[4]);
    uint16_t fl = load_be16(&bytes[6]);
    d.dont_frag = (fl & 0x4000) != 0;
    d.more_frags = (fl & 0x2000) != 0;
    d.frag_offset = fl & 0x1FFF;
    d.ttl = bytes[8];
    d.next_proto = bytes[9];
    d.checksum = load_be16(&bytes[10]);
    d.src_ip = IpAddr::from_bytes(bytes.subspan(12, 4));
    d.dst_ip = IpAddr::from_bytes(bytes.subspan(16, 4));
    d.payload = bytes.subspan(d.header_len, d.total_len - d.header_len);
    return d;
}

inline bool ipv6_is_extension(uint8_t h) {
    // hop-by-hop, routing, fragment, dest options, mobility
    return h == 0 || h == 43 || h == 44 || h == 60 || h == 135;
}

inline Result<IpDatagram, PacketError> parse_ipv6(std::span<const uint8_t> bytes) {
    if (bytes.size() < 40)
        return PacketError{PacketErrc::truncated, "ipv6 header needs 40 bytes"};
    IpDatagram d;
    d.version = 6;
    d.traffic_class = static_cast<uint8_t>((bytes[0] & 0x0F) << 4 | bytes[1] >> 4);
    d.flow_label = (static_cast<uint32_t>(bytes[1] & 0x0F) << 16) | load_be16(&bytes[2]);
    uint16_t payload_len = load_be16(&bytes[4]);
    uint8_t next = bytes[6];
    d.ttl = bytes[7];
    d.src_ip = IpAddr::from_bytes(bytes.subspan(8, 16));
    d.dst_ip = IpAddr::from_bytes(bytes.subspan(24, 16));
    if (40u + payload_len > bytes.size())
        return PacketError{PacketErrc::bad_length, "ipv6 payload length exceeds buffer"};
    d.total_len = 40u + payload_len;

    // Skip extension headers, capped at 8 to bound parsing.
    size_t off = 40;
    size_t end = d.total_len;
    for (int hops = 0; ipv6_is_extension(next) && hops < 8; ++hops) {
        if (off + 8 > end)
            return PacketError{PacketErrc::truncated, "ipv6 extension header truncated"};
        uint8_t ext_next = bytes[off];
        size_t ext_len = next == 44 ? 8 : 8u + static_cast<size_t>(bytes[off + 1]) * 8;
        if (off + ext_len > end)
            return PacketError{PacketErrc::bad_length, "ipv6 extension header overruns payload"};
        next = ext_next;
        off += ext_len;
    }
    d.next_proto = next;
    d.header_len = static_cast<uint16_t>(off);
    d.payload = bytes.subspan(off, end - off);
    return d;
}

} // namespace detail

inline Result<L3Parse, PacketError> parse_ip(std::span<const uint8_t> bytes,
                                             uint16_t ethertype) {
    switch (ethertype) {
        case kEthertypeArp:
            return L3Parse{std::nullopt, arp_is_valid(bytes)};
        case kEthertypeIpv4: {
            if (!bytes.empty() && bytes[0] >> 4 != 4)
                return PacketError{PacketErrc::bad_version, "version nibble is not 4"};
            auto d = detail::parse_ipv4(bytes);
            if (!d) return d.error();
            return L3Parse{*d, std::nullopt};
        }
        case kEthertypeIpv6: {
            if (!bytes.empty() && bytes[0] >> 4 != 6)
                return PacketError{PacketErrc::bad_version, "version nibble is not 6"};
            auto d = detail::parse_ipv6(bytes);
            if (!d) return d.error();
            return L3Parse{*d, std::nullopt};
        }
        default:
            return PacketError{PacketErrc::unsupported, "ethertype has no L3 handler"};
    }
}

inline Result<TransportSegment, PacketError> parse_l4(std::span<const uint8_t> bytes,
                                                      uint8_t proto) {
    TransportSegment seg;
    seg.proto = proto;
    if (proto == kProtoTcp) {
        if (bytes.size() < 20)
            return PacketError{PacketErrc::truncated, "tcp header needs 20 bytes"};
        seg.src_port = load_be16(&bytes[0]);
        seg.dst_port = load_be16(&bytes[2]);
        seg.seq = load_be32(&bytes[4]);
        seg.ack = load_be32(&bytes[8]);
        uint8_t data_offset = bytes[12] >> 4;
        size_t hdr = static_cast<size_t>(data_offset) * 4;
        if (data_offset < 5)
            return PacketError{PacketErrc::bad_data_offset, "tcp data offset below 5"};
        if (hdr > bytes.size())
            return PacketError{PacketErrc::bad_data_offset, "tcp data offset beyond buffer"};
        uint8_t f = bytes[13];
        seg.flags.fin = f & 0x01;
        seg.flags.syn = f & 0x02;
        seg.flags.rst = f & 0x04;
        seg.flags.psh = f & 0x08;
        seg.flags.ack = f & 0x10;
        seg.flags.urg = f & 0x20;
        seg.payload = bytes.subspan(hdr);
        return seg;
    }
    if (proto == kProtoUdp) {
        if (bytes.size() < 8)
            return PacketError{PacketErrc::truncated, "udp header needs 8 bytes"};
        seg.src_port = load_be16(&bytes[0]);
        seg.dst_port = load_be16(&bytes[2]);
        uint16_t len = load_be16(&bytes[4]);
        if (len < 8 || len > bytes.size())
            return PacketError{PacketErrc::truncated, "udp length field inconsistent"};
        seg.payload = bytes.subspan(8, len - 8u);
        return seg;
    }
    return PacketError{PacketErrc::not_tcp_udp, "protocol has no L4 handler"};
}

// Composes the layer parsers. Unknown-but-wellformed ethertypes and ARP yield
// a ParsedPacket without an L3/L4 view; hard parse failures are errors.
inline Result<ParsedPacket, PacketError> parse_packet(std::span<const uint8_t> bytes,
                                                      LinkType link, double timestamp,
                                                      IfaceDir dir = IfaceDir::unknown) {
    ParsedPacket pkt;
    pkt.timestamp = timestamp;
    pkt.iface_dir = dir;

    std::span<const uint8_t> l3_bytes;
    uint16_t ethertype = 0;
    if (link == LinkType::ethernet) {
        auto eth = parse_ethernet(bytes);
        if (!eth) return eth.error();
        pkt.eth = *eth;
        ethertype = eth->ethertype;
        l3_bytes = eth->payload;
        if (ethertype != kEthertypeIpv4 && ethertype != kEthertypeIpv6 &&
            ethertype != kEthertypeArp)
            return pkt;  // L2-only view; the engine accepts and logs these
    } else {
        l3_bytes = bytes;
        if (l3_bytes.empty())
            return PacketError{PacketErrc::truncated, "empty raw-ip packet"};
        uint8_t v = l3_bytes[0] >> 4;
        if (v == 4)
            ethertype = kEthertypeIpv4;
        else if (v == 6)
            ethertype = kEthertypeIpv6;
        else
            return PacketError{PacketErrc::bad_version, "raw-ip version nibble"};
    }

    auto l3 = parse_ip(l3_bytes, ethertype);
    if (!l3) return l3.error();
    pkt.arp_valid = l3->arp_valid;
    if (!l3->ip) return pkt;  // ARP: parsed for validity, otherwise ignored
    pkt.ip = *l3->ip;

    uint8_t proto = pkt.ip->next_proto;
    if (proto != kProtoTcp && proto != kProtoUdp) return pkt;  // no L4 view
    auto l4 = parse_l4(pkt.ip->payload, proto);
    if (!l4) return l4.error();
    pkt.l4 = *l4;
    pkt.stats = payload_stats(l4->payload);
    return pkt;
}

} // namespace censorlab
