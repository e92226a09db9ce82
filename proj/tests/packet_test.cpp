#include <catch2/catch_amalgamated.hpp>

#include <random>

#include "censorlab/packet.hpp"
#include "censorlab/wire.hpp"

using namespace censorlab;

namespace {

// Independent byte-wise reference for payload statistics, kept deliberately
// separate from the implementation's single pass.
PayloadStats reference_stats(std::span<const uint8_t> payload) {
    PayloadStats s;
    s.len = static_cast<uint32_t>(payload.size());
    for (uint8_t b : payload) {
        for (int bit = 0; bit < 8; ++bit)
            if (b & (1u << bit)) ++s.popcount_sum;
        if (b >= 0x20 && b <= 0x7E) ++s.printable_count;
    }
    // longest printable run by scanning all run starts
    for (size_t i = 0; i < payload.size(); ++i) {
        uint32_t run = 0;
        for (size_t j = i; j < payload.size() && payload[j] >= 0x20 && payload[j] <= 0x7E;
             ++j)
            ++run;
        s.printable_run_max = std::max(s.printable_run_max, run);
    }
    while (s.printable_prefix_len < payload.size() &&
           payload[s.printable_prefix_len] >= 0x20 && payload[s.printable_prefix_len] <= 0x7E)
        ++s.printable_prefix_len;
    return s;
}

std::vector<uint8_t> minimal_ipv4(uint8_t proto, uint16_t total_len) {
    std::vector<uint8_t> h(20, 0);
    h[0] = 0x45;
    store_be16(&h[2], total_len);
    h[8] = 64;
    h[9] = proto;
    h[12] = 10;
    h[15] = 1;
    h[16] = 10;
    h[19] = 2;
    return h;
}

} // namespace

TEST_CASE("ethernet parsing") {
    SECTION("minimal valid frame") {
        std::vector<uint8_t> frame(14, 0);
        store_be16(&frame[12], kEthertypeIpv4);
        auto f = parse_ethernet(frame);
        REQUIRE(f.ok());
        CHECK(f->ethertype == kEthertypeIpv4);
        CHECK(f->payload.empty());
    }
    SECTION("length-typed frames are unsupported") {
        std::vector<uint8_t> frame(14, 0);
        store_be16(&frame[12], 0x0042);
        auto f = parse_ethernet(frame);
        REQUIRE(!f.ok());
        CHECK(f.error().code == PacketErrc::unsupported);
    }
    SECTION("802.1Q frames are unsupported") {
        std::vector<uint8_t> frame(18, 0);
        store_be16(&frame[12], kEthertypeVlan);
        auto f = parse_ethernet(frame);
        REQUIRE(!f.ok());
        CHECK(f.error().code == PacketErrc::unsupported);
    }
    SECTION("truncated input") {
        std::vector<uint8_t> frame(13, 0);
        auto f = parse_ethernet(frame);
        REQUIRE(!f.ok());
        CHECK(f.error().code == PacketErrc::truncated);
    }
}

TEST_CASE("ip parsing") {
    SECTION("minimal ipv4 header, proto tcp") {
        auto h = minimal_ipv4(6, 20);
        auto r = parse_ip(h, kEthertypeIpv4);
        REQUIRE(r.ok());
        REQUIRE(r->ip);
        CHECK(r->ip->version == 4);
        CHECK(r->ip->next_proto == kProtoTcp);
        CHECK(r->ip->payload.empty());
        CHECK(r->ip->ttl == 64);
        CHECK(r->ip->src_ip == IpAddr::v4(10, 0, 0, 1));
        CHECK(r->ip->dst_ip == IpAddr::v4(10, 0, 0, 2));
    }
    SECTION("ipv6 header with next-header udp") {
        std::vector<uint8_t> h(40, 0);
        h[0] = 0x60 | 0x01;  // traffic class high nibble = 1
        h[1] = 0x25;         // traffic class low nibble 2, flow label high 5
        h[2] = 0xAB;
        h[3] = 0xCD;
        h[6] = 17;  // next header
        h[7] = 64;
        auto r = parse_ip(h, kEthertypeIpv6);
        REQUIRE(r.ok());
        REQUIRE(r->ip);
        CHECK(r->ip->version == 6);
        CHECK(r->ip->next_proto == kProtoUdp);
        CHECK(r->ip->traffic_class == 0x12);
        CHECK(r->ip->flow_label == 0x5ABCD);
    }
    SECTION("total length exceeding the buffer") {
        auto h = minimal_ipv4(6, 40);
        h.resize(30, 0);
        auto r = parse_ip(h, kEthertypeIpv4);
        REQUIRE(!r.ok());
        CHECK(r.error().code == PacketErrc::bad_length);
    }
    SECTION("version nibble mismatch") {
        auto h = minimal_ipv4(6, 20);
        h[0] = 0x65;
        auto r = parse_ip(h, kEthertypeIpv4);
        REQUIRE(!r.ok());
        CHECK(r.error().code == PacketErrc::bad_version);
    }
    SECTION("ipv4 options are skipped via header length") {
        std::vector<uint8_t> h(24, 0);
        h[0] = 0x46;  // ihl 6
        store_be16(&h[2], 24);
        h[9] = 17;
        auto r = parse_ip(h, kEthertypeIpv4);
        REQUIRE(r.ok());
        CHECK(r->ip->header_len == 24);
        CHECK(r->ip->payload.empty());
    }
    SECTION("arp is judged for validity") {
        std::vector<uint8_t> arp(28, 0);
        store_be16(&arp[0], 1);       // ethernet
        store_be16(&arp[2], 0x0800);  // ipv4
        arp[4] = 6;
        arp[5] = 4;
        store_be16(&arp[6], 1);  // request
        auto r = parse_ip(arp, kEthertypeArp);
        REQUIRE(r.ok());
        CHECK(!r->ip);
        REQUIRE(r->arp_valid);
        CHECK(*r->arp_valid);

        arp[4] = 99;  // hardware length no longer fits the frame
        auto bad = parse_ip(arp, kEthertypeArp);
        REQUIRE(bad.ok());
        CHECK_FALSE(*bad->arp_valid);
    }
    SECTION("ipv6 extension chain is capped") {
        // 9 chained hop-by-hop headers exceed the cap of 8
        std::vector<uint8_t> h(40, 0);
        h[6] = 0;  // hop-by-hop
        h[7] = 64;
        std::vector<uint8_t> body;
        for (int i = 0; i < 9; ++i) {
            std::vector<uint8_t> ext(8, 0);
            ext[0] = i == 8 ? 17 : 0;
            body.insert(body.end(), ext.begin(), ext.end());
        }
        store_be16(&h[4], static_cast<uint16_t>(body.size()));
        h.insert(h.end(), body.begin(), body.end());
        auto r = parse_ip(h, kEthertypeIpv6);
        REQUIRE(r.ok());
        // after 8 skips the ninth header id is reported as the payload proto
        CHECK(r->ip->next_proto == 0);
    }
}

TEST_CASE("l4 parsing") {
    SECTION("minimal udp header") {
        std::vector<uint8_t> h(8, 0);
        store_be16(&h[0], 1234);
        store_be16(&h[2], 53);
        store_be16(&h[4], 8);
        auto r = parse_l4(h, kProtoUdp);
        REQUIRE(r.ok());
        CHECK(r->src_port == 1234);
        CHECK(r->dst_port == 53);
        CHECK(r->payload.empty());
    }
    SECTION("tcp syn with data offset 5") {
        std::vector<uint8_t> h(20, 0);
        store_be16(&h[0], 40000);
        store_be16(&h[2], 443);
        h[12] = 5 << 4;
        h[13] = 0x02;
        auto r = parse_l4(h, kProtoTcp);
        REQUIRE(r.ok());
        CHECK(r->flags.syn);
        CHECK(!r->flags.ack);
        CHECK(r->payload.empty());
    }
    SECTION("tcp data offset below 5") {
        std::vector<uint8_t> h(20, 0);
        h[12] = 3 << 4;
        auto r = parse_l4(h, kProtoTcp);
        REQUIRE(!r.ok());
        CHECK(r.error().code == PacketErrc::bad_data_offset);
    }
    SECTION("non-transport protocol") {
        std::vector<uint8_t> h(20, 0);
        auto r = parse_l4(h, 47);
        REQUIRE(!r.ok());
        CHECK(r.error().code == PacketErrc::not_tcp_udp);
    }
}

TEST_CASE("payload statistics") {
    SECTION("empty payload") {
        auto s = payload_stats({});
        CHECK(s.len == 0);
        CHECK(s.popcount_sum == 0);
        CHECK(s.printable_count == 0);
        CHECK(s.printable_run_max == 0);
        CHECK(s.printable_prefix_len == 0);
    }
    SECTION("all bits set") {
        std::vector<uint8_t> p(4, 0xFF);
        auto s = payload_stats(p);
        CHECK(s.len == 4);
        CHECK(s.popcount_sum == 32);
        CHECK(s.printable_count == 0);
        CHECK(s.printable_run_max == 0);
        CHECK(s.printable_prefix_len == 0);
    }
    SECTION("mixed printable and control bytes") {
        // "GET \x00A": expected values computed with the byte-wise reference
        std::vector<uint8_t> p = {'G', 'E', 'T', ' ', 0x00, 'A'};
        auto s = payload_stats(p);
        auto ref = reference_stats(p);
        CHECK(s.popcount_sum == ref.popcount_sum);
        CHECK(s.popcount_sum == 13);
        CHECK(s.printable_count == 5);
        CHECK(s.printable_run_max == 4);
        CHECK(s.printable_prefix_len == 4);
    }
    SECTION("matches the reference on random payloads") {
        std::mt19937 rng(7);
        for (int i = 0; i < 10000; ++i) {
            size_t len = rng() % 1501;
            std::vector<uint8_t> p(len);
            for (auto& b : p) b = static_cast<uint8_t>(rng() & 0xFF);
            auto got = payload_stats(p);
            auto want = reference_stats(p);
            REQUIRE(got.len == want.len);
            REQUIRE(got.popcount_sum == want.popcount_sum);
            REQUIRE(got.printable_count == want.printable_count);
            REQUIRE(got.printable_run_max == want.printable_run_max);
            REQUIRE(got.printable_prefix_len == want.printable_prefix_len);
            REQUIRE(got.printable_prefix_len <= got.printable_run_max);
        }
    }
    SECTION("popcount of uniform bytes averages 4 bits") {
        std::mt19937 rng(11);
        constexpr size_t n = 1 << 20;
        std::vector<uint8_t> p(n);
        for (auto& b : p) b = static_cast<uint8_t>(rng() & 0xFF);
        auto s = payload_stats(p);
        double mean = static_cast<double>(s.popcount_sum) / n;
        CHECK(mean > 4.0 * 0.99);
        CHECK(mean < 4.0 * 1.01);
    }
}

TEST_CASE("packet composition") {
    SECTION("ethernet/ipv4/tcp built by the frame builder round-trips") {
        wire::EthSpec eth{MacAddr{{2, 0, 0, 0, 0, 1}}, MacAddr{{2, 0, 0, 0, 0, 2}}};
        wire::IpSpec ip{IpAddr::v4(10, 0, 0, 1), IpAddr::v4(10, 0, 0, 2)};
        wire::TcpSpec tcp;
        tcp.src_port = 40000;
        tcp.dst_port = 443;
        tcp.seq = 12345;
        tcp.ack = 999;
        tcp.flags.syn = true;
        std::vector<uint8_t> payload = {1, 2, 3};
        auto frame = wire::build_tcp_frame(eth, ip, tcp, payload);

        auto pkt = parse_packet(frame, LinkType::ethernet, 1.5);
        REQUIRE(pkt.ok());
        REQUIRE(pkt->eth);
        CHECK(pkt->eth->src_mac == eth.src);
        CHECK(pkt->eth->dst_mac == eth.dst);
        REQUIRE(pkt->ip);
        CHECK(pkt->ip->src_ip == ip.src);
        CHECK(pkt->ip->dst_ip == ip.dst);
        REQUIRE(pkt->l4);
        CHECK(pkt->l4->src_port == 40000);
        CHECK(pkt->l4->dst_port == 443);
        CHECK(pkt->l4->seq == 12345);
        CHECK(pkt->l4->flags.syn);
        CHECK(pkt->stats.len == 3);
        CHECK(pkt->timestamp == 1.5);
    }
    SECTION("raw-ip link with ipv6/udp has no ethernet layer") {
        auto v6 = IpAddr::parse("2001:db8::1");
        auto v6b = IpAddr::parse("2001:db8::2");
        REQUIRE(v6);
        REQUIRE(v6b);
        wire::IpSpec ip{*v6, *v6b};
        wire::UdpSpec udp{5353, 53};
        std::vector<uint8_t> payload = {9, 9};
        auto seg = wire::build_udp(ip, udp, payload);
        auto dgram = wire::build_ip(ip, kProtoUdp, seg);
        auto pkt = parse_packet(dgram, LinkType::raw_ip, 0.0);
        REQUIRE(pkt.ok());
        CHECK(!pkt->eth);
        REQUIRE(pkt->ip);
        CHECK(pkt->ip->version == 6);
        REQUIRE(pkt->l4);
        CHECK(pkt->l4->dst_port == 53);
        CHECK(pkt->stats.len == 2);
    }
    SECTION("arp frames carry a validity note and no l4") {
        std::vector<uint8_t> arp(28, 0);
        store_be16(&arp[0], 1);
        store_be16(&arp[2], 0x0800);
        arp[4] = 6;
        arp[5] = 4;
        store_be16(&arp[6], 2);
        wire::EthSpec eth{MacAddr{{2, 0, 0, 0, 0, 1}}, MacAddr{{2, 0, 0, 0, 0, 2}}};
        auto frame = wire::build_ethernet(eth, kEthertypeArp, arp);
        auto pkt = parse_packet(frame, LinkType::ethernet, 0.0);
        REQUIRE(pkt.ok());
        REQUIRE(pkt->arp_valid);
        CHECK(*pkt->arp_valid);
        CHECK(!pkt->ip);
        CHECK(!pkt->l4);
    }
    SECTION("round-trip recovers builder inputs on random packets") {
        std::mt19937 rng(3);
        for (int i = 0; i < 500; ++i) {
            wire::EthSpec eth;
            for (auto& b : eth.src.bytes) b = static_cast<uint8_t>(rng());
            for (auto& b : eth.dst.bytes) b = static_cast<uint8_t>(rng());
            wire::IpSpec ip{IpAddr::v4(10, 1, static_cast<uint8_t>(rng()),
                                       static_cast<uint8_t>(rng())),
                            IpAddr::v4(10, 2, static_cast<uint8_t>(rng()),
                                       static_cast<uint8_t>(rng()))};
            ip.ttl = static_cast<uint8_t>(1 + rng() % 255);
            bool is_tcp = rng() & 1;
            std::vector<uint8_t> payload(rng() % 64);
            for (auto& b : payload) b = static_cast<uint8_t>(rng());
            std::vector<uint8_t> frame;
            uint16_t sp = static_cast<uint16_t>(rng()), dp = static_cast<uint16_t>(rng());
            if (is_tcp) {
                wire::TcpSpec tcp;
                tcp.src_port = sp;
                tcp.dst_port = dp;
                tcp.seq = rng();
                tcp.ack = rng();
                tcp.flags.ack = true;
                frame = wire::build_tcp_frame(eth, ip, tcp, payload);
            } else {
                frame = wire::build_udp_frame(eth, ip, wire::UdpSpec{sp, dp}, payload);
            }
            auto pkt = parse_packet(frame, LinkType::ethernet, 0.0);
            REQUIRE(pkt.ok());
            REQUIRE(pkt->l4);
            REQUIRE(pkt->l4->src_port == sp);
            REQUIRE(pkt->l4->dst_port == dp);
            REQUIRE(pkt->ip->ttl == ip.ttl);
            REQUIRE(pkt->l4->payload.size() == payload.size());
            REQUIRE(std::equal(payload.begin(), payload.end(), pkt->l4->payload.begin()));
        }
    }
}
