#include <catch2/catch_amalgamated.hpp>

#include <random>

#include "censorlab/flows.hpp"
#include "censorlab/wire.hpp"

using namespace censorlab;

namespace {

ParsedPacket make_packet(const IpAddr& src, uint16_t sport, const IpAddr& dst,
                         uint16_t dport, uint8_t proto, double ts = 0.0) {
    ParsedPacket pkt;
    pkt.timestamp = ts;
    IpDatagram ip;
    ip.src_ip = src;
    ip.dst_ip = dst;
    ip.next_proto = proto;
    pkt.ip = ip;
    TransportSegment seg;
    seg.proto = proto;
    seg.src_port = sport;
    seg.dst_port = dport;
    pkt.l4 = seg;
    return pkt;
}

ParsedPacket reversed(const ParsedPacket& pkt) {
    return make_packet(pkt.ip->dst_ip, pkt.l4->dst_port, pkt.ip->src_ip, pkt.l4->src_port,
                       pkt.l4->proto, pkt.timestamp);
}

} // namespace

TEST_CASE("connection keys follow the aggregation ordering") {
    auto a = IpAddr::v4(10, 0, 0, 1);
    auto b = IpAddr::v4(10, 0, 0, 2);

    SECTION("source port larger: destination pair sorts first") {
        auto key = connection_key(make_packet(a, 12345, b, 443, kProtoTcp));
        REQUIRE(key.ok());
        CHECK(key->ip1 == b);
        CHECK(key->ip2 == a);
        CHECK(key->port1 == 443);
        CHECK(key->port2 == 12345);
        CHECK(key->proto == kProtoTcp);
    }
    SECTION("reverse packet produces the identical key") {
        auto fwd = connection_key(make_packet(a, 12345, b, 443, kProtoTcp));
        auto rev = connection_key(make_packet(b, 443, a, 12345, kProtoTcp));
        REQUIRE(fwd.ok());
        REQUIRE(rev.ok());
        CHECK(*fwd == *rev);
    }
    SECTION("equal ports: destination-first when it sorts lower") {
        // dst address below src address, so the tie-break puts dst first,
        // matching the aggregation's else-branch.
        auto key = connection_key(make_packet(b, 53, a, 53, kProtoUdp));
        REQUIRE(key.ok());
        CHECK(key->ip1 == a);  // dst
        CHECK(key->ip2 == b);  // src
        CHECK(key->port1 == 53);
        CHECK(key->port2 == 53);
    }
    SECTION("no transport layer") {
        ParsedPacket pkt;
        pkt.ip = IpDatagram{};
        auto key = connection_key(pkt);
        REQUIRE(!key.ok());
        CHECK(key.error() == FlowErrc::no_transport_layer);
    }
    SECTION("key symmetry over random tuples, ties included") {
        std::mt19937 rng(5);
        for (int i = 0; i < 10000; ++i) {
            IpAddr src = IpAddr::v4(static_cast<uint8_t>(rng()), static_cast<uint8_t>(rng()),
                                    static_cast<uint8_t>(rng()), static_cast<uint8_t>(rng()));
            IpAddr dst = IpAddr::v4(static_cast<uint8_t>(rng()), static_cast<uint8_t>(rng()),
                                    static_cast<uint8_t>(rng()), static_cast<uint8_t>(rng()));
            uint16_t sport = static_cast<uint16_t>(rng());
            // one in four draws force a port tie
            uint16_t dport = (rng() % 4 == 0) ? sport : static_cast<uint16_t>(rng());
            uint8_t proto = (rng() & 1) ? kProtoTcp : kProtoUdp;
            auto pkt = make_packet(src, sport, dst, dport, proto);
            auto fwd = connection_key(pkt);
            auto rev = connection_key(reversed(pkt));
            REQUIRE(fwd.ok());
            REQUIRE(rev.ok());
            REQUIRE(*fwd == *rev);
        }
    }
    SECTION("tcp and udp flows with equal tuples are distinct") {
        auto t = connection_key(make_packet(a, 1000, b, 2000, kProtoTcp));
        auto u = connection_key(make_packet(a, 1000, b, 2000, kProtoUdp));
        CHECK(!(*t == *u));
    }
}

TEST_CASE("flow table tracks initiators and state") {
    FlowTable table;
    auto a = IpAddr::v4(10, 0, 0, 1);
    auto b = IpAddr::v4(10, 0, 0, 2);
    auto first = make_packet(a, 12345, b, 443, kProtoTcp, 1.0);
    auto key = connection_key(first);
    REQUIRE(key.ok());

    SECTION("first packet creates state and stores the initiator port") {
        auto res = table.get_or_create(*key, first, nullptr);
        CHECK(res.is_new);
        CHECK(res.state->initiator_port == 12345);
        CHECK(res.state->initiator_ip == a);
        CHECK(res.state->packet_count == 1);
        CHECK(FlowTable::direction(first, *res.state) == Role::initiator);
    }
    SECTION("the reply maps to the same state as a responder") {
        auto res = table.get_or_create(*key, first, nullptr);
        auto reply = reversed(first);
        reply.timestamp = 1.5;
        auto rkey = connection_key(reply);
        auto res2 = table.get_or_create(*rkey, reply, nullptr);
        CHECK(!res2.is_new);
        CHECK(res2.state == res.state);
        CHECK(res2.state->packet_count == 2);
        CHECK(res2.state->last_seen == 1.5);
        CHECK(FlowTable::direction(reply, *res2.state) == Role::responder);
        CHECK(FlowTable::direction(first, *res2.state) == Role::initiator);
    }
    SECTION("environment factory runs once per connection") {
        int created = 0;
        auto factory = [&](const ParsedPacket&) {
            ++created;
            return lang::Env{};
        };
        table.get_or_create(*key, first, factory);
        table.get_or_create(*key, first, factory);
        CHECK(created == 1);
    }
}

TEST_CASE("idle eviction uses a strict inequality") {
    FlowTable table;
    auto a = IpAddr::v4(10, 0, 0, 1);
    auto b = IpAddr::v4(10, 0, 0, 2);
    auto pkt = make_packet(a, 1111, b, 80, kProtoTcp, 100.0);
    auto key = connection_key(pkt);
    table.get_or_create(*key, pkt, nullptr);

    SECTION("idle beyond the timeout is evicted") {
        CHECK(table.evict_idle(800.1, 600.0) == 1);
        CHECK(table.size() == 0);
    }
    SECTION("idle exactly the timeout survives") {
        CHECK(table.evict_idle(700.0, 600.0) == 0);
        CHECK(table.size() == 1);
    }
    SECTION("empty table evicts nothing") {
        FlowTable empty;
        CHECK(empty.evict_idle(1e9, 600.0) == 0);
    }
    SECTION("re-seen tuple after eviction is a new connection") {
        table.evict_idle(800.0, 600.0);
        auto later = make_packet(a, 1111, b, 80, kProtoTcp, 900.0);
        auto res = table.get_or_create(*connection_key(later), later, nullptr);
        CHECK(res.is_new);
        CHECK(res.state->packet_count == 1);
    }
}

TEST_CASE("size cap evicts the oldest connection first") {
    FlowTable table(600.0, 2);
    auto a = IpAddr::v4(10, 0, 0, 1);
    auto b = IpAddr::v4(10, 0, 0, 2);
    for (uint16_t i = 0; i < 3; ++i) {
        auto pkt = make_packet(a, static_cast<uint16_t>(20000 + i), b, 80, kProtoTcp,
                               static_cast<double>(i));
        table.get_or_create(*connection_key(pkt), pkt, nullptr);
    }
    CHECK(table.size() == 2);
    // the first (oldest) flow is gone
    auto oldest = make_packet(a, 20000, b, 80, kProtoTcp, 10.0);
    CHECK(table.find(*connection_key(oldest)) == nullptr);
}

TEST_CASE("interleaved flows keep separate environments") {
    auto prog = lang::Program::parse("process:\nINC reg:u32:0\n");
    REQUIRE(prog.ok());
    FlowTable table;
    auto a = IpAddr::v4(10, 0, 0, 1);
    auto b = IpAddr::v4(10, 0, 0, 2);
    auto flow1 = make_packet(a, 1111, b, 80, kProtoTcp);
    auto flow2 = make_packet(a, 2222, b, 80, kProtoTcp);
    auto factory = [&](const ParsedPacket&) {
        auto env = lang::new_env(*prog, nullptr);
        REQUIRE(env.ok());
        return std::move(*env);
    };
    auto s1 = table.get_or_create(*connection_key(flow1), flow1, factory);
    auto s2 = table.get_or_create(*connection_key(flow2), flow2, factory);
    REQUIRE(s1.state != s2.state);

    // run the program three times on flow1, once on flow2
    lang::PacketView view;
    view.pkt = &flow1;
    for (int i = 0; i < 3; ++i) lang::execute(s1.state->env, *prog, view);
    lang::execute(s2.state->env, *prog, view);
    CHECK(s1.state->env.conn_regs[0].u == 3);
    CHECK(s2.state->env.conn_regs[0].u == 1);
}

TEST_CASE("host state is shared by destination, not by connection") {
    auto prog = lang::Program::parse("process:\nINC dst:u32:0\n");
    REQUIRE(prog.ok());
    HostStore hosts;
    auto env1 = lang::new_env(*prog, nullptr);
    auto env2 = lang::new_env(*prog, nullptr);
    REQUIRE(env1.ok());
    REQUIRE(env2.ok());

    auto a = IpAddr::v4(10, 0, 0, 1);
    auto dst = IpAddr::v4(192, 0, 2, 9);
    auto other = IpAddr::v4(192, 0, 2, 10);
    auto pkt1 = make_packet(a, 1111, dst, 443, kProtoTcp);
    auto pkt2 = make_packet(a, 2222, dst, 443, kProtoTcp);

    lang::PacketView view;
    view.pkt = &pkt1;
    lang::HostBinding bind1{&hosts.file_for(a), &hosts.file_for(dst)};
    lang::execute(*env1, *prog, view, bind1);
    view.pkt = &pkt2;
    lang::HostBinding bind2{&hosts.file_for(a), &hosts.file_for(dst)};
    lang::execute(*env2, *prog, view, bind2);

    // both connections incremented the same per-host register
    auto key = lang::host_reg_key(lang::RegType::u32, 0);
    CHECK(hosts.file_for(dst).at(key).u == 2);
    CHECK(hosts.file_for(other).count(key) == 0);
}
