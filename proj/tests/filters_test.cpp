#include <catch2/catch_amalgamated.hpp>

#include <random>

#include "censorlab/filters.hpp"

using namespace censorlab;

TEST_CASE("blocklist before allowlist, all eight membership combinations") {
    auto ip = IpAddr::v4(10, 0, 0, 5);
    auto other = IpAddr::v4(10, 0, 0, 6);
    auto id = Identifier::of_ip(ip);

    for (bool in_block : {false, true}) {
        for (bool allow_enabled : {false, true}) {
            for (bool in_allow : {false, true}) {
                FilterList block(IdClass::ip, false);
                FilterList allow(IdClass::ip, true);
                block.set_action(Action::drop());
                allow.set_action(Action::reset(1));
                if (in_block) REQUIRE(block.add(id).ok());
                if (allow_enabled) REQUIRE(allow.add(Identifier::of_ip(other)).ok());
                if (in_allow) REQUIRE(allow.add(id).ok());

                auto verdict = evaluate(id, block, allow);
                INFO("in_block=" << in_block << " allow_enabled=" << (allow_enabled || in_allow)
                                 << " in_allow=" << in_allow);
                if (in_block) {
                    REQUIRE(verdict.has_value());
                    CHECK(verdict->kind == ActionKind::drop);
                } else if ((allow_enabled || in_allow) && !in_allow) {
                    REQUIRE(verdict.has_value());
                    CHECK(verdict->kind == ActionKind::reset);
                } else {
                    CHECK(!verdict.has_value());
                }
            }
        }
    }
}

TEST_CASE("an empty allowlist is disabled") {
    FilterList block(IdClass::ip, false);
    FilterList allow(IdClass::ip, true);
    auto id = Identifier::of_ip(IpAddr::v4(1, 2, 3, 4));
    CHECK(!evaluate(id, block, allow).has_value());
    CHECK(!allow.enabled());
    REQUIRE(allow.add(Identifier::of_ip(IpAddr::v4(9, 9, 9, 9))).ok());
    CHECK(allow.enabled());
    auto verdict = evaluate(id, block, allow);
    REQUIRE(verdict.has_value());
}

TEST_CASE("set semantics") {
    FilterList list(IdClass::udp_service, false);
    ServiceId svc{IpAddr::v4(8, 8, 8, 8), 53};
    auto id = Identifier::of_service(IdClass::udp_service, svc);

    SECTION("add is idempotent") {
        auto first = list.add(id);
        REQUIRE(first.ok());
        CHECK(*first);
        auto second = list.add(id);
        REQUIRE(second.ok());
        CHECK(!*second);
        CHECK(list.size() == 1);
    }
    SECTION("removing an absent entry reports not-found") {
        auto r = list.remove(id);
        REQUIRE(!r.ok());
        CHECK(r.error() == ListErrc::not_found);
        CHECK(list.size() == 0);
    }
    SECTION("shape mismatch is rejected") {
        auto r = list.add(Identifier::of_ip(IpAddr::v4(8, 8, 8, 8)));
        REQUIRE(!r.ok());
        CHECK(r.error() == ListErrc::shape_mismatch);
    }
    SECTION("configured action flows through evaluation") {
        REQUIRE(list.add(id).ok());
        list.set_action(Action::reset(3));
        FilterList allow(IdClass::udp_service, true);
        auto verdict = evaluate(id, list, allow);
        REQUIRE(verdict.has_value());
        CHECK(verdict->kind == ActionKind::reset);
        CHECK(verdict->reset_count == 3);
    }
}

TEST_CASE("subnet membership equals a brute-force prefix scan") {
    std::mt19937 rng(17);
    for (int round = 0; round < 50; ++round) {
        std::vector<Subnet> entries;
        SubnetTrie trie;
        for (int i = 0; i < 40; ++i) {
            IpAddr ip = IpAddr::v4(static_cast<uint8_t>(rng()), static_cast<uint8_t>(rng()),
                                   static_cast<uint8_t>(rng()), static_cast<uint8_t>(rng()));
            Subnet s{ip, static_cast<uint8_t>(rng() % 33)};
            entries.push_back(s);
            trie.insert(s);
        }
        for (int probe = 0; probe < 200; ++probe) {
            IpAddr ip = IpAddr::v4(static_cast<uint8_t>(rng()), static_cast<uint8_t>(rng()),
                                   static_cast<uint8_t>(rng()), static_cast<uint8_t>(rng()));
            bool want = false;
            for (const auto& s : entries)
                if (s.contains(ip)) want = true;
            REQUIRE(trie.contains_prefix_of(ip) == want);
        }
    }
}

TEST_CASE("subnet lists on ipv6") {
    SubnetTrie trie;
    auto net = Subnet::parse("2001:db8::/32");
    REQUIRE(net);
    trie.insert(*net);
    CHECK(trie.contains_prefix_of(*IpAddr::parse("2001:db8::42")));
    CHECK(!trie.contains_prefix_of(*IpAddr::parse("2001:db9::42")));
    CHECK(!trie.contains_prefix_of(IpAddr::v4(32, 1, 13, 184)));  // v4 never matches v6
}

TEST_CASE("connection identifiers normalize direction") {
    auto a = IpAddr::v4(192, 168, 1, 2);
    auto b = IpAddr::v4(8, 8, 8, 8);
    auto fwd = ConnectionId::normalized(a, 23212, b, 53);
    auto rev = ConnectionId::normalized(b, 53, a, 23212);
    CHECK(fwd == rev);

    FilterList list(IdClass::udp_connection, false);
    REQUIRE(list.add(Identifier::of_connection(IdClass::udp_connection, fwd)).ok());
    CHECK(list.contains(Identifier::of_connection(IdClass::udp_connection, rev)));
}

TEST_CASE("identifier argument parsing") {
    CHECK(parse_identifier_args(IdClass::mac, {"aa:bb:cc:dd:ee:ff"}).ok());
    CHECK(!parse_identifier_args(IdClass::mac, {"aa:bb"}).ok());
    CHECK(parse_identifier_args(IdClass::ip, {"10.0.0.5"}).ok());
    CHECK(parse_identifier_args(IdClass::ip, {"2001:db8::1"}).ok());
    CHECK(!parse_identifier_args(IdClass::ip, {"10.0.0.999"}).ok());
    CHECK(parse_identifier_args(IdClass::ip_subnet, {"10.0.0.0/8"}).ok());
    CHECK(!parse_identifier_args(IdClass::ip_subnet, {"10.0.0.0/40"}).ok());
    CHECK(parse_identifier_args(IdClass::tcp_port, {"443"}).ok());
    CHECK(!parse_identifier_args(IdClass::tcp_port, {"70000"}).ok());
    CHECK(parse_identifier_args(IdClass::udp_service, {"8.8.8.8", "53"}).ok());
    CHECK(!parse_identifier_args(IdClass::udp_service, {"8.8.8.8"}).ok());
    CHECK(parse_identifier_args(IdClass::tcp_connection,
                                {"192.168.1.2", "8.8.8.8", "23212", "53"})
              .ok());
    CHECK(!parse_identifier_args(IdClass::tcp_connection, {"192.168.1.2", "8.8.8.8"}).ok());
}

TEST_CASE("filter set wires classes to their lists") {
    FilterSet set;
    auto id = Identifier::of_port(IdClass::tcp_port, 80);
    REQUIRE(set.blocklist(IdClass::tcp_port).add(id).ok());
    auto verdict = set.evaluate_class(IdClass::tcp_port, id);
    REQUIRE(verdict.has_value());
    // untouched classes pass everything
    CHECK(!set.evaluate_class(IdClass::udp_port,
                              Identifier::of_port(IdClass::udp_port, 80))
               .has_value());
}
