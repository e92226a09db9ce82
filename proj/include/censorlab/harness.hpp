// Scenario corpus and experiment harness: generators for censor programs
// implementing well-known strategies, deterministic traffic builders, and a
// runner that replays allowed/forbidden traffic and scores accuracy as the
// mean of the allowed-success and forbidden-blocked rates.
#pragma once

#include <random>
#include <string>
#include <vector>

#include "censorlab/engine.hpp"
#include "censorlab/wire.hpp"

namespace censorlab::harness {

// ------------------------------------------------------------ program text

inline std::string escape_regex_literal(const std::string& s) {
    std::string out;
    for (char c : s) {
        if ((c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') ||
            c == '-' || c == '_')
            out += c;
        else {
            out += '\\';
            out += c;
        }
    }
    return out;
}

inline std::string join_alternation(const std::vector<std::string>& parts) {
    std::string out;
    for (size_t i = 0; i < parts.size(); ++i) {
        if (i) out += '|';
        out += parts[i];
    }
    return out;
}

// TLS SNI filtering: a minimal TLS record signature followed by a forbidden
// domain, on port 443 only. A hit resets the connection.
inline std::string scenario_sni_filter(const std::vector<std::string>& forbidden_domains) {
    std::vector<std::string> escaped;
    for (const auto& d : forbidden_domains) escaped.push_back(escape_regex_literal(d));
    std::string src;
    src += "REGEX sni = \"^[\\x16\\x17]\\x03[\\x00-\\x09].*(" + join_alternation(escaped) +
           ")\"\n";
    src += "process:\n";
    src += "if field:tcp.src EQ 443: COPY true -> reg:b:0\n";
    src += "if field:tcp.dst EQ 443: COPY true -> reg:b:0\n";
    src += "if reg:b:0 EQ false: RETURN allow\n";
    src += "if REGEX sni: RETURN reset(1)\n";
    return src;
}

// The fully-encrypted-protocol heuristic: the first non-empty payload from
// the initiator is checked against five exemption rules; traffic passing
// none of them condemns the connection.
//
// Ex1 uses exact integer arithmetic (10*popcount vs 34*len / 46*len), so a
// payload whose average popcount is exactly 3.4 or 4.6 per byte sits inside
// the suspicious band and is NOT exempted: exemption needs the average to be
// strictly outside [3.4, 4.6].
inline std::string scenario_gfw_fully_encrypted() {
    return
        "REGEX exempt_proto = \"^(HTTP|[\\x16\\x17]\\x03[\\x00-\\x09])\"\n"
        "process:\n"
        "if field:direction EQ 1: RETURN allow\n"
        "if field:payload.len EQ 0: RETURN allow\n"
        "# Ex5: plaintext protocol prefix (HTTP or TLS)\n"
        "if REGEX exempt_proto: RETURN ALLOW_ALL\n"
        "# Ex2: at least 6 printable bytes at the start\n"
        "if field:payload.printable_prefix GEQ 6: RETURN ALLOW_ALL\n"
        "# Ex3: more than half the payload printable\n"
        "MUL field:payload.printable , 2 -> reg:u32:0\n"
        "if reg:u32:0 GT field:payload.len: RETURN ALLOW_ALL\n"
        "# Ex4: a run of 20 printable bytes anywhere\n"
        "if field:payload.printable_run GEQ 20: RETURN ALLOW_ALL\n"
        "# Ex1: average popcount strictly outside [3.4, 4.6] bits per byte\n"
        "MUL field:payload.popcount , 10 -> reg:u32:1\n"
        "MUL field:payload.len , 34 -> reg:u32:2\n"
        "if reg:u32:1 LT reg:u32:2: RETURN ALLOW_ALL\n"
        "MUL field:payload.len , 46 -> reg:u32:3\n"
        "if reg:u32:1 GT reg:u32:3: RETURN ALLOW_ALL\n"
        "RETURN DROP_ALL\n";
}

// Drops every packet of a connection after the first n.
inline std::string scenario_packet_count(uint32_t n) {
    std::string src;
    src += "COPY reg:u32:0 0\n";
    src += "process:\n";
    src += "if reg:u32:0 GEQ " + std::to_string(n) + ": RETURN drop\n";
    src += "INC reg:u32:0\n";
    return src;
}

// Feeds the first k non-empty payload lengths to a model; when out:0
// exceeds the threshold the connection is condemned.
inline std::string scenario_ml_classifier(const std::string& model_name, uint32_t k,
                                          double threshold) {
    std::string src = "process:\n";
    src += "if field:payload.len EQ 0: RETURN allow\n";
    src += "if reg:u32:0 GEQ " + std::to_string(k) + ": RETURN allow\n";
    for (uint32_t i = 0; i < k; ++i)
        src += "if reg:u32:0 EQ " + std::to_string(i) +
               ": COPY field:payload.len -> model:" + model_name + ":in:" +
               std::to_string(i) + "\n";
    src += "INC reg:u32:0\n";
    src += "if reg:u32:0 NEQ " + std::to_string(k) + ": RETURN allow\n";
    src += "MODEL " + model_name + "\n";
    char thr[32];
    std::snprintf(thr, sizeof thr, "%g", threshold);
    std::string t(thr);
    if (t.find('.') == std::string::npos && t.find('e') == std::string::npos) t += ".0";
    src += "if model:" + model_name + ":out:0 GT " + t + ": RETURN DROP_ALL\n";
    src += "RETURN allow\n";
    return src;
}

// HTTP keyword filtering on port 80: forbidden words reset the connection.
inline std::string scenario_keyword_filter(const std::vector<std::string>& keywords) {
    std::vector<std::string> escaped;
    for (const auto& k : keywords) escaped.push_back(escape_regex_literal(k));
    std::string src;
    src += "REGEX kw = \"(" + join_alternation(escaped) + ")\"\n";
    src += "process:\n";
    src += "if field:tcp.src EQ 80: COPY true -> reg:b:0\n";
    src += "if field:tcp.dst EQ 80: COPY true -> reg:b:0\n";
    src += "if reg:b:0 EQ false: RETURN allow\n";
    src += "if REGEX kw: RETURN reset(1)\n";
    return src;
}

// Wire-format QNAME for one domain: length-prefixed labels, NUL-terminated.
inline std::string dns_qname_wire(const std::string& domain) {
    std::string out;
    size_t start = 0;
    while (start <= domain.size()) {
        size_t dot = domain.find('.', start);
        if (dot == std::string::npos) dot = domain.size();
        size_t len = dot - start;
        out += static_cast<char>(len);
        out += domain.substr(start, len);
        start = dot + 1;
        if (dot == domain.size()) break;
    }
    out += '\0';
    return out;
}

// Exact-match DNS filtering: drops queries on port 53 whose QNAME matches a
// forbidden domain exactly (length bytes and terminator included).
inline std::string scenario_dns_exact(const std::vector<std::string>& forbidden_domains) {
    std::vector<std::string> patterns;
    for (const auto& d : forbidden_domains) {
        std::string qname = dns_qname_wire(d);
        std::string pat;
        for (unsigned char c : qname) {
            char buf[5];
            std::snprintf(buf, sizeof buf, "\\x%02x", c);
            pat += buf;
        }
        patterns.push_back(std::move(pat));
    }
    std::string src;
    src += "REGEX dns = \"(" + join_alternation(patterns) + ")\"\n";
    src += "process:\n";
    src += "if field:udp.dst EQ 53: COPY true -> reg:b:0\n";
    src += "if field:udp.src EQ 53: COPY true -> reg:b:0\n";
    src += "if reg:b:0 EQ false: RETURN allow\n";
    src += "if REGEX dns: RETURN drop\n";
    return src;
}

// ---------------------------------------------------------- traffic builders

struct TimedFrame {
    double ts = 0;
    std::vector<uint8_t> bytes;
};
using Flow = std::vector<TimedFrame>;

struct FlowSpec {
    MacAddr client_mac{{0x02, 0, 0, 0, 0, 0x01}};
    MacAddr server_mac{{0x02, 0, 0, 0, 0, 0x02}};
    IpAddr client_ip = IpAddr::v4(10, 0, 0, 1);
    IpAddr server_ip = IpAddr::v4(192, 0, 2, 1);
    uint16_t client_port = 40000;
    uint16_t server_port = 443;
    double t0 = 0.0;
    double dt = 0.01;  // inter-packet gap
};

// One payload in a flow, tagged with its direction.
struct Payload {
    bool from_client = true;
    std::vector<uint8_t> data;
};

// TCP three-way handshake followed by the payloads, with consistent
// sequence/acknowledgment arithmetic. SYN and FIN consume one sequence step.
inline Flow build_tcp_flow(const FlowSpec& spec, const std::vector<Payload>& payloads) {
    Flow flow;
    double ts = spec.t0;
    uint32_t client_isn = 1000, server_isn = 77000;
    wire::EthSpec c2s_eth{spec.client_mac, spec.server_mac};
    wire::EthSpec s2c_eth{spec.server_mac, spec.client_mac};
    wire::IpSpec c2s_ip{spec.client_ip, spec.server_ip};
    wire::IpSpec s2c_ip{spec.server_ip, spec.client_ip};

    auto push = [&](const wire::EthSpec& eth, const wire::IpSpec& ip, wire::TcpSpec tcp,
                    std::span<const uint8_t> payload = {}) {
        flow.push_back({ts, wire::build_tcp_frame(eth, ip, tcp, payload)});
        ts += spec.dt;
    };

    wire::TcpSpec syn;
    syn.src_port = spec.client_port;
    syn.dst_port = spec.server_port;
    syn.seq = client_isn;
    syn.flags.syn = true;
    push(c2s_eth, c2s_ip, syn);

    wire::TcpSpec synack;
    synack.src_port = spec.server_port;
    synack.dst_port = spec.client_port;
    synack.seq = server_isn;
    synack.ack = client_isn + 1;
    synack.flags.syn = true;
    synack.flags.ack = true;
    push(s2c_eth, s2c_ip, synack);

    uint32_t c_next = client_isn + 1, s_next = server_isn + 1;
    wire::TcpSpec ack;
    ack.src_port = spec.client_port;
    ack.dst_port = spec.server_port;
    ack.seq = c_next;
    ack.ack = s_next;
    ack.flags.ack = true;
    push(c2s_eth, c2s_ip, ack);

    for (const auto& p : payloads) {
        wire::TcpSpec data;
        data.flags.ack = true;
        data.flags.psh = !p.data.empty();
        if (p.from_client) {
            data.src_port = spec.client_port;
            data.dst_port = spec.server_port;
            data.seq = c_next;
            data.ack = s_next;
            c_next += static_cast<uint32_t>(p.data.size());
            push(c2s_eth, c2s_ip, data, p.data);
        } else {
            data.src_port = spec.server_port;
            data.dst_port = spec.client_port;
            data.seq = s_next;
            data.ack = c_next;
            s_next += static_cast<uint32_t>(p.data.size());
            push(s2c_eth, s2c_ip, data, p.data);
        }
    }
    return flow;
}

inline Flow build_udp_flow(const FlowSpec& spec, const std::vector<Payload>& payloads) {
    Flow flow;
    double ts = spec.t0;
    wire::EthSpec c2s_eth{spec.client_mac, spec.server_mac};
    wire::EthSpec s2c_eth{spec.server_mac, spec.client_mac};
    wire::IpSpec c2s_ip{spec.client_ip, spec.server_ip};
    wire::IpSpec s2c_ip{spec.server_ip, spec.client_ip};
    for (const auto& p : payloads) {
        wire::UdpSpec udp;
        if (p.from_client) {
            udp.src_port = spec.client_port;
            udp.dst_port = spec.server_port;
            flow.push_back({ts, wire::build_udp_frame(c2s_eth, c2s_ip, udp, p.data)});
        } else {
            udp.src_port = spec.server_port;
            udp.dst_port = spec.client_port;
            flow.push_back({ts, wire::build_udp_frame(s2c_eth, s2c_ip, udp, p.data)});
        }
        ts += spec.dt;
    }
    return flow;
}

// A TLS 1.x ClientHello record carrying the given SNI (record 16 03 01,
// handshake type 01, extension 0).
inline std::vector<uint8_t> build_client_hello(const std::string& sni, std::mt19937& rng) {
    std::vector<uint8_t> hello;
    hello.push_back(0x03);  // client_version 3.3
    hello.push_back(0x03);
    for (int i = 0; i < 32; ++i)
        hello.push_back(static_cast<uint8_t>(rng() & 0xFF));  // random
    hello.push_back(0x00);  // session id length
    hello.push_back(0x00);  // cipher suites: 2 suites
    hello.push_back(0x04);
    hello.push_back(0x13);
    hello.push_back(0x01);
    hello.push_back(0x13);
    hello.push_back(0x02);
    hello.push_back(0x01);  // compression methods
    hello.push_back(0x00);

    // extensions: server_name only
    std::vector<uint8_t> ext;
    uint16_t name_len = static_cast<uint16_t>(sni.size());
    ext.push_back(0x00);  // extension type 0 (server_name)
    ext.push_back(0x00);
    uint16_t ext_body = static_cast<uint16_t>(2 + 1 + 2 + name_len);
    ext.push_back(static_cast<uint8_t>(ext_body >> 8));
    ext.push_back(static_cast<uint8_t>(ext_body));
    uint16_t list_len = static_cast<uint16_t>(1 + 2 + name_len);
    ext.push_back(static_cast<uint8_t>(list_len >> 8));
    ext.push_back(static_cast<uint8_t>(list_len));
    ext.push_back(0x00);  // name type: host_name
    ext.push_back(static_cast<uint8_t>(name_len >> 8));
    ext.push_back(static_cast<uint8_t>(name_len));
    ext.insert(ext.end(), sni.begin(), sni.end());

    hello.push_back(static_cast<uint8_t>(ext.size() >> 8));
    hello.push_back(static_cast<uint8_t>(ext.size()));
    hello.insert(hello.end(), ext.begin(), ext.end());

    std::vector<uint8_t> record;
    record.push_back(0x16);  // handshake
    record.push_back(0x03);
    record.push_back(0x01);
    uint32_t hs_len = static_cast<uint32_t>(hello.size());
    record.push_back(static_cast<uint8_t>((hs_len + 4) >> 8));
    record.push_back(static_cast<uint8_t>(hs_len + 4));
    record.push_back(0x01);  // client hello
    record.push_back(static_cast<uint8_t>(hs_len >> 16));
    record.push_back(static_cast<uint8_t>(hs_len >> 8));
    record.push_back(static_cast<uint8_t>(hs_len));
    record.insert(record.end(), hello.begin(), hello.end());
    return record;
}

inline std::vector<uint8_t> random_payload(size_t len, std::mt19937& rng) {
    std::vector<uint8_t> out(len);
    for (auto& b : out) b = static_cast<uint8_t>(rng() & 0xFF);
    return out;
}

inline std::vector<uint8_t> printable_payload(size_t len, std::mt19937& rng) {
    std::vector<uint8_t> out(len);
    for (auto& b : out) b = static_cast<uint8_t>(0x20 + rng() % 0x5F);
    return out;
}

// A word from a restricted alphabet; disjoint alphabets keep the allowed
// corpus free of forbidden keywords by construction.
inline std::string random_word(std::string_view alphabet, size_t len, std::mt19937& rng) {
    std::string out;
    for (size_t i = 0; i < len; ++i) out += alphabet[rng() % alphabet.size()];
    return out;
}

// DNS query payload: header + QNAME + QTYPE A + QCLASS IN.
inline std::vector<uint8_t> build_dns_query(const std::string& domain, uint16_t txid) {
    std::vector<uint8_t> out;
    out.push_back(static_cast<uint8_t>(txid >> 8));
    out.push_back(static_cast<uint8_t>(txid));
    out.push_back(0x01);  // RD
    out.push_back(0x00);
    out.push_back(0x00);  // QDCOUNT = 1
    out.push_back(0x01);
    for (int i = 0; i < 6; ++i) out.push_back(0x00);
    std::string qname = dns_qname_wire(domain);
    out.insert(out.end(), qname.begin(), qname.end());
    out.push_back(0x00);  // QTYPE A
    out.push_back(0x01);
    out.push_back(0x00);  // QCLASS IN
    out.push_back(0x01);
    return out;
}

// ------------------------------------------------------------- experiments

struct Scenario {
    std::string name;
    std::string program_source;
    std::vector<std::pair<std::string, std::string>> models;  // name -> path
    std::vector<Flow> allowed;
    std::vector<Flow> forbidden;
};

struct ExperimentReport {
    size_t allowed_total = 0;
    size_t allowed_succeeded = 0;
    size_t forbidden_total = 0;
    size_t forbidden_blocked = 0;
    std::string error;  // non-empty when the experiment could not run

    double accuracy() const {
        double allowed_rate =
            allowed_total ? static_cast<double>(allowed_succeeded) / allowed_total : 1.0;
        double blocked_rate =
            forbidden_total ? static_cast<double>(forbidden_blocked) / forbidden_total : 1.0;
        return (allowed_rate + blocked_rate) / 2.0;
    }

    std::vector<std::string> to_lines(const std::string& name) const {
        char acc[32];
        std::snprintf(acc, sizeof acc, "%.6f", accuracy());
        return {"scenario=" + name,
                "allowed_total=" + std::to_string(allowed_total),
                "allowed_succeeded=" + std::to_string(allowed_succeeded),
                "forbidden_total=" + std::to_string(forbidden_total),
                "forbidden_blocked=" + std::to_string(forbidden_blocked),
                "accuracy=" + std::string(acc)};
    }
};

// Replays each traffic class through a fresh engine. An allowed connection
// succeeds when every packet is accepted; a forbidden connection is blocked
// when any packet draws Drop/Reset or the connection becomes condemned.
inline ExperimentReport run_experiment(const Scenario& scenario) {
    ExperimentReport report;

    auto run_class = [&](const std::vector<Flow>& flows, bool forbidden,
                         size_t& positive) -> bool {
        Engine engine;
        for (const auto& [name, path] : scenario.models) {
            auto m = engine.models()->load(name, path);
            if (!m) {
                report.error = "model " + name + ": " + m.error().message;
                return false;
            }
        }
        auto loaded = engine.load_program_source(scenario.program_source);
        if (!loaded) {
            report.error = "program: " + loaded.error().message;
            return false;
        }
        for (const auto& flow : flows) {
            bool clean = true;
            bool blocked = false;
            for (const auto& frame : flow) {
                Verdict v = engine.process_packet(frame.bytes, LinkType::ethernet,
                                                  frame.ts, IfaceDir::unknown);
                if (v.action.kind != ActionKind::accept) clean = false;
                if (v.action.kind == ActionKind::drop || v.action.kind == ActionKind::reset)
                    blocked = true;
            }
            if (forbidden) {
                if (blocked) ++positive;
            } else if (clean) {
                ++positive;
            }
        }
        return true;
    };

    report.allowed_total = scenario.allowed.size();
    report.forbidden_total = scenario.forbidden.size();
    if (!run_class(scenario.allowed, false, report.allowed_succeeded)) return report;
    run_class(scenario.forbidden, true, report.forbidden_blocked);
    return report;
}

} // namespace censorlab::harness
