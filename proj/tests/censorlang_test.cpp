#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>

#include "censorlab/censorlang.hpp"

using namespace censorlab;
using namespace censorlab::lang;

namespace {

const char* kFig3bStyle =
    "COPY reg:u32:0 0\n"
    "process:\n"
    "if reg:u32:0 GEQ 10:\n"
    "    return DROP\n"
    "INC reg:u32:0\n";

Program parse_ok(std::string_view src) {
    auto p = Program::parse(src);
    if (!p) {
        INFO("line " << p.error().line << ": " << p.error().message);
        REQUIRE(p.ok());
    }
    return std::move(*p);
}

// A packet view over a synthetic TCP packet.
struct ViewFixture {
    ParsedPacket pkt;
    PacketView view;

    explicit ViewFixture(std::vector<uint8_t> payload = {}, bool tcp = true) {
        static std::vector<uint8_t> storage;
        storage = std::move(payload);
        IpDatagram ip;
        ip.ttl = 64;
        ip.next_proto = tcp ? kProtoTcp : kProtoUdp;
        pkt.ip = ip;
        TransportSegment seg;
        seg.proto = tcp ? kProtoTcp : kProtoUdp;
        seg.src_port = 40000;
        seg.dst_port = tcp ? 443 : 53;
        seg.payload = storage;
        pkt.l4 = seg;
        pkt.stats = payload_stats(storage);
        view.pkt = &pkt;
        view.direction = 0;
        view.packet_count = 1;
    }
};

std::string write_temp_affine(const std::string& contents) {
    static int counter = 0;
    auto path = std::filesystem::temp_directory_path() /
                ("cl_test_model_" + std::to_string(::getpid()) + "_" +
                 std::to_string(counter++) + ".affine");
    std::ofstream f(path);
    f << contents;
    return path.string();
}

} // namespace

TEST_CASE("parsing the packet-count program") {
    auto prog = parse_ok(kFig3bStyle);
    CHECK(prog.init_ops.size() == 1);
    CHECK(prog.process_ops.size() == 2);
    REQUIRE(prog.registers.size() == 1);
    CHECK(prog.registers[0].cls == RegClass::conn);
    CHECK(prog.registers[0].type == RegType::u32);
    CHECK(prog.registers[0].index == 0);
    CHECK(prog.process_ops[0].guard.has_value());
    CHECK(prog.process_ops[0].op.op == Opcode::ret);
    CHECK(prog.process_ops[1].op.op == Opcode::add);  // INC desugars to ADD
}

TEST_CASE("parse errors") {
    SECTION("empty source is missing the process label") {
        auto p = Program::parse("");
        REQUIRE(!p.ok());
        CHECK(p.error().kind == ParseDiag::Kind::missing_process_label);
    }
    SECTION("labels other than process are not a thing") {
        auto p = Program::parse("loop:\nprocess:\nRETURN drop\n");
        REQUIRE(!p.ok());
        CHECK(p.error().kind == ParseDiag::Kind::syntax);
    }
    SECTION("RETURN in the init section is rejected") {
        auto p = Program::parse("RETURN drop\nprocess:\nRETURN allow\n");
        REQUIRE(!p.ok());
        CHECK(p.error().message.find("init") != std::string::npos);
    }
    SECTION("unknown field") {
        auto p = Program::parse("process:\nif field:payload.entropy GT 1: RETURN drop\n");
        REQUIRE(!p.ok());
        CHECK(p.error().kind == ParseDiag::Kind::unknown_field);
    }
    SECTION("undeclared regex") {
        auto p = Program::parse("process:\nif REGEX nope: RETURN drop\n");
        REQUIRE(!p.ok());
    }
    SECTION("regex declarations only before operations") {
        auto p = Program::parse("process:\nREGEX a = \"x\"\nRETURN drop\n");
        REQUIRE(!p.ok());
    }
    SECTION("duplicate process label") {
        auto p = Program::parse("process:\nprocess:\n");
        REQUIRE(!p.ok());
    }
    SECTION("error reports the line number") {
        auto p = Program::parse("COPY 0 -> reg:u32:0\nprocess:\nBOGUS x\n");
        REQUIRE(!p.ok());
        CHECK(p.error().line == 3);
    }
}

TEST_CASE("register spellings") {
    SECTION("index.type spelling normalizes to the canonical form") {
        auto prog = parse_ok("COPY 1 -> reg:0.u32\nprocess:\nINC reg:u32:0\n");
        REQUIRE(prog.registers.size() == 1);
        CHECK(prog.registers[0].type == RegType::u32);
        CHECK(prog.registers[0].index == 0);
    }
    SECTION("two-operand COPY accepts both orders") {
        // register first, literal second: register is the destination
        auto a = parse_ok("COPY reg:u32:0 7\nprocess:\nINC reg:u32:0\n");
        auto env_a = new_env(a, nullptr);
        REQUIRE(env_a.ok());
        CHECK(env_a->conn_regs[0].u == 7);
        // literal first, register second: same meaning
        auto b = parse_ok("COPY 7 model:none.b\nprocess:\nINC reg:u32:0\n");
        (void)b;  // parse-only: model registers resolve at bind time
        auto c = parse_ok("COPY 7 reg:u32:0\nprocess:\nINC reg:u32:0\n");
        auto env_c = new_env(c, nullptr);
        REQUIRE(env_c.ok());
        CHECK(env_c->conn_regs[0].u == 7);
    }
    SECTION("all register types parse") {
        auto prog = parse_ok(
            "COPY 1 -> reg:f32:0\nCOPY 1 -> reg:f64:1\nCOPY 1 -> reg:i32:2\n"
            "COPY 1 -> reg:u32:3\nCOPY 1 -> reg:i64:4\nCOPY 1 -> reg:u64:5\n"
            "COPY true -> reg:b:6\nprocess:\nINC reg:u32:3\n");
        CHECK(prog.registers.size() == 7);
    }
}

TEST_CASE("static analysis") {
    SECTION("packet-count program uses 4 state bytes") {
        auto prog = parse_ok(kFig3bStyle);
        auto report = prog.analyze();
        CHECK(report.state_bytes == 4);
        CHECK(report.host_state_bytes == 0);
        CHECK(report.max_ops_per_packet == 2);
    }
    SECTION("u32 plus f64 registers cost 12 bytes") {
        auto prog = parse_ok(
            "process:\nADD reg:u32:0 , 1 -> reg:u32:0\nADD reg:f64:3 , 1.0 -> reg:f64:3\n");
        CHECK(prog.analyze().state_bytes == 12);
    }
    SECTION("unit cost table counts operations") {
        auto prog = parse_ok(kFig3bStyle);
        auto report = prog.analyze();  // default weights are 1.0
        size_t total_ops = 0;
        for (const auto& [op, count] : report.op_histogram) total_ops += count;
        CHECK(report.cost == static_cast<double>(total_ops));
        CHECK(total_ops == 3);  // COPY, RETURN, ADD
        CHECK(report.op_histogram.at("COPY") == 1);
        CHECK(report.op_histogram.at("RETURN") == 1);
        CHECK(report.op_histogram.at("ADD") == 1);
    }
    SECTION("weights scale the cost") {
        auto prog = parse_ok(kFig3bStyle);
        CostTable costs;
        costs.weights["RETURN"] = 10.0;
        CHECK(prog.analyze(costs).cost == 12.0);  // COPY 1 + ADD 1 + RETURN 10
    }
    SECTION("host registers are counted separately") {
        auto prog = parse_ok("process:\nINC src:u32:0\nINC dst:f64:1\nINC reg:b:0\n");
        auto report = prog.analyze();
        CHECK(report.state_bytes == 1);
        CHECK(report.host_state_bytes == 12);
    }
}

TEST_CASE("environment creation") {
    SECTION("init runs once") {
        auto prog = parse_ok("COPY 41 -> reg:u32:0\nprocess:\nINC reg:u32:0\n");
        auto env = new_env(prog, nullptr);
        REQUIRE(env.ok());
        CHECK(env->conn_regs[0].u == 41);
    }
    SECTION("no init section means typed zeros") {
        auto prog = parse_ok("process:\nADD reg:f64:0 , 0.0 -> reg:f64:0\nINC reg:u32:1\n");
        auto env = new_env(prog, nullptr);
        REQUIRE(env.ok());
        CHECK(env->conn_regs[0].f == 0.0);
        CHECK(env->conn_regs[1].u == 0);
    }
    SECTION("unbound model reference fails environment creation") {
        auto prog = parse_ok("process:\nMODEL wf\n");
        ModelStore store;
        auto env = new_env(prog, &store);
        REQUIRE(!env.ok());
        CHECK(env.error().missing_model == "wf");
    }
}

TEST_CASE("execution of the packet-count program") {
    auto prog = parse_ok(kFig3bStyle);
    auto env = new_env(prog, nullptr);
    REQUIRE(env.ok());
    ViewFixture fx;

    SECTION("accepts ten packets then drops") {
        std::vector<ActionKind> actions;
        for (int i = 0; i < 15; ++i) {
            auto out = execute(*env, prog, fx.view);
            actions.push_back(out.action.kind);
        }
        for (int i = 0; i < 10; ++i) CHECK(actions[static_cast<size_t>(i)] == ActionKind::accept);
        for (int i = 10; i < 15; ++i) CHECK(actions[static_cast<size_t>(i)] == ActionKind::drop);
    }
    SECTION("matches a direct reimplementation over random connection lengths") {
        std::mt19937 rng(23);
        for (int trial = 0; trial < 1000; ++trial) {
            auto fresh = new_env(prog, nullptr);
            REQUIRE(fresh.ok());
            int len = 1 + static_cast<int>(rng() % 30);
            uint32_t n = 0;  // the reference: drop once more than 10 packets seen
            for (int i = 0; i < len; ++i) {
                auto out = execute(*fresh, prog, fx.view);
                bool want_drop = n >= 10;
                if (!want_drop) ++n;
                REQUIRE((out.action.kind == ActionKind::drop) == want_drop);
            }
        }
    }
}

TEST_CASE("execution semantics") {
    ViewFixture fx;

    SECTION("guard false falls through to accept") {
        auto prog = parse_ok("process:\nif field:payload.len GT 0: RETURN drop\n");
        auto env = new_env(prog, nullptr);
        auto out = execute(*env, prog, fx.view);
        CHECK(out.action.kind == ActionKind::accept);
        CHECK(out.escalation == Escalation::none);
    }
    SECTION("division by zero accepts with a fault") {
        auto prog = parse_ok("process:\nDIV 1 , 0 -> reg:u32:0\nRETURN drop\n");
        auto env = new_env(prog, nullptr);
        auto out = execute(*env, prog, fx.view);
        CHECK(out.action.kind == ActionKind::accept);
        REQUIRE(!out.faults.empty());
        CHECK(out.faults[0].find("division by zero") != std::string::npos);
    }
    SECTION("return actions and escalations") {
        struct Case {
            const char* text;
            ActionKind kind;
            Escalation esc;
        } cases[] = {
            {"RETURN allow", ActionKind::accept, Escalation::none},
            {"RETURN accept", ActionKind::accept, Escalation::none},
            {"RETURN ignore", ActionKind::none, Escalation::none},
            {"RETURN drop", ActionKind::drop, Escalation::none},
            {"RETURN reset", ActionKind::reset, Escalation::none},
            {"RETURN ALLOW_ALL", ActionKind::accept, Escalation::allow_all},
            {"RETURN DROP_ALL", ActionKind::drop, Escalation::drop_all},
        };
        for (const auto& c : cases) {
            auto prog = parse_ok(std::string("process:\n") + c.text + "\n");
            auto env = new_env(prog, nullptr);
            auto out = execute(*env, prog, fx.view);
            INFO(c.text);
            CHECK(out.action.kind == c.kind);
            CHECK(out.escalation == c.esc);
        }
    }
    SECTION("reset count and delay seconds") {
        auto prog = parse_ok("process:\nRETURN reset(2)\n");
        auto env = new_env(prog, nullptr);
        auto out = execute(*env, prog, fx.view);
        CHECK(out.action.kind == ActionKind::reset);
        CHECK(out.action.reset_count == 2);

        auto prog2 = parse_ok("process:\nRETURN delay:0.5\n");
        auto env2 = new_env(prog2, nullptr);
        auto out2 = execute(*env2, prog2, fx.view);
        CHECK(out2.action.kind == ActionKind::delay);
        CHECK(out2.action.delay_seconds == 0.5);
    }
    SECTION("unavailable fields read as zero with a fault") {
        ViewFixture udp({}, false);
        auto prog = parse_ok("process:\nCOPY field:tcp.src -> reg:u32:0\nRETURN drop\n");
        auto env = new_env(prog, nullptr);
        auto out = execute(*env, prog, udp.view);
        CHECK(out.action.kind == ActionKind::drop);  // execution continued
        CHECK(env->conn_regs[0].u == 0);
        CHECK(!out.faults.empty());
    }
    SECTION("straight-line bound holds") {
        auto prog = parse_ok(kFig3bStyle);
        auto bound = prog.analyze().max_ops_per_packet;
        auto env = new_env(prog, nullptr);
        for (int i = 0; i < 20; ++i) {
            auto out = execute(*env, prog, fx.view);
            REQUIRE(out.ops_executed <= bound);
        }
    }
    SECTION("execution is deterministic over a replay") {
        auto prog = parse_ok(kFig3bStyle);
        std::vector<ActionKind> first, second;
        for (int run = 0; run < 2; ++run) {
            auto env = new_env(prog, nullptr);
            auto& sink = run == 0 ? first : second;
            for (int i = 0; i < 25; ++i)
                sink.push_back(execute(*env, prog, fx.view).action.kind);
        }
        CHECK(first == second);
    }
}

TEST_CASE("conditions") {
    ViewFixture fx;
    auto make_env_for = [](Program& p) {
        auto env = new_env(p, nullptr);
        REQUIRE(env.ok());
        return std::move(*env);
    };

    SECTION("numeric comparison after coercion") {
        auto prog = parse_ok("COPY 9 -> reg:u32:0\nprocess:\nif reg:u32:0 GEQ 10: RETURN drop\n");
        auto env = make_env_for(prog);
        CHECK(execute(env, prog, fx.view).action.kind == ActionKind::accept);
    }
    SECTION("symbol and mnemonic operators agree") {
        for (const char* cond : {"reg:u32:0 >= 10", "reg:u32:0 GEQ 10"}) {
            auto prog = parse_ok("COPY 10 -> reg:u32:0\nprocess:\nif " + std::string(cond) +
                                 ": RETURN drop\n");
            auto env = make_env_for(prog);
            CHECK(execute(env, prog, fx.view).action.kind == ActionKind::drop);
        }
    }
    SECTION("mixed int/float comparison") {
        auto prog = parse_ok("COPY 4.5 -> reg:f64:0\nprocess:\nif reg:f64:0 GT 4: RETURN drop\n");
        auto env = make_env_for(prog);
        CHECK(execute(env, prog, fx.view).action.kind == ActionKind::drop);
    }
    SECTION("regex condition matches the raw payload") {
        std::vector<uint8_t> payload = {0x16, 0x03, 0x01, 0x02, 0x00};
        ViewFixture tls(payload);
        auto prog = parse_ok(
            "REGEX tls = \"^[\\x16\\x17]\\x03[\\x00-\\x09]\"\n"
            "process:\nif REGEX tls: RETURN reset\n");
        auto env = make_env_for(prog);
        CHECK(execute(env, prog, tls.view).action.kind == ActionKind::reset);
        ViewFixture plain(std::vector<uint8_t>{'h', 'i'});
        auto env2 = make_env_for(prog);
        CHECK(execute(env2, prog, plain.view).action.kind == ActionKind::accept);
    }
    SECTION("boolean operators") {
        auto prog = parse_ok(
            "COPY true -> reg:b:0\nCOPY true -> reg:b:1\n"
            "process:\nif reg:b:0 xor reg:b:1: RETURN drop\nRETURN allow\n");
        auto env = make_env_for(prog);
        CHECK(execute(env, prog, fx.view).action.kind == ActionKind::accept);  // true xor true
        auto prog2 = parse_ok(
            "COPY true -> reg:b:0\n"
            "process:\nif reg:b:0 or reg:b:1: RETURN drop\n");
        auto env2 = make_env_for(prog2);
        CHECK(execute(env2, prog2, fx.view).action.kind == ActionKind::drop);
    }
    SECTION("boolean operators on numbers are a type fault, condition false") {
        auto prog = parse_ok("process:\nif 1 and 1: RETURN drop\n");
        auto env = make_env_for(prog);
        auto out = execute(env, prog, fx.view);
        CHECK(out.action.kind == ActionKind::accept);
        CHECK(!out.faults.empty());
    }
}

TEST_CASE("register typing and coercion") {
    ViewFixture fx;
    struct Case {
        const char* src;
        Value::Kind kind;
        double f;
        int64_t i;
        uint64_t u;
        bool b;
    };
    auto run_one = [&](const std::string& body) {
        auto prog = parse_ok("process:\n" + body + "\nRETURN allow\n");
        auto env = new_env(prog, nullptr);
        REQUIRE(env.ok());
        execute(*env, prog, fx.view);
        return std::make_pair(std::move(prog), std::move(*env));
    };

    SECTION("u32 write of a negative value saturates to zero") {
        auto [prog, env] = run_one("SUB 0 , 1 -> reg:u32:0");
        CHECK(env.conn_regs[0].u == 0);
    }
    SECTION("u32 overflow saturates at the type maximum") {
        auto [prog, env] = run_one("ADD 4294967295 , 10 -> reg:u32:0");
        CHECK(env.conn_regs[0].u == 4294967295u);
    }
    SECTION("i32 saturates in both directions") {
        auto [prog, env] = run_one("MUL 2147483647 , 2 -> reg:i32:0");
        CHECK(env.conn_regs[0].i == 2147483647);
        auto [prog2, env2] = run_one("MUL -2147483647 , 3 -> reg:i32:0");
        CHECK(env2.conn_regs[0].i == -2147483648LL);
    }
    SECTION("float to integer register truncates") {
        auto [prog, env] = run_one("COPY 4.9 -> reg:u32:0");
        CHECK(env.conn_regs[0].u == 4);
    }
    SECTION("f32 registers round to single precision") {
        auto [prog, env] = run_one("COPY 0.1 -> reg:f32:0");
        CHECK(env.conn_regs[0].f == static_cast<double>(0.1f));
    }
    SECTION("bool register from a number is its truthiness") {
        auto [prog, env] = run_one("COPY 2 -> reg:b:0");
        CHECK(env.conn_regs[0].bv);
        auto [prog2, env2] = run_one("COPY 0 -> reg:b:0");
        CHECK(!env2.conn_regs[0].bv);
    }
    SECTION("float arithmetic path") {
        auto [prog, env] = run_one("DIV 1.0 , 4 -> reg:f64:0");
        CHECK(env.conn_regs[0].f == 0.25);
    }
    SECTION("integer division truncates") {
        auto [prog, env] = run_one("DIV 7 , 2 -> reg:u32:0");
        CHECK(env.conn_regs[0].u == 3);
    }
}

TEST_CASE("models inside programs") {
    ModelStore store;
    auto path = write_temp_affine("2 1\n1 -1\n0\n");
    REQUIRE(store.load("wf", path).ok());

    SECTION("gather, run, scatter") {
        auto prog = parse_ok(
            "process:\n"
            "COPY 3.0 -> model:wf:in:0\n"
            "COPY 1.0 -> model:wf:in:1\n"
            "MODEL wf\n"
            "if model:wf:out:0 GT 0.0: RETURN drop\n"
            "RETURN allow\n");
        REQUIRE(prog.bind_models(store).ok());
        auto env = new_env(prog, &store);
        REQUIRE(env.ok());
        ViewFixture fx;
        auto out = execute(*env, prog, fx.view, {}, &store);
        CHECK(out.action.kind == ActionKind::drop);  // 3 - 1 = 2 > 0
        CHECK(env->model_scratch[0].out[0] == 2.0f);
    }
    SECTION("unset in-registers feed zeros, output is the bias") {
        auto path2 = write_temp_affine("2 1\n1 -1\n5\n");
        REQUIRE(store.load("b5", path2).ok());
        auto prog = parse_ok("process:\nMODEL b5\nCOPY model:b5:out:0 -> reg:f32:0\n");
        REQUIRE(prog.bind_models(store).ok());
        auto env = new_env(prog, &store);
        REQUIRE(env.ok());
        ViewFixture fx;
        execute(*env, prog, fx.view, {}, &store);
        CHECK(env->conn_regs[0].f == 5.0);
    }
    SECTION("out-of-range model register index fails binding") {
        auto prog = parse_ok("process:\nCOPY 1.0 -> model:wf:in:5\nMODEL wf\n");
        auto bound = prog.bind_models(store);
        REQUIRE(!bound.ok());
        CHECK(bound.error().kind == ParseDiag::Kind::bad_model_index);
    }
    SECTION("unknown model fails binding") {
        auto prog = parse_ok("process:\nMODEL ghost\n");
        auto bound = prog.bind_models(store);
        REQUIRE(!bound.ok());
        CHECK(bound.error().kind == ParseDiag::Kind::unknown_model);
    }
    SECTION("model removed after binding takes the fault path") {
        auto prog = parse_ok("process:\nMODEL wf\nRETURN drop\n");
        REQUIRE(prog.bind_models(store).ok());
        auto env = new_env(prog, &store);
        REQUIRE(env.ok());
        REQUIRE(store.remove("wf").ok());
        ViewFixture fx;
        auto out = execute(*env, prog, fx.view, {}, &store);
        CHECK(out.action.kind == ActionKind::accept);  // fault, not drop
        CHECK(!out.faults.empty());
    }
    SECTION("model out-registers are read-only") {
        auto prog = parse_ok("process:\nCOPY 1.0 -> model:wf:out:0\nRETURN drop\n");
        REQUIRE(prog.bind_models(store).ok());
        auto env = new_env(prog, &store);
        REQUIRE(env.ok());
        ViewFixture fx;
        auto out = execute(*env, prog, fx.view, {}, &store);
        CHECK(!out.faults.empty());
    }
}

TEST_CASE("analyzer footprint matches the environment exactly") {
    ModelStore store;
    auto path = write_temp_affine("3 2\n1 0 0\n0 1 0\n0 0\n");
    REQUIRE(store.load("m", path).ok());
    auto prog = parse_ok(
        "COPY 0 -> reg:u32:0\n"
        "process:\n"
        "INC reg:u32:0\n"
        "COPY field:payload.len -> model:m:in:0\n"
        "MODEL m\n"
        "if model:m:out:0 GT 1.0: RETURN drop\n");
    REQUIRE(prog.bind_models(store).ok());
    auto report = prog.analyze();
    auto env = new_env(prog, &store);
    REQUIRE(env.ok());

    size_t env_conn_bytes = 0;
    for (size_t i = 0; i < prog.registers.size(); ++i)
        if (prog.registers[i].cls == RegClass::conn)
            env_conn_bytes += reg_type_width(prog.registers[i].type);
    CHECK(report.state_bytes == env_conn_bytes);
    size_t scratch = 0;
    for (const auto& s : env->model_scratch) scratch += 4 * (s.in.size() + s.out.size());
    CHECK(report.model_state_bytes == scratch);
    CHECK(report.models_used == std::vector<std::string>{"m"});
}
