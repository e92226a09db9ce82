// censor.toml: engine mode, IPC endpoint, list seeds, program, models,
// idle timeout, and the per-op cost table.
//
//   [engine]
//   mode = "pcap"              # pcap | wire-sim | tap
//   idle-timeout = 600.0
//   max-connections = 0        # 0 = unbounded
//   log = "events.log"
//   time-emulation = false
//
//   [ipc]
//   bind = "127.0.0.1"
//   port = 25716
//
//   [program]
//   language = "censorlang"
//   path = "censor.cl"
//
//   [models]
//   wf = "models/wf.onnx"      # name = path (.onnx or .affine)
//   budget-ms = 50.0
//
//   [cost]
//   COPY = 1.0                 # per-op weights for the static analyzer
//
//   [blocklist.ip]             # one table per list; classes as in the IPC
//   action = "drop"
//   entries = ["10.0.0.5"]
//
//   [allowlist.udp-service]
//   action = "drop"
//   entries = ["8.8.8.8 53"]   # identifier arguments, space-separated
#pragma once

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "censorlab/censorlang.hpp"
#include "censorlab/filters.hpp"
#include "censorlab/toml.hpp"
#include "censorlab/util.hpp"

namespace censorlab {

enum class Mode { pcap, wire_sim, tap };

inline std::optional<Mode> parse_mode(std::string_view s) {
    std::string m = to_lower(trim(s));
    if (m == "pcap") return Mode::pcap;
    if (m == "wire-sim" || m == "wire") return Mode::wire_sim;
    if (m == "tap") return Mode::tap;
    return std::nullopt;
}

struct ConfigError {
    std::string message;
};

struct ListSeed {
    IdClass cls;
    bool allow = false;
    std::optional<Action> action;
    std::vector<Identifier> entries;
};

struct Config {
    Mode mode = Mode::pcap;
    double idle_timeout = 600.0;
    size_t max_connections = 0;
    std::string log_path;
    bool time_emulation = false;

    std::string ipc_bind = "127.0.0.1";
    uint16_t ipc_port = 25716;

    std::string program_language = "censorlang";
    std::string program_path;  // empty = no program

    std::vector<std::pair<std::string, std::string>> models;  // name -> path
    double model_budget_seconds = 0.050;

    lang::CostTable cost_table;
    std::vector<ListSeed> lists;

    static Result<Config, ConfigError> from_toml(const toml::Value& root,
                                                 const std::filesystem::path& base_dir) {
        Config cfg;
        auto resolve = [&](const std::string& p) -> std::string {
            std::filesystem::path fp(p);
            if (fp.is_absolute() || p.empty()) return p;
            return (base_dir / fp).string();
        };

        if (const auto* engine = root.get("engine")) {
            if (const auto* v = engine->get("mode")) {
                auto m = parse_mode(v->as_string());
                if (!m) return ConfigError{"unknown mode: " + v->as_string()};
                cfg.mode = *m;
            }
            if (const auto* v = engine->get("idle-timeout")) {
                cfg.idle_timeout = v->as_number(600.0);
                if (cfg.idle_timeout <= 0) return ConfigError{"idle-timeout must be positive"};
            }
            if (const auto* v = engine->get("max-connections"))
                cfg.max_connections = static_cast<size_t>(v->as_int(0));
            if (const auto* v = engine->get("log")) cfg.log_path = resolve(v->as_string());
            if (const auto* v = engine->get("time-emulation"))
                cfg.time_emulation = v->as_bool(false);
        }
        if (const auto* ipc = root.get("ipc")) {
            if (const auto* v = ipc->get("bind")) cfg.ipc_bind = v->as_string("127.0.0.1");
            if (const auto* v = ipc->get("port")) {
                int64_t p = v->as_int(25716);
                if (p < 1 || p > 65535) return ConfigError{"ipc port out of range"};
                cfg.ipc_port = static_cast<uint16_t>(p);
            }
            // The IPC endpoint stays on loopback so the control plane can
            // never be reached from the censored network.
            auto addr = IpAddr::parse(cfg.ipc_bind);
            if (!addr) return ConfigError{"bad ipc bind address: " + cfg.ipc_bind};
            if (!addr->is_v4 || addr->bytes[0] != 127)
                return ConfigError{"ipc bind must be a loopback address"};
        }
        if (const auto* program = root.get("program")) {
            if (const auto* v = program->get("language"))
                cfg.program_language = to_lower(v->as_string("censorlang"));
            if (const auto* v = program->get("path"))
                cfg.program_path = resolve(v->as_string());
            if (!cfg.program_path.empty() && cfg.program_language != "censorlang")
                return ConfigError{"unsupported program language: " + cfg.program_language};
        }
        if (const auto* models = root.get("models")) {
            for (const auto& [name, v] : models->table) {
                if (name == "budget-ms") {
                    cfg.model_budget_seconds = v.as_number(50.0) / 1000.0;
                    continue;
                }
                if (v.kind != toml::Value::Kind::string)
                    return ConfigError{"model path must be a string: " + name};
                cfg.models.emplace_back(name, resolve(v.str));
            }
        }
        if (const auto* cost = root.get("cost")) {
            for (const auto& [op, v] : cost->table)
                cfg.cost_table.weights[op] = v.as_number(1.0);
        }
        for (bool allow : {false, true}) {
            const auto* section = root.get(allow ? "allowlist" : "blocklist");
            if (!section) continue;
            for (const auto& [clsname, body] : section->table) {
                auto cls = parse_id_class(clsname);
                if (!cls) return ConfigError{"unknown identifier class: " + clsname};
                if (allow && (*cls == IdClass::tcp_connection || *cls == IdClass::udp_connection))
                    return ConfigError{"there is no connection-level allowlist"};
                ListSeed seed;
                seed.cls = *cls;
                seed.allow = allow;
                if (const auto* v = body.get("action")) {
                    auto a = parse_action(v->as_string());
                    if (!a) return ConfigError{"bad action: " + v->as_string()};
                    seed.action = *a;
                }
                if (const auto* v = body.get("entries")) {
                    if (v->kind != toml::Value::Kind::array)
                        return ConfigError{"entries must be an array"};
                    for (const auto& e : v->array) {
                        if (e.kind != toml::Value::Kind::string)
                            return ConfigError{"entries must be strings"};
                        auto id = parse_identifier_args(*cls, split_ws(e.str));
                        if (!id) return ConfigError{clsname + ": " + id.error()};
                        seed.entries.push_back(*id);
                    }
                }
                cfg.lists.push_back(std::move(seed));
            }
        }
        return cfg;
    }

    static Result<Config, ConfigError> load(const std::string& path) {
        std::ifstream f(path);
        if (!f) return ConfigError{"cannot read config: " + path};
        std::string text((std::istreambuf_iterator<char>(f)),
                         std::istreambuf_iterator<char>());
        auto root = toml::parse(text);
        if (!root)
            return ConfigError{"config line " + std::to_string(root.error().line) + ": " +
                               root.error().message};
        return from_toml(*root, std::filesystem::path(path).parent_path());
    }
};

} // namespace censorlab
