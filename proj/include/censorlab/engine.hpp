// The per-packet pipeline and the three operating modes.
//
// Stage order, each layer able to emit a verdict before the next is parsed:
//   L2 parse -> MAC lists -> L3 parse -> IP/subnet lists -> L4 parse ->
//   port/service/connection lists -> flow lookup -> connection override ->
//   censor program -> action execution.
//
// One packet-processing context owns all engine state; IPC mutations travel
// through a control queue drained between packets. Delayed frames are timed
// by a dedicated scheduler thread.
#pragma once

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <deque>
#include <fstream>
#include <functional>
#include <future>
#include <memory>
#include <mutex>
#include <optional>
#include <queue>
#include <thread>
#include <type_traits>
#include <vector>

#include "censorlab/action.hpp"
#include "censorlab/censorlang.hpp"
#include "censorlab/config.hpp"
#include "censorlab/filters.hpp"
#include "censorlab/flows.hpp"
#include "censorlab/log.hpp"
#include "censorlab/models.hpp"
#include "censorlab/packet.hpp"
#include "censorlab/pcap.hpp"
#include "censorlab/wire.hpp"

namespace censorlab {

enum class Stage : uint8_t {
    l2_list,
    l3_list,
    l4_list,
    connection_override,
    program,
    fallback,  // nothing decided; the packet passes
};

inline const char* to_string(Stage s) {
    switch (s) {
        case Stage::l2_list: return "l2-list";
        case Stage::l3_list: return "l3-list";
        case Stage::l4_list: return "l4-list";
        case Stage::connection_override: return "connection-override";
        case Stage::program: return "program";
        case Stage::fallback: return "default";
    }
    return "?";
}

// A frame synthesized by the Reset action. `toward_receiver` frames travel
// in the triggering packet's direction, the rest go back to its sender.
struct InjectedFrame {
    std::vector<uint8_t> bytes;
    bool toward_receiver = true;
};

struct Verdict {
    Action action = Action::accept();
    Stage source = Stage::fallback;
    std::vector<InjectedFrame> injected_frames;
    std::vector<std::string> faults;
    std::string conn;  // normalized key, when the packet reached L4
};

struct StageCounters {
    uint64_t packets = 0;
    uint64_t l2_parses = 0;
    uint64_t l3_parses = 0;
    uint64_t l4_parses = 0;
    uint64_t flow_lookups = 0;
    uint64_t program_runs = 0;
};

enum class EngineErrc { not_tcp, bad_capture, bad_config };

struct EngineError {
    EngineErrc code;
    std::string message;
};

// Synthesizes the Reset action's TCP RST frames from the triggering packet:
// n frames toward the receiver (seq advanced past the payload) and n back
// toward the sender (endpoints swapped, seq taken from the ack).
inline Result<std::vector<InjectedFrame>, EngineError> make_rst_frames(
    const ParsedPacket& pkt, uint32_t n) {
    if (!pkt.ip || !pkt.l4 || pkt.l4->proto != kProtoTcp)
        return EngineError{EngineErrc::not_tcp, "reset needs a TCP packet"};
    std::vector<InjectedFrame> out;
    out.reserve(2 * n);

    auto build = [&](bool toward_receiver) {
        wire::IpSpec ip;
        wire::TcpSpec tcp;
        tcp.flags.rst = true;
        tcp.window = 0;
        if (toward_receiver) {
            ip.src = pkt.ip->src_ip;
            ip.dst = pkt.ip->dst_ip;
            tcp.src_port = pkt.l4->src_port;
            tcp.dst_port = pkt.l4->dst_port;
            tcp.seq = pkt.l4->seq + static_cast<uint32_t>(pkt.l4->payload.size());
        } else {
            ip.src = pkt.ip->dst_ip;
            ip.dst = pkt.ip->src_ip;
            tcp.src_port = pkt.l4->dst_port;
            tcp.dst_port = pkt.l4->src_port;
            tcp.seq = pkt.l4->ack;
        }
        auto seg = wire::build_tcp(ip, tcp, {});
        auto dgram = wire::build_ip(ip, kProtoTcp, seg);
        if (pkt.eth) {
            wire::EthSpec eth;
            eth.src = toward_receiver ? pkt.eth->src_mac : pkt.eth->dst_mac;
            eth.dst = toward_receiver ? pkt.eth->dst_mac : pkt.eth->src_mac;
            return wire::build_ethernet(
                eth, pkt.ip->version == 4 ? kEthertypeIpv4 : kEthertypeIpv6, dgram);
        }
        return dgram;
    };

    for (uint32_t i = 0; i < n; ++i) out.push_back({build(true), true});
    for (uint32_t i = 0; i < n; ++i) out.push_back({build(false), false});
    return out;
}

// Orders submitted frames by release time; ties release in submission order.
class DelayScheduler {
public:
    using Sink = std::function<void(std::vector<uint8_t>)>;

    DelayScheduler() : worker_([this] { run(); }) {}

    ~DelayScheduler() {
        {
            std::lock_guard lock(mu_);
            stop_ = true;
        }
        cv_.notify_all();
        worker_.join();
    }

    void submit(std::vector<uint8_t> frame, double delay_seconds, Sink sink) {
        auto release = std::chrono::steady_clock::now() +
                       std::chrono::duration_cast<std::chrono::steady_clock::duration>(
                           std::chrono::duration<double>(delay_seconds));
        {
            std::lock_guard lock(mu_);
            queue_.push(Entry{release, seq_++, std::move(frame), std::move(sink)});
        }
        cv_.notify_all();
    }

    size_t pending() const {
        std::lock_guard lock(mu_);
        return queue_.size();
    }

private:
    struct Entry {
        std::chrono::steady_clock::time_point release;
        uint64_t seq;
        std::vector<uint8_t> frame;
        Sink sink;
        bool operator>(const Entry& other) const {
            if (release != other.release) return release > other.release;
            return seq > other.seq;
        }
    };

    void run() {
        std::unique_lock lock(mu_);
        while (!stop_) {
            if (queue_.empty()) {
                cv_.wait(lock);
                continue;
            }
            auto next = queue_.top().release;
            if (cv_.wait_until(lock, next) == std::cv_status::timeout ||
                std::chrono::steady_clock::now() >= next) {
                while (!queue_.empty() &&
                       queue_.top().release <= std::chrono::steady_clock::now()) {
                    Entry e = queue_.top();
                    queue_.pop();
                    lock.unlock();
                    e.sink(std::move(e.frame));
                    lock.lock();
                }
            }
        }
    }

    mutable std::mutex mu_;
    std::condition_variable cv_;
    std::priority_queue<Entry, std::vector<Entry>, std::greater<Entry>> queue_;
    uint64_t seq_ = 0;
    bool stop_ = false;
    std::thread worker_;
};

class Engine {
public:
    Engine() = default;

    // ---- configuration ----

    Result<Unit, EngineError> apply_config(const Config& cfg,
                                           const std::string& config_path = "") {
        // Build everything aside first so a bad config leaves the engine as-is.
        FilterSet fresh_filters;
        auto fresh_models = std::make_shared<ModelStore>();
        fresh_models->set_inference_budget(cfg.model_budget_seconds);
        for (const auto& seed : cfg.lists) {
            FilterList& list = fresh_filters.get(seed.cls, seed.allow);
            if (seed.action) list.set_action(*seed.action);
            for (const auto& id : seed.entries) {
                auto r = list.add(id);
                if (!r)
                    return EngineError{EngineErrc::bad_config,
                                       "config entry shape mismatch for " +
                                           std::string(to_string(seed.cls))};
            }
        }
        for (const auto& [name, path] : cfg.models) {
            auto r = fresh_models->load(name, path);
            if (!r)
                return EngineError{EngineErrc::bad_config,
                                   "model " + name + ": " + r.error().message};
        }
        std::shared_ptr<lang::Program> fresh_program;
        if (!cfg.program_path.empty()) {
            std::ifstream f(cfg.program_path);
            if (!f)
                return EngineError{EngineErrc::bad_config,
                                   "cannot read program: " + cfg.program_path};
            std::string source((std::istreambuf_iterator<char>(f)),
                               std::istreambuf_iterator<char>());
            auto prog = lang::Program::parse(source);
            if (!prog)
                return EngineError{EngineErrc::bad_config,
                                   "program line " + std::to_string(prog.error().line) +
                                       ": " + prog.error().message};
            auto bound = prog->bind_models(*fresh_models);
            if (!bound)
                return EngineError{EngineErrc::bad_config, bound.error().message};
            fresh_program = std::make_shared<lang::Program>(std::move(*prog));
        }

        std::lock_guard lock(mu_);
        filters_ = std::move(fresh_filters);
        models_ = std::move(fresh_models);
        program_ = std::move(fresh_program);
        flows_ = FlowTable(cfg.idle_timeout, cfg.max_connections);
        hosts_.clear();
        cost_table_ = cfg.cost_table;
        exempt_services_.clear();
        config_ = cfg;
        if (!config_path.empty()) config_path_ = config_path;
        if (!cfg.log_path.empty()) log_.open_file(cfg.log_path);
        return Unit{};
    }

    // Reload from the stored config path; a bad file keeps the old state.
    Result<Unit, EngineError> reload() {
        std::string path;
        {
            std::lock_guard lock(mu_);
            path = config_path_;
        }
        if (path.empty())
            return EngineError{EngineErrc::bad_config, "no config file to reload"};
        auto cfg = Config::load(path);
        if (!cfg) return EngineError{EngineErrc::bad_config, cfg.error().message};
        auto applied = apply_config(*cfg, path);
        if (!applied) return applied;
        // Reload clears all runtime state, including connection overrides.
        std::lock_guard lock(mu_);
        if (ipc_exemption_) exempt_services_.push_back(*ipc_exemption_);
        return Unit{};
    }

    // Parses, binds, and swaps in a program; connection state restarts.
    Result<Unit, lang::ParseDiag> load_program_source(const std::string& source) {
        std::lock_guard lock(mu_);
        auto prog = lang::Program::parse(source);
        if (!prog) return prog.error();
        auto bound = prog->bind_models(*models_);
        if (!bound) return bound.error();
        program_ = std::make_shared<lang::Program>(std::move(*prog));
        flows_.clear();
        return Unit{};
    }

    void clear_program() {
        std::lock_guard lock(mu_);
        program_.reset();
        flows_.clear();
    }

    // The engine skips its own IPC service traffic entirely.
    void add_ipc_exemption(const IpAddr& addr, uint16_t port) {
        std::lock_guard lock(mu_);
        ipc_exemption_ = ServiceId{addr, port};
        exempt_services_.push_back(*ipc_exemption_);
    }

    // ---- control queue ----

    // Schedules fn on the packet-processing context; it runs at the next
    // packet boundary (or via drain_control when traffic is idle).
    template <typename F>
    auto post(F fn) -> std::future<std::invoke_result_t<F, Engine&>> {
        using R = std::invoke_result_t<F, Engine&>;
        auto task = std::make_shared<std::packaged_task<R(Engine&)>>(std::move(fn));
        auto future = task->get_future();
        {
            std::lock_guard lock(control_mu_);
            control_queue_.push_back([task](Engine& e) { (*task)(e); });
        }
        return future;
    }

    // Applies pending control mutations; callable from any thread, serialized
    // against packet processing by the engine lock.
    void drain_control() {
        std::lock_guard lock(mu_);
        drain_control_locked();
    }

    void request_shutdown() { shutdown_.store(true); }
    bool shutdown_requested() const { return shutdown_.load(); }

    // ---- the pipeline ----

    Verdict process_packet(std::span<const uint8_t> bytes, LinkType link, double timestamp,
                           IfaceDir dir = IfaceDir::unknown) {
        std::lock_guard lock(mu_);
        drain_control_locked();
        ++counters_.packets;
        uint64_t pkt_no = counters_.packets;

        Verdict v;
        ParsedPacket pkt;
        pkt.timestamp = timestamp;
        pkt.iface_dir = dir;

        // --- L2 ---
        std::span<const uint8_t> l3_bytes;
        uint16_t ethertype = 0;
        if (link == LinkType::ethernet) {
            ++counters_.l2_parses;
            auto eth = parse_ethernet(bytes);
            if (!eth) {
                // Unsupported and malformed frames pass through untouched.
                v.faults.push_back(eth.error().detail);
                log_fault(timestamp, pkt_no, "", "l2-parse", eth.error().detail);
                return v;
            }
            pkt.eth = *eth;
            ethertype = eth->ethertype;
            l3_bytes = eth->payload;
            for (const MacAddr& mac : {eth->src_mac, eth->dst_mac}) {
                if (finish_list_stage(v, Stage::l2_list,
                                      filters_.evaluate_class(IdClass::mac,
                                                              Identifier::of_mac(mac)),
                                      pkt, pkt_no))
                    return v;
            }
            if (ethertype != kEthertypeIpv4 && ethertype != kEthertypeIpv6 &&
                ethertype != kEthertypeArp)
                return v;  // unknown ethertype: accepted, nothing to inspect
        } else {
            l3_bytes = bytes;
            if (l3_bytes.empty()) {
                log_fault(timestamp, pkt_no, "", "l3-parse", "empty raw-ip packet");
                return v;
            }
            ethertype = (l3_bytes[0] >> 4) == 6 ? kEthertypeIpv6 : kEthertypeIpv4;
        }

        // --- L3 ---
        ++counters_.l3_parses;
        auto l3 = parse_ip(l3_bytes, ethertype);
        if (!l3) {
            v.faults.push_back(l3.error().detail);
            log_fault(timestamp, pkt_no, "", "l3-parse", l3.error().detail);
            return v;
        }
        if (l3->arp_valid) {
            pkt.arp_valid = l3->arp_valid;
            if (!*l3->arp_valid)
                log_fault(timestamp, pkt_no, "", "l3-parse", "malformed arp frame");
            return v;  // ARP is parsed for validity, otherwise ignored
        }
        pkt.ip = *l3->ip;
        for (const IpAddr& addr : {pkt.ip->src_ip, pkt.ip->dst_ip}) {
            if (finish_list_stage(v, Stage::l3_list,
                                  filters_.evaluate_class(IdClass::ip,
                                                          Identifier::of_ip(addr)),
                                  pkt, pkt_no))
                return v;
            if (finish_list_stage(v, Stage::l3_list,
                                  filters_.evaluate_class(
                                      IdClass::ip_subnet, Identifier::of_subnet_match(addr)),
                                  pkt, pkt_no))
                return v;
        }

        // --- L4 ---
        uint8_t proto = pkt.ip->next_proto;
        if (proto != kProtoTcp && proto != kProtoUdp) return v;
        ++counters_.l4_parses;
        auto l4 = parse_l4(pkt.ip->payload, proto);
        if (!l4) {
            v.faults.push_back(l4.error().detail);
            log_fault(timestamp, pkt_no, "", "l4-parse", l4.error().detail);
            return v;
        }
        pkt.l4 = *l4;
        pkt.stats = payload_stats(l4->payload);

        // Self-exemption: the engine never interferes with its own IPC service.
        for (const auto& ex : exempt_services_) {
            if (proto == kProtoTcp &&
                ((pkt.ip->src_ip == ex.ip && pkt.l4->src_port == ex.port) ||
                 (pkt.ip->dst_ip == ex.ip && pkt.l4->dst_port == ex.port))) {
                v.source = Stage::l4_list;
                return v;
            }
        }

        bool tcp = proto == kProtoTcp;
        IdClass port_cls = tcp ? IdClass::tcp_port : IdClass::udp_port;
        IdClass svc_cls = tcp ? IdClass::tcp_service : IdClass::udp_service;
        IdClass conn_cls = tcp ? IdClass::tcp_connection : IdClass::udp_connection;
        for (uint16_t port : {pkt.l4->src_port, pkt.l4->dst_port}) {
            if (finish_list_stage(v, Stage::l4_list,
                                  filters_.evaluate_class(port_cls,
                                                          Identifier::of_port(port_cls, port)),
                                  pkt, pkt_no))
                return v;
        }
        for (const auto& svc :
             {ServiceId{pkt.ip->src_ip, pkt.l4->src_port},
              ServiceId{pkt.ip->dst_ip, pkt.l4->dst_port}}) {
            if (finish_list_stage(v, Stage::l4_list,
                                  filters_.evaluate_class(
                                      svc_cls, Identifier::of_service(svc_cls, svc)),
                                  pkt, pkt_no))
                return v;
        }
        auto conn_id = ConnectionId::normalized(pkt.ip->src_ip, pkt.l4->src_port,
                                                pkt.ip->dst_ip, pkt.l4->dst_port);
        if (finish_list_stage(v, Stage::l4_list,
                              filters_.evaluate_class(
                                  conn_cls, Identifier::of_connection(conn_cls, conn_id)),
                              pkt, pkt_no))
            return v;

        // --- flow ---
        ++counters_.flow_lookups;
        auto key = connection_key(pkt);
        if (!key) return v;
        v.conn = key->to_string();
        ConnectionState* state =
            flows_.get_or_create(*key, pkt,
                                 [this, pkt_no](const ParsedPacket& p) {
                                     return make_env(p, pkt_no);
                                 })
                .state;

        // --- connection override ---
        if (state->verdict_override == Override::exempt) {
            v.source = Stage::connection_override;
            return v;  // exempt connections bypass the program entirely
        }
        if (state->verdict_override == Override::condemned) {
            v.action = state->condemned_action;
            v.source = Stage::connection_override;
            finish_action(v, pkt, pkt_no);
            return v;
        }

        // --- censor program ---
        if (program_) {
            ++counters_.program_runs;
            lang::PacketView view;
            view.pkt = &pkt;
            view.direction = FlowTable::direction(pkt, *state) == Role::initiator ? 0 : 1;
            view.packet_count = state->packet_count;
            lang::HostBinding binding{&hosts_.file_for(pkt.ip->src_ip),
                                      &hosts_.file_for(pkt.ip->dst_ip)};
            auto outcome = lang::execute(state->env, *program_, view, binding, models_.get());
            for (const auto& f : outcome.faults) {
                v.faults.push_back(f);
                log_fault(timestamp, pkt_no, v.conn, "program", f);
            }
            if (outcome.escalation == lang::Escalation::allow_all)
                state->escalate_exempt();
            else if (outcome.escalation == lang::Escalation::drop_all)
                state->escalate_condemned(Action::drop());
            if (outcome.action.kind != ActionKind::accept) {
                v.action = outcome.action;
                v.source = Stage::program;
                finish_action(v, pkt, pkt_no);
                return v;
            }
        }
        return v;  // default: accept
    }

    // ---- PCAP mode ----

    // Replays a capture, logging what would have been done. In opportunistic
    // mode a Delay(d) on packet P is logged when P is processed and again
    // immediately before the first packet with timestamp > P.ts + d; with
    // time emulation, processing is paced to the recorded timestamps.
    Result<Unit, EngineError> run_pcap(const std::string& path, bool time_emulation) {
        auto cap = pcapio::read_file(path);
        if (!cap) return EngineError{EngineErrc::bad_capture, cap.error().message};
        run_capture(*cap, time_emulation);
        return Unit{};
    }

    void run_capture(const pcapio::Capture& cap, bool time_emulation) {
        struct PendingRelease {
            double release_ts;
            uint64_t pkt;
            std::string conn;
        };
        std::vector<PendingRelease> pending;
        auto wall_start = std::chrono::steady_clock::now();
        double cap_start = cap.records.empty() ? 0.0 : cap.records.front().timestamp;
        LinkType link = cap.link_type == 101 ? LinkType::raw_ip : LinkType::ethernet;

        for (const auto& rec : cap.records) {
            if (shutdown_.load()) break;
            // Delay releases due strictly before this packet's timestamp.
            for (auto it = pending.begin(); it != pending.end();) {
                if (rec.timestamp > it->release_ts) {
                    log_.emit({it->release_ts, it->pkt, it->conn, "delay-release",
                               "forward", ""});
                    it = pending.erase(it);
                } else {
                    ++it;
                }
            }
            if (time_emulation) {
                auto due = wall_start + std::chrono::duration_cast<
                                            std::chrono::steady_clock::duration>(
                                            std::chrono::duration<double>(
                                                rec.timestamp - cap_start));
                std::this_thread::sleep_until(due);
            }
            Verdict v = process_packet(rec.data, link, rec.timestamp, IfaceDir::unknown);
            if (v.action.kind == ActionKind::delay)
                pending.push_back({rec.timestamp + v.action.delay_seconds,
                                   counters_snapshot().packets, v.conn});
        }
        for (const auto& p : pending)
            log_.emit({p.release_ts, p.pkt, p.conn, "delay-release", "forward", ""});
    }

    // ---- accessors (engine lock) ----

    // Queries run through post()/drain for linearization with the pipeline;
    // these direct accessors are for configuration and tests.
    FilterSet& filters() { return filters_; }
    FlowTable& flows() { return flows_; }
    HostStore& hosts() { return hosts_; }
    std::shared_ptr<ModelStore> models() { return models_; }
    std::shared_ptr<lang::Program> program() { return program_; }
    EventLog& log() { return log_; }
    const Config& config() const { return config_; }
    const lang::CostTable& cost_table() const { return cost_table_; }

    StageCounters counters_snapshot() const {
        std::lock_guard lock(mu_);
        return counters_;
    }

private:
    lang::Env make_env(const ParsedPacket& pkt, uint64_t pkt_no) {
        if (!program_) return {};
        std::vector<std::string> faults;
        lang::HostBinding binding{&hosts_.file_for(pkt.ip->src_ip),
                                  &hosts_.file_for(pkt.ip->dst_ip)};
        auto env = lang::new_env(*program_, models_.get(), binding, &faults);
        for (const auto& f : faults)
            log_fault(pkt.timestamp, pkt_no, "", "program-init", f);
        if (!env) {
            log_fault(pkt.timestamp, pkt_no, "", "program-init",
                      "model not loaded: " + env.error().missing_model);
            return {};
        }
        return std::move(*env);
    }

    // Returns true when the list verdict terminates the pipeline. A None
    // action is logged but does not short-circuit.
    bool finish_list_stage(Verdict& v, Stage stage, std::optional<Action> action,
                           const ParsedPacket& pkt, uint64_t pkt_no) {
        if (!action) return false;
        if (action->kind == ActionKind::none) {
            log_.emit({pkt.timestamp, pkt_no, v.conn, to_string(stage), "none", ""});
            return false;
        }
        v.action = *action;
        v.source = stage;
        finish_action(v, pkt, pkt_no);
        return true;
    }

    // Logs the decision and synthesizes RSTs for Reset verdicts.
    void finish_action(Verdict& v, const ParsedPacket& pkt, uint64_t pkt_no) {
        if (v.action.kind == ActionKind::reset) {
            auto frames = make_rst_frames(pkt, v.action.reset_count);
            if (frames) {
                v.injected_frames = std::move(*frames);
            } else {
                // Reset on a non-TCP packet degrades to Drop.
                v.faults.push_back(frames.error().message);
                log_fault(pkt.timestamp, pkt_no, v.conn, to_string(v.source),
                          frames.error().message + "; dropped instead");
                v.action = Action::drop();
            }
        }
        if (v.action.kind != ActionKind::accept)
            log_.emit({pkt.timestamp, pkt_no, v.conn, to_string(v.source),
                       v.action.to_string(), ""});
    }

    void log_fault(double ts, uint64_t pkt_no, const std::string& conn,
                   const std::string& stage, const std::string& text) {
        log_.emit({ts, pkt_no, conn, stage, "accept", text});
    }

    void drain_control_locked() {
        for (;;) {
            std::function<void(Engine&)> task;
            {
                std::lock_guard qlock(control_mu_);
                if (control_queue_.empty()) return;
                task = std::move(control_queue_.front());
                control_queue_.pop_front();
            }
            task(*this);
        }
    }

    // Serializes packet processing with control mutations. Recursive so a
    // control task running at a packet boundary can use the public mutators.
    mutable std::recursive_mutex mu_;
    std::mutex control_mu_;
    std::deque<std::function<void(Engine&)>> control_queue_;

    FilterSet filters_;
    FlowTable flows_{600.0, 0};
    HostStore hosts_;
    std::shared_ptr<ModelStore> models_ = std::make_shared<ModelStore>();
    std::shared_ptr<lang::Program> program_;
    lang::CostTable cost_table_;
    std::vector<ServiceId> exempt_services_;
    std::optional<ServiceId> ipc_exemption_;
    Config config_;
    std::string config_path_;
    EventLog log_;

    StageCounters counters_;
    std::atomic<bool> shutdown_{false};

    friend class WireSimSession;
};

// In-memory two-interface forwarding: frames submitted on one endpoint are
// processed and, per the verdict, forwarded to the other, dropped, answered
// with RSTs on both sides, or released later by the delay scheduler.
class WireSimSession {
public:
    explicit WireSimSession(Engine& engine, LinkType link = LinkType::ethernet)
        : engine_(engine), link_(link) {}

    void submit_a(std::vector<uint8_t> frame) { submit(std::move(frame), true); }
    void submit_b(std::vector<uint8_t> frame) { submit(std::move(frame), false); }

    // Frames written toward that side's wire.
    std::vector<std::vector<uint8_t>> take_output_a() { return take(out_a_); }
    std::vector<std::vector<uint8_t>> take_output_b() { return take(out_b_); }

    struct Stats {
        uint64_t submitted = 0;
        uint64_t forwarded = 0;
        uint64_t dropped = 0;
        uint64_t delayed = 0;
        uint64_t injected = 0;
    };
    Stats stats() const {
        std::lock_guard lock(out_mu_);
        return stats_;
    }
    size_t delayed_pending() const { return sched_.pending(); }

private:
    struct OutQueue {
        std::deque<std::vector<uint8_t>> frames;
    };

    void submit(std::vector<uint8_t> frame, bool from_a) {
        double ts = std::chrono::duration<double>(
                        std::chrono::steady_clock::now().time_since_epoch())
                        .count();
        Verdict v = engine_.process_packet(frame, link_, ts,
                                           from_a ? IfaceDir::ingress : IfaceDir::egress);
        std::unique_lock lock(out_mu_);
        ++stats_.submitted;
        OutQueue& far = from_a ? out_b_ : out_a_;
        OutQueue& near = from_a ? out_a_ : out_b_;
        switch (v.action.kind) {
            case ActionKind::none:
            case ActionKind::accept:
                far.frames.push_back(std::move(frame));
                ++stats_.forwarded;
                break;
            case ActionKind::drop: ++stats_.dropped; break;
            case ActionKind::reset:
                ++stats_.dropped;  // the triggering packet is not forwarded
                for (auto& inj : v.injected_frames) {
                    (inj.toward_receiver ? far : near).frames.push_back(
                        std::move(inj.bytes));
                    ++stats_.injected;
                }
                break;
            case ActionKind::delay: {
                ++stats_.delayed;
                OutQueue* target = &far;
                lock.unlock();
                sched_.submit(std::move(frame), v.action.delay_seconds,
                              [this, target](std::vector<uint8_t> released) {
                                  std::lock_guard relock(out_mu_);
                                  target->frames.push_back(std::move(released));
                                  ++stats_.forwarded;
                              });
                return;
            }
        }
    }

    std::vector<std::vector<uint8_t>> take(OutQueue& q) {
        std::lock_guard lock(out_mu_);
        std::vector<std::vector<uint8_t>> out(q.frames.begin(), q.frames.end());
        q.frames.clear();
        return out;
    }

    Engine& engine_;
    LinkType link_;
    mutable std::mutex out_mu_;
    OutQueue out_a_, out_b_;
    Stats stats_;
    DelayScheduler sched_;
};

// Tap mode contract: a pluggable per-packet verdict callback over an OS
// packet source. This build ships no OS adapter; wire-sim covers the action
// semantics in tests.
class PacketTap {
public:
    virtual ~PacketTap() = default;
    // Implementations call this for every intercepted frame and must apply
    // the returned verdict (forward, drop, inject, delay) on their side.
    virtual Verdict verdict(std::span<const uint8_t> frame, double timestamp,
                            IfaceDir dir) = 0;
};

class EngineTap final : public PacketTap {
public:
    EngineTap(Engine& engine, LinkType link) : engine_(engine), link_(link) {}
    Verdict verdict(std::span<const uint8_t> frame, double timestamp,
                    IfaceDir dir) override {
        return engine_.process_packet(frame, link_, timestamp, dir);
    }

private:
    Engine& engine_;
    LinkType link_;
};

} // namespace censorlab
