// Runtime control plane: a line-oriented TCP protocol on loopback
// (default port 25716) plus the client used by the clipc tool.
//
// Requests are single lines, exactly the CLI tokens joined by spaces.
// Responses are one of:
//   OK
//   OK <n>          followed by n item lines and a blank terminator
//   ERR <code> <message>
//
// Mutations are posted to the engine's control queue and acknowledged only
// after the engine applies them at a packet boundary.
#pragma once

#include <arpa/inet.h>
#include <netinet/in.h>
#include <sys/socket.h>
#include <unistd.h>

#include <atomic>
#include <cstring>
#include <fstream>
#include <memory>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include "censorlab/engine.hpp"
#include "censorlab/util.hpp"

namespace censorlab::ipc {

inline constexpr uint16_t kDefaultPort = 25716;
inline constexpr size_t kMaxLine = 4096;

// ---------------------------------------------------------------- responses

struct Reply {
    bool ok = true;
    std::string err_code;
    std::string message;                // ERR text
    std::vector<std::string> items;     // OK payload lines

    static Reply good() { return {}; }
    static Reply good_items(std::vector<std::string> items) {
        Reply r;
        r.items = std::move(items);
        return r;
    }
    static Reply error(std::string code, std::string message) {
        Reply r;
        r.ok = false;
        r.err_code = std::move(code);
        r.message = std::move(message);
        return r;
    }

    std::string to_wire() const {
        if (!ok) return "ERR " + err_code + " " + message + "\n";
        if (items.empty()) return "OK\n";
        std::string out = "OK " + std::to_string(items.size()) + "\n";
        for (const auto& item : items) out += item + "\n";
        out += "\n";
        return out;
    }
};

// ------------------------------------------------------------- dispatching

namespace detail {

inline Reply handle_list_command(Engine& engine, const std::vector<std::string>& t) {
    // t: allowlist|blocklist action|add|remove|list <class> [args...]
    bool allow = t[0] == "allowlist";
    const std::string& verb = t[1];
    if (t.size() < 3) return Reply::error("parse", "missing identifier class");
    auto cls = parse_id_class(t[2]);
    if (!cls) return Reply::error("unknown-class", "unknown identifier class: " + t[2]);
    if (allow && (*cls == IdClass::tcp_connection || *cls == IdClass::udp_connection))
        return Reply::error("unknown-class", "there is no connection-level allowlist");
    FilterList& list = engine.filters().get(*cls, allow);

    if (verb == "action") {
        if (t.size() != 4) return Reply::error("parse", "usage: action <class> <action>");
        auto action = parse_action(t[3]);
        if (!action) return Reply::error("parse", "unknown action: " + t[3]);
        list.set_action(*action);
        return Reply::good();
    }
    if (verb == "list") {
        if (t.size() != 3) return Reply::error("parse", "usage: list <class>");
        return Reply::good_items(list.list_entries());
    }
    if (verb == "add" || verb == "remove") {
        std::vector<std::string> args(t.begin() + 3, t.end());
        auto id = parse_identifier_args(*cls, args);
        if (!id) return Reply::error("shape", id.error());
        auto r = verb == "add" ? list.add(*id) : list.remove(*id);
        if (!r) {
            if (r.error() == ListErrc::not_found)
                return Reply::error("not-found", "entry is not in the list");
            return Reply::error("shape", "identifier does not fit this class");
        }
        return Reply::good();
    }
    return Reply::error("parse", "unknown list verb: " + verb);
}

inline Reply handle_debug_dump(Engine& engine, const std::vector<std::string>& t) {
    if (t.size() != 7)
        return Reply::error("parse", "usage: debug dump <ip> <ip> <port> <port> <proto>");
    auto ip_a = IpAddr::parse(t[2]);
    auto ip_b = IpAddr::parse(t[3]);
    if (!ip_a || !ip_b) return Reply::error("shape", "bad ip address");
    long port_a, port_b;
    try {
        port_a = std::stol(t[4]);
        port_b = std::stol(t[5]);
    } catch (...) {
        return Reply::error("shape", "bad port");
    }
    if (port_a < 0 || port_a > 65535 || port_b < 0 || port_b > 65535)
        return Reply::error("shape", "bad port");
    std::string proto = to_lower(t[6]);
    uint8_t proto_id;
    if (proto == "tcp")
        proto_id = kProtoTcp;
    else if (proto == "udp")
        proto_id = kProtoUdp;
    else
        return Reply::error("shape", "proto must be tcp or udp");

    auto key = ConnectionKey::normalized(*ip_a, static_cast<uint16_t>(port_a), *ip_b,
                                         static_cast<uint16_t>(port_b), proto_id);
    ConnectionState* state = engine.flows().find(key);
    if (!state) return Reply::error("not-found", "no such connection");

    std::vector<std::string> items;
    items.push_back("key=" + key.to_string());
    items.push_back("initiator=" + state->initiator_ip.to_string() + ":" +
                    std::to_string(state->initiator_port));
    items.push_back("packets=" + std::to_string(state->packet_count));
    char buf[64];
    std::snprintf(buf, sizeof buf, "created=%.6f last_seen=%.6f", state->created_at,
                  state->last_seen);
    items.push_back(buf);
    const char* ov = state->verdict_override == Override::none      ? "none"
                     : state->verdict_override == Override::exempt ? "exempt"
                                                                    : "condemned";
    items.push_back(std::string("override=") + ov);
    if (auto prog = engine.program()) {
        for (auto& line : lang::format_registers(*prog, state->env))
            items.push_back(line);
    }
    return Reply::good_items(std::move(items));
}

inline Reply handle_on_engine(Engine& engine, const std::vector<std::string>& t) {
    if (t.empty()) return Reply::error("parse", "empty command");
    const std::string& verb = t[0];

    if (verb == "shutdown") {
        if (t.size() != 1) return Reply::error("parse", "shutdown takes no arguments");
        engine.request_shutdown();
        return Reply::good();
    }
    if (verb == "reload") {
        if (t.size() != 1) return Reply::error("parse", "reload takes no arguments");
        auto r = engine.reload();
        if (!r) return Reply::error("io", r.error().message);
        return Reply::good();
    }
    if (verb == "allowlist" || verb == "blocklist") {
        if (t.size() < 2) return Reply::error("parse", "missing list verb");
        return handle_list_command(engine, t);
    }
    if (verb == "program") {
        if (t.size() != 4 || t[1] != "load")
            return Reply::error("parse", "usage: program load <language> <path>");
        if (to_lower(t[2]) != "censorlang")
            return Reply::error("parse",
                                "only censorlang programs are supported by this build");
        std::ifstream f(t[3]);
        if (!f) return Reply::error("io", "cannot read program: " + t[3]);
        std::string source((std::istreambuf_iterator<char>(f)),
                           std::istreambuf_iterator<char>());
        auto r = engine.load_program_source(source);
        if (!r)
            return Reply::error("parse", "line " + std::to_string(r.error().line) + ": " +
                                             r.error().message);
        return Reply::good();
    }
    if (verb == "debug") {
        if (t.size() < 2 || t[1] != "dump")
            return Reply::error("parse", "usage: debug dump <ip> <ip> <port> <port> <proto>");
        return handle_debug_dump(engine, t);
    }
    if (verb == "model") {
        if (t.size() == 4 && t[1] == "add") {
            auto r = engine.models()->load(t[2], t[3]);
            if (!r) {
                if (r.error().code == ModelErrc::io)
                    return Reply::error("io", r.error().message);
                return Reply::error("model", r.error().message);
            }
            return Reply::good();
        }
        if (t.size() == 3 && t[1] == "remove") {
            auto r = engine.models()->remove(t[2]);
            if (!r) return Reply::error("not-found", "no model named " + t[2]);
            return Reply::good();
        }
        return Reply::error("parse", "usage: model add <name> <path> | model remove <name>");
    }
    return Reply::error("parse", "unknown command: " + verb);
}

} // namespace detail

// Runs one command line on the engine context and waits for the result, so
// the acknowledgment proves the mutation was applied.
inline Reply handle_command(Engine& engine, const std::string& line) {
    if (line.size() > kMaxLine) return Reply::error("parse", "line too long");
    auto tokens = split_ws(line);
    if (tokens.empty()) return Reply::error("parse", "empty command");
    auto future = engine.post(
        [tokens](Engine& e) -> Reply { return detail::handle_on_engine(e, tokens); });
    engine.drain_control();
    return future.get();
}

// --------------------------------------------------------------------- server

struct BindError {
    std::string message;
};

class Server {
public:
    ~Server() { stop(); }

    // Binds the loopback listener and registers the engine's self-exemption
    // so its own control traffic is never censored.
    Result<Unit, BindError> start(Engine& engine, const std::string& bind_addr,
                                  uint16_t port) {
        engine_ = &engine;
        auto addr = IpAddr::parse(bind_addr);
        if (!addr || !addr->is_v4 || addr->bytes[0] != 127)
            return BindError{"ipc must bind a loopback address, got " + bind_addr};

        listen_fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
        if (listen_fd_ < 0) return BindError{std::strerror(errno)};
        int one = 1;
        ::setsockopt(listen_fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
        sockaddr_in sa{};
        sa.sin_family = AF_INET;
        sa.sin_port = htons(port);
        std::memcpy(&sa.sin_addr, addr->bytes.data(), 4);
        if (::bind(listen_fd_, reinterpret_cast<sockaddr*>(&sa), sizeof sa) < 0) {
            std::string err = std::strerror(errno);
            ::close(listen_fd_);
            listen_fd_ = -1;
            return BindError{"bind failed: " + err};
        }
        if (::listen(listen_fd_, 16) < 0) {
            std::string err = std::strerror(errno);
            ::close(listen_fd_);
            listen_fd_ = -1;
            return BindError{"listen failed: " + err};
        }
        socklen_t len = sizeof sa;
        ::getsockname(listen_fd_, reinterpret_cast<sockaddr*>(&sa), &len);
        port_ = ntohs(sa.sin_port);
        engine.add_ipc_exemption(*addr, port_);

        running_.store(true);
        accept_thread_ = std::thread([this] { accept_loop(); });
        return Unit{};
    }

    uint16_t port() const { return port_; }
    bool running() const { return running_.load(); }

    void stop() {
        if (!running_.exchange(false)) {
            if (accept_thread_.joinable()) accept_thread_.join();
            return;
        }
        ::shutdown(listen_fd_, SHUT_RDWR);
        ::close(listen_fd_);
        if (accept_thread_.joinable()) accept_thread_.join();
        std::vector<std::thread> clients;
        {
            std::lock_guard lock(mu_);
            for (int fd : client_fds_) ::shutdown(fd, SHUT_RDWR);
            clients.swap(client_threads_);
        }
        for (auto& t : clients)
            if (t.joinable()) t.join();
    }

private:
    void accept_loop() {
        while (running_.load()) {
            int fd = ::accept(listen_fd_, nullptr, nullptr);
            if (fd < 0) break;
            std::lock_guard lock(mu_);
            client_fds_.push_back(fd);
            client_threads_.emplace_back([this, fd] { serve_client(fd); });
        }
    }

    void serve_client(int fd) {
        std::string buffer;
        char chunk[1024];
        for (;;) {
            auto newline = buffer.find('\n');
            if (newline == std::string::npos) {
                if (buffer.size() > kMaxLine) {
                    std::string err = Reply::error("parse", "line too long").to_wire();
                    ::send(fd, err.data(), err.size(), MSG_NOSIGNAL);
                    break;
                }
                ssize_t n = ::recv(fd, chunk, sizeof chunk, 0);
                if (n <= 0) break;
                buffer.append(chunk, static_cast<size_t>(n));
                continue;
            }
            std::string line = buffer.substr(0, newline);
            buffer.erase(0, newline + 1);
            if (!line.empty() && line.back() == '\r') line.pop_back();
            if (trim(line).empty()) continue;
            Reply reply = handle_command(*engine_, line);
            std::string wire = reply.to_wire();
            if (::send(fd, wire.data(), wire.size(), MSG_NOSIGNAL) < 0) break;
            if (reply.ok && split_ws(line)[0] == "shutdown") break;
        }
        ::close(fd);
    }

    Engine* engine_ = nullptr;
    int listen_fd_ = -1;
    uint16_t port_ = 0;
    std::atomic<bool> running_{false};
    std::thread accept_thread_;
    std::mutex mu_;
    std::vector<int> client_fds_;
    std::vector<std::thread> client_threads_;
};

// --------------------------------------------------------------------- client

struct ClientError {
    bool connection_failed = false;  // distinct from an ERR reply
    std::string message;
};

inline Result<Reply, ClientError> request(const std::string& addr, uint16_t port,
                                          const std::string& line) {
    int fd = ::socket(AF_INET, SOCK_STREAM, 0);
    if (fd < 0) return ClientError{true, std::strerror(errno)};
    sockaddr_in sa{};
    sa.sin_family = AF_INET;
    sa.sin_port = htons(port);
    if (::inet_pton(AF_INET, addr.c_str(), &sa.sin_addr) != 1) {
        ::close(fd);
        return ClientError{true, "bad address: " + addr};
    }
    if (::connect(fd, reinterpret_cast<sockaddr*>(&sa), sizeof sa) < 0) {
        std::string err = std::strerror(errno);
        ::close(fd);
        return ClientError{true, "connect: " + err};
    }
    std::string msg = line + "\n";
    if (::send(fd, msg.data(), msg.size(), MSG_NOSIGNAL) < 0) {
        std::string err = std::strerror(errno);
        ::close(fd);
        return ClientError{true, "send: " + err};
    }

    std::string buffer;
    char chunk[1024];
    auto read_line = [&](std::string& out) -> bool {
        for (;;) {
            auto nl = buffer.find('\n');
            if (nl != std::string::npos) {
                out = buffer.substr(0, nl);
                buffer.erase(0, nl + 1);
                if (!out.empty() && out.back() == '\r') out.pop_back();
                return true;
            }
            ssize_t n = ::recv(fd, chunk, sizeof chunk, 0);
            if (n <= 0) return false;
            buffer.append(chunk, static_cast<size_t>(n));
        }
    };

    std::string head;
    if (!read_line(head)) {
        ::close(fd);
        return ClientError{true, "connection closed before a response"};
    }
    Reply reply;
    if (head.rfind("ERR ", 0) == 0) {
        reply.ok = false;
        auto rest = head.substr(4);
        auto space = rest.find(' ');
        reply.err_code = rest.substr(0, space);
        if (space != std::string::npos) reply.message = rest.substr(space + 1);
    } else if (head == "OK") {
        reply.ok = true;
    } else if (head.rfind("OK ", 0) == 0) {
        reply.ok = true;
        size_t count = 0;
        try {
            count = std::stoul(head.substr(3));
        } catch (...) {
            ::close(fd);
            return ClientError{false, "malformed response header: " + head};
        }
        for (size_t i = 0; i < count; ++i) {
            std::string item;
            if (!read_line(item)) {
                ::close(fd);
                return ClientError{false, "response truncated"};
            }
            reply.items.push_back(std::move(item));
        }
        std::string blank;
        read_line(blank);  // trailing terminator
    } else {
        ::close(fd);
        return ClientError{false, "malformed response: " + head};
    }
    ::close(fd);
    return reply;
}

} // namespace censorlab::ipc
