#pragma once

// Newline-delimited JSON session server over plain TCP (POSIX sockets).
//
// Threads: one simulation loop (sole owner of the Session), one accept loop,
// and a reader plus a writer per connection. Readers only enqueue lines; the
// loop applies them at the start of the next tick. Each viewer holds at most
// one unsent snapshot; a newer snapshot replaces an older unsent one.

#include <arpa/inet.h>
#include <netinet/in.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <algorithm>
#include <atomic>
#include <cerrno>
#include <chrono>
#include <condition_variable>
#include <cstring>
#include <deque>
#include <memory>
#include <mutex>
#include <optional>
#include <ostream>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "heartbees/session.hpp"

namespace heartbees {

class ServerError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

namespace detail {

// Outbound queue for one viewer.
class ViewerChannel {
public:
    void push(Outbound m) {
        {
            std::lock_guard lock(mu_);
            if (closed_) return;
            if (m.kind == "state_snapshot") {
                for (auto it = pending_.begin(); it != pending_.end(); ++it) {
                    if (it->kind == "state_snapshot") {
                        pending_.erase(it);
                        ++skipped_;
                        break;
                    }
                }
            }
            pending_.push_back(std::move(m));
        }
        cv_.notify_one();
    }

    // Blocks until a message is available; empty when closed.
    std::optional<std::string> pop_framed() {
        std::unique_lock lock(mu_);
        cv_.wait(lock, [&] { return closed_ || !pending_.empty(); });
        if (closed_) return std::nullopt;
        Outbound m = std::move(pending_.front());
        pending_.pop_front();
        return seq_.frame(m);
    }

    void close() {
        {
            std::lock_guard lock(mu_);
            closed_ = true;
        }
        cv_.notify_all();
    }

    [[nodiscard]] bool closed() const {
        std::lock_guard lock(mu_);
        return closed_;
    }

    [[nodiscard]] std::size_t queued_snapshots() const {
        std::lock_guard lock(mu_);
        return static_cast<std::size_t>(
            std::count_if(pending_.begin(), pending_.end(), [](const Outbound& m) { return m.kind == "state_snapshot"; }));
    }

private:
    mutable std::mutex mu_;
    std::condition_variable cv_;
    std::deque<Outbound> pending_;
    Sequencer seq_;
    bool closed_{false};
    std::size_t skipped_{0};
};

inline bool send_all(int fd, std::string_view data) {
    while (!data.empty()) {
        const auto n = ::send(fd, data.data(), data.size(), MSG_NOSIGNAL);
        if (n < 0) {
            if (errno == EINTR) continue;
            return false;
        }
        data.remove_prefix(static_cast<std::size_t>(n));
    }
    return true;
}

}  // namespace detail

class Server {
public:
    static constexpr std::size_t kMaxLineBytes = 1 << 16;

    // `record_log` receives the inbound log, `record_out` every outbound
    // message as seen by a viewer present from tick 0. Both optional.
    Server(SessionOptions options, std::uint16_t port, std::ostream* record_log = nullptr,
           std::ostream* record_out = nullptr)
        : session_(options), options_(std::move(options)), requested_port_(port) {
        if (record_log) log_.emplace(*record_log);
        record_out_ = record_out;
    }

    Server(const Server&) = delete;
    Server& operator=(const Server&) = delete;

    ~Server() { stop(); }

    void start() {
        listen_fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
        if (listen_fd_ < 0) throw ServerError(std::string("socket: ") + std::strerror(errno));
        sockaddr_in addr{};
        addr.sin_family = AF_INET;
        addr.sin_addr.s_addr = htonl(INADDR_ANY);
        addr.sin_port = htons(requested_port_);
        if (::bind(listen_fd_, reinterpret_cast<sockaddr*>(&addr), sizeof addr) < 0) {
            const std::string why = std::strerror(errno);
            ::close(listen_fd_);
            listen_fd_ = -1;
            throw ServerError("bind port " + std::to_string(requested_port_) + ": " + why);
        }
        if (::listen(listen_fd_, 16) < 0) throw ServerError(std::string("listen: ") + std::strerror(errno));
        socklen_t len = sizeof addr;
        ::getsockname(listen_fd_, reinterpret_cast<sockaddr*>(&addr), &len);
        port_ = ntohs(addr.sin_port);

        if (log_) log_->header(options_);
        if (record_out_) *record_out_ << record_seq_.frame(session_.snapshot()) << '\n';

        running_ = true;
        sim_thread_ = std::thread([this] { simulation_loop(); });
        accept_thread_ = std::thread([this] { accept_loop(); });
    }

    // Idempotent. Flushes recordings.
    void stop() {
        if (!running_.exchange(false)) return;
        if (sim_thread_.joinable()) sim_thread_.join();
        if (accept_thread_.joinable()) accept_thread_.join();
        if (listen_fd_ >= 0) ::close(listen_fd_);
        listen_fd_ = -1;
        std::vector<std::shared_ptr<Connection>> conns;
        {
            std::lock_guard lock(conns_mu_);
            conns.swap(conns_);
        }
        for (auto& c : conns) shutdown_connection(*c);
        if (log_) log_->end(ticks_run_);
        if (record_out_) record_out_->flush();
    }

    [[nodiscard]] std::uint16_t port() const { return port_; }
    [[nodiscard]] bool running() const { return running_; }

    [[nodiscard]] std::uint64_t ticks() const {
        std::lock_guard lock(session_mu_);
        return session_.tick();
    }

    [[nodiscard]] Emotion emotion() const {
        std::lock_guard lock(session_mu_);
        return session_.emotion();
    }

    [[nodiscard]] std::size_t viewers() const {
        std::lock_guard lock(conns_mu_);
        return conns_.size();
    }

private:
    struct Connection {
        int fd{-1};
        std::uint64_t id{0};
        detail::ViewerChannel channel;
        std::thread reader;
        std::thread writer;
    };

    struct Inbound {
        std::uint64_t conn_id;
        std::string line;
    };

    void simulation_loop() {
        using clock = std::chrono::steady_clock;
        const auto period = std::chrono::duration_cast<clock::duration>(std::chrono::duration<double>(1.0 / options_.tick_rate));
        auto next = clock::now();
        while (running_) {
            std::deque<Inbound> batch;
            {
                std::lock_guard lock(inbound_mu_);
                batch.swap(inbound_);
            }
            {
                std::lock_guard lock(session_mu_);
                for (const auto& in : batch) {
                    if (log_) log_->message(session_.tick(), in.line);
                    for (auto& m : session_.handle_line(in.line)) {
                        const bool reply_only = m.kind == "ack" || m.kind == "error";
                        if (reply_only) deliver_to(in.conn_id, m);
                        else broadcast(m);
                    }
                }
                broadcast(session_.advance());
                ticks_run_ = session_.tick();
            }
            next += period;
            std::this_thread::sleep_until(next);
            if (clock::now() - next > 10 * period) next = clock::now();  // do not burst after a stall
        }
    }

    void accept_loop() {
        while (running_) {
            pollfd p{listen_fd_, POLLIN, 0};
            const int r = ::poll(&p, 1, 100);
            reap_closed();
            if (r <= 0 || !(p.revents & POLLIN)) continue;
            const int fd = ::accept(listen_fd_, nullptr, nullptr);
            if (fd < 0) continue;
            auto conn = std::make_shared<Connection>();
            conn->fd = fd;
            {
                std::lock_guard lock(session_mu_);
                conn->id = ++next_conn_id_;
                conn->channel.push(session_.snapshot());  // full state first
                std::lock_guard conns_lock(conns_mu_);
                conns_.push_back(conn);
            }
            conn->reader = std::thread([this, conn] { read_loop(conn); });
            conn->writer = std::thread([conn] {
                while (auto line = conn->channel.pop_framed()) {
                    line->push_back('\n');
                    if (!detail::send_all(conn->fd, *line)) break;
                }
                conn->channel.close();
            });
        }
    }

    void read_loop(const std::shared_ptr<Connection>& conn) {
        std::string buf;
        char chunk[4096];
        for (;;) {
            const auto n = ::recv(conn->fd, chunk, sizeof chunk, 0);
            if (n < 0 && errno == EINTR) continue;
            if (n <= 0) break;
            buf.append(chunk, static_cast<std::size_t>(n));
            std::size_t pos;
            while ((pos = buf.find('\n')) != std::string::npos) {
                std::string line = buf.substr(0, pos);
                buf.erase(0, pos + 1);
                if (!line.empty() && line.back() == '\r') line.pop_back();
                if (line.find_first_not_of(" \t") == std::string::npos) continue;
                std::lock_guard lock(inbound_mu_);
                inbound_.push_back({conn->id, std::move(line)});
            }
            if (buf.size() > kMaxLineBytes) break;
        }
        conn->channel.close();
    }

    // Caller holds session_mu_.
    void broadcast(const Outbound& m) {
        if (record_out_) *record_out_ << record_seq_.frame(m) << '\n';
        std::lock_guard lock(conns_mu_);
        for (auto& c : conns_) c->channel.push(m);
    }

    void deliver_to(std::uint64_t conn_id, const Outbound& m) {
        if (record_out_) *record_out_ << record_seq_.frame(m) << '\n';
        std::lock_guard lock(conns_mu_);
        for (auto& c : conns_)
            if (c->id == conn_id) c->channel.push(m);
    }

    void reap_closed() {
        std::vector<std::shared_ptr<Connection>> dead;
        {
            std::lock_guard lock(conns_mu_);
            auto it = std::stable_partition(conns_.begin(), conns_.end(),
                                            [](const auto& c) { return !c->channel.closed(); });
            dead.assign(it, conns_.end());
            conns_.erase(it, conns_.end());
        }
        for (auto& c : dead) shutdown_connection(*c);
    }

    static void shutdown_connection(Connection& c) {
        ::shutdown(c.fd, SHUT_RDWR);
        c.channel.close();
        if (c.reader.joinable()) c.reader.join();
        if (c.writer.joinable()) c.writer.join();
        ::close(c.fd);
    }

    mutable std::mutex session_mu_;
    Session session_;
    SessionOptions options_;
    std::uint16_t requested_port_;
    std::uint16_t port_{0};
    int listen_fd_{-1};
    std::atomic<bool> running_{false};
    std::thread sim_thread_;
    std::thread accept_thread_;

    mutable std::mutex conns_mu_;
    std::vector<std::shared_ptr<Connection>> conns_;
    std::uint64_t next_conn_id_{0};

    std::mutex inbound_mu_;
    std::deque<Inbound> inbound_;

    std::optional<InboundRecorder> log_;
    std::ostream* record_out_{nullptr};
    Sequencer record_seq_;
    std::uint64_t ticks_run_{0};
};

}  // namespace heartbees
