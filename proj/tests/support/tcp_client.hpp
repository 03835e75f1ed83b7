#pragma once

// Minimal blocking NDJSON client for talking to the session server in tests.

#include <arpa/inet.h>
#include <netinet/in.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <chrono>
#include <optional>
#include <stdexcept>
#include <string>

#include <json.hpp>

namespace testnet {

class Client {
public:
    explicit Client(std::uint16_t port) {
        fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
        sockaddr_in a{};
        a.sin_family = AF_INET;
        a.sin_port = htons(port);
        a.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
        if (::connect(fd_, reinterpret_cast<sockaddr*>(&a), sizeof a) != 0) throw std::runtime_error("connect failed");
    }
    ~Client() { ::close(fd_); }

    void send(const std::string& line) {
        const std::string l = line + "\n";
        if (::send(fd_, l.data(), l.size(), MSG_NOSIGNAL) != static_cast<ssize_t>(l.size())) throw std::runtime_error("send failed");
    }

    std::optional<nlohmann::json> next(int timeout_ms = 2000) {
        const auto deadline = std::chrono::steady_clock::now() + std::chrono::milliseconds(timeout_ms);
        for (;;) {
            if (auto pos = buf_.find('\n'); pos != std::string::npos) {
                auto line = buf_.substr(0, pos);
                buf_.erase(0, pos + 1);
                return nlohmann::json::parse(line);
            }
            const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - std::chrono::steady_clock::now()).count();
            if (left <= 0) return std::nullopt;
            pollfd p{fd_, POLLIN, 0};
            if (::poll(&p, 1, static_cast<int>(left)) <= 0) return std::nullopt;
            char chunk[8192];
            const auto n = ::recv(fd_, chunk, sizeof chunk, 0);
            if (n <= 0) return std::nullopt;
            buf_.append(chunk, static_cast<std::size_t>(n));
        }
    }

    std::optional<nlohmann::json> next_of(const std::string& kind, int timeout_ms = 3000) {
        const auto deadline = std::chrono::steady_clock::now() + std::chrono::milliseconds(timeout_ms);
        while (std::chrono::steady_clock::now() < deadline) {
            auto m = next(timeout_ms);
            if (!m) return std::nullopt;
            if ((*m)["kind"] == kind) return m;
        }
        return std::nullopt;
    }

private:
    int fd_{-1};
    std::string buf_;
};


}  // namespace testnet
