#pragma once

#include "../errors.hpp"

#include <netdb.h>
#include <sys/socket.h>
#include <sys/types.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>
#include <functional>
#include <memory>
#include <string>
#include <vector>

namespace latentsearch::bridge {

/// Sends one request line and returns one response line (without the newline).
class Transport {
public:
    virtual ~Transport() = default;
    virtual std::string exchange(const std::string& request_line) = 0;
    virtual std::string describe() const = 0;
};

/// In-process transport; the handler plays the server.
class LoopbackTransport final : public Transport {
public:
    explicit LoopbackTransport(std::function<std::string(const std::string&)> handler)
        : handler_(std::move(handler))
    {
    }
    std::string exchange(const std::string& request_line) override { return handler_(request_line); }
    std::string describe() const override { return "loopback"; }

private:
    std::function<std::string(const std::string&)> handler_;
};

namespace detail {

/// Line-oriented I/O over a connected stream socket.
class LineSocket {
public:
    explicit LineSocket(int fd) : fd_(fd) {}
    LineSocket(const LineSocket&) = delete;
    LineSocket& operator=(const LineSocket&) = delete;
    ~LineSocket()
    {
        if (fd_ >= 0)
            ::close(fd_);
    }

    void write_all(const std::string& data)
    {
        std::size_t sent = 0;
        while (sent < data.size()) {
            const ssize_t n = ::send(fd_, data.data() + sent, data.size() - sent, MSG_NOSIGNAL);
            if (n < 0 && errno == EINTR)
                continue;
            if (n <= 0)
                throw ProtocolError(std::string("bridge write failed: ") + std::strerror(errno));
            sent += static_cast<std::size_t>(n);
        }
    }

    std::string read_line()
    {
        for (;;) {
            const auto nl = buffer_.find('\n');
            if (nl != std::string::npos) {
                std::string line = buffer_.substr(0, nl);
                buffer_.erase(0, nl + 1);
                return line;
            }
            char chunk[65536];
            const ssize_t n = ::recv(fd_, chunk, sizeof chunk, 0);
            if (n < 0 && errno == EINTR)
                continue;
            if (n < 0)
                throw ProtocolError(std::string("bridge read failed: ") + std::strerror(errno));
            if (n == 0)
                throw ProtocolError("bridge closed the connection");
            buffer_.append(chunk, static_cast<std::size_t>(n));
        }
    }

    void shutdown_write() { ::shutdown(fd_, SHUT_WR); }

private:
    int fd_;
    std::string buffer_;
};

} // namespace detail

/// Child process speaking the protocol on its stdin/stdout. The command runs
/// under /bin/sh -c; its stdin and stdout are one end of a socket pair.
class SubprocessTransport final : public Transport {
public:
    explicit SubprocessTransport(std::string command) : command_(std::move(command))
    {
        int fds[2];
        if (::socketpair(AF_UNIX, SOCK_STREAM | SOCK_CLOEXEC, 0, fds) != 0)
            throw ProtocolError(std::string("socketpair failed: ") + std::strerror(errno));
        pid_ = ::fork();
        if (pid_ < 0) {
            ::close(fds[0]);
            ::close(fds[1]);
            throw ProtocolError(std::string("fork failed: ") + std::strerror(errno));
        }
        if (pid_ == 0) {
            ::dup2(fds[1], STDIN_FILENO);
            ::dup2(fds[1], STDOUT_FILENO);
            ::execl("/bin/sh", "sh", "-c", command_.c_str(), static_cast<char*>(nullptr));
            ::_exit(127);
        }
        ::close(fds[1]);
        socket_ = std::make_unique<detail::LineSocket>(fds[0]);
    }

    ~SubprocessTransport() override
    {
        socket_->shutdown_write();
        socket_.reset();
        int status = 0;
        while (::waitpid(pid_, &status, 0) < 0 && errno == EINTR) {
        }
    }

    std::string exchange(const std::string& request_line) override
    {
        socket_->write_all(request_line);
        return socket_->read_line();
    }
    std::string describe() const override { return "stdio:" + command_; }

private:
    std::string command_;
    pid_t pid_ = -1;
    std::unique_ptr<detail::LineSocket> socket_;
};

class TcpTransport final : public Transport {
public:
    TcpTransport(const std::string& host, const std::string& port) : host_(host), port_(port)
    {
        addrinfo hints{};
        hints.ai_family = AF_UNSPEC;
        hints.ai_socktype = SOCK_STREAM;
        addrinfo* found = nullptr;
        if (const int rc = ::getaddrinfo(host.c_str(), port.c_str(), &hints, &found); rc != 0)
            throw ProtocolError("cannot resolve bridge " + host + ":" + port + ": " + ::gai_strerror(rc));
        int fd = -1;
        for (addrinfo* a = found; a && fd < 0; a = a->ai_next) {
            fd = ::socket(a->ai_family, a->ai_socktype | SOCK_CLOEXEC, a->ai_protocol);
            if (fd >= 0 && ::connect(fd, a->ai_addr, a->ai_addrlen) != 0) {
                ::close(fd);
                fd = -1;
            }
        }
        ::freeaddrinfo(found);
        if (fd < 0)
            throw ProtocolError("cannot connect to bridge at " + host + ":" + port);
        socket_ = std::make_unique<detail::LineSocket>(fd);
    }

    std::string exchange(const std::string& request_line) override
    {
        socket_->write_all(request_line);
        return socket_->read_line();
    }
    std::string describe() const override { return "tcp:" + host_ + ":" + port_; }

private:
    std::string host_;
    std::string port_;
    std::unique_ptr<detail::LineSocket> socket_;
};

/// Endpoint forms: "stdio:<shell command>" and "tcp:<host>:<port>".
inline std::unique_ptr<Transport> connect_endpoint(const std::string& endpoint)
{
    if (endpoint.starts_with("stdio:") && endpoint.size() > 6)
        return std::make_unique<SubprocessTransport>(endpoint.substr(6));
    if (endpoint.starts_with("tcp:")) {
        const std::string rest = endpoint.substr(4);
        const auto colon = rest.rfind(':');
        if (colon != std::string::npos && colon > 0 && colon + 1 < rest.size())
            return std::make_unique<TcpTransport>(rest.substr(0, colon), rest.substr(colon + 1));
    }
    throw ConfigError("bridge endpoint must be 'stdio:<command>' or 'tcp:<host>:<port>', got '" + endpoint + "'");
}

} // namespace latentsearch::bridge
