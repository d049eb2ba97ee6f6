#pragma once

#include <cstdint>
#include <string>
#include <string_view>

namespace threen1 {

struct Address {
    std::string host = "127.0.0.1";
    std::uint16_t port = 6379;

    std::string str() const { return host + ":" + std::to_string(port); }
};

// "host:port", "host" (default port) or ":port". Throws UsageError.
Address parse_address(std::string_view text);

// Owning file descriptor.
class Socket {
public:
    Socket() = default;
    explicit Socket(int fd) noexcept : fd_(fd) {}
    Socket(Socket&& o) noexcept : fd_(o.release()) {}
    Socket& operator=(Socket&& o) noexcept;
    Socket(const Socket&) = delete;
    Socket& operator=(const Socket&) = delete;
    ~Socket();

    int fd() const noexcept { return fd_; }
    explicit operator bool() const noexcept { return fd_ >= 0; }
    int release() noexcept {
        int f = fd_;
        fd_ = -1;
        return f;
    }
    void close() noexcept;
    // shutdown(2) both directions; wakes a thread blocked in recv/accept.
    void shutdown() noexcept;

    // Throws ConnectionError.
    void send_all(std::string_view bytes);
    // Appends what arrives to `buf`; returns 0 on orderly close. Throws ConnectionError.
    std::size_t recv_some(std::string& buf);

private:
    int fd_ = -1;
};

Socket connect_tcp(const Address& addr);
// Binds and listens; port 0 picks an ephemeral port.
Socket listen_tcp(const Address& addr, int backlog = 128);
std::uint16_t local_port(const Socket& s);
// Blocks for the next connection; an empty Socket once the listener is shut down.
Socket accept_tcp(const Socket& listener);

}  // namespace threen1
