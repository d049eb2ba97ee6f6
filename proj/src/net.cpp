#include "threen1/net.hpp"

#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <charconv>
#include <cstring>

#include "threen1/error.hpp"

namespace threen1 {

Address parse_address(std::string_view text) {
    Address a;
    auto colon = text.rfind(':');
    std::string_view host = text, port;
    if (colon != std::string_view::npos) {
        host = text.substr(0, colon);
        port = text.substr(colon + 1);
    }
    if (!host.empty()) a.host = std::string(host);
    if (colon != std::string_view::npos) {
        unsigned v = 0;
        auto [p, ec] = std::from_chars(port.data(), port.data() + port.size(), v);
        if (port.empty() || ec != std::errc{} || p != port.data() + port.size() || v > 65535) {
            throw UsageError("invalid port in address \"" + std::string(text) + "\"");
        }
        a.port = static_cast<std::uint16_t>(v);
    }
    return a;
}

Socket& Socket::operator=(Socket&& o) noexcept {
    if (this != &o) {
        close();
        fd_ = o.release();
    }
    return *this;
}

Socket::~Socket() {
    close();
}

void Socket::close() noexcept {
    if (fd_ >= 0) ::close(fd_);
    fd_ = -1;
}

void Socket::shutdown() noexcept {
    if (fd_ >= 0) ::shutdown(fd_, SHUT_RDWR);
}

void Socket::send_all(std::string_view bytes) {
    while (!bytes.empty()) {
        ssize_t n = ::send(fd_, bytes.data(), bytes.size(), MSG_NOSIGNAL);
        if (n < 0) {
            if (errno == EINTR) continue;
            throw ConnectionError(std::string("send failed: ") + std::strerror(errno));
        }
        bytes.remove_prefix(static_cast<std::size_t>(n));
    }
}

std::size_t Socket::recv_some(std::string& buf) {
    char chunk[16384];
    for (;;) {
        ssize_t n = ::recv(fd_, chunk, sizeof chunk, 0);
        if (n < 0) {
            if (errno == EINTR) continue;
            throw ConnectionError(std::string("recv failed: ") + std::strerror(errno));
        }
        buf.append(chunk, static_cast<std::size_t>(n));
        return static_cast<std::size_t>(n);
    }
}

namespace {

struct AddrInfo {
    addrinfo* list = nullptr;
    ~AddrInfo() {
        if (list) freeaddrinfo(list);
    }
};

AddrInfo resolve(const Address& a, bool passive) {
    addrinfo hints{};
    hints.ai_family = AF_UNSPEC;
    hints.ai_socktype = SOCK_STREAM;
    if (passive) hints.ai_flags = AI_PASSIVE;
    AddrInfo out;
    auto port = std::to_string(a.port);
    int rc = getaddrinfo(a.host.c_str(), port.c_str(), &hints, &out.list);
    if (rc != 0) throw ConnectionError("cannot resolve " + a.str() + ": " + gai_strerror(rc));
    return out;
}

void set_nodelay(int fd) {
    int one = 1;
    ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
}

}  // namespace

Socket connect_tcp(const Address& addr) {
    auto ai = resolve(addr, false);
    int last_errno = 0;
    for (addrinfo* p = ai.list; p; p = p->ai_next) {
        Socket s(::socket(p->ai_family, p->ai_socktype, p->ai_protocol));
        if (!s) {
            last_errno = errno;
            continue;
        }
        if (::connect(s.fd(), p->ai_addr, p->ai_addrlen) == 0) {
            set_nodelay(s.fd());
            return s;
        }
        last_errno = errno;
    }
    throw ConnectionError("cannot connect to " + addr.str() + ": " + std::strerror(last_errno));
}

Socket listen_tcp(const Address& addr, int backlog) {
    auto ai = resolve(addr, true);
    int last_errno = 0;
    for (addrinfo* p = ai.list; p; p = p->ai_next) {
        Socket s(::socket(p->ai_family, p->ai_socktype, p->ai_protocol));
        if (!s) {
            last_errno = errno;
            continue;
        }
        int one = 1;
        ::setsockopt(s.fd(), SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
        if (::bind(s.fd(), p->ai_addr, p->ai_addrlen) == 0 && ::listen(s.fd(), backlog) == 0) return s;
        last_errno = errno;
    }
    throw ConnectionError("cannot listen on " + addr.str() + ": " + std::strerror(last_errno));
}

Socket accept_tcp(const Socket& listener) {
    for (;;) {
        int fd = ::accept(listener.fd(), nullptr, nullptr);
        if (fd >= 0) {
            set_nodelay(fd);
            return Socket(fd);
        }
        if (errno == EINTR || errno == ECONNABORTED) continue;
        return Socket();
    }
}

std::uint16_t local_port(const Socket& s) {
    sockaddr_storage ss{};
    socklen_t len = sizeof ss;
    if (::getsockname(s.fd(), reinterpret_cast<sockaddr*>(&ss), &len) != 0) return 0;
    if (ss.ss_family == AF_INET) return ntohs(reinterpret_cast<sockaddr_in*>(&ss)->sin_port);
    if (ss.ss_family == AF_INET6) return ntohs(reinterpret_cast<sockaddr_in6*>(&ss)->sin6_port);
    return 0;
}

}  // namespace threen1
