#pragma once

#include <atomic>
#include <cstdint>
#include <list>
#include <memory>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include "threen1/embedded_store.hpp"
#include "threen1/net.hpp"
#include "threen1/resp.hpp"

namespace threen1 {

// Minimal RESP2 server over an EmbeddedStore's cell map. One thread per
// connection. Supported: PING GET SET DEL INCR INCRBY DECRBY HGET HSET HDEL
// HLEN HGETALL HINCRBY WATCH UNWATCH MULTI EXEC DISCARD FLUSHALL QUIT.
//
// Redis keys are bare varnames and hash fields are their one-subscript
// children. WATCH is key-level: every hash write also bumps the version of the
// bare key's cell, so a watcher of k sees changes to any field of k.
// No hierarchical locks are exposed.
class RespServer {
public:
    RespServer(EmbeddedStore& store, const Address& addr);
    ~RespServer();
    RespServer(const RespServer&) = delete;
    RespServer& operator=(const RespServer&) = delete;

    // Accepts on a background thread.
    void start();
    // Accepts on the calling thread until stop().
    void serve();
    void stop();

    std::uint16_t port() const noexcept { return port_; }
    Address address() const { return {addr_.host, port_}; }
    std::uint64_t commands_served() const noexcept { return commands_.load(); }

private:
    struct Connection {
        Socket sock;
        std::thread thread;
        std::atomic<bool> done{false};
    };

    void accept_loop();
    void handle(Connection& c);
    void reap(bool all);

    EmbeddedStore& store_;
    Address addr_;
    Socket listener_;
    std::uint16_t port_ = 0;
    std::thread acceptor_;
    std::atomic<bool> stopping_{false};
    std::atomic<std::uint64_t> commands_{0};
    std::mutex conns_mu_;
    std::list<std::unique_ptr<Connection>> conns_;
};

// Executes one command against the store outside any MULTI, for callers that
// need the server's semantics without a socket.
RespFrame execute_command(EmbeddedStore& store, const std::vector<std::string>& args);

}  // namespace threen1
