#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "threen1/net.hpp"
#include "threen1/resp.hpp"
#include "threen1/store.hpp"

namespace threen1 {

// One blocking RESP2 connection. Strict request/response: every call sends one
// command and waits for its reply before returning.
class RespConnection {
public:
    explicit RespConnection(const Address& addr);

    RespFrame call(const std::vector<std::string_view>& args);
    // Sends an already-encoded command.
    RespFrame roundtrip(std::string_view request);

    const Address& address() const noexcept { return addr_; }

private:
    RespFrame read_reply();

    Address addr_;
    Socket sock_;
    std::string buf_;
    std::size_t pos_ = 0;
};

// Store session over RESP. Node paths map onto Redis keys as:
//   (k)     -> string key k:      GET / SET / INCRBY / DEL
//   (k, f)  -> field f of hash k: HGET / HSET / HINCRBY / HDEL
// subtree_size(k) is HLEN k and set_tree(k, ...) is one multi-field HSET.
// Deeper paths are rejected. Node handles carry their path already encoded as
// RESP bulk strings, so requests are assembled by concatenation.
class RespSession final : public Session {
public:
    explicit RespSession(const Address& addr);

    std::optional<std::string> get(const NodeHandle& h) override;
    void set(const NodeHandle& h, std::string_view value) override;
    std::int64_t incr(const NodeHandle& h, std::int64_t delta) override;

    void delete_tree(const NodeHandle& h) override;
    void set_tree(const NodeHandle& h, const Entries& entries) override;
    std::size_t subtree_size(const NodeHandle& h) override;
    std::vector<std::pair<std::string, std::string>> children(const NodeHandle& h) override;

    void watch(std::span<const NodeHandle> nodes) override;
    void unwatch() override;
    void multi() override;
    bool exec() override;
    void discard() override;

    std::size_t max_subscripts() const override { return 1; }
    void flush_all() override;
    std::string_view backend_name() const override { return "resp"; }

    RespFrame ping();
    RespConnection& connection() noexcept { return conn_; }

protected:
    void run_transaction(const Body& body) override;

private:
    friend class RespTxn;

    // Sends `scalar_verb` for depth-0 handles or `hash_verb` for depth-1
    // handles, followed by the handle's path and any extra arguments.
    RespFrame node_command(std::string_view scalar_verb, std::string_view hash_verb, const NodeHandle& h,
                           std::initializer_list<std::string_view> extra = {});
    RespFrame checked(RespFrame reply, const char* what);
    void expect_queued(const RespFrame& reply);
    void require_not_multi(const char* what) const;

    RespConnection conn_;
};

}  // namespace threen1
