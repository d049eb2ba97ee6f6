#include "threen1/resp_server.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>

#include "threen1/error.hpp"

namespace threen1 {

namespace {

using Args = std::vector<std::string>;

enum class Op { ping, get, set, incr, incrby, decrby, hget, hset, hdel, hlen, hgetall, hincrby, del, flushall };

struct Spec {
    std::string_view name;
    Op op;
    int arity;  // Redis convention: exact when positive, minimum when negative
    bool all_shards;
};

constexpr Spec kSpecs[] = {
    {"PING", Op::ping, -1, false},     {"GET", Op::get, 2, false},          {"SET", Op::set, 3, false},
    {"INCR", Op::incr, 2, false},      {"INCRBY", Op::incrby, 3, false},    {"DECRBY", Op::decrby, 3, false},
    {"HGET", Op::hget, 3, false},      {"HSET", Op::hset, -4, false},       {"HDEL", Op::hdel, -3, false},
    {"HLEN", Op::hlen, 2, true},       {"HGETALL", Op::hgetall, 2, true},   {"HINCRBY", Op::hincrby, 4, false},
    {"DEL", Op::del, -2, true},        {"FLUSHALL", Op::flushall, -1, true},
};

std::string upper(std::string_view s) {
    std::string out(s);
    for (auto& c : out) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
    return out;
}

std::string lower(std::string_view s) {
    std::string out(s);
    for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return out;
}

const Spec* find_spec(std::string_view name) {
    for (const auto& s : kSpecs) {
        if (s.name == name) return &s;
    }
    return nullptr;
}

bool arity_ok(const Spec& s, std::size_t argc) {
    auto n = static_cast<int>(argc);
    if (s.arity > 0 ? n != s.arity : n < -s.arity) return false;
    if (s.op == Op::hset) return argc % 2 == 0;
    if (s.op == Op::ping) return argc <= 2;
    if (s.op == Op::flushall) return argc <= 2;  // FLUSHALL [ASYNC|SYNC]
    return true;
}

RespFrame unknown_command(const Args& args) {
    std::string msg = "ERR unknown command '" + args[0] + "', with args beginning with:";
    for (std::size_t i = 1; i < args.size() && i < 4; ++i) msg += " '" + args[i].substr(0, 32) + "'";
    for (auto& c : msg) {
        if (c == '\r' || c == '\n') c = ' ';
    }
    return RespFrame::error(msg);
}

RespFrame arity_error(const Args& args) {
    auto msg = "ERR wrong number of arguments for '" + lower(args[0]) + "' command";
    for (auto& c : msg) {
        if (c == '\r' || c == '\n') c = ' ';
    }
    return RespFrame::error(msg);
}

std::int64_t parse_delta(std::string_view s) {
    std::int64_t v = 0;
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (s.empty() || ec != std::errc{} || p != s.data() + s.size()) {
        throw StoreError("value is not an integer or out of range");
    }
    return v;
}

std::vector<NodeHandle> footprint(const Spec& s, const Args& a) {
    switch (s.op) {
        case Op::get:
        case Op::set:
        case Op::incr:
        case Op::incrby:
        case Op::decrby:
            return {NodeHandle(a[1])};
        case Op::hget:
            return {NodeHandle(a[1], {a[2]})};
        case Op::hincrby:
            return {NodeHandle(a[1], {a[2]}), NodeHandle(a[1])};
        case Op::hset: {
            std::vector<NodeHandle> out{NodeHandle(a[1])};
            for (std::size_t i = 2; i < a.size(); i += 2) out.emplace_back(a[1], std::initializer_list<Subscript>{a[i]});
            return out;
        }
        case Op::hdel: {
            std::vector<NodeHandle> out{NodeHandle(a[1])};
            for (std::size_t i = 2; i < a.size(); ++i) out.emplace_back(a[1], std::initializer_list<Subscript>{a[i]});
            return out;
        }
        default:
            return {};
    }
}

RespFrame apply(const Spec& s, EmbeddedStore::Locked& L, const Args& a) {
    switch (s.op) {
        case Op::ping:
            return a.size() == 2 ? RespFrame::bulk(a[1]) : RespFrame::simple("PONG");
        case Op::get: {
            auto v = L.read(NodeHandle(a[1])).value;
            return v ? RespFrame::bulk(std::move(*v)) : RespFrame::null_bulk();
        }
        case Op::set:
            L.set(NodeHandle(a[1]), a[2]);
            return RespFrame::simple("OK");
        case Op::incr:
            return RespFrame::integer(L.incr(NodeHandle(a[1]), 1));
        case Op::incrby:
            return RespFrame::integer(L.incr(NodeHandle(a[1]), parse_delta(a[2])));
        case Op::decrby: {
            auto d = parse_delta(a[2]);
            if (d == INT64_MIN) throw StoreError("decrement would overflow");
            return RespFrame::integer(L.incr(NodeHandle(a[1]), -d));
        }
        case Op::hget: {
            auto v = L.read(NodeHandle(a[1], {a[2]})).value;
            return v ? RespFrame::bulk(std::move(*v)) : RespFrame::null_bulk();
        }
        case Op::hset: {
            NodeHandle root(a[1]);
            std::int64_t added = 0;
            for (std::size_t i = 2; i < a.size(); i += 2) check_value_size(a[i + 1]);
            for (std::size_t i = 2; i < a.size(); i += 2) {
                NodeHandle field = root.child(a[i]);
                if (!L.read(field).value) ++added;
                L.set(field, a[i + 1]);
            }
            L.touch(root);
            return RespFrame::integer(added);
        }
        case Op::hdel: {
            NodeHandle root(a[1]);
            std::int64_t removed = 0;
            for (std::size_t i = 2; i < a.size(); ++i) {
                NodeHandle field = root.child(a[i]);
                if (L.read(field).value) {
                    L.erase(field);
                    ++removed;
                }
            }
            if (removed) L.touch(root);
            return RespFrame::integer(removed);
        }
        case Op::hincrby: {
            NodeHandle root(a[1]);
            auto n = L.incr(root.child(a[2]), parse_delta(a[3]));
            L.touch(root);
            return RespFrame::integer(n);
        }
        case Op::hlen:
            return RespFrame::integer(static_cast<std::int64_t>(L.subtree_size(NodeHandle(a[1]))));
        case Op::hgetall: {
            std::vector<RespFrame> items;
            for (auto& [f, v] : L.children(NodeHandle(a[1]))) {
                items.push_back(RespFrame::bulk(std::move(f)));
                items.push_back(RespFrame::bulk(std::move(v)));
            }
            return RespFrame::array(std::move(items));
        }
        case Op::del: {
            std::int64_t count = 0;
            for (std::size_t i = 1; i < a.size(); ++i) {
                NodeHandle root(a[i]);
                if (L.read(root).value || L.subtree_size(root) > 0) {
                    L.delete_tree(root);
                    ++count;
                }
            }
            return RespFrame::integer(count);
        }
        case Op::flushall:
            L.clear();
            return RespFrame::simple("OK");
    }
    return RespFrame::error("ERR internal: unhandled command");
}

RespFrame guarded(const std::function<RespFrame()>& f) {
    try {
        return f();
    } catch (const Error& e) {
        std::string msg = std::string("ERR ") + e.what();
        for (auto& c : msg) {
            if (c == '\r' || c == '\n') c = ' ';
        }
        return RespFrame::error(msg);
    }
}

RespFrame run_single(EmbeddedStore& store, const Spec& spec, const Args& args) {
    return guarded([&] {
        if (spec.op == Op::ping) {
            auto none = store.lock({});
            return apply(spec, none, args);
        }
        if (spec.all_shards) {
            auto all = store.lock_all();
            return apply(spec, all, args);
        }
        auto fp = footprint(spec, args);
        std::vector<const NodeHandle*> ptrs;
        for (const auto& h : fp) ptrs.push_back(&h);
        auto locked = store.lock(ptrs);
        return apply(spec, locked, args);
    });
}

// Per-connection WATCH/MULTI state.
struct TxState {
    std::vector<std::pair<NodeHandle, std::uint64_t>> watched;
    std::vector<std::pair<const Spec*, Args>> queued;
    bool in_multi = false;
    bool poisoned = false;  // a command was rejected while queueing

    void reset() {
        watched.clear();
        queued.clear();
        in_multi = false;
        poisoned = false;
    }
};

constexpr std::size_t kMaxPendingBytes = kMaxBulkLength + (1u << 20);

}  // namespace

RespFrame execute_command(EmbeddedStore& store, const std::vector<std::string>& args) {
    if (args.empty()) return RespFrame::error("ERR empty command");
    const Spec* spec = find_spec(upper(args[0]));
    if (!spec) return unknown_command(args);
    if (!arity_ok(*spec, args.size())) return arity_error(args);
    return run_single(store, *spec, args);
}

RespServer::RespServer(EmbeddedStore& store, const Address& addr)
    : store_(store), addr_(addr), listener_(listen_tcp(addr)), port_(local_port(listener_)) {}

RespServer::~RespServer() {
    stop();
}

void RespServer::start() {
    acceptor_ = std::thread([this] { accept_loop(); });
}

void RespServer::serve() {
    accept_loop();
}

void RespServer::stop() {
    if (stopping_.exchange(true)) {
        if (acceptor_.joinable()) acceptor_.join();
        return;
    }
    listener_.shutdown();
    if (acceptor_.joinable()) acceptor_.join();
    reap(true);
    listener_.close();
}

void RespServer::accept_loop() {
    while (!stopping_.load()) {
        Socket s = accept_tcp(listener_);
        if (!s) break;
        if (stopping_.load()) break;
        reap(false);
        auto conn = std::make_unique<Connection>();
        conn->sock = std::move(s);
        Connection* raw = conn.get();
        std::lock_guard lk(conns_mu_);
        raw->thread = std::thread([this, raw] {
            handle(*raw);
            raw->done = true;
        });
        conns_.push_back(std::move(conn));
    }
}

void RespServer::reap(bool all) {
    std::list<std::unique_ptr<Connection>> finished;
    {
        std::lock_guard lk(conns_mu_);
        for (auto it = conns_.begin(); it != conns_.end();) {
            if (all || (*it)->done.load()) {
                if (all) (*it)->sock.shutdown();
                finished.splice(finished.end(), conns_, it++);
            } else {
                ++it;
            }
        }
    }
    for (auto& c : finished) {
        if (c->thread.joinable()) c->thread.join();
    }
}

void RespServer::handle(Connection& c) {
    std::string buf;
    std::size_t pos = 0;
    std::string out;
    TxState tx;

    auto reply = [&](const RespFrame& f) { encode_frame(out, f); };

    auto dispatch = [&](Args& args) -> bool {
        ++commands_;
        std::string name = upper(args[0]);
        if (name == "QUIT") {
            reply(RespFrame::simple("OK"));
            return false;
        }
        if (name == "MULTI") {
            if (args.size() != 1) return reply(arity_error(args)), true;
            if (tx.in_multi) return reply(RespFrame::error("ERR MULTI calls can not be nested")), true;
            tx.in_multi = true;
            return reply(RespFrame::simple("OK")), true;
        }
        if (name == "DISCARD") {
            if (!tx.in_multi) return reply(RespFrame::error("ERR DISCARD without MULTI")), true;
            tx.reset();
            return reply(RespFrame::simple("OK")), true;
        }
        if (name == "WATCH") {
            if (args.size() < 2) return reply(arity_error(args)), true;
            if (tx.in_multi) return reply(RespFrame::error("ERR WATCH inside MULTI is not allowed")), true;
            reply(guarded([&] {
                for (std::size_t i = 1; i < args.size(); ++i) {
                    NodeHandle root(args[i]);
                    bool seen = std::any_of(tx.watched.begin(), tx.watched.end(),
                                            [&](const auto& w) { return w.first == root; });
                    if (!seen) tx.watched.emplace_back(root, store_.version(root));
                }
                return RespFrame::simple("OK");
            }));
            return true;
        }
        if (name == "UNWATCH") {
            if (!tx.in_multi) tx.watched.clear();
            if (tx.in_multi) {
                tx.queued.emplace_back(nullptr, std::move(args));
                return reply(RespFrame::simple("QUEUED")), true;
            }
            return reply(RespFrame::simple("OK")), true;
        }
        if (name == "EXEC") {
            if (!tx.in_multi) return reply(RespFrame::error("ERR EXEC without MULTI")), true;
            if (tx.poisoned) {
                tx.reset();
                return reply(RespFrame::error("EXECABORT Transaction discarded because of previous errors.")),
                       true;
            }
            auto all = store_.lock_all();
            bool clean = std::all_of(tx.watched.begin(), tx.watched.end(),
                                     [&](const auto& w) { return all.read(w.first).version == w.second; });
            if (!clean) {
                tx.reset();
                return reply(RespFrame::null_array()), true;
            }
            std::vector<RespFrame> results;
            for (auto& [spec, qargs] : tx.queued) {
                if (!spec) {
                    results.push_back(RespFrame::simple("OK"));  // UNWATCH
                    continue;
                }
                results.push_back(guarded([&] { return apply(*spec, all, qargs); }));
            }
            tx.reset();
            return reply(RespFrame::array(std::move(results))), true;
        }

        const Spec* spec = find_spec(name);
        RespFrame err;
        bool rejected = false;
        if (!spec) {
            err = unknown_command(args);
            rejected = true;
        } else if (!arity_ok(*spec, args.size())) {
            err = arity_error(args);
            rejected = true;
        }
        if (tx.in_multi) {
            if (rejected) {
                tx.poisoned = true;
                return reply(err), true;
            }
            tx.queued.emplace_back(spec, std::move(args));
            return reply(RespFrame::simple("QUEUED")), true;
        }
        if (rejected) return reply(err), true;
        reply(run_single(store_, *spec, args));
        return true;
    };

    try {
        for (;;) {
            bool keep_going = true;
            for (;;) {
                std::optional<Decoded> d;
                try {
                    d = decode_frame(std::string_view(buf).substr(pos));
                } catch (const ProtocolError& e) {
                    reply(RespFrame::error(std::string("ERR Protocol error: ") + e.what()));
                    keep_going = false;
                    break;
                }
                if (!d) break;
                pos += d->consumed;
                RespFrame& f = d->frame;
                bool well_formed = f.type == RespFrame::Type::array && !f.null && !f.elements.empty() &&
                                   std::all_of(f.elements.begin(), f.elements.end(), [](const RespFrame& e) {
                                       return e.type == RespFrame::Type::bulk && !e.null;
                                   });
                if (!well_formed) {
                    reply(RespFrame::error("ERR Protocol error: expected an array of bulk strings"));
                    keep_going = false;
                    break;
                }
                Args args;
                args.reserve(f.elements.size());
                for (auto& e : f.elements) args.push_back(std::move(e.text));
                if (!dispatch(args)) {
                    keep_going = false;
                    break;
                }
            }
            if (!out.empty()) {
                c.sock.send_all(out);
                out.clear();
            }
            if (!keep_going) break;
            if (pos > 0) {
                buf.erase(0, pos);
                pos = 0;
            }
            if (buf.size() > kMaxPendingBytes) {
                c.sock.send_all(encode_frame(RespFrame::error("ERR Protocol error: request too large")));
                break;
            }
            if (c.sock.recv_some(buf) == 0) break;
        }
    } catch (const ConnectionError&) {
    }
    c.sock.shutdown();
}

}  // namespace threen1
