#include "threen1/cli.hpp"

#include <csignal>
#include <pthread.h>

#include <thread>

#include <CLI11.hpp>

#include "threen1/bench.hpp"
#include "threen1/error.hpp"
#include "threen1/report.hpp"
#include "threen1/resp_server.hpp"

namespace threen1 {

namespace {

struct BenchFlags {
    std::string backend = "embedded";
    std::string addr = "127.0.0.1:6379";
    unsigned workers = 0;  // 0: twice the CPU count
    std::uint64_t limit = 100'000;
    std::uint64_t block_size = 1'000;
    std::string coordination;
    double poll_interval = 0.1;
    unsigned retry_limit = 10'000;
    std::string format = "text";
    bool force_flush = false;
    std::string event_log;
    std::vector<std::uint64_t> corrupt_steps;
};

void add_bench_flags(CLI::App* cmd, BenchFlags& f, bool verify) {
    cmd->add_option("--backend", f.backend, "embedded or resp")->check(CLI::IsMember({"embedded", "resp"}));
    cmd->add_option("--addr", f.addr, "RESP server host:port")->envname("BENCH_ADDR");
    cmd->add_option("--workers", f.workers, "worker count (default: 2x CPUs)")->check(CLI::PositiveNumber);
    cmd->add_option("--limit", f.limit, "compute sequences for starts 1..limit")->check(CLI::PositiveNumber);
    cmd->add_option("--block-size", f.block_size, "starts per claimable block")->check(CLI::PositiveNumber);
    cmd->add_option("--coordination", f.coordination, "locks or polling (default: locks on embedded)")
        ->check(CLI::IsMember({"locks", "polling"}));
    cmd->add_option("--poll-interval", f.poll_interval, "seconds between polls")->check(CLI::PositiveNumber);
    cmd->add_option("--retry-limit", f.retry_limit, "attempts per transaction before giving up")
        ->check(CLI::PositiveNumber);
    cmd->add_option("--format", f.format, "text, json or csv")->check(CLI::IsMember({"text", "json", "csv"}));
    cmd->add_flag("--force-flush", f.force_flush, "clear the store before running");
    cmd->add_option("--event-log", f.event_log, "write coordination events as JSON lines");
    if (verify) {
        // Test hook: damages step(K) after the run so the check has something to find.
        cmd->add_option("--corrupt-step", f.corrupt_steps)->group("");
    }
}

BenchConfig to_config(const BenchFlags& f) {
    BenchConfig c;
    c.backend = parse_backend(f.backend);
    c.addr = parse_address(f.addr);
    unsigned cpus = std::max(1u, std::thread::hardware_concurrency());
    c.workers = f.workers ? f.workers : 2 * cpus;
    c.limit = f.limit;
    c.block_size = f.block_size;
    if (!f.coordination.empty()) c.coordination = parse_coordination(f.coordination);
    c.poll_interval = f.poll_interval;
    c.retry_limit = f.retry_limit;
    c.force_flush = f.force_flush;
    c.validate();
    return c;
}

int cmd_bench(const BenchFlags& f, bool verify, std::ostream& out, std::ostream& err) {
    BenchConfig config = to_config(f);
    auto format = parse_format(f.format);
    std::unique_ptr<EventLog> log;
    if (!f.event_log.empty()) {
        log = std::make_unique<EventLog>(f.event_log);
        config.event_log = log.get();
    }
    EmbeddedStore store;
    auto sessions = config.backend == Backend::embedded ? embedded_sessions(store) : resp_sessions(config.addr);
    BenchReport report = run_bench(config, *sessions);
    out << format_report(report, format);
    if (!verify) return kExitOk;

    auto s = sessions->open();
    for (auto k : f.corrupt_steps) {
        NodeHandle h("step", {k});
        auto cur = s->get(h);
        s->set(h, std::to_string((cur ? parse_unsigned(*cur) : 0) + 1));
    }
    VerifyResult v = verify_run(*s, report);
    if (v.ok) {
        err << "verify: ok, longest and highest match the oracle, " << v.entries_checked
            << " step entries replay to 1\n";
        return kExitOk;
    }
    err << "verify: FAILED\n";
    for (const auto& p : v.problems) err << "  " << p << "\n";
    return kExitMismatch;
}

int cmd_serve(const std::string& addr_text, std::ostream& out) {
    Address addr = parse_address(addr_text);
    // Block the stop signals before any thread starts so only sigwait sees them.
    sigset_t stop;
    sigemptyset(&stop);
    sigaddset(&stop, SIGINT);
    sigaddset(&stop, SIGTERM);
    pthread_sigmask(SIG_BLOCK, &stop, nullptr);

    EmbeddedStore store;
    RespServer server(store, addr);
    server.start();
    out << "listening on " << server.address().str() << std::endl;
    int sig = 0;
    sigwait(&stop, &sig);
    server.stop();
    out << "stopped after " << server.commands_served() << " commands" << std::endl;
    return kExitOk;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"3n+1 memoization benchmark over an embedded store or a RESP server", "threen1"};
    app.require_subcommand(1);

    BenchFlags bench_flags, verify_flags;
    auto* bench = app.add_subcommand("bench", "run the benchmark and print a report");
    add_bench_flags(bench, bench_flags, false);
    auto* verify = app.add_subcommand("verify", "run the benchmark and check it against the oracle");
    add_bench_flags(verify, verify_flags, true);
    std::string serve_addr = "127.0.0.1:6379";
    auto* serve = app.add_subcommand("serve", "serve a RESP2 store until SIGINT or SIGTERM");
    serve->add_option("--addr", serve_addr, "host:port to listen on");

    std::vector<std::string> argv(args.rbegin(), args.rend());
    try {
        app.parse(argv);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return kExitOk;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return kExitOk;
    } catch (const CLI::ParseError& e) {
        err << "threen1: " << e.what() << "\n";
        return kExitUsage;
    }

    try {
        if (*bench) return cmd_bench(bench_flags, false, out, err);
        if (*verify) return cmd_bench(verify_flags, true, out, err);
        if (*serve) return cmd_serve(serve_addr, out);
    } catch (const UsageError& e) {
        err << "threen1: " << e.what() << "\n";
        return kExitUsage;
    } catch (const Error& e) {
        err << "threen1: " << e.what() << "\n";
        return kExitEnvironment;
    }
    return kExitUsage;
}

}  // namespace threen1
