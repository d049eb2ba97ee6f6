#include <doctest.h>

#include <cstdlib>
#include <random>
#include <sstream>

#include <json.hpp>

#include "support.hpp"
#include "threen1/cli.hpp"
#include "threen1/error.hpp"
#include "threen1/report.hpp"

using namespace threen1;

namespace {

struct CliRun {
    int code;
    std::string out, err;
};

CliRun cli(std::vector<std::string> args) {
    std::ostringstream out, err;
    int code = run_cli(args, out, err);
    return {code, out.str(), err.str()};
}

BenchReport sample() {
    BenchReport r;
    r.backend = "embedded";
    r.coordination = "locks";
    r.workers = 8;
    r.limit = 1000;
    r.block_size = 100;
    r.longest = 178;
    r.highest = 250504;
    r.reads = 4522;
    r.updates = 2255;
    r.elapsed_s = 0.0123456789;
    return r;
}

}  // namespace

TEST_CASE("reports round-trip through JSON and CSV") {
    auto r = sample();
    CHECK(parse_json_report(format_json(r)) == r);
    CHECK(parse_csv_report(format_csv(r)) == r);
    CHECK(parse_csv_report(csv_row(r)) == r);
    CHECK(format_csv(r).starts_with(
        "backend,coordination,workers,limit,block_size,longest,highest,reads,updates,elapsed_s\n"));
    CHECK(format_csv(r).ends_with("embedded,locks,8,1000,100,178,250504,4522,2255,0.0123456789\n"));

    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> secs(0, 100);
    for (int i = 0; i < 1000; ++i) {
        r.workers = static_cast<unsigned>(rng() % 64 + 1);
        r.reads = rng();
        r.updates = rng();
        r.highest = rng();
        r.elapsed_s = secs(rng);
        REQUIRE(parse_json_report(format_json(r)) == r);
        REQUIRE(parse_csv_report(format_csv(r)) == r);
    }
    auto text = format_text(sample());
    CHECK(text.find("longest       178") != std::string::npos);
    CHECK(text.find("elapsed (s)   0.012346") != std::string::npos);

    CHECK_THROWS_AS(parse_csv_report("a,b,c\n"), UsageError);
    CHECK_THROWS_AS(parse_json_report("{\"backend\":1}"), UsageError);
    CHECK_THROWS_AS(parse_format("xml"), UsageError);
}

TEST_CASE("cli bench and verify on the embedded backend") {
    auto r = cli({"bench", "--workers", "1", "--limit", "10", "--format", "json"});
    REQUIRE(r.code == kExitOk);
    auto j = nlohmann::json::parse(r.out);
    CHECK(j["longest"] == 19);
    CHECK(j["highest"] == 52);
    CHECK(j["reads"] == 45);
    CHECK(j["updates"] == 29);
    CHECK(j["backend"] == "embedded");
    CHECK(j["coordination"] == "locks");

    r = cli({"bench", "--workers", "3", "--limit", "500", "--block-size", "50", "--format", "csv"});
    REQUIRE(r.code == kExitOk);
    auto rep = parse_csv_report(r.out);
    CHECK(rep.workers == 3);
    CHECK(rep.longest == oracle(500).longest);

    CHECK(cli({"verify", "--workers", "8", "--limit", "1000"}).code == kExitOk);
    auto one = cli({"verify", "--limit", "1", "--format", "json"});
    CHECK(one.code == kExitOk);
    CHECK(nlohmann::json::parse(one.out)["longest"] == 0);
    CHECK(cli({"verify", "--workers", "2", "--limit", "100", "--coordination", "polling", "--poll-interval",
               "0.01"})
              .code == kExitOk);
}

TEST_CASE("cli verify reports a corrupted step entry") {
    auto r = cli({"verify", "--workers", "2", "--limit", "100", "--corrupt-step", "27"});
    CHECK(r.code == kExitMismatch);
    CHECK(r.err.find("step(27)") != std::string::npos);
}

TEST_CASE("cli usage errors") {
    CHECK(cli({}).code == kExitUsage);
    CHECK(cli({"bench", "--coordination", "locks", "--backend", "resp"}).code == kExitUsage);
    CHECK(cli({"bench", "--workers", "0"}).code == kExitUsage);
    CHECK(cli({"bench", "--backend", "redis"}).code == kExitUsage);
    CHECK(cli({"bench", "--format", "xml"}).code == kExitUsage);
    CHECK(cli({"bench", "--addr", "host:notaport", "--backend", "resp"}).code == kExitUsage);
    CHECK(cli({"frobnicate"}).code == kExitUsage);
    auto help = cli({"--help"});
    CHECK(help.code == kExitOk);
    CHECK(help.out.find("bench") != std::string::npos);
    CHECK(help.out.find("corrupt") == std::string::npos);
}

TEST_CASE("cli against a RESP server") {
    testing::LoopbackServer srv;
    auto addr = srv.addr().str();
    auto r = cli({"bench", "--backend", "resp", "--addr", addr, "--workers", "1", "--limit", "10", "--format", "json",
                  "--poll-interval", "0.01"});
    REQUIRE(r.code == kExitOk);
    auto j = nlohmann::json::parse(r.out);
    CHECK(j["longest"] == 19);
    CHECK(j["highest"] == 52);
    CHECK(j["coordination"] == "polling");

    // Leftover data is refused unless flushed.
    r = cli({"bench", "--backend", "resp", "--addr", addr, "--workers", "1", "--limit", "10"});
    CHECK(r.code == kExitEnvironment);
    CHECK(r.err.find("--force-flush") != std::string::npos);
    r = cli({"verify", "--backend", "resp", "--addr", addr, "--workers", "2", "--limit", "300", "--force-flush",
             "--poll-interval", "0.01"});
    CHECK(r.code == kExitOk);

    // The address can come from the environment.
    ::setenv("BENCH_ADDR", addr.c_str(), 1);
    r = cli({"bench", "--backend", "resp", "--workers", "1", "--limit", "10", "--force-flush", "--poll-interval",
             "0.01"});
    ::unsetenv("BENCH_ADDR");
    CHECK(r.code == kExitOk);
}

TEST_CASE("cli reports an unreachable server as an environment error") {
    Address dead;
    {
        testing::LoopbackServer srv;
        dead = srv.addr();
    }
    auto r = cli({"bench", "--backend", "resp", "--addr", dead.str(), "--workers", "1", "--limit", "10"});
    CHECK(r.code == kExitEnvironment);
    CHECK(r.err.find("cannot connect") != std::string::npos);
}
