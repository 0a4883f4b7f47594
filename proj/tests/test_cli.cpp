// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <fstream>
#include <sstream>

#include "hcache/cli.hpp"
#include "hcache/serialize.hpp"
#include "hcache/trace.hpp"
#include "support.hpp"

using namespace hcache;
using testing_support::TempDir;

namespace {

struct Result {
    int code = 0;
    std::string out;
    std::string err;
};

Result cli(std::vector<std::string> args) {
    args.insert(args.begin(), "hcache");
    std::vector<const char*> argv;
    for (const auto& a : args) argv.push_back(a.c_str());
    std::ostringstream out;
    std::ostringstream err;
    Result r;
    r.code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
    r.out = out.str();
    r.err = err.str();
    return r;
}

std::string demo_config() { return (testing_support::source_dir() / "configs" / "demo.json").string(); }

Json read_json(const std::filesystem::path& p) { return Json::parse(testing_support::read_file(p)); }

void write_text(const std::filesystem::path& p, const std::string& text) { std::ofstream(p) << text; }

}  // namespace

TEST(Cli, GenTraceWritesValidDeterministicTraces) {
    TempDir dir;
    const auto a = cli({"gen-trace", "--config", demo_config(), "--out", (dir / "a.hctr").string()});
    ASSERT_EQ(a.code, 0) << a.err;
    const auto b = cli({"gen-trace", "--config", demo_config(), "--out", (dir / "b.hctr").string()});
    ASSERT_EQ(b.code, 0) << b.err;
    const auto bytes = testing_support::read_file(dir / "a.hctr");
    EXPECT_EQ(bytes.substr(0, 8), "HCTRACE1");
    EXPECT_EQ(bytes, testing_support::read_file(dir / "b.hctr"));
    EXPECT_TRUE(std::filesystem::exists(dir / "a.hctr.labels.json"));
    const auto t = read_trace_file(dir / "a.hctr");
    EXPECT_NE(a.out.find(trace_fingerprint(t)), std::string::npos);
    const auto other = cli({"gen-trace", "--config", demo_config(), "--seed", "8", "--out", (dir / "c.hctr").string()});
    ASSERT_EQ(other.code, 0);
    EXPECT_NE(bytes, testing_support::read_file(dir / "c.hctr"));
}

TEST(Cli, GenTraceCountNumbersFiles) {
    TempDir dir;
    const auto r = cli({"gen-trace", "--config", demo_config(), "--count", "3", "--out", (dir / "t.hctr").string()});
    ASSERT_EQ(r.code, 0) << r.err;
    for (int i = 0; i < 3; ++i) EXPECT_TRUE(std::filesystem::exists(dir / ("t-" + std::to_string(i) + ".hctr")));
    EXPECT_NE(testing_support::read_file(dir / "t-0.hctr"), testing_support::read_file(dir / "t-1.hctr"));
}

TEST(Cli, ExitCodes) {
    TempDir dir;
    const auto missing = cli({"simulate", "--config", (dir / "nope.json").string()});
    EXPECT_EQ(missing.code, kExitConfig);
    const auto err = Json::parse(missing.err);
    EXPECT_EQ(err["error"], "config");
    EXPECT_TRUE(err.contains("message"));

    const auto sim = cli({"simulate", "--config", demo_config(), "--tau-sim", "1.01", "--out", dir.path().string()});
    EXPECT_EQ(sim.code, kExitConfig);

    write_text(dir / "bad.hctr", "HCTRACE0 not a trace");
    const auto bad = cli({"profile", "--trace", (dir / "bad.hctr").string(), "--out", dir.path().string()});
    EXPECT_EQ(bad.code, kExitInput);
    EXPECT_EQ(Json::parse(bad.err)["error"].get<std::string>().rfind("trace_", 0), 0u);

    const auto infeasible = cli({"plan", "--config", demo_config(), "--rho", "0.05", "--out", dir.path().string()});
    EXPECT_EQ(infeasible.code, kExitInfeasible);
    EXPECT_EQ(Json::parse(infeasible.err)["error"], "infeasible_budget");

    EXPECT_EQ(cli({"frobnicate"}).code, kExitConfig);
    EXPECT_EQ(cli({"--help"}).code, kExitOk);
}

TEST(Cli, ProfileAndPlanWriteArtifacts) {
    TempDir dir;
    const auto p = cli({"profile", "--config", demo_config(), "--similarity-step", "0", "--out", dir.path().string()});
    ASSERT_EQ(p.code, 0) << p.err;
    EXPECT_EQ(p.out.rfind("role,count\n", 0), 0u);
    for (auto f : {"taxonomy.json", "role_counts.csv", "heads.csv", "layer_similarity.csv"}) {
        EXPECT_TRUE(std::filesystem::exists(dir / f)) << f;
    }
    const auto plan = cli({"plan", "--config", demo_config(), "--taxonomy", (dir / "taxonomy.json").string(), "--out",
                           (dir / "plan").string()});
    ASSERT_EQ(plan.code, 0) << plan.err;
    const auto doc = read_json(dir / "plan" / "plan.json");
    EXPECT_DOUBLE_EQ(doc["rho"].get<double>(), 0.5);
}

TEST(Cli, SimulateOracleOnly) {
    TempDir dir;
    const auto r = cli({"simulate", "--config", demo_config(), "--policy", "full_oracle", "--out", dir.path().string()});
    ASSERT_EQ(r.code, 0) << r.err;
    const auto rep = read_json(dir / "report_full_oracle.json");
    for (const auto& s : rep["steps"]) EXPECT_EQ(s["recall"].get<double>(), 1.0);
    EXPECT_FALSE(std::filesystem::exists(dir / "taxonomy.json"));
    EXPECT_TRUE(std::filesystem::exists(dir / "timeseries.csv"));
}

TEST(Cli, SimulateMatchesGoldenReplay) {
    TempDir dir;
    const auto r = cli({"simulate", "--config", demo_config(), "--policy", "heterocache", "--policy", "no_retrieval",
                        "--out", dir.path().string()});
    ASSERT_EQ(r.code, 0) << r.err;
    const auto golden = read_json(testing_support::source_dir() / "tests" / "golden" / "demo_heterocache.json");
    const auto rep = read_json(dir / "report_heterocache.json");
    EXPECT_EQ(rep["trace_fingerprint"], golden["trace_fingerprint"]);
    EXPECT_EQ(rep["events"], golden["events"]);
    ASSERT_FALSE(golden["events"].empty());
    ASSERT_EQ(rep["steps"].size(), golden["recall"].size());
    for (std::size_t i = 0; i < golden["recall"].size(); ++i) {
        EXPECT_NEAR(rep["steps"][i]["recall"].get<double>(), golden["recall"][i].get<double>(), 1e-12);
        EXPECT_EQ(rep["steps"][i]["budget_entries"], golden["budget_entries"][i]);
    }
    const auto off = read_json(dir / "report_no_retrieval.json");
    EXPECT_TRUE(off["events"].empty());
    EXPECT_EQ(off["summary"]["total_bytes"], 0);
}

TEST(Cli, CompareWritesTable) {
    TempDir dir;
    ASSERT_EQ(cli({"simulate", "--config", demo_config(), "--out", dir.path().string()}).code, 0);
    const auto c = cli({"compare", "--report", (dir / "report_static_topk.json").string(), "--report",
                        (dir / "report_heterocache.json").string(), "--report",
                        (dir / "report_full_oracle.json").string(), "--out", (dir / "cmp").string()});
    ASSERT_EQ(c.code, 0) << c.err;
    const auto table = read_json(dir / "cmp" / "comparison.json");
    ASSERT_EQ(table["rows"].size(), 3u);
    EXPECT_EQ(table["rows"][0]["policy"], "full_oracle");
    EXPECT_EQ(table["rows"][1]["policy"], "heterocache");
    EXPECT_EQ(table["deltas"].size(), 3u);
    EXPECT_EQ(c.out, testing_support::read_file(dir / "cmp" / "comparison.csv"));

    const auto one = cli({"compare", "--report", (dir / "report_static_topk.json").string()});
    EXPECT_EQ(one.code, kExitConfig);
    write_text(dir / "junk.json", "{\"policy\": 1}");
    const auto junk = cli({"compare", "--report", (dir / "junk.json").string(), "--report",
                           (dir / "report_heterocache.json").string()});
    EXPECT_EQ(junk.code, kExitInput);
}
