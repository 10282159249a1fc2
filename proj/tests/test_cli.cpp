#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdio>
#include <filesystem>

#include "gelbot/eval.hpp"
#include "gelbot/protocol.hpp"

using namespace gelbot;
namespace fs = std::filesystem;

namespace {

struct CliRun {
    int status = -1;
    std::string out;
};

// Runs the CLI with stderr merged into the captured output.
CliRun cli(const std::string& args) {
    const std::string cmd = std::string(GELBOT_CLI) + " " + args + " 2>&1";
    CliRun r;
    FILE* p = popen(cmd.c_str(), "r");
    if (!p) return r;
    char buf[4096];
    for (std::size_t n; (n = std::fread(buf, 1, sizeof buf, p)) > 0;) r.out.append(buf, n);
    const int raw = pclose(p);
    r.status = WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
    return r;
}

fs::path scratch_dir(const std::string& name) {
    const fs::path p = fs::temp_directory_path() / ("gelbot_cli_" + name);
    fs::remove_all(p);
    return p;
}

}  // namespace

TEST(Cli, HelpListsSubcommands) {
    const CliRun r = cli("--help");
    EXPECT_EQ(r.status, 0);
    for (const char* s : {"simulate", "compare", "eval-detector", "gen-dataset", "proto-encode", "proto-decode"})
        EXPECT_NE(r.out.find(s), std::string::npos) << s;
}

TEST(Cli, CompareWritesReportMatchingLibrary) {
    const fs::path out = scratch_dir("compare");
    const CliRun r = cli("compare --seeds 1..3 --out " + out.string());
    ASSERT_EQ(r.status, 0) << r.out;
    ASSERT_TRUE(fs::exists(out / "report.json"));
    ASSERT_TRUE(fs::exists(out / "table.txt"));
    const std::vector<std::uint64_t> seeds{1, 2, 3};
    const ComparisonReport lib = compare_policies(SimConfig{}, seeds);
    EXPECT_EQ(detail::read_file(out / "report.json"), to_json(lib).dump(2) + "\n");
    EXPECT_EQ(detail::read_file(out / "table.txt"), format_table(lib));
    fs::remove_all(out);
}

TEST(Cli, CompareSeedListAndOverride) {
    const fs::path out = scratch_dir("compare_list");
    const CliRun r = cli("compare --seeds 4,7 --set controller.burst_volume_mm3=750 --out " + out.string());
    ASSERT_EQ(r.status, 0) << r.out;
    SimConfig c;
    c.controller.burst_volume = 750;
    const std::vector<std::uint64_t> seeds{4, 7};
    EXPECT_EQ(detail::read_file(out / "report.json"), to_json(compare_policies(c, seeds)).dump(2) + "\n");
    fs::remove_all(out);
}

TEST(Cli, CompareNeedsTwoSeeds) {
    const fs::path out = scratch_dir("compare_one");
    EXPECT_EQ(cli("compare --seeds 3 --out " + out.string()).status, 1);
    EXPECT_EQ(cli("compare --seeds x..4 --out " + out.string()).status, 1);
    fs::remove_all(out);
}

TEST(Cli, MissingConfigNamesPath) {
    const fs::path out = scratch_dir("missing");
    const CliRun r = cli("simulate --config /nonexistent/gelbot.toml --out " + out.string());
    EXPECT_EQ(r.status, 1);
    EXPECT_NE(r.out.find("/nonexistent/gelbot.toml"), std::string::npos) << r.out;
    EXPECT_FALSE(fs::exists(out));
}

TEST(Cli, UnknownOverrideKeyRejected) {
    const CliRun r = cli("simulate --set scan.bogus=1 --out " + scratch_dir("bogus").string());
    EXPECT_EQ(r.status, 1);
    EXPECT_NE(r.out.find("scan.bogus"), std::string::npos) << r.out;
}

TEST(Cli, UnknownSubcommandIsUsageError) {
    EXPECT_EQ(cli("frobnicate").status, 1);
    EXPECT_EQ(cli("").status, 1);
}

TEST(Cli, SimulateWritesMetricsAndLogs) {
    const fs::path out = scratch_dir("simulate");
    const CliRun r = cli("simulate --seed 2 --out " + out.string());
    ASSERT_EQ(r.status, 0) << r.out;
    const auto metrics = nlohmann::json::parse(detail::read_file(out / "metrics.json"));
    const RunResult a = run_scan(Policy::Autonomous, 2, SimConfig{});
    EXPECT_EQ(metrics["autonomous"]["metrics"], nlohmann::json::parse(to_json(a.metrics).dump()));
    EXPECT_EQ(detail::read_file(out / "events_autonomous.jsonl"), event_log_jsonl(a));
    EXPECT_TRUE(fs::exists(out / "events_manual.jsonl"));
    fs::remove_all(out);
}

TEST(Cli, ProtoEncodeDispenseStop) {
    const CliRun r = cli("proto-encode dispense-stop");
    EXPECT_EQ(r.status, 0);
    EXPECT_EQ(r.out, proto::to_hex(proto::encode(proto::DispenseStop{})) + "\n");
}

TEST(Cli, ProtoEncodeFields) {
    CliRun r = cli("proto-encode dispense-start --speed 2.5");
    EXPECT_EQ(r.status, 0);
    EXPECT_EQ(r.out, proto::to_hex(proto::encode(proto::DispenseStart{25})) + "\n");
    r = cli("proto-encode telemetry --stroke 12.34 --flags 1");
    EXPECT_EQ(r.status, 0);
    EXPECT_EQ(r.out, proto::to_hex(proto::encode(proto::Telemetry{1234, 1})) + "\n");
    EXPECT_EQ(cli("proto-encode dispense-start --speed 9").status, 1);
    EXPECT_EQ(cli("proto-encode teleport").status, 1);
}

TEST(Cli, ProtoDecode) {
    const auto stop = proto::encode(proto::DispenseStop{});
    auto bad = proto::encode(proto::StatusRequest{});
    bad.back() ^= 0xFF;
    std::string hex = proto::to_hex(stop) + " " + proto::to_hex(bad) + " a5 81";
    const CliRun r = cli("proto-decode \"" + hex + "\"");
    EXPECT_EQ(r.status, 0) << r.out;
    EXPECT_NE(r.out.find("@0 DispenseStop"), std::string::npos) << r.out;
    EXPECT_NE(r.out.find("@4 error CrcMismatch"), std::string::npos) << r.out;
    EXPECT_NE(r.out.find("remainder a5 81"), std::string::npos) << r.out;
    EXPECT_EQ(cli("proto-decode zz").status, 1);
}

TEST(Cli, DatasetGenerateAndEvaluate) {
    const fs::path data = scratch_dir("dataset");
    const fs::path out = scratch_dir("dataset_scores");
    CliRun r = cli("gen-dataset --frames 15 --seed 9 --out " + data.string());
    ASSERT_EQ(r.status, 0) << r.out;
    FixtureParams p;
    p.frames = 15;
    p.seed = 9;
    const Dataset lib = make_fixture(p);
    r = cli("eval-detector --dataset " + data.string() + " --out " + out.string());
    ASSERT_EQ(r.status, 0) << r.out;
    const auto scores = nlohmann::json::parse(detail::read_file(out / "scores.json"));
    EXPECT_EQ(scores["mean_iou"].get<double>(), evaluate_detector(lib, SimConfig{}.camera.threshold).mean);
    EXPECT_EQ(cli("eval-detector --dataset " + (data / "nope").string()).status, 2);
    fs::remove_all(data);
    fs::remove_all(out);
}
