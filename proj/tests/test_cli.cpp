#include <gtest/gtest.h>

#include <json.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <sys/wait.h>

#include "fixtures.hpp"

namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
    const auto p = fs::temp_directory_path() / ("evgrid_cli_" + name + "_" + std::to_string(::getpid()));
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

int run(const std::string& args) {
    const std::string cmd = std::string(EVGRID_CLI) + " --quiet " + args + " > /dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::string scenario(const std::string& name) { return fixtures::dataset("scenarios/" + name); }

}  // namespace

TEST(Cli, TransientWritesOutputs) {
    const auto dir = scratch("transient");
    ASSERT_EQ(run("--out-dir " + dir.string() + " transient --scenario " + scenario("all_2030.txt")), 0);
    for (const char* f : {"frequency.csv", "voltage.csv", "loading.csv", "summary.json", "manifest.json"})
        EXPECT_TRUE(fs::exists(dir / f)) << f;
    const auto summary = nlohmann::json::parse(slurp(dir / "summary.json"));
    EXPECT_NEAR(summary["peak_hz"].get<double>(), 62.05, 0.1);
    EXPECT_EQ(summary["verdict"], "system_wide");
    EXPECT_FALSE(summary["relay_events"].empty());
    const auto manifest = nlohmann::json::parse(slurp(dir / "manifest.json"));
    EXPECT_EQ(manifest["inputs"].size(), 3u);
    for (const auto& in : manifest["inputs"]) EXPECT_EQ(in["sha256"].get<std::string>().size(), 64u);
    const auto freq = slurp(dir / "frequency.csv");
    EXPECT_EQ(freq.substr(0, freq.find('\n')), "time_s,bus_id,freq_hz");
}

TEST(Cli, RepeatedRunsAreByteIdentical) {
    const auto a = scratch("repeat_a"), b = scratch("repeat_b");
    const std::string args = " transient --scenario " + scenario("tesla_2030.txt");
    ASSERT_EQ(run("--out-dir " + a.string() + args), 0);
    ASSERT_EQ(run("--out-dir " + b.string() + args), 0);
    std::size_t compared = 0;
    for (const auto& e : fs::directory_iterator(a)) {
        if (e.path().filename() == "manifest.json") continue;
        EXPECT_EQ(slurp(e.path()), slurp(b / e.path().filename())) << e.path().filename();
        ++compared;
    }
    EXPECT_GE(compared, 4u);
}

TEST(Cli, PowerflowAndSweeps) {
    const auto dir = scratch("sweeps");
    const auto out = "--out-dir " + dir.string();
    EXPECT_EQ(run(out + " powerflow --year none,2030,2050"), 0);
    EXPECT_TRUE(fs::exists(dir / "loading_2050.csv"));
    const auto l = slurp(dir / "loading_2050.csv");
    EXPECT_EQ(l.substr(0, l.find('\n')), "branch_from,branch_to,loading_pct,p_mw_from,q_mvar_from");
    EXPECT_EQ(run(out + " sweep --mode operator --out ops.csv"), 0);
    EXPECT_TRUE(fs::exists(dir / "ops.csv"));
    EXPECT_EQ(run(out + " sweep --mode min-power --operators Tesla --tol-mw 1"), 0);
    const auto mp = slurp(dir / "min_power.csv");
    EXPECT_NE(mp.find(",true,"), std::string::npos);
}

TEST(Cli, ExitCodes) {
    const auto dir = scratch("codes");
    const auto out = "--out-dir " + dir.string();
    EXPECT_EQ(run("--version"), 0);
    EXPECT_EQ(run(out + " transient --scenario /nonexistent.txt"), 2);
    EXPECT_EQ(run(out + " frobnicate"), 2);
    EXPECT_EQ(run(out + " --case /nonexistent.txt powerflow"), 2);
    EXPECT_EQ(run(out + " powerflow --year 1999"), 2);

    // A load far beyond what the single line can carry: the power flow cannot converge.
    const auto heavy = dir / "heavy.txt";
    std::ofstream(heavy) << "[bus]\n"
                            "id name nominal_kv kind base_load_p base_load_q\n"
                            "1 gen 138 slack 0 0\n"
                            "2 load 138 pq 2000 0\n"
                            "[branch]\n"
                            "from_bus to_bus r x rating kind side_voltages\n"
                            "1 2 0.01 0.1 200 line 138/138\n"
                            "[generator]\n"
                            "bus p_set capacity inertia_h droop_r governor_tc damping_d xd_transient\n"
                            "1 0 3000 5 0.05 0.5 0 0.2\n";
    EXPECT_EQ(run(out + " --case " + heavy.string() + " --fleet " + fixtures::dataset("fleet.txt") + " powerflow"), 1);
}
