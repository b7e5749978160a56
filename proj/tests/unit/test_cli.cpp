#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "uvoc/cli.hpp"
#include "uvoc/scenario.hpp"

using namespace uvoc;
namespace fs = std::filesystem;

namespace {

std::string scenario_path(const std::string& name) { return std::string(UVOC_SCENARIO_DIR) + "/" + name; }

struct Result {
    int code = 0;
    std::string out, err;
};

Result run_cli(std::vector<std::string> args) {
    args.insert(args.begin(), "uvoc");
    std::ostringstream out, err;
    Result r;
    r.code = cli::run(args, out, err);
    r.out = out.str();
    r.err = err.str();
    return r;
}

std::string slurp(const fs::path& p) {
    std::ifstream is(p, std::ios::binary);
    std::ostringstream os;
    os << is.rdbuf();
    return os.str();
}

class CliTest : public ::testing::Test {
protected:
    void SetUp() override {
        const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
        dir_ = fs::temp_directory_path() / (std::string("uvoc_cli_") + info->name());
        fs::remove_all(dir_);
        fs::create_directories(dir_);
    }
    void TearDown() override { fs::remove_all(dir_); }

    std::string out(const std::string& sub = "out") const { return (dir_ / sub).string(); }

    fs::path write(const std::string& name, const std::string& text) const {
        const fs::path p = dir_ / name;
        std::ofstream(p) << text;
        return p;
    }

    std::map<std::string, double> key_values(const std::string& text) const {
        std::map<std::string, double> kv;
        std::istringstream is(text);
        std::string line;
        while (std::getline(is, line)) {
            const auto eq = line.find('=');
            if (eq == std::string::npos) continue;
            try {
                kv[line.substr(0, eq)] = std::stod(line.substr(eq + 1));
            } catch (const std::exception&) {
            }
        }
        return kv;
    }

    fs::path dir_;
};

}  // namespace

TEST(Fnv, KnownVectors) {
    EXPECT_EQ(cli::fnv1a64(""), 0xcbf29ce484222325ULL);
    EXPECT_EQ(cli::fnv1a64("a"), 0xaf63dc4c8601ec8cULL);
    EXPECT_EQ(cli::fnv1a64("foobar"), 0x85944171f73967e8ULL);
    EXPECT_EQ(cli::hex64(0xaf63dc4c8601ec8cULL), "af63dc4c8601ec8c");
    EXPECT_EQ(cli::hex64(1), "0000000000000001");
}

TEST(ExitCodes, Mapping) {
    EXPECT_EQ(cli::exit_code_for(ErrorKind::Schema), cli::kExitSchema);
    EXPECT_EQ(cli::exit_code_for(ErrorKind::Io), cli::kExitSchema);
    EXPECT_EQ(cli::exit_code_for(ErrorKind::NonConvergence), cli::kExitNumerical);
    EXPECT_EQ(cli::exit_code_for(ErrorKind::NonFinite), cli::kExitNumerical);
    const auto j = nlohmann::json::parse(cli::error_json(ErrorKind::Schema, "bad", "here"));
    EXPECT_EQ(j["code"], "schema");
    EXPECT_EQ(j["context"], "here");
}

TEST_F(CliTest, MissingFileIsSchemaError) {
    const Result r = run_cli({"simulate", (dir_ / "nope.json").string(), "--out", out()});
    EXPECT_EQ(r.code, 2);
    EXPECT_NE(r.err.find("\"code\""), std::string::npos);
}

TEST_F(CliTest, UnknownKeyIsSchemaError) {
    const fs::path p = write("bad.json", R"({"name": "x", "duraton": 1.0})");
    EXPECT_EQ(run_cli({"simulate", p.string(), "--out", out()}).code, 2);
    EXPECT_EQ(run_cli({"simulate", scenario_path("fig12_droop_sweep.json"), "--out", out(), "--override",
                       "controller.svo.etaa=3"})
                  .code,
              2);
}

TEST_F(CliTest, UnknownSubcommandIsSchemaError) { EXPECT_EQ(run_cli({"frobnicate"}).code, 2); }

TEST_F(CliTest, InfeasibleDesignIsSchemaError) {
    const Result r = run_cli({"design", scenario_path("design_table2.json"), "--out", out(), "--override", "dV_max=0"});
    EXPECT_EQ(r.code, 2);
}

TEST_F(CliTest, NumericalFailureExitsThree) {
    const Result r = run_cli({"margins", scenario_path("margins_single_phase.json"), "--out", out(), "--override",
                              "analysis.band_lo=500", "analysis.band_hi=1000"});
    EXPECT_EQ(r.code, 3) << r.err;
    EXPECT_NE(r.err.find("non_convergence"), std::string::npos);
}

TEST_F(CliTest, DesignReportAndManifest) {
    const Result r = run_cli({"design", scenario_path("design_table2.json"), "--out", out()});
    ASSERT_EQ(r.code, 0) << r.err;
    const auto kv = key_values(r.out);
    EXPECT_NEAR(kv.at("eta"), 16.6253, 1e-4);
    EXPECT_NEAR(kv.at("mu"), 5.2029e-4, 1e-8);

    const auto m = nlohmann::json::parse(slurp(fs::path(out()) / "manifest.json"));
    EXPECT_EQ(m["command"], "design");
    ASSERT_EQ(m["files"].size(), 2u);
    for (const auto& f : m["files"]) {
        const std::string body = slurp(fs::path(out()) / f["path"].get<std::string>());
        EXPECT_EQ(f["fnv1a64"], cli::hex64(cli::fnv1a64(body)));
    }
}

TEST_F(CliTest, OverridesReachTheModel) {
    const Result r = run_cli({"simulate", scenario_path("fig12_droop_sweep.json"), "--out", out(), "--override",
                              "controller.svo.mu=0", "duration=0.05"});
    ASSERT_EQ(r.code, 0) << r.err;
    const auto m = nlohmann::json::parse(slurp(fs::path(out()) / "manifest.json"));
    EXPECT_EQ(m["overrides"]["controller.svo.mu"], "0");
    EXPECT_TRUE(fs::exists(fs::path(out()) / "trace.csv"));
    EXPECT_TRUE(fs::exists(fs::path(out()) / "summary.txt"));
}

TEST_F(CliTest, SimulationOutputIsByteIdentical) {
    const std::vector<std::string> extra{"--override", "duration=0.1"};
    auto args = [&](const std::string& o) {
        std::vector<std::string> a{"simulate", scenario_path("fig12_droop_sweep.json"), "--out", o};
        a.insert(a.end(), extra.begin(), extra.end());
        return a;
    };
    ASSERT_EQ(run_cli(args(out("a"))).code, 0);
    ASSERT_EQ(run_cli(args(out("b"))).code, 0);
    EXPECT_EQ(slurp(fs::path(out("a")) / "trace.csv"), slurp(fs::path(out("b")) / "trace.csv"));
}

TEST_F(CliTest, EigsSweepInPercent) {
    const Result r =
        run_cli({"eigs", scenario_path("table3.json"), "--out", out(), "--rvir-sweep", "0.5%,1.15%,4.9%"});
    ASSERT_EQ(r.code, 0) << r.err;
    std::istringstream is(r.out);
    std::string line;
    std::getline(is, line);
    EXPECT_EQ(line, "R_vir,re,im");
    int rows = 0;
    double max_re_first = -1e300;
    while (std::getline(is, line)) {
        ++rows;
        const double R = std::stod(line.substr(0, line.find(',')));
        const double re = std::stod(line.substr(line.find(',') + 1));
        if (std::abs(R - 0.005 * 4.32) < 1e-12) max_re_first = std::max(max_re_first, re);
    }
    EXPECT_EQ(rows, 12);
    EXPECT_NEAR(max_re_first, 9.16, 0.05 * 378.2);
    EXPECT_GT(max_re_first, 0.0);
    EXPECT_EQ(run_cli({"eigs", scenario_path("table3.json"), "--out", out(), "--rvir-sweep", "abc"}).code, 2);
}

TEST_F(CliTest, BodeMatchesLibrary) {
    const Result r = run_cli({"bode", scenario_path("fig9_dcbus_loopgain.json"), "--out", out(), "--points", "7"});
    ASSERT_EQ(r.code, 0) << r.err;
    const AnalysisConfig a = load_analysis(scenario_path("fig9_dcbus_loopgain.json"));
    const SmallSignalParams p = small_signal_params(a.scenario);
    const TransferFunction G = open_loop_dc(linearize(equilibrium_solve(p, a.grid, a.P0, a.Q0, a.mode), p));
    std::istringstream is(slurp(fs::path(out()) / "bode.csv"));
    std::string line;
    std::getline(is, line);
    EXPECT_EQ(line, "omega,mag_db,phase_deg");
    int n = 0;
    while (std::getline(is, line)) {
        ++n;
        const double w = std::stod(line.substr(0, line.find(',')));
        const double mag = std::stod(line.substr(line.find(',') + 1));
        const auto L = dc_compensator_response(a.scenario.controller.dcreg, w) * G.at_omega(w);
        EXPECT_NEAR(mag, 20.0 * std::log10(std::abs(L)), 1e-9);
    }
    EXPECT_EQ(n, 7);
}

TEST_F(CliTest, MarginsReport) {
    const Result r = run_cli({"margins", scenario_path("margins_single_phase.json"), "--out", out()});
    ASSERT_EQ(r.code, 0) << r.err;
    const auto kv = key_values(r.out);
    EXPECT_NEAR(kv.at("gain_crossover_rad_s"), 7.0 * kPi, 0.15 * 7.0 * kPi);
    EXPECT_NEAR(kv.at("phase_margin_deg"), 71.5, 0.15 * 71.5);
    EXPECT_NEAR(kv.at("gain_margin_db"), 25.6, 0.15 * 25.6);
}

TEST_F(CliTest, LinearizeWritesMatrices) {
    const Result r = run_cli({"linearize", scenario_path("table3.json"), "--out", out()});
    ASSERT_EQ(r.code, 0) << r.err;
    const auto kv = key_values(r.out);
    EXPECT_NEAR(kv.at("V"), 120.0, 1e-6);
    std::istringstream is(slurp(fs::path(out()) / "A.csv"));
    std::string line;
    int rows = 0;
    while (std::getline(is, line)) ++rows;
    EXPECT_EQ(rows, 5);
}

TEST_F(CliTest, PowermapSingleNominalNode) {
    const Result r = run_cli({"powermap", scenario_path("design_table2.json"), "--out", out(), "--override",
                              "powermap.n_V=1", "powermap.n_omega=1"});
    ASSERT_EQ(r.code, 0) << r.err;
    const auto kv = key_values(r.out);
    EXPECT_EQ(kv.at("nodes"), 1.0);
    EXPECT_EQ(kv.at("failed"), 0.0);
    // Only the reactive exchange with the filter flows; R_vir dissipates a fraction of a watt.
    EXPECT_LT(kv.at("max_abs_P"), 1.0);
}

TEST_F(CliTest, SweepProducesOneRowPerValue) {
    const Result r = run_cli({"sweep", scenario_path("fig12_droop_sweep.json"), "--out", out(), "--param",
                              "controller.svo.P0", "--values", "0,1000", "--window", "0.05", "--override",
                              "duration=0.2"});
    ASSERT_EQ(r.code, 0) << r.err;
    std::istringstream is(r.out);
    std::string line;
    int n = 0;
    while (std::getline(is, line)) ++n;
    EXPECT_EQ(n, 3);
    EXPECT_TRUE(fs::exists(fs::path(out()) / "run_1" / "trace.csv"));
}

TEST_F(CliTest, FaultScenarioReportsEntryAndExit) {
    const Result r = run_cli({"simulate", scenario_path("fig10_fault_scr5.json"), "--out", out()});
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_NE(r.out.find("fault_entry t="), std::string::npos);
    EXPECT_NE(r.out.find("fault_exit t="), std::string::npos);
    EXPECT_LT(r.out.find("fault_entry"), r.out.find("fault_exit"));
}
