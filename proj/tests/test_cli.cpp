#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <sys/wait.h>

#include <json.hpp>

#include "cpe/field_io.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const fs::path kData = CPE_TEST_DATA_DIR;
const fs::path kWork = fs::path(CPE_TEST_WORK_DIR) / "cli";

int run_cli(const std::string& args) {
    const std::string cmd = std::string(CPE_CLI_PATH) + " " + args + " --quiet > /dev/null 2>&1";
    const int st = std::system(cmd.c_str());
    return WIFEXITED(st) ? WEXITSTATUS(st) : -1;
}

json summary(const fs::path& dir) {
    std::ifstream in(dir / "summary.json");
    EXPECT_TRUE(in.good()) << dir;
    return json::parse(in);
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace

TEST(Cli, EquilibriumRunHasNoDrift) {
    const fs::path out = kWork / "eq";
    ASSERT_EQ(run_cli("run --config " + (kData / "equilibrium_small.json").string() + " --out " + out.string()), 0);
    const json s = summary(out);
    EXPECT_EQ(s["status"], "ok");
    EXPECT_LE(s["energy"]["max_relative_drift"].get<double>(), 1e-12);
    EXPECT_LE(s["perturbation_final"]["theta"].get<double>(), 1e-12);
    EXPECT_LE(s["perturbation_final"]["v"].get<double>(), 1e-12);
    EXPECT_LE(s["perturbation_final"]["rho_bar"].get<double>(), 1e-12);
    EXPECT_TRUE(s["brackets"]["brackets_ok"].get<bool>());
    EXPECT_TRUE(fs::exists(out / "diagnostics.csv"));
    const auto th = cpe::read_field<3>((out / "fields" / "theta_000010.bin").string());
    EXPECT_NEAR(th.max(), 1.1, 1e-12);
}

TEST(Cli, RunsAreDeterministic) {
    const std::string cfg = (kData / "picard_small.json").string();
    ASSERT_EQ(run_cli("run --config " + cfg + " --out " + (kWork / "det1").string()), 0);
    ASSERT_EQ(run_cli("run --config " + cfg + " --out " + (kWork / "det2").string()), 0);
    EXPECT_EQ(slurp(kWork / "det1" / "diagnostics.csv"), slurp(kWork / "det2" / "diagnostics.csv"));
    const json s = summary(kWork / "det1");
    EXPECT_TRUE(s["picard"]["converged"].get<bool>());
}

TEST(Cli, MalformedConfigExitsTwoWithLine) {
    const fs::path out = kWork / "bad";
    EXPECT_EQ(run_cli("run --config " + (kData / "malformed.json").string() + " --out " + out.string()), 2);
    const json s = summary(out);
    EXPECT_EQ(s["status"], "config_error");
    EXPECT_NE(s["message"].get<std::string>().find("line 4"), std::string::npos);
}

TEST(Cli, MissingConfigExitsTwo) {
    EXPECT_EQ(run_cli("run --out " + (kWork / "none").string()), 2);
    EXPECT_EQ(run_cli("run --config /nonexistent.json --out " + (kWork / "none").string()), 2);
    EXPECT_EQ(run_cli("bogus"), 2);
}

TEST(Cli, RegimeViolationExitsThreeWithSummary) {
    const fs::path out = kWork / "regime";
    EXPECT_EQ(run_cli("run --config " + (kData / "out_of_regime.json").string() + " --out " + out.string()), 3);
    const json s = summary(out);
    EXPECT_EQ(s["status"], "regime_violation");
    EXPECT_NE(s["message"].get<std::string>().find("theta"), std::string::npos);
}

TEST(Cli, StudyWritesTableAndOrder) {
    const fs::path out = kWork / "study";
    ASSERT_EQ(run_cli("study --config " + (kData / "study_small.json").string() + " --out " + out.string()), 0);
    EXPECT_TRUE(fs::exists(out / "study.csv"));
    EXPECT_NEAR(summary(out)["study"]["observed_order"].get<double>(), 2.0, 0.2);
}

TEST(Cli, AuditAndNegativeControl) {
    const std::string cfg = (kData / "equilibrium_small.json").string();
    ASSERT_EQ(run_cli("audit --config " + cfg + " --out " + (kWork / "audit").string()), 0);
    EXPECT_TRUE(summary(kWork / "audit")["audit"]["all_pass"].get<bool>());
    ASSERT_EQ(run_cli("audit --config " + cfg + " --debug-beta-scale 1.05 --out " + (kWork / "audit_neg").string()), 0);
    EXPECT_FALSE(summary(kWork / "audit_neg")["audit"]["all_pass"].get<bool>());
}
