#include <gtest/gtest.h>

#include <string>

#include "cpe/config.hpp"
#include "cpe/invariants.hpp"
#include "cpe/study.hpp"

using namespace cpe;

namespace {

std::string error_of(const std::string& text) {
    try {
        parse_config(text);
    } catch (const ConfigError& e) {
        return e.what();
    }
    return {};
}

}  // namespace

TEST(Config, DefaultsAndOverrides) {
    const RunConfig c = parse_config(R"({
        "grid": {"nx": 16, "ny": 8, "nz": 17},
        "physics": {"theta_star": 1.2, "mu": 0.7, "dissipation": "horizontal", "heating": {"amplitude": 0.1}},
        "initial": {"scenario": "shear-v", "eps": 0.002, "seed": 4},
        "solver": {"scheme": "picard-lagrangian", "dt": 0.002, "t_end": 0.02, "picard_form": "projected"},
        "output": {"dir": "x", "diagnostics_every": 5, "dumps": ["theta"]},
        "study": {"axis": "nz", "levels": 4, "metric": "hydrostatic"}
    })");
    EXPECT_EQ(c.nx, 16);
    EXPECT_EQ(c.ny, 8);
    EXPECT_EQ(c.nz, 17);
    EXPECT_DOUBLE_EQ(c.theta_star, 1.2);
    EXPECT_DOUBLE_EQ(c.rho_bar_star, 1.0);
    EXPECT_DOUBLE_EQ(c.solver.physics.mu, 0.7);
    EXPECT_EQ(c.solver.physics.phi, Dissipation::Horizontal);
    EXPECT_TRUE(c.heating.active());
    EXPECT_EQ(c.initial.scenario, "shear-v");
    EXPECT_EQ(c.initial.seed, 4u);
    EXPECT_EQ(c.solver.scheme, Scheme::PicardLagrangian);
    EXPECT_EQ(c.solver.picard_form, LinearForm::Projected);
    EXPECT_EQ(c.solver.diagnostics_every, 5);
    EXPECT_EQ(c.output.dumps, std::vector<std::string>{"theta"});
    EXPECT_EQ(c.study.axis, StudyAxis::Nz);
    EXPECT_EQ(c.study.levels, 4);
}

TEST(Config, RoundTripsThroughJson) {
    RunConfig c;
    c.nz = 17;
    c.initial.scenario = "mixed";
    c.solver.dt = 5e-4;
    const RunConfig d = parse_config(c.to_json().dump());
    EXPECT_EQ(d.to_json(), c.to_json());
}

TEST(Config, SyntaxErrorNamesLineAndColumn) {
    const std::string e = error_of("{\n  \"grid\": {\"nx\": 8,\n  \"nz\": 9\n  \"solver\": {}\n}\n");
    EXPECT_NE(e.find("line 4"), std::string::npos) << e;
    EXPECT_NE(e.find("column"), std::string::npos) << e;
}

TEST(Config, FieldErrorsNameThePath) {
    EXPECT_NE(error_of(R"({"grid": {"nx": 8.5}})").find("grid.nx"), std::string::npos);
    EXPECT_NE(error_of(R"({"solver": {"dtt": 1}})").find("solver.dtt: unknown key"), std::string::npos);
    EXPECT_NE(error_of(R"({"physics": {"heating": {"amp": 1}}})").find("physics.heating.amp"), std::string::npos);
    EXPECT_NE(error_of(R"({"solver": {"scheme": "rk4"}})").find("solver.scheme"), std::string::npos);
    EXPECT_NE(error_of(R"({"initial": {"scenario": "vortex"}})").find("initial.scenario"), std::string::npos);
    EXPECT_NE(error_of(R"({"initial": {"seed": -1}})").find("initial.seed"), std::string::npos);
    EXPECT_NE(error_of(R"({"solver": {"dt": 0.001, "t_end": 0.0105}})").find("t_end"), std::string::npos);
    EXPECT_NE(error_of(R"({"output": {"dumps": ["pressure"]}})").find("output.dumps"), std::string::npos);
    EXPECT_NE(error_of(R"([1, 2])").find("expected an object"), std::string::npos);
}

TEST(Config, ManufacturedSourcesAndHeating) {
    RunConfig c = parse_config(R"({"grid": {"nx": 8, "ny": 8, "nz": 9}, "initial": {"scenario": "manufactured-1"}})");
    auto src = c.sources();
    ASSERT_TRUE(src);
    const Sources s = src(0.0);
    EXPECT_TRUE(s.rho_bar && s.v && s.theta);
    c.initial.scenario = "theta-bump";
    EXPECT_FALSE(c.sources());
    c.heating.amplitude = 0.5;
    ASSERT_TRUE(c.sources());
    EXPECT_NEAR(c.sources()(0.0).theta->max_abs(), 0.5, 1e-12);
}

TEST(Scenarios, SatisfyNeumannCompatibility) {
    GridSpec g(8, 8, 65);
    auto eq = make_equilibrium(g, 1.0, 1.0);
    for (const auto& name : scenario_names())
        for (unsigned seed : {0u, 3u}) {
            const State s = scenario_initial(name, g, eq, 1e-2, seed);
            const LinearState u = perturbation_of(s, eq);
            EXPECT_LT(u.boundary_slope(), 1e-2 * 1e-2) << name << " seed " << seed;
        }
}

TEST(Scenarios, SeedSelectsModesDeterministically) {
    EXPECT_EQ(modes_from_seed(0).mx, 1);
    EXPECT_EQ(modes_from_seed(5).mx, modes_from_seed(5).mx);
    for (unsigned s = 1; s < 50; ++s) {
        const auto m = modes_from_seed(s);
        EXPECT_TRUE(m.mx != 0 || m.my != 0);
        EXPECT_GE(m.mz, 1);
    }
}

TEST(Study, LogLogSlope) {
    EXPECT_NEAR(loglog_slope({1.0, 0.5, 0.25}, {3.0, 0.75, 0.1875}), 2.0, 1e-12);
}

TEST(Study, RemainderIsQuadraticInAmplitude) {
    RunConfig c;
    c.nx = c.ny = 8;
    c.nz = 9;
    c.initial.eps = 1e-2;
    c.study = {StudyAxis::Eps, 3, "remainder"};
    const StudyResult r = run_study(c);
    ASSERT_EQ(r.rows.size(), 3u);
    EXPECT_NEAR(r.slope, 2.0, 0.2);
}

TEST(Study, HydrostaticResidualIsSecondOrderInNz) {
    RunConfig c;
    c.nx = c.ny = 4;
    c.nz = 9;
    c.study = {StudyAxis::Nz, 3, "hydrostatic"};
    EXPECT_NEAR(run_study(c).slope, 2.0, 0.3);
}

TEST(Study, EnergyDriftOrderInDtIsBoundedBySpatialError) {
    // Joint refinement: the drift is dominated by the O(nz^-2) semi-discrete rate.
    RunConfig c;
    c.nx = c.ny = 8;
    c.nz = 9;
    c.solver.t_end = 0.01;
    c.study = {StudyAxis::Nz, 2, "energy_drift"};
    const StudyResult r = run_study(c);
    EXPECT_GT(r.slope, 1.5);
}

TEST(Audit, DefaultsPassAtSmallResolution) {
    RunConfig c;
    c.nx = c.ny = 8;
    c.nz = 17;
    const AuditReport rep = run_audit(c);
    for (const auto& k : rep.checks) EXPECT_TRUE(k.pass) << k.name << " " << k.value << " > " << k.bound;
}

TEST(Audit, MisnormalizedBetaBreaksProjection) {
    RunConfig c;
    c.nx = c.ny = 8;
    c.nz = 17;
    c.beta_scale = 1.05;
    const AuditReport rep = run_audit(c);
    EXPECT_FALSE(rep.all_pass());
    for (const auto& k : rep.checks)
        if (k.name == "projection_idempotency") {
            EXPECT_FALSE(k.pass);
        }
}
