#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "cpe/diagnostics.hpp"

using namespace cpe;

namespace {

State equilibrium_state(const GridSpec& g, double rho_bar, double theta) {
    return {ScalarField2D(g, rho_bar), HVectorField3D(g), ScalarField3D(g, theta), 0.0};
}

State wavy_state(const GridSpec& g) {
    State s;
    s.rho_bar = ScalarField2D::sample(g, [](double x, double y) { return 1.0 + 0.1 * std::cos(2 * M_PI * (x - y)); });
    s.theta = ScalarField3D::sample(g, [](double x, double y, double z) {
        return 1.0 + 0.1 * std::sin(2 * M_PI * x) * std::cos(M_PI * z) + 0.05 * std::cos(2 * M_PI * y) * z;
    });
    s.v.x = ScalarField3D::sample(g, [](double x, double y, double z) {
        return 0.2 * std::sin(2 * M_PI * y) * (1.0 + z * z) + 0.1 * std::cos(2 * M_PI * x);
    });
    s.v.y = ScalarField3D::sample(g, [](double x, double, double z) { return 0.15 * std::cos(2 * M_PI * x) * std::exp(-z); });
    return s;
}

}  // namespace

TEST(BField, LinearShearClosedForm) {
    GridSpec g(4, 4, 129);
    auto v = HVectorField3D(ScalarField3D::sample(g, [](double, double, double z) { return z; }), ScalarField3D(g));
    auto b = b_field(ScalarField3D(g, 1.0), v);
    EXPECT_NEAR(b.x(1, 2), 0.4180233, 2e-5);
    EXPECT_EQ(b.y.max_abs(), 0.0);
}

TEST(Energy, RestStateClosedForm) {
    GridSpec g(4, 4, 129);
    auto e = total_energy(equilibrium_state(g, 1.0, 1.0));
    EXPECT_EQ(e.kinetic, 0.0);
    EXPECT_NEAR(e.total(), 1.4180233, 2e-5);
    EXPECT_NEAR(e.internal, 1.0, 2e-5);
}

TEST(VerticalVelocity, VanishesAtBottomAndAtRest) {
    GridSpec g(8, 8, 17);
    auto s = wavy_state(g);
    auto vw = vertical_velocity(s, ScalarField3D(g, 0.0));
    EXPECT_EQ(level(vw.w, 0).max_abs(), 0.0);
    auto eq = equilibrium_state(g, 1.0, 1.3);
    EXPECT_LE(vertical_velocity(eq, ScalarField3D(g, 0.0)).w.max_abs(), 1e-14);
}

TEST(VerticalVelocity, TopValueMatchesColumnResidual) {
    GridSpec g(8, 8, 17);
    auto s = wavy_state(g);
    auto dth = ScalarField3D::sample(g, [](double x, double, double z) { return std::sin(2 * M_PI * x) * z; });
    auto drb = averaged_continuity_tendency(s);
    auto vw = vertical_velocity(s, drb, dth);
    auto res = column_continuity_residual(s, drb, dth);
    auto rho_top = level(density(s.rho_bar, s.theta), g.nz - 1);
    auto top = level(vw.w, g.nz - 1);
    for (std::size_t n = 0; n < res.size(); ++n) EXPECT_NEAR(top[n], -res[n] / rho_top[n], 1e-14);
    EXPECT_LE(averaged_continuity_residual(s, drb).max_abs(), 1e-15);
}

TEST(VerticalVelocity, TopResidualShrinksWithResolution) {
    auto top = [](int nz) {
        GridSpec g(8, 8, nz);
        auto s = wavy_state(g);
        auto dth = ScalarField3D::sample(g, [](double x, double, double z) { return std::sin(2 * M_PI * x) * z * z; });
        return level(vertical_velocity(s, dth).w, nz - 1).max_abs();
    };
    const double a = top(33), b = top(65);
    EXPECT_LE(a, 1e-3);
    EXPECT_NEAR(a / b, 4.0, 1.0);
}

TEST(Residuals, EquilibriumIsExact) {
    GridSpec g(8, 8, 17);
    auto s = equilibrium_state(g, 1.2, 0.8);
    Physics ph;
    auto r = residual_full_system(s, Tendencies::zero(g), ph);
    EXPECT_LE(r.max_abs(), 1e-14);
    auto c = residual_cpe(s, Tendencies::zero(g));
    EXPECT_LE(c.continuity.max_abs(), 1e-14);
    EXPECT_LE(c.hydrostatic.max_abs(), 1e-2);
}

TEST(Residuals, SourcesAreSubtracted) {
    GridSpec g(8, 8, 9);
    auto s = equilibrium_state(g, 1.0, 1.0);
    Sources src;
    src.theta = ScalarField3D(g, 0.25);
    auto r = residual_full_system(s, Tendencies::zero(g), Physics{}, src);
    EXPECT_NEAR(r.theta.max(), -0.25, 1e-14);
    EXPECT_NEAR(r.theta.min(), -0.25, 1e-14);
}

TEST(Calculus, LagrangianWithIdentityMatchesEulerian) {
    GridSpec g(16, 16, 9);
    auto s = wavy_state(g);
    auto dt = Tendencies::zero(g);
    dt.d_theta = s.theta * 0.3;
    Physics ph;
    auto a = residual_full_system(s, dt, ph);
    auto b = residual_full_system(s, dt, ph, {}, LagrangianCalculus(Matrix2Field::identity(g)));
    EXPECT_LE((a.v - b.v).max_abs(), 1e-12);
    EXPECT_LE((a.theta - b.theta).max_abs(), 1e-12);
    EXPECT_LE((a.rho_bar - b.rho_bar).max_abs(), 1e-12);
}

TEST(Calculus, ChainRuleUnderLinearMap) {
    // X(y) = A y is not periodic, but Z = A^{-1} constant still gives
    // grad_E f(X(y)) = Z^T grad_y f for any periodic f on y.
    GridSpec g(16, 16, 3);
    Matrix2Field Z = Matrix2Field::identity(g);
    Z(0, 1) = ScalarField2D(g, 0.5);
    LagrangianCalculus L(Z);
    auto f = ScalarField2D::sample(g, [](double x, double y) { return std::sin(2 * M_PI * x) * std::cos(2 * M_PI * y); });
    auto gy = grad_h(f);
    auto ge = L.grad(f);
    EXPECT_LE((ge.x - gy.x).max_abs(), 1e-12);
    EXPECT_LE((ge.y - (0.5 * gy.x + gy.y)).max_abs(), 1e-12);
    HVectorField2D F(f, f * 2.0);
    EXPECT_LE((L.div(F) - (div_h(F) + 0.5 * dx(F.y))).max_abs(), 1e-12);
}

TEST(Dissipation, VerticalPartMatchesSummationByParts) {
    GridSpec g(8, 8, 33);
    auto s = wavy_state(g);
    Physics ph;
    ph.mu = 1.0;
    ph.mu_prime = 0.0;
    ph.phi = Dissipation::Full;
    auto full = dissipation(s.v, ph);
    ph.phi = Dissipation::Horizontal;
    auto hor = dissipation(s.v, ph);
    const double vertical = domain_integral(full - hor);
    const double sbp = -domain_integral(s.v.x * dzz(s.v.x) + s.v.y * dzz(s.v.y));
    EXPECT_NEAR(vertical, sbp, 1e-12 * std::abs(sbp));
    ph.phi = Dissipation::None;
    EXPECT_EQ(dissipation(s.v, ph).max_abs(), 0.0);
    EXPECT_GE(hor.min(), 0.0);
}

TEST(Energy, RateMatchesFiniteDifference) {
    GridSpec g(8, 8, 17);
    auto s = wavy_state(g);
    Tendencies dt;
    dt.d_rho_bar = ScalarField2D::sample(g, [](double x, double) { return 0.3 * std::sin(2 * M_PI * x); });
    dt.d_v = HVectorField3D(s.v.y * 0.5, s.v.x * -0.2);
    dt.d_theta = ScalarField3D::sample(g, [](double x, double y, double z) { return std::cos(2 * M_PI * (x + y)) * z; });
    auto step = [&](double eps) {
        State t = s;
        t.rho_bar += dt.d_rho_bar * eps;
        t.v += dt.d_v * eps;
        t.theta += dt.d_theta * eps;
        return total_energy(t).total();
    };
    const double eps = 1e-5;
    const double fd = (step(eps) - step(-eps)) / (2 * eps);
    EXPECT_NEAR(energy_rate(s, dt), fd, 1e-8);
}

TEST(PressureWork, IdentityConverges) {
    auto err = [](int nz) {
        GridSpec g(8, 8, nz);
        auto s = wavy_state(g);
        auto dth = ScalarField3D::sample(g, [](double x, double, double z) { return std::sin(2 * M_PI * x) * z; });
        auto w = vertical_velocity(s, dth).w;
        return pressure_work_identity(s, w).max_abs();
    };
    EXPECT_NEAR(err(33) / err(65), 4.0, 1.2);
}

TEST(DiagnosticsCsv, HeaderAndRow) {
    GridSpec g(4, 4, 9);
    auto s = equilibrium_state(g, 1.0, 1.0);
    std::ostringstream os;
    DiagnosticsCsv csv(os);
    csv.write(diagnose(s, Tendencies::zero(g)));
    std::istringstream is(os.str());
    std::string h, r;
    std::getline(is, h);
    std::getline(is, r);
    EXPECT_EQ(h.rfind("time,energy", 0), 0u);
    EXPECT_EQ(std::count(h.begin(), h.end(), ','), std::count(r.begin(), r.end(), ','));
}
