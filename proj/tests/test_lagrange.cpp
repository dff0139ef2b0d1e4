#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "cpe/lagrange.hpp"

using namespace cpe;

namespace {

BField constant_b(const GridSpec& g, double bx, double by) {
    return [=](double) { return HVectorField2D(ScalarField2D(g, bx), ScalarField2D(g, by)); };
}

BField swirl(const GridSpec& g, double eps) {
    return [=](double t) {
        return HVectorField2D(ScalarField2D::sample(g, [=](double x, double y) {
                                  return eps * (std::sin(2 * M_PI * y) + 0.5 * std::cos(2 * M_PI * (x + y)) * (1 + t));
                              }),
                              ScalarField2D::sample(g, [=](double x, double) { return eps * std::cos(2 * M_PI * x); }));
    };
}

std::vector<double> linspace(double t1, int n) {
    std::vector<double> t(n + 1);
    for (int k = 0; k <= n; ++k) t[k] = t1 * k / n;
    return t;
}

double wrap_diff(double a) { return a - std::round(a); }

}  // namespace

TEST(Flow, ConstantTranslation) {
    GridSpec g(8, 8, 3);
    auto f = integrate_flow(g, constant_b(g, 0.3, -0.1), linspace(2.0, 10));
    const auto& d = f.disp.back();
    EXPECT_NEAR(d.x.max(), 0.6, 1e-13);
    EXPECT_NEAR(d.x.min(), 0.6, 1e-13);
    EXPECT_NEAR(d.y.max(), -0.2, 1e-13);
    EXPECT_EQ(f.gradX.back().minus_identity().max_abs(), 0.0);
    auto Y = inverse_map(f, f.size() - 1);
    EXPECT_NEAR(wrap_diff(Y.x(3, 4) + 0.6), 0.0, 1e-10);
    EXPECT_NEAR(wrap_diff(Y.y(3, 4) - 0.2), 0.0, 1e-10);
}

TEST(Flow, ZeroFieldIsIdentity) {
    GridSpec g(8, 8, 3);
    auto f = integrate_flow(g, constant_b(g, 0.0, 0.0), linspace(1.0, 4));
    for (std::size_t n = 0; n < f.size(); ++n) {
        EXPECT_EQ(f.disp[n].max_abs(), 0.0);
        EXPECT_EQ(f.Z[n].minus_identity().max_abs(), 0.0);
    }
    auto rep = flow_regime_report(f, 0.1, 1.0);
    EXPECT_EQ(rep.sup_gradX_dev, 0.0);
    EXPECT_EQ(rep.sup_Z_dev, 0.0);
    EXPECT_TRUE(rep.in_regime);
}

TEST(Flow, ShearClosedForm) {
    GridSpec g(16, 16, 3);
    BField b = [&](double) {
        return HVectorField2D(ScalarField2D::sample(g, [](double, double y) { return std::sin(2 * M_PI * y); }), ScalarField2D(g));
    };
    const double t = 0.05;
    auto f = integrate_flow(g, b, linspace(t, 5));
    for (int i = 0; i < g.nx; ++i)
        for (int j = 0; j < g.ny; ++j) {
            EXPECT_NEAR(f.disp.back().x(i, j), t * std::sin(2 * M_PI * g.y(j)), 1e-12);
            EXPECT_NEAR(f.gradX.back()(0, 1)(i, j), 2 * M_PI * t * std::cos(2 * M_PI * g.y(j)), 1e-10);
        }
}

TEST(InverseJacobian, HandInverseAndIdentity) {
    GridSpec g(4, 4, 3);
    auto F = Matrix2Field::identity(g);
    F(0, 1) = ScalarField2D(g, 0.3);
    auto Z = inverse_jacobian(F);
    EXPECT_NEAR(Z(0, 1).max(), -0.3, 1e-15);
    EXPECT_EQ(Z(1, 0).max_abs(), 0.0);
    std::mt19937 rng(7);
    std::uniform_real_distribution<double> u(-0.25, 0.25);
    Matrix2Field R;
    for (int r = 0; r < 2; ++r)
        for (int c = 0; c < 2; ++c) {
            R.m[r][c] = ScalarField2D(g);
            for (std::size_t n = 0; n < R.m[r][c].size(); ++n) R.m[r][c][n] = (r == c ? 1.0 : 0.0) + u(rng);
        }
    EXPECT_LE(matmul(inverse_jacobian(R), R).minus_identity().max_abs(), 1e-12);
    Matrix2Field S = Matrix2Field::identity(g);
    S(0, 0) = ScalarField2D(g, 0.0);
    EXPECT_THROW(inverse_jacobian(S), DegeneracyError);
}

TEST(FlowRegime, LinearScalingAndRegimeFlag) {
    GridSpec g(16, 16, 3);
    auto times = linspace(0.5, 20);
    auto a = flow_regime_report(integrate_flow(g, swirl(g, 0.02), times), 0.02, 0.5);
    auto b = flow_regime_report(integrate_flow(g, swirl(g, 0.01), times), 0.01, 0.5);
    EXPECT_NEAR(a.sup_gradX_dev / b.sup_gradX_dev, 2.0, 0.3);
    EXPECT_LE(b.sup_Z_dev, a.sup_Z_dev);
    EXPECT_LE(b.sup_dZ, a.sup_dZ);
    EXPECT_LE(a.max_Z_gradX_defect, 1e-12);
    EXPECT_TRUE(a.in_regime);
    auto big = flow_regime_report(integrate_flow(g, swirl(g, 0.4), times), 0.4, 0.5);
    EXPECT_FALSE(big.in_regime);
}

TEST(Flow, JacobianConsistencyAndGroupProperty) {
    GridSpec g(32, 32, 3);
    auto b = swirl(g, 0.05);
    auto f = integrate_flow(g, b, linspace(0.4, 20));
    const auto n = f.size() - 1;
    auto J = jacobian_matrix(f.disp[n]);
    EXPECT_LE((J - f.gradX[n].minus_identity()).max_abs(), 1e-5);
    auto direct = integrate_flow(g, b, {0.0, 0.4}, 20);
    EXPECT_LE((direct.disp.back() - f.disp[n]).max_abs(), 1e-12);
    auto split = integrate_flow(g, b, {0.0, 0.13, 0.4}, 10);
    EXPECT_LE((split.disp.back() - f.disp[n]).max_abs(), 1e-7);
}

TEST(Composition, RoundTripConvergesAtInterpolationOrder) {
    auto err = [](int nx) {
        GridSpec g(nx, nx, 3);
        auto f = integrate_flow(g, swirl(g, 0.1), linspace(0.5, 10));
        auto h = ScalarField3D::sample(g, [](double x, double y, double z) {
            return std::sin(2 * M_PI * x) * std::cos(2 * M_PI * y) * (1 + z);
        });
        const auto n = f.size() - 1;
        return (pushforward(pullback(h, f, n), f, n) - h).max_abs();
    };
    const double a = err(16), b = err(32);
    EXPECT_LE(a, 3e-2);
    EXPECT_GE(a / b, 8.0);
}

TEST(Composition, GradientOfInverseIsZ) {
    GridSpec g(32, 32, 3);
    auto f = integrate_flow(g, swirl(g, 0.1), linspace(0.5, 10));
    const auto n = f.size() - 1;
    auto dY = inverse_map(f, n);
    auto gradY = jacobian_matrix(dY);
    Composer at_X(g, f.positions(n));
    for (int r = 0; r < 2; ++r)
        for (int c = 0; c < 2; ++c) {
            auto composed = at_X(gradY(r, c)) + (r == c ? 1.0 : 0.0);
            EXPECT_LE((composed - f.Z[n](r, c)).max_abs(), 5e-4) << r << c;
        }
}

TEST(Composition, LagrangianQuadratureMatchesCharacteristics) {
    GridSpec g(32, 32, 3);
    auto b = swirl(g, 0.05);
    auto times = linspace(0.4, 40);
    auto ref = integrate_flow(g, b, times);
    std::vector<HVectorField2D> bL;
    for (std::size_t n = 0; n < times.size(); ++n) bL.push_back(pullback(b(times[n]), ref, n));
    auto q = integrate_flow_lagrangian(g, bL, times);
    EXPECT_LE((q.disp.back() - ref.disp.back()).max_abs(), 1e-5);
    EXPECT_LE((q.Z.back().minus_identity() - ref.Z.back().minus_identity()).max_abs(), 1e-4);
}

TEST(Composition, NonConvergentInversionThrows) {
    GridSpec g(16, 16, 3);
    auto f = FlowMap::identity(g, {0.0});
    f.disp[0].x = ScalarField2D::sample(g, [](double x, double) { return 0.5 * std::sin(2 * M_PI * x); });
    EXPECT_THROW(inverse_map(f, 0, 1e-10, 30), RegimeError);
}
