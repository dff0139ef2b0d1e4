#pragma once

// Closed-form initial data.  Every vertical structure is a cosine in pi z or
// z-uniform, so d_z v = d_z Theta = 0 at z = 0, 1 analytically.

#include <algorithm>
#include <cmath>
#include <random>
#include <string>
#include <vector>

#include "cpe/diagnostics.hpp"
#include "cpe/thermo.hpp"

namespace cpe {

inline const std::vector<std::string>& scenario_names() {
    static const std::vector<std::string> names{"equilibrium", "theta-bump", "shear-v", "manufactured-1", "mixed"};
    return names;
}

inline State equilibrium_state(const GridSpec& g, const Equilibrium& eq) {
    return {ScalarField2D(g, eq.rho_bar_star), HVectorField3D(g), ScalarField3D(g, eq.theta_star), 0.0};
}

/// Mode numbers drawn from the seed: horizontal (mx, my) and vertical mz.
struct ModeChoice {
    int mx = 1, my = 0, mz = 1;
};

inline ModeChoice modes_from_seed(unsigned seed) {
    if (seed == 0) return {};
    std::mt19937 rng(seed);
    std::uniform_int_distribution<int> h(0, 2), v(1, 2);
    ModeChoice m;
    do {
        m.mx = h(rng);
        m.my = h(rng);
    } while (m.mx == 0 && m.my == 0);
    m.mz = v(rng);
    return m;
}

/// Closed-form fields with analytic time derivatives.  The sources are the
/// residual of the recast system evaluated on a vertically four times finer
/// grid and sampled at the coarse nodes.
struct Manufactured {
    double rho_bar_star = 1.0;
    double theta_star = 1.0;
    double eps = 1e-3;

    static constexpr double tp = 2.0 * M_PI;

    State at(const GridSpec& g, double t) const {
        State s;
        s.time = t;
        s.rho_bar = ScalarField2D::sample(g, [&](double x, double y) {
            return rho_bar_star * (1.0 + eps * 0.5 * std::sin(tp * x) * std::cos(tp * y) * (1.0 + t));
        });
        const double e = eps * std::exp(-t);
        s.v.x = ScalarField3D::sample(g, [&](double, double y, double z) {
            return e * std::cos(tp * y) * (1.0 + 0.5 * std::cos(M_PI * z));
        });
        s.v.y = ScalarField3D::sample(g, [&](double x, double, double z) {
            return e * std::sin(tp * x) * std::cos(M_PI * z);
        });
        const double a = 1.0 + 0.5 * std::sin(tp * t);
        s.theta = ScalarField3D::sample(g, [&](double x, double y, double z) {
            return theta_star * (1.0 + eps * a * std::cos(tp * x) * std::sin(tp * y) * std::cos(M_PI * z));
        });
        return s;
    }

    Tendencies rate(const GridSpec& g, double t) const {
        Tendencies d;
        d.d_rho_bar = ScalarField2D::sample(g, [&](double x, double y) {
            return rho_bar_star * eps * 0.5 * std::sin(tp * x) * std::cos(tp * y);
        });
        const State s = at(g, t);
        d.d_v = s.v * -1.0;
        const double da = 0.5 * tp * std::cos(tp * t);
        d.d_theta = ScalarField3D::sample(g, [&](double x, double y, double z) {
            return theta_star * eps * da * std::cos(tp * x) * std::sin(tp * y) * std::cos(M_PI * z);
        });
        return d;
    }

    static GridSpec fine_grid(const GridSpec& g) { return GridSpec(g.nx, g.ny, 4 * (g.nz - 1) + 1, g.dealias); }

    Sources sources(const GridSpec& g, double t, const Physics& ph) const {
        const GridSpec gf = fine_grid(g);
        const Residuals r = residual_full_system(at(gf, t), rate(gf, t), ph);
        auto coarse = [&](const ScalarField3D& f) {
            ScalarField3D out(g);
            for (int i = 0; i < g.nx; ++i)
                for (int j = 0; j < g.ny; ++j)
                    for (int k = 0; k < g.nz; ++k) out(i, j, k) = f(i, j, 4 * k);
            return out;
        };
        Sources src;
        src.rho_bar = ScalarField2D(g);
        std::copy(r.rho_bar.values().begin(), r.rho_bar.values().end(), src.rho_bar->values().begin());
        src.v = HVectorField3D(coarse(r.v.x), coarse(r.v.y));
        src.theta = coarse(r.theta);
        return src;
    }
};

inline Manufactured manufactured_for(const Equilibrium& eq, double eps) { return {eq.rho_bar_star, eq.theta_star, eps}; }

/// Initial state of a named scenario with amplitude eps.
inline State scenario_initial(const std::string& name, const GridSpec& g, const Equilibrium& eq, double eps,
                              unsigned seed = 0) {
    State s = equilibrium_state(g, eq);
    const double ts = eq.theta_star;
    const ModeChoice m = modes_from_seed(seed);
    const double tp = 2.0 * M_PI;
    if (name == "equilibrium") return s;
    if (name == "theta-bump") {
        s.theta = ScalarField3D::sample(g, [&](double x, double y, double z) {
            return ts * (1.0 + eps * std::cos(tp * m.mx * x) * std::cos(tp * m.my * y) * std::cos(m.mz * M_PI * z));
        });
        return s;
    }
    if (name == "shear-v") {
        const int k = std::max(1, m.mx);
        s.v.x = ScalarField3D::sample(g, [&](double, double y, double) { return eps * std::sin(tp * k * y); });
        return s;
    }
    if (name == "manufactured-1") return manufactured_for(eq, eps).at(g, 0.0);
    if (name == "mixed") {
        s.rho_bar = ScalarField2D::sample(g, [&](double x, double y) {
            return eq.rho_bar_star * (1.0 + eps * std::cos(tp * (x + y)));
        });
        s.v.x = ScalarField3D::sample(g, [&](double, double y, double z) {
            return eps * std::sin(tp * y) * std::cos(M_PI * z);
        });
        s.v.y = ScalarField3D::sample(g, [&](double x, double, double) { return 0.5 * eps * std::cos(tp * x); });
        s.theta = ScalarField3D::sample(g, [&](double x, double y, double z) {
            return ts * (1.0 + eps * std::sin(tp * x) * std::cos(tp * y) * std::cos(2.0 * M_PI * z));
        });
        return s;
    }
    throw ConfigError("unknown scenario \"" + name + "\"");
}

}  // namespace cpe
