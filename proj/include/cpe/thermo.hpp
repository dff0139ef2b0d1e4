#pragma once

// Structural functionals of the hydrostatic ideal gas with R = c_v = g = 1:
//
//   B(Theta)(z)    = Theta(z)^{-1} exp(-int_0^z Theta^{-1})
//   Bbar(Theta)    = 1 - exp(-int_0^1 Theta^{-1})
//   Bhat(Theta)    = B / Bbar                   (unit vertical mean)
//   p = p_s exp(-int_0^z Theta^{-1}),  rho = rho_bar Bhat(Theta)
//
// Exponentials of cumulative integrals are always formed from the trapezoid
// quadrature of Theta^{-1}; no incremental products.

#include <cmath>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cpe/grid.hpp"
#include "cpe/vertical.hpp"

namespace cpe {

/// Constant reference state (rho_bar*, Theta*) and its vertical profiles.
struct Equilibrium {
    double rho_bar_star = 1.0;
    double theta_star = 1.0;
    int nz = 0;
    Profile bhat_star;  ///< Bhat(Theta*)(z) = exp(-z/Theta*) / (Theta* (1 - exp(-1/Theta*)))
    Profile alpha;      ///< 1 / (rho_bar* Bhat(Theta*)(z))
    Profile beta;       ///< closed form exp((z-1)/Theta*) / (Theta* (1 - exp(-1/Theta*)))
    /// beta rescaled so that its trapezoid integral is exactly one; this is the
    /// profile the projection P uses.  A debug scale multiplies it afterwards.
    Profile beta_quad;
    double beta_scale = 1.0;

    /// Coefficient e^{-1/Theta*} / (Theta*^2 (1 - e^{-1/Theta*})) of the mean term in DBhat(Theta*).
    double mean_coefficient() const {
        const double e = std::exp(-1.0 / theta_star);
        return e / (theta_star * theta_star * (1.0 - e));
    }
};

inline Equilibrium make_equilibrium(const GridSpec& g, double rho_bar_star, double theta_star,
                                    double beta_scale = 1.0) {
    if (!(rho_bar_star > 0.0) || !(theta_star > 0.0))
        throw Error("make_equilibrium: rho_bar* and Theta* must be positive");
    Equilibrium eq;
    eq.rho_bar_star = rho_bar_star;
    eq.theta_star = theta_star;
    eq.nz = g.nz;
    eq.beta_scale = beta_scale;
    const double denom = theta_star * (1.0 - std::exp(-1.0 / theta_star));
    eq.bhat_star.resize(g.nz);
    eq.alpha.resize(g.nz);
    eq.beta.resize(g.nz);
    for (int k = 0; k < g.nz; ++k) {
        const double z = g.z(k);
        eq.bhat_star[k] = std::exp(-z / theta_star) / denom;
        eq.alpha[k] = 1.0 / (rho_bar_star * eq.bhat_star[k]);
        eq.beta[k] = std::exp((z - 1.0) / theta_star) / denom;
    }
    const double ib = column::integral(eq.beta, g.hz());
    eq.beta_quad.resize(g.nz);
    for (int k = 0; k < g.nz; ++k) eq.beta_quad[k] = beta_scale * eq.beta[k] / ib;
    return eq;
}

/// Lower/upper bounds of Bhat(Theta) for Theta in [Theta*/2, 3 Theta*/2].
struct BhatBracket {
    double lower;
    double upper;
};

inline BhatBracket bhat_bracket(double theta_star) {
    const double t = theta_star;
    return {(2.0 / (3.0 * t)) * std::exp(-2.0 / t) / (1.0 - std::exp(-2.0 / t)),
            (2.0 / t) / (1.0 - std::exp(-2.0 / (3.0 * t)))};
}

/// Theta in [Theta*/2, 3 Theta*/2]; raises RegimeError naming the first offending node.
inline void check_theta_regime(const ScalarField3D& theta, double theta_star, const char* field = "theta") {
    const auto& g = theta.grid();
    for (int i = 0; i < g.nx; ++i)
        for (int j = 0; j < g.ny; ++j)
            for (int k = 0; k < g.nz; ++k) {
                const double v = theta(i, j, k);
                if (!(v >= 0.5 * theta_star && v <= 1.5 * theta_star))
                    throw RegimeError(field, "(i,j,k)=(" + std::to_string(i) + "," + std::to_string(j) + "," +
                                                 std::to_string(k) + ")",
                                      v, "temperature outside [Theta*/2, 3 Theta*/2]");
            }
}

inline void check_positive(const ScalarField3D& f, const char* what) {
    for (std::size_t n = 0; n < f.size(); ++n)
        if (!(f[n] > kPositivityGuard))
            throw DegeneracyError(std::string(what) + ": nonpositive value at flat index " + std::to_string(n));
}

namespace column {

/// Per-column pieces shared by B, Bhat and DBhat.
struct BhatParts {
    std::vector<double> expA;  ///< exp(-int_0^z 1/Theta)
    double I = 0.0;            ///< 1 - exp(-int_0^1 1/Theta)
    double expA1 = 0.0;        ///< exp(-int_0^1 1/Theta)
};

inline BhatParts bhat_parts(std::span<const double> theta, double h) {
    const std::size_t n = theta.size();
    std::vector<double> inv(n), A(n);
    for (std::size_t k = 0; k < n; ++k) inv[k] = 1.0 / theta[k];
    cumulative(inv, h, A);
    BhatParts p;
    p.expA.resize(n);
    for (std::size_t k = 0; k < n; ++k) p.expA[k] = std::exp(-A[k]);
    p.expA1 = p.expA[n - 1];
    p.I = 1.0 - p.expA1;
    return p;
}

inline void bhat(std::span<const double> theta, double h, std::span<double> out) {
    const auto p = bhat_parts(theta, h);
    if (p.I < kPositivityGuard) throw DegeneracyError("Bhat: Bbar below positivity guard");
    for (std::size_t k = 0; k < theta.size(); ++k) out[k] = p.expA[k] / (theta[k] * p.I);
}

/// (DBhat)(Theta)[dir] on one column.
inline void dbhat(std::span<const double> theta, std::span<const double> dir, double h, std::span<double> out) {
    const std::size_t n = theta.size();
    const auto p = bhat_parts(theta, h);
    if (p.I < kPositivityGuard) throw DegeneracyError("DBhat: I(Theta) below positivity guard");
    std::vector<double> q(n), S(n);
    for (std::size_t k = 0; k < n; ++k) q[k] = dir[k] / (theta[k] * theta[k]);
    cumulative(q, h, S);
    const double S1 = S[n - 1];
    for (std::size_t k = 0; k < n; ++k) {
        const double N = p.expA[k] / theta[k];
        out[k] = p.expA[k] / p.I * (-q[k] + S[k] / theta[k]) + N / (p.I * p.I) * p.expA1 * S1;
    }
}

}  // namespace column

inline ScalarField3D B_of_theta(const ScalarField3D& theta) {
    check_positive(theta, "B_of_theta");
    const auto& g = theta.grid();
    ScalarField3D out(g);
    for (std::size_t c = 0; c < g.size2(); ++c) {
        const auto p = column::bhat_parts(theta.column(c), g.hz());
        auto o = out.column(c);
        auto t = theta.column(c);
        for (int k = 0; k < g.nz; ++k) o[k] = p.expA[k] / t[k];
    }
    return out;
}

inline ScalarField2D Bbar(const ScalarField3D& theta) {
    check_positive(theta, "Bbar");
    const auto& g = theta.grid();
    ScalarField2D out(g);
    for (std::size_t c = 0; c < g.size2(); ++c) out[c] = column::bhat_parts(theta.column(c), g.hz()).I;
    return out;
}

inline ScalarField3D Bhat(const ScalarField3D& theta) {
    check_positive(theta, "Bhat");
    const auto& g = theta.grid();
    ScalarField3D out(g);
    for (std::size_t c = 0; c < g.size2(); ++c) column::bhat(theta.column(c), g.hz(), out.column(c));
    return out;
}

/// Hydrostatic pressure p = p_s exp(-int_0^z Theta^{-1}).
inline ScalarField3D pressure(const ScalarField2D& p_s, const ScalarField3D& theta) {
    check_positive(theta, "pressure");
    const auto& g = theta.grid();
    ScalarField3D out(g);
    for (std::size_t c = 0; c < g.size2(); ++c) {
        const auto p = column::bhat_parts(theta.column(c), g.hz());
        auto o = out.column(c);
        for (int k = 0; k < g.nz; ++k) o[k] = p_s[c] * p.expA[k];
    }
    return out;
}

/// Top pressure p_t = p_s exp(-int_0^1 Theta^{-1}).
inline ScalarField2D pressure_top(const ScalarField2D& p_s, const ScalarField3D& theta) {
    const auto& g = theta.grid();
    ScalarField2D out(g);
    for (std::size_t c = 0; c < g.size2(); ++c) out[c] = p_s[c] * column::bhat_parts(theta.column(c), g.hz()).expA1;
    return out;
}

/// Surface pressure consistent with a given vertical mean density: p_s = rho_bar / Bbar.
inline ScalarField2D surface_pressure(const ScalarField2D& rho_bar, const ScalarField3D& theta) {
    return divide_guarded(rho_bar, Bbar(theta), "surface_pressure");
}

inline ScalarField3D density(const ScalarField2D& rho_bar, const ScalarField3D& theta) {
    return rho_bar * Bhat(theta);
}

/// Temperature with an optional surface pressure.
struct ThermoState {
    ScalarField3D theta;
    std::optional<ScalarField2D> p_s;
    bool in_regime_tagged = false;
};

inline ScalarField3D frechet_DBhat(const ScalarField3D& theta, const ScalarField3D& h) {
    require_same(theta.grid(), h.grid(), "frechet_DBhat");
    check_positive(theta, "frechet_DBhat");
    const auto& g = theta.grid();
    ScalarField3D out(g);
    for (std::size_t c = 0; c < g.size2(); ++c) column::dbhat(theta.column(c), h.column(c), g.hz(), out.column(c));
    return out;
}

inline HVectorField3D frechet_DBhat(const ScalarField3D& theta, const HVectorField3D& h) {
    return {frechet_DBhat(theta, h.x), frechet_DBhat(theta, h.y)};
}

/// (DBhat)(Theta*)[h] = Bhat* (-h/Theta* + Theta*^{-2} int_0^z h + c int_0^1 h).
inline ScalarField3D DBhat_equilibrium(const Equilibrium& eq, const ScalarField3D& h) {
    const auto& g = h.grid();
    if (g.nz != eq.nz) throw GridMismatch("DBhat_equilibrium: nz differs from equilibrium profiles");
    const double ts = eq.theta_star;
    const double c = eq.mean_coefficient();
    ScalarField3D out(g);
    std::vector<double> cum(g.nz);
    for (std::size_t col = 0; col < g.size2(); ++col) {
        auto hc = h.column(col);
        column::cumulative(hc, g.hz(), cum);
        const double mean = cum[g.nz - 1];
        auto o = out.column(col);
        for (int k = 0; k < g.nz; ++k)
            o[k] = eq.bhat_star[k] * (-hc[k] / ts + cum[k] / (ts * ts) + c * mean);
    }
    return out;
}

inline HVectorField3D DBhat_equilibrium(const Equilibrium& eq, const HVectorField3D& h) {
    return {DBhat_equilibrium(eq, h.x), DBhat_equilibrium(eq, h.y)};
}

/// Bhat(Theta^L + Theta*) - Bhat(Theta*).
inline ScalarField3D delta_Bhat(const ScalarField3D& theta_L, const Equilibrium& eq) {
    const ScalarField3D theta = theta_L + eq.theta_star;
    check_theta_regime(theta, eq.theta_star, "theta_L + theta*");
    ScalarField3D out = Bhat(theta);
    const auto& g = out.grid();
    for (std::size_t c = 0; c < g.size2(); ++c) {
        auto o = out.column(c);
        for (int k = 0; k < g.nz; ++k) o[k] -= eq.bhat_star[k];
    }
    return out;
}

/// (DBhat)(Theta^L + Theta*)[h] - (DBhat)(Theta*)[h].
inline ScalarField3D delta_DBhat(const ScalarField3D& theta_L, const Equilibrium& eq, const ScalarField3D& h) {
    const ScalarField3D theta = theta_L + eq.theta_star;
    check_theta_regime(theta, eq.theta_star, "theta_L + theta*");
    return frechet_DBhat(theta, h) - DBhat_equilibrium(eq, h);
}

}  // namespace cpe
