#pragma once

// Eulerian diagnostics of the recast system
//
//   d_t rho_bar + div_H(rho_bar b) = 0
//   rho (d_t v + u.grad v) - mu Delta v - mu' grad_H div_H v + grad_H p = 0
//   rho (d_t Theta + u.grad Theta) + p div u - kappa Delta Theta = Q + Phi
//
// with rho = rho_bar Bhat(Theta), p = rho Theta, b = int_0^1 Bhat v and w
// recovered from the column integral of the continuity equation.

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "cpe/calculus.hpp"
#include "cpe/thermo.hpp"
#include "cpe/vertical.hpp"

namespace cpe {

struct State {
    ScalarField2D rho_bar;
    HVectorField3D v;
    ScalarField3D theta;
    double time = 0.0;

    const GridSpec& grid() const { return theta.grid(); }
    bool all_finite() const { return rho_bar.all_finite() && v.all_finite() && theta.all_finite(); }
};

struct Tendencies {
    ScalarField2D d_rho_bar;
    HVectorField3D d_v;
    ScalarField3D d_theta;

    static Tendencies zero(const GridSpec& g) { return {ScalarField2D(g), HVectorField3D(g), ScalarField3D(g)}; }
};

/// Right-hand sides appended to the three rows (heating Q, manufactured sources).
struct Sources {
    std::optional<ScalarField2D> rho_bar;
    std::optional<HVectorField3D> v;
    std::optional<ScalarField3D> theta;
};

/// Viscous heating closure.
enum class Dissipation {
    None,
    /// mu |grad v|^2 + mu' |div_H v|^2 with the full three-dimensional gradient.
    Full,
    /// mu |grad_H v|^2 + mu' |div_H v|^2.
    Horizontal,
};

inline const char* to_string(Dissipation d) {
    switch (d) {
        case Dissipation::None: return "none";
        case Dissipation::Full: return "full";
        case Dissipation::Horizontal: return "horizontal";
    }
    return "?";
}

struct Physics {
    double mu = 1.0;
    double mu_prime = 0.5;
    double kappa = 1.0;
    Dissipation phi = Dissipation::Full;

    void validate() const {
        if (!(mu > 0.0)) throw ConfigError("physics.mu must be positive");
        if (!(mu + mu_prime > 0.0)) throw ConfigError("physics: mu + mu_prime must be positive");
        if (!(kappa > 0.0)) throw ConfigError("physics.kappa must be positive");
    }
};

// ---------------------------------------------------------------------------
// Small field helpers.

inline ScalarField3D dot(const HVectorField3D& a, const HVectorField3D& b) { return a.x * b.x + a.y * b.y; }
inline ScalarField2D dot(const HVectorField2D& a, const HVectorField2D& b) { return a.x * b.x + a.y * b.y; }

inline HVectorField3D lift(const HVectorField2D& b) { return {lift(b.x), lift(b.y)}; }

inline HVectorField3D operator*(const ScalarField2D& s, HVectorField3D v) {
    v.x = s * std::move(v.x);
    v.y = s * std::move(v.y);
    return v;
}

/// a . grad f in the frame of the calculus.
template <class Calc>
ScalarField3D advect(const Calc& calc, const HVectorField3D& a, const ScalarField3D& f) {
    return dot(a, calc.grad(f));
}

template <class Calc>
HVectorField3D advect(const Calc& calc, const HVectorField3D& a, const HVectorField3D& v) {
    return {advect(calc, a, v.x), advect(calc, a, v.y)};
}

/// Column profile of (d_z f)^2 built from the squared interval differences;
/// its trapezoid integral equals the summation-by-parts energy of the
/// discrete Neumann second difference.
inline ScalarField3D vertical_gradient_squared(const ScalarField3D& f) {
    const auto& g = f.grid();
    const double h = g.hz();
    ScalarField3D out(g);
    std::vector<double> d2(g.nz - 1);
    for (std::size_t c = 0; c < g.size2(); ++c) {
        auto fc = f.column(c);
        auto o = out.column(c);
        for (int k = 0; k + 1 < g.nz; ++k) {
            const double d = (fc[k + 1] - fc[k]) / h;
            d2[k] = d * d;
        }
        o[0] = d2[0];
        for (int k = 1; k + 1 < g.nz; ++k) o[k] = 0.5 * (d2[k - 1] + d2[k]);
        o[g.nz - 1] = d2[g.nz - 2];
    }
    return out;
}

// ---------------------------------------------------------------------------

/// b = int_0^1 Bhat(Theta) v.
inline HVectorField2D b_field(const ScalarField3D& theta, const HVectorField3D& v) {
    const ScalarField3D bh = Bhat(theta);
    return {vertical_mean(bh * v.x), vertical_mean(bh * v.y)};
}
inline HVectorField2D b_field(const State& s) { return b_field(s.theta, s.v); }

struct VerticalVelocity {
    ScalarField3D rho_w;  ///< rho_bar Bhat w
    ScalarField3D w;
};

/// Integrand of the continuity column: d_t rho + div_H(rho v) with
/// d_t rho = Bhat d_t rho_bar + rho_bar (DBhat)(Theta)[d_t Theta].
template <class Calc = EulerianCalculus>
ScalarField3D continuity_integrand(const State& s, const ScalarField2D& d_rho_bar, const ScalarField3D& d_theta,
                                   const Calc& calc = {}) {
    const ScalarField3D bh = Bhat(s.theta);
    ScalarField3D g = d_rho_bar * bh;
    g += s.rho_bar * frechet_DBhat(s.theta, d_theta);
    g += calc.div(s.rho_bar * (bh * s.v));
    return g;
}

/// (rho_bar Bhat w)(z) = -int_0^z [d_t rho + div_H(rho v)], so w(0) = 0 exactly.
/// With d_rho_bar = -div_H(rho_bar b) this is the usual diagnostic formula.
template <class Calc = EulerianCalculus>
VerticalVelocity vertical_velocity(const State& s, const ScalarField2D& d_rho_bar, const ScalarField3D& d_theta,
                                   const Calc& calc = {}) {
    ScalarField3D rho_w = vertical_cumulative_integral(continuity_integrand(s, d_rho_bar, d_theta, calc)) * -1.0;
    const ScalarField3D rho = density(s.rho_bar, s.theta);
    ScalarField3D w = divide_guarded(rho_w, rho, "vertical_velocity");
    return {std::move(rho_w), std::move(w)};
}

/// d_t rho_bar implied by the averaged continuity equation.
template <class Calc = EulerianCalculus>
ScalarField2D averaged_continuity_tendency(const State& s, const Calc& calc = {}) {
    const auto b = b_field(s);
    return calc.div(HVectorField2D(s.rho_bar * b.x, s.rho_bar * b.y)) * -1.0;
}

/// Vertical w with d_t rho_bar taken from the averaged continuity equation.
template <class Calc = EulerianCalculus>
VerticalVelocity vertical_velocity(const State& s, const ScalarField3D& d_theta, const Calc& calc = {}) {
    return vertical_velocity(s, averaged_continuity_tendency(s, calc), d_theta, calc);
}

/// Trapezoid column integral of d_t rho + div_H(rho v).  The diagnostic w
/// satisfies rho(1) w(1) = -(this residual) exactly.
template <class Calc = EulerianCalculus>
ScalarField2D column_continuity_residual(const State& s, const ScalarField2D& d_rho_bar, const ScalarField3D& d_theta,
                                         const Calc& calc = {}) {
    return vertical_mean(continuity_integrand(s, d_rho_bar, d_theta, calc));
}

/// d_t rho_bar + div_H(rho_bar b).
template <class Calc = EulerianCalculus>
ScalarField2D averaged_continuity_residual(const State& s, const ScalarField2D& d_rho_bar, const Calc& calc = {}) {
    return d_rho_bar - averaged_continuity_tendency(s, calc);
}

/// Viscous heating Phi(v) for the chosen closure.
template <class Calc = EulerianCalculus>
ScalarField3D dissipation(const HVectorField3D& v, const Physics& ph, const Calc& calc = {}) {
    const auto& g = v.grid();
    if (ph.phi == Dissipation::None) return ScalarField3D(g);
    const auto J = calc.jacobian(v);
    ScalarField3D grad2 = J[0][0] * J[0][0] + J[0][1] * J[0][1] + J[1][0] * J[1][0] + J[1][1] * J[1][1];
    if (ph.phi == Dissipation::Full) {
        grad2 += vertical_gradient_squared(v.x);
        grad2 += vertical_gradient_squared(v.y);
    }
    const ScalarField3D dv = J[0][0] + J[1][1];
    return ph.mu * grad2 + ph.mu_prime * (dv * dv);
}

struct Residuals {
    ScalarField2D rho_bar;
    HVectorField3D v;
    ScalarField3D theta;

    double max_abs() const { return std::max({rho_bar.max_abs(), v.max_abs(), theta.max_abs()}); }
};

/// Left-hand sides of the recast system minus sources (zero for exact
/// solutions).  Tendencies are Eulerian partial time derivatives in the frame
/// of the calculus.  w uses d_t rho_bar from the averaged continuity equation.
template <class Calc = EulerianCalculus>
Residuals residual_full_system(const State& s, const Tendencies& dt, const Physics& ph, const Sources& src = {},
                               const Calc& calc = {}) {
    const auto& g = s.grid();
    const ScalarField3D rho = density(s.rho_bar, s.theta);
    const ScalarField3D p = rho * s.theta;
    const VerticalVelocity vw = vertical_velocity(s, dt.d_theta, calc);
    const ScalarField3D& w = vw.w;

    Residuals r;
    r.rho_bar = averaged_continuity_residual(s, dt.d_rho_bar, calc);
    if (src.rho_bar) r.rho_bar -= *src.rho_bar;

    // momentum
    HVectorField3D acc = dt.d_v + advect(calc, s.v, s.v);
    acc += w * dz(s.v, VerticalBC::Neumann);
    r.v = rho * acc;
    HVectorField3D visc = calc.lap(s.v);
    visc.x += dzz(s.v.x);
    visc.y += dzz(s.v.y);
    r.v -= ph.mu * visc;
    r.v -= ph.mu_prime * calc.grad_div(s.v);
    r.v += calc.grad(p);
    if (src.v) r.v -= *src.v;

    // temperature
    ScalarField3D th = dt.d_theta + advect(calc, s.v, s.theta);
    th += w * dz(s.theta, VerticalBC::Neumann);
    r.theta = rho * th;
    r.theta += p * (calc.div(s.v) + dz(w));
    r.theta -= ph.kappa * (calc.lap(s.theta) + dzz(s.theta));
    r.theta -= dissipation(s.v, ph, calc);
    if (src.theta) r.theta -= *src.theta;
    (void)g;
    return r;
}

/// Residuals of the original system assembled from the diagnostics: the full
/// continuity equation and hydrostatic balance (the momentum and temperature
/// rows coincide with the recast ones because p = rho Theta).
struct CpeResiduals {
    ScalarField3D continuity;
    ScalarField3D hydrostatic;
};

template <class Calc = EulerianCalculus>
CpeResiduals residual_cpe(const State& s, const Tendencies& dt, const Calc& calc = {}) {
    const ScalarField3D rho = density(s.rho_bar, s.theta);
    const ScalarField3D p = rho * s.theta;
    const VerticalVelocity vw = vertical_velocity(s, dt.d_rho_bar, dt.d_theta, calc);
    CpeResiduals out;
    out.continuity = continuity_integrand(s, dt.d_rho_bar, dt.d_theta, calc) + dz(vw.rho_w);
    out.hydrostatic = dz(p) + rho;
    return out;
}

// ---------------------------------------------------------------------------
// Energy

struct Energy {
    double kinetic = 0.0;
    double internal = 0.0;
    double potential = 0.0;
    double total() const { return kinetic + internal + potential; }
};

inline Energy total_energy(const State& s) {
    const auto& g = s.grid();
    const ScalarField3D rho = density(s.rho_bar, s.theta);
    Energy e;
    e.kinetic = 0.5 * domain_integral(rho * dot(s.v, s.v));
    e.internal = domain_integral(rho * s.theta);
    e.potential = domain_integral(rho * g.z_nodes());
    return e;
}

/// dE/dt for the given tendencies.
inline double energy_rate(const State& s, const Tendencies& dt) {
    const auto& g = s.grid();
    const ScalarField3D rho = density(s.rho_bar, s.theta);
    ScalarField3D d_rho = dt.d_rho_bar * Bhat(s.theta);
    d_rho += s.rho_bar * frechet_DBhat(s.theta, dt.d_theta);
    ScalarField3D integrand = 0.5 * dot(s.v, s.v) * d_rho + rho * dot(s.v, dt.d_v);
    integrand += (s.theta + lift(g, g.z_nodes())) * d_rho;
    integrand += rho * dt.d_theta;
    return domain_integral(integrand);
}

/// p d_z w - [(d_z Theta + 1) rho w + Theta d_z(rho w)].
inline ScalarField3D pressure_work_identity(const State& s, const ScalarField3D& w) {
    const ScalarField3D rho = density(s.rho_bar, s.theta);
    const ScalarField3D p = rho * s.theta;
    ScalarField3D lhs = p * dz(w);
    ScalarField3D rhs = (dz(s.theta) + 1.0) * (rho * w) + s.theta * dz(rho * w);
    return lhs - rhs;
}

// ---------------------------------------------------------------------------
// CSV time series

struct DiagnosticsRow {
    double time = 0.0;
    Energy energy;
    double max_w_top = 0.0;
    double column_residual = 0.0;
    double avg_continuity_residual = 0.0;
    double theta_min = 0.0;
    double theta_max = 0.0;
    double mass = 0.0;
};

class DiagnosticsCsv {
public:
    explicit DiagnosticsCsv(std::ostream& os) : os_(os) {
        os_ << "time,energy,kinetic,internal,potential,max_w_top,column_continuity_residual,"
               "avg_continuity_residual,theta_min,theta_max,mass\n";
    }
    void write(const DiagnosticsRow& r) {
        os_ << std::setprecision(17) << r.time << ',' << r.energy.total() << ',' << r.energy.kinetic << ','
            << r.energy.internal << ',' << r.energy.potential << ',' << r.max_w_top << ',' << r.column_residual << ','
            << r.avg_continuity_residual << ',' << r.theta_min << ',' << r.theta_max << ',' << r.mass << '\n';
    }

private:
    std::ostream& os_;
};

/// Diagnostics of a state together with its tendencies.
inline DiagnosticsRow diagnose(const State& s, const Tendencies& dt) {
    DiagnosticsRow r;
    r.time = s.time;
    r.energy = total_energy(s);
    const auto vw = vertical_velocity(s, dt.d_rho_bar, dt.d_theta);
    r.max_w_top = level(vw.w, s.grid().nz - 1).max_abs();
    r.column_residual = column_continuity_residual(s, dt.d_rho_bar, dt.d_theta).max_abs();
    r.avg_continuity_residual = averaged_continuity_residual(s, dt.d_rho_bar).max_abs();
    r.theta_min = s.theta.min();
    r.theta_max = s.theta.max();
    r.mass = domain_mean(s.rho_bar);
    return r;
}

}  // namespace cpe
