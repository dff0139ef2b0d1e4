#pragma once

// Linearization about (rho_bar*, 0, Theta*):
//
//   d_t xi + rho_bar* I_1(div V)                                      = g1
//   d_t V  - mu alpha Delta V - mu' alpha grad div V
//          + Theta* grad xi / rho_bar* + Acal T                       = g2
//   L[d_t T] - alpha Delta T - rho_bar* alpha I_z(div V)
//          + Theta* exp(z/Theta*) I_1(div V)                          = g3
//
// stored as d_t u + A u = (g1, g2, L^{-1} g3) with A = A0 + B.

#include <algorithm>
#include <cmath>
#include <complex>
#include <functional>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "cpe/diagnostics.hpp"
#include "cpe/spectral.hpp"
#include "cpe/thermo.hpp"
#include "cpe/vertical.hpp"

namespace cpe {

struct LinearState {
    ScalarField2D xi;
    HVectorField3D V;
    ScalarField3D T;

    static LinearState zero(const GridSpec& g) { return {ScalarField2D(g), HVectorField3D(g), ScalarField3D(g)}; }
    const GridSpec& grid() const { return T.grid(); }

    LinearState& operator+=(const LinearState& o) { xi += o.xi; V += o.V; T += o.T; return *this; }
    LinearState& operator-=(const LinearState& o) { xi -= o.xi; V -= o.V; T -= o.T; return *this; }
    LinearState& operator*=(double s) { xi *= s; V *= s; T *= s; return *this; }
    friend LinearState operator+(LinearState a, const LinearState& b) { return a += b; }
    friend LinearState operator-(LinearState a, const LinearState& b) { return a -= b; }
    friend LinearState operator*(LinearState a, double s) { return a *= s; }
    friend LinearState operator*(double s, LinearState a) { return a *= s; }

    double max_abs() const { return std::max({xi.max_abs(), V.max_abs(), T.max_abs()}); }
    bool all_finite() const { return xi.all_finite() && V.all_finite() && T.all_finite(); }

    /// Largest one-sided boundary slope of V and T (Neumann compatibility).
    double boundary_slope() const {
        return std::max({boundary_dz_max(V.x), boundary_dz_max(V.y), boundary_dz_max(T)});
    }
};

// ---------------------------------------------------------------------------
// Discrete ground-space norms: H^3 on T^2 for xi, H^2 on the layer for V, T.

inline double h2_norm(const ScalarField3D& f) {
    const double a = sobolev_h_norm(f, 2.0);
    const double b = sobolev_h_norm(dz(f), 1.0);
    const double c = l2_norm(dzz(f));
    return std::sqrt(a * a + b * b + c * c);
}

inline double x0_norm(const LinearState& u) {
    const double a = sobolev_h_norm(u.xi, 3.0);
    const double b = h2_norm(u.V.x), c = h2_norm(u.V.y), d = h2_norm(u.T);
    return std::sqrt(a * a + b * b + c * c + d * d);
}

// ---------------------------------------------------------------------------
// Vertical operators

/// P f = beta(z) int_0^1 f.
inline ScalarField3D apply_P(const ScalarField3D& f, const Equilibrium& eq) {
    return lift(vertical_mean(f)) * eq.beta_quad;
}
inline ScalarField3D apply_L(const ScalarField3D& f, const Equilibrium& eq) { return 2.0 * f - apply_P(f, eq); }
inline ScalarField3D apply_L_inverse(const ScalarField3D& f, const Equilibrium& eq) {
    return 0.5 * (f + apply_P(f, eq));
}

/// I_z f = int_0^z Bhat(Theta*) f.
inline ScalarField3D apply_Iz(const ScalarField3D& f, const Equilibrium& eq) {
    return vertical_cumulative_integral(f * eq.bhat_star);
}
inline ScalarField2D apply_I1(const ScalarField3D& f, const Equilibrium& eq) {
    return level(apply_Iz(f, eq), f.grid().nz - 1);
}

/// Acal f = (Theta* DBhat(Theta*)/Bhat(Theta*) + I) grad_H f.
inline HVectorField3D apply_Acal(const ScalarField3D& f, const Equilibrium& eq) {
    const HVectorField3D g = grad_h(f);
    Profile s(eq.nz);
    for (int k = 0; k < eq.nz; ++k) s[k] = eq.theta_star / eq.bhat_star[k];
    HVectorField3D out = DBhat_equilibrium(eq, g) * s;
    out += g;
    return out;
}

/// Theta* exp(z/Theta*).
inline Profile temperature_coupling_profile(const GridSpec& g, const Equilibrium& eq) {
    Profile p(g.nz);
    for (int k = 0; k < g.nz; ++k) p[k] = eq.theta_star * std::exp(g.z(k) / eq.theta_star);
    return p;
}

/// -rho_bar* alpha I_z(div V) + Theta* e^{z/Theta*} I_1(div V), the V-coupling of the temperature row before L^{-1}.
inline ScalarField3D temperature_coupling(const HVectorField3D& V, const Equilibrium& eq) {
    const auto& g = V.grid();
    const ScalarField3D d = div_h(V);
    Profile ra(eq.nz);
    for (int k = 0; k < eq.nz; ++k) ra[k] = -eq.rho_bar_star * eq.alpha[k];
    ScalarField3D out = apply_Iz(d, eq) * ra;
    out += lift(apply_I1(d, eq)) * temperature_coupling_profile(g, eq);
    return out;
}

// ---------------------------------------------------------------------------
// Operator matrix

struct LinearOperator {
    Equilibrium eq;
    double mu = 1.0;
    double mu_prime = 0.5;
    double kappa = 1.0;

    LinearOperator() = default;
    LinearOperator(Equilibrium e, const Physics& ph)
        : eq(std::move(e)), mu(ph.mu), mu_prime(ph.mu_prime), kappa(ph.kappa) {}

    /// mu alpha Delta V + mu' alpha grad div V (Neumann in z).
    HVectorField3D lame(const HVectorField3D& V) const {
        HVectorField3D out = laplacian3(V) * mu;
        out += grad_h_div_h(V) * mu_prime;
        return out * eq.alpha;
    }
    ScalarField3D heat(const ScalarField3D& T) const { return laplacian3(T) * kappa * eq.alpha; }

    LinearState apply_A0(const LinearState& u) const {
        LinearState r;
        r.xi = apply_I1(div_h(u.V), eq) * eq.rho_bar_star;
        r.V = lame(u.V) * -1.0;
        r.T = apply_L_inverse(heat(u.T), eq) * -1.0;
        return r;
    }

    LinearState apply_B(const LinearState& u) const {
        const auto& g = u.grid();
        LinearState r;
        r.xi = ScalarField2D(g);
        r.V = lift(grad_h(u.xi)) * (eq.theta_star / eq.rho_bar_star);
        r.V += apply_Acal(u.T, eq);
        r.T = apply_L_inverse(temperature_coupling(u.V, eq), eq);
        return r;
    }

    LinearState apply_A(const LinearState& u) const { return apply_A0(u) + apply_B(u); }

    /// Diffusion blocks treated implicitly: N u = (0, lame V, L^{-1} heat T), so A u = -N u + (A u + N u).
    LinearState apply_N(const LinearState& u) const {
        return {ScalarField2D(u.grid()), lame(u.V), apply_L_inverse(heat(u.T), eq)};
    }

    /// Forcing in Cauchy form: (g1, g2, L^{-1} g3).
    LinearState cauchy_forcing(const LinearState& g) const { return {g.xi, g.V, apply_L_inverse(g.T, eq)}; }

    /// Solve U - c N U = r mode by mode.
    LinearState solve_implicit(const LinearState& r, double c) const;
};

namespace detail {

/// Thomas algorithm for a real tridiagonal matrix with complex right-hand side.
inline void thomas(const std::vector<double>& lo, const std::vector<double>& di, const std::vector<double>& up,
                   std::vector<cplx>& x, std::vector<double>& work) {
    const std::size_t n = di.size();
    work.resize(n);
    double den = di[0];
    if (den == 0.0) throw ConvergenceError("implicit vertical solve: zero pivot");
    work[0] = up[0] / den;
    x[0] /= den;
    for (std::size_t k = 1; k < n; ++k) {
        den = di[k] - lo[k] * work[k - 1];
        if (den == 0.0) throw ConvergenceError("implicit vertical solve: zero pivot");
        work[k] = k + 1 < n ? up[k] / den : 0.0;
        x[k] = (x[k] - lo[k] * x[k - 1]) / den;
    }
    for (std::size_t k = n - 1; k-- > 0;) x[k] -= work[k] * x[k + 1];
}

/// Tridiagonal of  s I - c a(z) (d (d_zz - kk) - e kk)  with Neumann d_zz.
inline void assemble_column(const Profile& a, double s, double c, double d, double e, double kk, double h,
                            std::vector<double>& lo, std::vector<double>& di, std::vector<double>& up) {
    const std::size_t n = a.size();
    lo.assign(n, 0.0);
    di.assign(n, 0.0);
    up.assign(n, 0.0);
    const double ih2 = 1.0 / (h * h);
    for (std::size_t k = 0; k < n; ++k) {
        const double ca = c * a[k];
        di[k] = s - ca * (-2.0 * d * ih2 - (d + e) * kk);
        const double lw = (k == n - 1) ? 2.0 : 1.0;
        const double uw = (k == 0) ? 2.0 : 1.0;
        if (k > 0) lo[k] = -ca * d * lw * ih2;
        if (k + 1 < n) up[k] = -ca * d * uw * ih2;
    }
}

}  // namespace detail

inline LinearState LinearOperator::solve_implicit(const LinearState& r, double c) const {
    const GridSpec& g = r.grid();
    const int nz = g.nz;
    const double h = g.hz();
    auto& fft = fft_for(g.nx, g.ny);

    Spectrum sx = to_spectrum(r.V.x), sy = to_spectrum(r.V.y);
    Spectrum sT = to_spectrum(apply_L(r.T, eq));
    const auto wq = g.quadrature_weights();

    std::vector<double> lo, di, up, work;
    std::vector<cplx> a(nz), p(nz), t(nz), q(nz);
    for (int i = 0; i < g.nx; ++i)
        for (int j = 0; j < fft.nyh(); ++j) {
            const double kx = fft.kx(i), ky = fft.ky(j);
            const double kk = kx * kx + ky * ky;
            const double kn = std::sqrt(kk);
            for (int l = 0; l < nz; ++l) {
                const cplx vx = sx.at(l, i, j), vy = sy.at(l, i, j);
                if (kn > 0.0) {
                    a[l] = (kx * vx + ky * vy) / kn;
                    p[l] = (-ky * vx + kx * vy) / kn;
                } else {
                    a[l] = vx;
                    p[l] = vy;
                }
                t[l] = sT.at(l, i, j);
            }
            // velocity: longitudinal part feels mu + mu', transverse part mu
            detail::assemble_column(eq.alpha, 1.0, c, mu, kn > 0.0 ? mu_prime : 0.0, kk, h, lo, di, up);
            detail::thomas(lo, di, up, a, work);
            detail::assemble_column(eq.alpha, 1.0, c, mu, 0.0, kk, h, lo, di, up);
            detail::thomas(lo, di, up, p, work);
            for (int l = 0; l < nz; ++l) {
                if (kn > 0.0) {
                    sx.at(l, i, j) = (kx * a[l] - ky * p[l]) / kn;
                    sy.at(l, i, j) = (ky * a[l] + kx * p[l]) / kn;
                } else {
                    sx.at(l, i, j) = a[l];
                    sy.at(l, i, j) = p[l];
                }
            }
            // temperature: (2 - c alpha Delta) T - beta w^T T = L r  (Sherman-Morrison)
            detail::assemble_column(eq.alpha, 2.0, c, kappa, 0.0, kk, h, lo, di, up);
            detail::thomas(lo, di, up, t, work);
            for (int l = 0; l < nz; ++l) q[l] = eq.beta_quad[l];
            detail::thomas(lo, di, up, q, work);
            cplx wy = 0.0, wq_ = 0.0;
            for (int l = 0; l < nz; ++l) {
                wy += wq[l] * t[l];
                wq_ += wq[l] * q[l];
            }
            const cplx den = 1.0 - wq_;
            if (std::abs(den) < 1e-14) throw ConvergenceError("implicit temperature solve: singular rank-one update");
            const cplx s = wy / den;
            for (int l = 0; l < nz; ++l) sT.at(l, i, j) = t[l] + q[l] * s;
        }

    return {r.xi, HVectorField3D(from_spectrum<3>(sx), from_spectrum<3>(sy)), from_spectrum<3>(sT)};
}

// ---------------------------------------------------------------------------
// Time stepping

enum class ImexScheme {
    /// forward/backward Euler, first order
    Euler,
    /// Ascher-Ruuth-Spiteri (2,2,2), second order, L-stable implicit part
    ARS222,
};

inline const char* to_string(ImexScheme s) { return s == ImexScheme::Euler ? "euler" : "ars222"; }

/// Forcing (g1, g2, g3) as a function of time, in the raw form of the linear system.
using LinearForcing = std::function<LinearState(double)>;

/// Explicit part of an IMEX split d_t u = E(u, t) + N u.
using ExplicitPart = std::function<LinearState(const LinearState&, double)>;

/// One IMEX step of d_t u = E(u, t) + N u; `op` provides solve_implicit(r, c) = (I - c N)^{-1} r.
template <class Implicit>
LinearState imex_step(const Implicit& op, const LinearState& u, const ExplicitPart& E, double t, double dt,
                      ImexScheme scheme = ImexScheme::ARS222) {
    if (!(dt > 0.0)) throw ConfigError("imex_step: dt must be positive");
    LinearState out;
    if (scheme == ImexScheme::Euler) {
        out = op.solve_implicit(u + dt * E(u, t), dt);
    } else {
        const double gam = 1.0 - 1.0 / std::sqrt(2.0);
        const double del = 1.0 - 1.0 / (2.0 * gam);
        const LinearState e0 = E(u, t);
        const LinearState u1 = op.solve_implicit(u + (gam * dt) * e0, gam * dt);
        const LinearState n1 = (u1 - u) * (1.0 / (gam * dt)) - e0;
        const LinearState e1 = E(u1, t + gam * dt);
        LinearState rhs = u + (dt * del) * e0;
        rhs += (dt * (1.0 - del)) * e1;
        rhs += (dt * (1.0 - gam)) * n1;
        out = op.solve_implicit(rhs, gam * dt);
    }
    if (!out.all_finite()) throw ConvergenceError("imex_step: non-finite state");
    return out;
}

/// One IMEX step of d_t u + A u = g from t to t + dt.
template <class Op>
LinearState step_linear(const Op& op, const LinearState& u, const LinearForcing& g, double t, double dt,
                        ImexScheme scheme = ImexScheme::ARS222) {
    // explicit part E(u, t) = -(A u + N u) + (g1, g2, L^{-1} g3)
    auto E = [&](const LinearState& x, double s) {
        LinearState r = op.apply_A(x) + op.apply_N(x);
        r *= -1.0;
        if (g) r += op.cauchy_forcing(g(s));
        return r;
    };
    return imex_step(op, u, E, t, dt, scheme);
}

template <class Op>
LinearState step_linear(const Op& op, const LinearState& u, const LinearState& g, double dt,
                        ImexScheme scheme = ImexScheme::ARS222) {
    return step_linear(op, u, LinearForcing([&](double) { return g; }), 0.0, dt, scheme);
}

// ---------------------------------------------------------------------------
// Probes

/// Dense nz x nz matrix of L^{-1} acting on one column.
inline Eigen::MatrixXd column_L_inverse(const GridSpec& g, const Equilibrium& eq) {
    const auto w = g.quadrature_weights();
    Eigen::MatrixXd M = 0.5 * Eigen::MatrixXd::Identity(g.nz, g.nz);
    for (int r = 0; r < g.nz; ++r)
        for (int c = 0; c < g.nz; ++c) M(r, c) += 0.5 * eq.beta_quad[r] * w[c];
    return M;
}

struct SpectrumReport {
    std::vector<double> eigenvalues;  ///< real parts, ascending
    double max_imag = 0.0;
    double distance_to_two_point = 0.0;  ///< max distance of an eigenvalue to {1/2, 1}
    double projection_defect = 0.0;      ///< max |P^2 - P|

    nlohmann::json to_json() const {
        return {{"eigenvalues", eigenvalues},
                {"max_imag", max_imag},
                {"distance_to_two_point", distance_to_two_point},
                {"projection_defect", projection_defect}};
    }
};

inline SpectrumReport spectrum_probe(const GridSpec& g, const Equilibrium& eq) {
    const Eigen::MatrixXd Li = column_L_inverse(g, eq);
    const Eigen::MatrixXd P = 2.0 * Li - Eigen::MatrixXd::Identity(g.nz, g.nz);
    Eigen::EigenSolver<Eigen::MatrixXd> es(Li);
    SpectrumReport rep;
    for (int n = 0; n < g.nz; ++n) {
        const auto ev = es.eigenvalues()[n];
        rep.eigenvalues.push_back(ev.real());
        rep.max_imag = std::max(rep.max_imag, std::abs(ev.imag()));
        rep.distance_to_two_point =
            std::max(rep.distance_to_two_point, std::min(std::abs(ev - 0.5), std::abs(ev - 1.0)));
    }
    std::sort(rep.eigenvalues.begin(), rep.eigenvalues.end());
    rep.projection_defect = (P * P - P).cwiseAbs().maxCoeff();
    return rep;
}

/// Flatten (xi, V, T) into one coefficient vector and back.
inline Eigen::VectorXd flatten(const LinearState& u) {
    const auto& g = u.grid();
    Eigen::VectorXd x(g.size2() + 3 * g.size3());
    std::size_t o = 0;
    for (double v : u.xi.values()) x[o++] = v;
    for (double v : u.V.x.values()) x[o++] = v;
    for (double v : u.V.y.values()) x[o++] = v;
    for (double v : u.T.values()) x[o++] = v;
    return x;
}

inline LinearState unflatten(const GridSpec& g, const Eigen::VectorXd& x) {
    LinearState u = LinearState::zero(g);
    std::size_t o = 0;
    for (auto& v : u.xi.values()) v = x[o++];
    for (auto& v : u.V.x.values()) v = x[o++];
    for (auto& v : u.V.y.values()) v = x[o++];
    for (auto& v : u.T.values()) v = x[o++];
    return u;
}

/// Dense matrix of A by columns (small grids only).
inline Eigen::MatrixXd assemble_A(const LinearOperator& op, const GridSpec& g) {
    const std::size_t n = g.size2() + 3 * g.size3();
    if (n > 6000) throw ConfigError("assemble_A: grid too large for dense assembly");
    Eigen::MatrixXd A(n, n);
    Eigen::VectorXd e = Eigen::VectorXd::Zero(n);
    for (std::size_t c = 0; c < n; ++c) {
        e[c] = 1.0;
        A.col(c) = flatten(op.apply_A(unflatten(g, e)));
        e[c] = 0.0;
    }
    return A;
}

struct ResolventSample {
    cplx lambda;
    double norm;
};

struct ResolventReport {
    double omega = 0.0;
    std::vector<ResolventSample> samples;
    double sup = 0.0;

    nlohmann::json to_json() const {
        nlohmann::json rows = nlohmann::json::array();
        for (const auto& s : samples)
            rows.push_back({{"lambda_re", s.lambda.real()}, {"lambda_im", s.lambda.imag()}, {"norm", s.norm}});
        return {{"omega", omega}, {"sup", sup}, {"samples", rows}};
    }
};

/// Samples |lambda| ||(lambda + A + omega)^{-1}|| in the Euclidean norm of the
/// nodal coefficient vector.
inline ResolventReport resolvent_probe(const LinearOperator& op, const GridSpec& g, const std::vector<cplx>& lambdas,
                                       double omega) {
    const Eigen::MatrixXd A = assemble_A(op, g);
    const Eigen::Index n = A.rows();
    const Eigen::MatrixXcd Ac = A.cast<cplx>();
    ResolventReport rep;
    rep.omega = omega;
    for (const cplx lam : lambdas) {
        Eigen::MatrixXcd M = Ac;
        M.diagonal().array() += lam + omega;
        Eigen::BDCSVD<Eigen::MatrixXcd> svd(M);
        const double smin = svd.singularValues()[n - 1];
        if (!(smin > 1e-14 * svd.singularValues()[0])) throw DegeneracyError("resolvent_probe: lambda + A + omega is singular");
        const double norm = std::abs(lam) / smin;
        rep.samples.push_back({lam, norm});
        rep.sup = std::max(rep.sup, norm);
    }
    return rep;
}

/// Sample points on rays of the given angles with moduli 10^k.
inline std::vector<cplx> sector_rays(const std::vector<double>& angles, const std::vector<double>& moduli) {
    std::vector<cplx> out;
    for (double a : angles)
        for (double r : moduli) out.push_back(std::polar(r, a));
    return out;
}

}  // namespace cpe
