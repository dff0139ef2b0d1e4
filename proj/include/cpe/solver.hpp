#pragma once

// Nonlinear time integration of the recast system.
//
//   eulerian-imex      method of lines on the Eulerian fields; diffusion with
//                      equilibrium coefficients implicit, everything else explicit.
//   picard-lagrangian  fixed-point iteration in Lagrangian variables: linear
//                      solve with the remainders of the previous iterate.

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "cpe/diagnostics.hpp"
#include "cpe/lagrange.hpp"
#include "cpe/lagrangian_system.hpp"
#include "cpe/linear.hpp"
#include "cpe/scenarios.hpp"

namespace cpe {

enum class Scheme { EulerianImex, PicardLagrangian };

inline const char* to_string(Scheme s) { return s == Scheme::EulerianImex ? "eulerian-imex" : "picard-lagrangian"; }

inline Scheme scheme_from_string(const std::string& s) {
    if (s == "eulerian-imex") return Scheme::EulerianImex;
    if (s == "picard-lagrangian") return Scheme::PicardLagrangian;
    throw ConfigError("unknown scheme \"" + s + "\" (expected eulerian-imex or picard-lagrangian)");
}

inline ImexScheme imex_from_string(const std::string& s) {
    if (s == "ars222") return ImexScheme::ARS222;
    if (s == "euler") return ImexScheme::Euler;
    throw ConfigError("unknown imex scheme \"" + s + "\" (expected ars222 or euler)");
}

inline Dissipation dissipation_from_string(const std::string& s) {
    if (s == "none") return Dissipation::None;
    if (s == "full") return Dissipation::Full;
    if (s == "horizontal") return Dissipation::Horizontal;
    throw ConfigError("unknown dissipation \"" + s + "\" (expected none, full or horizontal)");
}

struct SolverConfig {
    double dt = 1e-3;
    double t_end = 0.1;
    Scheme scheme = Scheme::EulerianImex;
    ImexScheme imex = ImexScheme::ARS222;
    double picard_tol = 1e-9;
    int picard_max_iters = 20;
    /// Remainder form used as forcing of the linear solve.
    LinearForm picard_form = LinearForm::Discrete;
    /// Rebuild the flow from the current iterate only for the first k iterations (0: always).
    int picard_freeze_flow_after = 0;
    Physics physics;
    /// Keep every n-th state in the trajectory (the final state is always kept).
    int store_every = 1;
    /// Diagnostics row every n steps.
    int diagnostics_every = 1;
    /// Raise RegimeError when Theta leaves [Theta*/2, 3 Theta*/2].
    bool enforce_regime = true;

    int steps() const { return static_cast<int>(std::llround(t_end / dt)); }

    void validate() const {
        if (!(dt > 0.0)) throw ConfigError("solver.dt must be positive");
        if (!(t_end >= 0.0)) throw ConfigError("solver.t_end must be nonnegative");
        if (std::abs(steps() * dt - t_end) > 1e-9 * std::max(1.0, t_end))
            throw ConfigError("solver.t_end must be an integer multiple of solver.dt");
        if (!(picard_tol > 0.0)) throw ConfigError("solver.picard_tol must be positive");
        if (picard_max_iters < 1) throw ConfigError("solver.picard_max_iters must be >= 1");
        if (store_every < 1 || diagnostics_every < 1) throw ConfigError("solver: cadences must be >= 1");
        physics.validate();
    }
};

/// Time-dependent right-hand sides (heating, manufactured sources).
using SourceFn = std::function<Sources(double)>;

// ---------------------------------------------------------------------------
// Eulerian tendencies

namespace detail {

/// Solves M h = rhs for the Theta tendency h on one column, where
///   M h = rho h + d_z Theta (W h) + p D_z((W h)/rho),   W h = -rho_bar Cum(DBhat(Theta)[h]).
/// with DBhat = (-a + (a/Theta) C + c e_top^T C) diag(1/Theta^2) and C the trapezoid cumulative integral.
struct ThetaColumnSolver {
    Eigen::MatrixXd M;
    Eigen::VectorXd r;
    Eigen::PartialPivLU<Eigen::MatrixXd> lu;

    void assemble(std::span<const double> th, double rho_bar, std::span<const double> rho, std::span<const double> p,
                  std::span<const double> dzth, double h) {
        const int n = static_cast<int>(th.size());
        const auto parts = column::bhat_parts(th, h);
        if (parts.I < kPositivityGuard) throw DegeneracyError("theta tendency: I(Theta) below positivity guard");
        // column j of M is the operator applied to e_j
        std::vector<double> a(n), ath(n), c(n), it2(n), bcol(n), gcol(n), vcol(n);
        for (int k = 0; k < n; ++k) {
            a[k] = parts.expA[k] / parts.I;
            ath[k] = a[k] / th[k];
            c[k] = parts.expA[k] * parts.expA1 / (th[k] * parts.I * parts.I);
            it2[k] = 1.0 / (th[k] * th[k]);
        }
        M.resize(n, n);
        const double i2h = 1.0 / (2.0 * h);
        for (int j = 0; j < n; ++j) {
            // DBhat[e_j]: q = e_j / Theta_j^2, S = Cum(q)
            const double wtop = (j == 0 || j == n - 1) ? 0.5 * h : h;
            for (int k = 0; k < n; ++k) {
                double S = 0.0;
                if (k > j) S = (j == 0 ? 0.5 * h : h);
                else if (k == j && k > 0) S = 0.5 * h;
                bcol[k] = (ath[k] * S + c[k] * wtop - (k == j ? a[k] : 0.0)) * it2[j];
            }
            gcol[0] = 0.0;
            for (int k = 1; k < n; ++k) gcol[k] = gcol[k - 1] - 0.5 * h * rho_bar * (bcol[k - 1] + bcol[k]);
            for (int k = 0; k < n; ++k) vcol[k] = gcol[k] / rho[k];
            double* m = M.col(j).data();
            m[0] = dzth[0] * gcol[0] + p[0] * i2h * (-3.0 * vcol[0] + 4.0 * vcol[1] - vcol[2]);
            for (int k = 1; k + 1 < n; ++k) m[k] = dzth[k] * gcol[k] + p[k] * i2h * (vcol[k + 1] - vcol[k - 1]);
            m[n - 1] = dzth[n - 1] * gcol[n - 1] +
                       p[n - 1] * i2h * (3.0 * vcol[n - 1] - 4.0 * vcol[n - 2] + vcol[n - 3]);
            m[j] += rho[j];
        }
    }

    void solve(std::span<const double> th, double rho_bar, std::span<const double> rho, std::span<const double> p,
               std::span<const double> dzth, std::span<const double> rhs, double h, std::span<double> out) {
        const int n = static_cast<int>(th.size());
        assemble(th, rho_bar, rho, p, dzth, h);
        r = Eigen::Map<const Eigen::VectorXd>(rhs.data(), n);
        lu.compute(M);
        if (!(std::abs(lu.determinant()) > 0.0)) throw DegeneracyError("theta tendency: singular column system");
        Eigen::Map<Eigen::VectorXd>(out.data(), n) = lu.solve(r);
    }
};

}  // namespace detail

/// Eulerian partial time derivatives solving the recast system exactly at the
/// discrete level: residual_full_system(s, tendencies_eulerian(s, ...), ...) = 0.
inline Tendencies tendencies_eulerian(const State& s, const Physics& ph, const Sources& src = {}) {
    const auto& g = s.grid();
    const EulerianCalculus calc;
    check_positive(lift(s.rho_bar), "rho_bar");
    const ScalarField3D rho = density(s.rho_bar, s.theta);
    const ScalarField3D p = rho * s.theta;

    Tendencies d;
    const ScalarField2D drb = averaged_continuity_tendency(s, calc);
    d.d_rho_bar = drb;
    if (src.rho_bar) d.d_rho_bar += *src.rho_bar;

    // temperature: affine in d_theta through w
    const VerticalVelocity w0 = vertical_velocity(s, drb, ScalarField3D(g), calc);
    const ScalarField3D dzth = dz(s.theta, VerticalBC::Neumann);
    ScalarField3D rhs = rho * advect(calc, s.v, s.theta);
    rhs += w0.rho_w * dzth;
    rhs += p * (calc.div(s.v) + dz(w0.w));
    rhs -= ph.kappa * (calc.lap(s.theta) + dzz(s.theta));
    rhs -= dissipation(s.v, ph, calc);
    if (src.theta) rhs -= *src.theta;
    rhs *= -1.0;

    d.d_theta = ScalarField3D(g);
    detail::ThetaColumnSolver cs;
    for (std::size_t c = 0; c < g.size2(); ++c)
        cs.solve(s.theta.column(c), s.rho_bar[c], rho.column(c), p.column(c), dzth.column(c), rhs.column(c), g.hz(),
                 d.d_theta.column(c));

    // momentum
    ScalarField3D w = w0.rho_w - vertical_cumulative_integral(s.rho_bar * frechet_DBhat(s.theta, d.d_theta));
    w = divide_guarded(w, rho, "vertical velocity");
    HVectorField3D force = calc.lap(s.v);
    force.x += dzz(s.v.x);
    force.y += dzz(s.v.y);
    force *= ph.mu;
    force += ph.mu_prime * calc.grad_div(s.v);
    force -= calc.grad(p);
    if (src.v) force += *src.v;
    const ScalarField3D inv_rho = divide_guarded(ScalarField3D(g, 1.0), rho, "momentum tendency");
    d.d_v = force * inv_rho;
    d.d_v -= advect(calc, s.v, s.v);
    d.d_v -= w * dz(s.v, VerticalBC::Neumann);
    return d;
}

// ---------------------------------------------------------------------------
// State <-> perturbation

inline LinearState perturbation_of(const State& s, const Equilibrium& eq) {
    return {s.rho_bar - eq.rho_bar_star, s.v, s.theta - eq.theta_star};
}
inline State state_of(const LinearState& u, const Equilibrium& eq, double t) {
    return {u.xi + eq.rho_bar_star, u.V, u.T + eq.theta_star, t};
}

// ---------------------------------------------------------------------------
// Records

/// Per-step bracket record.  Margins are min over the domain of the distance to
/// the nearest bracket edge, relative to Theta* (resp. rho*(z)).
struct StepRecord {
    double time = 0.0;
    double theta_margin = 0.0;
    double rho_margin = 0.0;
    double boundary_slope = 0.0;
    bool in_brackets() const { return theta_margin >= 0.0 && rho_margin >= 0.0; }
};

inline StepRecord record_of(const State& s, const Equilibrium& eq) {
    StepRecord r;
    r.time = s.time;
    const auto& g = s.grid();
    const ScalarField3D rho = density(s.rho_bar, s.theta);
    double tm = 1e300, rm = 1e300;
    for (std::size_t c = 0; c < g.size2(); ++c) {
        auto th = s.theta.column(c);
        auto rc = rho.column(c);
        for (int k = 0; k < g.nz; ++k) {
            const double ts = eq.theta_star, rs = eq.rho_bar_star * eq.bhat_star[k];
            tm = std::min(tm, std::min(th[k] - 0.5 * ts, 1.5 * ts - th[k]) / ts);
            rm = std::min(rm, std::min(rc[k] - 0.5 * rs, 1.5 * rs - rc[k]) / rs);
        }
    }
    r.theta_margin = tm;
    r.rho_margin = rm;
    r.boundary_slope = std::max({boundary_dz_max(s.v.x), boundary_dz_max(s.v.y), boundary_dz_max(s.theta)});
    return r;
}

struct PicardReport {
    int iterations = 0;
    bool converged = false;
    std::vector<double> differences;
    std::vector<double> ratios;

    nlohmann::json to_json() const {
        return {{"iterations", iterations}, {"converged", converged}, {"differences", differences}, {"ratios", ratios}};
    }
};

struct Trajectory {
    std::vector<State> states;
    std::vector<StepRecord> records;
    std::vector<DiagnosticsRow> diagnostics;
    std::optional<PicardReport> picard;

    const State& final_state() const { return states.back(); }
};

// ---------------------------------------------------------------------------
// Eulerian IMEX

/// Linear operator of the discrete recast system at equilibrium.  The xi and V
/// rows coincide with LinearOperator; the temperature row is the exact
/// linearization of the discrete Theta row,
///   K d_t T - kappa alpha Delta T + Theta* div V + Theta* d_z(J1(0, V) alpha) = g3,
/// with K h = h + Theta* d_z(J1(h, 0) alpha) = alpha M0 h, M0 the column matrix
/// of tendencies_eulerian at equilibrium.  K and the rank-one L agree on smooth
/// profiles up to O(hz^2) but differ by O(1) on the highest vertical mode.
class DiscreteLinearOperator {
public:
    DiscreteLinearOperator(const Equilibrium& eq, const Physics& ph, const GridSpec& g) : op_(eq, ph), kappa_(ph.kappa) {
        const int n = g.nz;
        std::vector<double> th(n, eq.theta_star), rho(n), p(n), dzth(n, 0.0);
        for (int k = 0; k < n; ++k) {
            rho[k] = eq.rho_bar_star * eq.bhat_star[k];
            p[k] = rho[k] * eq.theta_star;
        }
        detail::ThetaColumnSolver cs;
        cs.assemble(th, eq.rho_bar_star, rho, p, dzth, g.hz());
        K_ = cs.M;
        for (int k = 0; k < n; ++k) K_.row(k) *= eq.alpha[k];
        luK_.compute(K_);
        D2_ = Eigen::MatrixXd::Zero(n, n);
        const double ih2 = 1.0 / (g.hz() * g.hz());
        D2_(0, 0) = -2.0 * ih2;
        D2_(0, 1) = 2.0 * ih2;
        for (int k = 1; k + 1 < n; ++k) {
            D2_(k, k - 1) = ih2;
            D2_(k, k) = -2.0 * ih2;
            D2_(k, k + 1) = ih2;
        }
        D2_(n - 1, n - 2) = 2.0 * ih2;
        D2_(n - 1, n - 1) = -2.0 * ih2;
        Alpha_ = Eigen::Map<const Eigen::VectorXd>(eq.alpha.data(), n).asDiagonal();
    }

    const LinearOperator& base() const { return op_; }
    const Eigen::MatrixXd& K() const { return K_; }

    ScalarField3D apply_K_inverse(ScalarField3D f) const {
        const auto& g = f.grid();
        Eigen::VectorXd x;
        for (std::size_t c = 0; c < g.size2(); ++c) {
            Eigen::Map<Eigen::VectorXd> col(f.column(c).data(), g.nz);
            x = luK_.solve(col);
            col = x;
        }
        return f;
    }

    LinearState apply_A(const LinearState& u) const {
        const Equilibrium& eq = op_.eq;
        LinearState r = op_.apply_A(u);
        ScalarField3D t = div_h(u.V) * eq.theta_star;
        t += dz(J1_linear(ScalarField3D(u.grid()), u.V, eq) * eq.alpha) * eq.theta_star;
        t -= op_.heat(u.T);
        r.T = apply_K_inverse(std::move(t));
        return r;
    }

    LinearState apply_N(const LinearState& u) const {
        return {ScalarField2D(u.grid()), op_.lame(u.V), apply_K_inverse(op_.heat(u.T))};
    }

    LinearState cauchy_forcing(const LinearState& g) const { return {g.xi, g.V, apply_K_inverse(g.T)}; }

    /// (I - c N)^{-1} r: velocity through the tridiagonal mode solves, temperature through
    /// (K - c kappa alpha (D_zz - k^2)) T = K r per horizontal mode.
    LinearState solve_implicit(const LinearState& r, double c) const {
        const auto& g = r.grid();
        const int n = g.nz;
        LinearState out = op_.solve_implicit(r, c);
        if (c != cached_c_) {
            cache_.clear();
            cached_c_ = c;
        }
        auto& fft = fft_for(g.nx, g.ny);
        Spectrum sT = to_spectrum(r.T);
        Eigen::MatrixXd rhs(n, 2), sol;
        for (int i = 0; i < g.nx; ++i)
            for (int j = 0; j < fft.nyh(); ++j) {
                const double kk = fft.ksq(i, j);
                auto it = cache_.find(kk);
                if (it == cache_.end()) {
                    Eigen::MatrixXd S = K_ - (c * kappa_) * Alpha_ * (D2_ - kk * Eigen::MatrixXd::Identity(n, n));
                    it = cache_.emplace(kk, Eigen::PartialPivLU<Eigen::MatrixXd>(S)).first;
                }
                for (int l = 0; l < n; ++l) {
                    rhs(l, 0) = sT.at(l, i, j).real();
                    rhs(l, 1) = sT.at(l, i, j).imag();
                }
                sol = it->second.solve(K_ * rhs);
                for (int l = 0; l < n; ++l) sT.at(l, i, j) = cplx(sol(l, 0), sol(l, 1));
            }
        out.T = from_spectrum<3>(sT);
        return out;
    }

private:
    LinearOperator op_;
    double kappa_;
    Eigen::MatrixXd K_, D2_, Alpha_;
    Eigen::PartialPivLU<Eigen::MatrixXd> luK_;
    mutable double cached_c_ = -1.0;
    mutable std::map<double, Eigen::PartialPivLU<Eigen::MatrixXd>> cache_;
};

class EulerianStepper {
public:
    EulerianStepper(Equilibrium eq, SolverConfig cfg, SourceFn src = {})
        : eq_(std::move(eq)), cfg_(std::move(cfg)), src_(std::move(src)) {
        cfg_.validate();
    }

    Tendencies tendencies(const State& s) const {
        return tendencies_eulerian(s, cfg_.physics, src_ ? src_(s.time) : Sources{});
    }

    /// One step from s; d0, when given, are the tendencies at s.
    State step(const State& s, const Tendencies* d0 = nullptr) const {
        if (!imp_ || !imp_grid_.same_shape(s.grid())) {
            imp_.emplace(eq_, cfg_.physics, s.grid());
            imp_grid_ = s.grid();
        }
        const DiscreteLinearOperator& op_ = *imp_;
        const LinearState u = perturbation_of(s, eq_);
        auto E = [&](const LinearState& x, double t) {
            LinearState r = (&x == &u && d0) ? as_linear(*d0) : as_linear(tendencies(state_of(x, eq_, t)));
            r -= op_.apply_N(x);
            return r;
        };
        State out = state_of(imex_step(op_, u, E, s.time, cfg_.dt, cfg_.imex), eq_, s.time + cfg_.dt);
        if (!out.all_finite()) throw ConvergenceError("eulerian step: non-finite state at t = " + std::to_string(out.time));
        if (cfg_.enforce_regime) check_theta_regime(out.theta, eq_.theta_star);
        return out;
    }

    const SolverConfig& config() const { return cfg_; }
    const Equilibrium& equilibrium() const { return eq_; }

private:
    Equilibrium eq_;
    SolverConfig cfg_;
    SourceFn src_;
    mutable std::optional<DiscreteLinearOperator> imp_;
    mutable GridSpec imp_grid_;
};

/// Observer called after each stored step (progress, dumps).
using StepObserver = std::function<void(int step, const State&)>;

/// Fills traj as the run proceeds, so a caller that catches an error still
/// holds the records and diagnostics up to the failing step.
inline void run_eulerian_into(Trajectory& traj, const State& initial, const Equilibrium& eq, const SolverConfig& cfg,
                              const SourceFn& src = {}, const StepObserver& obs = {}) {
    EulerianStepper stepper(eq, cfg, src);
    State s = initial;
    const int N = cfg.steps();
    traj.states.push_back(s);
    traj.records.push_back(record_of(s, eq));
    if (obs) obs(0, s);
    for (int n = 0; n < N; ++n) {
        const Tendencies d0 = stepper.tendencies(s);
        if (n % cfg.diagnostics_every == 0) traj.diagnostics.push_back(diagnose(s, d0));
        s = stepper.step(s, &d0);
        s.time = (n + 1) * cfg.dt;
        traj.records.push_back(record_of(s, eq));
        if ((n + 1) % cfg.store_every == 0 || n + 1 == N) {
            traj.states.push_back(s);
            if (obs) obs(n + 1, s);
        }
    }
    if (N % cfg.diagnostics_every == 0) traj.diagnostics.push_back(diagnose(s, stepper.tendencies(s)));
}

inline Trajectory run_eulerian(const State& initial, const Equilibrium& eq, const SolverConfig& cfg,
                               const SourceFn& src = {}, const StepObserver& obs = {}) {
    Trajectory traj;
    run_eulerian_into(traj, initial, eq, cfg, src, obs);
    return traj;
}

// ---------------------------------------------------------------------------
// Picard iteration in Lagrangian variables

namespace detail {

inline double picard_norm(const std::vector<LinearState>& a, const std::vector<LinearState>& b,
                          const std::vector<LinearState>& da, const std::vector<LinearState>& db) {
    double su = 0.0, sd = 0.0;
    for (std::size_t n = 0; n < a.size(); ++n) {
        su = std::max(su, x0_norm(a[n] - b[n]));
        const LinearState e = da[n] - db[n];
        sd = std::max(sd, std::sqrt(std::pow(l2_norm(e.xi), 2) + std::pow(l2_norm(e.V.x), 2) +
                                    std::pow(l2_norm(e.V.y), 2) + std::pow(l2_norm(e.T), 2)));
    }
    return su + sd;
}

inline FlowMap flow_of(const std::vector<LinearState>& U, const std::vector<double>& times, const Equilibrium& eq) {
    const auto& g = U.front().grid();
    std::vector<HVectorField2D> bL;
    bL.reserve(U.size());
    for (const auto& u : U) bL.push_back(b_field(u.T + eq.theta_star, u.V));
    FlowMap flow = integrate_flow_lagrangian(g, bL, times);
    for (std::size_t n = 0; n < flow.size(); ++n)
        if (frobenius_max(flow.gradX[n].minus_identity()) > 0.5)
            throw RegimeError("picard: |grad X - I| exceeds 1/2 at t = " + std::to_string(times[n]));
    return flow;
}

}  // namespace detail

/// Fixed-point iteration u^{k+1} = linear solve with forcing f(u^k), flow from u^k.
/// The remainder form selects the linear operator: Discrete pairs the exact
/// linearization with DiscreteLinearOperator, Projected pairs L with LinearOperator.
/// Either pairing makes the fixed point an exact solution of the discrete system.
inline Trajectory picard_solve(const State& initial, const Equilibrium& eq, const SolverConfig& cfg,
                               const SourceFn& src = {});

namespace detail {

template <class Op>
PicardReport picard_iterate(const Op& op, const State& initial, const Equilibrium& eq, const SolverConfig& cfg,
                            const SourceFn& src, const std::vector<double>& times, std::vector<LinearState>& U) {
    const auto& g = initial.grid();
    const int N = cfg.steps();
    const LinearState u0 = perturbation_of(initial, eq);
    U.assign(N + 1, LinearState::zero(g));
    std::vector<LinearState> dU(N + 1, LinearState::zero(g));
    PicardReport rep;
    double prev = 0.0;
    int nonc = 0;
    FlowMap flow = FlowMap::identity(g, times);
    for (int k = 1; k <= cfg.picard_max_iters; ++k) {
        if (cfg.picard_freeze_flow_after == 0 || k <= cfg.picard_freeze_flow_after) flow = detail::flow_of(U, times, eq);
        std::vector<LinearState> G(N + 1);
        for (int n = 0; n <= N; ++n) {
            const LagrangianState ls = make_lagrangian(U[n], flow.Z[n], times[n]);
            const Residuals f = remainders(ls, as_tendencies(dU[n]), eq, cfg.physics, cfg.picard_form);
            G[n] = {f.rho_bar, f.v, f.theta};
            if (src) {
                const Sources s = src(times[n]);
                Composer at_X(g, flow.positions(n));
                if (s.rho_bar) G[n].xi += at_X(*s.rho_bar);
                if (s.v) G[n].V += at_X(*s.v) * eq.alpha;
                if (s.theta) G[n].T += at_X(*s.theta) * eq.alpha;
            }
        }
        std::vector<LinearState> Un(N + 1), dUn(N + 1);
        Un[0] = u0;
        for (int n = 0; n < N; ++n) {
            const LinearForcing gf = [&, n](double t) {
                const double th = std::clamp((t - times[n]) / cfg.dt, 0.0, 1.0);
                return G[n] * (1.0 - th) + G[n + 1] * th;
            };
            Un[n + 1] = step_linear(op, Un[n], gf, times[n], cfg.dt, cfg.imex);
        }
        for (int n = 0; n <= N; ++n) dUn[n] = op.cauchy_forcing(G[n]) - op.apply_A(Un[n]);

        const double diff = detail::picard_norm(Un, U, dUn, dU);
        rep.iterations = k;
        rep.differences.push_back(diff);
        if (k > 1) {
            const double ratio = prev > 0.0 ? diff / prev : 0.0;
            rep.ratios.push_back(ratio);
            nonc = ratio >= 1.0 ? nonc + 1 : 0;
            if (nonc >= 3)
                throw ConvergenceError("picard: non-contraction, difference ratio " + std::to_string(ratio) +
                                       " >= 1 for 3 consecutive iterations");
        }
        prev = diff;
        U = std::move(Un);
        dU = std::move(dUn);
        if (diff < cfg.picard_tol) {
            rep.converged = true;
            break;
        }
    }
    if (!rep.converged)
        throw ConvergenceError("picard: no convergence in " + std::to_string(cfg.picard_max_iters) +
                               " iterations (last difference " + std::to_string(rep.differences.back()) + ")");
    return rep;
}

}  // namespace detail

inline Trajectory picard_solve(const State& initial, const Equilibrium& eq, const SolverConfig& cfg,
                               const SourceFn& src) {
    cfg.validate();
    const int N = cfg.steps();
    std::vector<double> times(N + 1);
    for (int n = 0; n <= N; ++n) times[n] = n * cfg.dt;
    std::vector<LinearState> U;
    PicardReport rep;
    if (cfg.picard_form == LinearForm::Discrete)
        rep = detail::picard_iterate(DiscreteLinearOperator(eq, cfg.physics, initial.grid()), initial, eq, cfg, src,
                                     times, U);
    else
        rep = detail::picard_iterate(LinearOperator(eq, cfg.physics), initial, eq, cfg, src, times, U);

    const FlowMap flow = detail::flow_of(U, times, eq);
    Trajectory traj;
    traj.picard = rep;
    for (int n = 0; n <= N; ++n) {
        const bool keep = n % cfg.store_every == 0 || n == N;
        const bool diag = n % cfg.diagnostics_every == 0;
        if (!keep && !diag) continue;
        State s = n == 0 ? initial : untransform(make_lagrangian(U[n], flow.Z[n], times[n]), flow, n, eq);
        s.time = times[n];
        if (cfg.enforce_regime) check_theta_regime(s.theta, eq.theta_star);
        traj.records.push_back(record_of(s, eq));
        if (diag)
            traj.diagnostics.push_back(
                diagnose(s, tendencies_eulerian(s, cfg.physics, src ? src(times[n]) : Sources{})));
        if (keep) traj.states.push_back(std::move(s));
    }
    return traj;
}

inline Trajectory solve(const State& initial, const Equilibrium& eq, const SolverConfig& cfg, const SourceFn& src = {},
                        const StepObserver& obs = {}) {
    if (cfg.scheme == Scheme::PicardLagrangian) return picard_solve(initial, eq, cfg, src);
    return run_eulerian(initial, eq, cfg, src, obs);
}

// ---------------------------------------------------------------------------
// Solution-class proxies

/// sqrt(|f|_{H^4_h}^2 + |d_z f|_{H^3_h}^2 + |d_zz f|_{H^2_h}^2).
inline double h4_norm(const ScalarField3D& f) {
    const double a = sobolev_h_norm(f, 4.0);
    const double b = sobolev_h_norm(dz(f), 3.0);
    const double c = sobolev_h_norm(dzz(f), 2.0);
    return std::sqrt(a * a + b * b + c * c);
}

struct SolutionClassReport {
    double sup_rho_bar_h3 = 0.0;  ///< sup_t |rho_bar - rho_bar*|_{H^3}
    double l2_v_h4 = 0.0;         ///< (int |v|_{H^4}^2 dt)^{1/2}
    double l2_theta_h4 = 0.0;     ///< (int |Theta - Theta*|_{H^4}^2 dt)^{1/2}
    double sup_dt_h2 = 0.0;       ///< sup of H^2 norms of stored time differences
    bool brackets_ok = true;
    std::optional<double> first_violation;
    double min_theta_margin = 0.0;
    double min_rho_margin = 0.0;
    double max_boundary_slope = 0.0;

    nlohmann::json to_json() const {
        nlohmann::json j{{"sup_rho_bar_h3", sup_rho_bar_h3},   {"l2_v_h4", l2_v_h4},
                         {"l2_theta_h4", l2_theta_h4},         {"sup_dt_h2", sup_dt_h2},
                         {"brackets_ok", brackets_ok},         {"min_theta_margin", min_theta_margin},
                         {"min_rho_margin", min_rho_margin},   {"max_boundary_slope", max_boundary_slope}};
        j["first_violation_time"] = first_violation ? nlohmann::json(*first_violation) : nlohmann::json(nullptr);
        return j;
    }
};

inline SolutionClassReport check_solution_class(const Trajectory& traj, const Equilibrium& eq) {
    SolutionClassReport r;
    double iv = 0.0, it = 0.0, pv = 0.0, pt = 0.0;
    for (std::size_t m = 0; m < traj.states.size(); ++m) {
        const State& s = traj.states[m];
        const LinearState u = perturbation_of(s, eq);
        r.sup_rho_bar_h3 = std::max(r.sup_rho_bar_h3, sobolev_h_norm(u.xi, 3.0));
        const double v2 = std::pow(h4_norm(u.V.x), 2) + std::pow(h4_norm(u.V.y), 2);
        const double t2 = std::pow(h4_norm(u.T), 2);
        if (m > 0) {
            const State& q = traj.states[m - 1];
            const double dt = s.time - q.time;
            iv += 0.5 * dt * (v2 + pv);
            it += 0.5 * dt * (t2 + pt);
            if (dt > 0.0) {
                const LinearState d = (u - perturbation_of(q, eq)) * (1.0 / dt);
                const double n2 = std::sqrt(std::pow(sobolev_h_norm(d.xi, 2.0), 2) + std::pow(h2_norm(d.V.x), 2) +
                                            std::pow(h2_norm(d.V.y), 2) + std::pow(h2_norm(d.T), 2));
                r.sup_dt_h2 = std::max(r.sup_dt_h2, n2);
            }
        }
        pv = v2;
        pt = t2;
    }
    r.l2_v_h4 = std::sqrt(iv);
    r.l2_theta_h4 = std::sqrt(it);
    r.min_theta_margin = r.min_rho_margin = 1e300;
    for (const auto& rec : traj.records) {
        r.min_theta_margin = std::min(r.min_theta_margin, rec.theta_margin);
        r.min_rho_margin = std::min(r.min_rho_margin, rec.rho_margin);
        r.max_boundary_slope = std::max(r.max_boundary_slope, rec.boundary_slope);
        if (!rec.in_brackets() && !r.first_violation) {
            r.brackets_ok = false;
            r.first_violation = rec.time;
        }
    }
    return r;
}

/// Relative drift |E(t) - E(0)| / E(0) over the diagnostics rows.
inline double max_energy_drift(const Trajectory& traj) {
    if (traj.diagnostics.empty()) return 0.0;
    const double e0 = traj.diagnostics.front().energy.total();
    double m = 0.0;
    for (const auto& d : traj.diagnostics) m = std::max(m, std::abs(d.energy.total() - e0) / std::abs(e0));
    return m;
}

}  // namespace cpe
