#pragma once

// The system in Lagrangian variables along the horizontal characteristics X:
//
//   rho_bar^L = rho_bar o X - rho_bar*,  v^L = v o X,  Theta^L = Theta o X - Theta*.
//
// The remainders f are defined as (linear left-hand side) minus (transformed
// recast equation, rows 2 and 3 divided by rho* = rho_bar* Bhat(Theta*)).  A
// term-by-term evaluation of the long printed remainder formulas is kept as an
// audit against that definition.

#include <algorithm>
#include <iostream>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "cpe/diagnostics.hpp"
#include "cpe/lagrange.hpp"
#include "cpe/linear.hpp"

namespace cpe {

struct LagrangianState {
    ScalarField2D rho_bar_L;
    HVectorField3D v_L;
    ScalarField3D theta_L;
    Matrix2Field Z;  ///< (grad X)^{-1} at this time
    double time = 0.0;

    const GridSpec& grid() const { return theta_L.grid(); }

    static LagrangianState zero(const GridSpec& g) {
        return {ScalarField2D(g), HVectorField3D(g), ScalarField3D(g), Matrix2Field::identity(g), 0.0};
    }

    LagrangianCalculus calculus() const { return LagrangianCalculus(Z); }

    /// Full fields at the moving points: (rho_bar*, 0, Theta*) + perturbation.
    State at_characteristics(const Equilibrium& eq) const {
        return {rho_bar_L + eq.rho_bar_star, v_L, theta_L + eq.theta_star, time};
    }

    LinearState perturbation() const { return {rho_bar_L, v_L, theta_L}; }

    /// Largest perturbation amplitude including the metric |Z - I|.
    double amplitude() const {
        return std::max({rho_bar_L.max_abs(), v_L.max_abs(), theta_L.max_abs(), Z.minus_identity().max_abs()});
    }
};

inline LinearState as_linear(const Tendencies& t) { return {t.d_rho_bar, t.d_v, t.d_theta}; }
inline Tendencies as_tendencies(const LinearState& u) { return {u.xi, u.V, u.T}; }

inline LagrangianState make_lagrangian(const LinearState& u, Matrix2Field Z, double t = 0.0) {
    return {u.xi, u.V, u.T, std::move(Z), t};
}

inline LagrangianState transform_state(const State& s, const FlowMap& flow, std::size_t n, const Equilibrium& eq) {
    Composer at_X(flow.grid, flow.positions(n));
    LagrangianState out{at_X(s.rho_bar) - eq.rho_bar_star, at_X(s.v), at_X(s.theta) - eq.theta_star, flow.Z[n],
                        flow.times[n]};
    check_theta_regime(out.theta_L + eq.theta_star, eq.theta_star, "theta_L + theta*");
    return out;
}

inline State untransform(const LagrangianState& ls, const FlowMap& flow, std::size_t n, const Equilibrium& eq) {
    Composer at_Y(flow.grid, map_points(flow.grid, inverse_map(flow, n)));
    return {at_Y(ls.rho_bar_L) + eq.rho_bar_star, at_Y(ls.v_L), at_Y(ls.theta_L) + eq.theta_star, flow.times[n]};
}

inline HVectorField2D b_L(const LagrangianState& ls, const Equilibrium& eq) {
    return b_field(ls.theta_L + eq.theta_star, ls.v_L);
}

/// Eulerian divergence of b at the moving points, via the chain rule with Z.
inline ScalarField2D div_b_L(const LagrangianState& ls, const Equilibrium& eq) { return ls.calculus().div(b_L(ls, eq)); }

/// Eulerian partial time derivatives at the moving points from the Lagrangian ones:
/// (d_t f) o X = d_t f^L - (Z b^L) . grad_y f^L.
inline Tendencies eulerian_tendencies(const LagrangianState& ls, const Tendencies& dL, const Equilibrium& eq) {
    const LagrangianCalculus calc = ls.calculus();
    const HVectorField2D b = b_L(ls, eq);
    const HVectorField2D Zb = calc.apply(b);
    Tendencies d;
    d.d_rho_bar = dL.d_rho_bar - dot(Zb, grad_h(ls.rho_bar_L));
    const HVectorField3D Zb3 = lift(Zb);
    d.d_v = dL.d_v - advect(EulerianCalculus{}, Zb3, ls.v_L);
    d.d_theta = dL.d_theta - advect(EulerianCalculus{}, Zb3, ls.theta_L);
    return d;
}

/// Residual of the recast system at the moving points (rows unnormalized).
inline Residuals transformed_residual(const LagrangianState& ls, const Tendencies& dL, const Equilibrium& eq,
                                      const Physics& ph, const Sources& src = {}) {
    return residual_full_system(ls.at_characteristics(eq), eulerian_tendencies(ls, dL, eq), ph, src, ls.calculus());
}

// ---------------------------------------------------------------------------
// Vertical mass flux and its split

struct WSplit {
    ScalarField3D J1;          ///< part linear in (d_t Theta^L, v^L)
    ScalarField3D J2;          ///< (rho_bar Bhat w)^L - J1
    ScalarField3D J2_printed;  ///< higher-order part term by term as printed
    ScalarField3D rho_w;       ///< (rho_bar Bhat w)^L
};

/// J1 = -rho_bar* int_0^z [DBhat*(d_t Theta^L) + Bhat* div v^L] + rho_bar* (int_0^z Bhat*) (int_0^1 Bhat* div v^L).
inline ScalarField3D J1_linear(const ScalarField3D& d_theta_L, const HVectorField3D& v_L, const Equilibrium& eq) {
    const auto& g = v_L.grid();
    const ScalarField3D dv = div_h(v_L);
    ScalarField3D J1 = vertical_cumulative_integral(DBhat_equilibrium(eq, d_theta_L) + dv * eq.bhat_star) *
                       -eq.rho_bar_star;
    Profile cumB(g.nz);
    column::cumulative(eq.bhat_star, g.hz(), cumB);
    J1 += lift(apply_I1(dv, eq) * eq.rho_bar_star) * cumB;
    return J1;
}

inline ScalarField3D J2_printed(const LagrangianState& ls, const ScalarField3D& d_theta_L, const Equilibrium& eq) {
    const LagrangianCalculus calc = ls.calculus();
    const ScalarField3D theta = ls.theta_L + eq.theta_star;
    const ScalarField3D dB = delta_Bhat(ls.theta_L, eq);
    const ScalarField3D B = dB + eq.bhat_star;
    const ScalarField2D rb = ls.rho_bar_L + eq.rho_bar_star;
    const HVectorField3D u = ls.v_L - lift(b_L(ls, eq));
    const ScalarField3D div_u = div_h(u);
    const ScalarField3D metric_u = calc.div(u) - div_u;  // grad u : (Z^T - I)
    const ScalarField3D Zu_grad_theta = dot(calc.apply(u), grad_h(ls.theta_L));

    ScalarField3D integrand = B * (dot(u, lift(calc.grad(ls.rho_bar_L))) + rb * metric_u);
    integrand += eq.bhat_star * (ls.rho_bar_L * div_u);
    integrand += dB * (ls.rho_bar_L * div_u);
    integrand += dB * div_u * eq.rho_bar_star;
    ScalarField3D bracket = div_h(ls.v_L) - dot(frechet_DBhat(theta, grad_h(ls.theta_L)), ls.v_L);
    bracket += dB * div_h(ls.v_L);  // printed as dBhat grad v^L
    integrand += bracket * eq.bhat_star * eq.rho_bar_star;
    integrand += ls.rho_bar_L * frechet_DBhat(theta, d_theta_L + Zu_grad_theta);
    integrand += frechet_DBhat(theta, Zu_grad_theta) * eq.rho_bar_star;
    return vertical_cumulative_integral(integrand) * -1.0;
}

inline WSplit wL_and_J_split(const LagrangianState& ls, const Tendencies& dL, const Equilibrium& eq) {
    const Tendencies dE = eulerian_tendencies(ls, dL, eq);
    WSplit out;
    out.rho_w = vertical_velocity(ls.at_characteristics(eq), dE.d_theta, ls.calculus()).rho_w;
    out.J1 = J1_linear(dL.d_theta, ls.v_L, eq);
    out.J2 = out.rho_w - out.J1;
    out.J2_printed = J2_printed(ls, dL.d_theta, eq);
    return out;
}

// ---------------------------------------------------------------------------
// Linear left-hand side and remainders

/// Discretization of the linear temperature row.
enum class LinearForm {
    /// exact linearization of the discrete recast equation about the equilibrium;
    /// the remainder is then quadratic on every grid
    Discrete,
    /// the continuous form L[d_t T] - ..., whose vertical nonlocal part is the
    /// rank-one L used by the linear operator; differs from Discrete by O(hz^2)
    Projected,
};

inline const char* to_string(LinearForm f) { return f == LinearForm::Discrete ? "discrete" : "projected"; }

inline LinearForm linear_form_from_string(const std::string& s) {
    if (s == "discrete") return LinearForm::Discrete;
    if (s == "projected") return LinearForm::Projected;
    throw ConfigError("unknown linear form '" + s + "' (expected discrete or projected)");
}

/// Linear left-hand sides applied to (u, d_t u); row 3 in the chosen form.
inline Residuals linear_lhs(const LinearState& u, const LinearState& du, const Equilibrium& eq, const Physics& ph,
                            LinearForm form = LinearForm::Discrete) {
    const LinearOperator op(eq, ph);
    Residuals r;
    r.rho_bar = du.xi + apply_I1(div_h(u.V), eq) * eq.rho_bar_star;
    r.v = du.V - op.lame(u.V);
    r.v += lift(grad_h(u.xi)) * (eq.theta_star / eq.rho_bar_star);
    r.v += apply_Acal(u.T, eq);
    if (form == LinearForm::Projected) {
        r.theta = apply_L(du.T, eq) - op.heat(u.T) + temperature_coupling(u.V, eq);
    } else {
        const ScalarField3D J1 = J1_linear(du.T, u.V, eq);
        r.theta = du.T + div_h(u.V) * eq.theta_star;
        r.theta += dz(J1 * eq.alpha) * eq.theta_star;
        r.theta -= op.heat(u.T);
    }
    return r;
}

/// Rows 2 and 3 of a recast-system quantity divided by rho*.
inline Residuals normalize_rows(Residuals r, const Equilibrium& eq) {
    r.v = r.v * eq.alpha;
    r.theta = r.theta * eq.alpha;
    return r;
}

inline Residuals subtract(Residuals a, const Residuals& b) {
    a.rho_bar -= b.rho_bar;
    a.v -= b.v;
    a.theta -= b.theta;
    return a;
}

/// f = linear left-hand side - transformed recast equation.
inline Residuals remainders(const LagrangianState& ls, const Tendencies& dL, const Equilibrium& eq, const Physics& ph,
                            LinearForm form = LinearForm::Discrete) {
    return subtract(linear_lhs(ls.perturbation(), as_linear(dL), eq, ph, form),
                    normalize_rows(transformed_residual(ls, dL, eq, ph), eq));
}

/// Linear left-hand side minus f minus the transformed sources: the residual of
/// the transformed system (zero for exact transformed solutions).
inline Residuals residual_lagrangian_system(const LagrangianState& ls, const Tendencies& dL, const Equilibrium& eq,
                                            const Physics& ph, const Sources& src_L = {},
                                            LinearForm form = LinearForm::Discrete) {
    Residuals r = subtract(linear_lhs(ls.perturbation(), as_linear(dL), eq, ph, form), remainders(ls, dL, eq, ph, form));
    if (src_L.rho_bar) r.rho_bar -= *src_L.rho_bar;
    if (src_L.v) r.v -= *src_L.v * eq.alpha;
    if (src_L.theta) r.theta -= *src_L.theta * eq.alpha;
    return r;
}

// ---------------------------------------------------------------------------
// Term audit

struct AuditEntry {
    std::string label;
    double termwise = 0.0;      ///< max norm of the printed block
    double definitional = 0.0;  ///< max norm of the defining block
    double discrepancy = 0.0;
    double lower_order_part = 0.0;  ///< O(eps) + O(eps^2) part of the discrepancy
    double cubic_part = 0.0;        ///< O(eps^3) part of the discrepancy
    double tolerance = 0.0;
    bool flagged = false;
};

struct RemainderAudit {
    double amplitude = 0.0;
    std::vector<AuditEntry> entries;

    bool any_flagged() const {
        return std::any_of(entries.begin(), entries.end(), [](const AuditEntry& e) { return e.flagged; });
    }
    const AuditEntry& at(const std::string& label) const {
        for (const auto& e : entries)
            if (e.label == label) return e;
        throw Error("audit: no entry " + label);
    }
    std::vector<std::string> warnings() const {
        std::vector<std::string> w;
        for (const auto& e : entries)
            if (e.flagged)
                w.push_back("transcription audit: " + e.label + " differs from its definition by " +
                            format_g(e.discrepancy) + " (tolerance " + format_g(e.tolerance) + ")");
        return w;
    }
    nlohmann::json to_json() const {
        nlohmann::json j = nlohmann::json::object();
        for (const auto& e : entries)
            j[e.label] = {{"discrepancy", e.discrepancy},
                          {"termwise", e.termwise},
                          {"definitional", e.definitional},
                          {"lower_order_part", e.lower_order_part},
                          {"cubic_part", e.cubic_part},
                          {"tolerance", e.tolerance},
                          {"flagged", e.flagged}};
        return j;
    }
};

namespace detail {

/// H[k][l] = d_k d_l f.
template <int Dim>
std::array<std::array<ScalarField<Dim>, 2>, 2> hessian(const ScalarField<Dim>& f) {
    const auto g = grad_h(f);
    const auto gx = grad_h(g.x);
    const auto gy = grad_h(g.y);
    return {{{gx.x, gx.y}, {gy.x, gy.y}}};
}

/// Printed second-order metric sums for the Laplacian of a scalar:
/// sum d_k d_l f (Z_kj - delta_kj) Z_lj + sum d_k d_l f (Z_lk - delta_lk) + sum Z_lj d_k f d_l Z_kj.
inline ScalarField3D laplacian_metric_sums(const ScalarField3D& f, const Matrix2Field& Z) {
    const auto H = hessian(f);
    const auto G = grad_h(f);
    const ScalarField3D* Gk[2] = {&G.x, &G.y};
    ScalarField3D out(f.grid());
    for (int k = 0; k < 2; ++k)
        for (int l = 0; l < 2; ++l) {
            for (int j = 0; j < 2; ++j) out += H[k][l] * ((Z(k, j) - (k == j ? 1.0 : 0.0)) * Z(l, j));
            out += H[k][l] * (Z(l, k) - (l == k ? 1.0 : 0.0));
        }
    for (int j = 0; j < 2; ++j)
        for (int k = 0; k < 2; ++k) {
            const auto dZ = grad_h(Z(k, j));
            out += *Gk[k] * (Z(0, j) * dZ.x + Z(1, j) * dZ.y);
        }
    return out;
}

inline double max_norm(const ScalarField2D& f) { return f.max_abs(); }
inline double max_norm(const ScalarField3D& f) { return f.max_abs(); }
inline double max_norm(const HVectorField3D& f) { return f.max_abs(); }

}  // namespace detail

namespace detail {

/// Printed and defining remainder blocks at one state.
inline std::vector<AuditEntry> audit_blocks(const LagrangianState& ls, const Tendencies& dL, const Equilibrium& eq,
                                            const Physics& ph) {
    const auto& g = ls.grid();
    const LagrangianCalculus calc = ls.calculus();
    const Matrix2Field& Z = ls.Z;
    const double rs = eq.rho_bar_star, ts = eq.theta_star;
    const Profile& alpha = eq.alpha;
    Profile inv_bhat(g.nz);
    for (int k = 0; k < g.nz; ++k) inv_bhat[k] = 1.0 / eq.bhat_star[k];

    const State sX = ls.at_characteristics(eq);
    const ScalarField3D& theta = sX.theta;
    const ScalarField2D& rb = sX.rho_bar;
    const ScalarField2D& xi = ls.rho_bar_L;
    const HVectorField3D& v = ls.v_L;
    const ScalarField3D& T = ls.theta_L;
    const ScalarField3D dB = delta_Bhat(T, eq);
    const ScalarField3D B = dB + eq.bhat_star;
    const ScalarField3D rho = rb * B;
    const ScalarField3D p = rho * theta;
    const HVectorField2D b = b_L(ls, eq);
    const HVectorField3D u = v - lift(b);
    const HVectorField3D Zu = calc.apply(u);
    const WSplit ws = wL_and_J_split(ls, dL, eq);
    const ScalarField3D w = divide_guarded(ws.rho_w, rho, "audit");
    const ScalarField3D ratio = rho * alpha;  // rho / rho*

    std::vector<AuditEntry> out;
    auto add = [&](const std::string& label, const auto& termwise, const auto& definitional) {
        AuditEntry e;
        e.label = label;
        e.termwise = max_norm(termwise);
        e.definitional = max_norm(definitional);
        e.discrepancy = max_norm(termwise - definitional);
        out.push_back(std::move(e));
    };

    // ---- vertical mass flux
    add("w.J2", ws.J2_printed, ws.J2);

    // ---- f1
    {
        const ScalarField2D div_b = div_h(b);
        ScalarField3D flux_int = dot(frechet_DBhat(theta, grad_h(T)), v) + dB * div_h(v);
        add("f1.flux", vertical_mean(flux_int) * -1.0, (apply_I1(div_h(v), eq) - div_b) * rs);
        add("f1.density", xi * div_b * -1.0, xi * div_b * -1.0);
        ScalarField2D metric(g);
        const auto Jb = jacobian_h(b);
        for (int j = 0; j < 2; ++j)
            for (int k = 0; k < 2; ++k) metric += Jb.d[j][k] * (Z(k, j) - (k == j ? 1.0 : 0.0));
        add("f1.metric", rb * metric * -1.0, rb * (calc.div(b) - div_b) * -1.0);
    }

    // ---- f2
    {
        const ScalarField3D coef = xi * dB * alpha + lift(xi * (1.0 / rs)) + dB * inv_bhat;
        add("f2.time", coef * dL.d_v * -1.0, (1.0 - ratio) * dL.d_v);
        const HVectorField3D adv_y = advect(EulerianCalculus{}, Zu, v);
        add("f2.advection", ratio * adv_y * -1.0, ratio * adv_y * -1.0);
        add("f2.vertical", (ws.rho_w * alpha) * dz(v, VerticalBC::Neumann) * -1.0,
            ratio * w * dz(v, VerticalBC::Neumann) * -1.0);

        HVectorField3D mu_t(detail::laplacian_metric_sums(v.x, Z), detail::laplacian_metric_sums(v.y, Z));
        add("f2.viscous.mu-block", mu_t * alpha * ph.mu,
            (calc.lap(v) - HVectorField3D(laplacian_h(v.x), laplacian_h(v.y))) * alpha * ph.mu);

        // printed: sum_{l,k,j} d_k d_l v_j (Z_li - d_li) Z_kj + sum_{k,l} d_k d_l v_l (Z_li - d_li)
        //          + sum_{j,k,l} Z_li d_k v_j d_l Z_kj
        const auto Hx = detail::hessian(v.x);
        const auto Hy = detail::hessian(v.y);
        const decltype(Hx)* H[2] = {&Hx, &Hy};
        const auto Jv = jacobian_h(v);
        HVectorField3D mp(g);
        ScalarField3D* mpi[2] = {&mp.x, &mp.y};
        for (int i = 0; i < 2; ++i)
            for (int l = 0; l < 2; ++l) {
                const ScalarField2D zli = Z(l, i) - (l == i ? 1.0 : 0.0);
                for (int k = 0; k < 2; ++k) {
                    for (int j = 0; j < 2; ++j) {
                        *mpi[i] += (*H[j])[k][l] * (zli * Z(k, j));
                        const auto dZ = grad_h(Z(k, j));
                        *mpi[i] += Jv.d[j][k] * (Z(l, i) * (l == 0 ? dZ.x : dZ.y));
                    }
                    *mpi[i] += (*H[l])[k][l] * zli;
                }
            }
        add("f2.viscous.muprime-block", mp * alpha * ph.mu_prime,
            (calc.grad_div(v) - grad_h_div_h(v)) * alpha * ph.mu_prime);

        // pressure
        const HVectorField2D gxi = grad_h(xi);
        const HVectorField2D Zm_gxi = calc.apply(gxi) - gxi;  // (Z - I) grad rho_bar^L
        const HVectorField3D ZT_gxi = lift(calc.transpose_apply(gxi));
        const HVectorField3D gT = grad_h(T);
        const HVectorField3D ZT_gT = calc.transpose_apply(gT);
        const HVectorField3D Zm_gT = calc.apply(gT) - gT;
        HVectorField3D P = lift(Zm_gxi) * (-ts / rs);
        P -= (dB * T * alpha) * ZT_gxi;
        P -= (dB * alpha * ts) * ZT_gxi;
        P -= (T * (1.0 / rs)) * ZT_gxi;
        HVectorField3D arg = Zm_gT;
        arg += (xi * T * alpha) * ZT_gT;
        arg += (xi * alpha * ts) * ZT_gT;
        arg += (T * inv_bhat) * ZT_gT;
        P -= frechet_DBhat(theta, arg);
        P -= dB * gT;
        P -= Zm_gT;
        P -= (xi * dB * alpha) * ZT_gT;
        P -= (xi * (1.0 / rs)) * ZT_gT;
        P -= (dB * inv_bhat) * ZT_gT;
        HVectorField3D Pd = lift(gxi) * (ts / rs) + apply_Acal(T, eq);
        Pd -= calc.grad(p) * alpha;
        add("f2.pressure", P, Pd);
    }

    // ---- f3
    {
        const ScalarField3D coef = xi * dB * alpha + lift(xi * (1.0 / rs)) + dB * inv_bhat;
        add("f3.time", coef * dL.d_theta * -1.0, (1.0 - ratio) * dL.d_theta);
        const ScalarField3D adv_y = dot(Zu, grad_h(T));
        add("f3.advection", ratio * adv_y * -1.0, ratio * adv_y * -1.0);
        add("f3.diffusion", detail::laplacian_metric_sums(T, Z) * alpha * ph.kappa,
            (calc.lap(T) - laplacian_h(T)) * alpha * ph.kappa);
        const ScalarField3D dzT = dz(T, VerticalBC::Neumann);
        add("f3.vertical-advection", ws.rho_w * dzT * alpha * -1.0, ratio * w * dzT * -1.0);

        const ScalarField3D dzT_n = dz(T);
        ScalarField3D vw = dzT_n * ws.J1 + (dzT_n + (ts + 1.0)) * ws.J2 + dz(ws.J2) * ts + T * dz(ws.J1);
        add("f3.vertical-work", vw * alpha * -1.0, dz(ws.J1 * alpha) * ts - p * dz(w) * alpha);

        const ScalarField3D dv_y = div_h(v);
        const ScalarField3D dv_E = calc.div(v);
        ScalarField3D c2 = xi * T * (1.0 / rs) + dB * xi * T * alpha + T + dB * ts * (1.0 / rs) + dB * T * inv_bhat +
                           dB * xi * alpha * ts + lift(xi * (ts / rs));
        add("f3.divergence-work", (dv_E - dv_y) * -ts - c2 * dv_E, dv_y * ts - p * dv_E * alpha);
        add("f3.dissipation", ScalarField3D(g), dissipation(v, ph, calc) * alpha);
    }
    return out;
}

}  // namespace detail

/// Evaluates each printed remainder block against the corresponding block of
/// the definition at the given state and at 1/2 and 1/4 of its amplitude
/// (perturbation, tendencies and Z - I scaled).  The discrepancy is fitted as
/// d(s) = L + Q + C with parts linear, quadratic and cubic in s; a block is
/// flagged when |L| + |Q| exceeds ten times the cubic fit |C| plus
/// hz^2 max|block|.
inline RemainderAudit audit_remainders(const LagrangianState& ls, const Tendencies& dL, const Equilibrium& eq,
                                       const Physics& ph) {
    const auto& g = ls.grid();
    auto scaled = [&](double f) {
        LagrangianState s = ls;
        s.rho_bar_L *= f;
        s.v_L *= f;
        s.theta_L *= f;
        Matrix2Field d = ls.Z.minus_identity();
        for (auto& row : d.m)
            for (auto& e : row) e *= f;
        s.Z = Matrix2Field::identity(g) + d;
        return detail::audit_blocks(s, Tendencies{dL.d_rho_bar * f, dL.d_v * f, dL.d_theta * f}, eq, ph);
    };

    RemainderAudit audit;
    audit.amplitude = ls.amplitude();
    audit.entries = detail::audit_blocks(ls, dL, eq, ph);
    const auto e2 = scaled(0.5), e4 = scaled(0.25);
    Eigen::Matrix3d M;
    M << 1.0, 1.0, 1.0, 0.5, 0.25, 0.125, 0.25, 0.0625, 0.015625;
    const Eigen::PartialPivLU<Eigen::Matrix3d> lu(M);
    const double h2 = g.hz() * g.hz();
    for (std::size_t n = 0; n < audit.entries.size(); ++n) {
        auto& e = audit.entries[n];
        const Eigen::Vector3d fit = lu.solve(Eigen::Vector3d(e.discrepancy, e2[n].discrepancy, e4[n].discrepancy));
        e.lower_order_part = std::abs(fit[0]) + std::abs(fit[1]);
        e.cubic_part = std::abs(fit[2]);
        e.tolerance = 10.0 * e.cubic_part + h2 * std::max(e.termwise, e.definitional) + 1e-13;
        e.flagged = e.lower_order_part > e.tolerance;
    }
    return audit;
}

}  // namespace cpe
