#pragma once

// Horizontal characteristics X(t, y) of the averaged velocity b:
//
//   d_t X = b(t, X),  X(0) = id,   d_t grad X = (grad b)(t, X) grad X,
//   Z = (grad X)^{-1} = Cof(grad X)^T / det grad X.
//
// X is stored as the periodic displacement X - id.

#include <cmath>
#include <functional>
#include <vector>

#include <json.hpp>

#include "cpe/calculus.hpp"
#include "cpe/errors.hpp"
#include "cpe/interpolate.hpp"
#include "cpe/spectral.hpp"

namespace cpe {

/// Eulerian b as a function of time.
using BField = std::function<HVectorField2D(double)>;

struct FlowMap {
    GridSpec grid;
    std::vector<double> times;
    std::vector<HVectorField2D> disp;  ///< X - id
    std::vector<Matrix2Field> gradX;
    std::vector<Matrix2Field> Z;

    std::size_t size() const { return times.size(); }

    static FlowMap identity(const GridSpec& g, const std::vector<double>& times) {
        FlowMap f;
        f.grid = g;
        f.times = times;
        for (std::size_t n = 0; n < times.size(); ++n) {
            f.disp.emplace_back(g);
            f.gradX.push_back(Matrix2Field::identity(g));
            f.Z.push_back(Matrix2Field::identity(g));
        }
        return f;
    }

    /// Index of a stored time (exact match up to 1e-12).
    std::size_t index_of(double t) const {
        for (std::size_t n = 0; n < times.size(); ++n)
            if (std::abs(times[n] - t) <= 1e-12 * (1.0 + std::abs(t))) return n;
        throw Error("FlowMap: time " + std::to_string(t) + " is not a stored sample");
    }

    /// Positions X(t_n, y) at the grid nodes, row-major.
    std::vector<Point2> positions(std::size_t n) const {
        std::vector<Point2> p(grid.size2());
        for (int i = 0; i < grid.nx; ++i)
            for (int j = 0; j < grid.ny; ++j)
                p[static_cast<std::size_t>(i) * grid.ny + j] = {grid.x(i) + disp[n].x(i, j), grid.y(j) + disp[n].y(i, j)};
        return p;
    }
};

// ---------------------------------------------------------------------------

inline ScalarField2D determinant(const Matrix2Field& A) { return A(0, 0) * A(1, 1) - A(0, 1) * A(1, 0); }

/// Z = (det)^{-1} Cof^T, nodewise.
inline Matrix2Field inverse_jacobian(const Matrix2Field& gradX, double threshold = kPositivityGuard) {
    const auto& g = gradX.grid();
    const ScalarField2D det = determinant(gradX);
    for (std::size_t n = 0; n < det.size(); ++n)
        if (!(det[n] >= threshold))
            throw DegeneracyError("inverse_jacobian: det grad X = " + std::to_string(det[n]) + " below threshold at node " +
                                  std::to_string(n));
    Matrix2Field Z;
    Z.m[0][0] = ScalarField2D(g);
    Z.m[0][1] = ScalarField2D(g);
    Z.m[1][0] = ScalarField2D(g);
    Z.m[1][1] = ScalarField2D(g);
    for (std::size_t n = 0; n < det.size(); ++n) {
        const double inv = 1.0 / det[n];
        Z.m[0][0][n] = gradX.m[1][1][n] * inv;
        Z.m[0][1][n] = -gradX.m[0][1][n] * inv;
        Z.m[1][0][n] = -gradX.m[1][0][n] * inv;
        Z.m[1][1][n] = gradX.m[0][0][n] * inv;
    }
    return Z;
}

inline Matrix2Field matmul(const Matrix2Field& A, const Matrix2Field& B) {
    Matrix2Field C;
    for (int r = 0; r < 2; ++r)
        for (int c = 0; c < 2; ++c) C.m[r][c] = A(r, 0) * B(0, c) + A(r, 1) * B(1, c);
    return C;
}

/// Spectral Jacobian of a horizontal vector field as a matrix field, J(r, c) = d_c v_r.
inline Matrix2Field jacobian_matrix(const HVectorField2D& v) {
    const auto J = jacobian_h(v);
    Matrix2Field M;
    for (int r = 0; r < 2; ++r)
        for (int c = 0; c < 2; ++c) M.m[r][c] = J.d[r][c];
    return M;
}

// ---------------------------------------------------------------------------
// Integration

namespace detail {

struct FlowNodeState {
    std::vector<double> X, Y;           // absolute positions (unwrapped)
    std::vector<double> F[2][2];        // grad X entries
};

inline FlowNodeState flow_rhs(const GridSpec& g, const HVectorField2D& b, const Matrix2Field& Jb, const FlowNodeState& s) {
    const std::size_t N = g.size2();
    FlowNodeState d;
    d.X.resize(N);
    d.Y.resize(N);
    for (auto& row : d.F)
        for (auto& e : row) e.resize(N);
    for (std::size_t n = 0; n < N; ++n) {
        const InterpStencil st(g, Point2{s.X[n], s.Y[n]});
        d.X[n] = st.apply(b.x);
        d.Y[n] = st.apply(b.y);
        double jb[2][2];
        for (int r = 0; r < 2; ++r)
            for (int c = 0; c < 2; ++c) jb[r][c] = st.apply(Jb(r, c));
        for (int r = 0; r < 2; ++r)
            for (int c = 0; c < 2; ++c) d.F[r][c][n] = jb[r][0] * s.F[0][c][n] + jb[r][1] * s.F[1][c][n];
    }
    return d;
}

inline FlowNodeState axpy(const FlowNodeState& s, double a, const FlowNodeState& d) {
    FlowNodeState out = s;
    for (std::size_t n = 0; n < s.X.size(); ++n) {
        out.X[n] += a * d.X[n];
        out.Y[n] += a * d.Y[n];
        for (int r = 0; r < 2; ++r)
            for (int c = 0; c < 2; ++c) out.F[r][c][n] += a * d.F[r][c][n];
    }
    return out;
}

}  // namespace detail

/// Classical RK4 for X and grad X with periodic interpolation of b and grad b.
/// `substeps` RK4 steps are taken between consecutive output times.
inline FlowMap integrate_flow(const GridSpec& g, const BField& b, const std::vector<double>& times, int substeps = 1) {
    if (times.empty()) throw ConfigError("integrate_flow: no output times");
    if (substeps < 1) throw ConfigError("integrate_flow: substeps must be >= 1");
    const std::size_t N = g.size2();
    detail::FlowNodeState s;
    s.X.resize(N);
    s.Y.resize(N);
    for (auto& row : s.F)
        for (auto& e : row) e.assign(N, 0.0);
    for (int i = 0; i < g.nx; ++i)
        for (int j = 0; j < g.ny; ++j) {
            const std::size_t n = static_cast<std::size_t>(i) * g.ny + j;
            s.X[n] = g.x(i);
            s.Y[n] = g.y(j);
            s.F[0][0][n] = 1.0;
            s.F[1][1][n] = 1.0;
        }

    FlowMap out;
    out.grid = g;
    auto record = [&](double t) {
        HVectorField2D d(g);
        Matrix2Field F;
        for (int r = 0; r < 2; ++r)
            for (int c = 0; c < 2; ++c) F.m[r][c] = ScalarField2D(g);
        for (int i = 0; i < g.nx; ++i)
            for (int j = 0; j < g.ny; ++j) {
                const std::size_t n = static_cast<std::size_t>(i) * g.ny + j;
                d.x(i, j) = s.X[n] - g.x(i);
                d.y(i, j) = s.Y[n] - g.y(j);
                for (int r = 0; r < 2; ++r)
                    for (int c = 0; c < 2; ++c) F.m[r][c][n] = s.F[r][c][n];
            }
        if (!d.all_finite()) throw ConvergenceError("integrate_flow: non-finite flow map");
        out.times.push_back(t);
        out.disp.push_back(std::move(d));
        out.Z.push_back(inverse_jacobian(F));
        out.gradX.push_back(std::move(F));
    };

    auto eval = [&](double t, const detail::FlowNodeState& st) {
        const HVectorField2D bt = b(t);
        if (!bt.all_finite()) throw Error("integrate_flow: b contains non-finite values");
        return detail::flow_rhs(g, bt, jacobian_matrix(bt), st);
    };

    double t = times.front();
    record(t);
    for (std::size_t k = 1; k < times.size(); ++k) {
        const double H = (times[k] - times[k - 1]) / substeps;
        for (int m = 0; m < substeps; ++m) {
            const auto k1 = eval(t, s);
            const auto k2 = eval(t + 0.5 * H, detail::axpy(s, 0.5 * H, k1));
            const auto k3 = eval(t + 0.5 * H, detail::axpy(s, 0.5 * H, k2));
            const auto k4 = eval(t + H, detail::axpy(s, H, k3));
            s = detail::axpy(s, H / 6.0, k1);
            s = detail::axpy(s, H / 3.0, k2);
            s = detail::axpy(s, H / 3.0, k3);
            s = detail::axpy(s, H / 6.0, k4);
            t += H;
        }
        t = times[k];
        record(t);
    }
    return out;
}

/// Time series of b with linear interpolation between samples.
inline FlowMap integrate_flow(const GridSpec& g, const std::vector<HVectorField2D>& b_series,
                              const std::vector<double>& times) {
    if (b_series.size() != times.size()) throw ConfigError("integrate_flow: series and times differ in length");
    BField b = [&](double t) {
        std::size_t k = 0;
        while (k + 2 < times.size() && t > times[k + 1]) ++k;
        if (times.size() == 1) return b_series[0];
        const double s = (t - times[k]) / (times[k + 1] - times[k]);
        return b_series[k] * (1.0 - s) + b_series[k + 1] * s;
    };
    return integrate_flow(g, b, times, 1);
}

/// Flow from b already composed with X (b^L(t, y) = b(t, X(t, y))): X and grad X
/// are time integrals at fixed y, evaluated with the trapezoid rule in time.
inline FlowMap integrate_flow_lagrangian(const GridSpec& g, const std::vector<HVectorField2D>& bL,
                                         const std::vector<double>& times) {
    if (bL.size() != times.size() || times.empty())
        throw ConfigError("integrate_flow_lagrangian: series and times differ in length");
    FlowMap out;
    out.grid = g;
    HVectorField2D d(g);
    Matrix2Field F = Matrix2Field::identity(g);
    Matrix2Field Jprev = jacobian_matrix(bL[0]);
    for (std::size_t n = 0; n < times.size(); ++n) {
        if (n > 0) {
            const double h = 0.5 * (times[n] - times[n - 1]);
            d += (bL[n - 1] + bL[n]) * h;
            const Matrix2Field J = jacobian_matrix(bL[n]);
            for (int r = 0; r < 2; ++r)
                for (int c = 0; c < 2; ++c) F.m[r][c] += (Jprev(r, c) + J(r, c)) * h;
            Jprev = J;
        }
        if (!d.all_finite()) throw ConvergenceError("integrate_flow_lagrangian: non-finite flow map");
        out.times.push_back(times[n]);
        out.disp.push_back(d);
        out.gradX.push_back(F);
        out.Z.push_back(inverse_jacobian(F));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Regime report

struct FlowRegimeReport {
    double sup_gradX_dev = 0.0;      ///< sup_t max_y |grad X - I| (Frobenius)
    double sup_gradX_dev_w1 = 0.0;   ///< with first derivatives (W^{1,inf} proxy)
    double sup_Z_dev = 0.0;          ///< sup_t max_y |Z - I|
    double sup_dZ = 0.0;             ///< sup_t max_y |d Z_lj / d y_k|
    double max_Z_gradX_defect = 0.0; ///< max |Z grad X - I|
    double min_det = 1.0;
    bool in_regime = true;           ///< |grad X - I| <= 1/2
    double scaling_constant = 0.0;   ///< sup |grad X - I| / (sqrt(tau) eps)

    nlohmann::json to_json() const {
        return {{"sup_gradX_dev", sup_gradX_dev}, {"sup_gradX_dev_w1", sup_gradX_dev_w1}, {"sup_Z_dev", sup_Z_dev},
                {"sup_dZ", sup_dZ},               {"max_Z_gradX_defect", max_Z_gradX_defect},
                {"min_det", min_det},             {"in_regime", in_regime},
                {"scaling_constant", scaling_constant}};
    }
};

inline double frobenius_max(const Matrix2Field& A) {
    double s = 0.0;
    for (std::size_t n = 0; n < A(0, 0).size(); ++n) {
        double f = 0.0;
        for (int r = 0; r < 2; ++r)
            for (int c = 0; c < 2; ++c) f += A(r, c)[n] * A(r, c)[n];
        s = std::max(s, std::sqrt(f));
    }
    return s;
}

inline FlowRegimeReport flow_regime_report(const FlowMap& flow, double eps, double tau) {
    FlowRegimeReport rep;
    for (std::size_t n = 0; n < flow.size(); ++n) {
        const Matrix2Field D = flow.gradX[n].minus_identity();
        const double dev = frobenius_max(D);
        double w1 = dev;
        double dz = 0.0;
        for (int r = 0; r < 2; ++r)
            for (int c = 0; c < 2; ++c) {
                const auto gd = grad_h(D(r, c));
                w1 = std::max(w1, std::max(gd.x.max_abs(), gd.y.max_abs()));
                const auto gz = grad_h(flow.Z[n](r, c));
                dz = std::max(dz, std::max(gz.x.max_abs(), gz.y.max_abs()));
            }
        rep.sup_gradX_dev = std::max(rep.sup_gradX_dev, dev);
        rep.sup_gradX_dev_w1 = std::max(rep.sup_gradX_dev_w1, w1);
        rep.sup_Z_dev = std::max(rep.sup_Z_dev, frobenius_max(flow.Z[n].minus_identity()));
        rep.sup_dZ = std::max(rep.sup_dZ, dz);
        rep.max_Z_gradX_defect =
            std::max(rep.max_Z_gradX_defect, matmul(flow.Z[n], flow.gradX[n]).minus_identity().max_abs());
        rep.min_det = std::min(rep.min_det, determinant(flow.gradX[n]).min());
    }
    rep.in_regime = rep.sup_gradX_dev <= 0.5;
    if (eps > 0.0 && tau > 0.0) rep.scaling_constant = rep.sup_gradX_dev / (std::sqrt(tau) * eps);
    return rep;
}

// ---------------------------------------------------------------------------
// Composition

/// Precomputed interpolation stencils for a set of points.
class Composer {
public:
    Composer(const GridSpec& g, const std::vector<Point2>& points) : g_(g) {
        st_.reserve(points.size());
        for (const auto& p : points) st_.emplace_back(g, p);
    }

    ScalarField2D operator()(const ScalarField2D& f) const {
        if (!f.all_finite()) throw Error("compose: field contains non-finite values");
        ScalarField2D out(g_);
        for (std::size_t n = 0; n < st_.size(); ++n) out[n] = st_[n].apply(f);
        return out;
    }
    ScalarField3D operator()(const ScalarField3D& f) const {
        if (!f.all_finite()) throw Error("compose: field contains non-finite values");
        ScalarField3D out(g_);
        for (std::size_t n = 0; n < st_.size(); ++n) {
            auto col = out.column(n);
            for (int k = 0; k < g_.nz; ++k) col[k] = st_[n].apply(f, k);
        }
        return out;
    }
    template <int Dim>
    HVectorField<Dim> operator()(const HVectorField<Dim>& v) const {
        return {(*this)(v.x), (*this)(v.y)};
    }

private:
    GridSpec g_;
    std::vector<InterpStencil> st_;
};

/// f o X(t_n).
template <class F>
F pullback(const F& f, const FlowMap& flow, std::size_t n) {
    return Composer(flow.grid, flow.positions(n))(f);
}

/// Displacement of Y = X^{-1} at the grid nodes, by the fixed-point iteration
/// y <- y - damping (X(y) - x); a contraction when |grad X - I| <= 1/2.
inline HVectorField2D inverse_map(const FlowMap& flow, std::size_t n, double tol = 1e-10, int max_iter = 200,
                                  double damping = 1.0) {
    const GridSpec& g = flow.grid;
    const auto& d = flow.disp[n];
    HVectorField2D out(g);
    for (int i = 0; i < g.nx; ++i)
        for (int j = 0; j < g.ny; ++j) {
            const double tx = g.x(i), ty = g.y(j);
            double yx = tx - d.x(i, j), yy = ty - d.y(i, j);
            bool ok = false;
            for (int it = 0; it < max_iter; ++it) {
                const InterpStencil st(g, Point2{yx, yy});
                const double rx = yx + st.apply(d.x) - tx;
                const double ry = yy + st.apply(d.y) - ty;
                if (std::hypot(rx, ry) <= tol) {
                    ok = true;
                    break;
                }
                yx -= damping * rx;
                yy -= damping * ry;
            }
            if (!ok)
                throw RegimeError("flow", "(" + std::to_string(i) + "," + std::to_string(j) + ")", 0.0,
                                  "inverse_map: fixed-point inversion did not converge");
            out.x(i, j) = yx - tx;
            out.y(i, j) = yy - ty;
        }
    return out;
}

inline std::vector<Point2> map_points(const GridSpec& g, const HVectorField2D& disp) {
    std::vector<Point2> p(g.size2());
    for (int i = 0; i < g.nx; ++i)
        for (int j = 0; j < g.ny; ++j)
            p[static_cast<std::size_t>(i) * g.ny + j] = {g.x(i) + disp.x(i, j), g.y(j) + disp.y(i, j)};
    return p;
}

/// f^L o Y(t_n).
template <class F>
F pushforward(const F& fL, const FlowMap& flow, std::size_t n) {
    return Composer(flow.grid, map_points(flow.grid, inverse_map(flow, n)))(fL);
}

}  // namespace cpe
