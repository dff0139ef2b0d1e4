#pragma once

// Vertical operators on the uniform node layout z_k = k/(nz-1):
// trapezoid quadrature, second-order differences, ghost-node reflection for
// the Neumann condition d/dz f = 0 at z = 0, 1.

#include <span>

#include "cpe/grid.hpp"
#include "cpe/spectral.hpp"

namespace cpe {

enum class VerticalBC {
    /// One-sided second-order differences at the end points.
    None,
    /// Field satisfies d/dz f = 0 at z = 0, 1 (ghost reflection).
    Neumann,
};

namespace column {

/// out[k] = int_0^{z_k} f (trapezoid), out[0] = 0 exactly.
inline void cumulative(std::span<const double> f, double h, std::span<double> out) {
    out[0] = 0.0;
    for (std::size_t k = 1; k < f.size(); ++k) out[k] = out[k - 1] + 0.5 * h * (f[k - 1] + f[k]);
}

inline double integral(std::span<const double> f, double h) {
    double s = 0.5 * (f.front() + f.back());
    for (std::size_t k = 1; k + 1 < f.size(); ++k) s += f[k];
    return s * h;
}

inline void dz(std::span<const double> f, double h, VerticalBC bc, std::span<double> out) {
    const std::size_t n = f.size();
    for (std::size_t k = 1; k + 1 < n; ++k) out[k] = (f[k + 1] - f[k - 1]) / (2.0 * h);
    if (bc == VerticalBC::Neumann) {
        out[0] = 0.0;
        out[n - 1] = 0.0;
    } else {
        out[0] = (-3.0 * f[0] + 4.0 * f[1] - f[2]) / (2.0 * h);
        out[n - 1] = (3.0 * f[n - 1] - 4.0 * f[n - 2] + f[n - 3]) / (2.0 * h);
    }
}

/// Second derivative with ghost-node reflection f_{-1} = f_1, f_{n} = f_{n-2}.
inline void dzz_neumann(std::span<const double> f, double h, std::span<double> out) {
    const std::size_t n = f.size();
    const double ih2 = 1.0 / (h * h);
    out[0] = 2.0 * (f[1] - f[0]) * ih2;
    for (std::size_t k = 1; k + 1 < n; ++k) out[k] = (f[k + 1] - 2.0 * f[k] + f[k - 1]) * ih2;
    out[n - 1] = 2.0 * (f[n - 2] - f[n - 1]) * ih2;
}

}  // namespace column

inline ScalarField3D vertical_cumulative_integral(const ScalarField3D& f) {
    const auto& g = f.grid();
    ScalarField3D out(g);
    for (std::size_t c = 0; c < g.size2(); ++c) column::cumulative(f.column(c), g.hz(), out.column(c));
    return out;
}

inline ScalarField2D vertical_mean(const ScalarField3D& f) {
    const auto& g = f.grid();
    ScalarField2D out(g);
    for (std::size_t c = 0; c < g.size2(); ++c) out[c] = column::integral(f.column(c), g.hz());
    return out;
}

inline HVectorField2D vertical_mean(const HVectorField3D& v) { return {vertical_mean(v.x), vertical_mean(v.y)}; }

/// Value of a 3D field at level k as a 2D field.
inline ScalarField2D level(const ScalarField3D& f, int k) {
    const auto& g = f.grid();
    ScalarField2D out(g);
    for (std::size_t c = 0; c < g.size2(); ++c) out[c] = f.column(c)[k];
    return out;
}

inline ScalarField3D dz(const ScalarField3D& f, VerticalBC bc = VerticalBC::None) {
    const auto& g = f.grid();
    ScalarField3D out(g);
    for (std::size_t c = 0; c < g.size2(); ++c) column::dz(f.column(c), g.hz(), bc, out.column(c));
    return out;
}

inline HVectorField3D dz(const HVectorField3D& v, VerticalBC bc = VerticalBC::None) {
    return {dz(v.x, bc), dz(v.y, bc)};
}

inline ScalarField3D dzz(const ScalarField3D& f) {
    const auto& g = f.grid();
    ScalarField3D out(g);
    for (std::size_t c = 0; c < g.size2(); ++c) column::dzz_neumann(f.column(c), g.hz(), out.column(c));
    return out;
}

/// Delta = Delta_H + d_zz with the Neumann condition at z = 0, 1.
inline ScalarField3D laplacian3(const ScalarField3D& f) { return laplacian_h(f) + dzz(f); }

inline HVectorField3D laplacian3(const HVectorField3D& v) { return {laplacian3(v.x), laplacian3(v.y)}; }

/// One-sided second-order d/dz at the two end points, max over columns.
/// Used to monitor the discrete Neumann condition along trajectories.
inline double boundary_dz_max(const ScalarField3D& f) {
    const auto& g = f.grid();
    const int n = g.nz;
    const double h = g.hz();
    double m = 0.0;
    for (std::size_t c = 0; c < g.size2(); ++c) {
        auto col = f.column(c);
        m = std::max(m, std::abs((-3.0 * col[0] + 4.0 * col[1] - col[2]) / (2.0 * h)));
        m = std::max(m, std::abs((3.0 * col[n - 1] - 4.0 * col[n - 2] + col[n - 3]) / (2.0 * h)));
    }
    return m;
}

}  // namespace cpe
