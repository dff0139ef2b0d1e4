#pragma once

// Periodic horizontal interpolation with a 4x4 cubic Lagrange stencil
// (fourth order for smooth data, exact at grid nodes).

#include <array>
#include <cmath>
#include <span>
#include <vector>

#include "cpe/grid.hpp"

namespace cpe {

struct Point2 {
    double x = 0.0;
    double y = 0.0;
};

inline double wrap_unit(double s) {
    s -= std::floor(s);
    return s >= 1.0 ? 0.0 : s;
}

/// Precomputed stencil for one evaluation point.
struct InterpStencil {
    std::array<int, 4> ix{};
    std::array<int, 4> iy{};
    std::array<double, 4> wx{};
    std::array<double, 4> wy{};

    InterpStencil() = default;
    InterpStencil(const GridSpec& g, Point2 p) {
        if (!std::isfinite(p.x) || !std::isfinite(p.y)) throw Error("interpolate_h: non-finite evaluation point");
        setup(wrap_unit(p.x) * g.nx, g.nx, ix, wx);
        setup(wrap_unit(p.y) * g.ny, g.ny, iy, wy);
    }

    double apply(const ScalarField2D& f) const {
        double s = 0.0;
        for (int a = 0; a < 4; ++a) {
            double row = 0.0;
            for (int b = 0; b < 4; ++b) row += wy[b] * f(ix[a], iy[b]);
            s += wx[a] * row;
        }
        return s;
    }

    /// Interpolate level k of a 3D field.
    double apply(const ScalarField3D& f, int k) const {
        double s = 0.0;
        for (int a = 0; a < 4; ++a) {
            double row = 0.0;
            for (int b = 0; b < 4; ++b) row += wy[b] * f(ix[a], iy[b], k);
            s += wx[a] * row;
        }
        return s;
    }

private:
    static void setup(double s, int n, std::array<int, 4>& idx, std::array<double, 4>& w) {
        int i0 = static_cast<int>(std::floor(s));
        double t = s - i0;
        if (t < 1e-14) t = 0.0;
        for (int a = 0; a < 4; ++a) idx[a] = ((i0 - 1 + a) % n + n) % n;
        // Lagrange basis on nodes -1, 0, 1, 2.
        w[0] = -t * (t - 1.0) * (t - 2.0) / 6.0;
        w[1] = (t + 1.0) * (t - 1.0) * (t - 2.0) / 2.0;
        w[2] = -(t + 1.0) * t * (t - 2.0) / 2.0;
        w[3] = (t + 1.0) * t * (t - 1.0) / 6.0;
    }
};

inline std::vector<double> interpolate_h(const ScalarField2D& f, std::span<const Point2> points) {
    if (!f.all_finite()) throw Error("interpolate_h: field contains non-finite values");
    std::vector<double> out(points.size());
    for (std::size_t n = 0; n < points.size(); ++n) out[n] = InterpStencil(f.grid(), points[n]).apply(f);
    return out;
}

inline double interpolate_h(const ScalarField2D& f, Point2 p) { return InterpStencil(f.grid(), p).apply(f); }

}  // namespace cpe
