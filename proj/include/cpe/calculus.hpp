#pragma once

// Horizontal calculus policies.  Residual evaluators are templates over a
// policy so the same code evaluates the Eulerian equations on the Eulerian
// grid and, through the chain rule with Z = (grad X)^{-1}, the same equations
// in Lagrangian coordinates:
//
//   grad_E f = Z^T grad_y f,   div_E F = sum_{k,j} Z_kj d_k F_j,
//   Delta_E f = div_E grad_E f.

#include <array>

#include "cpe/spectral.hpp"

namespace cpe {

/// 2x2 matrix field on T^2, m[r][c].
struct Matrix2Field {
    std::array<std::array<ScalarField2D, 2>, 2> m;

    static Matrix2Field identity(const GridSpec& g) {
        Matrix2Field out;
        out.m[0][0] = ScalarField2D(g, 1.0);
        out.m[0][1] = ScalarField2D(g, 0.0);
        out.m[1][0] = ScalarField2D(g, 0.0);
        out.m[1][1] = ScalarField2D(g, 1.0);
        return out;
    }
    const GridSpec& grid() const { return m[0][0].grid(); }
    ScalarField2D& operator()(int r, int c) { return m[r][c]; }
    const ScalarField2D& operator()(int r, int c) const { return m[r][c]; }

    Matrix2Field minus_identity() const {
        Matrix2Field out = *this;
        out.m[0][0] += -1.0;
        out.m[1][1] += -1.0;
        return out;
    }
    Matrix2Field transpose() const {
        Matrix2Field out = *this;
        std::swap(out.m[0][1], out.m[1][0]);
        return out;
    }
    double max_abs() const {
        double s = 0.0;
        for (const auto& row : m)
            for (const auto& e : row) s = std::max(s, e.max_abs());
        return s;
    }
};

inline Matrix2Field operator+(const Matrix2Field& a, const Matrix2Field& b) {
    Matrix2Field out = a;
    for (int r = 0; r < 2; ++r)
        for (int c = 0; c < 2; ++c) out.m[r][c] += b.m[r][c];
    return out;
}
inline Matrix2Field operator-(const Matrix2Field& a, const Matrix2Field& b) {
    Matrix2Field out = a;
    for (int r = 0; r < 2; ++r)
        for (int c = 0; c < 2; ++c) out.m[r][c] -= b.m[r][c];
    return out;
}

/// Jacobian J[r][c] = d_c v_r in the frame of the policy.
template <int Dim>
using Jacobian = std::array<std::array<ScalarField<Dim>, 2>, 2>;

struct EulerianCalculus {
    template <int Dim>
    HVectorField<Dim> grad(const ScalarField<Dim>& f) const { return grad_h(f); }
    template <int Dim>
    ScalarField<Dim> div(const HVectorField<Dim>& v) const { return div_h(v); }
    ScalarField3D lap(const ScalarField3D& f) const { return laplacian_h(f); }
    HVectorField3D lap(const HVectorField3D& v) const { return {laplacian_h(v.x), laplacian_h(v.y)}; }
    HVectorField3D grad_div(const HVectorField3D& v) const { return grad_h_div_h(v); }
    template <int Dim>
    Jacobian<Dim> jacobian(const HVectorField<Dim>& v) const {
        auto J = jacobian_h(v);
        return {{{J.d[0][0], J.d[0][1]}, {J.d[1][0], J.d[1][1]}}};
    }
};

/// Chain-rule calculus at one time level of a flow map.
class LagrangianCalculus {
public:
    explicit LagrangianCalculus(Matrix2Field Z) : Z_(std::move(Z)) {}
    const Matrix2Field& Z() const { return Z_; }

    template <int Dim>
    HVectorField<Dim> grad(const ScalarField<Dim>& f) const {
        return transpose_apply(grad_h(f));
    }

    template <int Dim>
    ScalarField<Dim> div(const HVectorField<Dim>& v) const {
        const auto Jx = grad_h(v.x);
        const auto Jy = grad_h(v.y);
        // sum_k Z_k0 d_k v_0 + Z_k1 d_k v_1
        ScalarField<Dim> out = scaled(Jx.x, Z_(0, 0));
        out += scaled(Jx.y, Z_(1, 0));
        out += scaled(Jy.x, Z_(0, 1));
        out += scaled(Jy.y, Z_(1, 1));
        return out;
    }

    ScalarField3D lap(const ScalarField3D& f) const { return div(grad(f)); }
    HVectorField3D lap(const HVectorField3D& v) const { return {lap(v.x), lap(v.y)}; }
    HVectorField3D grad_div(const HVectorField3D& v) const { return grad(div(v)); }

    template <int Dim>
    Jacobian<Dim> jacobian(const HVectorField<Dim>& v) const {
        const auto a = grad(v.x);
        const auto b = grad(v.y);
        return {{{a.x, a.y}, {b.x, b.y}}};
    }

    /// (Z^T g)_j = sum_k Z_kj g_k
    template <int Dim>
    HVectorField<Dim> transpose_apply(const HVectorField<Dim>& g) const {
        HVectorField<Dim> out(scaled(g.x, Z_(0, 0)), scaled(g.x, Z_(0, 1)));
        out.x += scaled(g.y, Z_(1, 0));
        out.y += scaled(g.y, Z_(1, 1));
        return out;
    }

    /// (Z a)_k = sum_j Z_kj a_j
    template <int Dim>
    HVectorField<Dim> apply(const HVectorField<Dim>& a) const {
        HVectorField<Dim> out(scaled(a.x, Z_(0, 0)), scaled(a.x, Z_(1, 0)));
        out.x += scaled(a.y, Z_(0, 1));
        out.y += scaled(a.y, Z_(1, 1));
        return out;
    }

private:
    static ScalarField2D scaled(const ScalarField2D& f, const ScalarField2D& s) { return f * s; }
    static ScalarField3D scaled(const ScalarField3D& f, const ScalarField2D& s) { return f * s; }

    Matrix2Field Z_;
};

}  // namespace cpe
