#pragma once

// Discretization of the layer T^2 x (0,1) and the sampled field containers.
//
// Horizontal directions are periodic with period 1 and nx (ny) uniform points
// x_i = i/nx.  The vertical direction carries nz uniform nodes z_k = k/(nz-1)
// that include both end points.  Storage is row-major over (i, j, k), so the
// vertical index is contiguous and a column is a contiguous span.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "cpe/errors.hpp"

namespace cpe {

enum class VerticalScheme { UniformTrapezoid };

struct GridSpec {
    int nx = 32;
    int ny = 32;
    int nz = 33;
    VerticalScheme vertical_scheme = VerticalScheme::UniformTrapezoid;
    /// Apply the 2/3 rule to products in explicit tendencies.
    bool dealias = false;

    GridSpec() = default;
    GridSpec(int nx_, int ny_, int nz_, bool dealias_ = false) : nx(nx_), ny(ny_), nz(nz_), dealias(dealias_) {
        validate();
    }

    void validate() const {
        if (nx < 4 || ny < 4 || nx % 2 != 0 || ny % 2 != 0)
            throw Error("GridSpec: nx, ny must be even and >= 4 (got " + std::to_string(nx) + ", " +
                        std::to_string(ny) + ")");
        if (nz < 3) throw Error("GridSpec: nz must be >= 3 (got " + std::to_string(nz) + ")");
    }

    double hx() const { return 1.0 / nx; }
    double hy() const { return 1.0 / ny; }
    double hz() const { return 1.0 / (nz - 1); }
    double x(int i) const { return i * hx(); }
    double y(int j) const { return j * hy(); }
    double z(int k) const { return k * hz(); }

    std::size_t size2() const { return static_cast<std::size_t>(nx) * ny; }
    std::size_t size3() const { return size2() * nz; }

    std::vector<double> z_nodes() const {
        std::vector<double> out(nz);
        for (int k = 0; k < nz; ++k) out[k] = z(k);
        return out;
    }

    /// Trapezoid weights on [0,1].
    std::vector<double> quadrature_weights() const {
        std::vector<double> w(nz, hz());
        w.front() *= 0.5;
        w.back() *= 0.5;
        return w;
    }

    bool same_shape(const GridSpec& o) const { return nx == o.nx && ny == o.ny && nz == o.nz; }
};

inline void require_same(const GridSpec& a, const GridSpec& b, const char* where) {
    if (!a.same_shape(b)) throw GridMismatch(std::string(where) + ": fields live on different grids");
}

/// Vertical profile sampled at the nz nodes (functions of z only).
using Profile = std::vector<double>;

/// Real samples of a scalar field.  Dim == 2 lives on T^2, Dim == 3 on the layer.
template <int Dim>
class ScalarField {
    static_assert(Dim == 2 || Dim == 3);

public:
    ScalarField() = default;
    explicit ScalarField(const GridSpec& g, double value = 0.0) : grid_(g), values_(count(g), value) {}

    template <class F>
    static ScalarField sample(const GridSpec& g, F&& f) {
        ScalarField out(g);
        if constexpr (Dim == 2) {
            for (int i = 0; i < g.nx; ++i)
                for (int j = 0; j < g.ny; ++j) out(i, j) = f(g.x(i), g.y(j));
        } else {
            for (int i = 0; i < g.nx; ++i)
                for (int j = 0; j < g.ny; ++j)
                    for (int k = 0; k < g.nz; ++k) out(i, j, k) = f(g.x(i), g.y(j), g.z(k));
        }
        return out;
    }

    const GridSpec& grid() const { return grid_; }
    std::size_t size() const { return values_.size(); }
    std::span<double> values() { return values_; }
    std::span<const double> values() const { return values_; }
    double* data() { return values_.data(); }
    const double* data() const { return values_.data(); }

    double& operator[](std::size_t n) { return values_[n]; }
    double operator[](std::size_t n) const { return values_[n]; }

    double& operator()(int i, int j) requires(Dim == 2) { return values_[static_cast<std::size_t>(i) * grid_.ny + j]; }
    double operator()(int i, int j) const requires(Dim == 2) {
        return values_[static_cast<std::size_t>(i) * grid_.ny + j];
    }
    double& operator()(int i, int j, int k) requires(Dim == 3) { return values_[index(i, j, k)]; }
    double operator()(int i, int j, int k) const requires(Dim == 3) { return values_[index(i, j, k)]; }

    std::size_t index(int i, int j, int k) const {
        return (static_cast<std::size_t>(i) * grid_.ny + j) * grid_.nz + k;
    }

    /// Contiguous vertical column at horizontal node c = i*ny + j.
    std::span<double> column(std::size_t c) requires(Dim == 3) {
        return {values_.data() + c * grid_.nz, static_cast<std::size_t>(grid_.nz)};
    }
    std::span<const double> column(std::size_t c) const requires(Dim == 3) {
        return {values_.data() + c * grid_.nz, static_cast<std::size_t>(grid_.nz)};
    }

    ScalarField& operator+=(const ScalarField& o) {
        check(o);
        for (std::size_t n = 0; n < values_.size(); ++n) values_[n] += o.values_[n];
        return *this;
    }
    ScalarField& operator-=(const ScalarField& o) {
        check(o);
        for (std::size_t n = 0; n < values_.size(); ++n) values_[n] -= o.values_[n];
        return *this;
    }
    ScalarField& operator*=(const ScalarField& o) {
        check(o);
        for (std::size_t n = 0; n < values_.size(); ++n) values_[n] *= o.values_[n];
        return *this;
    }
    ScalarField& operator*=(double s) {
        for (auto& v : values_) v *= s;
        return *this;
    }
    ScalarField& operator+=(double s) {
        for (auto& v : values_) v += s;
        return *this;
    }

    friend ScalarField operator+(ScalarField a, const ScalarField& b) { return a += b; }
    friend ScalarField operator-(ScalarField a, const ScalarField& b) { return a -= b; }
    friend ScalarField operator*(ScalarField a, const ScalarField& b) { return a *= b; }
    friend ScalarField operator*(ScalarField a, double s) { return a *= s; }
    friend ScalarField operator*(double s, ScalarField a) { return a *= s; }
    friend ScalarField operator+(ScalarField a, double s) { return a += s; }
    friend ScalarField operator-(ScalarField a, double s) { return a += -s; }
    friend ScalarField operator-(ScalarField a) { return a *= -1.0; }
    friend ScalarField operator-(double s, ScalarField a) { return (a *= -1.0) += s; }

    template <class F>
    ScalarField map(F&& f) const {
        ScalarField out(*this);
        for (auto& v : out.values_) v = f(v);
        return out;
    }

    double max_abs() const {
        double m = 0.0;
        for (double v : values_) m = std::max(m, std::abs(v));
        return m;
    }
    double min() const { return *std::min_element(values_.begin(), values_.end()); }
    double max() const { return *std::max_element(values_.begin(), values_.end()); }
    bool all_finite() const {
        return std::all_of(values_.begin(), values_.end(), [](double v) { return std::isfinite(v); });
    }

private:
    static std::size_t count(const GridSpec& g) { return Dim == 2 ? g.size2() : g.size3(); }
    void check(const ScalarField& o) const { require_same(grid_, o.grid_, "ScalarField arithmetic"); }

    GridSpec grid_;
    std::vector<double> values_;
};

using ScalarField2D = ScalarField<2>;
using ScalarField3D = ScalarField<3>;

/// Horizontal vector field with two components sharing one grid.
template <int Dim>
struct HVectorField {
    ScalarField<Dim> x;
    ScalarField<Dim> y;

    HVectorField() = default;
    explicit HVectorField(const GridSpec& g, double vx = 0.0, double vy = 0.0) : x(g, vx), y(g, vy) {}
    HVectorField(ScalarField<Dim> a, ScalarField<Dim> b) : x(std::move(a)), y(std::move(b)) {
        require_same(x.grid(), y.grid(), "HVectorField");
    }

    const GridSpec& grid() const { return x.grid(); }
    ScalarField<Dim>& operator[](int c) { return c == 0 ? x : y; }
    const ScalarField<Dim>& operator[](int c) const { return c == 0 ? x : y; }

    HVectorField& operator+=(const HVectorField& o) { x += o.x; y += o.y; return *this; }
    HVectorField& operator-=(const HVectorField& o) { x -= o.x; y -= o.y; return *this; }
    HVectorField& operator*=(double s) { x *= s; y *= s; return *this; }
    HVectorField& operator*=(const ScalarField<Dim>& s) { x *= s; y *= s; return *this; }
    friend HVectorField operator+(HVectorField a, const HVectorField& b) { return a += b; }
    friend HVectorField operator-(HVectorField a, const HVectorField& b) { return a -= b; }
    friend HVectorField operator*(HVectorField a, double s) { return a *= s; }
    friend HVectorField operator*(double s, HVectorField a) { return a *= s; }
    friend HVectorField operator*(HVectorField a, const ScalarField<Dim>& s) { return a *= s; }
    friend HVectorField operator*(const ScalarField<Dim>& s, HVectorField a) { return a *= s; }

    double max_abs() const { return std::max(x.max_abs(), y.max_abs()); }
    bool all_finite() const { return x.all_finite() && y.all_finite(); }
};

using HVectorField2D = HVectorField<2>;
using HVectorField3D = HVectorField<3>;

// ---------------------------------------------------------------------------
// Broadcasting helpers between 2D fields, vertical profiles and 3D fields.

/// Extend a 2D field constantly in z.
inline ScalarField3D lift(const ScalarField2D& f) {
    const GridSpec& g = f.grid();
    ScalarField3D out(g);
    for (std::size_t c = 0; c < g.size2(); ++c) {
        auto col = out.column(c);
        std::fill(col.begin(), col.end(), f[c]);
    }
    return out;
}

/// Field equal to the profile in every column.
inline ScalarField3D lift(const GridSpec& g, const Profile& p) {
    if (static_cast<int>(p.size()) != g.nz) throw GridMismatch("lift: profile length != nz");
    ScalarField3D out(g);
    for (std::size_t c = 0; c < g.size2(); ++c) std::copy(p.begin(), p.end(), out.column(c).begin());
    return out;
}

inline ScalarField3D operator*(ScalarField3D f, const Profile& p) {
    if (static_cast<int>(p.size()) != f.grid().nz) throw GridMismatch("profile product: length != nz");
    for (std::size_t c = 0; c < f.grid().size2(); ++c) {
        auto col = f.column(c);
        for (int k = 0; k < f.grid().nz; ++k) col[k] *= p[k];
    }
    return f;
}
inline ScalarField3D operator*(const Profile& p, ScalarField3D f) { return std::move(f) * p; }

inline ScalarField3D operator*(ScalarField3D f, const ScalarField2D& s) {
    if (f.grid().nx != s.grid().nx || f.grid().ny != s.grid().ny)
        throw GridMismatch("column product: fields live on different grids");
    for (std::size_t c = 0; c < f.grid().size2(); ++c)
        for (double& v : f.column(c)) v *= s[c];
    return f;
}
inline ScalarField3D operator*(const ScalarField2D& s, ScalarField3D f) { return std::move(f) * s; }

inline ScalarField3D operator+(ScalarField3D f, const Profile& p) {
    if (static_cast<int>(p.size()) != f.grid().nz) throw GridMismatch("profile sum: length != nz");
    for (std::size_t c = 0; c < f.grid().size2(); ++c) {
        auto col = f.column(c);
        for (int k = 0; k < f.grid().nz; ++k) col[k] += p[k];
    }
    return f;
}
inline ScalarField3D operator*(const ScalarField2D& s, const Profile& p) { return lift(s.grid(), p) * s; }

inline HVectorField3D operator*(HVectorField3D v, const Profile& p) {
    v.x = std::move(v.x) * p;
    v.y = std::move(v.y) * p;
    return v;
}

/// Elementwise quotient with the positivity guard on the denominator.
template <int Dim>
ScalarField<Dim> divide_guarded(const ScalarField<Dim>& num, const ScalarField<Dim>& den, const char* what) {
    require_same(num.grid(), den.grid(), what);
    ScalarField<Dim> out(num);
    for (std::size_t n = 0; n < out.size(); ++n) {
        if (std::abs(den[n]) < kPositivityGuard)
            throw DegeneracyError(std::string(what) + ": denominator below positivity guard at flat index " +
                                  std::to_string(n));
        out[n] = num[n] / den[n];
    }
    return out;
}

/// Discrete L2 norm with quadrature weights (area of T^2 is one).
inline double l2_norm(const ScalarField2D& f) {
    double s = 0.0;
    for (double v : f.values()) s += v * v;
    return std::sqrt(s / f.grid().size2());
}

inline double l2_norm(const ScalarField3D& f) {
    const auto& g = f.grid();
    const auto w = g.quadrature_weights();
    double s = 0.0;
    for (std::size_t c = 0; c < g.size2(); ++c) {
        auto col = f.column(c);
        for (int k = 0; k < g.nz; ++k) s += w[k] * col[k] * col[k];
    }
    return std::sqrt(s / g.size2());
}

template <int Dim>
double l2_norm(const HVectorField<Dim>& v) {
    const double a = l2_norm(v.x), b = l2_norm(v.y);
    return std::sqrt(a * a + b * b);
}

/// Horizontal mean of a 2D field, domain mean of a 3D field (trapezoid in z).
inline double domain_mean(const ScalarField2D& f) {
    double s = 0.0;
    for (double v : f.values()) s += v;
    return s / f.grid().size2();
}

inline double domain_integral(const ScalarField3D& f) {
    const auto& g = f.grid();
    const auto w = g.quadrature_weights();
    double s = 0.0;
    for (std::size_t c = 0; c < g.size2(); ++c) {
        auto col = f.column(c);
        for (int k = 0; k < g.nz; ++k) s += w[k] * col[k];
    }
    return s / g.size2();
}

}  // namespace cpe
