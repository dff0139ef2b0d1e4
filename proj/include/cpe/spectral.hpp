#pragma once

// Horizontal Fourier calculus on the periodic unit torus.
//
// Each horizontal level is transformed with a real-to-complex FFT.  The
// Nyquist wavenumber is treated as zero in every derivative multiplier, so
// div_h(grad_h f) == laplacian_h(f) holds mode by mode.

#include <fftw3.h>

#include <complex>
#include <map>
#include <memory>
#include <mutex>
#include <utility>
#include <vector>

#include "cpe/grid.hpp"

namespace cpe {

using cplx = std::complex<double>;

class Fft2 {
public:
    Fft2(int nx, int ny) : nx_(nx), ny_(ny), nyh_(ny / 2 + 1) {
        rbuf_ = fftw_alloc_real(static_cast<std::size_t>(nx) * ny);
        cbuf_ = fftw_alloc_complex(static_cast<std::size_t>(nx) * nyh_);
        fwd_ = fftw_plan_dft_r2c_2d(nx, ny, rbuf_, cbuf_, FFTW_ESTIMATE);
        bwd_ = fftw_plan_dft_c2r_2d(nx, ny, cbuf_, rbuf_, FFTW_ESTIMATE);
    }
    ~Fft2() {
        for (auto& [l, b] : batches_) {
            fftw_destroy_plan(b.fwd);
            fftw_destroy_plan(b.bwd);
        }
        fftw_destroy_plan(fwd_);
        fftw_destroy_plan(bwd_);
        fftw_free(rbuf_);
        fftw_free(cbuf_);
    }
    Fft2(const Fft2&) = delete;
    Fft2& operator=(const Fft2&) = delete;

    int nx() const { return nx_; }
    int ny() const { return ny_; }
    int nyh() const { return nyh_; }
    std::size_t modes() const { return static_cast<std::size_t>(nx_) * nyh_; }

    /// Signed integer mode index along x for row i of the spectrum.
    int mode_x(int i) const { return i <= nx_ / 2 ? i : i - nx_; }
    int mode_y(int j) const { return j; }

    /// Angular wavenumbers used by derivative multipliers (Nyquist -> 0).
    double kx(int i) const { return i == nx_ / 2 ? 0.0 : 2.0 * M_PI * mode_x(i); }
    double ky(int j) const { return j == ny_ / 2 ? 0.0 : 2.0 * M_PI * mode_y(j); }
    double ksq(int i, int j) const { return kx(i) * kx(i) + ky(j) * ky(j); }

    /// Batched transforms of `levels` interleaved planes: plane k starts at
    /// offset k and has stride `levels` (the column-contiguous layout of a 3D field).
    void forward(const double* in, int levels, cplx* out) {
        fftw_execute_dft_r2c(batch(levels).fwd, const_cast<double*>(in), reinterpret_cast<fftw_complex*>(out));
    }

    /// Normalized inverse of forward; `in` is left untouched.
    void inverse(const cplx* in, int levels, double* out) {
        scratch_.assign(in, in + modes() * levels);
        fftw_execute_dft_c2r(batch(levels).bwd, reinterpret_cast<fftw_complex*>(scratch_.data()), out);
        const std::size_t n = static_cast<std::size_t>(nx_) * ny_;
        const double scale = 1.0 / static_cast<double>(n);
        for (std::size_t p = 0; p < n * levels; ++p) out[p] *= scale;
    }

private:
    struct Batch {
        fftw_plan fwd = nullptr, bwd = nullptr;
    };

    Batch& batch(int levels) {
        auto& b = batches_[levels];
        if (!b.fwd) {
            const std::size_t n = static_cast<std::size_t>(nx_) * ny_ * levels;
            std::vector<double> r(n);
            std::vector<cplx> c(modes() * levels);
            const int dims[2] = {nx_, ny_};
            const unsigned flags = FFTW_ESTIMATE | FFTW_UNALIGNED;
            auto* cp = reinterpret_cast<fftw_complex*>(c.data());
            b.fwd = fftw_plan_many_dft_r2c(2, dims, levels, r.data(), nullptr, levels, 1, cp, nullptr, 1,
                                           static_cast<int>(modes()), flags);
            b.bwd = fftw_plan_many_dft_c2r(2, dims, levels, cp, nullptr, 1, static_cast<int>(modes()), r.data(),
                                           nullptr, levels, 1, flags);
        }
        return b;
    }

    int nx_, ny_, nyh_;
    double* rbuf_;
    fftw_complex* cbuf_;
    fftw_plan fwd_, bwd_;
    std::map<int, Batch> batches_;
    std::vector<cplx> scratch_;
};

/// Shared transform object for a horizontal resolution.
inline Fft2& fft_for(int nx, int ny) {
    static std::mutex m;
    static std::map<std::pair<int, int>, std::unique_ptr<Fft2>> cache;
    std::lock_guard<std::mutex> lock(m);
    auto& slot = cache[{nx, ny}];
    if (!slot) slot = std::make_unique<Fft2>(nx, ny);
    return *slot;
}

/// Level-wise Fourier coefficients of a 2D (one level) or 3D (nz levels) field.
struct Spectrum {
    GridSpec grid;
    int levels = 1;
    std::vector<cplx> coeff;  // level-major: [level][i][j]

    cplx& at(int level, int i, int j) {
        return coeff[(static_cast<std::size_t>(level) * grid.nx + i) * (grid.ny / 2 + 1) + j];
    }
    cplx at(int level, int i, int j) const {
        return coeff[(static_cast<std::size_t>(level) * grid.nx + i) * (grid.ny / 2 + 1) + j];
    }
};

template <int Dim>
Spectrum to_spectrum(const ScalarField<Dim>& f) {
    const auto& g = f.grid();
    auto& fft = fft_for(g.nx, g.ny);
    Spectrum s{g, Dim == 2 ? 1 : g.nz, {}};
    s.coeff.resize(fft.modes() * s.levels);
    fft.forward(f.data(), s.levels, s.coeff.data());
    return s;
}

template <int Dim>
ScalarField<Dim> from_spectrum(const Spectrum& s) {
    const auto& g = s.grid;
    auto& fft = fft_for(g.nx, g.ny);
    ScalarField<Dim> out(g);
    fft.inverse(s.coeff.data(), s.levels, out.data());
    return out;
}

/// Multiply every mode by mult(i, j) (i, j are spectral array indices).
template <class Mult>
Spectrum multiply(Spectrum s, Mult&& mult) {
    auto& fft = fft_for(s.grid.nx, s.grid.ny);
    const std::size_t m = fft.modes();
    std::vector<cplx> k(m);
    for (int i = 0; i < s.grid.nx; ++i)
        for (int j = 0; j < fft.nyh(); ++j) k[static_cast<std::size_t>(i) * fft.nyh() + j] = mult(fft, i, j);
    for (int l = 0; l < s.levels; ++l) {
        cplx* c = s.coeff.data() + l * m;
        for (std::size_t n = 0; n < m; ++n) {
            const double a = c[n].real(), b = c[n].imag(), x = k[n].real(), y = k[n].imag();
            c[n] = cplx(a * x - b * y, a * y + b * x);
        }
    }
    return s;
}

namespace detail {
template <int Dim, class Mult>
ScalarField<Dim> apply_multiplier(const ScalarField<Dim>& f, Mult&& mult) {
    return from_spectrum<Dim>(multiply(to_spectrum(f), std::forward<Mult>(mult)));
}
inline cplx ikx(const Fft2& t, int i, int) { return {0.0, t.kx(i)}; }
inline cplx iky(const Fft2& t, int, int j) { return {0.0, t.ky(j)}; }
}  // namespace detail

template <int Dim>
ScalarField<Dim> dx(const ScalarField<Dim>& f) {
    return detail::apply_multiplier(f, detail::ikx);
}
template <int Dim>
ScalarField<Dim> dy(const ScalarField<Dim>& f) {
    return detail::apply_multiplier(f, detail::iky);
}

template <int Dim>
HVectorField<Dim> grad_h(const ScalarField<Dim>& f) {
    const Spectrum s = to_spectrum(f);
    return {from_spectrum<Dim>(multiply(s, detail::ikx)), from_spectrum<Dim>(multiply(s, detail::iky))};
}

template <int Dim>
ScalarField<Dim> div_h(const HVectorField<Dim>& v) {
    Spectrum a = multiply(to_spectrum(v.x), detail::ikx);
    const Spectrum b = multiply(to_spectrum(v.y), detail::iky);
    for (std::size_t n = 0; n < a.coeff.size(); ++n) a.coeff[n] += b.coeff[n];
    return from_spectrum<Dim>(a);
}

template <int Dim>
ScalarField<Dim> laplacian_h(const ScalarField<Dim>& f) {
    return detail::apply_multiplier(f, [](const Fft2& t, int i, int j) { return cplx(-t.ksq(i, j), 0.0); });
}

/// grad_h(div_h v) evaluated in spectral space.
template <int Dim>
HVectorField<Dim> grad_h_div_h(const HVectorField<Dim>& v) {
    Spectrum d = multiply(to_spectrum(v.x), detail::ikx);
    const Spectrum b = multiply(to_spectrum(v.y), detail::iky);
    for (std::size_t n = 0; n < d.coeff.size(); ++n) d.coeff[n] += b.coeff[n];
    return {from_spectrum<Dim>(multiply(d, detail::ikx)), from_spectrum<Dim>(multiply(d, detail::iky))};
}

/// 2/3-rule truncation: zero every mode with |m| > n/3 in either direction.
template <int Dim>
ScalarField<Dim> dealias(const ScalarField<Dim>& f) {
    return detail::apply_multiplier(f, [](const Fft2& t, int i, int j) {
        const bool keep = 3 * std::abs(t.mode_x(i)) <= t.nx() && 3 * std::abs(t.mode_y(j)) <= t.ny();
        return cplx(keep ? 1.0 : 0.0, 0.0);
    });
}

/// Jacobian of a horizontal vector field: J(r, c) = d v_r / d y_c.
template <int Dim>
struct HJacobian {
    ScalarField<Dim> d[2][2];
};

template <int Dim>
HJacobian<Dim> jacobian_h(const HVectorField<Dim>& v) {
    HJacobian<Dim> J;
    for (int r = 0; r < 2; ++r) {
        const Spectrum s = to_spectrum(v[r]);
        J.d[r][0] = from_spectrum<Dim>(multiply(s, detail::ikx));
        J.d[r][1] = from_spectrum<Dim>(multiply(s, detail::iky));
    }
    return J;
}

/// Horizontal Sobolev norm (sum over levels with trapezoid weights in z).
template <int Dim>
double sobolev_h_norm(const ScalarField<Dim>& f, double s_order) {
    const Spectrum s = to_spectrum(f);
    auto& fft = fft_for(f.grid().nx, f.grid().ny);
    const double n2 = static_cast<double>(f.grid().size2());
    std::vector<double> wz = Dim == 2 ? std::vector<double>{1.0} : f.grid().quadrature_weights();
    double acc = 0.0;
    for (int l = 0; l < s.levels; ++l)
        for (int i = 0; i < f.grid().nx; ++i)
            for (int j = 0; j < fft.nyh(); ++j) {
                const double mult = (j == 0 || 2 * j == f.grid().ny) ? 1.0 : 2.0;
                const double kk = 4.0 * M_PI * M_PI *
                                  (double(fft.mode_x(i)) * fft.mode_x(i) + double(fft.mode_y(j)) * fft.mode_y(j));
                acc += wz[l] * mult * std::pow(1.0 + kk, s_order) * std::norm(s.at(l, i, j)) / (n2 * n2);
            }
    return std::sqrt(acc);
}

}  // namespace cpe
