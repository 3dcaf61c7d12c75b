#pragma once

#include <cmath>
#include <complex>
#include <cstddef>
#include <numbers>
#include <span>
#include <vector>

#include "sinc/error.hpp"

namespace sinc::spectral {

using cplx = std::complex<double>;

// Mixed-radix decimation-in-time FFT for arbitrary lengths. Small prime factors
// (2, 3, 4, 5) get dedicated butterflies; any other prime factor p falls back to
// an O(p^2) generic butterfly, so prime lengths degrade to a direct DFT.
class FftPlan {
public:
    explicit FftPlan(std::size_t n) : n_(n) {
        require(n >= 1, ErrorKind::invalid_input, "fft length must be positive");
        twiddles_.resize(n);
        for (std::size_t k = 0; k < n; ++k) {
            const double phase = -2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(n);
            twiddles_[k] = cplx(std::cos(phase), std::sin(phase));
        }
        std::size_t rest = n;
        for (std::size_t p : {4u, 2u, 3u, 5u}) {
            while (rest % p == 0) {
                factors_.push_back(p);
                rest /= p;
            }
        }
        for (std::size_t p = 7; p * p <= rest; p += 2) {
            while (rest % p == 0) {
                factors_.push_back(p);
                rest /= p;
            }
        }
        if (rest > 1) factors_.push_back(rest);
    }

    std::size_t size() const noexcept { return n_; }

    /// Forward transform, X[k] = sum_n x[n] exp(-2 pi i k n / N).
    void forward(std::span<const cplx> in, std::span<cplx> out) const {
        require(in.size() == n_ && out.size() == n_, ErrorKind::invalid_shape, "fft buffer size mismatch");
        if (n_ == 1) {
            out[0] = in[0];
            return;
        }
        std::vector<cplx> scratch(n_);
        recurse(in.data(), 1, out.data(), 0, 1, scratch.data());
    }

    std::vector<cplx> forward(std::span<const cplx> in) const {
        std::vector<cplx> out(n_);
        forward(in, out);
        return out;
    }

    /// Forward transform of a real sequence zero-padded to N.
    std::vector<cplx> forward_real(std::span<const double> x) const {
        require(x.size() <= n_, ErrorKind::invalid_shape, "real input longer than fft length");
        std::vector<cplx> in(n_, cplx(0.0, 0.0));
        for (std::size_t i = 0; i < x.size(); ++i) in[i] = cplx(x[i], 0.0);
        return forward(in);
    }

private:
    // Kiss-style recursion: `stage` indexes factors_, `fstride` is the product
    // of the factors already consumed.
    void recurse(const cplx* in, std::size_t in_stride, cplx* out, std::size_t stage, std::size_t fstride,
                 cplx* scratch) const {
        const std::size_t p = factors_[stage];
        const std::size_t m = n_ / (fstride * p);
        if (m == 1) {
            for (std::size_t q = 0; q < p; ++q) out[q] = in[q * in_stride * fstride];
        } else {
            for (std::size_t q = 0; q < p; ++q) {
                recurse(in + q * in_stride * fstride, in_stride, out + q * m, stage + 1, fstride * p, scratch);
            }
        }
        butterfly(out, m, p, fstride, scratch);
    }

    void butterfly(cplx* out, std::size_t m, std::size_t p, std::size_t fstride, cplx* scratch) const {
        const cplx* tw = twiddles_.data();
        if (p == 2) {
            for (std::size_t k = 0; k < m; ++k) {
                const cplx t = out[k + m] * tw[k * fstride];
                out[k + m] = out[k] - t;
                out[k] += t;
            }
            return;
        }
        if (p == 4) {
            for (std::size_t k = 0; k < m; ++k) {
                const cplx a0 = out[k];
                const cplx a1 = out[k + m] * tw[k * fstride];
                const cplx a2 = out[k + 2 * m] * tw[2 * k * fstride];
                const cplx a3 = out[k + 3 * m] * tw[3 * k * fstride];
                const cplx s02 = a0 + a2, d02 = a0 - a2;
                const cplx s13 = a1 + a3, d13 = a1 - a3;
                const cplx jd13(d13.imag(), -d13.real());  // -i * d13
                out[k] = s02 + s13;
                out[k + m] = d02 + jd13;
                out[k + 2 * m] = s02 - s13;
                out[k + 3 * m] = d02 - jd13;
            }
            return;
        }
        if (p == 3) {
            const double s3 = tw[fstride * m].imag();  // sin(-2 pi / 3)
            for (std::size_t k = 0; k < m; ++k) {
                const cplx a1 = out[k + m] * tw[k * fstride];
                const cplx a2 = out[k + 2 * m] * tw[2 * k * fstride];
                const cplx sum = a1 + a2, dif = (a1 - a2) * s3;
                const cplx mid = out[k] - 0.5 * sum;
                out[k] += sum;
                out[k + m] = cplx(mid.real() - dif.imag(), mid.imag() + dif.real());
                out[k + 2 * m] = cplx(mid.real() + dif.imag(), mid.imag() - dif.real());
            }
            return;
        }
        if (p == 5) {
            const cplx ya = tw[fstride * m], yb = tw[2 * fstride * m];
            for (std::size_t k = 0; k < m; ++k) {
                const cplx a0 = out[k];
                const cplx a1 = out[k + m] * tw[k * fstride];
                const cplx a2 = out[k + 2 * m] * tw[2 * k * fstride];
                const cplx a3 = out[k + 3 * m] * tw[3 * k * fstride];
                const cplx a4 = out[k + 4 * m] * tw[4 * k * fstride];
                const cplx s14 = a1 + a4, d14 = a1 - a4, s23 = a2 + a3, d23 = a2 - a3;
                out[k] = a0 + s14 + s23;
                const cplx r1 = a0 + s14 * ya.real() + s23 * yb.real();
                const cplx i1(d14.imag() * ya.imag() + d23.imag() * yb.imag(),
                              -d14.real() * ya.imag() - d23.real() * yb.imag());
                out[k + m] = r1 - i1;
                out[k + 4 * m] = r1 + i1;
                const cplx r2 = a0 + s14 * yb.real() + s23 * ya.real();
                const cplx i2(-d14.imag() * yb.imag() + d23.imag() * ya.imag(),
                              d14.real() * yb.imag() - d23.real() * ya.imag());
                out[k + 2 * m] = r2 + i2;
                out[k + 3 * m] = r2 - i2;
            }
            return;
        }
        // Generic radix-p butterfly.
        const std::size_t step = fstride * m;  // n_ / p
        for (std::size_t k = 0; k < m; ++k) {
            for (std::size_t q = 0; q < p; ++q) scratch[q] = out[k + q * m] * tw[(q * k * fstride) % n_];
            for (std::size_t s = 0; s < p; ++s) {
                cplx acc = scratch[0];
                std::size_t idx = 0;
                const std::size_t inc = (s * step) % n_;
                for (std::size_t q = 1; q < p; ++q) {
                    idx += inc;
                    if (idx >= n_) idx -= n_;
                    acc += scratch[q] * tw[idx];
                }
                out[k + s * m] = acc;
            }
        }
    }

    std::size_t n_;
    std::vector<cplx> twiddles_;
    std::vector<std::size_t> factors_;
};

// Real-input transform of even length N through one complex transform of
// length N/2 on the even/odd interleaved samples. Odd lengths fall back to a
// full complex transform.
class RealFftPlan {
public:
    explicit RealFftPlan(std::size_t n) : n_(n), half_(n % 2 == 0 ? n / 2 : n) {
        require(n >= 1, ErrorKind::invalid_input, "fft length must be positive");
        if (n % 2 == 0) {
            twiddles_.resize(n / 2 + 1);
            for (std::size_t k = 0; k <= n / 2; ++k) {
                const double phase = -2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(n);
                twiddles_[k] = cplx(std::cos(phase), std::sin(phase));
            }
        }
    }

    std::size_t size() const noexcept { return n_; }

    /// All N bins of the transform of `x` zero-padded to N.
    std::vector<cplx> forward(std::span<const double> x) const {
        require(x.size() <= n_, ErrorKind::invalid_shape, "real input longer than fft length");
        if (n_ % 2 != 0) return half_.forward_real(x);
        const std::size_t m = n_ / 2;
        std::vector<cplx> z(m, cplx(0.0, 0.0));
        for (std::size_t i = 0; i < x.size(); ++i) {
            if (i % 2 == 0) z[i / 2].real(x[i]);
            else z[i / 2].imag(x[i]);
        }
        const std::vector<cplx> Z = half_.forward(z);
        std::vector<cplx> X(n_);
        for (std::size_t k = 0; k <= m; ++k) {
            const cplx a = Z[k % m], b = std::conj(Z[(m - k) % m]);
            const cplx even = 0.5 * (a + b);
            const cplx odd = cplx(0.0, -0.5) * (a - b);
            X[k] = even + twiddles_[k] * odd;
        }
        for (std::size_t k = m + 1; k < n_; ++k) X[k] = std::conj(X[n_ - k]);
        return X;
    }

private:
    std::size_t n_;
    FftPlan half_;
    std::vector<cplx> twiddles_;
};

}  // namespace sinc::spectral
