#include "mptc/spectral.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <numbers>

#include "mptc/errors.hpp"

namespace mptc {

namespace {

using cplx = std::complex<double>;

// twiddle[m] = exp(sign * 2 pi i m / n), m in [0, n)
std::vector<cplx> twiddles(std::size_t n, double sign) {
    std::vector<cplx> w(n);
    for (std::size_t m = 0; m < n; ++m) {
        const double angle = sign * 2.0 * std::numbers::pi * static_cast<double>(m) / static_cast<double>(n);
        w[m] = {std::cos(angle), std::sin(angle)};
    }
    return w;
}

void check_tprod_shapes(const Tensor3& a, const Tensor3& b) {
    if (a.channels() != b.channels() || a.width() != b.height()) {
        throw ShapeMismatch("t-product of " + a.shape().str() + " and " + b.shape().str());
    }
}

using MatrixXcdRM = Eigen::Matrix<cplx, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

MatrixXcdRM gather_face(const SpectralTensor3& s, std::size_t k) {
    MatrixXcdRM m(s.height(), s.width());
    for (std::size_t h = 0; h < s.height(); ++h)
        for (std::size_t w = 0; w < s.width(); ++w) m(h, w) = s(h, w, k);
    return m;
}

}  // namespace

SpectralTensor3 dft_mode3(const Tensor3& t) {
    const std::size_t n = t.channels();
    const auto w = twiddles(n, -1.0);
    SpectralTensor3 out(t.shape(), true);
    auto dst = out.data();
    const auto src = t.data();
    for (std::size_t base = 0; base < src.size(); base += n) {
        for (std::size_t k = 0; k < n; ++k) {
            cplx acc{};
            for (std::size_t m = 0; m < n; ++m) acc += src[base + m] * w[(k * m) % n];
            dst[base + k] = acc;
        }
    }
    return out;
}

Tensor3 idft_mode3(const SpectralTensor3& s) {
    const std::size_t n = s.channels();
    const auto w = twiddles(n, 1.0);
    const double scale = 1.0 / static_cast<double>(n);
    Tensor3 out(s.shape());
    auto dst = out.data();
    const auto src = s.data();
    double real_sq = 0.0;
    double imag_sq = 0.0;
    for (std::size_t base = 0; base < src.size(); base += n) {
        for (std::size_t m = 0; m < n; ++m) {
            cplx acc{};
            for (std::size_t k = 0; k < n; ++k) acc += src[base + k] * w[(k * m) % n];
            acc *= scale;
            dst[base + m] = acc.real();
            real_sq += acc.real() * acc.real();
            imag_sq += acc.imag() * acc.imag();
        }
    }
    if (imag_sq > kImagTolerance * kImagTolerance * (real_sq + imag_sq)) {
        throw ResidualImaginary("imaginary residue " + std::to_string(std::sqrt(imag_sq)) +
                                " exceeds tolerance for a real result");
    }
    return out;
}

SpectralTensor3 facewise_product(const SpectralTensor3& a, Face op_a, const SpectralTensor3& b, Face op_b) {
    const std::size_t a_rows = op_a == Face::Plain ? a.height() : a.width();
    const std::size_t a_cols = op_a == Face::Plain ? a.width() : a.height();
    const std::size_t b_rows = op_b == Face::Plain ? b.height() : b.width();
    const std::size_t b_cols = op_b == Face::Plain ? b.width() : b.height();
    if (a.channels() != b.channels() || a_cols != b_rows) {
        throw ShapeMismatch("facewise product of " + a.shape().str() + " and " + b.shape().str());
    }
    const std::size_t n = a.channels();
    const bool symmetric = a.from_real() && b.from_real();
    SpectralTensor3 out(Shape{a_rows, b_cols, n}, symmetric);

    // With conjugate-symmetric operands only slices 0..n/2 need computing.
    const std::size_t last = symmetric ? n / 2 : n - 1;
    for (std::size_t k = 0; k <= last; ++k) {
        MatrixXcdRM fa = gather_face(a, k);
        MatrixXcdRM fb = gather_face(b, k);
        MatrixXcdRM prod;
        if (op_a == Face::Plain && op_b == Face::Plain) prod.noalias() = fa * fb;
        else if (op_a == Face::Adjoint && op_b == Face::Plain) prod.noalias() = fa.adjoint() * fb;
        else if (op_a == Face::Plain && op_b == Face::Adjoint) prod.noalias() = fa * fb.adjoint();
        else prod.noalias() = fa.adjoint() * fb.adjoint();
        for (std::size_t h = 0; h < a_rows; ++h) {
            for (std::size_t w = 0; w < b_cols; ++w) {
                out(h, w, k) = prod(h, w);
                if (symmetric && k != 0 && 2 * k != n) out(h, w, n - k) = std::conj(prod(h, w));
            }
        }
    }
    return out;
}

Tensor3 tprod(const Tensor3& a, const Tensor3& b) {
    check_tprod_shapes(a, b);
    return idft_mode3(facewise_product(dft_mode3(a), Face::Plain, dft_mode3(b), Face::Plain));
}

Tensor3 tprod_direct(const Tensor3& a, const Tensor3& b) {
    check_tprod_shapes(a, b);
    const std::size_t n = a.channels();
    Tensor3 out(Shape{a.height(), b.width(), n});
    for (std::size_t h = 0; h < a.height(); ++h) {
        for (std::size_t w = 0; w < b.width(); ++w) {
            for (std::size_t k = 0; k < a.width(); ++k) {
                for (std::size_t c = 0; c < n; ++c) {
                    double acc = 0.0;
                    for (std::size_t m = 0; m < n; ++m) acc += a(h, k, m) * b(k, w, (c + n - m) % n);
                    out(h, w, c) += acc;
                }
            }
        }
    }
    return out;
}

Tensor3 identity_tube(std::size_t r, std::size_t channels) {
    Tensor3 out(Shape{r, r, channels});
    for (std::size_t i = 0; i < r; ++i) out(i, i, 0) = 1.0;
    return out;
}

Tensor3 t_transpose(const Tensor3& t) {
    const std::size_t n = t.channels();
    Tensor3 out(Shape{t.width(), t.height(), n});
    for (std::size_t h = 0; h < t.height(); ++h)
        for (std::size_t w = 0; w < t.width(); ++w)
            for (std::size_t c = 0; c < n; ++c) out(w, h, (n - c) % n) = t(h, w, c);
    return out;
}

}  // namespace mptc
