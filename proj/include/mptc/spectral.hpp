#pragma once

#include "mptc/tensor.hpp"

namespace mptc {

/// Unnormalized forward DFT of every mode-3 tube.
[[nodiscard]] SpectralTensor3 dft_mode3(const Tensor3& t);

/// Inverse of dft_mode3 (the 1/C factor lives here). Imaginary residue up to
/// kImagTolerance of the result's Frobenius norm is dropped; anything larger
/// throws ResidualImaginary.
[[nodiscard]] Tensor3 idft_mode3(const SpectralTensor3& s);

inline constexpr double kImagTolerance = 1e-9;

/// How a facewise operand enters the product: as is, or conjugate-transposed.
enum class Face { Plain, Adjoint };

/// Per-frequency matrix product op(a)_k * op(b)_k for every frontal slice k.
[[nodiscard]] SpectralTensor3 facewise_product(const SpectralTensor3& a, Face op_a,
                                               const SpectralTensor3& b, Face op_b);

/// t-product a * b of an H x r x C and an r x W x C tensor, computed as
/// facewise products in the mode-3 Fourier domain.
[[nodiscard]] Tensor3 tprod(const Tensor3& a, const Tensor3& b);

/// Block-circulant definition of the t-product: entry (h, w, :) is the sum
/// over k of circular convolutions of a(h, k, :) and b(k, w, :). O(H W r C^2);
/// reference path for tests and small problems.
[[nodiscard]] Tensor3 tprod_direct(const Tensor3& a, const Tensor3& b);

/// r x r x C identity: frontal slice 0 is the identity matrix, others zero.
[[nodiscard]] Tensor3 identity_tube(std::size_t r, std::size_t channels);

/// t-transpose: each frontal slice transposed, slices 1..C-1 reversed.
[[nodiscard]] Tensor3 t_transpose(const Tensor3& t);

}  // namespace mptc
