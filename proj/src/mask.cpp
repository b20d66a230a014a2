#include "mptc/mask.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "mptc/errors.hpp"
#include "mptc/rng.hpp"

namespace mptc {

MaskTensor::MaskTensor(Shape shape, std::vector<std::uint8_t> bits, double sampling_rate, std::uint64_t seed)
    : shape_(shape), bits_(std::move(bits)), sampling_rate_(sampling_rate), seed_(seed) {
    if (bits_.size() != shape_.size()) {
        throw ShapeMismatch("mask bit count does not match " + shape_.str());
    }
}

MaskTensor MaskTensor::full(Shape shape) {
    return MaskTensor(shape, std::vector<std::uint8_t>(shape.size(), 1), 1.0, 0);
}

MaskTensor MaskTensor::from_tensor(const Tensor3& t) {
    std::vector<std::uint8_t> bits(t.size());
    for (std::size_t i = 0; i < t.size(); ++i) bits[i] = t[i] != 0.0 ? 1 : 0;
    const auto kept = static_cast<double>(std::count(bits.begin(), bits.end(), 1));
    return MaskTensor(t.shape(), std::move(bits), kept / static_cast<double>(t.size()), 0);
}

std::size_t MaskTensor::count() const {
    return static_cast<std::size_t>(std::count(bits_.begin(), bits_.end(), 1));
}

std::uint64_t MaskTensor::checksum() const {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (auto b : bits_) {
        h ^= b;
        h *= 0x100000001b3ULL;
    }
    return h;
}

Tensor3 MaskTensor::as_tensor() const {
    Tensor3 t(shape_);
    for (std::size_t i = 0; i < bits_.size(); ++i) t[i] = bits_[i] ? 1.0 : 0.0;
    return t;
}

Tensor3 apply_mask(const Tensor3& t, const MaskTensor& m) {
    require_same_shape(t.shape(), m.shape(), "apply_mask");
    Tensor3 out(t.shape());
    for (std::size_t i = 0; i < t.size(); ++i) {
        if (m.observed(i)) out[i] = t[i];
    }
    return out;
}

std::size_t retained_count(double sr, std::size_t n) {
    return static_cast<std::size_t>(std::llround(sr * static_cast<double>(n)));
}

MaskTensor gen_mask(std::size_t height, std::size_t width, std::size_t channels, double sr, std::uint64_t seed) {
    if (!(sr > 0.0 && sr <= 1.0)) {
        throw BadRate("sampling rate must lie in (0, 1], got " + std::to_string(sr));
    }
    const Shape shape{height, width, channels};
    if (shape.size() == 0) throw InvalidArgument("mask dimensions must be positive");

    const std::size_t n = shape.size();
    const std::size_t keep = std::min(retained_count(sr, n), n);
    std::vector<std::uint64_t> perm(n);
    std::iota(perm.begin(), perm.end(), std::uint64_t{0});
    SplitMix64 rng(seed);
    for (std::size_t i = 0; i < keep; ++i) {
        const std::size_t j = i + static_cast<std::size_t>(rng.below(n - i));
        std::swap(perm[i], perm[j]);
    }
    std::vector<std::uint8_t> bits(n, 0);
    for (std::size_t i = 0; i < keep; ++i) bits[perm[i]] = 1;
    return MaskTensor(shape, std::move(bits), sr, seed);
}

}  // namespace mptc
