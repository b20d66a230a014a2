#include "mptc/tensor.hpp"

#include <algorithm>
#include <cmath>

#include "mptc/errors.hpp"

namespace mptc {

namespace {

void require_positive(const Shape& s) {
    if (s.height == 0 || s.width == 0 || s.channels == 0) {
        throw InvalidArgument("tensor dimensions must be positive, got " + s.str());
    }
}

}  // namespace

std::string Shape::str() const {
    return std::to_string(height) + "x" + std::to_string(width) + "x" + std::to_string(channels);
}

Tensor3::Tensor3(Shape shape, double fill) : shape_(shape) {
    require_positive(shape_);
    data_.assign(shape_.size(), fill);
}

Tensor3::Tensor3(Shape shape, std::vector<double> data) : shape_(shape), data_(std::move(data)) {
    require_positive(shape_);
    if (data_.size() != shape_.size()) {
        throw ShapeMismatch("data length " + std::to_string(data_.size()) + " does not match " +
                            shape_.str());
    }
}

std::vector<double> Tensor3::band(std::size_t c) const {
    std::vector<double> out(shape_.height * shape_.width);
    for (std::size_t p = 0; p < out.size(); ++p) {
        out[p] = data_[p * shape_.channels + c];
    }
    return out;
}

void Tensor3::set_band(std::size_t c, std::span<const double> image) {
    if (image.size() != shape_.height * shape_.width) {
        throw ShapeMismatch("band size does not match tensor " + shape_.str());
    }
    for (std::size_t p = 0; p < image.size(); ++p) {
        data_[p * shape_.channels + c] = image[p];
    }
}

bool Tensor3::all_finite() const {
    return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

Tensor3& Tensor3::operator+=(const Tensor3& rhs) {
    require_same_shape(shape_, rhs.shape_, "operator+=");
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += rhs.data_[i];
    return *this;
}

Tensor3& Tensor3::operator-=(const Tensor3& rhs) {
    require_same_shape(shape_, rhs.shape_, "operator-=");
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] -= rhs.data_[i];
    return *this;
}

Tensor3& Tensor3::operator*=(double s) {
    for (double& v : data_) v *= s;
    return *this;
}

SpectralTensor3::SpectralTensor3(Shape shape, bool from_real) : shape_(shape), from_real_(from_real) {
    require_positive(shape_);
    data_.assign(shape_.size(), value_type{});
}

void require_same_shape(const Shape& a, const Shape& b, const char* what) {
    if (!(a == b)) {
        throw ShapeMismatch(std::string(what) + ": " + a.str() + " vs " + b.str());
    }
}

double fro_norm(const Tensor3& t) {
    double acc = 0.0;
    for (double v : t.data()) acc += v * v;
    return std::sqrt(acc);
}

double inner(const Tensor3& a, const Tensor3& b) {
    require_same_shape(a.shape(), b.shape(), "inner");
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
    return acc;
}

double rel_change(const Tensor3& current, const Tensor3& previous) {
    require_same_shape(current.shape(), previous.shape(), "rel_change");
    const double ref = fro_norm(previous);
    if (ref == 0.0) {
        throw ZeroReference("reference tensor has zero Frobenius norm");
    }
    double acc = 0.0;
    for (std::size_t i = 0; i < current.size(); ++i) {
        const double d = current[i] - previous[i];
        acc += d * d;
    }
    return std::sqrt(acc) / ref;
}

}  // namespace mptc
