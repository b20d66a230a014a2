#pragma once

#include <complex>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace mptc {

/// Geometry of a 3-way array: height x width x channels.
struct Shape {
    std::size_t height = 0;
    std::size_t width = 0;
    std::size_t channels = 0;

    [[nodiscard]] std::size_t size() const { return height * width * channels; }
    [[nodiscard]] std::string str() const;
    friend bool operator==(const Shape&, const Shape&) = default;
};

/// Dense real H x W x C array stored in (h, w, c) order with c fastest, so
/// each mode-3 tube t(h, w, :) is contiguous.
class Tensor3 {
 public:
    Tensor3() = default;
    explicit Tensor3(Shape shape, double fill = 0.0);
    Tensor3(Shape shape, std::vector<double> data);
    Tensor3(std::size_t h, std::size_t w, std::size_t c, double fill = 0.0)
        : Tensor3(Shape{h, w, c}, fill) {}

    [[nodiscard]] const Shape& shape() const { return shape_; }
    [[nodiscard]] std::size_t height() const { return shape_.height; }
    [[nodiscard]] std::size_t width() const { return shape_.width; }
    [[nodiscard]] std::size_t channels() const { return shape_.channels; }
    [[nodiscard]] std::size_t size() const { return data_.size(); }
    [[nodiscard]] bool empty() const { return data_.empty(); }

    [[nodiscard]] std::size_t index(std::size_t h, std::size_t w, std::size_t c) const {
        return (h * shape_.width + w) * shape_.channels + c;
    }
    double& operator()(std::size_t h, std::size_t w, std::size_t c) { return data_[index(h, w, c)]; }
    double operator()(std::size_t h, std::size_t w, std::size_t c) const { return data_[index(h, w, c)]; }
    double& operator[](std::size_t i) { return data_[i]; }
    double operator[](std::size_t i) const { return data_[i]; }

    [[nodiscard]] std::span<double> data() { return data_; }
    [[nodiscard]] std::span<const double> data() const { return data_; }
    [[nodiscard]] const std::vector<double>& values() const { return data_; }

    [[nodiscard]] std::span<const double> tube(std::size_t h, std::size_t w) const {
        return {data_.data() + index(h, w, 0), shape_.channels};
    }
    [[nodiscard]] std::span<double> tube(std::size_t h, std::size_t w) {
        return {data_.data() + index(h, w, 0), shape_.channels};
    }

    /// Copies band c out as a row-major H x W image.
    [[nodiscard]] std::vector<double> band(std::size_t c) const;
    void set_band(std::size_t c, std::span<const double> image);

    [[nodiscard]] bool all_finite() const;

    Tensor3& operator+=(const Tensor3& rhs);
    Tensor3& operator-=(const Tensor3& rhs);
    Tensor3& operator*=(double s);

    friend Tensor3 operator+(Tensor3 lhs, const Tensor3& rhs) { return lhs += rhs; }
    friend Tensor3 operator-(Tensor3 lhs, const Tensor3& rhs) { return lhs -= rhs; }
    friend Tensor3 operator*(Tensor3 lhs, double s) { return lhs *= s; }
    friend Tensor3 operator*(double s, Tensor3 rhs) { return rhs *= s; }

    friend bool operator==(const Tensor3&, const Tensor3&) = default;

 private:
    Shape shape_{};
    std::vector<double> data_;
};

/// Mode-3 spectrum of a Tensor3; same geometry, complex entries.
class SpectralTensor3 {
 public:
    using value_type = std::complex<double>;

    SpectralTensor3() = default;
    explicit SpectralTensor3(Shape shape, bool from_real = false);

    [[nodiscard]] const Shape& shape() const { return shape_; }
    [[nodiscard]] std::size_t height() const { return shape_.height; }
    [[nodiscard]] std::size_t width() const { return shape_.width; }
    [[nodiscard]] std::size_t channels() const { return shape_.channels; }

    /// True when the spectrum is known to come from a real tensor, i.e.
    /// slices k and C - k are conjugates.
    [[nodiscard]] bool from_real() const { return from_real_; }
    void set_from_real(bool v) { from_real_ = v; }

    [[nodiscard]] std::size_t index(std::size_t h, std::size_t w, std::size_t c) const {
        return (h * shape_.width + w) * shape_.channels + c;
    }
    value_type& operator()(std::size_t h, std::size_t w, std::size_t c) { return data_[index(h, w, c)]; }
    const value_type& operator()(std::size_t h, std::size_t w, std::size_t c) const {
        return data_[index(h, w, c)];
    }
    [[nodiscard]] std::span<value_type> data() { return data_; }
    [[nodiscard]] std::span<const value_type> data() const { return data_; }

 private:
    Shape shape_{};
    bool from_real_ = false;
    std::vector<value_type> data_;
};

void require_same_shape(const Shape& a, const Shape& b, const char* what);

[[nodiscard]] double fro_norm(const Tensor3& t);

/// Frobenius inner product sum_i a_i b_i.
[[nodiscard]] double inner(const Tensor3& a, const Tensor3& b);

/// ||current - previous||_F / ||previous||_F. Throws ZeroReference when the
/// reference norm is zero.
[[nodiscard]] double rel_change(const Tensor3& current, const Tensor3& previous);

}  // namespace mptc
