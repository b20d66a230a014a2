#include <algorithm>
#include <cmath>

#include "mptc/denoise.hpp"
#include "mptc/errors.hpp"

namespace mptc {

namespace {

// Half-sample symmetric reflection of index i into [0, n), applied
// periodically so kernels wider than the image stay well defined.
std::size_t reflect(std::ptrdiff_t i, std::size_t n) {
    const auto period = static_cast<std::ptrdiff_t>(2 * n);
    std::ptrdiff_t m = i % period;
    if (m < 0) m += period;
    return m < static_cast<std::ptrdiff_t>(n) ? static_cast<std::size_t>(m)
                                              : static_cast<std::size_t>(period - 1 - m);
}

std::vector<double> gaussian_kernel(double stddev, std::size_t radius) {
    std::vector<double> k(2 * radius + 1);
    double sum = 0.0;
    for (std::size_t i = 0; i < k.size(); ++i) {
        const double x = static_cast<double>(i) - static_cast<double>(radius);
        k[i] = std::exp(-0.5 * x * x / (stddev * stddev));
        sum += k[i];
    }
    for (double& v : k) v /= sum;
    return k;
}

}  // namespace

Image2D::Image2D(std::size_t h, std::size_t w, std::vector<double> px) : height(h), width(w), pixels(std::move(px)) {
    if (pixels.size() != h * w) throw ShapeMismatch("image pixel count does not match dimensions");
}

Image2D gaussian_smooth(const Image2D& img, double sigma) {
    if (!(sigma >= 0.0)) throw InvalidArgument("sigma must be nonnegative");
    if (sigma == 0.0) return img;
    const double stddev = sigma * static_cast<double>(std::min(img.height, img.width));
    const auto radius = static_cast<std::size_t>(std::ceil(3.0 * stddev));
    const auto kernel = gaussian_kernel(stddev, radius);
    const auto r = static_cast<std::ptrdiff_t>(radius);

    Image2D tmp(img.height, img.width);
    for (std::size_t y = 0; y < img.height; ++y) {
        for (std::size_t x = 0; x < img.width; ++x) {
            double acc = 0.0;
            for (std::ptrdiff_t d = -r; d <= r; ++d) {
                acc += kernel[static_cast<std::size_t>(d + r)] *
                       img(y, reflect(static_cast<std::ptrdiff_t>(x) + d, img.width));
            }
            tmp(y, x) = acc;
        }
    }
    Image2D out(img.height, img.width);
    for (std::size_t y = 0; y < img.height; ++y) {
        for (std::size_t x = 0; x < img.width; ++x) {
            double acc = 0.0;
            for (std::ptrdiff_t d = -r; d <= r; ++d) {
                acc += kernel[static_cast<std::size_t>(d + r)] *
                       tmp(reflect(static_cast<std::ptrdiff_t>(y) + d, img.height), x);
            }
            out(y, x) = acc;
        }
    }
    return out;
}

Image2D tv_smooth(const Image2D& img, double sigma, std::size_t iterations) {
    if (!(sigma >= 0.0)) throw InvalidArgument("sigma must be nonnegative");
    const double lambda = sigma * sigma;
    if (lambda == 0.0 || iterations == 0) return img;

    const std::size_t h = img.height;
    const std::size_t w = img.width;
    const double tau = 0.125;
    std::vector<double> px(h * w, 0.0), py(h * w, 0.0), div(h * w, 0.0);

    auto divergence = [&] {
        for (std::size_t y = 0; y < h; ++y) {
            for (std::size_t x = 0; x < w; ++x) {
                const std::size_t i = y * w + x;
                double d = 0.0;
                if (x + 1 < w) d += px[i];
                if (x > 0) d -= px[i - 1];
                if (y + 1 < h) d += py[i];
                if (y > 0) d -= py[i - w];
                div[i] = d;
            }
        }
    };

    for (std::size_t it = 0; it < iterations; ++it) {
        divergence();
        for (std::size_t y = 0; y < h; ++y) {
            for (std::size_t x = 0; x < w; ++x) {
                const std::size_t i = y * w + x;
                const double u = div[i] - img.pixels[i] / lambda;
                const double gx = x + 1 < w ? (div[i + 1] - img.pixels[i + 1] / lambda) - u : 0.0;
                const double gy = y + 1 < h ? (div[i + w] - img.pixels[i + w] / lambda) - u : 0.0;
                const double norm = 1.0 + tau * std::sqrt(gx * gx + gy * gy);
                px[i] = (px[i] + tau * gx) / norm;
                py[i] = (py[i] + tau * gy) / norm;
            }
        }
    }
    divergence();
    Image2D out(h, w);
    for (std::size_t i = 0; i < h * w; ++i) out.pixels[i] = img.pixels[i] - lambda * div[i];
    return out;
}

}  // namespace mptc
