#include <algorithm>
#include <cmath>
#include <numbers>
#include <queue>

#include "mptc/denoise.hpp"
#include "mptc/errors.hpp"

namespace mptc {

namespace {

bool is_power_of_two(std::size_t n) { return n != 0 && (n & (n - 1)) == 0; }

std::size_t floor_power_of_two(std::size_t n) {
    std::size_t p = 1;
    while (p * 2 <= n) p *= 2;
    return p;
}

// Reference block origins along one axis: the step grid plus the last valid
// origin, so that every pixel is covered by at least one reference block.
std::vector<std::size_t> reference_origins(std::size_t extent, std::size_t block, std::size_t step) {
    std::vector<std::size_t> out;
    const std::size_t last = extent - block;
    for (std::size_t p = 0; p <= last; p += step) out.push_back(p);
    if (out.back() != last) out.push_back(last);
    return out;
}

// Orthonormal DCT-II basis: row k holds the k-th basis vector.
std::vector<double> dct_matrix(std::size_t n) {
    std::vector<double> m(n * n);
    for (std::size_t k = 0; k < n; ++k) {
        const double scale = std::sqrt((k == 0 ? 1.0 : 2.0) / static_cast<double>(n));
        for (std::size_t i = 0; i < n; ++i) {
            m[k * n + i] = scale * std::cos(std::numbers::pi * (2.0 * static_cast<double>(i) + 1.0) *
                                            static_cast<double>(k) / (2.0 * static_cast<double>(n)));
        }
    }
    return m;
}

class BlockTransform {
 public:
    explicit BlockTransform(std::size_t n) : n_(n), basis_(dct_matrix(n)), tmp_(n * n) {}

    // coeffs = D * block * D^T, block read from img at (y, x).
    void forward(const Image2D& img, std::size_t y, std::size_t x, double* coeffs) {
        for (std::size_t k = 0; k < n_; ++k) {
            for (std::size_t c = 0; c < n_; ++c) {
                double acc = 0.0;
                for (std::size_t i = 0; i < n_; ++i) acc += basis_[k * n_ + i] * img(y + i, x + c);
                tmp_[k * n_ + c] = acc;
            }
        }
        for (std::size_t k = 0; k < n_; ++k) {
            for (std::size_t l = 0; l < n_; ++l) {
                double acc = 0.0;
                for (std::size_t j = 0; j < n_; ++j) acc += tmp_[k * n_ + j] * basis_[l * n_ + j];
                coeffs[k * n_ + l] = acc;
            }
        }
    }

    // block = D^T * coeffs * D, in place.
    void inverse(double* coeffs) {
        for (std::size_t i = 0; i < n_; ++i) {
            for (std::size_t l = 0; l < n_; ++l) {
                double acc = 0.0;
                for (std::size_t k = 0; k < n_; ++k) acc += basis_[k * n_ + i] * coeffs[k * n_ + l];
                tmp_[i * n_ + l] = acc;
            }
        }
        for (std::size_t i = 0; i < n_; ++i) {
            for (std::size_t j = 0; j < n_; ++j) {
                double acc = 0.0;
                for (std::size_t l = 0; l < n_; ++l) acc += tmp_[i * n_ + l] * basis_[l * n_ + j];
                coeffs[i * n_ + j] = acc;
            }
        }
    }

 private:
    std::size_t n_;
    std::vector<double> basis_;
    std::vector<double> tmp_;
};

// Full multi-level orthonormal Haar transform across the group dimension.
// data holds `count` members of `stride` coefficients each; after forward()
// member slot 0 carries the group average (scaled by sqrt(count)).
void haar_forward(std::vector<double>& data, std::size_t count, std::size_t stride, std::vector<double>& tmp) {
    tmp.resize(count * stride);
    const double s = std::numbers::sqrt2 / 2.0;
    for (std::size_t len = count; len > 1; len /= 2) {
        const std::size_t half = len / 2;
        for (std::size_t i = 0; i < half; ++i) {
            for (std::size_t q = 0; q < stride; ++q) {
                const double a = data[(2 * i) * stride + q];
                const double b = data[(2 * i + 1) * stride + q];
                tmp[i * stride + q] = s * (a + b);
                tmp[(half + i) * stride + q] = s * (a - b);
            }
        }
        std::copy(tmp.begin(), tmp.begin() + static_cast<std::ptrdiff_t>(len * stride), data.begin());
    }
}

void haar_inverse(std::vector<double>& data, std::size_t count, std::size_t stride, std::vector<double>& tmp) {
    tmp.resize(count * stride);
    const double s = std::numbers::sqrt2 / 2.0;
    for (std::size_t len = 2; len <= count; len *= 2) {
        const std::size_t half = len / 2;
        for (std::size_t i = 0; i < half; ++i) {
            for (std::size_t q = 0; q < stride; ++q) {
                const double a = data[i * stride + q];
                const double d = data[(half + i) * stride + q];
                tmp[(2 * i) * stride + q] = s * (a + d);
                tmp[(2 * i + 1) * stride + q] = s * (a - d);
            }
        }
        std::copy(tmp.begin(), tmp.begin() + static_cast<std::ptrdiff_t>(len * stride), data.begin());
    }
}

struct Match {
    double distance;
    std::size_t y;
    std::size_t x;
    friend bool operator<(const Match& a, const Match& b) {
        if (a.distance != b.distance) return a.distance < b.distance;
        if (a.y != b.y) return a.y < b.y;
        return a.x < b.x;
    }
};

// Up to max_count blocks closest to the reference in squared distance,
// reference first, the rest in increasing distance.
std::vector<Match> match_blocks(const Image2D& img, std::size_t ry, std::size_t rx, const Bm3dParams& p,
                                std::size_t max_count) {
    const std::size_t bs = p.block_size;
    const std::size_t y0 = ry > p.search_radius ? ry - p.search_radius : 0;
    const std::size_t x0 = rx > p.search_radius ? rx - p.search_radius : 0;
    const std::size_t y1 = std::min(img.height - bs, ry + p.search_radius);
    const std::size_t x1 = std::min(img.width - bs, rx + p.search_radius);

    // Max-heap of the best (max_count - 1) non-reference candidates.
    std::priority_queue<Match> best;
    const std::size_t keep = max_count - 1;
    for (std::size_t y = y0; y <= y1 && keep > 0; ++y) {
        for (std::size_t x = x0; x <= x1; ++x) {
            if (y == ry && x == rx) continue;
            const double bound = best.size() == keep ? best.top().distance : INFINITY;
            double d = 0.0;
            for (std::size_t i = 0; i < bs && d <= bound; ++i) {
                const double* a = &img.pixels[(ry + i) * img.width + rx];
                const double* b = &img.pixels[(y + i) * img.width + x];
                for (std::size_t j = 0; j < bs; ++j) {
                    const double diff = a[j] - b[j];
                    d += diff * diff;
                }
            }
            const Match m{d, y, x};
            if (best.size() < keep) {
                best.push(m);
            } else if (m < best.top()) {
                best.pop();
                best.push(m);
            }
        }
    }
    std::vector<Match> out;
    out.reserve(best.size() + 1);
    while (!best.empty()) {
        out.push_back(best.top());
        best.pop();
    }
    out.push_back({0.0, ry, rx});
    std::reverse(out.begin(), out.end());
    out.resize(floor_power_of_two(out.size()));
    return out;
}

// DCT coefficients of every block origin, bs*bs values per origin.
std::vector<double> all_block_coefficients(const Image2D& img, std::size_t bs) {
    const std::size_t ny = img.height - bs + 1;
    const std::size_t nx = img.width - bs + 1;
    std::vector<double> out(ny * nx * bs * bs);
    BlockTransform t(bs);
    for (std::size_t y = 0; y < ny; ++y)
        for (std::size_t x = 0; x < nx; ++x) t.forward(img, y, x, &out[(y * nx + x) * bs * bs]);
    return out;
}

struct Accumulator {
    std::vector<double> numerator;
    std::vector<double> denominator;

    Accumulator(std::size_t h, std::size_t w) : numerator(h * w, 0.0), denominator(h * w, 0.0) {}

    void add(const double* block, std::size_t bs, std::size_t width, std::size_t y, std::size_t x, double weight) {
        for (std::size_t i = 0; i < bs; ++i) {
            for (std::size_t j = 0; j < bs; ++j) {
                const std::size_t k = (y + i) * width + x + j;
                numerator[k] += weight * block[i * bs + j];
                denominator[k] += weight;
            }
        }
    }
};

Image2D hard_threshold_stage(const Image2D& noisy, double sigma, const Bm3dParams& p) {
    const std::size_t bs = p.block_size;
    const std::size_t b2 = bs * bs;
    const std::size_t nx = noisy.width - bs + 1;
    const auto coeffs = all_block_coefficients(noisy, bs);
    const double threshold = p.lambda * sigma;

    Accumulator acc(noisy.height, noisy.width);
    BlockTransform transform(bs);
    std::vector<double> group, tmp;
    for (std::size_t ry : reference_origins(noisy.height, bs, p.step)) {
        for (std::size_t rx : reference_origins(noisy.width, bs, p.step)) {
            const auto members = match_blocks(noisy, ry, rx, p, p.max_group_size);
            const std::size_t n = members.size();
            group.resize(n * b2);
            for (std::size_t m = 0; m < n; ++m) {
                const double* src = &coeffs[(members[m].y * nx + members[m].x) * b2];
                std::copy(src, src + b2, group.begin() + static_cast<std::ptrdiff_t>(m * b2));
            }
            haar_forward(group, n, b2, tmp);
            std::size_t retained = 1;  // group DC at index 0 is always kept
            for (std::size_t i = 1; i < group.size(); ++i) {
                if (std::abs(group[i]) < threshold) {
                    group[i] = 0.0;
                } else {
                    ++retained;
                }
            }
            haar_inverse(group, n, b2, tmp);
            const double weight = 1.0 / static_cast<double>(retained);
            for (std::size_t m = 0; m < n; ++m) {
                double* block = &group[m * b2];
                transform.inverse(block);
                acc.add(block, bs, noisy.width, members[m].y, members[m].x, weight);
            }
        }
    }
    Image2D out(noisy.height, noisy.width);
    for (std::size_t i = 0; i < out.pixels.size(); ++i) out.pixels[i] = acc.numerator[i] / acc.denominator[i];
    return out;
}

Image2D wiener_stage(const Image2D& noisy, const Image2D& pilot, double sigma, const Bm3dParams& p) {
    const std::size_t bs = p.block_size;
    const std::size_t b2 = bs * bs;
    const std::size_t nx = noisy.width - bs + 1;
    const auto noisy_coeffs = all_block_coefficients(noisy, bs);
    const auto pilot_coeffs = all_block_coefficients(pilot, bs);
    const double s2 = sigma * sigma;

    Accumulator acc(noisy.height, noisy.width);
    BlockTransform transform(bs);
    std::vector<double> group, pilot_group, tmp;
    for (std::size_t ry : reference_origins(noisy.height, bs, p.step)) {
        for (std::size_t rx : reference_origins(noisy.width, bs, p.step)) {
            const auto members = match_blocks(pilot, ry, rx, p, p.max_group_size);
            const std::size_t n = members.size();
            group.resize(n * b2);
            pilot_group.resize(n * b2);
            for (std::size_t m = 0; m < n; ++m) {
                const std::size_t off = (members[m].y * nx + members[m].x) * b2;
                std::copy(&noisy_coeffs[off], &noisy_coeffs[off] + b2, group.begin() + static_cast<std::ptrdiff_t>(m * b2));
                std::copy(&pilot_coeffs[off], &pilot_coeffs[off] + b2,
                          pilot_group.begin() + static_cast<std::ptrdiff_t>(m * b2));
            }
            haar_forward(group, n, b2, tmp);
            haar_forward(pilot_group, n, b2, tmp);
            double energy = 0.0;
            for (std::size_t i = 0; i < group.size(); ++i) {
                const double e = pilot_group[i] * pilot_group[i];
                const double shrink = e + s2 > 0.0 ? e / (e + s2) : 1.0;
                group[i] *= shrink;
                energy += shrink * shrink;
            }
            haar_inverse(group, n, b2, tmp);
            const double weight = energy > 0.0 ? 1.0 / energy : 1.0;
            for (std::size_t m = 0; m < n; ++m) {
                double* block = &group[m * b2];
                transform.inverse(block);
                acc.add(block, bs, noisy.width, members[m].y, members[m].x, weight);
            }
        }
    }
    Image2D out(noisy.height, noisy.width);
    for (std::size_t i = 0; i < out.pixels.size(); ++i) out.pixels[i] = acc.numerator[i] / acc.denominator[i];
    return out;
}

}  // namespace

void Bm3dParams::validate() const {
    if (block_size == 0 || step == 0) throw InvalidArgument("BM3D block size and step must be positive");
    if (block_size > 2 * search_radius + 1) throw InvalidArgument("BM3D block size exceeds the search window");
    if (!is_power_of_two(max_group_size)) throw InvalidArgument("BM3D group size must be a power of two");
    if (!(lambda >= 0.0)) throw InvalidArgument("BM3D threshold factor must be nonnegative");
}

Image2D bm3d_band(const Image2D& img, double sigma, const Bm3dParams& p) {
    p.validate();
    if (!(sigma >= 0.0)) throw InvalidArgument("sigma must be nonnegative");
    if (img.height < p.block_size || img.width < p.block_size) {
        throw ImageTooSmall("image " + std::to_string(img.height) + "x" + std::to_string(img.width) +
                            " is smaller than the " + std::to_string(p.block_size) + "-pixel block");
    }
    Image2D basic = hard_threshold_stage(img, sigma, p);
    if (!p.wiener) return basic;
    return wiener_stage(img, basic, sigma, p);
}

}  // namespace mptc
