#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

#include "dmo/rng.hpp"

namespace dmo {

struct GridShape {
    int height = 0;
    int width = 0;
    int channels = 1;

    std::size_t size() const {
        return static_cast<std::size_t>(height) * static_cast<std::size_t>(width) *
               static_cast<std::size_t>(channels);
    }
    bool valid() const { return height > 0 && width > 0 && channels > 0; }
    bool operator==(const GridShape&) const = default;
};

// Dense row-major (row, col, channel) image with double samples.
// Pixel values nominally live in [-1, 1] but the container does not enforce it.
class ImageGrid {
public:
    ImageGrid() = default;

    explicit ImageGrid(GridShape shape, double fill = 0.0)
        : shape_(shape), data_(shape.size(), fill) {
        if (!shape.valid()) throw std::invalid_argument("ImageGrid: non-positive shape");
    }

    ImageGrid(GridShape shape, std::vector<double> data) : shape_(shape), data_(std::move(data)) {
        if (!shape.valid()) throw std::invalid_argument("ImageGrid: non-positive shape");
        if (data_.size() != shape.size())
            throw std::invalid_argument("ImageGrid: data size does not match shape");
    }

    const GridShape& shape() const { return shape_; }
    std::size_t size() const { return data_.size(); }

    double& at(int r, int c, int ch = 0) { return data_[index(r, c, ch)]; }
    double at(int r, int c, int ch = 0) const { return data_[index(r, c, ch)]; }

    double& operator[](std::size_t i) { return data_[i]; }
    double operator[](std::size_t i) const { return data_[i]; }

    std::vector<double>& data() { return data_; }
    const std::vector<double>& data() const { return data_; }

    bool same_shape(const ImageGrid& other) const { return shape_ == other.shape_; }

private:
    std::size_t index(int r, int c, int ch) const {
        return (static_cast<std::size_t>(r) * shape_.width + c) * shape_.channels + ch;
    }

    GridShape shape_;
    std::vector<double> data_;
};

inline void require_same_shape(const ImageGrid& a, const ImageGrid& b, const char* where) {
    if (!a.same_shape(b)) throw std::invalid_argument(std::string(where) + ": shape mismatch");
}

// a*x + y, elementwise
inline ImageGrid axpy(double a, const ImageGrid& x, const ImageGrid& y) {
    require_same_shape(x, y, "axpy");
    ImageGrid out = y;
    const auto& xs = x.data();
    auto& os = out.data();
    for (std::size_t i = 0; i < os.size(); ++i) os[i] += a * xs[i];
    return out;
}

inline double dot(const ImageGrid& a, const ImageGrid& b) {
    require_same_shape(a, b, "dot");
    const auto& as = a.data();
    const auto& bs = b.data();
    double s = 0.0;
    for (std::size_t i = 0; i < as.size(); ++i) s += as[i] * bs[i];
    return s;
}

inline double l2_dist_sq(const ImageGrid& a, const ImageGrid& b) {
    require_same_shape(a, b, "l2_dist_sq");
    const auto& as = a.data();
    const auto& bs = b.data();
    double s = 0.0;
    for (std::size_t i = 0; i < as.size(); ++i) {
        const double d = as[i] - bs[i];
        s += d * d;
    }
    return s;
}

inline double l2_norm(const ImageGrid& a) { return std::sqrt(dot(a, a)); }

inline bool all_finite(const ImageGrid& a) {
    for (double v : a.data())
        if (!std::isfinite(v)) return false;
    return true;
}

// i.i.d. standard normal grid drawn from `stream`
inline ImageGrid gaussian_grid(const GridShape& shape, RngStream& stream) {
    ImageGrid g(shape);
    for (auto& v : g.data()) v = stream.gaussian();
    return g;
}

}  // namespace dmo
