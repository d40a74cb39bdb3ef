#pragma once

#include <atomic>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <utility>
#include <vector>

#include "dmo/grid.hpp"

namespace dmo {

// Finite dataset backing the exact denoiser. Items are validated once; a
// query costs one pass over each item.
class PriorDataset {
public:
    explicit PriorDataset(std::vector<ImageGrid> items) : items_(std::move(items)) {
        if (items_.empty()) throw std::invalid_argument("PriorDataset: empty dataset");
        for (const auto& z : items_) {
            require_same_shape(items_.front(), z, "PriorDataset");
            if (!all_finite(z)) throw std::invalid_argument("PriorDataset: non-finite item");
        }
    }

    PriorDataset(const PriorDataset& o) : items_(o.items_) {}
    PriorDataset& operator=(const PriorDataset& o) {
        items_ = o.items_;
        return *this;
    }

    int size() const { return static_cast<int>(items_.size()); }
    const ImageGrid& item(int i) const { return items_[static_cast<std::size_t>(i)]; }
    const GridShape& shape() const { return items_.front().shape(); }
    int dim() const { return static_cast<int>(items_.front().size()); }

    // Number of denoise() evaluations since construction or reset; this is the
    // unit the NFE budget counts.
    std::uint64_t denoise_calls() const { return denoise_calls_.load(std::memory_order_relaxed); }
    void reset_denoise_calls() const { denoise_calls_.store(0, std::memory_order_relaxed); }
    void bump_denoise_calls() const { denoise_calls_.fetch_add(1, std::memory_order_relaxed); }

private:
    std::vector<ImageGrid> items_;
    mutable std::atomic<std::uint64_t> denoise_calls_{0};
};

struct PosteriorWeights {
    std::vector<double> w;  // convex: w[i] >= 0, sum == 1
};

namespace detail {

// ||x - z_i||^2 summed coordinate-wise. The norm-expansion shortcut is not
// used: it cancels catastrophically when x sits within O(sigma) of an item
// and the exponent scale 1/(2 sigma^2) amplifies the loss.
inline void sq_dists(const PriorDataset& ds, const ImageGrid& x, std::vector<double>& out) {
    require_same_shape(ds.item(0), x, "prior query");
    out.resize(static_cast<std::size_t>(ds.size()));
    for (int i = 0; i < ds.size(); ++i) {
        const auto& zs = ds.item(i).data();
        const auto& xs = x.data();
        double d2 = 0.0;
        for (std::size_t k = 0; k < xs.size(); ++k) {
            const double diff = xs[k] - zs[k];
            d2 += diff * diff;
        }
        out[static_cast<std::size_t>(i)] = d2;
    }
}

inline void check_sigma(double sigma) {
    if (!(sigma > 0.0) || !std::isfinite(sigma))
        throw std::invalid_argument("prior query: sigma must be positive and finite");
}

}  // namespace detail

// Posterior responsibilities softmax_i(-||x - z_i||^2 / (2 sigma^2)),
// computed with the max-shift so the largest exponent is exactly 0.
inline PosteriorWeights posterior_weights(const PriorDataset& ds, const ImageGrid& x, double sigma) {
    detail::check_sigma(sigma);
    std::vector<double> d2;
    detail::sq_dists(ds, x, d2);
    const double inv = 1.0 / (2.0 * sigma * sigma);
    double lo = d2[0];
    for (double v : d2) lo = v < lo ? v : lo;
    PosteriorWeights pw;
    pw.w.resize(d2.size());
    double sum = 0.0;
    for (std::size_t i = 0; i < d2.size(); ++i) {
        pw.w[i] = std::exp(-(d2[i] - lo) * inv);
        sum += pw.w[i];
    }
    for (double& v : pw.w) v /= sum;
    return pw;
}

// Exact minimum-MSE denoiser for the finite mixture: D(x; sigma) = sum_i w_i z_i.
inline ImageGrid denoise(const PriorDataset& ds, const ImageGrid& x, double sigma) {
    const PosteriorWeights pw = posterior_weights(ds, x, sigma);
    ds.bump_denoise_calls();
    ImageGrid out(x.shape());
    auto& os = out.data();
    for (int i = 0; i < ds.size(); ++i) {
        const double wi = pw.w[static_cast<std::size_t>(i)];
        const auto& zs = ds.item(i).data();
        for (std::size_t k = 0; k < os.size(); ++k) os[k] += wi * zs[k];
    }
    return out;
}

// log p_sigma(x) for the equal-weight mixture of N(z_i, sigma^2 I).
inline double mixture_log_density(const PriorDataset& ds, const ImageGrid& x, double sigma) {
    detail::check_sigma(sigma);
    std::vector<double> d2;
    detail::sq_dists(ds, x, d2);
    const double inv = 1.0 / (2.0 * sigma * sigma);
    double lo = d2[0];
    for (double v : d2) lo = v < lo ? v : lo;
    double sum = 0.0;
    for (double v : d2) sum += std::exp(-(v - lo) * inv);
    const double d = static_cast<double>(ds.dim());
    return -lo * inv + std::log(sum) - std::log(static_cast<double>(ds.size())) -
           0.5 * d * std::log(2.0 * std::numbers::pi * sigma * sigma);
}

// grad_x log p_sigma(x) = (D(x; sigma) - x) / sigma^2
inline ImageGrid score(const PriorDataset& ds, const ImageGrid& x, double sigma) {
    ImageGrid d = denoise(ds, x, sigma);
    const double inv = 1.0 / (sigma * sigma);
    auto& dsv = d.data();
    const auto& xs = x.data();
    for (std::size_t k = 0; k < dsv.size(); ++k) dsv[k] = (dsv[k] - xs[k]) * inv;
    return d;
}

// v^T J_D where J_D = (1/sigma^2) sum_i w_i z_i (z_i - D)^T. J_D is symmetric
// (it is a posterior covariance over sigma^2), so this equals J_D v:
//   out = (sum_i c_i z_i - (sum_i c_i) D) / sigma^2   with c_i = w_i <v, z_i>.
// For a single-item dataset this is exactly 0 in every component.
inline ImageGrid denoiser_vjp(const PriorDataset& ds, const ImageGrid& x, double sigma,
                              const ImageGrid& v) {
    require_same_shape(x, v, "denoiser_vjp");
    const PosteriorWeights pw = posterior_weights(ds, x, sigma);
    ImageGrid dzero(x.shape());
    auto& mean = dzero.data();
    std::vector<double> c(pw.w.size());
    double csum = 0.0;
    for (int i = 0; i < ds.size(); ++i) {
        const double wi = pw.w[static_cast<std::size_t>(i)];
        c[static_cast<std::size_t>(i)] = wi * dot(v, ds.item(i));
        csum += c[static_cast<std::size_t>(i)];
        const auto& zs = ds.item(i).data();
        for (std::size_t k = 0; k < mean.size(); ++k) mean[k] += wi * zs[k];
    }
    ImageGrid out(x.shape());
    auto& os = out.data();
    const double inv = 1.0 / (sigma * sigma);
    for (int i = 0; i < ds.size(); ++i) {
        const double ci = c[static_cast<std::size_t>(i)];
        const auto& zs = ds.item(i).data();
        for (std::size_t k = 0; k < os.size(); ++k) os[k] += ci * zs[k];
    }
    for (std::size_t k = 0; k < os.size(); ++k) os[k] = (os[k] - csum * mean[k]) * inv;
    return out;
}

}  // namespace dmo
