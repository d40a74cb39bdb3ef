#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

#include "dmo/grid.hpp"

namespace dmo {

constexpr double psnr_cap_db = 100.0;

struct ScoreRow {
    double psnr_db = 0.0;
    double ssim = 0.0;
    double runtime_ms = 0.0;
    std::uint64_t seed = 0;
    int replica = 0;
    bool ambiguity_corrected = false;  // scored against the rotated candidate
};

// 10*log10(range^2 / MSE), capped at 100 dB for (near-)identical inputs.
inline double psnr(const ImageGrid& a, const ImageGrid& b, double data_range = 2.0) {
    require_same_shape(a, b, "psnr");
    if (!(data_range > 0.0)) throw std::invalid_argument("psnr: data_range <= 0");
    const double mse = l2_dist_sq(a, b) / static_cast<double>(a.size());
    const double r2 = data_range * data_range;
    if (mse < r2 * 1e-10) return psnr_cap_db;
    return 10.0 * std::log10(r2 / mse);
}

namespace detail {

inline std::vector<double> ssim_window() {
    constexpr int k = 11;
    constexpr double s = 1.5;
    std::vector<double> w(k * k);
    double sum = 0.0;
    for (int i = 0; i < k; ++i)
        for (int j = 0; j < k; ++j) {
            const double di = i - k / 2, dj = j - k / 2;
            w[static_cast<std::size_t>(i) * k + j] = std::exp(-(di * di + dj * dj) / (2 * s * s));
            sum += w[static_cast<std::size_t>(i) * k + j];
        }
    for (auto& v : w) v /= sum;
    return w;
}

}  // namespace detail

// Mean local SSIM, 11x11 Gaussian window (sigma 1.5), valid region only,
// averaged over channels. K1=0.01, K2=0.03.
inline double ssim(const ImageGrid& a, const ImageGrid& b, double data_range = 2.0) {
    require_same_shape(a, b, "ssim");
    if (!(data_range > 0.0)) throw std::invalid_argument("ssim: data_range <= 0");
    constexpr int k = 11;
    const int H = a.shape().height, W = a.shape().width, C = a.shape().channels;
    if (H < k || W < k) throw std::invalid_argument("ssim: image smaller than 11x11 window");
    static const std::vector<double> win = detail::ssim_window();
    const double c1 = (0.01 * data_range) * (0.01 * data_range);
    const double c2 = (0.03 * data_range) * (0.03 * data_range);
    double total = 0.0;
    for (int ch = 0; ch < C; ++ch) {
        double acc = 0.0;
        int count = 0;
        for (int i = 0; i + k <= H; ++i)
            for (int j = 0; j + k <= W; ++j) {
                double ma = 0, mb = 0, saa = 0, sbb = 0, sab = 0;
                for (int u = 0; u < k; ++u)
                    for (int v = 0; v < k; ++v) {
                        const double w = win[static_cast<std::size_t>(u) * k + v];
                        const double va = a.at(i + u, j + v, ch);
                        const double vb = b.at(i + u, j + v, ch);
                        ma += w * va;
                        mb += w * vb;
                        saa += w * va * va;
                        sbb += w * vb * vb;
                        sab += w * va * vb;
                    }
                const double vaa = saa - ma * ma;
                const double vbb = sbb - mb * mb;
                const double vab = sab - ma * mb;
                acc += ((2 * ma * mb + c1) * (2 * vab + c2)) /
                       ((ma * ma + mb * mb + c1) * (vaa + vbb + c2));
                ++count;
            }
        total += acc / count;
    }
    return total / C;
}

// Point reflection of the spatial indices; channels stay in place.
inline ImageGrid rot180(const ImageGrid& x) {
    const int H = x.shape().height, W = x.shape().width, C = x.shape().channels;
    ImageGrid out(x.shape());
    for (int i = 0; i < H; ++i)
        for (int j = 0; j < W; ++j)
            for (int c = 0; c < C; ++c) out.at(i, j, c) = x.at(H - 1 - i, W - 1 - j, c);
    return out;
}

// Fourier magnitudes cannot tell a signal from its point reflection, so score
// the better of the two orientations when allowed.
inline double ambiguity_psnr(const ImageGrid& xhat, const ImageGrid& x_true, bool allow_rot,
                             bool* corrected = nullptr) {
    const double direct = psnr(xhat, x_true);
    if (corrected) *corrected = false;
    if (!allow_rot) return direct;
    const double rotated = psnr(rot180(xhat), x_true);
    if (rotated > direct) {
        if (corrected) *corrected = true;
        return rotated;
    }
    return direct;
}

// Best replica by PSNR; ties resolve to the lowest replica index.
inline const ScoreRow& best_of(std::span<const ScoreRow> rows) {
    if (rows.empty()) throw std::invalid_argument("best_of: empty row list");
    const ScoreRow* best = &rows[0];
    for (const auto& r : rows)
        if (r.psnr_db > best->psnr_db ||
            (r.psnr_db == best->psnr_db && r.replica < best->replica))
            best = &r;
    return *best;
}

}  // namespace dmo
