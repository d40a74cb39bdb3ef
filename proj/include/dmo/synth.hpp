#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "dmo/grid.hpp"
#include "dmo/prior.hpp"
#include "dmo/rng.hpp"

namespace dmo {

enum class SynthKind { blobs, bars, digits_like };

inline SynthKind synth_kind_from_string(const std::string& s) {
    if (s == "blobs") return SynthKind::blobs;
    if (s == "bars") return SynthKind::bars;
    if (s == "digits-like") return SynthKind::digits_like;
    throw std::invalid_argument("synth_dataset: unknown kind '" + s + "'");
}

inline std::string to_string(SynthKind k) {
    switch (k) {
        case SynthKind::blobs: return "blobs";
        case SynthKind::bars: return "bars";
        case SynthKind::digits_like: return "digits-like";
    }
    return "?";
}

namespace detail {

inline int draw_int(RngStream& s, int lo, int hi) {  // inclusive bounds
    const int span = hi - lo + 1;
    return lo + std::min(static_cast<int>(s.uniform() * span), span - 1);
}

inline ImageGrid synth_blobs(const GridShape& shape, RngStream& s) {
    ImageGrid img(shape);
    const int H = shape.height, W = shape.width, C = shape.channels;
    const int n_bumps = draw_int(s, 2, 4);
    std::vector<double> field(static_cast<std::size_t>(H) * W, 0.0);
    for (int b = 0; b < n_bumps; ++b) {
        const double cy = (0.15 + 0.7 * s.uniform()) * H;
        const double cx = (0.15 + 0.7 * s.uniform()) * W;
        const double sig = (0.08 + 0.14 * s.uniform()) * std::min(H, W);
        const double amp = (s.uniform() < 0.5 ? -1.0 : 1.0) * (0.6 + 0.6 * s.uniform());
        for (int i = 0; i < H; ++i)
            for (int j = 0; j < W; ++j) {
                const double d2 = (i - cy) * (i - cy) + (j - cx) * (j - cx);
                field[static_cast<std::size_t>(i) * W + j] += amp * std::exp(-d2 / (2 * sig * sig));
            }
    }
    std::vector<double> chan_mul(static_cast<std::size_t>(C));
    for (auto& m : chan_mul) m = C == 1 ? 1.0 : 0.6 + 0.4 * s.uniform();
    for (int i = 0; i < H; ++i)
        for (int j = 0; j < W; ++j)
            for (int c = 0; c < C; ++c)
                img.at(i, j, c) = std::tanh(1.5 * chan_mul[static_cast<std::size_t>(c)] *
                                            field[static_cast<std::size_t>(i) * W + j]);
    return img;
}

inline ImageGrid synth_bars(const GridShape& shape, RngStream& s) {
    const int H = shape.height, W = shape.width, C = shape.channels;
    ImageGrid img(shape, -0.85);
    const bool horizontal = s.uniform() < 0.5;
    const int span = horizontal ? H : W;
    const int n_bars = draw_int(s, 2, 4);
    for (int b = 0; b < n_bars; ++b) {
        const int width = std::min(span, draw_int(s, 1, std::max(2, span / 8)));
        const int pos = draw_int(s, 0, span - width);
        const double val = 0.9 - 0.6 * s.uniform();
        for (int k = pos; k < pos + width; ++k)
            for (int m = 0; m < (horizontal ? W : H); ++m)
                for (int c = 0; c < C; ++c) {
                    if (horizontal)
                        img.at(k, m, c) = val;
                    else
                        img.at(m, k, c) = val;
                }
    }
    return img;
}

// Seven-segment glyphs: items sharing a digit differ only in stroke thickness,
// jitter, and intensity, giving the dataset genuine near-duplicate clusters.
inline ImageGrid synth_digits(const GridShape& shape, RngStream& s) {
    const int H = shape.height, W = shape.width, C = shape.channels;
    if (H < 12 || W < 10) throw std::invalid_argument("synth_dataset: digits-like needs >=12x10");
    // segment bitmasks: A top, B upper-right, C lower-right, D bottom,
    // E lower-left, F upper-left, G middle
    static constexpr int seg[10] = {
        0b1111110, 0b0110000, 0b1101101, 0b1111001, 0b0110011,
        0b1011011, 0b1011111, 0b1110000, 0b1111111, 0b1111011,
    };
    const int digit = draw_int(s, 0, 9);
    const int t = draw_int(s, 2, std::max(2, H / 12));
    const int bh = 3 * H / 5;
    const int bw = std::max(6, 3 * W / 8);
    const int jy = draw_int(s, -2, 2), jx = draw_int(s, -2, 2);
    const int y0 = std::clamp(H / 5 + jy, 0, H - bh - 1);
    const int x0 = std::clamp((W - bw) / 2 + jx, 0, W - bw - 1);
    const double fg = 0.7 + 0.3 * s.uniform();
    ImageGrid img(shape, -0.9);
    auto fill = [&](int r0, int r1, int c0, int c1) {
        for (int i = r0; i < r1; ++i)
            for (int j = c0; j < c1; ++j)
                for (int c = 0; c < C; ++c) img.at(i, j, c) = fg;
    };
    const int mid = y0 + bh / 2;
    const int bits = seg[digit];
    if (bits & 0b1000000) fill(y0, y0 + t, x0, x0 + bw);                       // A
    if (bits & 0b0100000) fill(y0, mid, x0 + bw - t, x0 + bw);                 // B
    if (bits & 0b0010000) fill(mid, y0 + bh, x0 + bw - t, x0 + bw);            // C
    if (bits & 0b0001000) fill(y0 + bh - t, y0 + bh, x0, x0 + bw);             // D
    if (bits & 0b0000100) fill(mid, y0 + bh, x0, x0 + t);                      // E
    if (bits & 0b0000010) fill(y0, mid, x0, x0 + t);                           // F
    if (bits & 0b0000001) fill(mid - t / 2, mid - t / 2 + t, x0, x0 + bw);     // G
    return img;
}

}  // namespace detail

// Deterministic synthetic prior sets. Pairwise min L2 gap > 0.1*sqrt(d) is
// enforced by rejection; generation fails after 200*n rejected candidates.
inline PriorDataset synth_dataset(SynthKind kind, int n, const GridShape& shape,
                                  std::uint64_t seed) {
    if (n < 1) throw std::invalid_argument("synth_dataset: n < 1");
    if (!shape.valid()) throw std::invalid_argument("synth_dataset: bad shape");
    RngStream s(seed, StreamId{0, 0, purpose::dataset});
    const double gap = 0.1 * std::sqrt(static_cast<double>(shape.size()));
    const double gap2 = gap * gap;
    std::vector<ImageGrid> items;
    int budget = 200 * n;
    while (static_cast<int>(items.size()) < n) {
        ImageGrid cand;
        switch (kind) {
            case SynthKind::blobs: cand = detail::synth_blobs(shape, s); break;
            case SynthKind::bars: cand = detail::synth_bars(shape, s); break;
            case SynthKind::digits_like: cand = detail::synth_digits(shape, s); break;
        }
        bool ok = true;
        for (const auto& z : items)
            if (l2_dist_sq(cand, z) <= gap2) {
                ok = false;
                break;
            }
        if (ok) {
            items.push_back(std::move(cand));
        } else if (--budget <= 0) {
            throw std::runtime_error("synth_dataset: could not satisfy the pairwise gap");
        }
    }
    return PriorDataset(std::move(items));
}

}  // namespace dmo
