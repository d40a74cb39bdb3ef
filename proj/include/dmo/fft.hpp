#pragma once

#include <complex>
#include <numbers>
#include <stdexcept>
#include <vector>

namespace dmo::fft {

using cdouble = std::complex<double>;

constexpr bool is_pow2(int n) { return n > 0 && (n & (n - 1)) == 0; }

inline int next_pow2(int n) {
    int m = 1;
    while (m < n) m <<= 1;
    return m;
}

// One-dimensional DFT plan. forward() computes X_k = sum_j x_j e^{-2*pi*i*j*k/n}
// in place; inverse() is the exact inverse (includes the 1/n factor).
// Non power-of-two sizes go through Bluestein's chirp-z reduction to a
// power-of-two convolution. Plans are immutable after construction and safe to
// share between threads.
class Plan1d {
public:
    explicit Plan1d(int n) : n_(n) {
        if (n < 1) throw std::invalid_argument("Plan1d: n < 1");
        if (is_pow2(n_)) {
            build_pow2_tables(n_);
        } else {
            m_ = next_pow2(2 * n_ - 1);
            build_pow2_tables(m_);
            chirp_.resize(static_cast<std::size_t>(n_));
            const int twice = 2 * n_;
            for (int j = 0; j < n_; ++j) {
                const long long q = (static_cast<long long>(j) * j) % twice;
                const double ang = -std::numbers::pi * static_cast<double>(q) / n_;
                chirp_[static_cast<std::size_t>(j)] = std::polar(1.0, ang);
            }
            bfft_.assign(static_cast<std::size_t>(m_), cdouble{0.0, 0.0});
            for (int j = 0; j < n_; ++j) {
                const cdouble b = std::conj(chirp_[static_cast<std::size_t>(j)]);
                bfft_[static_cast<std::size_t>(j)] = b;
                if (j > 0) bfft_[static_cast<std::size_t>(m_ - j)] = b;
            }
            pow2_transform(bfft_.data(), m_, false);
        }
    }

    int size() const { return n_; }

    void forward(cdouble* x) const {
        if (is_pow2(n_)) {
            pow2_transform(x, n_, false);
        } else {
            bluestein(x);
        }
    }

    void inverse(cdouble* x) const {
        if (is_pow2(n_)) {
            pow2_transform(x, n_, true);
            const double s = 1.0 / n_;
            for (int i = 0; i < n_; ++i) x[i] *= s;
        } else {
            for (int i = 0; i < n_; ++i) x[i] = std::conj(x[i]);
            bluestein(x);
            const double s = 1.0 / n_;
            for (int i = 0; i < n_; ++i) x[i] = std::conj(x[i]) * s;
        }
    }

private:
    void build_pow2_tables(int m) {
        rev_.resize(static_cast<std::size_t>(m));
        rev_[0] = 0;
        for (int i = 1; i < m; ++i)
            rev_[static_cast<std::size_t>(i)] = (rev_[static_cast<std::size_t>(i >> 1)] >> 1) |
                                                ((i & 1) ? (m >> 1) : 0);
        tw_.clear();
        for (int len = 2; len <= m; len <<= 1) {
            const int half = len >> 1;
            for (int j = 0; j < half; ++j) {
                const double ang = -2.0 * std::numbers::pi * j / len;
                tw_.push_back(std::polar(1.0, ang));
            }
        }
        tw_inv_.resize(tw_.size());
        for (std::size_t i = 0; i < tw_.size(); ++i) tw_inv_[i] = std::conj(tw_[i]);
    }

    void pow2_transform(cdouble* a, int m, bool inverse) const {
        for (int i = 0; i < m; ++i) {
            const int r = rev_[static_cast<std::size_t>(i)];
            if (i < r) std::swap(a[i], a[r]);
        }
        const cdouble* tw = inverse ? tw_inv_.data() : tw_.data();
        std::size_t tw_off = 0;
        for (int len = 2; len <= m; len <<= 1) {
            const int half = len >> 1;
            for (int start = 0; start < m; start += len) {
                const cdouble* wrow = tw + tw_off;
                cdouble* lo = a + start;
                cdouble* hi = a + start + half;
                for (int j = 0; j < half; ++j) {
                    const cdouble u = lo[j];
                    const cdouble t = wrow[j] * hi[j];
                    lo[j] = u + t;
                    hi[j] = u - t;
                }
            }
            tw_off += static_cast<std::size_t>(half);
        }
    }

    void bluestein(cdouble* x) const {
        std::vector<cdouble> a(static_cast<std::size_t>(m_), cdouble{0.0, 0.0});
        for (int j = 0; j < n_; ++j) a[static_cast<std::size_t>(j)] = x[j] * chirp_[static_cast<std::size_t>(j)];
        pow2_transform(a.data(), m_, false);
        for (int j = 0; j < m_; ++j) a[static_cast<std::size_t>(j)] *= bfft_[static_cast<std::size_t>(j)];
        pow2_transform(a.data(), m_, true);
        const double s = 1.0 / m_;
        for (int k = 0; k < n_; ++k) x[k] = chirp_[static_cast<std::size_t>(k)] * a[static_cast<std::size_t>(k)] * s;
    }

    int n_;
    int m_ = 0;  // pow2 working size for Bluestein, 0 when n_ is a power of two
    std::vector<int> rev_;
    std::vector<cdouble> tw_;
    std::vector<cdouble> tw_inv_;
    std::vector<cdouble> chirp_;
    std::vector<cdouble> bfft_;
};

// Row-major 2D DFT built from two 1D plans.
class Plan2d {
public:
    Plan2d(int h, int w) : h_(h), w_(w), row_(w), col_(h) {}

    int height() const { return h_; }
    int width() const { return w_; }

    void forward(std::vector<cdouble>& a) const { transform(a, false); }
    void inverse(std::vector<cdouble>& a) const { transform(a, true); }

private:
    void transform(std::vector<cdouble>& a, bool inverse) const {
        if (a.size() != static_cast<std::size_t>(h_) * static_cast<std::size_t>(w_))
            throw std::invalid_argument("Plan2d: buffer size mismatch");
        for (int r = 0; r < h_; ++r) {
            cdouble* row = a.data() + static_cast<std::size_t>(r) * w_;
            inverse ? row_.inverse(row) : row_.forward(row);
        }
        std::vector<cdouble> buf(static_cast<std::size_t>(h_));
        for (int c = 0; c < w_; ++c) {
            for (int r = 0; r < h_; ++r) buf[static_cast<std::size_t>(r)] = a[static_cast<std::size_t>(r) * w_ + c];
            inverse ? col_.inverse(buf.data()) : col_.forward(buf.data());
            for (int r = 0; r < h_; ++r) a[static_cast<std::size_t>(r) * w_ + c] = buf[static_cast<std::size_t>(r)];
        }
    }

    int h_, w_;
    Plan1d row_, col_;
};

}  // namespace dmo::fft
