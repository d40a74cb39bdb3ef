#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "dmo/fft.hpp"
#include "dmo/grid.hpp"
#include "dmo/rng.hpp"

namespace dmo {

// Flat measurement vector plus enough metadata to replay scoring and serialization.
struct Measurement {
    std::vector<double> values;
    std::vector<int> shape;  // logical shape of `values`, e.g. {kept} or {h, w, c}
    std::string operator_id;
    double noise_sigma = 0.0;
    std::uint64_t seed = 0;
};

// Deterministic measurement map A: image -> flat vector. Implementations hold
// all randomness (masks, kernels) fixed at construction; forward/vjp are pure.
class ForwardOperator {
public:
    virtual ~ForwardOperator() = default;

    virtual std::vector<double> forward(const ImageGrid& x) const = 0;

    // v^T (dA/dx) pulled back to image space. Linear operators ignore x.
    virtual ImageGrid vjp(const ImageGrid& x, std::span<const double> v) const = 0;

    virtual bool is_linear() const = 0;
    virtual std::size_t output_size() const = 0;
    virtual std::vector<int> output_shape() const = 0;

    const std::string& id() const { return id_; }
    const GridShape& input_shape() const { return in_shape_; }

    // Gradient of ||y - A(x)||^2 / (2 tau^2), i.e. vjp(x, A(x) - y) / tau^2.
    // Subclasses may fuse forward and vjp; the residual norm ||A(x) - y|| is
    // reported through `residual_norm` when non-null.
    virtual ImageGrid data_fit_grad(const ImageGrid& x, std::span<const double> y, double tau,
                                    double* residual_norm = nullptr) const {
        check_grad_args(x, y, tau);
        std::vector<double> r = forward(x);
        double rn2 = 0.0;
        for (std::size_t i = 0; i < r.size(); ++i) {
            r[i] -= y[i];
            rn2 += r[i] * r[i];
        }
        if (residual_norm) *residual_norm = std::sqrt(rn2);
        ImageGrid g = vjp(x, r);
        const double s = 1.0 / (tau * tau);
        for (auto& v : g.data()) v *= s;
        return g;
    }

protected:
    ForwardOperator(GridShape in_shape, std::string id) : in_shape_(in_shape), id_(std::move(id)) {
        if (!in_shape_.valid()) throw std::invalid_argument("ForwardOperator: bad input shape");
    }

    void check_input(const ImageGrid& x) const {
        if (!(x.shape() == in_shape_))
            throw std::invalid_argument(id_ + ": input shape mismatch");
    }

    void check_grad_args(const ImageGrid& x, std::span<const double> y, double tau) const {
        check_input(x);
        if (y.size() != output_size())
            throw std::invalid_argument(id_ + ": measurement size mismatch");
        if (!(tau > 0.0)) throw std::invalid_argument(id_ + ": tau must be positive");
    }

    GridShape in_shape_;
    std::string id_;
};

inline Measurement apply_noise(std::vector<double> clean, std::vector<int> shape,
                               std::string operator_id, double noise_sigma, RngStream& stream,
                               std::uint64_t seed = 0) {
    if (!(noise_sigma >= 0.0)) throw std::invalid_argument("apply_noise: negative noise_sigma");
    Measurement m;
    m.values = std::move(clean);
    m.shape = std::move(shape);
    m.operator_id = std::move(operator_id);
    m.noise_sigma = noise_sigma;
    m.seed = seed;
    if (noise_sigma > 0.0)
        for (auto& v : m.values) v += noise_sigma * stream.gaussian();
    return m;
}

inline Measurement measure(const ForwardOperator& op, const ImageGrid& x, double noise_sigma,
                           RngStream& stream, std::uint64_t seed = 0) {
    return apply_noise(op.forward(x), op.output_shape(), op.id(), noise_sigma, stream, seed);
}

inline ImageGrid data_fit_grad(const ForwardOperator& op, const ImageGrid& x, const Measurement& y,
                               double tau, double* residual_norm = nullptr) {
    return op.data_fit_grad(x, std::span<const double>(y.values), tau, residual_norm);
}

namespace detail {

// ---- inpainting -----------------------------------------------------------

class InpaintOp final : public ForwardOperator {
public:
    InpaintOp(GridShape shape, std::vector<std::size_t> kept_pixels, std::string id)
        : ForwardOperator(shape, std::move(id)), kept_(std::move(kept_pixels)) {
        if (kept_.empty()) throw std::invalid_argument(id_ + ": mask keeps no pixels");
    }

    std::vector<double> forward(const ImageGrid& x) const override {
        check_input(x);
        const int C = in_shape_.channels;
        std::vector<double> out;
        out.reserve(kept_.size() * static_cast<std::size_t>(C));
        for (std::size_t p : kept_)
            for (int c = 0; c < C; ++c) out.push_back(x[p * C + c]);
        return out;
    }

    ImageGrid vjp(const ImageGrid& x, std::span<const double> v) const override {
        check_input(x);
        if (v.size() != output_size()) throw std::invalid_argument(id_ + ": vjp size mismatch");
        const int C = in_shape_.channels;
        ImageGrid g(in_shape_);
        std::size_t k = 0;
        for (std::size_t p : kept_)
            for (int c = 0; c < C; ++c) g[p * C + c] = v[k++];
        return g;
    }

    bool is_linear() const override { return true; }
    std::size_t output_size() const override {
        return kept_.size() * static_cast<std::size_t>(in_shape_.channels);
    }
    std::vector<int> output_shape() const override {
        return {static_cast<int>(output_size())};
    }

private:
    std::vector<std::size_t> kept_;  // flat pixel (not sample) indices, ascending
};

// ---- resizing -------------------------------------------------------------

// Catmull-Rom cubic, a = -0.5
inline double cubic_kernel(double s) {
    constexpr double a = -0.5;
    s = std::fabs(s);
    if (s < 1.0) return ((a + 2.0) * s - (a + 3.0)) * s * s + 1.0;
    if (s < 2.0) return ((a * s - 5.0 * a) * s + 8.0 * a) * s - 4.0 * a;
    return 0.0;
}

struct ResizeRow {
    int start = 0;
    std::vector<double> w;
};

// Antialiased separable resize weights for one axis, n -> n/factor. The cubic
// is stretched by `factor` so it low-passes before decimation; edges clamp.
inline std::vector<ResizeRow> bicubic_rows(int n, int factor) {
    const int m = n / factor;
    std::vector<ResizeRow> rows(static_cast<std::size_t>(m));
    const double f = static_cast<double>(factor);
    for (int i = 0; i < m; ++i) {
        const double center = (i + 0.5) * f - 0.5;
        const int lo = static_cast<int>(std::floor(center - 2.0 * f + 0.5));
        const int hi = static_cast<int>(std::ceil(center + 2.0 * f - 0.5));
        std::vector<double> acc(static_cast<std::size_t>(n), 0.0);
        double sum = 0.0;
        for (int j = lo; j <= hi; ++j) {
            const double w = cubic_kernel((j - center) / f);
            if (w == 0.0) continue;
            const int jc = std::clamp(j, 0, n - 1);
            acc[static_cast<std::size_t>(jc)] += w;
            sum += w;
        }
        int first = 0;
        while (first < n && acc[static_cast<std::size_t>(first)] == 0.0) ++first;
        int last = n - 1;
        while (last > first && acc[static_cast<std::size_t>(last)] == 0.0) --last;
        rows[static_cast<std::size_t>(i)].start = first;
        for (int j = first; j <= last; ++j)
            rows[static_cast<std::size_t>(i)].w.push_back(acc[static_cast<std::size_t>(j)] / sum);
    }
    return rows;
}

inline std::vector<ResizeRow> average_rows(int n, int factor) {
    const int m = n / factor;
    std::vector<ResizeRow> rows(static_cast<std::size_t>(m));
    for (int i = 0; i < m; ++i) {
        rows[static_cast<std::size_t>(i)].start = i * factor;
        rows[static_cast<std::size_t>(i)].w.assign(static_cast<std::size_t>(factor),
                                                   1.0 / factor);
    }
    return rows;
}

class DownsampleOp final : public ForwardOperator {
public:
    DownsampleOp(GridShape shape, int factor, bool bicubic)
        : ForwardOperator(shape, bicubic ? "sr-bicubic" : "sr-average"), factor_(factor) {
        if (factor < 1) throw std::invalid_argument(id_ + ": factor < 1");
        if (shape.height % factor != 0 || shape.width % factor != 0)
            throw std::invalid_argument(id_ + ": dimensions not divisible by factor");
        rows_ = bicubic ? bicubic_rows(shape.height, factor) : average_rows(shape.height, factor);
        cols_ = bicubic ? bicubic_rows(shape.width, factor) : average_rows(shape.width, factor);
        out_h_ = shape.height / factor;
        out_w_ = shape.width / factor;
    }

    std::vector<double> forward(const ImageGrid& x) const override {
        check_input(x);
        const int H = in_shape_.height, W = in_shape_.width, C = in_shape_.channels;
        // rows pass: H x W -> out_h x W
        std::vector<double> mid(static_cast<std::size_t>(out_h_) * W * C, 0.0);
        for (int i = 0; i < out_h_; ++i) {
            const auto& rr = rows_[static_cast<std::size_t>(i)];
            for (std::size_t k = 0; k < rr.w.size(); ++k) {
                const int r = rr.start + static_cast<int>(k);
                const double w = rr.w[k];
                const std::size_t src = (static_cast<std::size_t>(r) * W) * C;
                const std::size_t dst = (static_cast<std::size_t>(i) * W) * C;
                for (int j = 0; j < W * C; ++j) mid[dst + j] += w * x[src + j];
            }
        }
        // cols pass: out_h x W -> out_h x out_w
        std::vector<double> out(static_cast<std::size_t>(out_h_) * out_w_ * C, 0.0);
        for (int i = 0; i < out_h_; ++i)
            for (int j = 0; j < out_w_; ++j) {
                const auto& cc = cols_[static_cast<std::size_t>(j)];
                for (std::size_t k = 0; k < cc.w.size(); ++k) {
                    const int c = cc.start + static_cast<int>(k);
                    const double w = cc.w[k];
                    for (int ch = 0; ch < C; ++ch)
                        out[(static_cast<std::size_t>(i) * out_w_ + j) * C + ch] +=
                            w * mid[(static_cast<std::size_t>(i) * W + c) * C + ch];
                }
            }
        (void)H;
        return out;
    }

    ImageGrid vjp(const ImageGrid& x, std::span<const double> v) const override {
        check_input(x);
        if (v.size() != output_size()) throw std::invalid_argument(id_ + ": vjp size mismatch");
        const int W = in_shape_.width, C = in_shape_.channels;
        // transpose of cols pass
        std::vector<double> mid(static_cast<std::size_t>(out_h_) * W * C, 0.0);
        for (int i = 0; i < out_h_; ++i)
            for (int j = 0; j < out_w_; ++j) {
                const auto& cc = cols_[static_cast<std::size_t>(j)];
                for (std::size_t k = 0; k < cc.w.size(); ++k) {
                    const int c = cc.start + static_cast<int>(k);
                    const double w = cc.w[k];
                    for (int ch = 0; ch < C; ++ch)
                        mid[(static_cast<std::size_t>(i) * W + c) * C + ch] +=
                            w * v[(static_cast<std::size_t>(i) * out_w_ + j) * C + ch];
                }
            }
        // transpose of rows pass
        ImageGrid g(in_shape_);
        for (int i = 0; i < out_h_; ++i) {
            const auto& rr = rows_[static_cast<std::size_t>(i)];
            for (std::size_t k = 0; k < rr.w.size(); ++k) {
                const int r = rr.start + static_cast<int>(k);
                const double w = rr.w[k];
                const std::size_t dst = (static_cast<std::size_t>(r) * W) * C;
                const std::size_t src = (static_cast<std::size_t>(i) * W) * C;
                for (int j = 0; j < W * C; ++j) g[dst + j] += w * mid[src + j];
            }
        }
        return g;
    }

    bool is_linear() const override { return true; }
    std::size_t output_size() const override {
        return static_cast<std::size_t>(out_h_) * out_w_ * in_shape_.channels;
    }
    std::vector<int> output_shape() const override { return {out_h_, out_w_, in_shape_.channels}; }

private:
    int factor_;
    int out_h_ = 0, out_w_ = 0;
    std::vector<ResizeRow> rows_, cols_;
};

// ---- circular convolution --------------------------------------------------

// Shared core for the blur family: circular (wrap-around) convolution with a
// fixed odd-sized kernel. Small kernels run directly, larger ones through the
// frequency domain. The adjoint is convolution with the point-reflected kernel.
class CircularConv {
public:
    CircularConv(GridShape shape, std::vector<double> kernel, int kh, int kw)
        : shape_(shape), kernel_(std::move(kernel)), kh_(kh), kw_(kw) {
        if (kh_ < 1 || kw_ < 1 || kh_ % 2 == 0 || kw_ % 2 == 0)
            throw std::invalid_argument("CircularConv: kernel dims must be odd and positive");
        if (kernel_.size() != static_cast<std::size_t>(kh_) * kw_)
            throw std::invalid_argument("CircularConv: kernel size mismatch");
        use_fft_ = static_cast<std::size_t>(kh_) * kw_ > 169;
        if (use_fft_) {
            plan_ = std::make_unique<fft::Plan2d>(shape_.height, shape_.width);
            freq_ = kernel_freq();
        } else {
            try_factor();
        }
    }

    // out(p) = sum_k kernel(k) * x(p - k + center), indices wrapped
    void apply(const ImageGrid& x, ImageGrid& out, bool flipped) const {
        if (use_fft_)
            apply_fft(x, out, flipped);
        else if (separable_)
            apply_separable(x, out, flipped);
        else
            apply_direct(x, out, flipped);
    }

    const GridShape& shape() const { return shape_; }

private:
    // rank-1 kernels (e.g. Gaussians) split into a horizontal and a vertical
    // 1D pass; (kh + kw) taps per pixel instead of kh * kw
    void try_factor() {
        int pa = 0, pb = 0;
        double best = 0.0;
        for (int a = 0; a < kh_; ++a)
            for (int b = 0; b < kw_; ++b) {
                const double m = std::fabs(kernel_[static_cast<std::size_t>(a) * kw_ + b]);
                if (m > best) {
                    best = m;
                    pa = a;
                    pb = b;
                }
            }
        if (best == 0.0) return;
        std::vector<double> u(static_cast<std::size_t>(kh_)), v(static_cast<std::size_t>(kw_));
        const double pivot = kernel_[static_cast<std::size_t>(pa) * kw_ + pb];
        for (int a = 0; a < kh_; ++a) u[static_cast<std::size_t>(a)] =
            kernel_[static_cast<std::size_t>(a) * kw_ + pb];
        for (int b = 0; b < kw_; ++b) v[static_cast<std::size_t>(b)] =
            kernel_[static_cast<std::size_t>(pa) * kw_ + b] / pivot;
        for (int a = 0; a < kh_; ++a)
            for (int b = 0; b < kw_; ++b) {
                const double want = u[static_cast<std::size_t>(a)] * v[static_cast<std::size_t>(b)];
                if (std::fabs(kernel_[static_cast<std::size_t>(a) * kw_ + b] - want) >
                    1e-14 * best)
                    return;
            }
        u_ = std::move(u);
        v_ = std::move(v);
        separable_ = true;
    }

    void apply_separable(const ImageGrid& x, ImageGrid& out, bool flipped) const {
        const int H = shape_.height, W = shape_.width, C = shape_.channels;
        const int ch2 = kh_ / 2, cw2 = kw_ / 2;
        const int WC = W * C;
        std::vector<double> tmp(static_cast<std::size_t>(H) * WC, 0.0);
        // horizontal pass with v (flipped reverses both factors)
        for (int b = 0; b < kw_; ++b) {
            const double kv = flipped ? v_[static_cast<std::size_t>(kw_ - 1 - b)]
                                      : v_[static_cast<std::size_t>(b)];
            if (kv == 0.0) continue;
            int dc = (b - cw2) % W;
            if (dc < 0) dc += W;
            const int head = dc * C;
            for (int i = 0; i < H; ++i) {
                const double* src = x.data().data() + static_cast<std::size_t>(i) * WC;
                double* dst = tmp.data() + static_cast<std::size_t>(i) * WC;
                for (int p = head; p < WC; ++p) dst[p] += kv * src[p - head];
                for (int p = 0; p < head; ++p) dst[p] += kv * src[p - head + WC];
            }
        }
        // vertical pass with u: whole-row accumulation
        for (auto& o : out.data()) o = 0.0;
        for (int a = 0; a < kh_; ++a) {
            const double kv = flipped ? u_[static_cast<std::size_t>(kh_ - 1 - a)]
                                      : u_[static_cast<std::size_t>(a)];
            if (kv == 0.0) continue;
            int dr = (a - ch2) % H;
            if (dr < 0) dr += H;
            for (int i = 0; i < H; ++i) {
                int si = i - dr;
                if (si < 0) si += H;
                const double* src = tmp.data() + static_cast<std::size_t>(si) * WC;
                double* dst = out.data().data() + static_cast<std::size_t>(i) * WC;
                for (int p = 0; p < WC; ++p) dst[p] += kv * src[p];
            }
        }
    }

    // per tap: source rows are whole rows, source columns a circular shift,
    // so each output row splits into two contiguous spans
    void apply_direct(const ImageGrid& x, ImageGrid& out, bool flipped) const {
        const int H = shape_.height, W = shape_.width, C = shape_.channels;
        const int ch2 = kh_ / 2, cw2 = kw_ / 2;
        const int WC = W * C;
        for (auto& v : out.data()) v = 0.0;
        for (int a = 0; a < kh_; ++a)
            for (int b = 0; b < kw_; ++b) {
                const double kv = flipped ? kernel_[static_cast<std::size_t>(kh_ - 1 - a) * kw_ +
                                                    (kw_ - 1 - b)]
                                          : kernel_[static_cast<std::size_t>(a) * kw_ + b];
                if (kv == 0.0) continue;
                int dr = (a - ch2) % H;
                if (dr < 0) dr += H;
                int dc = (b - cw2) % W;
                if (dc < 0) dc += W;
                const int head = dc * C;  // output offset where source column 0 lands
                for (int i = 0; i < H; ++i) {
                    int si = i - dr;
                    if (si < 0) si += H;
                    const double* src = x.data().data() + static_cast<std::size_t>(si) * WC;
                    double* dst = out.data().data() + static_cast<std::size_t>(i) * WC;
                    for (int p = head; p < WC; ++p) dst[p] += kv * src[p - head];
                    for (int p = 0; p < head; ++p) dst[p] += kv * src[p - head + WC];
                }
            }
    }

    std::vector<fft::cdouble> kernel_freq() const {
        const int H = shape_.height, W = shape_.width;
        const int ch2 = kh_ / 2, cw2 = kw_ / 2;
        std::vector<fft::cdouble> k(static_cast<std::size_t>(H) * W, fft::cdouble{0, 0});
        for (int a = 0; a < kh_; ++a)
            for (int b = 0; b < kw_; ++b) {
                int r = (a - ch2) % H;
                if (r < 0) r += H;
                int c = (b - cw2) % W;
                if (c < 0) c += W;
                k[static_cast<std::size_t>(r) * W + c] +=
                    kernel_[static_cast<std::size_t>(a) * kw_ + b];
            }
        plan_->forward(k);
        return k;
    }

    void apply_fft(const ImageGrid& x, ImageGrid& out, bool flipped) const {
        const int H = shape_.height, W = shape_.width, C = shape_.channels;
        std::vector<fft::cdouble> buf(static_cast<std::size_t>(H) * W);
        for (int c = 0; c < C; ++c) {
            for (std::size_t p = 0; p < buf.size(); ++p)
                buf[p] = fft::cdouble{x[p * static_cast<std::size_t>(C) + c], 0.0};
            plan_->forward(buf);
            for (std::size_t p = 0; p < buf.size(); ++p)
                buf[p] *= flipped ? std::conj(freq_[p]) : freq_[p];
            plan_->inverse(buf);
            for (std::size_t p = 0; p < buf.size(); ++p)
                out[p * static_cast<std::size_t>(C) + c] = buf[p].real();
        }
    }

    GridShape shape_;
    std::vector<double> kernel_;
    int kh_, kw_;
    bool use_fft_ = false;
    bool separable_ = false;
    std::vector<double> u_, v_;  // kernel = u_ (vertical) x v_ (horizontal)
    std::unique_ptr<fft::Plan2d> plan_;
    std::vector<fft::cdouble> freq_;
};

inline std::vector<double> gaussian_kernel_2d(int ksize, double blur_sigma) {
    if (ksize < 1 || ksize % 2 == 0)
        throw std::invalid_argument("gaussian kernel: ksize must be odd and positive");
    if (!(blur_sigma > 0.0)) throw std::invalid_argument("gaussian kernel: sigma <= 0");
    std::vector<double> k1(static_cast<std::size_t>(ksize));
    const int c = ksize / 2;
    double s1 = 0.0;
    for (int i = 0; i < ksize; ++i) {
        const double t = (i - c) / blur_sigma;
        k1[static_cast<std::size_t>(i)] = std::exp(-0.5 * t * t);
        s1 += k1[static_cast<std::size_t>(i)];
    }
    for (auto& v : k1) v /= s1;
    std::vector<double> k2(static_cast<std::size_t>(ksize) * ksize);
    for (int a = 0; a < ksize; ++a)
        for (int b = 0; b < ksize; ++b)
            k2[static_cast<std::size_t>(a) * ksize + b] =
                k1[static_cast<std::size_t>(a)] * k1[static_cast<std::size_t>(b)];
    return k2;
}

// Random-walk exposure trace: a point mass wanders from the kernel center with
// normally perturbed heading; `intensity` scales the heading jitter (straighter
// streaks near 0, tangled ones near 1). Deposits are bilinear, kernel sums to 1.
inline std::vector<double> motion_kernel_2d(int ksize, double intensity, std::uint64_t seed) {
    if (ksize < 3 || ksize % 2 == 0)
        throw std::invalid_argument("motion kernel: ksize must be odd and >= 3");
    if (!(intensity >= 0.0 && intensity <= 1.0))
        throw std::invalid_argument("motion kernel: intensity outside [0, 1]");
    RngStream stream(seed, StreamId{0, 0, purpose::operator_setup});
    std::vector<double> k(static_cast<std::size_t>(ksize) * ksize, 0.0);
    double y = ksize / 2, x = ksize / 2;
    double angle = 2.0 * std::numbers::pi * stream.uniform();
    const int n_deposits = 2 * ksize;
    for (int t = 0; t < n_deposits; ++t) {
        const int iy = static_cast<int>(std::floor(y));
        const int ix = static_cast<int>(std::floor(x));
        const double fy = y - iy, fx = x - ix;
        for (int dy = 0; dy <= 1; ++dy)
            for (int dx = 0; dx <= 1; ++dx) {
                const int ry = std::clamp(iy + dy, 0, ksize - 1);
                const int rx = std::clamp(ix + dx, 0, ksize - 1);
                const double w = (dy ? fy : 1.0 - fy) * (dx ? fx : 1.0 - fx);
                k[static_cast<std::size_t>(ry) * ksize + rx] += w;
            }
        angle += intensity * stream.gaussian();
        y = std::clamp(y + 0.5 * std::sin(angle), 0.0, ksize - 1.0);
        x = std::clamp(x + 0.5 * std::cos(angle), 0.0, ksize - 1.0);
    }
    double sum = 0.0;
    for (double v : k) sum += v;
    for (auto& v : k) v /= sum;
    return k;
}

class BlurOp final : public ForwardOperator {
public:
    BlurOp(GridShape shape, std::vector<double> kernel, int ksize, std::string id)
        : ForwardOperator(shape, std::move(id)), conv_(shape, std::move(kernel), ksize, ksize) {}

    std::vector<double> forward(const ImageGrid& x) const override {
        check_input(x);
        ImageGrid out(in_shape_);
        conv_.apply(x, out, false);
        return std::move(out.data());
    }

    ImageGrid vjp(const ImageGrid& x, std::span<const double> v) const override {
        check_input(x);
        if (v.size() != output_size()) throw std::invalid_argument(id_ + ": vjp size mismatch");
        ImageGrid vin(in_shape_, std::vector<double>(v.begin(), v.end()));
        ImageGrid g(in_shape_);
        conv_.apply(vin, g, true);
        return g;
    }

    bool is_linear() const override { return true; }
    std::size_t output_size() const override { return in_shape_.size(); }
    std::vector<int> output_shape() const override {
        return {in_shape_.height, in_shape_.width, in_shape_.channels};
    }

private:
    CircularConv conv_;
};

// ---- phase retrieval --------------------------------------------------------

// Fourier magnitudes of the zero-padded image, unitary DFT convention so the
// adjoint is the plain inverse transform and gradient scale is resolution-free.
class PhaseRetrievalOp final : public ForwardOperator {
public:
    static constexpr double eps_mag = 1e-12;

    // |z| without the overflow-guarded hypot path; spectra here are O(1)
    static double mag_of(fft::cdouble z) {
        return std::sqrt(z.real() * z.real() + z.imag() * z.imag());
    }

    PhaseRetrievalOp(GridShape shape, double oversample)
        : ForwardOperator(shape, "phase-retrieval") {
        if (!(oversample >= 1.0)) throw std::invalid_argument(id_ + ": oversample < 1");
        const double ph = oversample * shape.height;
        const double pw = oversample * shape.width;
        ph_ = static_cast<int>(std::lround(ph));
        pw_ = static_cast<int>(std::lround(pw));
        if (std::fabs(ph - ph_) > 1e-9 || std::fabs(pw - pw_) > 1e-9)
            throw std::invalid_argument(id_ + ": oversample * dims must be integral");
        row_plan_ = std::make_unique<fft::Plan1d>(pw_);
        col_plan_ = std::make_unique<fft::Plan1d>(ph_);
        unit_ = 1.0 / std::sqrt(static_cast<double>(ph_) * pw_);
    }

    std::vector<double> forward(const ImageGrid& x) const override {
        check_input(x);
        const int C = in_shape_.channels;
        std::vector<double> out(output_size());
        std::vector<fft::cdouble> buf;
        for (int c = 0; c < C; ++c) {
            spectrum(x, c, buf);
            const std::size_t off = static_cast<std::size_t>(c) * ph_ * pw_;
            for (std::size_t p = 0; p < buf.size(); ++p) out[off + p] = mag_of(buf[p]);
        }
        return out;
    }

    ImageGrid vjp(const ImageGrid& x, std::span<const double> v) const override {
        check_input(x);
        if (v.size() != output_size()) throw std::invalid_argument(id_ + ": vjp size mismatch");
        ImageGrid g(in_shape_);
        std::vector<fft::cdouble> buf;
        for (int c = 0; c < in_shape_.channels; ++c) {
            spectrum(x, c, buf);
            const std::size_t off = static_cast<std::size_t>(c) * ph_ * pw_;
            phase_project(buf, v.subspan(off, static_cast<std::size_t>(ph_) * pw_));
            pull_back(buf, g, c);
        }
        return g;
    }

    // Fused path: one spectrum per channel serves both the residual and its
    // pullback, halving FFT work in the inner loop.
    ImageGrid data_fit_grad(const ImageGrid& x, std::span<const double> y, double tau,
                            double* residual_norm = nullptr) const override {
        check_grad_args(x, y, tau);
        ImageGrid g(in_shape_);
        std::vector<fft::cdouble> buf;
        double rn2 = 0.0;
        const double s = 1.0 / (tau * tau);
        for (int c = 0; c < in_shape_.channels; ++c) {
            spectrum(x, c, buf);
            const std::size_t off = static_cast<std::size_t>(c) * ph_ * pw_;
            for (std::size_t p = 0; p < buf.size(); ++p) {
                const double mag = mag_of(buf[p]);
                const double r = mag - y[off + p];
                rn2 += r * r;
                buf[p] *= r / std::max(mag, eps_mag);
            }
            pull_back(buf, g, c);
        }
        if (residual_norm) *residual_norm = std::sqrt(rn2);
        for (auto& v : g.data()) v *= s;
        return g;
    }

    bool is_linear() const override { return false; }
    std::size_t output_size() const override {
        return static_cast<std::size_t>(ph_) * pw_ * in_shape_.channels;
    }
    std::vector<int> output_shape() const override { return {ph_, pw_, in_shape_.channels}; }

private:
    // separable transform, skipping row FFTs of the all-zero padding rows
    void spectrum(const ImageGrid& x, int c, std::vector<fft::cdouble>& buf) const {
        const int H = in_shape_.height, W = in_shape_.width, C = in_shape_.channels;
        buf.assign(static_cast<std::size_t>(ph_) * pw_, fft::cdouble{0.0, 0.0});
        for (int i = 0; i < H; ++i) {
            fft::cdouble* row = buf.data() + static_cast<std::size_t>(i) * pw_;
            for (int j = 0; j < W; ++j)
                row[j] = fft::cdouble{x[(static_cast<std::size_t>(i) * W + j) * C + c], 0.0};
            row_plan_->forward(row);
        }
        // columns in tiles of four: one cache line per row visit
        std::vector<fft::cdouble> col(4 * static_cast<std::size_t>(ph_));
        for (int j0 = 0; j0 < pw_; j0 += 4) {
            const int tn = std::min(4, pw_ - j0);
            for (int i = 0; i < ph_; ++i) {
                const fft::cdouble* brow = buf.data() + static_cast<std::size_t>(i) * pw_ + j0;
                for (int t = 0; t < tn; ++t) col[static_cast<std::size_t>(t) * ph_ + i] = brow[t];
            }
            for (int t = 0; t < tn; ++t)
                col_plan_->forward(col.data() + static_cast<std::size_t>(t) * ph_);
            for (int i = 0; i < ph_; ++i) {
                fft::cdouble* brow = buf.data() + static_cast<std::size_t>(i) * pw_ + j0;
                for (int t = 0; t < tn; ++t)
                    brow[t] = col[static_cast<std::size_t>(t) * ph_ + i] * unit_;
            }
        }
    }

    // buf <- (buf / max(|buf|, eps)) * v, elementwise
    void phase_project(std::vector<fft::cdouble>& buf, std::span<const double> v) const {
        for (std::size_t p = 0; p < buf.size(); ++p)
            buf[p] *= v[p] / std::max(mag_of(buf[p]), eps_mag);
    }

    // g(:, :, c) = real part of the unitary inverse transform, cropped. Only
    // the rows that survive the crop are inverse-transformed.
    void pull_back(std::vector<fft::cdouble>& buf, ImageGrid& g, int c) const {
        const int H = in_shape_.height, W = in_shape_.width, C = in_shape_.channels;
        std::vector<fft::cdouble> col(4 * static_cast<std::size_t>(ph_));
        for (int j0 = 0; j0 < pw_; j0 += 4) {
            const int tn = std::min(4, pw_ - j0);
            for (int i = 0; i < ph_; ++i) {
                const fft::cdouble* brow = buf.data() + static_cast<std::size_t>(i) * pw_ + j0;
                for (int t = 0; t < tn; ++t) col[static_cast<std::size_t>(t) * ph_ + i] = brow[t];
            }
            for (int t = 0; t < tn; ++t)
                col_plan_->inverse(col.data() + static_cast<std::size_t>(t) * ph_);
            for (int i = 0; i < H; ++i) {
                fft::cdouble* brow = buf.data() + static_cast<std::size_t>(i) * pw_ + j0;
                for (int t = 0; t < tn; ++t) brow[t] = col[static_cast<std::size_t>(t) * ph_ + i];
            }
        }
        const double s = std::sqrt(static_cast<double>(ph_) * pw_);
        for (int i = 0; i < H; ++i) {
            fft::cdouble* row = buf.data() + static_cast<std::size_t>(i) * pw_;
            row_plan_->inverse(row);
            for (int j = 0; j < W; ++j)
                g[(static_cast<std::size_t>(i) * W + j) * C + c] = s * row[j].real();
        }
    }

    int ph_ = 0, pw_ = 0;
    double unit_ = 1.0;
    std::unique_ptr<fft::Plan1d> row_plan_;
    std::unique_ptr<fft::Plan1d> col_plan_;
};

// ---- pointwise nonlinear ----------------------------------------------------

class HdrOp final : public ForwardOperator {
public:
    HdrOp(GridShape shape, double factor) : ForwardOperator(shape, "hdr-clip"), factor_(factor) {
        if (!(factor > 0.0)) throw std::invalid_argument(id_ + ": factor <= 0");
    }

    std::vector<double> forward(const ImageGrid& x) const override {
        check_input(x);
        std::vector<double> out(x.data());
        for (auto& v : out) v = std::clamp(factor_ * v, -1.0, 1.0);
        return out;
    }

    ImageGrid vjp(const ImageGrid& x, std::span<const double> v) const override {
        check_input(x);
        if (v.size() != output_size()) throw std::invalid_argument(id_ + ": vjp size mismatch");
        ImageGrid g(in_shape_);
        for (std::size_t i = 0; i < g.size(); ++i) {
            const double u = factor_ * x[i];
            g[i] = (u > -1.0 && u < 1.0) ? factor_ * v[i] : 0.0;  // 0 on the clip boundary
        }
        return g;
    }

    bool is_linear() const override { return false; }
    std::size_t output_size() const override { return in_shape_.size(); }
    std::vector<int> output_shape() const override {
        return {in_shape_.height, in_shape_.width, in_shape_.channels};
    }

private:
    double factor_;
};

// tanh(gain * blur(x)) / gain: a smooth saturating distortion of a Gaussian
// blur. gain -> 0 recovers the plain blur.
class NonlinearBlurOp final : public ForwardOperator {
public:
    NonlinearBlurOp(GridShape shape, int ksize, double blur_sigma, double gain)
        : ForwardOperator(shape, "blur-nonlinear"),
          conv_(shape, gaussian_kernel_2d(ksize, blur_sigma), ksize, ksize),
          gain_(gain) {
        if (!(gain > 0.0)) throw std::invalid_argument(id_ + ": gain <= 0");
    }

    std::vector<double> forward(const ImageGrid& x) const override {
        check_input(x);
        ImageGrid b(in_shape_);
        conv_.apply(x, b, false);
        std::vector<double> out(std::move(b.data()));
        for (auto& v : out) v = std::tanh(gain_ * v) / gain_;
        return out;
    }

    ImageGrid vjp(const ImageGrid& x, std::span<const double> v) const override {
        check_input(x);
        if (v.size() != output_size()) throw std::invalid_argument(id_ + ": vjp size mismatch");
        ImageGrid b(in_shape_);
        conv_.apply(x, b, false);
        ImageGrid scaled(in_shape_);
        for (std::size_t i = 0; i < scaled.size(); ++i) {
            const double t = std::tanh(gain_ * b[i]);
            scaled[i] = (1.0 - t * t) * v[i];
        }
        ImageGrid g(in_shape_);
        conv_.apply(scaled, g, true);
        return g;
    }

    bool is_linear() const override { return false; }
    std::size_t output_size() const override { return in_shape_.size(); }
    std::vector<int> output_shape() const override {
        return {in_shape_.height, in_shape_.width, in_shape_.channels};
    }

private:
    CircularConv conv_;
    double gain_;
};

}  // namespace detail

// ---- factories --------------------------------------------------------------

inline std::unique_ptr<ForwardOperator> make_random_inpaint(GridShape shape, double keep_prob,
                                                            std::uint64_t mask_seed) {
    if (!(keep_prob >= 0.0 && keep_prob <= 1.0))
        throw std::invalid_argument("inpaint-random: keep_prob outside [0, 1]");
    RngStream stream(mask_seed, StreamId{0, 0, purpose::operator_setup});
    std::vector<std::size_t> kept;
    const std::size_t n_pixels = static_cast<std::size_t>(shape.height) * shape.width;
    for (std::size_t p = 0; p < n_pixels; ++p)
        if (stream.uniform() <= keep_prob) kept.push_back(p);
    return std::make_unique<detail::InpaintOp>(shape, std::move(kept), "inpaint-random");
}

inline std::unique_ptr<ForwardOperator> make_box_inpaint(GridShape shape, int box_h, int box_w,
                                                         std::uint64_t position_seed) {
    if (box_h < 0 || box_w < 0 || box_h > shape.height || box_w > shape.width)
        throw std::invalid_argument("inpaint-box: box does not fit the image");
    RngStream stream(position_seed, StreamId{0, 0, purpose::operator_setup});
    auto draw = [&stream](int range) {
        return std::min(static_cast<int>(stream.uniform() * (range + 1)), range);
    };
    const int top = draw(shape.height - box_h);
    const int left = draw(shape.width - box_w);
    std::vector<std::size_t> kept;
    for (int i = 0; i < shape.height; ++i)
        for (int j = 0; j < shape.width; ++j) {
            const bool inside =
                i >= top && i < top + box_h && j >= left && j < left + box_w;
            if (!inside) kept.push_back(static_cast<std::size_t>(i) * shape.width + j);
        }
    return std::make_unique<detail::InpaintOp>(shape, std::move(kept), "inpaint-box");
}

enum class DownsampleKernel { bicubic, average };

inline std::unique_ptr<ForwardOperator> make_downsample(GridShape shape, int factor,
                                                        DownsampleKernel kernel) {
    return std::make_unique<detail::DownsampleOp>(shape, factor,
                                                  kernel == DownsampleKernel::bicubic);
}

inline std::unique_ptr<ForwardOperator> make_gaussian_blur(GridShape shape, int ksize,
                                                           double blur_sigma) {
    return std::make_unique<detail::BlurOp>(shape, detail::gaussian_kernel_2d(ksize, blur_sigma),
                                            ksize, "blur-gauss");
}

inline std::unique_ptr<ForwardOperator> make_motion_blur(GridShape shape, int ksize,
                                                         double intensity,
                                                         std::uint64_t kernel_seed) {
    return std::make_unique<detail::BlurOp>(
        shape, detail::motion_kernel_2d(ksize, intensity, kernel_seed), ksize, "blur-motion");
}

inline std::unique_ptr<ForwardOperator> make_phase_retrieval(GridShape shape, double oversample) {
    return std::make_unique<detail::PhaseRetrievalOp>(shape, oversample);
}

inline std::unique_ptr<ForwardOperator> make_hdr(GridShape shape, double factor) {
    return std::make_unique<detail::HdrOp>(shape, factor);
}

inline std::unique_ptr<ForwardOperator> make_nonlinear_blur(GridShape shape, int ksize,
                                                            double blur_sigma, double gain) {
    return std::make_unique<detail::NonlinearBlurOp>(shape, ksize, blur_sigma, gain);
}

}  // namespace dmo
