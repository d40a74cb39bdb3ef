#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "dmo/grid.hpp"
#include "dmo/mo.hpp"
#include "dmo/operators.hpp"
#include "dmo/prior.hpp"
#include "dmo/rng.hpp"
#include "dmo/schedule.hpp"

namespace dmo {

enum class SamplerKind { dps_mo, red_diff_mo, dps };
enum class MuOptimizer { adam, sgd };

struct SamplerRun {
    EdmSchedule schedule{};
    MoConfig mo{};
    SamplerKind kind = SamplerKind::dps_mo;
    double guidance_scale = 0.3;  // measurement-likelihood step size (plain-DPS only)
    MuOptimizer mu_optimizer = MuOptimizer::adam;
    double mu_lr = 0.1;
    bool per_step_init = true;  // false: reuse one inner-opt solution across outer steps
    std::uint64_t seed = 0;
    std::uint64_t replica = 0;
    bool zero_noise = false;  // test hook: every injected gaussian becomes 0
};

struct SamplerResult {
    ImageGrid x0;
    int nfe = 0;                      // outer steps (inner SGLD costs no denoiser calls)
    std::uint64_t denoise_calls = 0;  // nfe + 1 (the initial denoise)
};

// Probability-flow Euler slope at time t: (sd/s + sigd/sig) * x - (sigd*s/sig) * xhat.
// With s(t)=1, sigma(t)=t this is (x - xhat)/t.
inline ImageGrid euler_slope(double t, const ImageGrid& x, const ImageGrid& xhat) {
    const double sig = sigma_of(t), sigd = sigma_dot(t);
    const double s = s_of(t), sd = s_dot(t);
    const double cx = sigd / sig + sd / s;
    const double ch = sigd * s / sig;
    ImageGrid out(x.shape());
    auto& os = out.data();
    const auto& xs = x.data();
    const auto& hs = xhat.data();
    for (std::size_t i = 0; i < os.size(); ++i) os[i] = cx * xs[i] - ch * hs[i];
    return out;
}

// Gradient of ||y - A(D(x_t; sigma))||^2 with respect to x_t, pulled through
// the exact denoiser. Used by the plain-DPS guidance step and its tests.
inline ImageGrid guidance_grad(const PriorDataset& ds, const ForwardOperator& op,
                               const Measurement& y, const ImageGrid& x_t, double sigma,
                               double* residual_norm = nullptr) {
    const ImageGrid xhat = denoise(ds, x_t, sigma);
    std::vector<double> r = op.forward(xhat);
    double rn2 = 0.0;
    for (std::size_t i = 0; i < r.size(); ++i) {
        r[i] -= y.values[i];
        rn2 += r[i] * r[i];
    }
    if (residual_norm) *residual_norm = std::sqrt(rn2);
    ImageGrid pulled = op.vjp(xhat, r);
    ImageGrid g = denoiser_vjp(ds, x_t, sigma, pulled);
    for (auto& v : g.data()) v *= 2.0;
    return g;
}

namespace detail {

inline void check_run(const PriorDataset& ds, const ForwardOperator& op, const Measurement& y,
                      const SamplerRun& run) {
    run.schedule.validate();
    run.mo.validate();
    if (!(ds.shape() == op.input_shape()))
        throw std::invalid_argument("sampler: dataset/operator shape mismatch");
    if (y.values.size() != op.output_size())
        throw std::invalid_argument("sampler: measurement size mismatch");
}

inline void check_iterate(const ImageGrid& x, const char* who) {
    if (!all_finite(x)) throw std::runtime_error(std::string(who) + ": non-finite iterate");
}

inline RngStream run_stream(const SamplerRun& run, std::uint64_t step, std::uint64_t purpose_id) {
    const StreamId id{run.replica, step, purpose_id};
    return run.zero_noise ? RngStream::zeroed(run.seed, id) : RngStream(run.seed, id);
}

inline ImageGrid draw_init(const GridShape& shape, double sigma_max, const SamplerRun& run) {
    RngStream stream = run_stream(run, 0, purpose::init_noise);
    ImageGrid x = gaussian_grid(shape, stream);
    for (auto& v : x.data()) v *= sigma_max;
    return x;
}

}  // namespace detail

// Outer Euler diffusion loop where each denoiser evaluation is replaced by a
// full measurement-optimization move. The appended t=0 grid entry makes the
// final step land exactly on the last x0 estimate.
inline SamplerResult dps_mo(const PriorDataset& ds, const ForwardOperator& op,
                            const Measurement& y, const SamplerRun& run) {
    detail::check_run(ds, op, y, run);
    const std::vector<double> grid = run.schedule.time_grid();
    const int n = run.schedule.n_steps;

    ImageGrid x = detail::draw_init(ds.shape(), grid[0], run);
    ImageGrid xhat = denoise(ds, x, grid[0]);
    std::uint64_t calls = 1;

    ImageGrid x_fixed;  // same-solution mode: one inner solve shared by all steps
    for (std::size_t j = 0; j + 1 < grid.size(); ++j) {
        const double t = grid[j];
        const double t_next = grid[j + 1];
        const double eta = run.mo.rate_at(n - static_cast<int>(j), n);
        RngStream inner = detail::run_stream(run, j, purpose::inner_noise);
        RngStream prior = detail::run_stream(run, j, purpose::prior_noise);
        if (run.per_step_init) {
            xhat = measurement_optimization(ds, op, y, xhat, run.mo, t, eta, inner, prior);
        } else {
            if (j == 0) x_fixed = run_inner_opt(op, y, xhat, run.mo, eta, inner);
            xhat = prior_query(ds, x_fixed, t, prior);
        }
        ++calls;
        detail::check_iterate(xhat, "dps_mo");
        if (t_next == 0.0) {
            x = xhat;
        } else {
            x = axpy(t_next - t, euler_slope(t, x, xhat), x);
        }
        detail::check_iterate(x, "dps_mo");
    }
    return SamplerResult{std::move(x), n, calls};
}

// Plain diffusion posterior sampling: the same noise-then-denoise backbone,
// but the measurement enters only through one normalized guidance gradient per
// step instead of an inner optimization loop. With guidance_scale == 0 this is
// bit-identical to dps_mo with n_sgld == 0 under the same seeds.
inline SamplerResult dps_baseline(const PriorDataset& ds, const ForwardOperator& op,
                                  const Measurement& y, const SamplerRun& run) {
    detail::check_run(ds, op, y, run);
    const std::vector<double> grid = run.schedule.time_grid();
    const int n = run.schedule.n_steps;

    ImageGrid x = detail::draw_init(ds.shape(), grid[0], run);
    ImageGrid xhat = denoise(ds, x, grid[0]);
    std::uint64_t calls = 1;

    for (std::size_t j = 0; j + 1 < grid.size(); ++j) {
        const double t = grid[j];
        const double t_next = grid[j + 1];
        RngStream prior = detail::run_stream(run, j, purpose::prior_noise);
        ImageGrid x_t = xhat;
        auto& xts = x_t.data();
        for (std::size_t i = 0; i < xts.size(); ++i) xts[i] += t * prior.gaussian();
        xhat = denoise(ds, x_t, t);
        ++calls;
        if (run.guidance_scale != 0.0) {
            std::vector<double> r = op.forward(xhat);
            double rn2 = 0.0;
            for (std::size_t i = 0; i < r.size(); ++i) {
                r[i] -= y.values[i];
                rn2 += r[i] * r[i];
            }
            const double rn = std::sqrt(rn2);
            if (rn > 0.0) {  // zero residual: nothing to guide toward
                ImageGrid g = denoiser_vjp(ds, x_t, t, op.vjp(xhat, r));
                const double zeta = 2.0 * run.guidance_scale / rn;
                xhat = axpy(-zeta, g, xhat);
            }
        }
        detail::check_iterate(xhat, "dps_baseline");
        if (t_next == 0.0) {
            x = xhat;
        } else {
            x = axpy(t_next - t, euler_slope(t, x, xhat), x);
        }
        detail::check_iterate(x, "dps_baseline");
    }
    return SamplerResult{std::move(x), n, calls};
}

// Variational mean optimization: keeps a mean image mu and descends the
// distillation gradient sigma(t) * (eps_hat - eps) at each outer step, where
// eps_hat is inferred from the measurement-optimized x0 estimate. Returns mu.
inline SamplerResult red_diff_mo(const PriorDataset& ds, const ForwardOperator& op,
                                 const Measurement& y, const SamplerRun& run) {
    detail::check_run(ds, op, y, run);
    const std::vector<double> grid = run.schedule.time_grid();
    const int n = run.schedule.n_steps;

    RngStream mu_stream = detail::run_stream(run, 0, purpose::mu_init);
    ImageGrid mu = gaussian_grid(ds.shape(), mu_stream);

    ImageGrid x = detail::draw_init(ds.shape(), grid[0], run);
    ImageGrid xhat = denoise(ds, x, grid[0]);
    std::uint64_t calls = 1;

    std::vector<double> m, v;
    if (run.mu_optimizer == MuOptimizer::adam) {
        m.assign(mu.size(), 0.0);
        v.assign(mu.size(), 0.0);
    }
    int k = 0;
    ImageGrid x_fixed;
    for (std::size_t j = 0; j < grid.size(); ++j) {
        const double t = grid[j];
        if (t == 0.0) break;  // the appended terminal entry drives no update here
        const double eta = run.mo.rate_at(n - static_cast<int>(j), n);
        RngStream inner = detail::run_stream(run, j, purpose::inner_noise);
        RngStream prior = detail::run_stream(run, j, purpose::prior_noise);
        if (run.per_step_init) {
            xhat = measurement_optimization(ds, op, y, xhat, run.mo, t, eta, inner, prior);
        } else {
            if (j == 0) x_fixed = run_inner_opt(op, y, xhat, run.mo, eta, inner);
            xhat = prior_query(ds, x_fixed, t, prior);
        }
        ++calls;
        detail::check_iterate(xhat, "red_diff_mo");

        RngStream distill = detail::run_stream(run, j, purpose::distill_noise);
        // s(t)=1: x_t = mu + sigma*eps, eps_hat = (x_t - xhat)/sigma,
        // grad = sigma*(eps_hat - eps) which collapses to mu - xhat up to rounding
        ImageGrid grad(mu.shape());
        auto& gs = grad.data();
        const auto& ms = mu.data();
        const auto& hs = xhat.data();
        for (std::size_t i = 0; i < gs.size(); ++i) {
            const double eps = distill.gaussian();
            const double x_t = ms[i] + t * eps;
            const double eps_hat = (x_t - hs[i]) / t;
            gs[i] = t * (eps_hat - eps);
        }
        auto& mus = mu.data();
        if (run.mu_optimizer == MuOptimizer::adam) {
            const double b1 = 0.9, b2 = 0.999, ae = 1e-8;
            const double c1 = 1.0 - std::pow(b1, k + 1);
            const double c2 = 1.0 - std::pow(b2, k + 1);
            for (std::size_t i = 0; i < mus.size(); ++i) {
                m[i] = b1 * m[i] + (1.0 - b1) * gs[i];
                v[i] = b2 * v[i] + (1.0 - b2) * gs[i] * gs[i];
                mus[i] -= run.mu_lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + ae);
            }
            ++k;
        } else {
            for (std::size_t i = 0; i < mus.size(); ++i) mus[i] -= run.mu_lr * gs[i];
        }
        detail::check_iterate(mu, "red_diff_mo");
    }
    return SamplerResult{std::move(mu), n, calls};
}

inline SamplerResult run_sampler(const PriorDataset& ds, const ForwardOperator& op,
                                 const Measurement& y, const SamplerRun& run) {
    switch (run.kind) {
        case SamplerKind::dps_mo: return dps_mo(ds, op, y, run);
        case SamplerKind::red_diff_mo: return red_diff_mo(ds, op, y, run);
        case SamplerKind::dps: return dps_baseline(ds, op, y, run);
    }
    throw std::logic_error("run_sampler: unknown sampler kind");
}

}  // namespace dmo
