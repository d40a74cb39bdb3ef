// Self-checks runnable against any resolved experiment config.  Each check
// prints one line; the battery reports overall success so the CLI can turn
// it into an exit code.  Checks favour independent recomputation (dense
// matrices, finite differences, extended precision) over reusing the code
// under test.
#pragma once

#include <cmath>
#include <cstdio>
#include <functional>
#include <memory>
#include <ostream>
#include <string>
#include <vector>

#include "dmo/config.hpp"
#include "dmo/harness.hpp"
#include "dmo/mo.hpp"
#include "dmo/operators.hpp"
#include "dmo/prior.hpp"
#include "dmo/rng.hpp"
#include "dmo/schedule.hpp"

namespace dmo {

namespace detail {

inline void report(std::ostream& os, const std::string& name, bool ok, bool& all,
                   const std::string& info = "") {
    os << (ok ? "PASS" : "FAIL") << "  " << name;
    if (!info.empty()) os << "  (" << info << ")";
    os << "\n";
    if (!ok) all = false;
}

// Central difference of a scalar function along a fixed direction.
inline double central_diff(const std::function<double(const ImageGrid&)>& f, const ImageGrid& x,
                           const ImageGrid& dir, double h) {
    ImageGrid xp = x, xm = x;
    axpy(h, dir, xp);
    axpy(-h, dir, xm);
    return (f(xp) - f(xm)) / (2.0 * h);
}

}  // namespace detail

inline bool run_validation(const ExperimentConfig& cfg, std::ostream& os) {
    bool all = true;
    char buf[160];

    // Schedule shape: literal endpoints, strict decrease, terminal zero.
    {
        bool ok = true;
        std::string info;
        try {
            const auto grid = cfg.schedule.time_grid();
            ok = grid.size() == static_cast<std::size_t>(cfg.schedule.n_steps) + 1 &&
                 grid.front() == cfg.schedule.sigma_max && grid.back() == 0.0 &&
                 grid[grid.size() - 2] == cfg.schedule.sigma_min;
            for (std::size_t i = 0; ok && i + 1 < grid.size(); ++i) ok = grid[i] > grid[i + 1];
        } catch (const std::exception& e) {
            ok = false;
            info = e.what();
        }
        detail::report(os, "schedule grid (endpoints, monotone, terminal zero)", ok, all, info);
    }

    // Step size decay: exact endpoint values.
    {
        LrDecay d = cfg.mo.decay;
        d.base_eta = cfg.mo.base_eta;
        const int n = 100;
        const bool ok = d.rate(n, n) == d.base_eta && d.rate(0, n) == d.base_eta * d.floor_ratio;
        detail::report(os, "sgld step size decay endpoints", ok, all);
    }

    PriorDataset ds = build_dataset(cfg.dataset);

    // Dataset separation: pairwise gaps above the synthesis floor.
    {
        const double floor = 0.1 * std::sqrt(static_cast<double>(ds.dim()));
        double worst = 1e300;
        for (int i = 0; i < ds.size(); ++i)
            for (int j = i + 1; j < ds.size(); ++j)
                worst = std::min(worst, std::sqrt(l2_dist_sq(ds.item(i), ds.item(j))));
        const bool ok = ds.size() < 2 || worst > floor;
        std::snprintf(buf, sizeof(buf), "min gap %.4g, floor %.4g", worst, floor);
        detail::report(os, "dataset separation", ok, all, ds.size() < 2 ? "" : buf);
    }

    const std::uint64_t probe_seed = cfg.seeds.empty() ? 1 : cfg.seeds.front();
    auto op = build_operator(cfg.op, cfg.dataset.shape, probe_seed);
    RngStream probe(probe_seed, StreamId{0, 0, purpose::test});

    // Linear operators: <A x, v> == <x, A^T v> on random pairs.
    if (op->is_linear()) {
        double worst = 0.0;
        for (int trial = 0; trial < 10; ++trial) {
            const ImageGrid x = gaussian_grid(cfg.dataset.shape, probe);
            std::vector<double> v(op->output_size());
            for (auto& w : v) w = probe.gaussian();
            const auto ax = op->forward(x);
            const ImageGrid atv = op->vjp(x, v);
            double lhs = 0.0;
            for (std::size_t k = 0; k < ax.size(); ++k) lhs += ax[k] * v[k];
            double rhs = 0.0;
            for (std::size_t k = 0; k < atv.size(); ++k) rhs += atv[k] * x[k];
            const double scale = std::abs(lhs) + std::abs(rhs) + 1.0;
            worst = std::max(worst, std::abs(lhs - rhs) / scale);
        }
        std::snprintf(buf, sizeof(buf), "max rel err %.3g", worst);
        detail::report(os, "operator adjoint identity", worst <= 1e-12, all, buf);
    } else {
        detail::report(os, "operator adjoint identity", true, all, "skipped: nonlinear operator");
    }

    // All operators: data-fit gradient against central differences.
    {
        ImageGrid x = ds.item(0);
        ImageGrid jitter = gaussian_grid(cfg.dataset.shape, probe);
        axpy(0.05, jitter, x);
        RngStream mnoise(probe_seed, StreamId{0, 0, purpose::measurement_noise});
        const Measurement y = measure(*op, ds.item(0), cfg.op.noise_sigma, mnoise, probe_seed);
        const double tau = cfg.mo.tau;
        auto objective = [&](const ImageGrid& q) {
            const auto aq = op->forward(q);
            double s = 0.0;
            for (std::size_t k = 0; k < aq.size(); ++k) {
                const double d = aq[k] - y.values[k];
                s += d * d;
            }
            return s / (2.0 * tau * tau);
        };
        double rn = 0.0;
        const ImageGrid g = op->data_fit_grad(x, y.values, tau, &rn);
        double worst = 0.0;
        for (int trial = 0; trial < 5; ++trial) {
            ImageGrid dir = gaussian_grid(cfg.dataset.shape, probe);
            const double fd = detail::central_diff(objective, x, dir, 1e-6);
            const double an = dot(g, dir);
            worst = std::max(worst, std::abs(fd - an) / (std::abs(fd) + std::abs(an) + 1e-12));
        }
        std::snprintf(buf, sizeof(buf), "max rel err %.3g", worst);
        detail::report(os, "data-fit gradient vs finite differences", worst <= 1e-4, all, buf);
    }

    // Denoiser: extended-precision direct evaluation of the mixture posterior.
    {
        double worst = 0.0;
        for (double sigma : {0.1, 1.0, 10.0}) {
            for (int trial = 0; trial < 3; ++trial) {
                ImageGrid x = ds.item(trial % ds.size());
                ImageGrid jitter = gaussian_grid(cfg.dataset.shape, probe);
                axpy(sigma, jitter, x);
                const ImageGrid d = denoise(ds, x, sigma);
                // direct evaluation in long double
                std::vector<long double> acc(x.size(), 0.0L);
                long double zmax = -1e4900L;
                std::vector<long double> lw(static_cast<std::size_t>(ds.size()));
                for (int i = 0; i < ds.size(); ++i) {
                    long double d2 = 0.0L;
                    for (std::size_t k = 0; k < x.size(); ++k) {
                        const long double diff =
                            static_cast<long double>(x[k]) - static_cast<long double>(ds.item(i)[k]);
                        d2 += diff * diff;
                    }
                    lw[static_cast<std::size_t>(i)] =
                        -d2 / (2.0L * static_cast<long double>(sigma) * static_cast<long double>(sigma));
                    zmax = std::max(zmax, lw[static_cast<std::size_t>(i)]);
                }
                long double norm = 0.0L;
                for (int i = 0; i < ds.size(); ++i) {
                    const long double w = std::exp(lw[static_cast<std::size_t>(i)] - zmax);
                    norm += w;
                    for (std::size_t k = 0; k < x.size(); ++k)
                        acc[k] += w * static_cast<long double>(ds.item(i)[k]);
                }
                for (std::size_t k = 0; k < x.size(); ++k)
                    worst = std::max(
                        worst, std::abs(d[k] - static_cast<double>(acc[k] / norm)));
            }
        }
        std::snprintf(buf, sizeof(buf), "max abs err %.3g", worst);
        detail::report(os, "denoiser vs extended-precision direct sum", worst <= 1e-10, all, buf);
    }

    // Config echo: serialize, reparse, serialize again; must be identical.
    {
        bool ok = true;
        std::string info;
        try {
            const auto j1 = to_json(cfg);
            ExperimentConfig back;
            apply_json(back, j1);
            ok = to_json(back) == j1;
        } catch (const std::exception& e) {
            ok = false;
            info = e.what();
        }
        detail::report(os, "config round-trip", ok, all, info);
    }

    // Determinism: the same (trimmed) experiment twice, compared field by
    // field with timing removed.  Trimmed so validation stays affordable.
    {
        ExperimentConfig small = cfg;
        if (small.seeds.size() > 2) small.seeds.resize(2);
        small.best_of = std::min(small.best_of, 2);
        small.schedule.n_steps = std::min(small.schedule.n_steps, 8);
        small.mo.n_sgld = std::min(small.mo.n_sgld, 10);
        bool ok = true;
        std::string info;
        try {
            const auto rows1 = run_experiment(small, /*write_outputs=*/false);
            const auto rows2 = run_experiment(small, /*write_outputs=*/false);
            std::string a, b;
            for (const auto& r : rows1) a += to_csv_line(r) + "\n";
            for (const auto& r : rows2) b += to_csv_line(r) + "\n";
            ok = csv_strip_runtime(a) == csv_strip_runtime(b);
        } catch (const std::exception& e) {
            ok = false;
            info = e.what();
        }
        detail::report(os, "determinism double-run (trimmed config)", ok, all, info);
    }

    os << (all ? "validation passed" : "validation FAILED") << "\n";
    return all;
}

}  // namespace dmo
