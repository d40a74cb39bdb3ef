#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

#include "dmo/grid.hpp"
#include "dmo/operators.hpp"
#include "dmo/prior.hpp"
#include "dmo/rng.hpp"
#include "dmo/schedule.hpp"

namespace dmo {

enum class InnerOptimizer { sgld, adam };

struct MoConfig {
    int n_sgld = 100;           // data-fit steps per outer iteration
    double base_eta = 5e-5;     // SGLD rate before decay
    double tau = 0.01;          // measurement-match temperature
    LrDecay decay{};            // decay shape (floor_ratio, power); base comes from base_eta
    InnerOptimizer optimizer = InnerOptimizer::sgld;
    double adam_lr = 1e-2;      // deterministic baseline optimizer
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_eps = 1e-8;
    double divergence_guard = 1e6;  // abort when the residual norm passes this

    void validate() const {
        if (n_sgld < 0) throw std::invalid_argument("MoConfig: n_sgld < 0");
        if (!(base_eta > 0.0)) throw std::invalid_argument("MoConfig: base_eta <= 0");
        if (!(tau > 0.0)) throw std::invalid_argument("MoConfig: tau <= 0");
        if (!(adam_lr > 0.0)) throw std::invalid_argument("MoConfig: adam_lr <= 0");
        if (!(divergence_guard > 0.0)) throw std::invalid_argument("MoConfig: bad guard");
        decay.validate();
    }

    // decayed SGLD rate at countdown index i of n (i=n first outer step, i=0 last)
    double rate_at(int i, int n) const {
        LrDecay d = decay;
        d.base_eta = base_eta;
        return d.rate(i, n);
    }
};

// One Langevin step on the data-fit energy: x - eta*grad + sqrt(2*eta)*noise.
// eta == 0 returns x unchanged (the zero-temperature fixed point).
inline ImageGrid sgld_step(const ImageGrid& x, const ImageGrid& grad, double eta,
                           RngStream& stream) {
    require_same_shape(x, grad, "sgld_step");
    if (eta < 0.0) throw std::invalid_argument("sgld_step: negative step size");
    if (eta == 0.0) return x;
    ImageGrid out = x;
    const double amp = std::sqrt(2.0 * eta);
    auto& os = out.data();
    const auto& gs = grad.data();
    for (std::size_t i = 0; i < os.size(); ++i) os[i] += -eta * gs[i] + amp * stream.gaussian();
    return out;
}

// Runs cfg.n_sgld optimization steps on ||y - A(x)||^2 / (2 tau^2) starting
// from x. `eta` is the decayed SGLD rate for this outer step. Adam keeps its
// moment state local to the call and adds no noise. Throws on divergence.
inline ImageGrid run_inner_opt(const ForwardOperator& op, const Measurement& y, ImageGrid x,
                               const MoConfig& cfg, double eta, RngStream& stream) {
    cfg.validate();
    if (eta < 0.0) throw std::invalid_argument("run_inner_opt: negative eta");
    std::vector<double> m, v;
    if (cfg.optimizer == InnerOptimizer::adam) {
        m.assign(x.size(), 0.0);
        v.assign(x.size(), 0.0);
    }
    for (int k = 0; k < cfg.n_sgld; ++k) {
        double rn = 0.0;
        ImageGrid g = data_fit_grad(op, x, y, cfg.tau, &rn);
        if (!std::isfinite(rn) || rn > cfg.divergence_guard)
            throw std::runtime_error("run_inner_opt: residual diverged (" + op.id() + ")");
        if (cfg.optimizer == InnerOptimizer::sgld) {
            x = sgld_step(x, g, eta, stream);
        } else {
            const auto& gs = g.data();
            auto& xs = x.data();
            const double b1 = cfg.adam_beta1, b2 = cfg.adam_beta2;
            const double c1 = 1.0 - std::pow(b1, k + 1);
            const double c2 = 1.0 - std::pow(b2, k + 1);
            for (std::size_t i = 0; i < xs.size(); ++i) {
                m[i] = b1 * m[i] + (1.0 - b1) * gs[i];
                v[i] = b2 * v[i] + (1.0 - b2) * gs[i] * gs[i];
                xs[i] -= cfg.adam_lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + cfg.adam_eps);
            }
        }
    }
    return x;
}

// Noise-then-denoise projection onto the prior at scale sigma:
// D(x + sigma * eps; sigma).
inline ImageGrid prior_query(const PriorDataset& ds, const ImageGrid& x, double sigma,
                             RngStream& stream) {
    if (!(sigma > 0.0)) throw std::invalid_argument("prior_query: sigma must be positive");
    ImageGrid noisy = x;
    auto& ns = noisy.data();
    for (std::size_t i = 0; i < ns.size(); ++i) ns[i] += sigma * stream.gaussian();
    return denoise(ds, noisy, sigma);
}

// One full measurement-optimization move: fit the measurement from x_init,
// then project back onto the prior at the current noise scale.
inline ImageGrid measurement_optimization(const PriorDataset& ds, const ForwardOperator& op,
                                          const Measurement& y, const ImageGrid& x_init,
                                          const MoConfig& cfg, double sigma, double eta,
                                          RngStream& inner_stream, RngStream& prior_stream) {
    ImageGrid x = run_inner_opt(op, y, x_init, cfg, eta, inner_stream);
    return prior_query(ds, x, sigma, prior_stream);
}

}  // namespace dmo
