#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>

namespace dmo {

// Identifies one logical random stream. Streams with distinct ids are
// statistically independent; the same (seed, id) always replays the same
// sequence no matter which thread touches it or how calls interleave with
// other streams.
struct StreamId {
    std::uint64_t run = 0;      // replica / experiment-level index
    std::uint64_t step = 0;     // outer diffusion step, 0 if not applicable
    std::uint64_t purpose = 0;  // one of the purpose:: constants
};

namespace purpose {
constexpr std::uint64_t init_noise = 1;         // x_T draw at sigma_max
constexpr std::uint64_t inner_noise = 2;        // SGLD noise inside measurement opt
constexpr std::uint64_t prior_noise = 3;        // noise-then-denoise projection draw
constexpr std::uint64_t measurement_noise = 4;  // additive noise on y
constexpr std::uint64_t operator_setup = 5;     // masks, box positions, blur kernels
constexpr std::uint64_t dataset = 6;            // synthetic dataset generation
constexpr std::uint64_t mu_init = 7;            // mu initialization (score distillation)
constexpr std::uint64_t distill_noise = 8;      // per-step eps in the distillation loss
constexpr std::uint64_t test = 99;
}  // namespace purpose

namespace detail {

// splitmix64 output permutation
constexpr std::uint64_t mix64(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
}

constexpr std::uint64_t combine(std::uint64_t a, std::uint64_t b) {
    return mix64(a + 0x9E3779B97F4A7C15ull * (b + 0x632BE59BD9B4E019ull));
}

}  // namespace detail

// Counter-based generator: output k of stream (seed,id) is a pure function of
// (seed, id, k). No global state, no shared mutation, so results are
// bit-identical for any thread count.
class RngStream {
public:
    RngStream(std::uint64_t seed, StreamId id)
        : key_(detail::combine(
              detail::combine(detail::combine(detail::mix64(seed + 0x853C49E6748FEA9Bull), id.run),
                              id.step),
              id.purpose)) {}

    // Test hook: every gaussian() is exactly 0, uniforms unchanged.
    static RngStream zeroed(std::uint64_t seed = 0, StreamId id = {}) {
        RngStream s(seed, id);
        s.zeroed_ = true;
        return s;
    }

    bool is_zeroed() const { return zeroed_; }

    std::uint64_t bits() { return detail::mix64(key_ + 0x9E3779B97F4A7C15ull * ++counter_); }

    // uniform on (0, 1]
    double uniform() { return static_cast<double>((bits() >> 11) + 1) * 0x1.0p-53; }

    // standard normal via Box-Muller; one transform yields two variates
    double gaussian() {
        if (zeroed_) return 0.0;
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        const double r = std::sqrt(-2.0 * std::log(uniform()));
        const double a = 2.0 * std::numbers::pi * uniform();
        spare_ = r * std::sin(a);
        has_spare_ = true;
        return r * std::cos(a);
    }

private:
    std::uint64_t key_ = 0;
    std::uint64_t counter_ = 0;
    double spare_ = 0.0;
    bool has_spare_ = false;
    bool zeroed_ = false;
};

}  // namespace dmo
