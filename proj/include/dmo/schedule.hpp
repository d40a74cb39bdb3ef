#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

namespace dmo {

// Variance-exploding parameterization: s(t) = 1, sigma(t) = t.
inline double sigma_of(double t) {
    if (t < 0.0) throw std::invalid_argument("sigma_of: t must be >= 0");
    return t;
}
inline double s_of(double t) {
    if (t < 0.0) throw std::invalid_argument("s_of: t must be >= 0");
    return 1.0;
}
inline double sigma_dot(double t) {
    if (t < 0.0) throw std::invalid_argument("sigma_dot: t must be >= 0");
    return 1.0;
}
inline double s_dot(double t) {
    if (t < 0.0) throw std::invalid_argument("s_dot: t must be >= 0");
    return 0.0;
}

// Descending rho-warped noise grid. grid[0] == sigma_max and
// grid[n_steps-1] == sigma_min hold bit-exactly (assigned, not recomputed);
// a trailing 0 is appended when terminal_zero is set.
struct EdmSchedule {
    double sigma_max = 80.0;
    double sigma_min = 0.05;
    double rho = 7.0;
    int n_steps = 50;
    bool terminal_zero = true;

    void validate() const {
        if (!(sigma_max > sigma_min)) throw std::invalid_argument("EdmSchedule: sigma_max <= sigma_min");
        if (!(sigma_min > 0.0)) throw std::invalid_argument("EdmSchedule: sigma_min <= 0");
        if (!(rho > 0.0)) throw std::invalid_argument("EdmSchedule: rho <= 0");
        if (n_steps < 2) throw std::invalid_argument("EdmSchedule: n_steps < 2");
    }

    std::vector<double> time_grid() const {
        validate();
        std::vector<double> grid(static_cast<std::size_t>(n_steps));
        const double a = std::pow(sigma_max, 1.0 / rho);
        const double b = std::pow(sigma_min, 1.0 / rho);
        grid.front() = sigma_max;
        grid.back() = sigma_min;
        for (int i = 1; i + 1 < n_steps; ++i) {
            const double f = static_cast<double>(i) / static_cast<double>(n_steps - 1);
            grid[static_cast<std::size_t>(i)] = std::pow(a + f * (b - a), rho);
        }
        for (std::size_t i = 1; i < grid.size(); ++i)
            if (!(grid[i] < grid[i - 1]))
                throw std::logic_error("EdmSchedule: grid not strictly decreasing");
        if (terminal_zero) grid.push_back(0.0);
        return grid;
    }
};

// Polynomially decayed inner-loop rate: step i of a run whose outer index
// counts down from n to 0 uses
//   rate(i) = base_eta * (1 + ((n - i)/n) * (floor_ratio^{1/power} - 1))^power
// so rate(n) == base_eta and rate(0) == base_eta * floor_ratio, both exact.
struct LrDecay {
    double base_eta = 5e-5;
    double floor_ratio = 0.01;
    double power = 2.0;

    void validate() const {
        if (!(base_eta > 0.0)) throw std::invalid_argument("LrDecay: base_eta <= 0");
        if (!(floor_ratio > 0.0 && floor_ratio <= 1.0))
            throw std::invalid_argument("LrDecay: floor_ratio outside (0, 1]");
        if (!(power >= 1.0)) throw std::invalid_argument("LrDecay: power < 1");
    }

    double rate(int i, int n) const {
        validate();
        if (n < 1) throw std::invalid_argument("LrDecay::rate: n < 1");
        if (i < 0 || i > n) throw std::invalid_argument("LrDecay::rate: i outside [0, n]");
        if (i == n) return base_eta;
        if (i == 0) return base_eta * floor_ratio;
        const double f = static_cast<double>(n - i) / static_cast<double>(n);
        const double root = std::pow(floor_ratio, 1.0 / power);
        return base_eta * std::pow(1.0 + f * (root - 1.0), power);
    }
};

}  // namespace dmo
