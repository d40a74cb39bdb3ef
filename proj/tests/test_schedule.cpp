#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "dmo/schedule.hpp"
#include "oracles.hpp"

using namespace dmo;

TEST_CASE("time parameterization: sigma(t)=t, s(t)=1") {
    for (double t : {0.0, 0.002, 1.0, 80.0}) {
        REQUIRE(sigma_of(t) == t);
        REQUIRE(s_of(t) == 1.0);
        REQUIRE(sigma_dot(t) == 1.0);
        REQUIRE(s_dot(t) == 0.0);
    }
    REQUIRE_THROWS_AS(sigma_of(-1.0), std::invalid_argument);
}

TEST_CASE("time grid endpoints are assigned, not computed") {
    EdmSchedule sch;
    sch.sigma_max = 80.0;
    sch.sigma_min = 0.002;
    sch.rho = 7.0;
    sch.n_steps = 18;
    const auto grid = sch.time_grid();
    REQUIRE(grid.size() == 19u);  // 18 noise levels plus the appended zero
    REQUIRE(grid.front() == 80.0);
    REQUIRE(grid[17] == 0.002);
    REQUIRE(grid.back() == 0.0);
}

TEST_CASE("time grid interior matches the rho-warped formula") {
    EdmSchedule sch;
    sch.sigma_max = 80.0;
    sch.sigma_min = 0.002;
    sch.rho = 7.0;
    sch.n_steps = 18;
    const auto grid = sch.time_grid();
    const long double a = std::pow(80.0L, 1.0L / 7.0L);
    const long double b = std::pow(0.002L, 1.0L / 7.0L);
    for (int i = 1; i < 17; ++i) {
        const long double u = static_cast<long double>(i) / 17.0L;
        const long double ref = std::pow(a + u * (b - a), 7.0L);
        REQUIRE(oracle::rel_err(grid[static_cast<std::size_t>(i)], static_cast<double>(ref)) <
                1e-14);
    }
}

TEST_CASE("time grid decreases strictly and ends at zero") {
    for (int n : {2, 5, 50, 500}) {
        EdmSchedule sch;
        sch.n_steps = n;
        const auto grid = sch.time_grid();
        REQUIRE(grid.size() == static_cast<std::size_t>(n) + 1);
        for (std::size_t i = 0; i + 1 < grid.size(); ++i) REQUIRE(grid[i] > grid[i + 1]);
        REQUIRE(grid.back() == 0.0);
    }
}

TEST_CASE("minimal grid is {sigma_max, sigma_min, 0}") {
    EdmSchedule sch;
    sch.n_steps = 2;
    const auto grid = sch.time_grid();
    REQUIRE(grid.size() == 3);
    REQUIRE(grid[0] == sch.sigma_max);
    REQUIRE(grid[1] == sch.sigma_min);
    REQUIRE(grid[2] == 0.0);
}

TEST_CASE("terminal zero can be disabled") {
    EdmSchedule sch;
    sch.n_steps = 6;
    sch.terminal_zero = false;
    const auto grid = sch.time_grid();
    REQUIRE(grid.size() == 6u);
    REQUIRE(grid.back() == sch.sigma_min);
}

TEST_CASE("schedule validation rejects bad parameters") {
    EdmSchedule sch;
    sch.n_steps = 1;
    REQUIRE_THROWS_AS(sch.validate(), std::invalid_argument);
    sch = EdmSchedule{};
    sch.sigma_min = -0.1;
    REQUIRE_THROWS_AS(sch.validate(), std::invalid_argument);
    sch = EdmSchedule{};
    sch.sigma_min = 100.0;  // above sigma_max
    REQUIRE_THROWS_AS(sch.validate(), std::invalid_argument);
    sch = EdmSchedule{};
    sch.rho = 0.0;
    REQUIRE_THROWS_AS(sch.validate(), std::invalid_argument);
}

TEST_CASE("step size decay hits its endpoints exactly") {
    LrDecay d;
    d.base_eta = 5e-5;
    d.floor_ratio = 0.01;
    d.power = 2.0;
    const int n = 37;
    REQUIRE(d.rate(n, n) == 5e-5);          // start of sampling: full rate
    REQUIRE(d.rate(0, n) == 5e-5 * 0.01);   // end: base * ratio, bit-exact
}

TEST_CASE("step size decay midpoint value") {
    LrDecay d;
    d.base_eta = 1.0;
    d.floor_ratio = 0.01;
    d.power = 2.0;
    // halfway: (1 + 0.5*(sqrt(0.01)-1))^2 = 0.55^2 = 0.3025
    const double mid = d.rate(50, 100);
    REQUIRE(oracle::rel_err(mid, 0.3025) < 1e-15);
}

TEST_CASE("step size decay is monotone in the remaining-step index") {
    LrDecay d;
    d.base_eta = 3e-4;
    d.floor_ratio = 0.01;
    d.power = 2.0;
    const int n = 100;
    double prev = -1.0;
    for (int i = 0; i <= n; ++i) {
        const double r = d.rate(i, n);
        REQUIRE(r > prev);
        prev = r;
    }
}

TEST_CASE("ratio one keeps the rate constant") {
    LrDecay d;
    d.base_eta = 2e-3;
    d.floor_ratio = 1.0;
    d.power = 2.0;
    for (int i = 0; i <= 10; ++i) REQUIRE(d.rate(i, 10) == 2e-3);
}

TEST_CASE("step size decay rejects out-of-range indices") {
    LrDecay d;
    d.base_eta = 1e-4;
    REQUIRE_THROWS_AS(d.rate(-1, 10), std::invalid_argument);
    REQUIRE_THROWS_AS(d.rate(11, 10), std::invalid_argument);
    REQUIRE_THROWS_AS(d.rate(0, 0), std::invalid_argument);
}
