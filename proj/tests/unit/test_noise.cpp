#include <cmath>
#include <vector>

#include "doctest.h"
#include "nmqsd/errors.hpp"
#include "nmqsd/noise.hpp"

using namespace nmqsd;

namespace {

struct CovarianceCheck {
    double worst_cov = 0.0;
    double worst_pseudo = 0.0;
};

// Max deviation, in standard errors, of M[z_t z_s^*] from alpha(t, s) and of M[z_t z_s] from 0.
CovarianceCheck covariance_check(const CorrelationKernel& kernel, const TimeGrid& grid, int n_paths,
                                 const std::vector<int>& probe) {
    const NoiseSampler sampler(kernel, grid);
    const std::size_t p = probe.size();
    std::vector<cd> sum_c(p * p), sum_p(p * p);
    std::vector<double> sq_c(p * p), sq_p(p * p);
    for (int r = 0; r < n_paths; ++r) {
        const NoiseRealization z = sampler.sample(99, static_cast<std::uint64_t>(r));
        for (std::size_t a = 0; a < p; ++a) {
            for (std::size_t b = 0; b < p; ++b) {
                // values hold z^*, so z_t z_s^* = conj(values[t]) * values[s].
                const cd zt = std::conj(z.values[static_cast<std::size_t>(probe[a])]);
                const cd zs = std::conj(z.values[static_cast<std::size_t>(probe[b])]);
                const cd c = zt * std::conj(zs);
                const cd q = zt * zs;
                sum_c[a * p + b] += c;
                sum_p[a * p + b] += q;
                sq_c[a * p + b] += std::norm(c);
                sq_p[a * p + b] += std::norm(q);
            }
        }
    }
    CovarianceCheck out;
    for (std::size_t a = 0; a < p; ++a) {
        for (std::size_t b = 0; b < p; ++b) {
            const std::size_t k = a * p + b;
            const cd mc = sum_c[k] / double(n_paths);
            const cd mp = sum_p[k] / double(n_paths);
            const double sc = std::sqrt((sq_c[k] / n_paths - std::norm(mc)) / n_paths);
            const double sp = std::sqrt((sq_p[k] / n_paths - std::norm(mp)) / n_paths);
            const cd exact = kernel(grid.time(probe[a]), grid.time(probe[b]));
            out.worst_cov = std::max(out.worst_cov, std::abs(mc - exact) / sc);
            out.worst_pseudo = std::max(out.worst_pseudo, std::abs(mp) / sp);
        }
    }
    return out;
}

} // namespace

TEST_SUITE("noise") {

TEST_CASE("exponential kernel values") {
    const auto k = CorrelationKernel::exponential(1.0, 0.5);
    CHECK(k(0.0, 0.0).real() == doctest::Approx(0.25));
    CHECK(k(3.0, 1.0).real() == doctest::Approx(0.25 * std::exp(-1.0)));
    CHECK(k(1.0, 3.0) == k(3.0, 1.0));
    CHECK_THROWS_AS(alpha(k, -0.1, 0.0), ValidationError);
    CHECK_THROWS_AS(CorrelationKernel::exponential(-1.0, 0.5), ValidationError);
    CHECK_THROWS_AS(CorrelationKernel::exponential(1.0, 0.0), ValidationError);
}

TEST_CASE("tabulated kernel interpolates and is Hermitian") {
    const auto k = CorrelationKernel::tabulated(0.5, {cd(1.0, 0.0), cd(0.5, 0.2), cd(0.0, 0.0)});
    CHECK(k(0.25, 0.0) == cd(0.75, 0.1));
    CHECK(k(0.0, 0.25) == cd(0.75, -0.1));
    CHECK_THROWS_AS(k(2.0, 0.0), ValidationError);
}

TEST_CASE("same (seed, stream) gives the same path; different streams differ") {
    const auto k = CorrelationKernel::exponential(1.0, 0.5);
    const TimeGrid grid(2.0, 100);
    const auto a = sample_noise(k, grid, 5, 3);
    const auto b = sample_noise(k, grid, 5, 3);
    const auto c = sample_noise(k, grid, 5, 4);
    CHECK(a.values == b.values);
    CHECK(a.values != c.values);
}

TEST_CASE("exponential sampler reproduces the covariance") {
    const auto k = CorrelationKernel::exponential(1.0, 0.5);
    const TimeGrid grid(5.0, 50);
    const auto res = covariance_check(k, grid, 20000, {0, 10, 25, 50});
    CHECK(res.worst_cov < 4.5);
    CHECK(res.worst_pseudo < 4.5);
}

TEST_CASE("Cholesky sampler reproduces a tabulated covariance") {
    std::vector<cd> values;
    for (int i = 0; i <= 40; ++i) {
        const double tau = 0.1 * i;
        values.push_back(0.5 * std::exp(-tau) * cd(std::cos(tau), -std::sin(tau)));
    }
    const auto k = CorrelationKernel::tabulated(0.1, values);
    const TimeGrid grid(2.0, 20);
    const auto res = covariance_check(k, grid, 20000, {0, 5, 12, 20});
    CHECK(res.worst_cov < 4.5);
    CHECK(res.worst_pseudo < 4.5);
}

TEST_CASE("shift memory recursion matches direct quadrature") {
    const auto k = CorrelationKernel::exponential(1.0, 0.7);
    const TimeGrid grid(3.0, 3000);
    auto e = [](double t) { return cd(std::cos(t), 0.3 * std::sin(2.0 * t)); };
    ShiftMemory mem(k, grid);
    for (int n = 0; n < grid.n_steps(); ++n) {
        const cd now = e(grid.time(n)), next = e(grid.time(n + 1));
        const cd peek = mem.peek(now, next);
        mem.commit(now, next);
        CHECK(mem.current() == peek);
    }
    // I(T) = int_0^T alpha^*(T, s) e(s) ds by fine midpoint rule.
    const double T = grid.t_max();
    cd ref{0.0, 0.0};
    const int m = 200000;
    for (int i = 0; i < m; ++i) {
        const double s = (i + 0.5) * T / m;
        ref += std::conj(k(T, s)) * e(s) * (T / m);
    }
    CHECK(std::abs(mem.current() - ref) < 1e-6);
}

}
