#include <cmath>

#include "doctest.h"
#include "nmqsd/coefficients.hpp"
#include "nmqsd/errors.hpp"
#include "nmqsd/memory.hpp"

using namespace nmqsd;

namespace {

// Spin-1/2 with H = omega J_z, L = J_-: O(t,s) = f(t,s) J_-, O-bar = F(t) J_- and
// dF/dt = A - gamma F + (i omega + F) F, F(0) = 0, A = Gamma gamma / 2.
cd two_level_F(double omega, double Gamma, double gamma, double t_end, int steps) {
    const double A = 0.5 * Gamma * gamma;
    auto rhs = [&](cd F) { return A - gamma * F + (cd(0.0, omega) + F) * F; };
    cd F{0.0, 0.0};
    const double h = t_end / steps;
    for (int i = 0; i < steps; ++i) {
        const cd k1 = rhs(F);
        const cd k2 = rhs(F + 0.5 * h * k1);
        const cd k3 = rhs(F + 0.5 * h * k2);
        const cd k4 = rhs(F + h * k3);
        F += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    }
    return F;
}

double residual(const ModelSpec& model, const CorrelationKernel& kernel, const TimeGrid& grid, int order) {
    const int n = (3 * grid.n_steps()) / 4;
    const int s = grid.n_steps() / 3;
    CoefficientOptions opts;
    opts.convergence_probe = false;
    opts.keep_lines = residual_stencil(grid, n, s);
    const CoefficientTable table = integrate_coefficients(model, kernel, grid, order, opts);
    const ResidualReport r =
        consistency_residual(model, table, table.layout(), kernel, smooth_probe_noise(grid), n, s);
    CHECK_FALSE(r.one_sided);
    return r.relative;
}

} // namespace

TEST_SUITE("coefficients") {

TEST_CASE("two-level F matches the scalar Riccati equation") {
    const auto kernel = CorrelationKernel::exponential(1.0, 0.5);
    const TimeGrid grid(4.0, 400);
    const CoefficientTable table = integrate_coefficients(build_spin_model(0.5, 1.0), kernel, grid, 0);
    for (int n : {0, 50, 200, 400}) {
        const cd ref = two_level_F(1.0, 1.0, 0.5, grid.time(n), 20000);
        CHECK(std::abs(table.F(0, n) - ref) < 1e-8);
    }
}

TEST_CASE("Markov limit: F approaches Gamma / 2") {
    const auto kernel = CorrelationKernel::exponential(1.0, 200.0);
    const TimeGrid grid(1.0, 4000);
    CoefficientOptions opts;
    opts.convergence_probe = false;
    const CoefficientTable table = integrate_coefficients(build_spin_model(0.5, 1.0), kernel, grid, 0, opts);
    CHECK(std::abs(table.F(0, grid.n_steps()) - cd(0.5, 0.0)) < 5e-3);
}

TEST_CASE("O-bar vanishes at t = 0 and the table rejects bad orders") {
    const auto kernel = CorrelationKernel::exponential(1.0, 0.5);
    const TimeGrid grid(1.0, 40);
    const ModelSpec m = build_spin_model(1.5, 1.0);
    CoefficientOptions opts;
    opts.convergence_probe = false;
    const CoefficientTable table = integrate_coefficients(m, kernel, grid, 1, opts);
    CHECK(max_abs(table.obar0(0)) == 0.0);
    CHECK(table.count(0) == 3);
    CHECK(table.count(1) == 2);
    CHECK_THROWS_AS(integrate_coefficients(m, kernel, grid, 3, opts), ValidationError);
    CHECK_THROWS_AS(table.q2(5, 1, 1), ValidationError);
}

TEST_CASE("consistency residuals on interior points") {
    const auto kernel = CorrelationKernel::exponential(1.0, 0.5);
    SUBCASE("spin-1/2") {
        CHECK(residual(build_spin_model(0.5, 1.0), kernel, TimeGrid(3.0, 240), 0) < 1e-5);
    }
    SUBCASE("multi-transition, four levels") {
        const ModelSpec m = build_multi_transition({0.0, 0.3, 0.7, 1.2}, {0.5, 0.4, 0.6});
        CHECK(residual(m, kernel, TimeGrid(3.0, 240), 0) < 1e-5);
    }
    SUBCASE("spin-1, order 1") {
        CHECK(residual(build_spin_model(1.0, 1.0), kernel, TimeGrid(3.0, 120), 1) < 1e-4);
    }
}

TEST_CASE("memory hierarchy reproduces the table O-bar along a sampled path") {
    const auto kernel = CorrelationKernel::exponential(1.0, 0.5);
    const ModelSpec model = build_spin_model(1.5, 1.0);
    const NoiseRealization fine = sample_noise(kernel, TimeGrid(3.0, 96), 3, 0);
    const BasisLayout layout = truncate(enumerate_basis(model), 2);
    const MemoryHierarchy mh(model, layout, kernel);
    auto gap = [&](int steps) {
        const TimeGrid grid(3.0, steps);
        std::vector<cd> z;
        for (int n = 0; n <= steps; ++n) {
            z.push_back(fine.values[static_cast<std::size_t>(n * (96 / steps))]);
        }
        CoefficientOptions opts;
        opts.convergence_probe = false;
        const CoefficientTable table = integrate_coefficients(model, kernel, grid, 2, opts);
        auto ws = mh.make_workspace();
        auto xi = mh.zero_state();
        double worst = 0.0;
        for (int n = 0; n < steps; ++n) {
            mh.heun_step(model.hamiltonian(grid.time(n)), model.hamiltonian(grid.time(n + 1)), z[n], z[n + 1],
                         grid.dt(), xi, ws);
            worst = std::max(worst, max_abs(assemble_obar(table, z, n + 1) - xi[0]));
        }
        return worst;
    };
    const double coarse = gap(48);
    const double fine_gap = gap(96);
    // Both routes are second order in dt along the same path.
    CHECK(fine_gap < 2e-3);
    CHECK(coarse / fine_gap > 3.5);
}

}
