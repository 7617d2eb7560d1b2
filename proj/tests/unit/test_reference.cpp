#include <cmath>

#include "doctest.h"
#include "nmqsd/errors.hpp"
#include "nmqsd/reference.hpp"

using namespace nmqsd;

namespace {

DensityMatrix two_level_rho0() {
    StateVector psi(2);
    psi << std::sqrt(0.3), cd(0.0, std::sqrt(0.7));
    return projector(psi);
}

double max_diff(const MasterEquationRun& a, const MasterEquationRun& b) {
    double w = 0.0;
    for (std::size_t k = 0; k < a.points(); ++k) {
        w = std::max(w, max_abs(a.rho[k] - b.rho[k]));
    }
    return w;
}

} // namespace

TEST_SUITE("reference") {

TEST_CASE("Lindblad two-level solution is analytic") {
    const double Gamma = 0.8, omega = 1.3;
    const ModelSpec m = build_spin_model(0.5, omega);
    const DensityMatrix rho0 = two_level_rho0();
    const MasterEquationRun run = solve_lindblad(m, Gamma, rho0, TimeGrid(4.0, 4000), 100);
    for (std::size_t k = 0; k < run.points(); ++k) {
        const double t = run.time(k);
        CHECK(run.rho[k](1, 1).real() == doctest::Approx(0.7 * std::exp(-Gamma * t)).epsilon(1e-9));
        const cd eg = rho0(1, 0) * std::exp(cd(-0.5 * Gamma, -omega) * t);
        CHECK(std::abs(run.rho[k](1, 0) - eg) < 1e-9);
    }
    CHECK(run.max_trace_drift < 1e-12);
    CHECK(run.min_eigenvalue > -1e-8);
}

TEST_CASE("without dissipation the spectrum is conserved") {
    const ModelSpec m = build_spin_model(1.0, 1.0);
    StateVector psi(3);
    psi << 0.6, cd(0.0, 0.8), 0.0;
    DensityMatrix rho0 = 0.5 * projector(psi);
    rho0(2, 2) += 0.5;
    const MasterEquationRun run = solve_lindblad(m, 0.0, rho0, TimeGrid(3.0, 300));
    const auto ev0 = eigvals_hermitian(rho0);
    const auto ev1 = eigvals_hermitian(run.rho.back());
    for (std::size_t i = 0; i < ev0.size(); ++i) {
        CHECK(std::abs(ev0[i] - ev1[i]) < 1e-8);
    }
}

TEST_CASE("the ground projector is stationary") {
    const ModelSpec m = build_spin_model(1.5, 1.0);
    DensityMatrix g = DensityMatrix::Zero(4, 4);
    g(0, 0) = 1.0;
    const MasterEquationRun run = solve_lindblad(m, 1.0, g, TimeGrid(2.0, 100));
    CHECK(max_abs(run.rho.back() - g) < 1e-15);
}

TEST_CASE("convolutionless approaches Lindblad in the Markov limit") {
    const ModelSpec m = build_spin_model(0.5, 1.0);
    const auto kernel = CorrelationKernel::exponential(1.0, 200.0);
    const TimeGrid grid(3.0, 6000);
    CoefficientOptions opts;
    opts.convergence_probe = false;
    const CoefficientTable table = integrate_coefficients(m, kernel, grid, 0, opts);
    const auto cl = solve_convolutionless(m, table, table.layout(), two_level_rho0(), grid, 200);
    const auto lb = solve_lindblad(m, 1.0, two_level_rho0(), grid, 200);
    for (std::size_t k = 1; k < cl.points(); ++k) {
        CHECK(max_abs(cl.rho[k] - lb.rho[k]) < 0.01);
    }
}

TEST_CASE("convolutionless slope at t = 0 has no dissipator") {
    const ModelSpec m = build_spin_model(0.5, 1.0);
    const auto kernel = CorrelationKernel::exponential(1.0, 0.5);
    const TimeGrid grid(1e-3, 10);
    const CoefficientTable table = integrate_coefficients(m, kernel, grid, 0);
    const DensityMatrix rho0 = two_level_rho0();
    const auto cl = solve_convolutionless(m, table, table.layout(), rho0, grid);
    const ComplexMatrix h = m.hamiltonian(0.0);
    const ComplexMatrix slope = -kImag * commutator(h, rho0);
    const ComplexMatrix fd = (cl.rho[1] - rho0) / grid.dt();
    CHECK(max_abs(fd - slope) < 1e-4);
}

TEST_CASE("pseudomode and convolutionless agree for the two-level atom") {
    // Both are exact for l = 1/2 with an exponential kernel.
    const ModelSpec m = build_spin_model(0.5, 1.0);
    const auto kernel = CorrelationKernel::exponential(1.0, 0.5);
    const TimeGrid grid(6.0, 3000);
    const CoefficientTable table = integrate_coefficients(m, kernel, grid, 0);
    const auto cl = solve_convolutionless(m, table, table.layout(), two_level_rho0(), grid, 100);
    const auto pm = solve_pseudomode(m, kernel, default_boson_cutoff(m), two_level_rho0(), grid, 100);
    CHECK(max_diff(cl, pm) < 1e-6);
    CHECK(pm.min_eigenvalue > -1e-8);
}

TEST_CASE("pseudomode without coupling is unitary") {
    const ModelSpec m = build_spin_model(1.0, 1.0);
    StateVector psi = StateVector::Constant(3, cd(1.0 / std::sqrt(3.0), 0.0));
    const auto pm = solve_pseudomode(m, CorrelationKernel::exponential(0.0, 0.5), 2, projector(psi),
                                     TimeGrid(2.0, 400));
    const auto lb = solve_lindblad(m, 0.0, projector(psi), TimeGrid(2.0, 400));
    CHECK(max_diff(pm, lb) < 1e-12);
}

TEST_CASE("oracle preconditions") {
    const ModelSpec m = build_spin_model(1.5, 1.0);
    const auto kernel = CorrelationKernel::exponential(1.0, 0.5);
    const TimeGrid grid(1.0, 20);
    DensityMatrix g = DensityMatrix::Zero(4, 4);
    g(0, 0) = 1.0;
    CoefficientOptions opts;
    opts.convergence_probe = false;
    const CoefficientTable table = integrate_coefficients(m, kernel, grid, 1, opts);
    CHECK_THROWS_AS(solve_convolutionless(m, table, table.layout(), g, grid), ValidationError);
    CHECK_THROWS_AS(solve_pseudomode(m, kernel, 1, g, grid), ValidationError);
    CHECK_THROWS_AS(solve_lindblad(m, 1.0, DensityMatrix::Identity(4, 4), grid), ValidationError);
    CHECK(parse_oracle("pseudomode") == OracleMethod::pseudomode);
    CHECK_THROWS_AS(parse_oracle("exact"), ValidationError);
}

}
