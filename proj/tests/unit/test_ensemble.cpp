#include <cmath>

#include "doctest.h"
#include "nmqsd/ensemble.hpp"
#include "nmqsd/errors.hpp"

using namespace nmqsd;

namespace {

EnsembleResult run(const Simulator& sim, const StateVector& psi0, Mode mode, int n, int workers,
                   std::uint64_t seed = 1) {
    EnsembleOptions o;
    o.trajectories = n;
    o.seed = seed;
    o.workers = workers;
    return run_ensemble(sim, psi0, mode, o);
}

StateVector excited() {
    StateVector psi = StateVector::Zero(2);
    psi(1) = 1.0;
    return psi;
}

} // namespace

TEST_SUITE("ensemble") {

TEST_CASE("entropy of simple states") {
    DensityMatrix pure = DensityMatrix::Zero(3, 3);
    pure(1, 1) = 1.0;
    CHECK(von_neumann_entropy(pure) == doctest::Approx(0.0));
    const DensityMatrix mixed = DensityMatrix::Identity(4, 4) / 4.0;
    CHECK(von_neumann_entropy(mixed) == doctest::Approx(std::log(4.0)));
    CHECK(von_neumann_entropy(mixed, 2.0) == doctest::Approx(2.0));
    DensityMatrix half = DensityMatrix::Zero(4, 4);
    half(0, 0) = half(1, 1) = 0.5;
    CHECK(von_neumann_entropy(half) == doctest::Approx(std::log(2.0)));
}

TEST_CASE("small negative eigenvalues are clamped, large ones rejected") {
    DensityMatrix r = DensityMatrix::Zero(2, 2);
    r(0, 0) = 1.0 + 1e-8;
    r(1, 1) = -1e-8;
    EntropyWarnings w;
    CHECK(von_neumann_entropy(r, std::numbers::e, &w) == doctest::Approx(0.0).epsilon(1e-6));
    CHECK(w.clamped == 1);
    r(0, 0) = 1.1;
    r(1, 1) = -0.1;
    CHECK_THROWS_AS(von_neumann_entropy(r), NumericError);
}

TEST_CASE("coherence and populations") {
    StateVector psi = StateVector::Constant(4, cd(0.5, 0.0));
    const DensityMatrix r = projector(psi);
    CHECK(coherence(r, 0, 3) == doctest::Approx(0.25));
    CHECK(populations(r) == std::vector<double>(4, 0.25));
    CHECK(coherence(DensityMatrix::Identity(4, 4) / 4.0, 0, 3) == 0.0);
}

TEST_CASE("a single trajectory averages to its projector") {
    const ModelSpec m = build_spin_model(0.5, 1.0);
    const Simulator sim(m, CorrelationKernel::exponential(1.0, 0.5), TimeGrid(1.0, 50), 0);
    const TrajectoryResult t = sim.run(excited(), Mode::nonlinear, 3, 0);
    const EnsembleResult r = average_density({t}, Mode::nonlinear);
    CHECK(max_abs(r.rho.back() - projector(t.states.back())) < 1e-15);
    CHECK(von_neumann_entropy(r.rho.back()) == doctest::Approx(0.0).epsilon(1e-9));
}

TEST_CASE("ground state stays put with zero error bars") {
    const ModelSpec m = build_spin_model(0.5, 1.0);
    const Simulator sim(m, CorrelationKernel::exponential(1.0, 0.5), TimeGrid(1.0, 50), 0);
    StateVector g = StateVector::Zero(2);
    g(0) = 1.0;
    const EnsembleResult r = run(sim, g, Mode::nonlinear, 40, 1);
    for (std::size_t k = 0; k < r.points(); ++k) {
        CHECK(std::abs(r.rho[k](0, 0) - 1.0) < 1e-14);
        CHECK(r.stderr_entries[k].maxCoeff() < 1e-14);
    }
}

TEST_CASE("results are bit-identical for any worker count") {
    const ModelSpec m = build_spin_model(1.5, 1.0);
    const Simulator sim(m, CorrelationKernel::exponential(1.0, 0.5), TimeGrid(2.0, 100), 1);
    const StateVector psi0 = StateVector::Constant(4, cd(0.5, 0.0));
    for (Mode mode : {Mode::linear, Mode::nonlinear}) {
        const EnsembleResult a = run(sim, psi0, mode, 100, 1);
        const EnsembleResult b = run(sim, psi0, mode, 100, 3);
        const EnsembleResult c = run(sim, psi0, mode, 100, 8);
        for (std::size_t k = 0; k < a.points(); ++k) {
            CHECK((a.rho[k].array() == b.rho[k].array()).all());
            CHECK((a.rho[k].array() == c.rho[k].array()).all());
            CHECK((a.stderr_entries[k].array() == c.stderr_entries[k].array()).all());
        }
        const auto ea = entropy_series(a);
        const auto ec = entropy_series(c);
        CHECK(ea.values == ec.values);
        CHECK(ea.stderr_values == ec.stderr_values);
    }
}

TEST_CASE("linear-mode norm is a martingale") {
    const ModelSpec m = build_spin_model(0.5, 1.0);
    const Simulator sim(m, CorrelationKernel::exponential(1.0, 0.5), TimeGrid(3.0, 300), 0);
    const EnsembleResult r = run(sim, excited(), Mode::linear, 800, 1);
    for (std::size_t k = 0; k < r.points(); ++k) {
        CHECK(std::abs(r.trace[k] - 1.0) <= 4.0 * r.trace_stderr[k] + 1e-12);
    }
}

TEST_CASE("standard errors scale as n^-1/2") {
    const ModelSpec m = build_spin_model(0.5, 1.0);
    const Simulator sim(m, CorrelationKernel::exponential(1.0, 0.5), TimeGrid(2.0, 100), 0);
    std::vector<double> x, y;
    for (int n : {250, 1000, 4000}) {
        const EnsembleResult r = run(sim, excited(), Mode::nonlinear, n, 1, 77);
        x.push_back(std::log(double(n)));
        y.push_back(std::log(r.stderr_entries.back()(1, 1)));
    }
    const double xm = (x[0] + x[1] + x[2]) / 3.0, ym = (y[0] + y[1] + y[2]) / 3.0;
    double sxy = 0.0, sxx = 0.0;
    for (int i = 0; i < 3; ++i) {
        sxy += (x[i] - xm) * (y[i] - ym);
        sxx += (x[i] - xm) * (x[i] - xm);
    }
    CHECK(std::abs(sxy / sxx + 0.5) < 0.1);
}

TEST_CASE("recorded indices always include the last point") {
    const TimeGrid grid(1.0, 25);
    CHECK(recorded_indices(grid, 10) == std::vector<int>{0, 10, 20, 25});
    CHECK(recorded_indices(grid, 5) == std::vector<int>{0, 5, 10, 15, 20, 25});
}

TEST_CASE("averaging rejects mixed grids") {
    const ModelSpec m = build_spin_model(0.5, 1.0);
    const auto k = CorrelationKernel::exponential(1.0, 0.5);
    const Simulator a(m, k, TimeGrid(1.0, 50), 0);
    const Simulator b(m, k, TimeGrid(1.0, 60), 0);
    CHECK_THROWS_AS(average_density({a.run(excited(), Mode::linear, 1, 0), b.run(excited(), Mode::linear, 1, 1)},
                                    Mode::linear),
                    ValidationError);
    CHECK_THROWS_AS(average_density({}, Mode::linear), ValidationError);
}

}
