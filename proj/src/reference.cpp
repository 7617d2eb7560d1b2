#include "nmqsd/reference.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <sstream>

#include "nmqsd/errors.hpp"

namespace nmqsd {

namespace {

constexpr const char* kModule = "reference-solvers";

using Rhs = std::function<void(double t, int n, double frac, const ComplexMatrix& rho, ComplexMatrix& out)>;
using Reduce = std::function<DensityMatrix(const ComplexMatrix&)>;

void check_rho0(const DensityMatrix& rho0, int dim) {
    if (rho0.rows() != dim || rho0.cols() != dim) {
        throw ValidationError(kModule, "initial density matrix has the wrong size");
    }
    if (!rho0.allFinite() || hermiticity_residual(rho0) > 1e-10 ||
        std::abs(rho0.trace() - cd(1.0, 0.0)) > 1e-10) {
        throw ValidationError(kModule, "initial density matrix must be Hermitian with unit trace");
    }
    if (eigvals_hermitian(rho0).back() < -1e-10) {
        throw ValidationError(kModule, "initial density matrix is not positive semidefinite");
    }
}

// Classic RK4; the rhs is told the step index n and the stage fraction (0, 1/2, 1).
MasterEquationRun integrate(const ComplexMatrix& start, const TimeGrid& grid, int record_every,
                            OracleMethod method, const Rhs& rhs, const Reduce& reduce) {
    if (record_every < 1) {
        throw ValidationError(kModule, "record_every must be at least 1");
    }
    MasterEquationRun run;
    run.grid = grid;
    run.method = method;
    const double dt = grid.dt();
    const cd trace0 = start.trace();
    ComplexMatrix rho = start;
    ComplexMatrix k1 = ComplexMatrix::Zero(rho.rows(), rho.cols());
    ComplexMatrix k2 = k1, k3 = k1, k4 = k1, stage = k1;
    double min_eig = 1.0;
    auto record = [&](int n) {
        DensityMatrix r = reduce(rho);
        r = 0.5 * (r + r.adjoint()).eval();
        min_eig = std::min(min_eig, eigvals_hermitian(r).back());
        run.indices.push_back(n);
        run.rho.push_back(std::move(r));
    };
    record(0);
    for (int n = 0; n < grid.n_steps(); ++n) {
        const double t = grid.time(n);
        rhs(t, n, 0.0, rho, k1);
        stage = rho + (0.5 * dt) * k1;
        rhs(t + 0.5 * dt, n, 0.5, stage, k2);
        stage = rho + (0.5 * dt) * k2;
        rhs(t + 0.5 * dt, n, 0.5, stage, k3);
        stage = rho + dt * k3;
        rhs(t + dt, n, 1.0, stage, k4);
        rho += (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        rho = 0.5 * (rho + rho.adjoint()).eval();
        if (!rho.allFinite()) {
            std::ostringstream msg;
            msg << "non-finite density matrix at t=" << t + dt;
            throw NumericError(kModule, msg.str());
        }
        const double drift = std::abs(rho.trace() - trace0);
        run.max_trace_drift = std::max(run.max_trace_drift, drift);
        if (drift > 1e-6) {
            std::ostringstream msg;
            msg << "trace drifted by " << drift << " at t=" << t + dt << "; try dt <= " << 0.5 * dt;
            throw NumericError(kModule, msg.str());
        }
        if ((n + 1) % record_every == 0 || n + 1 == grid.n_steps()) {
            record(n + 1);
        }
    }
    run.min_eigenvalue = min_eig;
    return run;
}

} // namespace

std::string oracle_name(OracleMethod method) {
    switch (method) {
    case OracleMethod::lindblad:
        return "lindblad";
    case OracleMethod::convolutionless:
        return "convolutionless";
    case OracleMethod::pseudomode:
        return "pseudomode";
    }
    return "unknown";
}

OracleMethod parse_oracle(const std::string& name) {
    if (name == "lindblad") {
        return OracleMethod::lindblad;
    }
    if (name == "convolutionless") {
        return OracleMethod::convolutionless;
    }
    if (name == "pseudomode") {
        return OracleMethod::pseudomode;
    }
    throw ValidationError(kModule, "unknown oracle '" + name +
                                       "' (expected lindblad, convolutionless or pseudomode)");
}

MasterEquationRun solve_lindblad(const ModelSpec& model, double Gamma, const DensityMatrix& rho0,
                                 const TimeGrid& grid, int record_every) {
    if (!(Gamma >= 0.0)) {
        throw ValidationError(kModule, "Gamma must be non-negative");
    }
    check_rho0(rho0, model.dim);
    const ComplexMatrix& l = model.lindblad;
    const ComplexMatrix ldag = l.adjoint();
    const ComplexMatrix ldl = ldag * l;
    ComplexMatrix h = ComplexMatrix::Zero(model.dim, model.dim);
    ComplexMatrix tmp = h;
    Rhs rhs = [&](double t, int, double, const ComplexMatrix& rho, ComplexMatrix& out) {
        model.hamiltonian_into(t, h);
        out.noalias() = -kImag * (h * rho);
        out.noalias() += kImag * (rho * h);
        tmp.noalias() = l * rho;
        out.noalias() += Gamma * (tmp * ldag);
        out.noalias() -= (0.5 * Gamma) * (ldl * rho);
        out.noalias() -= (0.5 * Gamma) * (rho * ldl);
    };
    return integrate(rho0, grid, record_every, OracleMethod::lindblad, rhs,
                     [](const ComplexMatrix& r) { return DensityMatrix(r); });
}

MasterEquationRun solve_convolutionless(const ModelSpec& model, const CoefficientTable& table,
                                        const BasisLayout& layout, const DensityMatrix& rho0,
                                        const TimeGrid& grid, int record_every) {
    if (model.noise_order_exact != 0) {
        throw ValidationError(kModule, "no noise-free master equation for " + model.label +
                                           "; use the QSD ensemble");
    }
    if (!(table.grid() == grid) || table.dim() != model.dim || layout.dim != model.dim) {
        throw ValidationError(kModule, "coefficient table does not match the model or grid");
    }
    check_rho0(rho0, model.dim);
    std::vector<ComplexMatrix> obar(static_cast<std::size_t>(grid.size()));
    for (int n = 0; n < grid.size(); ++n) {
        obar[static_cast<std::size_t>(n)] = table.obar0(n);
    }
    const ComplexMatrix& l = model.lindblad;
    const ComplexMatrix ldag = l.adjoint();
    ComplexMatrix h = ComplexMatrix::Zero(model.dim, model.dim);
    ComplexMatrix o = h, orho = h, rho_od = h;
    Rhs rhs = [&](double t, int n, double frac, const ComplexMatrix& rho, ComplexMatrix& out) {
        model.hamiltonian_into(t, h);
        const ComplexMatrix& a = obar[static_cast<std::size_t>(n)];
        if (frac == 0.0) {
            o = a;
        } else {
            o = (1.0 - frac) * a + frac * obar[static_cast<std::size_t>(n + 1)];
        }
        out.noalias() = -kImag * (h * rho);
        out.noalias() += kImag * (rho * h);
        rho_od.noalias() = rho * o.adjoint();
        out.noalias() += l * rho_od;
        out.noalias() -= rho_od * l;
        orho.noalias() = o * rho;
        out.noalias() += orho * ldag;
        out.noalias() -= ldag * orho;
    };
    return integrate(rho0, grid, record_every, OracleMethod::convolutionless, rhs,
                     [](const ComplexMatrix& r) { return DensityMatrix(r); });
}

int default_boson_cutoff(const ModelSpec& model) {
    return model.is_ladder() ? model.dim : 2;
}

namespace {

MasterEquationRun pseudomode_once(const ModelSpec& model, const CorrelationKernel& kernel, int cutoff,
                                  const DensityMatrix& rho0, const TimeGrid& grid, int record_every) {
    const int ds = model.dim;
    const int dm = cutoff;
    const int d = ds * dm;
    ComplexMatrix b = ComplexMatrix::Zero(dm, dm);
    for (int m = 1; m < dm; ++m) {
        b(m - 1, m) = std::sqrt(static_cast<double>(m));
    }
    const ComplexMatrix id_s = ComplexMatrix::Identity(ds, ds);
    const ComplexMatrix id_m = ComplexMatrix::Identity(dm, dm);
    auto kron = [](const ComplexMatrix& a, const ComplexMatrix& c) {
        ComplexMatrix out(a.rows() * c.rows(), a.cols() * c.cols());
        for (Eigen::Index i = 0; i < a.rows(); ++i) {
            for (Eigen::Index j = 0; j < a.cols(); ++j) {
                out.block(i * c.rows(), j * c.cols(), c.rows(), c.cols()) = a(i, j) * c;
            }
        }
        return out;
    };
    const double g = std::sqrt(kernel.amplitude());
    const double rate = 2.0 * kernel.gamma();
    const ComplexMatrix big_b = kron(id_s, b);
    const ComplexMatrix big_bd = big_b.adjoint();
    const ComplexMatrix bdb = big_bd * big_b;
    const ComplexMatrix coupling =
        g * (kron(model.lindblad, b.adjoint()) + kron(model.lindblad.adjoint(), b));
    ComplexMatrix vacuum = ComplexMatrix::Zero(dm, dm);
    vacuum(0, 0) = 1.0;
    const ComplexMatrix start = kron(rho0, vacuum);

    ComplexMatrix hs = ComplexMatrix::Zero(ds, ds);
    ComplexMatrix h = ComplexMatrix::Zero(d, d);
    ComplexMatrix tmp = h;
    Rhs rhs = [&](double t, int, double, const ComplexMatrix& rho, ComplexMatrix& out) {
        model.hamiltonian_into(t, hs);
        h = kron(hs, id_m);
        h += coupling;
        out.noalias() = -kImag * (h * rho);
        out.noalias() += kImag * (rho * h);
        tmp.noalias() = big_b * rho;
        out.noalias() += rate * (tmp * big_bd);
        out.noalias() -= (0.5 * rate) * (bdb * rho);
        out.noalias() -= (0.5 * rate) * (rho * bdb);
    };
    Reduce reduce = [ds, dm](const ComplexMatrix& rho) {
        DensityMatrix r = DensityMatrix::Zero(ds, ds);
        for (int i = 0; i < ds; ++i) {
            for (int j = 0; j < ds; ++j) {
                cd acc = 0.0;
                for (int m = 0; m < dm; ++m) {
                    acc += rho(i * dm + m, j * dm + m);
                }
                r(i, j) = acc;
            }
        }
        return r;
    };
    MasterEquationRun run =
        integrate(start, grid, record_every, OracleMethod::pseudomode, rhs, reduce);
    run.boson_cutoff = cutoff;
    return run;
}

} // namespace

MasterEquationRun solve_pseudomode(const ModelSpec& model, const CorrelationKernel& kernel,
                                   int boson_cutoff, const DensityMatrix& rho0, const TimeGrid& grid,
                                   int record_every, double tolerance) {
    if (!kernel.is_exponential()) {
        throw ValidationError(kModule, "the pseudomode oracle needs an exponential kernel");
    }
    if (boson_cutoff < 2) {
        throw ValidationError(kModule, "boson_cutoff must be at least 2");
    }
    check_rho0(rho0, model.dim);
    const MasterEquationRun coarse = pseudomode_once(model, kernel, boson_cutoff, rho0, grid, record_every);
    MasterEquationRun fine = pseudomode_once(model, kernel, boson_cutoff + 2, rho0, grid, record_every);
    double diff = 0.0;
    for (std::size_t k = 0; k < fine.points(); ++k) {
        diff = std::max(diff, max_abs(fine.rho[k] - coarse.rho[k]));
    }
    if (diff > tolerance) {
        std::ostringstream msg;
        msg << "pseudomode cutoff " << boson_cutoff << " not converged (change " << diff
            << " with cutoff " << boson_cutoff + 2 << "); try boson_cutoff >= " << boson_cutoff + 4;
        throw NumericError(kModule, msg.str());
    }
    return fine;
}

} // namespace nmqsd
