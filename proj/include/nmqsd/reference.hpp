#pragma once

// Deterministic master-equation oracles, all fixed-step RK4 on full density matrices.

#include <string>
#include <vector>

#include "nmqsd/coefficients.hpp"
#include "nmqsd/linalg.hpp"
#include "nmqsd/models.hpp"
#include "nmqsd/noise.hpp"

namespace nmqsd {

enum class OracleMethod { lindblad, convolutionless, pseudomode };

std::string oracle_name(OracleMethod method);
OracleMethod parse_oracle(const std::string& name);

struct MasterEquationRun {
    TimeGrid grid;
    OracleMethod method = OracleMethod::lindblad;
    std::vector<int> indices;
    std::vector<DensityMatrix> rho;
    /// Largest |Tr rho - Tr rho0| seen on the grid.
    double max_trace_drift = 0.0;
    /// Smallest eigenvalue over the recorded points.
    double min_eigenvalue = 0.0;
    /// Fock-space size used by the pseudomode solver (0 otherwise).
    int boson_cutoff = 0;

    std::size_t points() const { return indices.size(); }
    double time(std::size_t k) const { return grid.time(indices[k]); }
};

/// d rho/dt = -i[H, rho] + Gamma (L rho L^dagger - {L^dagger L, rho} / 2).
MasterEquationRun solve_lindblad(const ModelSpec& model, double Gamma, const DensityMatrix& rho0,
                                 const TimeGrid& grid, int record_every = 1);

/// d rho/dt = -i[H, rho] + [L, rho O-bar^dagger] + [O-bar rho, L^dagger] with the
/// noise-free O-bar from the table (linear in t between grid points).
/// Only for models whose exact O-operator has no noise terms.
MasterEquationRun solve_convolutionless(const ModelSpec& model, const CoefficientTable& table,
                                        const BasisLayout& layout, const DensityMatrix& rho0,
                                        const TimeGrid& grid, int record_every = 1);

/// Exponential bath replaced by one damped mode b (Fock levels 0..cutoff-1):
/// H = H_sys + g (L b^dagger + L^dagger b), g = sqrt(Gamma gamma / 2), dissipator
/// 2 gamma D[b], mode in vacuum at t = 0. The run is repeated with cutoff + 2 and
/// must agree within `tolerance`; the returned run is the larger cutoff.
MasterEquationRun solve_pseudomode(const ModelSpec& model, const CorrelationKernel& kernel,
                                   int boson_cutoff, const DensityMatrix& rho0, const TimeGrid& grid,
                                   int record_every = 1, double tolerance = 1e-6);

/// Smallest cutoff that makes the pseudomode dilation exact when L only lowers
/// (every jump removes one system excitation and the mode can hold at most the
/// number the system can give away).
int default_boson_cutoff(const ModelSpec& model);

} // namespace nmqsd
