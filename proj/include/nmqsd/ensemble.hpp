#pragma once

// Ensemble averages rho_t = M[|psi_t><psi_t|] with error bars.
//
// Trajectories are grouped into fixed-size chunks (independent of the worker
// count). Workers pull chunks in any order; chunk statistics are merged in chunk
// order, so the result is bit-identical for any number of workers.

#include <cstdint>
#include <functional>
#include <numbers>
#include <string>
#include <vector>

#include "nmqsd/linalg.hpp"
#include "nmqsd/noise.hpp"
#include "nmqsd/propagator.hpp"

namespace nmqsd {

struct ObservableSeries {
    std::string name;
    std::vector<double> values;
    std::vector<double> stderr_values;
};

struct EnsembleResult {
    TimeGrid grid;
    Mode mode = Mode::linear;
    /// Grid indices that were recorded (every record_every-th point plus the last).
    std::vector<int> indices;
    std::vector<DensityMatrix> rho;
    /// Standard error of each entry, sqrt((var Re + var Im) / n).
    std::vector<Eigen::MatrixXd> stderr_entries;
    /// Variances of Re and Im parts and their covariance, per entry (sample estimates).
    std::vector<Eigen::MatrixXd> var_re, var_im, cov_re_im;
    /// M[||psi||^2] and its standard error (identically 1 and 0 in nonlinear mode).
    std::vector<double> trace, trace_stderr;
    /// Per-group means for jackknife error bars of nonlinear observables.
    std::vector<std::vector<DensityMatrix>> group_rho;
    std::vector<int> group_sizes;
    int n_trajectories = 0;
    std::string config_digest;

    std::size_t points() const { return indices.size(); }
    double time(std::size_t k) const { return grid.time(indices[k]); }
};

struct EnsembleOptions {
    int trajectories = 1;
    std::uint64_t seed = 0;
    /// 0 selects std::thread::hardware_concurrency().
    int workers = 0;
    int record_every = 1;
    int chunk_size = 16;
    int jackknife_groups = 20;
    /// Called after each merged chunk with the number of finished trajectories.
    std::function<void(int)> progress;
};

/// Runs options.trajectories trajectories (stream ids 0..n-1) and averages them.
EnsembleResult run_ensemble(const Simulator& sim, const StateVector& psi0, Mode mode,
                            const EnsembleOptions& options);

/// Averages already computed trajectories (all on one grid).
EnsembleResult average_density(const std::vector<TrajectoryResult>& trajectories, Mode mode);

/// |rho_ij| (0-based indices).
double coherence(const DensityMatrix& rho, int i, int j);

/// Counts eigenvalues clamped to zero.
struct EntropyWarnings {
    int clamped = 0;
};

/// -sum lambda log(lambda) in base e or 2. Eigenvalues in [-1e-6, 0) are clamped
/// to zero (counted in `warnings`); anything more negative is an error.
double von_neumann_entropy(const DensityMatrix& rho, double log_base = std::numbers::e,
                           EntropyWarnings* warnings = nullptr);

/// Real parts of the diagonal.
std::vector<double> populations(const DensityMatrix& rho);

/// Observable series with error bars. Indices are 0-based.
ObservableSeries coherence_series(const EnsembleResult& result, int i, int j);
ObservableSeries population_series(const EnsembleResult& result, int i);
ObservableSeries re_series(const EnsembleResult& result, int i, int j);
ObservableSeries im_series(const EnsembleResult& result, int i, int j);
/// Entropy with a jackknife error over the trajectory groups.
ObservableSeries entropy_series(const EnsembleResult& result, double log_base = std::numbers::e,
                                EntropyWarnings* warnings = nullptr);
ObservableSeries trace_series(const EnsembleResult& result);

/// Recorded indices for a grid: 0, r, 2r, ... and always the last point.
std::vector<int> recorded_indices(const TimeGrid& grid, int record_every);

} // namespace nmqsd
