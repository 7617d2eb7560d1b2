#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "nmqsd/linalg.hpp"

namespace nmqsd {

/// Uniform grid t_n = n * dt on [0, t_max], n = 0..n_steps.
class TimeGrid {
public:
    TimeGrid() = default;
    TimeGrid(double t_max, int n_steps);

    double t_max() const { return t_max_; }
    int n_steps() const { return n_steps_; }
    /// Number of grid points, n_steps + 1.
    int size() const { return n_steps_ + 1; }
    double dt() const { return t_max_ / n_steps_; }
    double time(int n) const { return n * dt(); }

    bool operator==(const TimeGrid&) const = default;

private:
    double t_max_ = 1.0;
    int n_steps_ = 1;
};

/// Bath correlation function alpha(t, s) = M[z_t z_s^*].
///
/// The exponential kind is the Lorentzian bath, alpha = (Gamma gamma / 2) exp(-gamma |t - s|).
/// The tabulated kind is stationary: alpha(t, s) = a(t - s) for t >= s, linearly
/// interpolated from samples a(k * lag_step), and alpha(t, s) = conj(alpha(s, t)).
class CorrelationKernel {
public:
    enum class Kind { exponential, tabulated };

    static CorrelationKernel exponential(double Gamma, double gamma);
    static CorrelationKernel tabulated(double lag_step, std::vector<cd> values);

    Kind kind() const { return kind_; }
    bool is_exponential() const { return kind_ == Kind::exponential; }
    double Gamma() const { return Gamma_; }
    double gamma() const { return gamma_; }
    /// alpha(t, t) for the exponential kind, Gamma * gamma / 2.
    double amplitude() const { return 0.5 * Gamma_ * gamma_; }
    double lag_step() const { return lag_step_; }
    const std::vector<cd>& table() const { return table_; }
    /// Largest |t - s| the kernel can evaluate (infinite for exponential).
    double max_lag() const;

    cd operator()(double t, double s) const;

private:
    CorrelationKernel() = default;

    Kind kind_ = Kind::exponential;
    double Gamma_ = 0.0;
    double gamma_ = 1.0;
    double lag_step_ = 0.0;
    std::vector<cd> table_;
};

/// Free-function form of the kernel evaluation. Negative times are rejected.
cd alpha(const CorrelationKernel& kernel, double t, double s);

/// One sampled noise path. values[n] holds z^*_{t_n}.
struct NoiseRealization {
    TimeGrid grid;
    std::vector<cd> values;
    std::uint64_t seed = 0;
    std::uint64_t stream_id = 0;
};

/// Random engine for one (seed, stream_id) pair. Streams are derived only from
/// the key, never from scheduling order.
std::mt19937_64 make_stream(std::uint64_t seed, std::uint64_t stream_id);

/// Circular standard complex Gaussian: (x + i y) / sqrt(2), x, y ~ N(0, 1).
cd circular_gaussian(std::mt19937_64& engine);

/// Draws noise paths for a fixed kernel and grid. The exponential kernel uses
/// the exact stationary AR(1) recursion; any other kernel uses a Cholesky
/// factor of the grid covariance with diagonal jitter 1e-12 * max diagonal.
class NoiseSampler {
public:
    NoiseSampler(const CorrelationKernel& kernel, const TimeGrid& grid);

    NoiseRealization sample(std::uint64_t seed, std::uint64_t stream_id) const;
    /// Fills `out` (size grid.size()) with z^* values drawn from `engine`.
    void sample_into(std::mt19937_64& engine, std::span<cd> out) const;

    const TimeGrid& grid() const { return grid_; }

private:
    CorrelationKernel kernel_;
    TimeGrid grid_;
    double decay_ = 0.0;      // exp(-gamma dt)
    double innovation_ = 0.0; // sqrt(A (1 - exp(-2 gamma dt)))
    double stationary_ = 0.0; // sqrt(A)
    ComplexMatrix factor_;    // lower Cholesky factor, tabulated kernels only
};

NoiseRealization sample_noise(const CorrelationKernel& kernel, const TimeGrid& grid,
                              std::uint64_t seed, std::uint64_t stream_id);

/// Sample estimates of M[z_t z_s^*] and M[z_t z_s] on a probe grid of
/// `points` x `points` times spread evenly over the grid.
struct CovarianceProbe {
    std::vector<int> indices;
    int realizations = 0;
    /// Row-major over (t index, s index).
    std::vector<cd> covariance, pseudo, exact;
    std::vector<double> se_cov_re, se_cov_im, se_pseudo_re, se_pseudo_im;
    /// Largest deviation of any real or imaginary part, in standard errors.
    double worst_covariance = 0.0;
    double worst_pseudo = 0.0;
};

CovarianceProbe covariance_probe(const CorrelationKernel& kernel, const TimeGrid& grid, int realizations,
                                 std::uint64_t seed, int points = 10);

struct ShiftedNoise {
    cd z_shifted;
    cd memory;
};

/// One step of the shift integral I(t) = int_0^t alpha^*(t, s) <L^dagger>_s ds for
/// the exponential kernel: returns z~^*_t = z^*_t + I(t) and
/// I(t + dt) = exp(-gamma dt) I(t) + (Gamma gamma / 2) <L^dagger>_t dt.
ShiftedNoise shifted_noise_update(cd memory, cd z_raw, cd expect_ldag,
                                  const CorrelationKernel& kernel, double dt);

/// Trapezoid-corrected form of the same recursion, using <L^dagger> at both ends of the step.
cd shifted_memory_trapezoid(cd memory, cd expect_ldag_now, cd expect_ldag_next,
                            const CorrelationKernel& kernel, double dt);

/// Shift integral I(t_n) along one trajectory. The exponential kernel runs the
/// recursion above in O(1) per step; other kernels keep the <L^dagger> history and
/// integrate it directly (trapezoid, O(n) per step).
class ShiftMemory {
public:
    ShiftMemory(const CorrelationKernel& kernel, const TimeGrid& grid);

    /// I(t_n) at the current step.
    cd current() const { return current_; }
    /// Estimate of I(t_{n+1}) from <L^dagger>_{t_n} only.
    cd predict(cd expect_ldag_now) const;
    /// I(t_{n+1}) that commit() would produce, without advancing.
    cd peek(cd expect_ldag_now, cd expect_ldag_next) const;
    /// Advances to t_{n+1} once <L^dagger> at both ends of the step is known.
    void commit(cd expect_ldag_now, cd expect_ldag_next);

private:
    cd history_integral(int n, cd pending, cd last_value) const;

    CorrelationKernel kernel_;
    TimeGrid grid_;
    int step_ = 0;
    cd current_{0.0, 0.0};
    std::vector<cd> history_;
};

} // namespace nmqsd
