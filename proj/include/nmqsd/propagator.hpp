#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <vector>

#include "nmqsd/coefficients.hpp"
#include "nmqsd/linalg.hpp"
#include "nmqsd/memory.hpp"
#include "nmqsd/models.hpp"
#include "nmqsd/noise.hpp"

namespace nmqsd {

enum class Mode { linear, nonlinear };

/// How O-bar(t, z*) is produced along a trajectory: the memory hierarchy
/// (exponential kernel, O(1) per step) or a precomputed coefficient table.
enum class ObarMethod { automatic, recursion, table };

struct TrajectoryResult {
    TimeGrid grid;
    Mode mode = Mode::linear;
    /// One state per grid point; normalized in nonlinear mode, raw in linear mode.
    std::vector<StateVector> states;
    /// ||psi_t||^2 per grid point (1 in nonlinear mode).
    std::vector<double> norms;
    std::uint64_t seed = 0;
    std::uint64_t stream_id = 0;
};

/// Scratch space for the step functions; one per thread.
struct StepWorkspace {
    explicit StepWorkspace(int dim = 0);
    StateVector k1, k2, pred, v_l, v_o, v_lo, hpsi;
};

/// One Heun step of d psi/dt = [-iH(t) + L z*_t - L^dagger O-bar(t)] psi from t to t + dt.
/// obar_now/obar_next and z_now/z_next are the values at the two ends of the step.
StateVector step_linear(const StateVector& psi, const ModelSpec& model, const ComplexMatrix& obar_now,
                        const ComplexMatrix& obar_next, cd z_now, cd z_next, double t, double dt);

/// One Heun step of the norm-preserving equation
///   d psi/dt = [-iH + (L - <L>) z~*_t + <L^dagger>(O-bar - <O-bar>) - (L^dagger O-bar - <L^dagger O-bar>)] psi
/// with expectations on the normalized stage states; the result is renormalized.
/// Throws NumericError if the norm falls below 1e-12 before renormalization.
StateVector step_nonlinear(const StateVector& psi, const ModelSpec& model,
                           const ComplexMatrix& obar_now, const ComplexMatrix& obar_next,
                           cd z_now, cd z_next, double t, double dt);

/// Everything a trajectory needs that does not depend on the noise. Immutable
/// after construction and safe to share across threads.
class Simulator {
public:
    /// `truncation_order` selects the basis (at most model.noise_order_exact).
    /// With ObarMethod::automatic the exponential kernel uses the memory hierarchy
    /// and any other kernel uses a table (built here unless one is passed in).
    Simulator(ModelSpec model, CorrelationKernel kernel, TimeGrid grid, int truncation_order,
              ObarMethod method = ObarMethod::automatic,
              std::shared_ptr<const CoefficientTable> table = nullptr);

    const ModelSpec& model() const { return model_; }
    const CorrelationKernel& kernel() const { return kernel_; }
    const TimeGrid& grid() const { return grid_; }
    const BasisLayout& layout() const { return layout_; }
    int truncation_order() const { return order_; }
    ObarMethod method() const { return method_; }
    const NoiseSampler& sampler() const { return sampler_; }

    /// Per-thread scratch for run(); obtain from make_workspace().
    struct Workspace {
        StepWorkspace step;
        MemoryWorkspace memory;
        std::vector<ComplexMatrix> xi;
        ComplexMatrix h_now, h_next, obar_now, obar_next, ldag;
        std::vector<cd> noise;
        std::vector<cd> shifted;
        std::vector<cd> eldag;
        StateVector psi;
    };
    std::unique_ptr<Workspace> make_workspace() const;

    /// Runs one trajectory; `visit(n, psi)` sees the state at every grid point n
    /// (normalized in nonlinear mode). Errors carry t and stream_id.
    void run(const StateVector& psi0, Mode mode, std::uint64_t seed, std::uint64_t stream_id,
             Workspace& ws, const std::function<void(int, const StateVector&)>& visit) const;

    /// Same, driven by a given noise path (values z* on the grid).
    void run_with_noise(const StateVector& psi0, Mode mode, std::span<const cd> zstar,
                        std::uint64_t stream_id, Workspace& ws,
                        const std::function<void(int, const StateVector&)>& visit) const;

    TrajectoryResult run(const StateVector& psi0, Mode mode, std::uint64_t seed,
                         std::uint64_t stream_id) const;

private:
    ModelSpec model_;
    CorrelationKernel kernel_;
    TimeGrid grid_;
    int order_ = 0;
    BasisLayout layout_;
    ObarMethod method_ = ObarMethod::recursion;
    std::shared_ptr<const CoefficientTable> table_;
    std::unique_ptr<MemoryHierarchy> memory_;
    NoiseSampler sampler_;
};

/// Convenience wrapper: one trajectory with a table (or the memory hierarchy when
/// table is null and the kernel is exponential).
TrajectoryResult run_trajectory(const ModelSpec& model, std::shared_ptr<const CoefficientTable> table,
                                const BasisLayout& layout, const CorrelationKernel& kernel,
                                const TimeGrid& grid, const StateVector& psi0, Mode mode,
                                std::uint64_t seed, std::uint64_t stream_id);

} // namespace nmqsd
