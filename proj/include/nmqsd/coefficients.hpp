#pragma once

// O-operator coefficient tables.
//
// The O-operator is expanded in noise order,
//   O(t, s, z*) = sum_n int ds_1..ds_n P^(n)(t, s, s_1..s_n) z*_{s_1} .. z*_{s_n},
// with each P^(n) an operator on the order-n basis (superdiagonal n+1 for ladder
// models). The kernel-weighted integrals
//   Q^(n)(t, s_1..s_n) = int_0^t ds alpha(t, s) P^(n)(t, s, s_1..s_n)
// are what a trajectory needs: Q^(0) = sum_j F_j O_j^(0), Q^(1) carries P_j^(1)(t, s_1), ...
//
// Every P-line is advanced in t with RK4 from its starting point (t = s, or
// t = s_k for the boundary relation n P^(n)(t, s, .., t) = [L, P^(n-1)(t, s, ..)]).
// All lines move together so the kernel integrals at each RK stage see the
// current values of every line.

#include <span>
#include <vector>

#include "nmqsd/linalg.hpp"
#include "nmqsd/models.hpp"
#include "nmqsd/noise.hpp"

namespace nmqsd {

struct CoefficientOptions {
    /// Time indices at which the full P-lines are kept (needed by consistency_residual).
    std::vector<int> keep_lines;
    /// Three-level ladder only: use the coefficient equations exactly as printed
    /// in the literature form (f_1, f_2, p), which carry an extra omega_2 term.
    bool printed_three_level = false;
    /// Recompute F on a grid with twice the step and require agreement within
    /// probe_tolerance.
    bool convergence_probe = true;
    double probe_tolerance = 1e-6;
};

class CoefficientTable {
public:
    const TimeGrid& grid() const { return grid_; }
    /// Basis truncated to max_order().
    const BasisLayout& layout() const { return layout_; }
    int max_order() const { return max_order_; }
    int dim() const { return layout_.dim; }

    /// Q^(0)(t_n) = sum_j F_j(t_n) O_j^(0).
    ComplexMatrix obar0(int n) const;
    /// Q^(1)(t_n, s_1).
    ComplexMatrix q1(int n, int s1) const;
    /// Q^(2)(t_n, s_1, s_2), symmetric in (s_1, s_2).
    ComplexMatrix q2(int n, int s1, int s2) const;

    /// Basis coefficients; j counts operators of the given order in layout order.
    cd F(int j, int n) const;
    cd P1(int j, int n, int s1) const;
    cd P2(int j, int n, int s1, int s2) const;

    /// Number of basis operators of the given order.
    int count(int order) const { return static_cast<int>(pattern_[static_cast<std::size_t>(order)].size()); }

    bool has_lines(int n) const;
    /// P^(0)(t_n, s), P^(1)(t_n, s, s_1), P^(2)(t_n, s, s_1, s_2); only at kept indices.
    ComplexMatrix p0(int n, int s) const;
    ComplexMatrix p1(int n, int s, int s1) const;
    ComplexMatrix p2(int n, int s, int s1, int s2) const;

    /// Adds Q^(k) at time index n into `out`, with `scale`; used by the trajectory code.
    void add_q0(int n, cd scale, ComplexMatrix& out) const;
    void add_q1(int n, int s1, cd scale, ComplexMatrix& out) const;
    void add_q2(int n, int s1, int s2, cd scale, ComplexMatrix& out) const;

private:
    friend class CoefficientIntegrator;

    struct Snapshot {
        int n = -1;
        std::vector<cd> p0;
        std::vector<cd> p1;
        std::vector<cd> p2;
    };

    const Snapshot* snapshot(int n) const;
    void check_order(int order, const char* what) const;

    TimeGrid grid_;
    BasisLayout layout_;
    int max_order_ = 0;
    // Entries (row, col) of each order, in layout order.
    std::vector<std::vector<std::pair<int, int>>> pattern_;
    std::vector<cd> q0_;
    std::vector<cd> q1_;
    std::vector<cd> q2_;
    std::vector<Snapshot> snapshots_;
};

/// Integrates the coefficient equations of `model` up to noise order max_order.
/// Throws ValidationError when max_order exceeds the exact order, NumericError
/// when the convergence probe fails (the message carries a suggested dt).
CoefficientTable integrate_coefficients(const ModelSpec& model, const CorrelationKernel& kernel,
                                        const TimeGrid& grid, int max_order,
                                        const CoefficientOptions& options = {});

/// O-bar(t_n, z*) from the table: order-0 part plus trapezoid quadratures of the
/// noise terms. zstar holds z* at grid indices 0..n (at least).
ComplexMatrix assemble_obar(const CoefficientTable& table, std::span<const cd> zstar, int n);

ComplexMatrix assemble_obar(const CoefficientTable& table, const BasisLayout& layout,
                            const NoiseRealization& noise, int n);

struct ResidualReport {
    double absolute = 0.0;
    double relative = 0.0;
    /// True when the time derivative used a one-sided stencil (near t = s or t = t_max).
    bool one_sided = false;
};

/// Grid indices whose P-lines consistency_residual needs for the point (n, s).
std::vector<int> residual_stencil(const TimeGrid& grid, int n, int s);

/// Evaluates both sides of the evolution equation of the O-operator,
///   d/dt O(t,s,z*) = [-iH(t) + L z*_t - L^dagger O-bar(t,z*), O(t,s,z*)] - L^dagger dO-bar/dz*_s,
/// at (t_n, t_s) along the probe noise. The time derivative is a five-point
/// finite difference over kept lines; the functional derivative comes from the
/// table (it removes one noise integral). Noise integrals use the composite
/// fourth-order rule split at the kinks of the integrands.
ResidualReport consistency_residual(const ModelSpec& model, const CoefficientTable& table,
                                    const BasisLayout& layout, const CorrelationKernel& kernel,
                                    const NoiseRealization& probe_noise, int n, int s);

/// Smooth deterministic path z*_t = amplitude exp(i frequency t), handy for residual probes.
NoiseRealization smooth_probe_noise(const TimeGrid& grid, cd amplitude = {0.3, 0.0},
                                    double frequency = 0.7);

} // namespace nmqsd
