#pragma once

// O-bar along one noise path for the exponential kernel, without tables.
//
// With A = Gamma gamma / 2 define
//   Xi_m(t) = int du_1..du_m alpha(t,u_1)..alpha(t,u_m) d^m O-bar(t,z*) / dz*_{u_1}..dz*_{u_m},
// so Xi_0 = O-bar. Differentiating the kernel integrals gives the closed hierarchy
//   dXi_m/dt = delta_{m0} A L + m A [L, Xi_{m-1}] - (m+1) gamma Xi_m
//              + [-iH(t) + L z*_t, Xi_m] - sum_j C(m,j) [L^dagger Xi_j, Xi_{m-j}] - L^dagger Xi_{m+1},
// with Xi_m(0) = 0. In the norm-preserving equation O-bar is evaluated on the
// shifted path z~*_s = z*_s + int_0^t alpha^*(s,u) <L^dagger>_u du, s <= t, which
// moves with t; this adds <L^dagger>_t Xi_{m+1}. Truncating the O-operator at noise order k sets Xi_{k+1} = 0
// and restricts every Xi_m to the span of the truncated basis.

#include <vector>

#include "nmqsd/linalg.hpp"
#include "nmqsd/models.hpp"
#include "nmqsd/noise.hpp"

namespace nmqsd {

/// Scratch buffers for one thread; see MemoryHierarchy::make_workspace.
struct MemoryWorkspace {
    ComplexMatrix gen;
    ComplexMatrix t1;
    ComplexMatrix t2;
    std::vector<ComplexMatrix> ldag_xi;
    std::vector<ComplexMatrix> ka;
    std::vector<ComplexMatrix> kb;
    std::vector<ComplexMatrix> pred;
};

/// Immutable once built; share one instance across threads, one workspace per thread.
class MemoryHierarchy {
public:
    /// `layout` is the (possibly truncated) basis; its max order fixes the depth.
    MemoryHierarchy(const ModelSpec& model, const BasisLayout& layout, const CorrelationKernel& kernel);

    int depth() const { return depth_; }
    int dim() const { return dim_; }

    /// Fresh state: depth() zero matrices.
    std::vector<ComplexMatrix> zero_state() const;
    MemoryWorkspace make_workspace() const;

    /// dxi = d/dt xi for the Hamiltonian `h` (already evaluated at t) and noise z*_t.
    /// `expect_ldag` is <L^dagger>_t for the shifted path (0 in linear mode).
    void derivative(const ComplexMatrix& h, cd zstar, const std::vector<ComplexMatrix>& xi,
                    std::vector<ComplexMatrix>& dxi, MemoryWorkspace& ws,
                    cd expect_ldag = {0.0, 0.0}) const;

    /// One Heun step of length dt between (h_now, z_now) and (h_next, z_next).
    void heun_step(const ComplexMatrix& h_now, const ComplexMatrix& h_next, cd z_now, cd z_next,
                   double dt, std::vector<ComplexMatrix>& xi, MemoryWorkspace& ws) const;

private:
    int depth_ = 1;
    int dim_ = 0;
    double amplitude_ = 0.0;
    double gamma_ = 1.0;
    ComplexMatrix lindblad_;
    ComplexMatrix ldag_;
    Eigen::MatrixXcd mask_;
    std::vector<std::vector<double>> binomial_;
};

} // namespace nmqsd
