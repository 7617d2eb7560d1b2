#pragma once

// Small dense complex linear algebra shared by every module.
//
// Operators in this project never exceed a few tens of levels, so everything
// is stored densely. Wherever a tolerance is applied to a matrix the norm is
// the largest absolute entry (max_abs), nothing else.

#include <complex>
#include <vector>

#include <Eigen/Dense>

namespace nmqsd {

using cd = std::complex<double>;
using ComplexMatrix = Eigen::MatrixXcd;
using StateVector = Eigen::VectorXcd;
/// Reduced density matrix. Same storage as an operator; the Hermitian,
/// unit-trace and positivity invariants are checked where they matter.
using DensityMatrix = Eigen::MatrixXcd;

inline constexpr cd kImag{0.0, 1.0};

/// Largest absolute entry.
double max_abs(const ComplexMatrix& m);

/// max_abs(m - m^dagger).
double hermiticity_residual(const ComplexMatrix& m);

bool all_finite(const ComplexMatrix& m);

/// Checked matrix product.
ComplexMatrix matmul(const ComplexMatrix& a, const ComplexMatrix& b);

/// ab - ba for square operators of equal size.
ComplexMatrix commutator(const ComplexMatrix& a, const ComplexMatrix& b);

/// Eigenvalues of a Hermitian matrix, sorted in descending order.
/// Throws ValidationError when max_abs(m - m^dagger) exceeds
/// tolerance * max(1, max_abs(m)).
std::vector<double> eigvals_hermitian(const DensityMatrix& m, double tolerance = 1e-10);

/// |row><col| on a dim-level space (0-based indices).
ComplexMatrix matrix_unit(int dim, int row, int col);

/// J_z for spin l, levels ordered by increasing J_z (index 0 = -l).
ComplexMatrix spin_jz(double l);

/// J_- for spin l in the same ordering; it maps index i to index i-1 with
/// <m-1|J_-|m> = sqrt(l(l+1) - m(m-1)).
ComplexMatrix spin_jminus(double l);

/// |psi><psi|.
DensityMatrix projector(const StateVector& psi);

/// <psi|op|psi> / <psi|psi>.
cd expectation(const StateVector& psi, const ComplexMatrix& op);

} // namespace nmqsd
