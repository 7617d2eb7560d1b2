#include "nmqsd/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>

#include "nmqsd/errors.hpp"

namespace nmqsd {

namespace {

void require_square(const ComplexMatrix& m, const char* what) {
    if (m.rows() != m.cols()) {
        throw ValidationError("quantum-core", std::string(what) + ": operator is not square (" +
                                                  std::to_string(m.rows()) + "x" +
                                                  std::to_string(m.cols()) + ")");
    }
}

int spin_dim(double l) {
    const double twice = 2.0 * l;
    const long rounded = std::lround(twice);
    if (l <= 0.0 || std::abs(twice - static_cast<double>(rounded)) > 1e-12) {
        throw ValidationError("quantum-core", "spin must be a positive half-integer, got " +
                                                  std::to_string(l));
    }
    return static_cast<int>(rounded) + 1;
}

} // namespace

double max_abs(const ComplexMatrix& m) {
    return m.size() == 0 ? 0.0 : m.cwiseAbs().maxCoeff();
}

double hermiticity_residual(const ComplexMatrix& m) {
    require_square(m, "hermiticity_residual");
    return max_abs(m - m.adjoint());
}

bool all_finite(const ComplexMatrix& m) {
    return m.allFinite();
}

ComplexMatrix matmul(const ComplexMatrix& a, const ComplexMatrix& b) {
    if (a.cols() != b.rows()) {
        throw ValidationError("quantum-core", "matmul: inner dimensions differ (" +
                                                  std::to_string(a.cols()) + " vs " +
                                                  std::to_string(b.rows()) + ")");
    }
    return a * b;
}

ComplexMatrix commutator(const ComplexMatrix& a, const ComplexMatrix& b) {
    require_square(a, "commutator");
    require_square(b, "commutator");
    if (a.rows() != b.rows()) {
        throw ValidationError("quantum-core", "commutator: dimensions differ");
    }
    return a * b - b * a;
}

std::vector<double> eigvals_hermitian(const DensityMatrix& m, double tolerance) {
    require_square(m, "eigvals_hermitian");
    const double scale = std::max(1.0, max_abs(m));
    const double residual = hermiticity_residual(m);
    if (residual > tolerance * scale) {
        throw ValidationError("quantum-core", "eigvals_hermitian: matrix is not Hermitian (residual " +
                                                  std::to_string(residual) + ")");
    }
    const ComplexMatrix sym = 0.5 * (m + m.adjoint());
    Eigen::SelfAdjointEigenSolver<ComplexMatrix> solver(sym, Eigen::EigenvaluesOnly);
    if (solver.info() != Eigen::Success) {
        throw NumericError("quantum-core", "eigvals_hermitian: eigensolver did not converge");
    }
    std::vector<double> values(solver.eigenvalues().data(),
                               solver.eigenvalues().data() + solver.eigenvalues().size());
    std::sort(values.begin(), values.end(), std::greater<>());
    return values;
}

ComplexMatrix matrix_unit(int dim, int row, int col) {
    if (row < 0 || col < 0 || row >= dim || col >= dim) {
        throw ValidationError("quantum-core", "matrix_unit: index out of range");
    }
    ComplexMatrix e = ComplexMatrix::Zero(dim, dim);
    e(row, col) = 1.0;
    return e;
}

ComplexMatrix spin_jz(double l) {
    const int dim = spin_dim(l);
    ComplexMatrix jz = ComplexMatrix::Zero(dim, dim);
    for (int i = 0; i < dim; ++i) {
        jz(i, i) = -l + i;
    }
    return jz;
}

ComplexMatrix spin_jminus(double l) {
    const int dim = spin_dim(l);
    ComplexMatrix jm = ComplexMatrix::Zero(dim, dim);
    for (int i = 1; i < dim; ++i) {
        const double m = -l + i;
        jm(i - 1, i) = std::sqrt(l * (l + 1.0) - m * (m - 1.0));
    }
    return jm;
}

DensityMatrix projector(const StateVector& psi) {
    return psi * psi.adjoint();
}

cd expectation(const StateVector& psi, const ComplexMatrix& op) {
    const double norm2 = psi.squaredNorm();
    if (norm2 <= 0.0) {
        throw NumericError("quantum-core", "expectation: zero state");
    }
    return psi.dot(op * psi) / norm2;
}

} // namespace nmqsd
