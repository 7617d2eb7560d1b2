#include <algorithm>
#include <cmath>
#include <random>

#include "doctest.h"
#include "nmqsd/errors.hpp"
#include "nmqsd/linalg.hpp"

using namespace nmqsd;

namespace {

// Cyclic Jacobi on the real symmetric 2n x 2n embedding [[A, -B], [B, A]] of A + iB.
// Every eigenvalue of the Hermitian matrix appears twice in the embedding.
std::vector<double> jacobi_eigenvalues(const ComplexMatrix& h) {
    const int n = static_cast<int>(h.rows());
    const int m = 2 * n;
    std::vector<std::vector<double>> a(m, std::vector<double>(m));
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) {
            a[i][j] = a[i + n][j + n] = h(i, j).real();
            a[i][j + n] = -h(i, j).imag();
            a[i + n][j] = h(i, j).imag();
        }
    }
    for (int sweep = 0; sweep < 100; ++sweep) {
        double off = 0.0;
        for (int p = 0; p < m; ++p) {
            for (int q = p + 1; q < m; ++q) {
                off += a[p][q] * a[p][q];
            }
        }
        if (off < 1e-30) {
            break;
        }
        for (int p = 0; p < m; ++p) {
            for (int q = p + 1; q < m; ++q) {
                if (std::abs(a[p][q]) < 1e-300) {
                    continue;
                }
                const double theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                const double t = (theta >= 0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double s = t * c;
                for (int k = 0; k < m; ++k) {
                    const double akp = a[k][p], akq = a[k][q];
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for (int k = 0; k < m; ++k) {
                    const double apk = a[p][k], aqk = a[q][k];
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
            }
        }
    }
    std::vector<double> all;
    for (int i = 0; i < m; ++i) {
        all.push_back(a[i][i]);
    }
    std::sort(all.begin(), all.end(), std::greater<>());
    std::vector<double> out;
    for (int i = 0; i < m; i += 2) {
        out.push_back(0.5 * (all[i] + all[i + 1]));
    }
    return out;
}

} // namespace

TEST_SUITE("linalg") {

TEST_CASE("Hermitian eigenvalues agree with an independent Jacobi solver") {
    std::mt19937_64 rng(42);
    std::normal_distribution<double> g;
    for (int dim : {1, 2, 4, 7}) {
        ComplexMatrix a(dim, dim);
        for (int i = 0; i < dim; ++i) {
            for (int j = 0; j < dim; ++j) {
                a(i, j) = cd(g(rng), g(rng));
            }
        }
        const ComplexMatrix h = a + a.adjoint();
        const auto ev = eigvals_hermitian(h);
        const auto ref = jacobi_eigenvalues(h);
        REQUIRE(ev.size() == ref.size());
        for (std::size_t k = 0; k < ev.size(); ++k) {
            CHECK(ev[k] == doctest::Approx(ref[k]).epsilon(1e-10));
        }
        CHECK(std::is_sorted(ev.begin(), ev.end(), std::greater<>()));
    }
}

TEST_CASE("non-Hermitian input is rejected") {
    ComplexMatrix m = ComplexMatrix::Zero(2, 2);
    m(0, 1) = 1.0;
    CHECK_THROWS_AS(eigvals_hermitian(m), ValidationError);
}

TEST_CASE("spin matrices follow the ground-first ordering") {
    const ComplexMatrix jz = spin_jz(1.5);
    const ComplexMatrix jm = spin_jminus(1.5);
    CHECK(jz(0, 0).real() == doctest::Approx(-1.5));
    CHECK(jz(3, 3).real() == doctest::Approx(1.5));
    // J_- |m> = sqrt(l(l+1) - m(m-1)) |m-1>; top level m = 3/2 -> sqrt(3).
    CHECK(jm(2, 3).real() == doctest::Approx(std::sqrt(3.0)));
    CHECK(jm(1, 2).real() == doctest::Approx(2.0));
    CHECK(jm(0, 1).real() == doctest::Approx(std::sqrt(3.0)));
    CHECK(max_abs(jm.triangularView<Eigen::Lower>().toDenseMatrix()) == 0.0);
    // [J_z, J_-] = -J_-
    CHECK(max_abs(commutator(jz, jm) + jm) < 1e-14);
    const ComplexMatrix jp = jm.adjoint();
    CHECK(max_abs(commutator(jp, jm) - 2.0 * jz) < 1e-13);
}

TEST_CASE("projector and expectation") {
    StateVector psi(2);
    psi << cd(1.0, 0.0), cd(0.0, 1.0);
    const DensityMatrix p = projector(psi);
    CHECK(p(0, 1) == cd(0.0, -1.0));
    CHECK(hermiticity_residual(p) == 0.0);
    const ComplexMatrix sz = spin_jz(0.5) * 2.0;
    CHECK(std::abs(expectation(psi, sz)) < 1e-15);
    CHECK(matrix_unit(3, 0, 2)(0, 2) == cd(1.0, 0.0));
    CHECK_THROWS_AS(matmul(ComplexMatrix::Zero(2, 3), ComplexMatrix::Zero(2, 3)), ValidationError);
}

}
