#pragma once

// Model catalog. Levels are 0-based in this API (the config file and CSV use
// 1-based labels). For ladder models index 0 is the ground level (lowest J_z),
// so the Lindblad operator is strictly upper triangular and the basis operator
// O_j^(k) = |j><j+k+1| lives on superdiagonal k+1.

#include <string>
#include <vector>

#include "nmqsd/linalg.hpp"

namespace nmqsd {

enum class Family { spin_l, spin_general, driven_four_level, multi_transition, band_model };

std::string family_name(Family family);

/// amplitude * exp(i frequency t) |ket><bra| + h.c.
struct DriveTerm {
    int ket_level = 0;
    int bra_level = 1;
    cd amplitude{0.0, 0.0};
    double frequency = 0.0;
};

struct ModelSpec {
    int dim = 0;
    Family family = Family::spin_l;
    /// Free-form name used in reports ("spin_l(l=1.5)", "three_level_general", ...).
    std::string label;
    ComplexMatrix h_static;
    std::vector<DriveTerm> drives;
    ComplexMatrix lindblad;
    /// Highest noise order present in the exact O-operator.
    int noise_order_exact = 0;

    ComplexMatrix hamiltonian(double t) const;
    /// Writes H(t) into a preallocated dim x dim matrix.
    void hamiltonian_into(double t, ComplexMatrix& out) const;
    bool is_ladder() const { return family == Family::spin_l || family == Family::spin_general; }
};

/// H = omega J_z, L = J_-. Levels run from m = -l (index 0) to m = l.
ModelSpec build_spin_model(double l, double omega);

/// H = sum_m C_m |m><m|, L = sum_n G_n |n-1><n| (C has dim entries, G has dim-1).
ModelSpec build_spin_general(const std::vector<double>& C, const std::vector<cd>& G);

/// Three-level ladder with H = sum_j omega_j |j><j| and L = kappa_1 |1><2| + kappa_2 |2><3|.
ModelSpec build_three_level(const std::vector<double>& omegas, const std::vector<cd>& kappas);

/// Four-level atom with decay channels |1><j|, j = 2, 3, 4 (0-based rows 0, columns 1..3)
/// and two drives, nominally on the (2,3) and (3,4) transitions.
ModelSpec build_driven_four_level(const std::vector<double>& omegas, const std::vector<cd>& kappas,
                                  const DriveTerm& drive2, const DriveTerm& drive4);

/// N levels, L = sum_j kappa_j |j><N| (all decay from the top level).
ModelSpec build_multi_transition(const std::vector<double>& omegas, const std::vector<cd>& kappas);

/// Lower band = the first kappas.rows() levels, upper band = the rest;
/// L = sum kappa(j, k) |j><M + k|.
ModelSpec build_band_model(const std::vector<double>& omegas, const ComplexMatrix& kappas);

struct BandCoupling {
    int lower = 0;
    int upper = 0;
    cd kappa{0.0, 0.0};
};

/// Same model from an explicit coupling list; couplings inside a band are rejected.
ModelSpec build_band_model(const std::vector<double>& omegas, int lower_count,
                           const std::vector<BandCoupling>& couplings);

/// Validates that a noise-order-0 O-operator exists: no level is both the target
/// and the source of a transition in L, and the Hamiltonian never mixes a
/// transition target (or source) level with a level outside that set.
/// Throws ValidationError naming the offending pair.
void check_noise_free_conditions(const ModelSpec& model);

struct BasisOperator {
    int row = 0;
    int col = 0;
    int order = 0;
};

struct BasisLayout {
    int dim = 0;
    std::vector<BasisOperator> ops;
    std::vector<int> count_per_order;

    int size() const { return static_cast<int>(ops.size()); }
    int max_order() const { return static_cast<int>(count_per_order.size()) - 1; }
    ComplexMatrix matrix(int index) const;
    /// 1 on the entries spanned by operators of the given order, 0 elsewhere.
    Eigen::MatrixXd mask(int order) const;
    /// Union of mask(k) for k = 0..max_order().
    Eigen::MatrixXd support() const;
    /// Basis coefficients of an operator (entries outside the basis are ignored).
    std::vector<cd> coefficients(const ComplexMatrix& op) const;
};

/// Ladder families: O_j^(k) for k = 0..noise_order_exact. Noise-free families:
/// one order-0 list, |r><c| for every transition target r and source c of L.
BasisLayout enumerate_basis(const ModelSpec& model);

/// Drops every operator above max_order.
BasisLayout truncate(const BasisLayout& layout, int max_order);

} // namespace nmqsd
