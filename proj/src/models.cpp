#include "nmqsd/models.hpp"

#include <cmath>
#include <set>
#include <sstream>

#include "nmqsd/errors.hpp"

namespace nmqsd {

namespace {

constexpr const char* kModule = "models";

ComplexMatrix diagonal(const std::vector<double>& values) {
    const auto n = static_cast<Eigen::Index>(values.size());
    ComplexMatrix h = ComplexMatrix::Zero(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        h(i, i) = values[static_cast<std::size_t>(i)];
    }
    return h;
}

void require_finite(const std::vector<double>& values, const char* what) {
    for (double v : values) {
        if (!std::isfinite(v)) {
            throw ValidationError(kModule, std::string(what) + " contains a non-finite value");
        }
    }
}

std::string pair_label(int a, int b) {
    return "(" + std::to_string(a + 1) + "," + std::to_string(b + 1) + ")";
}

constexpr double kZero = 0.0;

} // namespace

std::string family_name(Family family) {
    switch (family) {
    case Family::spin_l: return "spin_l";
    case Family::spin_general: return "spin_general";
    case Family::driven_four_level: return "driven_four_level";
    case Family::multi_transition: return "multi_transition";
    case Family::band_model: return "band_model";
    }
    return "unknown";
}

ComplexMatrix ModelSpec::hamiltonian(double t) const {
    ComplexMatrix h(dim, dim);
    hamiltonian_into(t, h);
    return h;
}

void ModelSpec::hamiltonian_into(double t, ComplexMatrix& out) const {
    out = h_static;
    for (const DriveTerm& d : drives) {
        const cd v = d.amplitude * std::exp(kImag * (d.frequency * t));
        out(d.ket_level, d.bra_level) += v;
        out(d.bra_level, d.ket_level) += std::conj(v);
    }
}

ModelSpec build_spin_model(double l, double omega) {
    if (!(l > 0.0)) {
        throw ValidationError(kModule, "spin l must be positive, got " + std::to_string(l));
    }
    if (!std::isfinite(omega)) {
        throw ValidationError(kModule, "omega must be finite");
    }
    ModelSpec m;
    m.lindblad = spin_jminus(l);
    m.dim = static_cast<int>(m.lindblad.rows());
    m.family = Family::spin_l;
    std::ostringstream label;
    label << "spin_l(l=" << l << ")";
    m.label = label.str();
    m.h_static = omega * spin_jz(l);
    m.noise_order_exact = std::max(0, m.dim - 2);
    return m;
}

ModelSpec build_spin_general(const std::vector<double>& C, const std::vector<cd>& G) {
    if (C.size() < 2) {
        throw ValidationError(kModule, "spin_general needs at least two levels");
    }
    if (G.size() + 1 != C.size()) {
        throw ValidationError(kModule, "spin_general needs len(G) = len(C) - 1 (got " +
                                           std::to_string(G.size()) + " and " +
                                           std::to_string(C.size()) + ")");
    }
    require_finite(C, "C");
    ModelSpec m;
    m.dim = static_cast<int>(C.size());
    m.family = Family::spin_general;
    m.label = "spin_general";
    m.h_static = diagonal(C);
    m.lindblad = ComplexMatrix::Zero(m.dim, m.dim);
    for (int n = 0; n + 1 < m.dim; ++n) {
        m.lindblad(n, n + 1) = G[static_cast<std::size_t>(n)];
    }
    m.noise_order_exact = std::max(0, m.dim - 2);
    return m;
}

ModelSpec build_three_level(const std::vector<double>& omegas, const std::vector<cd>& kappas) {
    if (omegas.size() != 3 || kappas.size() != 2) {
        throw ValidationError(kModule, "three-level model needs 3 omegas and 2 kappas");
    }
    ModelSpec m = build_spin_general(omegas, kappas);
    m.label = "three_level_general";
    return m;
}

ModelSpec build_driven_four_level(const std::vector<double>& omegas, const std::vector<cd>& kappas,
                                  const DriveTerm& drive2, const DriveTerm& drive4) {
    if (omegas.size() != 4 || kappas.size() != 3) {
        throw ValidationError(kModule, "driven four-level model needs 4 omegas and 3 kappas");
    }
    require_finite(omegas, "omegas");
    ModelSpec m;
    m.dim = 4;
    m.family = Family::driven_four_level;
    m.label = "driven_four_level";
    m.h_static = diagonal(omegas);
    m.lindblad = ComplexMatrix::Zero(4, 4);
    for (int j = 1; j < 4; ++j) {
        m.lindblad(0, j) = kappas[static_cast<std::size_t>(j - 1)];
    }
    for (const DriveTerm* d : {&drive2, &drive4}) {
        if (d->ket_level < 0 || d->ket_level >= 4 || d->bra_level < 0 || d->bra_level >= 4 ||
            d->ket_level == d->bra_level) {
            throw ValidationError(kModule, "drive levels " + pair_label(d->ket_level, d->bra_level) +
                                               " are invalid for a four-level model");
        }
        if (d->ket_level == 0 || d->bra_level == 0) {
            throw ValidationError(kModule, "drive " + pair_label(d->ket_level, d->bra_level) +
                                               " acts on a dissipative channel (1,j)");
        }
        m.drives.push_back(*d);
    }
    m.noise_order_exact = 0;
    check_noise_free_conditions(m);
    return m;
}

ModelSpec build_multi_transition(const std::vector<double>& omegas, const std::vector<cd>& kappas) {
    if (omegas.size() < 2) {
        throw ValidationError(kModule, "multi_transition needs N >= 2 levels");
    }
    if (kappas.size() + 1 != omegas.size()) {
        throw ValidationError(kModule, "multi_transition needs N-1 kappas");
    }
    require_finite(omegas, "omegas");
    ModelSpec m;
    m.dim = static_cast<int>(omegas.size());
    m.family = Family::multi_transition;
    m.label = "multi_transition";
    m.h_static = diagonal(omegas);
    m.lindblad = ComplexMatrix::Zero(m.dim, m.dim);
    for (int j = 0; j + 1 < m.dim; ++j) {
        m.lindblad(j, m.dim - 1) = kappas[static_cast<std::size_t>(j)];
    }
    m.noise_order_exact = 0;
    return m;
}

ModelSpec build_band_model(const std::vector<double>& omegas, const ComplexMatrix& kappas) {
    const int lower = static_cast<int>(kappas.rows());
    const int upper = static_cast<int>(kappas.cols());
    if (lower < 1 || upper < 1 || lower + upper != static_cast<int>(omegas.size())) {
        throw ValidationError(kModule, "band model needs a kappa matrix of shape lower x upper "
                                       "with lower + upper = number of omegas");
    }
    std::vector<BandCoupling> couplings;
    for (int j = 0; j < lower; ++j) {
        for (int k = 0; k < upper; ++k) {
            if (kappas(j, k) != kZero) {
                couplings.push_back({j, lower + k, kappas(j, k)});
            }
        }
    }
    return build_band_model(omegas, lower, couplings);
}

ModelSpec build_band_model(const std::vector<double>& omegas, int lower_count,
                           const std::vector<BandCoupling>& couplings) {
    const int dim = static_cast<int>(omegas.size());
    if (lower_count < 1 || lower_count >= dim) {
        throw ValidationError(kModule, "band model needs 1 <= lower band size < number of levels");
    }
    require_finite(omegas, "omegas");
    ModelSpec m;
    m.dim = dim;
    m.family = Family::band_model;
    m.label = "band_model";
    m.h_static = diagonal(omegas);
    m.lindblad = ComplexMatrix::Zero(dim, dim);
    for (const BandCoupling& c : couplings) {
        if (c.lower < 0 || c.lower >= dim || c.upper < 0 || c.upper >= dim) {
            throw ValidationError(kModule, "band coupling " + pair_label(c.lower, c.upper) +
                                               " is out of range");
        }
        const bool lower_ok = c.lower < lower_count;
        const bool upper_ok = c.upper >= lower_count;
        if (!lower_ok || !upper_ok) {
            throw ValidationError(kModule, "band coupling " + pair_label(c.lower, c.upper) +
                                               " lies inside a band");
        }
        m.lindblad(c.lower, c.upper) += c.kappa;
    }
    m.noise_order_exact = 0;
    return m;
}

void check_noise_free_conditions(const ModelSpec& model) {
    std::set<int> targets;
    std::set<int> sources;
    for (int r = 0; r < model.dim; ++r) {
        for (int c = 0; c < model.dim; ++c) {
            if (model.lindblad(r, c) != kZero) {
                if (r == c) {
                    throw ValidationError(kModule, "L has a diagonal entry at " + pair_label(r, c) +
                                                       "; no noise-free O-operator exists");
                }
                targets.insert(r);
                sources.insert(c);
            }
        }
    }
    for (int v : targets) {
        if (sources.count(v) != 0) {
            throw ValidationError(kModule, "level " + std::to_string(v + 1) +
                                               " is both a source and a target of L "
                                               "(chained transition); no noise-free O-operator exists");
        }
    }
    const auto mixes = [](const std::set<int>& set, int a, int b) {
        return (set.count(a) != 0) != (set.count(b) != 0);
    };
    for (int r = 0; r < model.dim; ++r) {
        for (int c = 0; c < model.dim; ++c) {
            if (r != c && model.h_static(r, c) != kZero &&
                (mixes(targets, r, c) || mixes(sources, r, c))) {
                throw ValidationError(kModule, "static Hamiltonian couples " + pair_label(r, c) +
                                                   " across the dissipative block");
            }
        }
    }
    for (const DriveTerm& d : model.drives) {
        const int a = d.ket_level;
        const int b = d.bra_level;
        if (model.lindblad(a, b) != kZero || model.lindblad(b, a) != kZero) {
            throw ValidationError(kModule, "drive " + pair_label(a, b) +
                                               " shares support with the Lindblad operator");
        }
        if (mixes(targets, a, b) || mixes(sources, a, b)) {
            throw ValidationError(kModule, "drive " + pair_label(a, b) +
                                               " couples a dissipative level to a non-dissipative one");
        }
    }
}

ComplexMatrix BasisLayout::matrix(int index) const {
    const BasisOperator& op = ops.at(static_cast<std::size_t>(index));
    return matrix_unit(dim, op.row, op.col);
}

Eigen::MatrixXd BasisLayout::mask(int order) const {
    Eigen::MatrixXd m = Eigen::MatrixXd::Zero(dim, dim);
    for (const BasisOperator& op : ops) {
        if (op.order == order) {
            m(op.row, op.col) = 1.0;
        }
    }
    return m;
}

Eigen::MatrixXd BasisLayout::support() const {
    Eigen::MatrixXd m = Eigen::MatrixXd::Zero(dim, dim);
    for (const BasisOperator& op : ops) {
        m(op.row, op.col) = 1.0;
    }
    return m;
}

std::vector<cd> BasisLayout::coefficients(const ComplexMatrix& op) const {
    if (op.rows() != dim || op.cols() != dim) {
        throw ValidationError(kModule, "operator size does not match the basis layout");
    }
    std::vector<cd> out;
    out.reserve(ops.size());
    for (const BasisOperator& b : ops) {
        out.push_back(op(b.row, b.col));
    }
    return out;
}

BasisLayout enumerate_basis(const ModelSpec& model) {
    BasisLayout layout;
    layout.dim = model.dim;
    if (model.is_ladder()) {
        const int top = model.noise_order_exact;
        layout.count_per_order.assign(static_cast<std::size_t>(top + 1), 0);
        for (int k = 0; k <= top; ++k) {
            for (int j = 0; j + k + 1 < model.dim; ++j) {
                layout.ops.push_back({j, j + k + 1, k});
                ++layout.count_per_order[static_cast<std::size_t>(k)];
            }
        }
        return layout;
    }
    check_noise_free_conditions(model);
    std::set<int> targets;
    std::set<int> sources;
    for (int r = 0; r < model.dim; ++r) {
        for (int c = 0; c < model.dim; ++c) {
            if (model.lindblad(r, c) != kZero) {
                targets.insert(r);
                sources.insert(c);
            }
        }
    }
    layout.count_per_order.assign(1, 0);
    for (int r : targets) {
        for (int c : sources) {
            layout.ops.push_back({r, c, 0});
            ++layout.count_per_order[0];
        }
    }
    return layout;
}

BasisLayout truncate(const BasisLayout& layout, int max_order) {
    if (max_order < 0) {
        throw ValidationError(kModule, "truncation order must be >= 0");
    }
    if (max_order > layout.max_order()) {
        throw ValidationError(kModule, "truncation order " + std::to_string(max_order) +
                                           " exceeds the exact order " +
                                           std::to_string(layout.max_order()));
    }
    BasisLayout out;
    out.dim = layout.dim;
    for (const BasisOperator& op : layout.ops) {
        if (op.order <= max_order) {
            out.ops.push_back(op);
        }
    }
    out.count_per_order.assign(layout.count_per_order.begin(),
                               layout.count_per_order.begin() + max_order + 1);
    return out;
}

} // namespace nmqsd
