#include "nmqsd/coefficients.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <sstream>

#include "nmqsd/errors.hpp"
#include "nmqsd/quadrature.hpp"

namespace nmqsd {

namespace {

constexpr const char* kModule = "oop-coefficients";

inline std::size_t pair_index(int a, int b) {
    if (a > b) {
        std::swap(a, b);
    }
    return static_cast<std::size_t>(b) * static_cast<std::size_t>(b + 1) / 2 +
           static_cast<std::size_t>(a);
}

inline std::size_t pair_count(int n) {
    return static_cast<std::size_t>(n + 1) * static_cast<std::size_t>(n + 2) / 2;
}

inline std::size_t q1_offset(int n) {
    return static_cast<std::size_t>(n) * static_cast<std::size_t>(n + 1) / 2;
}

inline std::size_t q2_offset(int n) {
    return static_cast<std::size_t>(n) * static_cast<std::size_t>(n + 1) *
           static_cast<std::size_t>(n + 2) / 6;
}

using Pattern = std::vector<std::pair<int, int>>;

// out[o] += sign * X(xr, xc) * in[i] summed over terms gives the projection of
// [X, sum_i in[i] |r_i><c_i|] onto the output pattern.
struct CommTerm {
    int out;
    int in;
    int xr;
    int xc;
    double sign;
};

std::vector<CommTerm> commutator_terms(const Pattern& in, const Pattern& out) {
    std::vector<CommTerm> terms;
    for (std::size_t o = 0; o < out.size(); ++o) {
        const auto [r, c] = out[o];
        for (std::size_t i = 0; i < in.size(); ++i) {
            const auto [ri, ci] = in[i];
            if (c == ci) {
                terms.push_back({static_cast<int>(o), static_cast<int>(i), r, ri, 1.0});
            }
            if (r == ri) {
                terms.push_back({static_cast<int>(o), static_cast<int>(i), ci, c, -1.0});
            }
        }
    }
    return terms;
}

inline void apply_terms(const std::vector<CommTerm>& terms, const ComplexMatrix& x, const cd* in,
                        cd* out, cd scale) {
    for (const CommTerm& t : terms) {
        out[t.out] += scale * t.sign * x(t.xr, t.xc) * in[t.in];
    }
}

void scatter(const Pattern& p, const cd* coeffs, ComplexMatrix& out) {
    out.setZero();
    for (std::size_t i = 0; i < p.size(); ++i) {
        out(p[i].first, p[i].second) = coeffs[i];
    }
}

void scatter_add(const Pattern& p, const cd* coeffs, cd scale, ComplexMatrix& out) {
    for (std::size_t i = 0; i < p.size(); ++i) {
        out(p[i].first, p[i].second) += scale * coeffs[i];
    }
}

} // namespace

// Integrates every P-line of one model in lockstep.
class CoefficientIntegrator {
public:
    CoefficientIntegrator(const ModelSpec& model, const CorrelationKernel& kernel,
                          const TimeGrid& grid, int max_order, bool printed)
        : model_(model), kernel_(kernel), grid_(grid), order_(max_order), printed_(printed) {
        table_.grid_ = grid;
        table_.layout_ = truncate(enumerate_basis(model), max_order);
        table_.max_order_ = max_order;
        table_.pattern_.resize(static_cast<std::size_t>(max_order + 1));
        for (const BasisOperator& op : table_.layout_.ops) {
            table_.pattern_[static_cast<std::size_t>(op.order)].push_back({op.row, op.col});
        }
        for (int k = 0; k <= max_order; ++k) {
            c_[k] = table_.pattern_[static_cast<std::size_t>(k)].size();
        }
        dim_ = model.dim;
        np_ = grid.size();
        pairs_ = pair_count(np_ - 1);
        const Pattern& p0 = table_.pattern_[0];
        for (int k = 0; k <= max_order; ++k) {
            const Pattern& pk = table_.pattern_[static_cast<std::size_t>(k)];
            same_[k] = commutator_terms(pk, pk);
            if (k >= 1) {
                from0_[k] = commutator_terms(p0, pk);
                up_[k] = commutator_terms(table_.pattern_[static_cast<std::size_t>(k - 1)], pk);
            }
        }
        if (max_order >= 2) {
            from1_to2_ = commutator_terms(table_.pattern_[1], table_.pattern_[2]);
        }
        lindblad_ = model.lindblad;
        ldag_ = model.lindblad.adjoint();
        l0_.resize(c_[0]);
        for (std::size_t i = 0; i < c_[0]; ++i) {
            l0_[i] = lindblad_(p0[i].first, p0[i].second);
        }
        if (printed_) {
            if (!(model.is_ladder() && model.dim == 3)) {
                throw ValidationError(kModule, "the printed coefficient form exists only for the "
                                               "three-level ladder");
            }
            for (std::size_t i = 0; i < c_[0]; ++i) {
                if (p0[i] == std::pair<int, int>{0, 1}) {
                    printed_a_ = static_cast<int>(i);
                }
                if (p0[i] == std::pair<int, int>{1, 2}) {
                    printed_b_ = static_cast<int>(i);
                }
            }
            printed_w2_ = model.h_static(1, 1).real();
        }
    }

    CoefficientTable run(const std::vector<int>& keep) {
        allocate();
        init_lines();
        record_q(0);
        snapshot_if_kept(0, keep);
        const double h = grid_.dt();
        for (int n = 0; n < grid_.n_steps(); ++n) {
            rhs(n, 0.0, y_, k_);
            copy_active(n, k_, acc_, 1.0, false);
            axpy_active(n, y_, k_, 0.5 * h, s_);
            rhs(n, 0.5, s_, k_);
            copy_active(n, k_, acc_, 2.0, true);
            axpy_active(n, y_, k_, 0.5 * h, s_);
            rhs(n, 0.5, s_, k_);
            copy_active(n, k_, acc_, 2.0, true);
            axpy_active(n, y_, k_, h, s_);
            rhs(n, 1.0, s_, k_);
            copy_active(n, k_, acc_, 1.0, true);
            axpy_active(n, y_, acc_, h / 6.0, y_);
            add_boundary_lines(n + 1);
            check_finite(n + 1);
            record_q(n + 1);
            snapshot_if_kept(n + 1, keep);
        }
        return std::move(table_);
    }

private:
    struct Lines {
        std::vector<cd> p0;
        std::vector<cd> p1;
        std::vector<cd> p2;
    };

    std::size_t at0(int s) const { return static_cast<std::size_t>(s) * c_[0]; }
    std::size_t at1(int s, int s1) const {
        return (static_cast<std::size_t>(s) * static_cast<std::size_t>(np_) +
                static_cast<std::size_t>(s1)) *
               c_[1];
    }
    std::size_t at2(int s, std::size_t pair) const {
        return (static_cast<std::size_t>(s) * pairs_ + pair) * c_[2];
    }

    void allocate() {
        const auto np = static_cast<std::size_t>(np_);
        for (Lines* l : {&y_, &k_, &acc_, &s_}) {
            l->p0.assign(np * c_[0], cd{});
            if (order_ >= 1) {
                l->p1.assign(np * np * c_[1], cd{});
            }
            if (order_ >= 2) {
                l->p2.assign(np * pairs_ * c_[2], cd{});
            }
        }
        table_.q0_.assign(np * c_[0], cd{});
        if (order_ >= 1) {
            table_.q1_.assign(q1_offset(np_) * c_[1], cd{});
            q1c_.assign(np * c_[1], cd{});
            b1_.assign(np, ComplexMatrix::Zero(dim_, dim_));
        }
        if (order_ >= 2) {
            table_.q2_.assign(q2_offset(np_) * c_[2], cd{});
            q2c_.assign(pairs_ * c_[2], cd{});
            b2_.assign(pairs_, ComplexMatrix::Zero(dim_, dim_));
        }
        q0c_.assign(c_[0], cd{});
        a_ = ComplexMatrix::Zero(dim_, dim_);
        h_ = ComplexMatrix::Zero(dim_, dim_);
        tmp_ = ComplexMatrix::Zero(dim_, dim_);
        alpha_.assign(np, cd{});
    }

    void init_lines() {
        std::copy(l0_.begin(), l0_.end(), y_.p0.begin());
        add_boundary_lines(0);
    }

    // New lines that start at time index m: P^(0)(t_m, t_m) = L and the
    // boundary values n P^(n)(t_m, s, .., t_m) = [L, P^(n-1)(t_m, s, ..)].
    void add_boundary_lines(int m) {
        std::copy(l0_.begin(), l0_.end(), y_.p0.begin() + static_cast<std::ptrdiff_t>(at0(m)));
        if (order_ >= 1) {
            for (int s = 0; s <= m; ++s) {
                cd* out = &y_.p1[at1(s, m)];
                std::fill(out, out + c_[1], cd{});
                apply_terms(from0_[1], lindblad_, &y_.p0[at0(s)], out, 1.0);
            }
        }
        if (order_ >= 2) {
            for (int s = 0; s <= m; ++s) {
                for (int s1 = 0; s1 <= m; ++s1) {
                    cd* out = &y_.p2[at2(s, pair_index(s1, m))];
                    std::fill(out, out + c_[2], cd{});
                    apply_terms(up_[2], lindblad_, &y_.p1[at1(s, s1)], out, 0.5);
                }
            }
        }
    }

    template <typename F>
    void for_active(int n, Lines& a, F&& f) const {
        f(a.p0.data(), static_cast<std::size_t>(n + 1) * c_[0], std::size_t{0});
        if (order_ >= 1) {
            for (int s = 0; s <= n; ++s) {
                f(a.p1.data(), static_cast<std::size_t>(n + 1) * c_[1], at1(s, 0));
            }
        }
        if (order_ >= 2) {
            for (int s = 0; s <= n; ++s) {
                f(a.p2.data(), pair_count(n) * c_[2], at2(s, 0));
            }
        }
    }

    // acc = scale * k (or acc += scale * k) on the active lines.
    void copy_active(int n, Lines& k, Lines& acc, double scale, bool add) {
        std::array<cd*, 3> src{k.p0.data(), k.p1.data(), k.p2.data()};
        std::array<cd*, 3> dst{acc.p0.data(), acc.p1.data(), acc.p2.data()};
        for_active(n, k, [&](cd* base, std::size_t len, std::size_t off) {
            const std::size_t b = base == src[0] ? 0 : base == src[1] ? 1 : 2;
            cd* d = dst[b] + off;
            const cd* x = base + off;
            if (add) {
                for (std::size_t i = 0; i < len; ++i) d[i] += scale * x[i];
            } else {
                for (std::size_t i = 0; i < len; ++i) d[i] = scale * x[i];
            }
        });
    }

    // out = y + scale * k on the active lines (out may alias y).
    void axpy_active(int n, Lines& y, Lines& k, double scale, Lines& out) {
        std::array<cd*, 3> ys{y.p0.data(), y.p1.data(), y.p2.data()};
        std::array<cd*, 3> ks{k.p0.data(), k.p1.data(), k.p2.data()};
        std::array<cd*, 3> os{out.p0.data(), out.p1.data(), out.p2.data()};
        for_active(n, y, [&](cd* base, std::size_t len, std::size_t off) {
            const std::size_t b = base == ys[0] ? 0 : base == ys[1] ? 1 : 2;
            const cd* yy = ys[b] + off;
            const cd* kk = ks[b] + off;
            cd* oo = os[b] + off;
            for (std::size_t i = 0; i < len; ++i) oo[i] = yy[i] + scale * kk[i];
        });
    }

    void rhs(int n, double r, const Lines& y, Lines& k) {
        const double h = grid_.dt();
        const double tau = grid_.time(n) + r * h;
        for (int i = 0; i <= n; ++i) {
            alpha_[static_cast<std::size_t>(i)] = kernel_(tau, grid_.time(i));
        }
        const cd alpha_tau = kernel_(tau, tau);

        // Kernel integrals at tau. P^(0)(tau, tau) = L; higher orders vanish on the diagonal.
        double w_extra = 0.0;
        line_weights(n, {}, r, w_, w_extra);
        std::fill(q0c_.begin(), q0c_.end(), cd{});
        for (int s = 0; s <= n; ++s) {
            const cd f = h * w_[static_cast<std::size_t>(s)] * alpha_[static_cast<std::size_t>(s)];
            const cd* p = &y.p0[at0(s)];
            for (std::size_t i = 0; i < c_[0]; ++i) q0c_[i] += f * p[i];
        }
        for (std::size_t i = 0; i < c_[0]; ++i) q0c_[i] += h * w_extra * alpha_tau * l0_[i];

        if (order_ >= 1) {
            for (int s1 = 0; s1 <= n; ++s1) {
                const std::array<int, 1> kinks{s1};
                line_weights(n, kinks, r, w_, w_extra);
                cd* q = &q1c_[static_cast<std::size_t>(s1) * c_[1]];
                std::fill(q, q + c_[1], cd{});
                for (int s = 0; s <= n; ++s) {
                    const cd f = h * w_[static_cast<std::size_t>(s)] * alpha_[static_cast<std::size_t>(s)];
                    const cd* p = &y.p1[at1(s, s1)];
                    for (std::size_t i = 0; i < c_[1]; ++i) q[i] += f * p[i];
                }
                scatter(table_.pattern_[1], q, tmp_);
                b1_[static_cast<std::size_t>(s1)].noalias() = ldag_ * tmp_;
            }
        }
        if (order_ >= 2) {
            for (int s2 = 0; s2 <= n; ++s2) {
                for (int s1 = 0; s1 <= s2; ++s1) {
                    const std::array<int, 2> kinks{s1, s2};
                    line_weights(n, kinks, r, w_, w_extra);
                    const std::size_t pr = pair_index(s1, s2);
                    cd* q = &q2c_[pr * c_[2]];
                    std::fill(q, q + c_[2], cd{});
                    for (int s = 0; s <= n; ++s) {
                        const cd f =
                            h * w_[static_cast<std::size_t>(s)] * alpha_[static_cast<std::size_t>(s)];
                        const cd* p = &y.p2[at2(s, pr)];
                        for (std::size_t i = 0; i < c_[2]; ++i) q[i] += f * p[i];
                    }
                    scatter(table_.pattern_[2], q, tmp_);
                    b2_[pr].noalias() = ldag_ * tmp_;
                }
            }
        }

        model_.hamiltonian_into(tau, h_);
        scatter(table_.pattern_[0], q0c_.data(), tmp_);
        a_.noalias() = -kImag * h_;
        a_.noalias() -= ldag_ * tmp_;

        const Pattern& pat0 = table_.pattern_[0];
        for (int s = 0; s <= n; ++s) {
            const cd* p = &y.p0[at0(s)];
            cd* out = &k.p0[at0(s)];
            std::fill(out, out + c_[0], cd{});
            apply_terms(same_[0], a_, p, out, 1.0);
            if (order_ >= 1) {
                const ComplexMatrix& b = b1_[static_cast<std::size_t>(s)];
                for (std::size_t i = 0; i < c_[0]; ++i) out[i] -= b(pat0[i].first, pat0[i].second);
            }
            if (printed_ && printed_a_ >= 0 && printed_b_ >= 0) {
                out[printed_a_] += -kImag * printed_w2_ * p[printed_b_];
            }
        }
        if (order_ >= 1) {
            const Pattern& pat1 = table_.pattern_[1];
            for (int s = 0; s <= n; ++s) {
                const cd* p0 = &y.p0[at0(s)];
                for (int s1 = 0; s1 <= n; ++s1) {
                    const cd* p = &y.p1[at1(s, s1)];
                    cd* out = &k.p1[at1(s, s1)];
                    std::fill(out, out + c_[1], cd{});
                    apply_terms(same_[1], a_, p, out, 1.0);
                    apply_terms(from0_[1], b1_[static_cast<std::size_t>(s1)], p0, out, -1.0);
                    if (order_ >= 2) {
                        const ComplexMatrix& b = b2_[pair_index(s, s1)];
                        for (std::size_t i = 0; i < c_[1]; ++i) {
                            out[i] -= 2.0 * b(pat1[i].first, pat1[i].second);
                        }
                    }
                }
            }
        }
        if (order_ >= 2) {
            for (int s = 0; s <= n; ++s) {
                const cd* p0 = &y.p0[at0(s)];
                for (int s2 = 0; s2 <= n; ++s2) {
                    for (int s1 = 0; s1 <= s2; ++s1) {
                        const std::size_t pr = pair_index(s1, s2);
                        const cd* p = &y.p2[at2(s, pr)];
                        cd* out = &k.p2[at2(s, pr)];
                        std::fill(out, out + c_[2], cd{});
                        apply_terms(same_[2], a_, p, out, 1.0);
                        apply_terms(from1_to2_, b1_[static_cast<std::size_t>(s1)],
                                    &y.p1[at1(s, s2)], out, -0.5);
                        apply_terms(from1_to2_, b1_[static_cast<std::size_t>(s2)],
                                    &y.p1[at1(s, s1)], out, -0.5);
                        apply_terms(from0_[2], b2_[pr], p0, out, -1.0);
                    }
                }
            }
        }
    }

    void record_q(int m) {
        const double h = grid_.dt();
        for (int i = 0; i <= m; ++i) {
            alpha_[static_cast<std::size_t>(i)] = kernel_(grid_.time(m), grid_.time(i));
        }
        double w_extra = 0.0;
        line_weights(m, {}, 0.0, w_, w_extra);
        cd* q0 = &table_.q0_[at0(m)];
        for (int s = 0; s <= m; ++s) {
            const cd f = h * w_[static_cast<std::size_t>(s)] * alpha_[static_cast<std::size_t>(s)];
            const cd* p = &y_.p0[at0(s)];
            for (std::size_t i = 0; i < c_[0]; ++i) q0[i] += f * p[i];
        }
        if (order_ >= 1) {
            for (int s1 = 0; s1 <= m; ++s1) {
                const std::array<int, 1> kinks{s1};
                line_weights(m, kinks, 0.0, w_, w_extra);
                cd* q = &table_.q1_[(q1_offset(m) + static_cast<std::size_t>(s1)) * c_[1]];
                for (int s = 0; s <= m; ++s) {
                    const cd f = h * w_[static_cast<std::size_t>(s)] * alpha_[static_cast<std::size_t>(s)];
                    const cd* p = &y_.p1[at1(s, s1)];
                    for (std::size_t i = 0; i < c_[1]; ++i) q[i] += f * p[i];
                }
            }
        }
        if (order_ >= 2) {
            for (int s2 = 0; s2 <= m; ++s2) {
                for (int s1 = 0; s1 <= s2; ++s1) {
                    const std::array<int, 2> kinks{s1, s2};
                    line_weights(m, kinks, 0.0, w_, w_extra);
                    const std::size_t pr = pair_index(s1, s2);
                    cd* q = &table_.q2_[(q2_offset(m) + pr) * c_[2]];
                    for (int s = 0; s <= m; ++s) {
                        const cd f =
                            h * w_[static_cast<std::size_t>(s)] * alpha_[static_cast<std::size_t>(s)];
                        const cd* p = &y_.p2[at2(s, pr)];
                        for (std::size_t i = 0; i < c_[2]; ++i) q[i] += f * p[i];
                    }
                }
            }
        }
    }

    void check_finite(int m) const {
        for (std::size_t i = 0; i < static_cast<std::size_t>(m + 1) * c_[0]; ++i) {
            if (!std::isfinite(y_.p0[i].real()) || !std::isfinite(y_.p0[i].imag())) {
                throw NumericError(kModule, "coefficient lines became non-finite at t=" +
                                                std::to_string(grid_.time(m)));
            }
        }
    }

    void snapshot_if_kept(int m, const std::vector<int>& keep) {
        if (std::find(keep.begin(), keep.end(), m) == keep.end()) {
            return;
        }
        CoefficientTable::Snapshot snap;
        snap.n = m;
        snap.p0.assign(y_.p0.begin(), y_.p0.begin() + static_cast<std::ptrdiff_t>(at0(m + 1)));
        if (order_ >= 1) {
            for (int s = 0; s <= m; ++s) {
                const auto first = y_.p1.begin() + static_cast<std::ptrdiff_t>(at1(s, 0));
                snap.p1.insert(snap.p1.end(), first,
                               first + static_cast<std::ptrdiff_t>(static_cast<std::size_t>(m + 1) * c_[1]));
            }
        }
        if (order_ >= 2) {
            for (int s = 0; s <= m; ++s) {
                const auto first = y_.p2.begin() + static_cast<std::ptrdiff_t>(at2(s, 0));
                snap.p2.insert(snap.p2.end(), first,
                               first + static_cast<std::ptrdiff_t>(pair_count(m) * c_[2]));
            }
        }
        table_.snapshots_.push_back(std::move(snap));
    }

    const ModelSpec& model_;
    const CorrelationKernel& kernel_;
    TimeGrid grid_;
    int order_;
    bool printed_;
    int printed_a_ = -1;
    int printed_b_ = -1;
    double printed_w2_ = 0.0;
    int dim_ = 0;
    int np_ = 0;
    std::size_t pairs_ = 0;
    std::array<std::size_t, 3> c_{0, 0, 0};
    std::array<std::vector<CommTerm>, 3> same_;
    std::array<std::vector<CommTerm>, 3> from0_;
    std::array<std::vector<CommTerm>, 3> up_;
    std::vector<CommTerm> from1_to2_;
    ComplexMatrix lindblad_;
    ComplexMatrix ldag_;
    std::vector<cd> l0_;
    CoefficientTable table_;
    Lines y_, k_, acc_, s_;
    std::vector<cd> q0c_, q1c_, q2c_;
    std::vector<ComplexMatrix> b1_, b2_;
    ComplexMatrix a_, h_, tmp_;
    std::vector<cd> alpha_;
    std::vector<double> w_;
};

CoefficientTable integrate_coefficients(const ModelSpec& model, const CorrelationKernel& kernel,
                                        const TimeGrid& grid, int max_order,
                                        const CoefficientOptions& options) {
    if (max_order < 0 || max_order > 2) {
        throw ValidationError(kModule, "coefficient tables support noise orders 0..2, got " +
                                           std::to_string(max_order));
    }
    if (max_order > model.noise_order_exact) {
        throw ValidationError(kModule, "max_order " + std::to_string(max_order) +
                                           " exceeds the exact noise order " +
                                           std::to_string(model.noise_order_exact) + " of " +
                                           model.label);
    }
    if (!kernel.is_exponential() && kernel.max_lag() < grid.t_max()) {
        throw ValidationError(kModule, "tabulated kernel does not cover the time grid");
    }
    CoefficientTable table =
        CoefficientIntegrator(model, kernel, grid, max_order, options.printed_three_level)
            .run(options.keep_lines);

    if (options.convergence_probe && grid.n_steps() % 2 == 0 && grid.n_steps() >= 8) {
        const TimeGrid coarse(grid.t_max(), grid.n_steps() / 2);
        const CoefficientTable rough =
            CoefficientIntegrator(model, kernel, coarse, max_order, options.printed_three_level)
                .run({});
        const auto c0 = static_cast<std::size_t>(table.count(0));
        double diff = 0.0;
        for (int i = 0; i < coarse.size(); ++i) {
            for (std::size_t j = 0; j < c0; ++j) {
                diff = std::max(diff, std::abs(table.F(static_cast<int>(j), 2 * i) -
                                               rough.F(static_cast<int>(j), i)));
            }
        }
        if (!(diff < options.probe_tolerance)) {
            const double suggested =
                0.9 * grid.dt() * std::pow(options.probe_tolerance / std::max(diff, 1e-300), 0.25);
            std::ostringstream msg;
            msg << "coefficient tables not converged: F changes by " << diff
                << " when dt is doubled (tolerance " << options.probe_tolerance
                << "); try dt <= " << suggested;
            throw NumericError(kModule, msg.str());
        }
    }
    return table;
}

void CoefficientTable::check_order(int order, const char* what) const {
    if (order > max_order_) {
        throw ValidationError(kModule, std::string(what) + ": table holds orders up to " +
                                           std::to_string(max_order_));
    }
}

ComplexMatrix CoefficientTable::obar0(int n) const {
    ComplexMatrix out = ComplexMatrix::Zero(dim(), dim());
    add_q0(n, 1.0, out);
    return out;
}

ComplexMatrix CoefficientTable::q1(int n, int s1) const {
    ComplexMatrix out = ComplexMatrix::Zero(dim(), dim());
    add_q1(n, s1, 1.0, out);
    return out;
}

ComplexMatrix CoefficientTable::q2(int n, int s1, int s2) const {
    ComplexMatrix out = ComplexMatrix::Zero(dim(), dim());
    add_q2(n, s1, s2, 1.0, out);
    return out;
}

void CoefficientTable::add_q0(int n, cd scale, ComplexMatrix& out) const {
    if (n < 0 || n >= grid_.size()) {
        throw ValidationError(kModule, "time index out of range");
    }
    const Pattern& p = pattern_[0];
    scatter_add(p, &q0_[static_cast<std::size_t>(n) * p.size()], scale, out);
}

void CoefficientTable::add_q1(int n, int s1, cd scale, ComplexMatrix& out) const {
    check_order(1, "q1");
    if (n < 0 || n >= grid_.size() || s1 < 0 || s1 > n) {
        throw ValidationError(kModule, "q1 index out of range");
    }
    const Pattern& p = pattern_[1];
    scatter_add(p, &q1_[(q1_offset(n) + static_cast<std::size_t>(s1)) * p.size()], scale, out);
}

void CoefficientTable::add_q2(int n, int s1, int s2, cd scale, ComplexMatrix& out) const {
    check_order(2, "q2");
    if (n < 0 || n >= grid_.size() || s1 < 0 || s2 < 0 || s1 > n || s2 > n) {
        throw ValidationError(kModule, "q2 index out of range");
    }
    const Pattern& p = pattern_[2];
    scatter_add(p, &q2_[(q2_offset(n) + pair_index(s1, s2)) * p.size()], scale, out);
}

cd CoefficientTable::F(int j, int n) const {
    const std::size_t c = pattern_[0].size();
    if (j < 0 || static_cast<std::size_t>(j) >= c || n < 0 || n >= grid_.size()) {
        throw ValidationError(kModule, "F index out of range");
    }
    return q0_[static_cast<std::size_t>(n) * c + static_cast<std::size_t>(j)];
}

cd CoefficientTable::P1(int j, int n, int s1) const {
    check_order(1, "P1");
    const std::size_t c = pattern_[1].size();
    if (j < 0 || static_cast<std::size_t>(j) >= c || n < 0 || n >= grid_.size() || s1 < 0 ||
        s1 > n) {
        throw ValidationError(kModule, "P1 index out of range");
    }
    return q1_[(q1_offset(n) + static_cast<std::size_t>(s1)) * c + static_cast<std::size_t>(j)];
}

cd CoefficientTable::P2(int j, int n, int s1, int s2) const {
    check_order(2, "P2");
    const std::size_t c = pattern_[2].size();
    if (j < 0 || static_cast<std::size_t>(j) >= c || n < 0 || n >= grid_.size() || s1 < 0 ||
        s2 < 0 || s1 > n || s2 > n) {
        throw ValidationError(kModule, "P2 index out of range");
    }
    return q2_[(q2_offset(n) + pair_index(s1, s2)) * c + static_cast<std::size_t>(j)];
}

const CoefficientTable::Snapshot* CoefficientTable::snapshot(int n) const {
    for (const Snapshot& s : snapshots_) {
        if (s.n == n) {
            return &s;
        }
    }
    return nullptr;
}

bool CoefficientTable::has_lines(int n) const {
    return snapshot(n) != nullptr;
}

ComplexMatrix CoefficientTable::p0(int n, int s) const {
    const Snapshot* snap = snapshot(n);
    if (snap == nullptr || s < 0 || s > n) {
        throw ValidationError(kModule, "P-lines at time index " + std::to_string(n) +
                                           " were not kept (or s > t)");
    }
    ComplexMatrix out(dim(), dim());
    scatter(pattern_[0], &snap->p0[static_cast<std::size_t>(s) * pattern_[0].size()], out);
    return out;
}

ComplexMatrix CoefficientTable::p1(int n, int s, int s1) const {
    check_order(1, "p1");
    const Snapshot* snap = snapshot(n);
    if (snap == nullptr || s < 0 || s > n || s1 < 0 || s1 > n) {
        throw ValidationError(kModule, "P-lines at time index " + std::to_string(n) +
                                           " were not kept (or index > t)");
    }
    const std::size_t c = pattern_[1].size();
    ComplexMatrix out(dim(), dim());
    scatter(pattern_[1],
            &snap->p1[(static_cast<std::size_t>(s) * static_cast<std::size_t>(n + 1) +
                       static_cast<std::size_t>(s1)) *
                      c],
            out);
    return out;
}

ComplexMatrix CoefficientTable::p2(int n, int s, int s1, int s2) const {
    check_order(2, "p2");
    const Snapshot* snap = snapshot(n);
    if (snap == nullptr || s < 0 || s > n || s1 < 0 || s1 > n || s2 < 0 || s2 > n) {
        throw ValidationError(kModule, "P-lines at time index " + std::to_string(n) +
                                           " were not kept (or index > t)");
    }
    const std::size_t c = pattern_[2].size();
    ComplexMatrix out(dim(), dim());
    scatter(pattern_[2],
            &snap->p2[(static_cast<std::size_t>(s) * pair_count(n) + pair_index(s1, s2)) * c], out);
    return out;
}

ComplexMatrix assemble_obar(const CoefficientTable& table, std::span<const cd> zstar, int n) {
    if (n < 0 || n >= table.grid().size()) {
        throw ValidationError(kModule, "assemble_obar: time index out of range");
    }
    if (zstar.size() < static_cast<std::size_t>(n + 1)) {
        throw ValidationError(kModule, "assemble_obar: noise history shorter than the time index");
    }
    ComplexMatrix out = ComplexMatrix::Zero(table.dim(), table.dim());
    table.add_q0(n, 1.0, out);
    if (n == 0 || table.max_order() == 0) {
        return out;
    }
    const double h = table.grid().dt();
    const auto w = [n](int i) { return (i == 0 || i == n) ? 0.5 : 1.0; };
    for (int s1 = 0; s1 <= n; ++s1) {
        table.add_q1(n, s1, h * w(s1) * zstar[static_cast<std::size_t>(s1)], out);
    }
    if (table.max_order() >= 2) {
        for (int s2 = 0; s2 <= n; ++s2) {
            for (int s1 = 0; s1 <= s2; ++s1) {
                const double mult = s1 == s2 ? 1.0 : 2.0;
                const cd zz = zstar[static_cast<std::size_t>(s1)] * zstar[static_cast<std::size_t>(s2)];
                table.add_q2(n, s1, s2, mult * h * h * w(s1) * w(s2) * zz, out);
            }
        }
    }
    return out;
}

ComplexMatrix assemble_obar(const CoefficientTable& table, const BasisLayout& layout,
                            const NoiseRealization& noise, int n) {
    if (!(noise.grid == table.grid())) {
        throw ValidationError(kModule, "assemble_obar: noise and table grids differ");
    }
    if (layout.max_order() != table.max_order() || layout.dim != table.dim()) {
        throw ValidationError(kModule, "assemble_obar: basis layout does not match the table order");
    }
    return assemble_obar(table, std::span<const cd>(noise.values), n);
}

std::vector<int> residual_stencil(const TimeGrid& grid, int n, int s) {
    const int last = grid.n_steps();
    if (s < 0 || n < s || n > last) {
        throw ValidationError(kModule, "residual point needs 0 <= s <= t <= t_max");
    }
    int first = 0;
    if (n - 2 >= s && n + 2 <= last) {
        first = n - 2;
    } else if (n + 4 <= last) {
        first = n;
    } else if (n - 4 >= s) {
        first = n - 4;
    } else {
        throw ValidationError(kModule, "grid too short for a five-point stencil at this point");
    }
    return {first, first + 1, first + 2, first + 3, first + 4};
}

namespace {

// O(t_m, t_s, z*) from kept lines, noise integrals by the kink-split composite rule.
ComplexMatrix o_from_lines(const CoefficientTable& table, std::span<const cd> z, int m, int s) {
    ComplexMatrix o = table.p0(m, s);
    if (table.max_order() == 0 || m == 0) {
        return o;
    }
    const double h = table.grid().dt();
    std::vector<double> w;
    std::vector<double> w_inner;
    double extra = 0.0;
    const std::array<int, 1> kink_s{s};
    line_weights(m, kink_s, 0.0, w, extra);
    for (int s1 = 0; s1 <= m; ++s1) {
        o += (h * w[static_cast<std::size_t>(s1)] * z[static_cast<std::size_t>(s1)]) *
             table.p1(m, s, s1);
    }
    if (table.max_order() >= 2) {
        for (int s1 = 0; s1 <= m; ++s1) {
            const std::array<int, 2> kinks{s, s1};
            line_weights(m, kinks, 0.0, w_inner, extra);
            ComplexMatrix inner = ComplexMatrix::Zero(table.dim(), table.dim());
            for (int s2 = 0; s2 <= m; ++s2) {
                inner += (h * w_inner[static_cast<std::size_t>(s2)] * z[static_cast<std::size_t>(s2)]) *
                         table.p2(m, s, s1, s2);
            }
            o += (h * w[static_cast<std::size_t>(s1)] * z[static_cast<std::size_t>(s1)]) * inner;
        }
    }
    return o;
}

} // namespace

ResidualReport consistency_residual(const ModelSpec& model, const CoefficientTable& table,
                                    const BasisLayout& layout, const CorrelationKernel& kernel,
                                    const NoiseRealization& probe_noise, int n, int s) {
    (void)kernel;
    if (layout.dim != table.dim() || layout.max_order() != table.max_order()) {
        throw ValidationError(kModule, "consistency_residual: layout does not match the table");
    }
    if (!(probe_noise.grid == table.grid())) {
        throw ValidationError(kModule, "consistency_residual: probe noise grid differs");
    }
    const TimeGrid& grid = table.grid();
    const std::span<const cd> z(probe_noise.values);
    const std::vector<int> stencil = residual_stencil(grid, n, s);
    const double h = grid.dt();

    ResidualReport report;
    ComplexMatrix lhs;
    std::array<ComplexMatrix, 5> o;
    for (std::size_t i = 0; i < 5; ++i) {
        o[i] = o_from_lines(table, z, stencil[i], s);
    }
    const int at = n - stencil[0];
    if (at == 2) {
        lhs = (o[0] - 8.0 * o[1] + 8.0 * o[3] - o[4]) / (12.0 * h);
    } else if (at == 0) {
        lhs = (-25.0 * o[0] + 48.0 * o[1] - 36.0 * o[2] + 16.0 * o[3] - 3.0 * o[4]) / (12.0 * h);
        report.one_sided = true;
    } else {
        lhs = (25.0 * o[4] - 48.0 * o[3] + 36.0 * o[2] - 16.0 * o[1] + 3.0 * o[0]) / (12.0 * h);
        report.one_sided = true;
    }
    const ComplexMatrix& o_now = o[static_cast<std::size_t>(at)];

    // O-bar(t, z*) and its functional derivative at s.
    const int d = table.dim();
    ComplexMatrix obar = table.obar0(n);
    ComplexMatrix dobar = ComplexMatrix::Zero(d, d);
    std::vector<double> w;
    double extra = 0.0;
    if (table.max_order() >= 1 && n > 0) {
        line_weights(n, {}, 0.0, w, extra);
        for (int s1 = 0; s1 <= n; ++s1) {
            obar += (h * w[static_cast<std::size_t>(s1)] * z[static_cast<std::size_t>(s1)]) *
                    table.q1(n, s1);
        }
    }
    if (table.max_order() >= 1) {
        dobar = table.q1(n, s);
    }
    if (table.max_order() >= 2 && n > 0) {
        std::vector<double> wi;
        for (int s1 = 0; s1 <= n; ++s1) {
            const std::array<int, 1> kink{s1};
            line_weights(n, kink, 0.0, wi, extra);
            ComplexMatrix inner = ComplexMatrix::Zero(d, d);
            for (int s2 = 0; s2 <= n; ++s2) {
                inner += (h * wi[static_cast<std::size_t>(s2)] * z[static_cast<std::size_t>(s2)]) *
                         table.q2(n, s1, s2);
            }
            obar += (h * w[static_cast<std::size_t>(s1)] * z[static_cast<std::size_t>(s1)]) * inner;
        }
        const std::array<int, 1> kink{s};
        line_weights(n, kink, 0.0, wi, extra);
        for (int s2 = 0; s2 <= n; ++s2) {
            dobar += (2.0 * h * wi[static_cast<std::size_t>(s2)] * z[static_cast<std::size_t>(s2)]) *
                     table.q2(n, s, s2);
        }
    }
    const ComplexMatrix ldag = model.lindblad.adjoint();
    const ComplexMatrix gen = -kImag * model.hamiltonian(grid.time(n)) +
                              model.lindblad * z[static_cast<std::size_t>(n)] - ldag * obar;
    const ComplexMatrix rhs = commutator(gen, o_now) - ldag * dobar;
    report.absolute = max_abs(lhs - rhs);
    const double scale = std::max({max_abs(lhs), max_abs(rhs), 1e-300});
    report.relative = report.absolute / scale;
    return report;
}

NoiseRealization smooth_probe_noise(const TimeGrid& grid, cd amplitude, double frequency) {
    NoiseRealization r;
    r.grid = grid;
    r.values.resize(static_cast<std::size_t>(grid.size()));
    for (int i = 0; i < grid.size(); ++i) {
        r.values[static_cast<std::size_t>(i)] = amplitude * std::exp(kImag * (frequency * grid.time(i)));
    }
    return r;
}

} // namespace nmqsd
