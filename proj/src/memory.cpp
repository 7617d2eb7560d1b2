#include "nmqsd/memory.hpp"

#include "nmqsd/errors.hpp"

namespace nmqsd {

MemoryHierarchy::MemoryHierarchy(const ModelSpec& model, const BasisLayout& layout,
                                 const CorrelationKernel& kernel) {
    if (!kernel.is_exponential()) {
        throw ValidationError("qsd-propagator", "the memory hierarchy needs an exponential kernel");
    }
    if (layout.dim != model.dim) {
        throw ValidationError("qsd-propagator", "basis layout does not match the model dimension");
    }
    depth_ = layout.max_order() + 1;
    dim_ = model.dim;
    amplitude_ = kernel.amplitude();
    gamma_ = kernel.gamma();
    lindblad_ = model.lindblad;
    ldag_ = model.lindblad.adjoint();
    mask_ = layout.support().cast<cd>();
    binomial_.assign(static_cast<std::size_t>(depth_), {});
    for (int m = 0; m < depth_; ++m) {
        auto& row = binomial_[static_cast<std::size_t>(m)];
        row.assign(static_cast<std::size_t>(m + 1), 1.0);
        for (int j = 1; j < m; ++j) {
            row[static_cast<std::size_t>(j)] =
                binomial_[static_cast<std::size_t>(m - 1)][static_cast<std::size_t>(j - 1)] +
                binomial_[static_cast<std::size_t>(m - 1)][static_cast<std::size_t>(j)];
        }
    }
}

std::vector<ComplexMatrix> MemoryHierarchy::zero_state() const {
    return std::vector<ComplexMatrix>(static_cast<std::size_t>(depth_),
                                      ComplexMatrix::Zero(dim_, dim_));
}

MemoryWorkspace MemoryHierarchy::make_workspace() const {
    MemoryWorkspace ws;
    ws.gen = ComplexMatrix::Zero(dim_, dim_);
    ws.t1 = ComplexMatrix::Zero(dim_, dim_);
    ws.t2 = ComplexMatrix::Zero(dim_, dim_);
    ws.ldag_xi = zero_state();
    ws.ka = zero_state();
    ws.kb = zero_state();
    ws.pred = zero_state();
    return ws;
}

void MemoryHierarchy::derivative(const ComplexMatrix& h, cd zstar,
                                 const std::vector<ComplexMatrix>& xi,
                                 std::vector<ComplexMatrix>& dxi, MemoryWorkspace& ws,
                                 cd expect_ldag) const {
    ws.gen = -kImag * h;
    ws.gen += zstar * lindblad_;
    for (int m = 0; m < depth_; ++m) {
        ws.ldag_xi[static_cast<std::size_t>(m)].noalias() = ldag_ * xi[static_cast<std::size_t>(m)];
    }
    for (int m = 0; m < depth_; ++m) {
        const ComplexMatrix& x = xi[static_cast<std::size_t>(m)];
        ComplexMatrix& d = dxi[static_cast<std::size_t>(m)];
        d.noalias() = ws.gen * x;
        d.noalias() -= x * ws.gen;
        d -= (static_cast<double>(m + 1) * gamma_) * x;
        if (m == 0) {
            d += amplitude_ * lindblad_;
        } else {
            const ComplexMatrix& prev = xi[static_cast<std::size_t>(m - 1)];
            ws.t1.noalias() = lindblad_ * prev;
            ws.t1.noalias() -= prev * lindblad_;
            d += (static_cast<double>(m) * amplitude_) * ws.t1;
        }
        for (int j = 0; j <= m; ++j) {
            const double c = binomial_[static_cast<std::size_t>(m)][static_cast<std::size_t>(j)];
            const ComplexMatrix& a = ws.ldag_xi[static_cast<std::size_t>(j)];
            const ComplexMatrix& b = xi[static_cast<std::size_t>(m - j)];
            ws.t2.noalias() = a * b;
            ws.t2.noalias() -= b * a;
            d -= c * ws.t2;
        }
        if (m + 1 < depth_) {
            d -= ws.ldag_xi[static_cast<std::size_t>(m + 1)];
            d += expect_ldag * xi[static_cast<std::size_t>(m + 1)];
        }
        d.array() *= mask_.array();
    }
}

void MemoryHierarchy::heun_step(const ComplexMatrix& h_now, const ComplexMatrix& h_next, cd z_now,
                                cd z_next, double dt, std::vector<ComplexMatrix>& xi,
                                MemoryWorkspace& ws) const {
    const auto depth = static_cast<std::size_t>(depth_);
    derivative(h_now, z_now, xi, ws.ka, ws);
    for (std::size_t m = 0; m < depth; ++m) {
        ws.pred[m] = xi[m] + dt * ws.ka[m];
    }
    derivative(h_next, z_next, ws.pred, ws.kb, ws);
    for (std::size_t m = 0; m < depth; ++m) {
        xi[m] += (0.5 * dt) * (ws.ka[m] + ws.kb[m]);
    }
}

} // namespace nmqsd
