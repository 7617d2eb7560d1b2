#include "nmqsd/propagator.hpp"

#include <cmath>
#include <sstream>

#include "nmqsd/errors.hpp"

namespace nmqsd {

namespace {

constexpr const char* kModule = "qsd-propagator";

struct Operators {
    const ComplexMatrix& h;
    const ComplexMatrix& l;
    const ComplexMatrix& ldag;
    const ComplexMatrix& obar;
    cd z;
};

// out = [-iH + z L - L^dagger O-bar] psi
void linear_rhs(const Operators& op, const StateVector& psi, StepWorkspace& ws, StateVector& out) {
    ws.hpsi.noalias() = op.h * psi;
    ws.v_l.noalias() = op.l * psi;
    ws.v_o.noalias() = op.obar * psi;
    ws.v_lo.noalias() = op.ldag * ws.v_o;
    out = -kImag * ws.hpsi + op.z * ws.v_l - ws.v_lo;
}

void nonlinear_rhs(const Operators& op, const StateVector& psi, StepWorkspace& ws,
                   StateVector& out) {
    const double nn = psi.squaredNorm();
    ws.hpsi.noalias() = op.h * psi;
    ws.v_l.noalias() = op.l * psi;
    ws.v_o.noalias() = op.obar * psi;
    ws.v_lo.noalias() = op.ldag * ws.v_o;
    const cd e_l = psi.dot(ws.v_l) / nn;
    const cd e_ldag = std::conj(e_l);
    const cd e_o = psi.dot(ws.v_o) / nn;
    const cd e_lo = psi.dot(ws.v_lo) / nn;
    out = -kImag * ws.hpsi + op.z * (ws.v_l - e_l * psi) + e_ldag * (ws.v_o - e_o * psi) -
          (ws.v_lo - e_lo * psi);
}

void heun_linear(StateVector& psi, const Operators& now, const Operators& next, double dt,
                 StepWorkspace& ws) {
    linear_rhs(now, psi, ws, ws.k1);
    ws.pred = psi + dt * ws.k1;
    linear_rhs(next, ws.pred, ws, ws.k2);
    psi += (0.5 * dt) * (ws.k1 + ws.k2);
}

void heun_nonlinear(StateVector& psi, const Operators& now, const Operators& next, double dt,
                    StepWorkspace& ws) {
    nonlinear_rhs(now, psi, ws, ws.k1);
    ws.pred = psi + dt * ws.k1;
    if (ws.pred.squaredNorm() < 1e-24) {
        throw NumericError(kModule, "norm collapse in the predictor stage");
    }
    nonlinear_rhs(next, ws.pred, ws, ws.k2);
    psi += (0.5 * dt) * (ws.k1 + ws.k2);
    const double norm = psi.norm();
    if (!(norm >= 1e-12)) {
        throw NumericError(kModule, "norm collapse below 1e-12");
    }
    psi /= norm;
}

bool finite(const StateVector& v) {
    return v.allFinite();
}

[[noreturn]] void fail(const std::string& what, double t, std::uint64_t stream_id) {
    std::ostringstream msg;
    msg << what << " at t=" << t << " (stream " << stream_id << ")";
    throw NumericError(kModule, msg.str());
}

void check_psi0(const StateVector& psi0, int dim) {
    if (psi0.size() != dim) {
        throw ValidationError(kModule, "initial state has " + std::to_string(psi0.size()) +
                                           " amplitudes, model has " + std::to_string(dim) +
                                           " levels");
    }
    if (!psi0.allFinite() || std::abs(psi0.norm() - 1.0) > 1e-10) {
        throw ValidationError(kModule, "initial state must be finite and normalized");
    }
}

// z~*_s = z*_s + int_0^{t_n} alpha^*(s, u) <L^dagger>_u du for s = 0..n (trapezoid in u).
void shifted_path(const CorrelationKernel& kernel, const TimeGrid& grid, std::span<const cd> zstar,
                  const std::vector<cd>& eldag, int n, std::vector<cd>& out) {
    const double dt = grid.dt();
    for (int s = 0; s <= n; ++s) {
        const double ts = grid.time(s);
        cd acc{0.0, 0.0};
        for (int u = 0; u <= n; ++u) {
            const double w = (u == 0 || u == n) ? 0.5 : 1.0;
            acc += w * std::conj(kernel(ts, grid.time(u))) * eldag[static_cast<std::size_t>(u)];
        }
        out[static_cast<std::size_t>(s)] = zstar[static_cast<std::size_t>(s)] + (n > 0 ? acc * dt : cd{});
    }
}

} // namespace

StepWorkspace::StepWorkspace(int dim)
    : k1(StateVector::Zero(dim)),
      k2(StateVector::Zero(dim)),
      pred(StateVector::Zero(dim)),
      v_l(StateVector::Zero(dim)),
      v_o(StateVector::Zero(dim)),
      v_lo(StateVector::Zero(dim)),
      hpsi(StateVector::Zero(dim)) {}

StateVector step_linear(const StateVector& psi, const ModelSpec& model, const ComplexMatrix& obar_now,
                        const ComplexMatrix& obar_next, cd z_now, cd z_next, double t, double dt) {
    if (!(dt > 0.0)) {
        throw ValidationError(kModule, "dt must be positive");
    }
    const ComplexMatrix h_now = model.hamiltonian(t);
    const ComplexMatrix h_next = model.hamiltonian(t + dt);
    const ComplexMatrix ldag = model.lindblad.adjoint();
    StepWorkspace ws(model.dim);
    StateVector out = psi;
    heun_linear(out, {h_now, model.lindblad, ldag, obar_now, z_now},
                {h_next, model.lindblad, ldag, obar_next, z_next}, dt, ws);
    if (!finite(out)) {
        fail("non-finite state", t, 0);
    }
    return out;
}

StateVector step_nonlinear(const StateVector& psi, const ModelSpec& model,
                           const ComplexMatrix& obar_now, const ComplexMatrix& obar_next,
                           cd z_now, cd z_next, double t, double dt) {
    if (!(dt > 0.0)) {
        throw ValidationError(kModule, "dt must be positive");
    }
    const ComplexMatrix h_now = model.hamiltonian(t);
    const ComplexMatrix h_next = model.hamiltonian(t + dt);
    const ComplexMatrix ldag = model.lindblad.adjoint();
    StepWorkspace ws(model.dim);
    StateVector out = psi;
    heun_nonlinear(out, {h_now, model.lindblad, ldag, obar_now, z_now},
                   {h_next, model.lindblad, ldag, obar_next, z_next}, dt, ws);
    if (!finite(out)) {
        fail("non-finite state", t, 0);
    }
    return out;
}


Simulator::Simulator(ModelSpec model, CorrelationKernel kernel, TimeGrid grid, int truncation_order,
                     ObarMethod method, std::shared_ptr<const CoefficientTable> table)
    : model_(std::move(model)),
      kernel_(std::move(kernel)),
      grid_(grid),
      order_(truncation_order),
      table_(std::move(table)),
      sampler_(kernel_, grid_) {
    if (truncation_order < 0 || truncation_order > model_.noise_order_exact) {
        throw ValidationError(kModule, "truncation order " + std::to_string(truncation_order) +
                                           " outside 0.." + std::to_string(model_.noise_order_exact));
    }
    layout_ = truncate(enumerate_basis(model_), truncation_order);
    if (method == ObarMethod::automatic) {
        method = kernel_.is_exponential() && table_ == nullptr ? ObarMethod::recursion
                                                                : ObarMethod::table;
    }
    method_ = method;
    if (method_ == ObarMethod::recursion) {
        memory_ = std::make_unique<MemoryHierarchy>(model_, layout_, kernel_);
    } else {
        if (table_ == nullptr) {
            CoefficientOptions opts;
            opts.convergence_probe = false;
            table_ = std::make_shared<const CoefficientTable>(
                integrate_coefficients(model_, kernel_, grid_, truncation_order, opts));
        }
        if (!(table_->grid() == grid_) || table_->max_order() != truncation_order ||
            table_->dim() != model_.dim) {
            throw ValidationError(kModule, "coefficient table does not match the grid, order or model");
        }
    }
}

std::unique_ptr<Simulator::Workspace> Simulator::make_workspace() const {
    auto ws = std::make_unique<Workspace>();
    const int d = model_.dim;
    ws->step = StepWorkspace(d);
    if (memory_) {
        ws->memory = memory_->make_workspace();
        ws->xi = memory_->zero_state();
    }
    ws->h_now = ComplexMatrix::Zero(d, d);
    ws->h_next = ComplexMatrix::Zero(d, d);
    ws->obar_now = ComplexMatrix::Zero(d, d);
    ws->obar_next = ComplexMatrix::Zero(d, d);
    ws->ldag = model_.lindblad.adjoint();
    ws->noise.assign(static_cast<std::size_t>(grid_.size()), cd{});
    ws->shifted.assign(static_cast<std::size_t>(grid_.size()), cd{});
    ws->eldag.assign(static_cast<std::size_t>(grid_.size()), cd{});
    ws->psi = StateVector::Zero(d);
    return ws;
}

void Simulator::run(const StateVector& psi0, Mode mode, std::uint64_t seed, std::uint64_t stream_id,
                    Workspace& ws, const std::function<void(int, const StateVector&)>& visit) const {
    auto engine = make_stream(seed, stream_id);
    sampler_.sample_into(engine, ws.noise);
    // run_with_noise reads the path through a span; copy out of ws.noise is not needed.
    run_with_noise(psi0, mode, ws.noise, stream_id, ws, visit);
}

void Simulator::run_with_noise(const StateVector& psi0, Mode mode, std::span<const cd> zstar,
                               std::uint64_t stream_id, Workspace& ws,
                               const std::function<void(int, const StateVector&)>& visit) const {
    check_psi0(psi0, model_.dim);
    if (zstar.size() != static_cast<std::size_t>(grid_.size())) {
        throw ValidationError(kModule, "noise path length does not match the grid");
    }
    const double dt = grid_.dt();
    const ComplexMatrix& l = model_.lindblad;
    ws.psi = psi0;
    if (memory_) {
        for (ComplexMatrix& x : ws.xi) {
            x.setZero();
        }
    }
    ws.obar_now.setZero();
    model_.hamiltonian_into(0.0, ws.h_now);
    visit(0, ws.psi);

    if (mode == Mode::linear) {
        if (!memory_) {
            ws.obar_now = assemble_obar(*table_, zstar, 0);
        }
        for (int n = 0; n < grid_.n_steps(); ++n) {
            const double t_next = grid_.time(n + 1);
            model_.hamiltonian_into(t_next, ws.h_next);
            const cd z_now = zstar[static_cast<std::size_t>(n)];
            const cd z_next = zstar[static_cast<std::size_t>(n + 1)];
            if (memory_) {
                memory_->heun_step(ws.h_now, ws.h_next, z_now, z_next, dt, ws.xi, ws.memory);
                ws.obar_next = ws.xi[0];
            } else {
                ws.obar_next = assemble_obar(*table_, zstar, n + 1);
            }
            heun_linear(ws.psi, {ws.h_now, l, ws.ldag, ws.obar_now, z_now},
                        {ws.h_next, l, ws.ldag, ws.obar_next, z_next}, dt, ws.step);
            if (!finite(ws.psi)) {
                fail("non-finite state", t_next, stream_id);
            }
            visit(n + 1, ws.psi);
            std::swap(ws.h_now, ws.h_next);
            std::swap(ws.obar_now, ws.obar_next);
        }
        return;
    }

    // Norm-preserving mode: psi and the memory state advance together with one
    // Heun step; the shift integral uses <L^dagger> at both stages.
    ShiftMemory shift(kernel_, grid_);
    const bool table_route = !memory_;
    cd e_now = std::conj(expectation(ws.psi, l));
    if (table_route) {
        ws.eldag[0] = e_now;
        shifted_path(kernel_, grid_, zstar, ws.eldag, 0, ws.shifted);
        ws.obar_now = assemble_obar(*table_, ws.shifted, 0);
    }
    StepWorkspace& sw = ws.step;
    for (int n = 0; n < grid_.n_steps(); ++n) {
        const double t_next = grid_.time(n + 1);
        model_.hamiltonian_into(t_next, ws.h_next);
        const cd zt_now = zstar[static_cast<std::size_t>(n)] + shift.current();
        const ComplexMatrix& obar_now = table_route ? ws.obar_now : ws.xi[0];
        nonlinear_rhs({ws.h_now, l, ws.ldag, obar_now, zt_now}, ws.psi, sw, sw.k1);
        if (!table_route) {
            memory_->derivative(ws.h_now, zt_now, ws.xi, ws.memory.ka, ws.memory, e_now);
        }
        sw.pred = ws.psi + dt * sw.k1;
        const double pred_norm = sw.pred.norm();
        if (!(pred_norm >= 1e-12)) {
            fail("norm collapse in the predictor stage", t_next, stream_id);
        }
        const cd e_pred = std::conj(expectation(sw.pred, l));
        const cd zt_pred = zstar[static_cast<std::size_t>(n + 1)] + shift.peek(e_now, e_pred);
        if (table_route) {
            ws.eldag[static_cast<std::size_t>(n + 1)] = e_pred;
            shifted_path(kernel_, grid_, zstar, ws.eldag, n + 1, ws.shifted);
            ws.obar_next = assemble_obar(*table_, ws.shifted, n + 1);
        } else {
            for (std::size_t m = 0; m < ws.xi.size(); ++m) {
                ws.memory.pred[m] = ws.xi[m] + dt * ws.memory.ka[m];
            }
        }
        const ComplexMatrix& obar_pred = table_route ? ws.obar_next : ws.memory.pred[0];
        nonlinear_rhs({ws.h_next, l, ws.ldag, obar_pred, zt_pred}, sw.pred, sw, sw.k2);
        if (!table_route) {
            memory_->derivative(ws.h_next, zt_pred, ws.memory.pred, ws.memory.kb, ws.memory, e_pred);
            for (std::size_t m = 0; m < ws.xi.size(); ++m) {
                ws.xi[m] += (0.5 * dt) * (ws.memory.ka[m] + ws.memory.kb[m]);
            }
        }
        ws.psi += (0.5 * dt) * (sw.k1 + sw.k2);
        const double norm = ws.psi.norm();
        if (!(norm >= 1e-12) || !std::isfinite(norm)) {
            fail(std::isfinite(norm) ? "norm collapse below 1e-12" : "non-finite state", t_next,
                 stream_id);
        }
        ws.psi /= norm;
        const cd e_next = std::conj(expectation(ws.psi, l));
        shift.commit(e_now, e_next);
        e_now = e_next;
        if (table_route) {
            ws.eldag[static_cast<std::size_t>(n + 1)] = e_next;
            shifted_path(kernel_, grid_, zstar, ws.eldag, n + 1, ws.shifted);
            ws.obar_now = assemble_obar(*table_, ws.shifted, n + 1);
        }
        visit(n + 1, ws.psi);
        std::swap(ws.h_now, ws.h_next);
    }
}

TrajectoryResult Simulator::run(const StateVector& psi0, Mode mode, std::uint64_t seed,
                                std::uint64_t stream_id) const {
    TrajectoryResult result;
    result.grid = grid_;
    result.mode = mode;
    result.seed = seed;
    result.stream_id = stream_id;
    result.states.reserve(static_cast<std::size_t>(grid_.size()));
    result.norms.reserve(static_cast<std::size_t>(grid_.size()));
    auto ws = make_workspace();
    run(psi0, mode, seed, stream_id, *ws, [&](int, const StateVector& psi) {
        result.states.push_back(psi);
        result.norms.push_back(psi.squaredNorm());
    });
    return result;
}

TrajectoryResult run_trajectory(const ModelSpec& model, std::shared_ptr<const CoefficientTable> table,
                                const BasisLayout& layout, const CorrelationKernel& kernel,
                                const TimeGrid& grid, const StateVector& psi0, Mode mode,
                                std::uint64_t seed, std::uint64_t stream_id) {
    const ObarMethod method = table ? ObarMethod::table : ObarMethod::recursion;
    const Simulator sim(model, kernel, grid, layout.max_order(), method, std::move(table));
    return sim.run(psi0, mode, seed, stream_id);
}

} // namespace nmqsd
