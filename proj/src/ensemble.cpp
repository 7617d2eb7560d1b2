#include "nmqsd/ensemble.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <memory>
#include <mutex>
#include <thread>

#include "nmqsd/errors.hpp"

namespace nmqsd {

namespace {

constexpr const char* kModule = "ensemble";

// Running statistics of the upper triangle of |psi><psi| at every recorded point.
struct Stats {
    int n = 0;
    int dim = 0;
    std::size_t points = 0;
    std::vector<cd> mean;
    std::vector<double> m2rr, m2ii, m2ri;
    std::vector<double> tmean, tm2;

    Stats(int d, std::size_t p)
        : dim(d),
          points(p),
          mean(p * static_cast<std::size_t>(d * d)),
          m2rr(mean.size()),
          m2ii(mean.size()),
          m2ri(mean.size()),
          tmean(p),
          tm2(p) {}

    std::size_t at(std::size_t k, int i, int j) const {
        return (k * static_cast<std::size_t>(dim) + static_cast<std::size_t>(i)) *
                   static_cast<std::size_t>(dim) +
               static_cast<std::size_t>(j);
    }

    // Welford update with trajectory number `count` (1-based) at point k.
    void add(std::size_t k, const StateVector& psi, int count) {
        const double inv = 1.0 / count;
        for (int i = 0; i < dim; ++i) {
            for (int j = i; j < dim; ++j) {
                const cd x = psi[i] * std::conj(psi[j]);
                const std::size_t a = at(k, i, j);
                const cd d0 = x - mean[a];
                mean[a] += d0 * inv;
                const cd d1 = x - mean[a];
                m2rr[a] += d0.real() * d1.real();
                m2ii[a] += d0.imag() * d1.imag();
                m2ri[a] += d0.real() * d1.imag();
            }
        }
        const double t = psi.squaredNorm();
        const double d0 = t - tmean[k];
        tmean[k] += d0 * inv;
        tm2[k] += d0 * (t - tmean[k]);
    }

    // Chan et al. pairwise merge of `other` into this.
    void merge(const Stats& other) {
        if (other.n == 0) {
            return;
        }
        if (n == 0) {
            *this = other;
            return;
        }
        const double na = n;
        const double nb = other.n;
        const double nt = na + nb;
        const double fb = nb / nt;
        const double w = na * nb / nt;
        for (std::size_t a = 0; a < mean.size(); ++a) {
            const cd d = other.mean[a] - mean[a];
            mean[a] += d * fb;
            m2rr[a] += other.m2rr[a] + d.real() * d.real() * w;
            m2ii[a] += other.m2ii[a] + d.imag() * d.imag() * w;
            m2ri[a] += other.m2ri[a] + d.real() * d.imag() * w;
        }
        for (std::size_t k = 0; k < points; ++k) {
            const double d = other.tmean[k] - tmean[k];
            tmean[k] += d * fb;
            tm2[k] += other.tm2[k] + d * d * w;
        }
        n += other.n;
    }
};

struct GroupSum {
    int n = 0;
    std::vector<cd> sum;
};

void add_to_group(GroupSum& g, const Stats& s) {
    if (g.sum.empty()) {
        g.sum.assign(s.mean.size(), cd{});
    }
    for (std::size_t a = 0; a < s.mean.size(); ++a) {
        g.sum[a] += s.mean[a] * static_cast<double>(s.n);
    }
    g.n += s.n;
}

DensityMatrix hermitian_from(const std::vector<cd>& upper, std::size_t offset, int dim, double scale) {
    DensityMatrix m(dim, dim);
    for (int i = 0; i < dim; ++i) {
        for (int j = i; j < dim; ++j) {
            const cd v = upper[offset + static_cast<std::size_t>(i * dim + j)] * scale;
            if (i == j) {
                m(i, i) = cd(v.real(), 0.0);
            } else {
                m(i, j) = v;
                m(j, i) = std::conj(v);
            }
        }
    }
    return m;
}

EnsembleResult finalize(const Stats& total, const std::vector<GroupSum>& groups, const TimeGrid& grid,
                        std::vector<int> indices, Mode mode) {
    EnsembleResult r;
    r.grid = grid;
    r.mode = mode;
    r.indices = std::move(indices);
    r.n_trajectories = total.n;
    const int d = total.dim;
    const std::size_t block = static_cast<std::size_t>(d * d);
    const double n = total.n;
    const double denom = total.n > 1 ? n - 1.0 : 1.0;
    for (std::size_t k = 0; k < total.points; ++k) {
        DensityMatrix rho = hermitian_from(total.mean, k * block, d, 1.0);
        if (mode == Mode::nonlinear) {
            rho /= rho.trace().real();
        }
        r.rho.push_back(std::move(rho));
        Eigen::MatrixXd vr(d, d), vi(d, d), cri(d, d), se(d, d);
        for (int i = 0; i < d; ++i) {
            for (int j = i; j < d; ++j) {
                const std::size_t a = total.at(k, i, j);
                vr(i, j) = vr(j, i) = total.m2rr[a] / denom;
                vi(i, j) = vi(j, i) = total.m2ii[a] / denom;
                cri(i, j) = total.m2ri[a] / denom;
                cri(j, i) = -cri(i, j);
                se(i, j) = se(j, i) = std::sqrt((vr(i, j) + vi(i, j)) / n);
            }
        }
        r.var_re.push_back(std::move(vr));
        r.var_im.push_back(std::move(vi));
        r.cov_re_im.push_back(std::move(cri));
        r.stderr_entries.push_back(std::move(se));
        if (mode == Mode::nonlinear) {
            r.trace.push_back(1.0);
            r.trace_stderr.push_back(0.0);
        } else {
            r.trace.push_back(total.tmean[k]);
            r.trace_stderr.push_back(std::sqrt(total.tm2[k] / denom / n));
        }
    }
    for (const GroupSum& g : groups) {
        if (g.n == 0) {
            continue;
        }
        std::vector<DensityMatrix> series;
        series.reserve(total.points);
        for (std::size_t k = 0; k < total.points; ++k) {
            series.push_back(hermitian_from(g.sum, k * block, d, 1.0 / g.n));
        }
        r.group_rho.push_back(std::move(series));
        r.group_sizes.push_back(g.n);
    }
    return r;
}

std::vector<int> slot_map(const TimeGrid& grid, const std::vector<int>& indices) {
    std::vector<int> slot(static_cast<std::size_t>(grid.size()), -1);
    for (std::size_t k = 0; k < indices.size(); ++k) {
        slot[static_cast<std::size_t>(indices[k])] = static_cast<int>(k);
    }
    return slot;
}

} // namespace

std::vector<int> recorded_indices(const TimeGrid& grid, int record_every) {
    if (record_every < 1) {
        throw ValidationError(kModule, "record_every must be at least 1");
    }
    std::vector<int> out;
    for (int n = 0; n < grid.size(); n += record_every) {
        out.push_back(n);
    }
    if (out.back() != grid.n_steps()) {
        out.push_back(grid.n_steps());
    }
    return out;
}

EnsembleResult run_ensemble(const Simulator& sim, const StateVector& psi0, Mode mode,
                            const EnsembleOptions& options) {
    if (options.trajectories < 1) {
        throw ValidationError(kModule, "trajectories must be at least 1");
    }
    if (options.chunk_size < 1 || options.jackknife_groups < 1) {
        throw ValidationError(kModule, "chunk_size and jackknife_groups must be positive");
    }
    const TimeGrid& grid = sim.grid();
    const int dim = sim.model().dim;
    std::vector<int> indices = recorded_indices(grid, options.record_every);
    const std::vector<int> slot = slot_map(grid, indices);
    const std::size_t points = indices.size();

    const int n_chunks = (options.trajectories + options.chunk_size - 1) / options.chunk_size;
    const int n_groups = std::min(options.jackknife_groups, n_chunks);
    int workers = options.workers > 0 ? options.workers
                                      : static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
    workers = std::min(workers, n_chunks);

    Stats total(dim, points);
    std::vector<GroupSum> groups(static_cast<std::size_t>(n_groups));
    std::vector<std::unique_ptr<Stats>> finished(static_cast<std::size_t>(n_chunks));
    int merged = 0;
    std::mutex lock;
    std::atomic<int> next{0};
    std::atomic<bool> failed{false};
    int error_chunk = n_chunks;
    std::exception_ptr error;

    auto work = [&]() {
        auto ws = sim.make_workspace();
        for (;;) {
            const int c = next.fetch_add(1);
            if (c >= n_chunks || failed.load()) {
                return;
            }
            try {
                auto stats = std::make_unique<Stats>(dim, points);
                const int first = c * options.chunk_size;
                const int last = std::min(options.trajectories, first + options.chunk_size);
                for (int tr = first; tr < last; ++tr) {
                    const int count = stats->n + 1;
                    sim.run(psi0, mode, options.seed, static_cast<std::uint64_t>(tr), *ws,
                            [&](int n, const StateVector& psi) {
                                const int k = slot[static_cast<std::size_t>(n)];
                                if (k >= 0) {
                                    stats->add(static_cast<std::size_t>(k), psi, count);
                                }
                            });
                    stats->n = count;
                }
                std::lock_guard<std::mutex> guard(lock);
                finished[static_cast<std::size_t>(c)] = std::move(stats);
                while (merged < n_chunks && finished[static_cast<std::size_t>(merged)]) {
                    const Stats& s = *finished[static_cast<std::size_t>(merged)];
                    total.merge(s);
                    add_to_group(groups[static_cast<std::size_t>(
                                     static_cast<long long>(merged) * n_groups / n_chunks)],
                                 s);
                    finished[static_cast<std::size_t>(merged)].reset();
                    ++merged;
                    if (options.progress) {
                        options.progress(total.n);
                    }
                }
            } catch (...) {
                std::lock_guard<std::mutex> guard(lock);
                if (c < error_chunk) {
                    error_chunk = c;
                    error = std::current_exception();
                }
                failed.store(true);
                return;
            }
        }
    };

    if (workers <= 1) {
        work();
    } else {
        std::vector<std::thread> pool;
        pool.reserve(static_cast<std::size_t>(workers));
        for (int w = 0; w < workers; ++w) {
            pool.emplace_back(work);
        }
        for (std::thread& t : pool) {
            t.join();
        }
    }
    if (error) {
        std::rethrow_exception(error);
    }
    return finalize(total, groups, grid, std::move(indices), mode);
}

EnsembleResult average_density(const std::vector<TrajectoryResult>& trajectories, Mode mode) {
    if (trajectories.empty()) {
        throw ValidationError(kModule, "at least one trajectory is required");
    }
    const TimeGrid grid = trajectories.front().grid;
    const std::size_t points = static_cast<std::size_t>(grid.size());
    const int dim = static_cast<int>(trajectories.front().states.front().size());
    constexpr int kChunk = 16;
    const int n = static_cast<int>(trajectories.size());
    const int n_chunks = (n + kChunk - 1) / kChunk;
    const int n_groups = std::min(20, n_chunks);
    Stats total(dim, points);
    std::vector<GroupSum> groups(static_cast<std::size_t>(n_groups));
    for (int c = 0; c < n_chunks; ++c) {
        Stats s(dim, points);
        for (int tr = c * kChunk; tr < std::min(n, (c + 1) * kChunk); ++tr) {
            const TrajectoryResult& t = trajectories[static_cast<std::size_t>(tr)];
            if (!(t.grid == grid) || t.states.size() != points) {
                throw ValidationError(kModule, "trajectories are on different grids");
            }
            for (std::size_t k = 0; k < points; ++k) {
                if (t.states[k].size() != dim) {
                    throw ValidationError(kModule, "trajectories have different dimensions");
                }
                s.add(k, t.states[k], s.n + 1);
            }
            ++s.n;
        }
        total.merge(s);
        add_to_group(groups[static_cast<std::size_t>(static_cast<long long>(c) * n_groups / n_chunks)], s);
    }
    std::vector<int> indices(points);
    for (std::size_t k = 0; k < points; ++k) {
        indices[k] = static_cast<int>(k);
    }
    return finalize(total, groups, grid, std::move(indices), mode);
}

double coherence(const DensityMatrix& rho, int i, int j) {
    if (i < 0 || j < 0 || i >= rho.rows() || j >= rho.cols()) {
        throw ValidationError(kModule, "coherence index out of range");
    }
    return std::abs(rho(i, j));
}

double von_neumann_entropy(const DensityMatrix& rho, double log_base, EntropyWarnings* warnings) {
    if (!(log_base > 1.0)) {
        throw ValidationError(kModule, "log base must exceed 1");
    }
    const double scale = 1.0 / std::log(log_base);
    double s = 0.0;
    for (double lambda : eigvals_hermitian(rho)) {
        if (lambda < -1e-6) {
            throw NumericError(kModule, "density matrix has eigenvalue " + std::to_string(lambda) +
                                            " (unphysical state)");
        }
        if (lambda < 0.0) {
            if (warnings != nullptr) {
                ++warnings->clamped;
            }
            continue;
        }
        if (lambda > 0.0) {
            s -= lambda * std::log(lambda) * scale;
        }
    }
    return std::max(s, 0.0);
}

std::vector<double> populations(const DensityMatrix& rho) {
    std::vector<double> out(static_cast<std::size_t>(rho.rows()));
    for (Eigen::Index i = 0; i < rho.rows(); ++i) {
        out[static_cast<std::size_t>(i)] = rho(i, i).real();
    }
    return out;
}

namespace {

void check_entry(const EnsembleResult& r, int i, int j) {
    const int d = r.rho.empty() ? 0 : static_cast<int>(r.rho.front().rows());
    if (i < 0 || j < 0 || i >= d || j >= d) {
        throw ValidationError(kModule, "matrix entry (" + std::to_string(i + 1) + "," +
                                           std::to_string(j + 1) + ") out of range");
    }
}

std::string entry_name(const char* prefix, int i, int j) {
    return std::string(prefix) + "_rho_" + std::to_string(i + 1) + "_" + std::to_string(j + 1);
}

} // namespace

ObservableSeries coherence_series(const EnsembleResult& r, int i, int j) {
    check_entry(r, i, j);
    ObservableSeries out{entry_name("abs", i, j), {}, {}};
    const double n = r.n_trajectories;
    for (std::size_t k = 0; k < r.points(); ++k) {
        const cd v = r.rho[k](i, j);
        const double a = std::abs(v);
        out.values.push_back(a);
        double var = 0.0;
        if (a > 0.0) {
            const double c = i <= j ? r.cov_re_im[k](i, j) : -r.cov_re_im[k](i, j);
            var = (v.real() * v.real() * r.var_re[k](i, j) + v.imag() * v.imag() * r.var_im[k](i, j) +
                   2.0 * v.real() * v.imag() * c) /
                  (a * a);
        } else {
            var = r.var_re[k](i, j) + r.var_im[k](i, j);
        }
        out.stderr_values.push_back(std::sqrt(std::max(var, 0.0) / n));
    }
    return out;
}

ObservableSeries population_series(const EnsembleResult& r, int i) {
    check_entry(r, i, i);
    ObservableSeries out{"rho_" + std::to_string(i + 1) + "_" + std::to_string(i + 1), {}, {}};
    for (std::size_t k = 0; k < r.points(); ++k) {
        out.values.push_back(r.rho[k](i, i).real());
        out.stderr_values.push_back(r.stderr_entries[k](i, i));
    }
    return out;
}

ObservableSeries re_series(const EnsembleResult& r, int i, int j) {
    check_entry(r, i, j);
    ObservableSeries out{entry_name("re", i, j), {}, {}};
    for (std::size_t k = 0; k < r.points(); ++k) {
        out.values.push_back(r.rho[k](i, j).real());
        out.stderr_values.push_back(std::sqrt(r.var_re[k](i, j) / r.n_trajectories));
    }
    return out;
}

ObservableSeries im_series(const EnsembleResult& r, int i, int j) {
    check_entry(r, i, j);
    ObservableSeries out{entry_name("im", i, j), {}, {}};
    for (std::size_t k = 0; k < r.points(); ++k) {
        out.values.push_back(r.rho[k](i, j).imag());
        out.stderr_values.push_back(std::sqrt(r.var_im[k](i, j) / r.n_trajectories));
    }
    return out;
}

ObservableSeries entropy_series(const EnsembleResult& r, double log_base, EntropyWarnings* warnings) {
    ObservableSeries out{"entropy", {}, {}};
    const std::size_t groups = r.group_rho.size();
    const double n = r.n_trajectories;
    for (std::size_t k = 0; k < r.points(); ++k) {
        out.values.push_back(
            von_neumann_entropy(r.rho[k] / r.rho[k].trace().real(), log_base, warnings));
        double se = 0.0;
        if (groups >= 2) {
            // Leave-one-group-out jackknife.
            std::vector<double> loo(groups);
            double mean = 0.0;
            for (std::size_t g = 0; g < groups; ++g) {
                const double ng = r.group_sizes[g];
                DensityMatrix rest = (r.rho[k] * n - r.group_rho[g][k] * ng) / (n - ng);
                rest /= rest.trace().real();
                EntropyWarnings ignored;
                loo[g] = von_neumann_entropy(rest, log_base, &ignored);
                mean += loo[g];
            }
            mean /= static_cast<double>(groups);
            double acc = 0.0;
            for (double v : loo) {
                acc += (v - mean) * (v - mean);
            }
            se = std::sqrt(acc * (static_cast<double>(groups) - 1.0) / static_cast<double>(groups));
        }
        out.stderr_values.push_back(se);
    }
    return out;
}

ObservableSeries trace_series(const EnsembleResult& r) {
    return {"norm", r.trace, r.trace_stderr};
}

} // namespace nmqsd
