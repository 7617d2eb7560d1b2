#include "nmqsd/noise.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "nmqsd/errors.hpp"

namespace nmqsd {

namespace {

constexpr const char* kModule = "noise";

} // namespace

TimeGrid::TimeGrid(double t_max, int n_steps) : t_max_(t_max), n_steps_(n_steps) {
    if (!(t_max > 0.0) || !std::isfinite(t_max)) {
        throw ValidationError(kModule, "t_max must be positive, got " + std::to_string(t_max));
    }
    if (n_steps < 1) {
        throw ValidationError(kModule, "n_steps must be >= 1, got " + std::to_string(n_steps));
    }
}

CorrelationKernel CorrelationKernel::exponential(double Gamma, double gamma) {
    if (!(Gamma >= 0.0) || !std::isfinite(Gamma)) {
        throw ValidationError(kModule, "Gamma must be >= 0, got " + std::to_string(Gamma));
    }
    if (!(gamma > 0.0) || !std::isfinite(gamma)) {
        throw ValidationError(kModule, "gamma must be > 0, got " + std::to_string(gamma));
    }
    CorrelationKernel k;
    k.kind_ = Kind::exponential;
    k.Gamma_ = Gamma;
    k.gamma_ = gamma;
    return k;
}

CorrelationKernel CorrelationKernel::tabulated(double lag_step, std::vector<cd> values) {
    if (!(lag_step > 0.0)) {
        throw ValidationError(kModule, "tabulated kernel needs a positive lag step");
    }
    if (values.size() < 2) {
        throw ValidationError(kModule, "tabulated kernel needs at least two samples");
    }
    for (const cd& v : values) {
        if (!std::isfinite(v.real()) || !std::isfinite(v.imag())) {
            throw ValidationError(kModule, "tabulated kernel has non-finite entries");
        }
    }
    if (std::abs(values[0].imag()) > 1e-12 * std::max(1.0, std::abs(values[0])) ||
        values[0].real() < 0.0) {
        throw ValidationError(kModule, "tabulated kernel must have real, non-negative alpha(0)");
    }
    values[0] = cd(values[0].real(), 0.0);
    CorrelationKernel k;
    k.kind_ = Kind::tabulated;
    k.lag_step_ = lag_step;
    k.table_ = std::move(values);
    return k;
}

double CorrelationKernel::max_lag() const {
    if (kind_ == Kind::exponential) {
        return std::numeric_limits<double>::infinity();
    }
    return lag_step_ * static_cast<double>(table_.size() - 1);
}

cd CorrelationKernel::operator()(double t, double s) const {
    const double lag = t - s;
    if (kind_ == Kind::exponential) {
        return cd(amplitude() * std::exp(-gamma_ * std::abs(lag)), 0.0);
    }
    const double u = std::abs(lag) / lag_step_;
    const auto last = static_cast<double>(table_.size() - 1);
    if (u > last * (1.0 + 1e-12)) {
        throw ValidationError(kModule, "lag " + std::to_string(std::abs(lag)) +
                                           " exceeds the tabulated range " +
                                           std::to_string(max_lag()));
    }
    const auto i = static_cast<std::size_t>(std::min(std::floor(u), last - 1.0));
    const double w = std::min(1.0, u - static_cast<double>(i));
    const cd v = (1.0 - w) * table_[i] + w * table_[i + 1];
    return lag >= 0.0 ? v : std::conj(v);
}

cd alpha(const CorrelationKernel& kernel, double t, double s) {
    if (t < 0.0 || s < 0.0) {
        throw ValidationError(kModule, "alpha is defined for t, s >= 0 (got t=" +
                                           std::to_string(t) + ", s=" + std::to_string(s) + ")");
    }
    return kernel(t, s);
}

std::mt19937_64 make_stream(std::uint64_t seed, std::uint64_t stream_id) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(stream_id),
                      static_cast<std::uint32_t>(stream_id >> 32), 0x6e6d7173u};
    return std::mt19937_64(seq);
}

cd circular_gaussian(std::mt19937_64& engine) {
    // std::normal_distribution caches a second variate, so a fresh one per call
    // keeps the draw sequence independent of any earlier usage pattern.
    std::normal_distribution<double> normal(0.0, 1.0);
    const double x = normal(engine);
    const double y = normal(engine);
    return cd(x, y) * M_SQRT1_2;
}

NoiseSampler::NoiseSampler(const CorrelationKernel& kernel, const TimeGrid& grid)
    : kernel_(kernel), grid_(grid) {
    if (kernel.is_exponential()) {
        const double a = kernel.amplitude();
        decay_ = std::exp(-kernel.gamma() * grid.dt());
        innovation_ = std::sqrt(a * (1.0 - decay_ * decay_));
        stationary_ = std::sqrt(a);
        return;
    }
    const int n = grid.size();
    ComplexMatrix cov(n, n);
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) {
            cov(i, j) = kernel(grid.time(i), grid.time(j));
        }
    }
    const double jitter = 1e-12 * cov.diagonal().real().maxCoeff();
    cov.diagonal().array() += jitter;
    Eigen::LLT<ComplexMatrix> llt(cov);
    if (llt.info() != Eigen::Success) {
        throw NumericError(kModule, "tabulated covariance is not positive semidefinite "
                                    "(Cholesky failed after jitter)");
    }
    factor_ = llt.matrixL();
}

void NoiseSampler::sample_into(std::mt19937_64& engine, std::span<cd> out) const {
    const auto n = static_cast<std::size_t>(grid_.size());
    if (out.size() != n) {
        throw ValidationError(kModule, "noise buffer size does not match the grid");
    }
    if (kernel_.is_exponential()) {
        cd z = stationary_ * circular_gaussian(engine);
        out[0] = std::conj(z);
        for (std::size_t i = 1; i < n; ++i) {
            z = decay_ * z + innovation_ * circular_gaussian(engine);
            out[i] = std::conj(z);
        }
        return;
    }
    StateVector xi(static_cast<Eigen::Index>(n));
    for (std::size_t i = 0; i < n; ++i) {
        xi(static_cast<Eigen::Index>(i)) = circular_gaussian(engine);
    }
    const StateVector z = factor_.triangularView<Eigen::Lower>() * xi;
    for (std::size_t i = 0; i < n; ++i) {
        out[i] = std::conj(z(static_cast<Eigen::Index>(i)));
    }
}

NoiseRealization NoiseSampler::sample(std::uint64_t seed, std::uint64_t stream_id) const {
    NoiseRealization r;
    r.grid = grid_;
    r.seed = seed;
    r.stream_id = stream_id;
    r.values.resize(static_cast<std::size_t>(grid_.size()));
    auto engine = make_stream(seed, stream_id);
    sample_into(engine, r.values);
    return r;
}

NoiseRealization sample_noise(const CorrelationKernel& kernel, const TimeGrid& grid,
                              std::uint64_t seed, std::uint64_t stream_id) {
    return NoiseSampler(kernel, grid).sample(seed, stream_id);
}

ShiftedNoise shifted_noise_update(cd memory, cd z_raw, cd expect_ldag,
                                  const CorrelationKernel& kernel, double dt) {
    if (!(dt > 0.0)) {
        throw ValidationError(kModule, "dt must be positive");
    }
    if (!kernel.is_exponential()) {
        throw ValidationError(kModule, "the recursive shift update needs an exponential kernel; "
                                       "use ShiftMemory for tabulated kernels");
    }
    const cd next = std::exp(-kernel.gamma() * dt) * memory + kernel.amplitude() * expect_ldag * dt;
    return {z_raw + memory, next};
}

cd shifted_memory_trapezoid(cd memory, cd expect_ldag_now, cd expect_ldag_next,
                            const CorrelationKernel& kernel, double dt) {
    const double decay = std::exp(-kernel.gamma() * dt);
    const double half = 0.5 * kernel.amplitude() * dt;
    return decay * (memory + half * expect_ldag_now) + half * expect_ldag_next;
}

ShiftMemory::ShiftMemory(const CorrelationKernel& kernel, const TimeGrid& grid)
    : kernel_(kernel), grid_(grid) {
    if (!kernel_.is_exponential()) {
        history_.reserve(static_cast<std::size_t>(grid.size()));
    }
}

cd ShiftMemory::history_integral(int n, cd pending, cd last_value) const {
    // I(t_n) by trapezoid over <L^dagger> at t_0..t_n. history_ holds the first
    // values, `pending` fills index n-1 when it is not stored yet, and
    // last_value stands in for index n.
    if (n == 0) {
        return {0.0, 0.0};
    }
    const auto value = [&](int i) {
        return static_cast<std::size_t>(i) < history_.size() ? history_[static_cast<std::size_t>(i)]
                                                             : pending;
    };
    const double dt = grid_.dt();
    const double t = grid_.time(n);
    cd sum = 0.5 * std::conj(kernel_(t, 0.0)) * value(0);
    for (int i = 1; i < n; ++i) {
        sum += std::conj(kernel_(t, grid_.time(i))) * value(i);
    }
    sum += 0.5 * std::conj(kernel_(t, t)) * last_value;
    return sum * dt;
}

cd ShiftMemory::predict(cd expect_ldag_now) const {
    if (kernel_.is_exponential()) {
        const double dt = grid_.dt();
        return std::exp(-kernel_.gamma() * dt) * current_ + kernel_.amplitude() * expect_ldag_now * dt;
    }
    return history_integral(step_ + 1, expect_ldag_now, expect_ldag_now);
}

cd ShiftMemory::peek(cd expect_ldag_now, cd expect_ldag_next) const {
    if (kernel_.is_exponential()) {
        return shifted_memory_trapezoid(current_, expect_ldag_now, expect_ldag_next, kernel_, grid_.dt());
    }
    return history_integral(step_ + 1, expect_ldag_now, expect_ldag_next);
}

void ShiftMemory::commit(cd expect_ldag_now, cd expect_ldag_next) {
    if (kernel_.is_exponential()) {
        current_ = shifted_memory_trapezoid(current_, expect_ldag_now, expect_ldag_next, kernel_,
                                            grid_.dt());
    } else {
        history_.push_back(expect_ldag_now);
        current_ = history_integral(step_ + 1, expect_ldag_now, expect_ldag_next);
    }
    ++step_;
}

CovarianceProbe covariance_probe(const CorrelationKernel& kernel, const TimeGrid& grid, int realizations,
                                 std::uint64_t seed, int points) {
    if (realizations < 2) {
        throw ValidationError(kModule, "covariance probe needs at least 2 realizations");
    }
    if (points < 1 || points > grid.size()) {
        throw ValidationError(kModule, "covariance probe size must be between 1 and the grid size");
    }
    CovarianceProbe out;
    out.realizations = realizations;
    for (int a = 0; a < points; ++a) {
        out.indices.push_back(points == 1 ? 0
                                          : static_cast<int>(std::lround(static_cast<double>(a) * grid.n_steps() /
                                                                         (points - 1))));
    }
    const std::size_t pairs = static_cast<std::size_t>(points) * static_cast<std::size_t>(points);
    std::vector<cd> mean_c(pairs), mean_p(pairs);
    std::vector<double> m2c_r(pairs), m2c_i(pairs), m2p_r(pairs), m2p_i(pairs);
    std::vector<cd> zt(static_cast<std::size_t>(points));
    std::vector<cd> path(static_cast<std::size_t>(grid.size()));
    const NoiseSampler sampler(kernel, grid);
    for (int r = 0; r < realizations; ++r) {
        auto engine = make_stream(seed, static_cast<std::uint64_t>(r));
        sampler.sample_into(engine, path);
        for (int a = 0; a < points; ++a) {
            zt[static_cast<std::size_t>(a)] = std::conj(path[static_cast<std::size_t>(out.indices[static_cast<std::size_t>(a)])]);
        }
        const double inv = 1.0 / (r + 1);
        for (std::size_t a = 0; a < zt.size(); ++a) {
            for (std::size_t b = 0; b < zt.size(); ++b) {
                const std::size_t q = a * zt.size() + b;
                const cd xc = zt[a] * std::conj(zt[b]);
                const cd xp = zt[a] * zt[b];
                const cd dc = xc - mean_c[q];
                mean_c[q] += dc * inv;
                m2c_r[q] += dc.real() * (xc - mean_c[q]).real();
                m2c_i[q] += dc.imag() * (xc - mean_c[q]).imag();
                const cd dp = xp - mean_p[q];
                mean_p[q] += dp * inv;
                m2p_r[q] += dp.real() * (xp - mean_p[q]).real();
                m2p_i[q] += dp.imag() * (xp - mean_p[q]).imag();
            }
        }
    }
    const double denom = (realizations - 1.0) * realizations;
    auto z = [](double diff, double se) {
        if (se > 0.0) {
            return std::abs(diff) / se;
        }
        return std::abs(diff) > 1e-12 ? std::numeric_limits<double>::infinity() : 0.0;
    };
    for (std::size_t a = 0; a < zt.size(); ++a) {
        for (std::size_t b = 0; b < zt.size(); ++b) {
            const std::size_t q = a * zt.size() + b;
            const cd exact = kernel(grid.time(out.indices[a]), grid.time(out.indices[b]));
            out.covariance.push_back(mean_c[q]);
            out.pseudo.push_back(mean_p[q]);
            out.exact.push_back(exact);
            out.se_cov_re.push_back(std::sqrt(m2c_r[q] / denom));
            out.se_cov_im.push_back(std::sqrt(m2c_i[q] / denom));
            out.se_pseudo_re.push_back(std::sqrt(m2p_r[q] / denom));
            out.se_pseudo_im.push_back(std::sqrt(m2p_i[q] / denom));
            out.worst_covariance = std::max({out.worst_covariance, z(mean_c[q].real() - exact.real(), out.se_cov_re.back()),
                                             z(mean_c[q].imag() - exact.imag(), out.se_cov_im.back())});
            out.worst_pseudo = std::max({out.worst_pseudo, z(mean_p[q].real(), out.se_pseudo_re.back()),
                                         z(mean_p[q].imag(), out.se_pseudo_im.back())});
        }
    }
    return out;
}

} // namespace nmqsd
