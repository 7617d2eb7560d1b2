// Acceptance runs. Usage: nmqsd_acceptance [criterion ...]; no arguments runs all ten.
// Prints one PASS/FAIL line per criterion and exits nonzero if any failed.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <sstream>
#include <string>

#include "nmqsd/app.hpp"
#include "nmqsd/coefficients.hpp"
#include "nmqsd/errors.hpp"

using namespace nmqsd;
namespace fs = std::filesystem;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

std::string fmt(const char* f, double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, f, v);
    return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

fs::path scratch_dir() {
    const fs::path p = fs::temp_directory_path() / "nmqsd_acceptance";
    fs::create_directories(p);
    return p;
}

// Entrywise |rho_ij - oracle_ij| / se_ij over the listed entries and all recorded points.
double worst_sigma(const EnsembleResult& e, const MasterEquationRun& o,
                   const std::vector<std::pair<int, int>>& entries) {
    double worst = 0.0;
    for (std::size_t k = 0; k < e.points(); ++k) {
        for (const auto& [i, j] : entries) {
            const double diff = std::abs(e.rho[k](i, j) - o.rho[k](i, j));
            const double se = e.stderr_entries[k](i, j);
            worst = std::max(worst, se > 1e-14 ? diff / se : (diff > 1e-9 ? INFINITY : 0.0));
        }
    }
    return worst;
}

std::vector<std::pair<int, int>> upper_triangle(int dim) {
    std::vector<std::pair<int, int>> out;
    for (int i = 0; i < dim; ++i) {
        for (int j = i; j < dim; ++j) {
            out.emplace_back(i, j);
        }
    }
    return out;
}

std::string spin_config(double l, double gamma, int order, int trajectories, double t_max, int n_steps,
                        const std::string& initial, std::uint64_t seed, const std::string& mode = "nonlinear",
                        int record_every = 10) {
    std::ostringstream s;
    s << "model: {family: spin_l, l: " << l << ", omega: 1.0}\n"
      << "kernel: {type: exponential, Gamma: 1.0, gamma: " << gamma << "}\n"
      << "grid: {t_max: " << t_max << ", n_steps: " << n_steps << "}\n"
      << "run: {mode: " << mode << ", trajectories: " << trajectories << ", seed: " << seed
      << ", truncation_order: " << order << ", initial_state: " << initial << ", record_every: " << record_every
      << "}\n"
      << "output: {path: " << (scratch_dir() / "run").string() << "}\n";
    return s.str();
}

std::string four_level_config(double gamma) {
    std::ostringstream s;
    s << "model:\n"
         "  family: driven_four_level\n"
         "  omegas: [0.1, 0.3, 0.6, 0.2]\n"
         "  kappas: [0.4, 0.8, 0.3]\n"
         "  drives:\n"
         "    - {levels: [2, 3], amplitude: 0.1, frequency: 2.0}\n"
         "    - {levels: [3, 4], amplitude: 0.1, frequency: 2.0}\n"
      << "kernel: {type: exponential, Gamma: 1.0, gamma: " << gamma << "}\n"
      << "grid: {t_max: 10.0, n_steps: 2000}\n"
      << "run: {mode: nonlinear, trajectories: 1000, seed: 3003, initial_state: 3, record_every: 10}\n"
      << "output: {path: " << (scratch_dir() / "run").string() << "}\n";
    return s.str();
}

struct FourLevelRun {
    EnsembleResult ensemble;
    double seconds = 0.0;
};

// Driven four-level ensembles are shared by criteria 2 and 5.
const FourLevelRun& four_level(double gamma) {
    static std::map<double, FourLevelRun> cache;
    auto it = cache.find(gamma);
    if (it == cache.end()) {
        const auto t0 = std::chrono::steady_clock::now();
        FourLevelRun r{simulate(parse_config(four_level_config(gamma)), 0), 0.0};
        r.seconds = seconds_since(t0);
        it = cache.emplace(gamma, std::move(r)).first;
    }
    return it->second;
}

std::size_t index_at_time(const EnsembleResult& r, double t) {
    std::size_t best = 0;
    for (std::size_t k = 0; k < r.points(); ++k) {
        if (std::abs(r.time(k) - t) < std::abs(r.time(best) - t)) {
            best = k;
        }
    }
    return best;
}

Outcome criterion1() {
    const auto t0 = std::chrono::steady_clock::now();
    const RunConfig c = parse_config(spin_config(0.5, 200.0, 0, 2000, 5.0, 10000, "top", 101, "nonlinear", 1));
    const EnsembleResult e = simulate(c, 0);
    const double wall = seconds_since(t0);
    const MasterEquationRun o = reference(c, "lindblad");
    const double z = worst_sigma(e, o, upper_triangle(2));
    // Diagnostic only: skip the initial slip of width ~1/gamma.
    EnsembleResult late = e;
    const std::size_t skip = index_at_time(e, 20.0 / 200.0);
    late.indices.erase(late.indices.begin(), late.indices.begin() + skip);
    late.rho.erase(late.rho.begin(), late.rho.begin() + skip);
    late.stderr_entries.erase(late.stderr_entries.begin(), late.stderr_entries.begin() + skip);
    MasterEquationRun late_o = o;
    late_o.indices.erase(late_o.indices.begin(), late_o.indices.begin() + skip);
    late_o.rho.erase(late_o.rho.begin(), late_o.rho.begin() + skip);
    const double z_late = worst_sigma(late, late_o, upper_triangle(2));
    double exp_dev = 0.0;
    for (std::size_t k = 0; k < e.points(); ++k) {
        exp_dev = std::max(exp_dev, std::abs(e.rho[k](1, 1).real() - std::exp(-e.time(k))));
    }
    return {z < 4.0 && exp_dev < 0.02 && wall <= 60.0,
            "worst " + fmt("%.2f", z) + " stderr vs Lindblad (" + fmt("%.2f", z_late) +
                " for t >= 20/gamma), max |rho_ee - exp(-Gamma t)| " +
                fmt("%.4f", exp_dev) + ", ensemble " + fmt("%.1f", wall) + " s"};
}

Outcome criterion2() {
    bool pass = true;
    std::string detail;
    for (double gamma : {0.3, 1.0, 3.0}) {
        const FourLevelRun& run = four_level(gamma);
        const RunConfig c = parse_config(four_level_config(gamma));
        const MasterEquationRun o = reference(c, "convolutionless");
        const double z = worst_sigma(run.ensemble, o, upper_triangle(4));
        pass = pass && z < 4.0 && run.seconds <= 120.0;
        detail += (detail.empty() ? "" : "; ") + std::string("gamma ") + fmt("%.1f", gamma) + ": worst " +
                  fmt("%.2f", z) + " stderr, " + fmt("%.1f", run.seconds) + " s";
    }
    return {pass, detail};
}

Outcome criterion3() {
    const auto t0 = std::chrono::steady_clock::now();
    const RunConfig c = parse_config(spin_config(1.5, 0.5, 2, 2000, 10.0, 1000, "uniform", 303));
    const EnsembleResult e = simulate(c, 0);
    const double wall = seconds_since(t0);
    const MasterEquationRun o = reference(c, "pseudomode");
    double z_coh = 0.0;
    for (std::size_t k = 0; k < e.points(); ++k) {
        // ||a| - |b|| <= |a - b|, so the entry error bounds the error of the modulus.
        const double diff = std::abs(std::abs(e.rho[k](0, 3)) - std::abs(o.rho[k](0, 3)));
        const double se = e.stderr_entries[k](0, 3);
        z_coh = std::max(z_coh, se > 1e-14 ? diff / se : (diff > 1e-9 ? INFINITY : 0.0));
    }
    const double z_pop = worst_sigma(e, o, {{0, 0}, {1, 1}, {2, 2}, {3, 3}});
    return {z_coh < 4.0 && z_pop < 4.0 && wall <= 180.0,
            "|rho_14| worst " + fmt("%.2f", z_coh) + " stderr, populations worst " + fmt("%.2f", z_pop) +
                " stderr vs pseudomode (cutoff " + std::to_string(o.boson_cutoff) + "), " + fmt("%.1f", wall) +
                " s"};
}

Outcome criterion4() {
    const RunConfig a = parse_config(spin_config(1.5, 0.3, 1, 1000, 10.0, 1000, "uniform", 404));
    const ObservableSeries coh = coherence_series(simulate(a, 0), 0, 3);
    // Largest trough depth: a drop into some interior point followed by a rise out of it.
    double trough = 0.0;
    const std::size_t n = coh.values.size();
    for (std::size_t i = 1; i + 1 < n; ++i) {
        double before = 0.0, after = 0.0;
        for (std::size_t h = 0; h < i; ++h) {
            before = std::max(before, (coh.values[h] - coh.values[i]) /
                                          std::hypot(coh.stderr_values[h], coh.stderr_values[i]));
        }
        for (std::size_t j = i + 1; j < n; ++j) {
            after = std::max(after, (coh.values[j] - coh.values[i]) /
                                        std::hypot(coh.stderr_values[j], coh.stderr_values[i]));
        }
        trough = std::max(trough, std::min(before, after));
    }
    const RunConfig b = parse_config(spin_config(1.5, 3.0, 1, 1000, 10.0, 1000, "uniform", 405));
    const EnsembleResult eb = simulate(b, 0);
    const std::size_t k = index_at_time(eb, 5.0);
    const double coh5 = std::abs(eb.rho[k](0, 3));
    const DensityMatrix r5 = eb.rho[k] / eb.rho[k].trace().real();
    EntropyWarnings w;
    const double s5 = von_neumann_entropy(r5, std::numbers::e, &w);
    // Diagnostic only: the same run with the untruncated O-operator.
    const EnsembleResult ex = simulate(parse_config(spin_config(1.5, 3.0, 2, 1000, 10.0, 1000, "uniform", 405)), 0);
    const double s5_exact = von_neumann_entropy(ex.rho[index_at_time(ex, 5.0)], std::numbers::e, &w);
    return {trough > 3.0 && coh5 < 0.02 && s5 < 0.05 * std::log(4.0),
            "(a) gamma 0.3 trough in |rho_14| of " + fmt("%.1f", trough) + " stderr; (b) gamma 3.0 at t=5: |rho_14| " +
                fmt("%.4f", coh5) + ", S " + fmt("%.4f", s5) + " (limit " + fmt("%.4f", 0.05 * std::log(4.0)) +
                "; order 2 gives S " + fmt("%.4f", s5_exact) + ")"};
}

Outcome criterion5() {
    const EnsembleResult& slow = four_level(0.3).ensemble;
    const EnsembleResult& fast = four_level(3.0).ensemble;
    auto peak = [](const EnsembleResult& r) {
        const ObservableSeries s = coherence_series(r, 1, 2);
        std::size_t best = 0;
        for (std::size_t k = 0; k < s.values.size(); ++k) {
            if (s.values[k] > s.values[best]) {
                best = k;
            }
        }
        return std::pair<double, double>{s.values[best], s.stderr_values[best]};
    };
    const auto [p_slow, se_slow] = peak(slow);
    const auto [p_fast, se_fast] = peak(fast);
    const double z_peak = (p_slow - p_fast) / std::hypot(se_slow, se_fast);
    const std::size_t ks = index_at_time(slow, 5.0), kf = index_at_time(fast, 5.0);
    const double g_slow = slow.rho[ks](0, 0).real(), g_fast = fast.rho[kf](0, 0).real();
    return {z_peak > 3.0 && g_fast > g_slow,
            "max |rho_23|: " + fmt("%.4f", p_slow) + " (gamma 0.3) vs " + fmt("%.4f", p_fast) + " (gamma 3.0), " +
                fmt("%.1f", z_peak) + " stderr apart; rho_11(t=5): " + fmt("%.4f", g_slow) + " vs " +
                fmt("%.4f", g_fast)};
}

double worst_residual(const ModelSpec& model, const TimeGrid& grid, int order) {
    const auto kernel = CorrelationKernel::exponential(1.0, 0.5);
    const int N = grid.n_steps();
    const std::vector<std::pair<int, int>> points = {{N / 2, N / 4}, {(3 * N) / 4, N / 3}, {(3 * N) / 4, N / 2}};
    CoefficientOptions opts;
    opts.convergence_probe = false;
    for (const auto& [n, s] : points) {
        for (int idx : residual_stencil(grid, n, s)) {
            opts.keep_lines.push_back(idx);
        }
    }
    const CoefficientTable table = integrate_coefficients(model, kernel, grid, order, opts);
    const NoiseRealization probe = smooth_probe_noise(grid);
    double worst = 0.0;
    for (const auto& [n, s] : points) {
        worst = std::max(worst, consistency_residual(model, table, table.layout(), kernel, probe, n, s).relative);
    }
    return worst;
}

Outcome criterion6() {
    Eigen::MatrixXcd kappa(2, 2);
    kappa << 0.3, 0.1, 0.2, 0.4;
    const double r_half = worst_residual(build_spin_model(0.5, 1.0), TimeGrid(3.0, 240), 0);
    const double r_multi =
        worst_residual(build_multi_transition({0.0, 0.3, 0.7, 1.2}, {0.5, 0.4, 0.6}), TimeGrid(3.0, 240), 0);
    const double r_band = worst_residual(build_band_model({0.0, 0.1, 1.0, 1.3}, kappa), TimeGrid(3.0, 240), 0);
    const double r_spin = worst_residual(build_spin_model(1.5, 1.0), TimeGrid(3.0, 96), 2);
    return {r_half < 1e-5 && r_multi < 1e-5 && r_band < 1e-5 && r_spin < 1e-4,
            "relative residuals: spin-1/2 " + fmt("%.2e", r_half) + ", multi_transition(4) " + fmt("%.2e", r_multi) +
                ", band(2+2) " + fmt("%.2e", r_band) + ", spin-3/2 order 2 " + fmt("%.2e", r_spin)};
}

Outcome criterion7() {
    const int table[7][9] = {
        {1, 0, 0, 0, 0, 0, 0, 0, 1},  {2, 1, 0, 0, 0, 0, 0, 0, 3},  {3, 2, 1, 0, 0, 0, 0, 0, 6},
        {4, 3, 2, 1, 0, 0, 0, 0, 10}, {5, 4, 3, 2, 1, 0, 0, 0, 15}, {6, 5, 4, 3, 2, 1, 0, 0, 21},
        {7, 6, 5, 4, 3, 2, 1, 0, 28},
    };
    int mismatches = 0;
    for (int two_l = 1; two_l <= 7; ++two_l) {
        const BasisLayout b = enumerate_basis(build_spin_model(0.5 * two_l, 1.0));
        for (int k = 0; k < 8; ++k) {
            const int got = k < static_cast<int>(b.count_per_order.size()) ? b.count_per_order[static_cast<std::size_t>(k)] : 0;
            mismatches += got != table[two_l - 1][k];
        }
        mismatches += b.size() != table[two_l - 1][8];
        mismatches += b.size() != two_l * (two_l + 1) / 2;
    }
    return {mismatches == 0, std::to_string(mismatches) + " mismatching entries over 2l = 1..7"};
}

Outcome criterion8() {
    const auto kernel = CorrelationKernel::exponential(1.0, 0.5);
    const CovarianceProbe p = covariance_probe(kernel, TimeGrid(10.0, 1000), 100000, 808, 10);
    return {p.worst_covariance < 4.0 && p.worst_pseudo < 4.0,
            "10^5 paths, 10x10 probe: covariance worst " + fmt("%.2f", p.worst_covariance) +
                " stderr, pseudo-covariance worst " + fmt("%.2f", p.worst_pseudo) + " stderr"};
}

Outcome criterion9() {
    const EnsembleResult lin =
        simulate(parse_config(spin_config(0.5, 0.5, 0, 2000, 10.0, 1000, "uniform", 901, "linear")), 0);
    const EnsembleResult nl =
        simulate(parse_config(spin_config(0.5, 0.5, 0, 2000, 10.0, 1000, "uniform", 902, "nonlinear")), 0);
    double worst = 0.0;
    for (std::size_t k = 0; k < lin.points(); ++k) {
        for (const auto& [i, j] : upper_triangle(2)) {
            const double diff = std::abs(lin.rho[k](i, j) - nl.rho[k](i, j));
            const double se = std::hypot(lin.stderr_entries[k](i, j), nl.stderr_entries[k](i, j));
            worst = std::max(worst, se > 1e-14 ? diff / se : (diff > 1e-9 ? INFINITY : 0.0));
        }
    }
    double norm_z = 0.0;
    for (std::size_t k = 0; k < lin.points(); ++k) {
        const double d = std::abs(lin.trace[k] - 1.0);
        norm_z = std::max(norm_z, lin.trace_stderr[k] > 0.0 ? d / lin.trace_stderr[k] : (d > 1e-12 ? INFINITY : 0.0));
    }
    return {worst < 3.0 && norm_z < 4.0,
            "linear vs nonlinear worst " + fmt("%.2f", worst) + " combined stderr; M[|psi|^2] - 1 worst " +
                fmt("%.2f", norm_z) + " stderr"};
}

std::map<std::string, std::string> csv_bytes(const std::vector<std::string>& files) {
    std::map<std::string, std::string> out;
    for (const auto& f : files) {
        std::ifstream in(f, std::ios::binary);
        std::ostringstream s;
        s << in.rdbuf();
        out[fs::path(f).filename().string()] = s.str();
    }
    return out;
}

Outcome criterion10() {
    RunConfig c = parse_config(spin_config(1.5, 0.3, 1, 1000, 10.0, 1000, "uniform", 404));
    std::map<int, std::map<std::string, std::string>> bytes;
    for (int workers : {1, 4}) {
        c.output.path = (scratch_dir() / ("workers" + std::to_string(workers))).string();
        bytes[workers] = csv_bytes(write_ensemble_csv(c, simulate(c, workers)));
    }
    const bool same = bytes[1] == bytes[4] && !bytes[1].empty();
    return {same, std::to_string(bytes[1].size()) + " CSV files " + (same ? "byte-identical" : "differ") +
                      " between 1 and 4 workers"};
}

} // namespace

int main(int argc, char** argv) {
    const std::vector<std::function<Outcome()>> criteria = {criterion1, criterion2, criterion3, criterion4,
                                                            criterion5, criterion6, criterion7, criterion8,
                                                            criterion9, criterion10};
    std::vector<int> selected;
    for (int i = 1; i < argc; ++i) {
        const int k = std::atoi(argv[i]);
        if (k < 1 || k > 10) {
            std::cerr << "criterion must be 1..10, got '" << argv[i] << "'\n";
            return 2;
        }
        selected.push_back(k);
    }
    if (selected.empty()) {
        for (int k = 1; k <= 10; ++k) {
            selected.push_back(k);
        }
    }
    int failed = 0;
    for (int k : selected) {
        const auto t0 = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = criteria[static_cast<std::size_t>(k - 1)]();
        } catch (const std::exception& e) {
            o = {false, std::string("error: ") + e.what()};
        }
        failed += !o.pass;
        std::cout << "criterion " << k << ": " << (o.pass ? "PASS" : "FAIL") << "  " << o.detail << "  ["
                  << fmt("%.1f", seconds_since(t0)) << " s]" << std::endl;
    }
    return failed == 0 ? 0 : 1;
}
