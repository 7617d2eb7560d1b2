#include "nmqsd/app.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <ostream>

#include <yaml-cpp/exceptions.h>

#include "nmqsd/coefficients.hpp"
#include "nmqsd/errors.hpp"

namespace nmqsd {

namespace {

constexpr const char* kModule = "cli";

// Order-1 and order-2 tables grow as n^3 and n^4; dumps use at most this many steps.
constexpr int kDumpCapOrder1 = 400;
constexpr int kDumpCapOrder2 = 80;

class CsvWriter {
public:
    CsvWriter(const std::string& path, int precision) : out_(path), precision_(precision) {
        if (!out_) {
            throw ValidationError(kModule, "cannot write '" + path + "'");
        }
    }

    void header(const std::vector<std::string>& names) {
        for (std::size_t i = 0; i < names.size(); ++i) {
            out_ << (i ? "," : "") << names[i];
        }
        out_ << '\n';
    }

    void row(const std::vector<double>& values) {
        char buf[64];
        for (std::size_t i = 0; i < values.size(); ++i) {
            std::snprintf(buf, sizeof buf, "%.*g", precision_, values[i]);
            out_ << (i ? "," : "") << buf;
        }
        out_ << '\n';
    }

private:
    std::ofstream out_;
    int precision_;
};

std::string label(int i, int j) {
    return std::to_string(i + 1) + "_" + std::to_string(j + 1);
}

std::vector<std::pair<int, int>> entries_to_write(const RunConfig& c, int dim) {
    std::vector<std::pair<int, int>> out;
    if (c.output.rho_entries.empty()) {
        for (int i = 0; i < dim; ++i) {
            for (int j = i + 1; j < dim; ++j) {
                out.emplace_back(i, j);
            }
        }
    } else {
        for (const auto& [i, j] : c.output.rho_entries) {
            out.emplace_back(i - 1, j - 1);
        }
    }
    return out;
}

bool wants(const RunConfig& c, const std::string& name) {
    const auto& o = c.output.observables;
    return o.empty() || std::find(o.begin(), o.end(), name) != o.end();
}

std::filesystem::path output_dir(const RunConfig& c) {
    std::filesystem::path p(c.output.path);
    std::filesystem::create_directories(p);
    return p;
}

// Shared writer: `rho(k)` and `se(k, i, j)` give the data at recorded point k.
template <typename RhoAt, typename SeAt, typename SeAbs, typename EntropySe>
std::vector<std::string> write_series(const RunConfig& c, std::size_t points, int dim,
                                      const std::vector<double>& times, RhoAt rho, SeAt se,
                                      SeAbs se_abs, EntropySe entropy_se,
                                      const std::vector<double>* norm, const std::vector<double>* norm_se,
                                      EntropyWarnings* warnings) {
    const auto dir = output_dir(c);
    const int prec = c.output.precision;
    std::vector<std::string> written;
    if (wants(c, "rho_entries")) {
        const auto entries = entries_to_write(c, dim);
        const std::string path = (dir / "rho_entries.csv").string();
        CsvWriter w(path, prec);
        std::vector<std::string> names{"t"};
        for (const auto& [i, j] : entries) {
            for (const char* p : {"re_rho_", "im_rho_", "abs_rho_", "se_re_rho_", "se_im_rho_", "se_abs_rho_"}) {
                names.push_back(p + label(i, j));
            }
        }
        w.header(names);
        for (std::size_t k = 0; k < points; ++k) {
            std::vector<double> row{times[k]};
            const DensityMatrix& r = rho(k);
            for (const auto& [i, j] : entries) {
                row.push_back(r(i, j).real());
                row.push_back(r(i, j).imag());
                row.push_back(std::abs(r(i, j)));
                const auto [sr, si] = se(k, i, j);
                row.push_back(sr);
                row.push_back(si);
                row.push_back(se_abs(k, i, j));
            }
            w.row(row);
        }
        written.push_back(path);
    }
    if (wants(c, "populations")) {
        const std::string path = (dir / "populations.csv").string();
        CsvWriter w(path, prec);
        std::vector<std::string> names{"t"};
        for (int i = 0; i < dim; ++i) {
            names.push_back("rho_" + label(i, i));
        }
        for (int i = 0; i < dim; ++i) {
            names.push_back("se_rho_" + label(i, i));
        }
        w.header(names);
        for (std::size_t k = 0; k < points; ++k) {
            std::vector<double> row{times[k]};
            for (int i = 0; i < dim; ++i) {
                row.push_back(rho(k)(i, i).real());
            }
            for (int i = 0; i < dim; ++i) {
                row.push_back(se(k, i, i).first);
            }
            w.row(row);
        }
        written.push_back(path);
    }
    if (wants(c, "entropy")) {
        const std::string path = (dir / "entropy.csv").string();
        CsvWriter w(path, prec);
        w.header({"t", "entropy", "se_entropy"});
        for (std::size_t k = 0; k < points; ++k) {
            const DensityMatrix r = rho(k) / rho(k).trace().real();
            w.row({times[k], von_neumann_entropy(r, c.output.log_base, warnings), entropy_se(k)});
        }
        written.push_back(path);
    }
    if (norm != nullptr && wants(c, "norm")) {
        const std::string path = (dir / "norm.csv").string();
        CsvWriter w(path, prec);
        w.header({"t", "norm", "se_norm"});
        for (std::size_t k = 0; k < points; ++k) {
            w.row({times[k], (*norm)[k], (*norm_se)[k]});
        }
        written.push_back(path);
    }
    return written;
}

std::shared_ptr<const CoefficientTable> build_table(const ModelSpec& model, const CorrelationKernel& kernel,
                                                    const TimeGrid& grid, int order) {
    CoefficientOptions opts;
    return std::make_shared<const CoefficientTable>(integrate_coefficients(model, kernel, grid, order, opts));
}

void dump_coefficients(const RunConfig& c, const ModelSpec& model, const CorrelationKernel& kernel,
                       int order, const std::string& path, std::ostream& out) {
    TimeGrid grid = c.grid;
    const int cap = order == 0 ? std::numeric_limits<int>::max() : (order == 1 ? kDumpCapOrder1 : kDumpCapOrder2);
    if (grid.n_steps() > cap) {
        grid = TimeGrid(c.grid.t_max(), cap);
        out << "coefficient dump uses " << cap << " steps (order " << order << " tables grow as n^"
            << order + 2 << ")\n";
    }
    CoefficientOptions opts;
    opts.convergence_probe = false;
    const int n_mid = (3 * grid.n_steps()) / 4;
    const int s_mid = grid.n_steps() / 4;
    opts.keep_lines = residual_stencil(grid, n_mid, s_mid);
    const CoefficientTable table = integrate_coefficients(model, kernel, grid, order, opts);
    const BasisLayout& layout = table.layout();
    const double unit = time_unit(c);

    CsvWriter w(path, c.output.precision);
    std::vector<std::string> names{"t"};
    std::vector<int> order0;
    for (int i = 0; i < layout.size(); ++i) {
        if (layout.ops[static_cast<std::size_t>(i)].order == 0) {
            order0.push_back(i);
            const auto& op = layout.ops[static_cast<std::size_t>(i)];
            names.push_back("re_F_" + label(op.row, op.col));
            names.push_back("im_F_" + label(op.row, op.col));
        }
    }
    if (order >= 1) {
        names.push_back("q1_max");
    }
    if (order >= 2) {
        names.push_back("q2_max");
    }
    w.header(names);
    for (int n = 0; n < grid.size(); ++n) {
        std::vector<double> row{grid.time(n) * unit};
        for (std::size_t j = 0; j < order0.size(); ++j) {
            const cd f = table.F(static_cast<int>(j), n);
            row.push_back(f.real());
            row.push_back(f.imag());
        }
        if (order >= 1) {
            double m = 0.0;
            for (int s1 = 0; s1 <= n; ++s1) {
                m = std::max(m, max_abs(table.q1(n, s1)));
            }
            row.push_back(m);
        }
        if (order >= 2) {
            double m = 0.0;
            for (int s1 = 0; s1 <= n; ++s1) {
                for (int s2 = 0; s2 <= s1; ++s2) {
                    m = std::max(m, max_abs(table.q2(n, s1, s2)));
                }
            }
            row.push_back(m);
        }
        w.row(row);
    }
    const NoiseRealization probe = smooth_probe_noise(grid);
    const ResidualReport rep = consistency_residual(model, table, layout, kernel, probe, n_mid, s_mid);
    out << "consistency residual at t=" << grid.time(n_mid) << ", s=" << grid.time(s_mid)
        << ": relative " << rep.relative << (rep.one_sided ? " (one-sided stencil)" : "") << '\n';
    if (model.label == "three_level_general" && order == model.noise_order_exact) {
        opts.printed_three_level = true;
        const CoefficientTable printed = integrate_coefficients(model, kernel, grid, order, opts);
        const ResidualReport rp =
            consistency_residual(model, printed, printed.layout(), kernel, probe, n_mid, s_mid);
        out << "printed-form coefficient equations: relative residual " << rp.relative << '\n';
    }
    out << "wrote " << path << '\n';
}

void progress_line(std::ostream* progress, int done, int total) {
    if (progress == nullptr) {
        return;
    }
    const int step = std::max(1, total / 10);
    static thread_local int last = -1;
    if (done == total || done / step != last) {
        last = done / step;
        *progress << "trajectories " << done << "/" << total << '\n';
    }
}

} // namespace

RunConfig resolve_config(const CliOptions& options) {
    if (options.config_path.empty()) {
        throw ValidationError(kModule, "--config is required");
    }
    RunConfig c = load_config(options.config_path);
    if (options.seed) {
        c.run.seed = *options.seed;
    }
    if (options.trajectories) {
        if (*options.trajectories < 1) {
            throw ValidationError(kModule, "--trajectories must be at least 1");
        }
        c.run.trajectories = *options.trajectories;
    }
    if (options.workers < 0) {
        throw ValidationError(kModule, "--workers must be non-negative");
    }
    return c;
}

EnsembleResult simulate(const RunConfig& c, int workers, std::ostream* progress) {
    const ModelSpec model = build_model(c.model);
    const CorrelationKernel kernel = build_kernel(c.kernel, c.base_dir);
    const int order = resolved_truncation_order(c, model);
    std::shared_ptr<const CoefficientTable> table;
    ObarMethod method = c.run.method;
    if (method == ObarMethod::automatic) {
        method = kernel.is_exponential() ? ObarMethod::recursion : ObarMethod::table;
    }
    if (method == ObarMethod::table) {
        table = build_table(model, kernel, c.grid, order);
    }
    const Simulator sim(model, kernel, c.grid, order, method, table);
    const StateVector psi0 = build_initial_state(c.run, model);
    EnsembleOptions eo;
    eo.trajectories = c.run.trajectories;
    eo.seed = c.run.seed;
    eo.workers = workers;
    eo.record_every = c.run.record_every;
    const int total = c.run.trajectories;
    if (progress != nullptr) {
        eo.progress = [progress, total](int done) { progress_line(progress, done, total); };
    }
    EnsembleResult r = run_ensemble(sim, psi0, c.run.mode, eo);
    r.config_digest = config_digest(c);
    return r;
}

MasterEquationRun reference(const RunConfig& c, const std::string& oracle_name_in) {
    const std::string name = oracle_name_in.empty() ? c.compare.oracle : oracle_name_in;
    if (name.empty()) {
        throw ValidationError(kModule, "no oracle given (use --oracle or compare.oracle)");
    }
    const OracleMethod method = parse_oracle(name);
    const ModelSpec model = build_model(c.model);
    const CorrelationKernel kernel = build_kernel(c.kernel, c.base_dir);
    const DensityMatrix rho0 = projector(build_initial_state(c.run, model));
    switch (method) {
    case OracleMethod::lindblad:
        return solve_lindblad(model, kernel.Gamma(), rho0, c.grid, c.run.record_every);
    case OracleMethod::convolutionless: {
        if (model.noise_order_exact != 0) {
            throw ValidationError(kModule, "oracle convolutionless is not applicable to " + model.label +
                                               ": no noise-free master equation; use the QSD ensemble");
        }
        CoefficientOptions opts;
        const CoefficientTable table = integrate_coefficients(model, kernel, c.grid, 0, opts);
        return solve_convolutionless(model, table, table.layout(), rho0, c.grid, c.run.record_every);
    }
    case OracleMethod::pseudomode: {
        if (!kernel.is_exponential()) {
            throw ValidationError(kModule, "oracle pseudomode needs an exponential kernel");
        }
        const int cutoff = c.compare.boson_cutoff > 0 ? c.compare.boson_cutoff : default_boson_cutoff(model);
        return solve_pseudomode(model, kernel, cutoff, rho0, c.grid, c.run.record_every);
    }
    }
    throw ValidationError(kModule, "unknown oracle");
}

std::vector<std::string> write_ensemble_csv(const RunConfig& c, const EnsembleResult& r,
                                            EntropyWarnings* warnings) {
    const double unit = time_unit(c);
    std::vector<double> times;
    for (std::size_t k = 0; k < r.points(); ++k) {
        times.push_back(r.time(k) * unit);
    }
    const int dim = static_cast<int>(r.rho.front().rows());
    const double n = r.n_trajectories;
    const ObservableSeries entropy = wants(c, "entropy") ? entropy_series(r, c.output.log_base)
                                                         : ObservableSeries{};
    auto rho = [&](std::size_t k) -> const DensityMatrix& { return r.rho[k]; };
    auto se = [&](std::size_t k, int i, int j) {
        return std::pair<double, double>{std::sqrt(r.var_re[k](i, j) / n), std::sqrt(r.var_im[k](i, j) / n)};
    };
    auto se_abs = [&](std::size_t k, int i, int j) {
        // Delta method, as in coherence_series.
        const cd v = r.rho[k](i, j);
        const double a = std::abs(v);
        double var = r.var_re[k](i, j) + r.var_im[k](i, j);
        if (a > 0.0) {
            const double cov = i <= j ? r.cov_re_im[k](i, j) : -r.cov_re_im[k](i, j);
            var = (v.real() * v.real() * r.var_re[k](i, j) + v.imag() * v.imag() * r.var_im[k](i, j) +
                   2.0 * v.real() * v.imag() * cov) /
                  (a * a);
        }
        return std::sqrt(std::max(var, 0.0) / n);
    };
    auto entropy_se = [&](std::size_t k) { return entropy.stderr_values.empty() ? 0.0 : entropy.stderr_values[k]; };
    const bool linear = r.mode == Mode::linear;
    return write_series(c, r.points(), dim, times, rho, se, se_abs, entropy_se, linear ? &r.trace : nullptr,
                        linear ? &r.trace_stderr : nullptr, warnings);
}

std::vector<std::string> write_reference_csv(const RunConfig& c, const MasterEquationRun& run) {
    const double unit = time_unit(c);
    std::vector<double> times;
    for (std::size_t k = 0; k < run.points(); ++k) {
        times.push_back(run.time(k) * unit);
    }
    const int dim = static_cast<int>(run.rho.front().rows());
    auto rho = [&](std::size_t k) -> const DensityMatrix& { return run.rho[k]; };
    auto se = [](std::size_t, int, int) { return std::pair<double, double>{0.0, 0.0}; };
    auto se_abs = [](std::size_t, int, int) { return 0.0; };
    auto entropy_se = [](std::size_t) { return 0.0; };
    return write_series(c, run.points(), dim, times, rho, se, se_abs, entropy_se, nullptr, nullptr, nullptr);
}

std::vector<EntryDeviation> compare_runs(const EnsembleResult& e, const MasterEquationRun& o) {
    if (e.indices != o.indices || !(e.grid == o.grid)) {
        throw ValidationError(kModule, "ensemble and oracle are recorded on different grids");
    }
    const int dim = static_cast<int>(e.rho.front().rows());
    std::vector<EntryDeviation> out;
    for (int i = 0; i < dim; ++i) {
        for (int j = i; j < dim; ++j) {
            EntryDeviation d{i, j, 0.0, 0.0};
            for (std::size_t k = 0; k < e.points(); ++k) {
                const double diff = std::abs(e.rho[k](i, j) - o.rho[k](i, j));
                const double se = e.stderr_entries[k](i, j);
                double z = 0.0;
                if (se > 1e-14) {
                    z = diff / se;
                } else if (diff > 1e-9) {
                    z = std::numeric_limits<double>::infinity();
                }
                if (z > d.max_sigma) {
                    d.max_sigma = z;
                    d.at_time = e.time(k);
                }
            }
            out.push_back(d);
        }
    }
    return out;
}

int report_error(std::ostream& err) {
    try {
        throw;
    } catch (const ValidationError& e) {
        err << "error [" << e.module() << "]: " << e.what() << '\n';
        return kExitValidation;
    } catch (const NumericError& e) {
        err << "error [" << e.module() << "]: " << e.what() << '\n';
        return kExitNumeric;
    } catch (const YAML::Exception& e) {
        err << "error [cli]: " << e.what() << '\n';
        return kExitValidation;
    } catch (const std::filesystem::filesystem_error& e) {
        err << "error [cli]: " << e.what() << '\n';
        return kExitValidation;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return kExitNumeric;
    }
}

int run_simulate(const CliOptions& options, std::ostream& out, std::ostream& err) {
    try {
        const RunConfig c = resolve_config(options);
        const ModelSpec model = build_model(c.model);
        const int order = resolved_truncation_order(c, model);
        if (options.dry_run) {
            out << "plan: " << model.label << " (" << model.dim << " levels), kernel " << c.kernel.kind
                << ", truncation order " << order << " of " << model.noise_order_exact << '\n'
                << "grid: t_max=" << c.grid.t_max() << " n_steps=" << c.grid.n_steps()
                << " dt=" << c.grid.dt() << " record_every=" << c.run.record_every << '\n'
                << "run: " << (c.run.mode == Mode::linear ? "linear" : "nonlinear") << ", "
                << c.run.trajectories << " trajectories, seed " << c.run.seed << '\n'
                << "output: " << c.output.path << " (dry run, nothing written)\n"
                << "config digest " << config_digest(c) << '\n';
            return kExitOk;
        }
        if (!options.dump_coefficients.empty()) {
            const CorrelationKernel kernel = build_kernel(c.kernel, c.base_dir);
            dump_coefficients(c, model, kernel, order, options.dump_coefficients, out);
        }
        const auto start = std::chrono::steady_clock::now();
        const EnsembleResult r = simulate(c, options.workers, options.progress ? &err : nullptr);
        const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        EntropyWarnings warnings;
        const auto files = write_ensemble_csv(c, r, &warnings);
        double max_se = 0.0;
        for (const auto& se : r.stderr_entries) {
            max_se = std::max(max_se, se.maxCoeff());
        }
        out << "simulated " << r.n_trajectories << " trajectories in " << wall << " s ("
            << r.n_trajectories / std::max(wall, 1e-9) << " trajectories/s), max stderr " << max_se << '\n'
            << "config digest " << r.config_digest << '\n';
        if (warnings.clamped > 0) {
            err << "warning: " << warnings.clamped << " small negative eigenvalues clamped in the entropy\n";
        }
        for (const auto& f : files) {
            out << "wrote " << f << '\n';
        }
        return kExitOk;
    } catch (...) {
        return report_error(err);
    }
}

int run_reference(const CliOptions& options, std::ostream& out, std::ostream& err) {
    try {
        const RunConfig c = resolve_config(options);
        const std::string name = options.oracle.empty() ? c.compare.oracle : options.oracle;
        if (options.dry_run) {
            out << "plan: oracle " << (name.empty() ? "(none)" : name) << " on " << c.model.family
                << ", grid n_steps=" << c.grid.n_steps() << " (dry run, nothing written)\n";
            parse_oracle(name);
            return kExitOk;
        }
        const auto start = std::chrono::steady_clock::now();
        const MasterEquationRun run = reference(c, name);
        const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        const auto files = write_reference_csv(c, run);
        out << "oracle " << oracle_name(run.method) << " finished in " << wall << " s, max trace drift "
            << run.max_trace_drift << ", min eigenvalue " << run.min_eigenvalue << '\n';
        for (const auto& f : files) {
            out << "wrote " << f << '\n';
        }
        return kExitOk;
    } catch (...) {
        return report_error(err);
    }
}

int run_compare(const CliOptions& options, std::ostream& out, std::ostream& err) {
    try {
        const RunConfig c = resolve_config(options);
        const std::string name = options.oracle.empty() ? c.compare.oracle : options.oracle;
        parse_oracle(name);
        if (options.dry_run) {
            out << "plan: compare " << c.run.trajectories << " trajectories against " << name
                << " (dry run, nothing written)\n";
            return kExitOk;
        }
        const MasterEquationRun oracle = reference(c, name);
        const EnsembleResult r = simulate(c, options.workers, options.progress ? &err : nullptr);
        const auto devs = compare_runs(r, oracle);
        const auto dir = output_dir(c);
        const std::string path = (dir / "compare.csv").string();
        CsvWriter w(path, c.output.precision);
        w.header({"i", "j", "max_sigma", "t"});
        bool pass = true;
        double worst = 0.0;
        const double unit = time_unit(c);
        for (const auto& d : devs) {
            w.row({static_cast<double>(d.i + 1), static_cast<double>(d.j + 1), d.max_sigma, d.at_time * unit});
            out << "rho_" << d.i + 1 << "_" << d.j + 1 << ": max deviation " << d.max_sigma << " stderr at t="
                << d.at_time * unit << '\n';
            worst = std::max(worst, d.max_sigma);
            pass = pass && d.max_sigma < c.compare.threshold;
        }
        out << (pass ? "PASS" : "FAIL") << ": worst deviation " << worst << " stderr (threshold "
            << c.compare.threshold << ") against " << name << '\n'
            << "wrote " << path << '\n';
        return pass ? kExitOk : kExitComparison;
    } catch (...) {
        return report_error(err);
    }
}

int run_noise_check(const CliOptions& options, std::ostream& out, std::ostream& err) {
    try {
        const RunConfig c = resolve_config(options);
        const CorrelationKernel kernel = build_kernel(c.kernel, c.base_dir);
        const int n = c.run.trajectories;
        if (options.dry_run) {
            out << "plan: " << n << " noise realizations on " << c.grid.size() << " grid points (dry run)\n";
            return kExitOk;
        }
        const CovarianceProbe probe = covariance_probe(kernel, c.grid, n, c.run.seed);
        const auto dir = output_dir(c);
        const std::string file = (dir / "noise_check.csv").string();
        CsvWriter w(file, c.output.precision);
        w.header({"t", "s", "re_cov", "im_cov", "re_alpha", "im_alpha", "se_re_cov", "se_im_cov", "re_pseudo",
                  "im_pseudo", "se_re_pseudo", "se_im_pseudo"});
        const double unit = time_unit(c);
        const std::size_t p = probe.indices.size();
        for (std::size_t q = 0; q < probe.covariance.size(); ++q) {
            const double t = c.grid.time(probe.indices[q / p]) * unit;
            const double s = c.grid.time(probe.indices[q % p]) * unit;
            w.row({t, s, probe.covariance[q].real(), probe.covariance[q].imag(), probe.exact[q].real(),
                   probe.exact[q].imag(), probe.se_cov_re[q], probe.se_cov_im[q], probe.pseudo[q].real(),
                   probe.pseudo[q].imag(), probe.se_pseudo_re[q], probe.se_pseudo_im[q]});
        }
        const double worst = std::max(probe.worst_covariance, probe.worst_pseudo);
        const bool pass = worst < 4.0;
        out << (pass ? "PASS" : "FAIL") << ": " << n << " realizations, worst covariance deviation " << worst
            << " stderr on a 10x10 probe grid (covariance " << probe.worst_covariance
            << ", pseudo-covariance " << probe.worst_pseudo << ")\nwrote " << file << '\n';
        return pass ? kExitOk : kExitComparison;
    } catch (...) {
        return report_error(err);
    }
}

int run_list_models(std::ostream& out) {
    for (const auto& [name, text] : model_catalog()) {
        out << name << "  " << text << '\n';
    }
    return kExitOk;
}

} // namespace nmqsd
