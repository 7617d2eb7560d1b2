#include "nmqsd/config.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include <yaml-cpp/yaml.h>

#include "nmqsd/errors.hpp"

namespace nmqsd {

namespace {

constexpr const char* kModule = "cli";

[[noreturn]] void bad(const std::string& key, const std::string& what) {
    throw ValidationError(kModule, key + ": " + what);
}

// Reads one mapping, remembering which keys were consumed so the rest can be
// rejected, and collecting missing required keys for a single report.
class Section {
public:
    Section(const YAML::Node& node, std::string prefix, std::vector<std::string>& missing)
        : node_(node), prefix_(std::move(prefix)), missing_(missing) {
        if (node_ && !node_.IsNull() && !node_.IsMap()) {
            bad(prefix_, "expected a mapping");
        }
    }

    bool present() const { return node_ && node_.IsMap(); }

    bool has(const std::string& key) {
        allowed_.insert(key);
        return present() && node_[key] && !node_[key].IsNull();
    }

    YAML::Node get(const std::string& key) {
        allowed_.insert(key);
        if (!has(key)) {
            missing_.push_back(name(key));
            return YAML::Node(YAML::NodeType::Undefined);
        }
        return node_[key];
    }

    std::string name(const std::string& key) const { return prefix_ + "." + key; }

    template <typename T>
    T required(const std::string& key, T fallback) {
        const YAML::Node n = get(key);
        return n ? as<T>(n, name(key)) : fallback;
    }

    template <typename T>
    T optional(const std::string& key, T fallback) {
        return has(key) ? as<T>(node_[key], name(key)) : fallback;
    }

    void allow(const std::string& key) { allowed_.insert(key); }

    void reject_unknown() const {
        if (!present()) {
            return;
        }
        for (const auto& kv : node_) {
            const std::string key = kv.first.as<std::string>();
            if (!allowed_.count(key)) {
                std::string list;
                for (const std::string& a : allowed_) {
                    list += (list.empty() ? "" : ", ") + a;
                }
                bad(name(key), "unknown key (allowed: " + list + ")");
            }
        }
    }

    template <typename T>
    static T as(const YAML::Node& n, const std::string& key) {
        if (!n.IsScalar()) {
            bad(key, "expected a scalar");
        }
        try {
            return n.as<T>();
        } catch (const YAML::Exception&) {
            bad(key, "cannot read '" + n.Scalar() + "' as the expected type");
        }
    }

private:
    YAML::Node node_;
    std::string prefix_;
    std::vector<std::string>& missing_;
    std::set<std::string> allowed_;
};

cd as_complex(const YAML::Node& n, const std::string& key) {
    if (n.IsScalar()) {
        return {Section::as<double>(n, key), 0.0};
    }
    if (n.IsSequence() && n.size() == 2) {
        return {Section::as<double>(n[0], key + "[0]"), Section::as<double>(n[1], key + "[1]")};
    }
    bad(key, "expected a number or a [re, im] pair");
}

std::vector<double> real_list(const YAML::Node& n, const std::string& key) {
    if (!n.IsSequence()) {
        bad(key, "expected a list of numbers");
    }
    std::vector<double> out;
    for (std::size_t i = 0; i < n.size(); ++i) {
        out.push_back(Section::as<double>(n[i], key + "[" + std::to_string(i) + "]"));
    }
    return out;
}

std::vector<cd> complex_list(const YAML::Node& n, const std::string& key) {
    if (!n.IsSequence()) {
        bad(key, "expected a list");
    }
    std::vector<cd> out;
    for (std::size_t i = 0; i < n.size(); ++i) {
        out.push_back(as_complex(n[i], key + "[" + std::to_string(i) + "]"));
    }
    return out;
}

const std::vector<std::pair<std::string, std::string>>& catalog() {
    static const std::vector<std::pair<std::string, std::string>> list = {
        {"spin_l", "H = omega J_z, L = J_- for spin l (keys: l, omega)"},
        {"spin_3half", "spin_l with l = 3/2 (keys: omega)"},
        {"spin_general", "H = sum C_m |m><m|, L = sum G_n |n-1><n| (keys: C, G)"},
        {"spin_3half_general", "spin_general with four levels (keys: C, G)"},
        {"three_level_general", "three-level ladder (keys: omegas[3], kappas[2])"},
        {"driven_four_level",
         "four-level atom, decay |1><j|, drives on (2,3) and (3,4) (keys: omegas[4], kappas[3], drives)"},
        {"multi_transition", "N levels decaying from the top level (keys: omegas[N], kappas[N-1])"},
        {"band_model", "lower and upper bands, L = sum kappa |j><M+k| (keys: omegas, lower_levels, kappa)"},
    };
    return list;
}

ModelConfig parse_model(const YAML::Node& node, std::vector<std::string>& missing) {
    Section s(node, "model", missing);
    ModelConfig m;
    if (!s.present()) {
        missing.push_back("model");
        return m;
    }
    m.family = s.required<std::string>("family", "");
    const std::string& f = m.family;
    if (f.empty()) {
        return m;
    }
    const bool known = std::any_of(catalog().begin(), catalog().end(),
                                   [&](const auto& e) { return e.first == f; });
    if (!known) {
        bad("model.family", "unknown family '" + f + "' (see list-models)");
    }
    if (f == "spin_l") {
        m.l = s.required<double>("l", 0.5);
        m.omega = s.required<double>("omega", 1.0);
    } else if (f == "spin_3half") {
        m.l = 1.5;
        m.omega = s.required<double>("omega", 1.0);
    } else if (f == "spin_general" || f == "spin_3half_general") {
        if (YAML::Node n = s.get("C")) {
            m.C = real_list(n, "model.C");
        }
        if (YAML::Node n = s.get("G")) {
            m.G = complex_list(n, "model.G");
        }
    } else {
        if (YAML::Node n = s.get("omegas")) {
            m.omegas = real_list(n, "model.omegas");
        }
        if (f == "band_model") {
            m.lower_levels = s.required<int>("lower_levels", 0);
            if (YAML::Node n = s.get("kappa")) {
                if (!n.IsSequence()) {
                    bad("model.kappa", "expected a list of rows");
                }
                for (std::size_t r = 0; r < n.size(); ++r) {
                    m.kappa_matrix.push_back(complex_list(n[r], "model.kappa[" + std::to_string(r) + "]"));
                }
            }
        } else if (YAML::Node n = s.get("kappas")) {
            m.kappas = complex_list(n, "model.kappas");
        }
        if (f == "driven_four_level") {
            if (YAML::Node n = s.get("drives")) {
                if (!n.IsSequence()) {
                    bad("model.drives", "expected a list of drives");
                }
                for (std::size_t i = 0; i < n.size(); ++i) {
                    std::vector<std::string> inner_missing;
                    const std::string key = "model.drives[" + std::to_string(i) + "]";
                    Section d(n[i], key, inner_missing);
                    DriveConfig dc;
                    if (YAML::Node lv = d.get("levels")) {
                        const std::vector<double> lv_values = real_list(lv, key + ".levels");
                        if (lv_values.size() != 2) {
                            bad(key + ".levels", "expected two level labels");
                        }
                        dc.ket = static_cast<int>(lv_values[0]);
                        dc.bra = static_cast<int>(lv_values[1]);
                    }
                    if (YAML::Node a = d.get("amplitude")) {
                        dc.amplitude = as_complex(a, key + ".amplitude");
                    }
                    dc.frequency = d.required<double>("frequency", 0.0);
                    d.reject_unknown();
                    missing.insert(missing.end(), inner_missing.begin(), inner_missing.end());
                    m.drives.push_back(dc);
                }
            }
        }
    }
    s.reject_unknown();
    return m;
}

KernelConfig parse_kernel(const YAML::Node& node, std::vector<std::string>& missing) {
    Section s(node, "kernel", missing);
    KernelConfig k;
    if (!s.present()) {
        missing.push_back("kernel");
        return k;
    }
    k.kind = s.optional<std::string>("type", "exponential");
    if (k.kind == "exponential") {
        k.Gamma = s.required<double>("Gamma", 1.0);
        k.gamma = s.required<double>("gamma", 1.0);
    } else if (k.kind == "tabulated") {
        k.lag_step = s.required<double>("lag_step", 0.0);
        if (s.has("values")) {
            k.values = complex_list(s.get("values"), "kernel.values");
        } else {
            k.table_path = s.required<std::string>("table_path", "");
        }
        s.allow("values");
        k.Gamma = s.optional<double>("Gamma", 1.0);
    } else {
        bad("kernel.type", "expected exponential or tabulated");
    }
    s.reject_unknown();
    return k;
}

} // namespace

RunConfig parse_config(const std::string& text, const std::string& base_dir) {
    YAML::Node root;
    try {
        root = YAML::Load(text);
    } catch (const YAML::Exception& e) {
        throw ValidationError(kModule, std::string("malformed config: ") + e.what());
    }
    if (root && !root.IsNull() && !root.IsMap()) {
        throw ValidationError(kModule, "config must be a mapping of sections");
    }
    std::vector<std::string> missing;
    RunConfig c;
    c.base_dir = base_dir;
    static const std::set<std::string> sections = {"model", "kernel", "grid", "run", "output", "compare"};
    if (root && root.IsMap()) {
        for (const auto& kv : root) {
            const std::string key = kv.first.as<std::string>();
            if (!sections.count(key)) {
                bad(key, "unknown section (allowed: compare, grid, kernel, model, output, run)");
            }
        }
    }
    const YAML::Node empty;
    auto section = [&](const char* name) { return root && root.IsMap() ? root[name] : empty; };

    c.model = parse_model(section("model"), missing);
    c.kernel = parse_kernel(section("kernel"), missing);

    {
        Section g(section("grid"), "grid", missing);
        if (!g.present()) {
            missing.push_back("grid");
        } else {
            const double t_max = g.required<double>("t_max", 1.0);
            const int n_steps = g.required<int>("n_steps", 10);
            g.reject_unknown();
            if (!(t_max > 0.0) || !std::isfinite(t_max)) {
                bad("grid.t_max", "must be positive");
            }
            if (n_steps < 10) {
                bad("grid.n_steps", "must be at least 10");
            }
            c.grid = TimeGrid(t_max, n_steps);
        }
    }
    {
        Section r(section("run"), "run", missing);
        if (!r.present()) {
            missing.push_back("run");
        } else {
            const std::string mode = r.optional<std::string>("mode", "nonlinear");
            if (mode == "linear") {
                c.run.mode = Mode::linear;
            } else if (mode == "nonlinear") {
                c.run.mode = Mode::nonlinear;
            } else {
                bad("run.mode", "expected linear or nonlinear");
            }
            c.run.trajectories = r.required<int>("trajectories", 1);
            const long long seed = r.required<long long>("seed", 0);
            if (seed < 0) {
                bad("run.seed", "must be non-negative");
            }
            c.run.seed = static_cast<std::uint64_t>(seed);
            c.run.truncation_order = r.optional<int>("truncation_order", -1);
            c.run.record_every = r.optional<int>("record_every", 1);
            if (r.has("initial_state")) {
                const YAML::Node n = r.get("initial_state");
                if (n.IsSequence()) {
                    c.run.initial_state = "amplitudes";
                    c.run.initial_amplitudes = complex_list(n, "run.initial_state");
                } else {
                    c.run.initial_state = Section::as<std::string>(n, "run.initial_state");
                }
            }
            const std::string method = r.optional<std::string>("method", "auto");
            if (method == "auto") {
                c.run.method = ObarMethod::automatic;
            } else if (method == "recursion") {
                c.run.method = ObarMethod::recursion;
            } else if (method == "table") {
                c.run.method = ObarMethod::table;
            } else {
                bad("run.method", "expected auto, recursion or table");
            }
            r.reject_unknown();
            if (c.run.trajectories < 1) {
                bad("run.trajectories", "must be at least 1");
            }
            if (c.run.record_every < 1) {
                bad("run.record_every", "must be at least 1");
            }
        }
    }
    {
        Section o(section("output"), "output", missing);
        if (o.present()) {
            c.output.path = o.optional<std::string>("path", "output");
            if (o.has("observables")) {
                const YAML::Node n = o.get("observables");
                if (!n.IsSequence()) {
                    bad("output.observables", "expected a list");
                }
                static const std::set<std::string> names = {"rho_entries", "populations", "entropy", "norm"};
                for (std::size_t i = 0; i < n.size(); ++i) {
                    const std::string v = Section::as<std::string>(n[i], "output.observables");
                    if (!names.count(v)) {
                        bad("output.observables", "unknown observable '" + v +
                                                      "' (allowed: entropy, norm, populations, rho_entries)");
                    }
                    c.output.observables.push_back(v);
                }
            }
            if (o.has("rho_entries")) {
                const YAML::Node n = o.get("rho_entries");
                if (!n.IsSequence()) {
                    bad("output.rho_entries", "expected a list of [i, j] pairs");
                }
                for (std::size_t i = 0; i < n.size(); ++i) {
                    const std::vector<double> p = real_list(n[i], "output.rho_entries");
                    if (p.size() != 2) {
                        bad("output.rho_entries", "expected [i, j] pairs");
                    }
                    c.output.rho_entries.emplace_back(static_cast<int>(p[0]), static_cast<int>(p[1]));
                }
            }
            if (o.has("log_base")) {
                const std::string b = o.optional<std::string>("log_base", "e");
                if (b == "e") {
                    c.output.log_base = std::numbers::e;
                } else if (b == "2") {
                    c.output.log_base = 2.0;
                } else {
                    bad("output.log_base", "expected e or 2");
                }
            }
            c.output.precision = o.optional<int>("precision", 17);
            o.reject_unknown();
            if (c.output.precision < 1 || c.output.precision > 17) {
                bad("output.precision", "must be between 1 and 17");
            }
        }
    }
    {
        Section k(section("compare"), "compare", missing);
        if (k.present()) {
            c.compare.oracle = k.optional<std::string>("oracle", "");
            c.compare.threshold = k.optional<double>("threshold", 4.0);
            c.compare.boson_cutoff = k.optional<int>("boson_cutoff", 0);
            k.reject_unknown();
            if (!(c.compare.threshold > 0.0)) {
                bad("compare.threshold", "must be positive");
            }
            if (c.compare.boson_cutoff != 0 && c.compare.boson_cutoff < 2) {
                bad("compare.boson_cutoff", "must be at least 2");
            }
        }
    }

    if (!missing.empty()) {
        std::string list;
        for (const std::string& m : missing) {
            list += (list.empty() ? "" : ", ") + m;
        }
        throw ValidationError(kModule, "missing required keys: " + list);
    }

    // Physics checks that need the built objects.
    const ModelSpec model = build_model(c.model);
    build_kernel(c.kernel, c.base_dir);
    const int order = resolved_truncation_order(c, model);
    if (order < 0 || order > model.noise_order_exact) {
        bad("run.truncation_order", "must be between 0 and " + std::to_string(model.noise_order_exact) +
                                        " for " + c.model.family);
    }
    if (order > 2) {
        bad("run.truncation_order", "orders above 2 are not implemented");
    }
    build_initial_state(c.run, model);
    for (const auto& [i, j] : c.output.rho_entries) {
        if (i < 1 || j < 1 || i > model.dim || j > model.dim) {
            bad("output.rho_entries", "entry (" + std::to_string(i) + "," + std::to_string(j) +
                                          ") outside 1.." + std::to_string(model.dim));
        }
    }
    if (!c.compare.oracle.empty()) {
        if (c.compare.oracle != "lindblad" && c.compare.oracle != "convolutionless" &&
            c.compare.oracle != "pseudomode") {
            bad("compare.oracle", "expected lindblad, convolutionless or pseudomode");
        }
    }
    return c;
}

RunConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw ValidationError(kModule, "cannot read config file '" + path + "'");
    }
    std::stringstream buf;
    buf << in.rdbuf();
    const std::filesystem::path p(path);
    const std::string dir = p.has_parent_path() ? p.parent_path().string() : ".";
    return parse_config(buf.str(), dir);
}

ModelSpec build_model(const ModelConfig& m) {
    const std::string& f = m.family;
    try {
        if (f == "spin_l" || f == "spin_3half") {
            if (!(m.l > 0.0) || std::abs(2.0 * m.l - std::round(2.0 * m.l)) > 1e-12) {
                bad("model.l", "must be a positive multiple of 1/2");
            }
            return build_spin_model(m.l, m.omega);
        }
        if (f == "spin_general" || f == "spin_3half_general") {
            if (f == "spin_3half_general" && m.C.size() != 4) {
                bad("model.C", "spin_3half_general needs four entries");
            }
            ModelSpec spec = build_spin_general(m.C, m.G);
            if (f == "spin_3half_general") {
                spec.label = "spin_3half_general";
            }
            return spec;
        }
        if (f == "three_level_general") {
            return build_three_level(m.omegas, m.kappas);
        }
        if (f == "driven_four_level") {
            if (m.drives.size() != 2) {
                bad("model.drives", "driven_four_level needs exactly two drives");
            }
            DriveTerm d[2];
            for (int i = 0; i < 2; ++i) {
                d[i].ket_level = m.drives[static_cast<std::size_t>(i)].ket - 1;
                d[i].bra_level = m.drives[static_cast<std::size_t>(i)].bra - 1;
                d[i].amplitude = m.drives[static_cast<std::size_t>(i)].amplitude;
                d[i].frequency = m.drives[static_cast<std::size_t>(i)].frequency;
            }
            return build_driven_four_level(m.omegas, m.kappas, d[0], d[1]);
        }
        if (f == "multi_transition") {
            return build_multi_transition(m.omegas, m.kappas);
        }
        if (f == "band_model") {
            const int lower = m.lower_levels;
            const int upper = static_cast<int>(m.omegas.size()) - lower;
            if (lower < 1 || upper < 1) {
                bad("model.lower_levels", "both bands need at least one level");
            }
            if (static_cast<int>(m.kappa_matrix.size()) != lower) {
                bad("model.kappa", "needs one row per lower level");
            }
            ComplexMatrix k(lower, upper);
            for (int r = 0; r < lower; ++r) {
                const auto& row = m.kappa_matrix[static_cast<std::size_t>(r)];
                if (static_cast<int>(row.size()) != upper) {
                    bad("model.kappa", "each row needs one entry per upper level");
                }
                for (int col = 0; col < upper; ++col) {
                    k(r, col) = row[static_cast<std::size_t>(col)];
                }
            }
            return build_band_model(m.omegas, k);
        }
    } catch (const ValidationError& e) {
        if (e.module() == kModule) {
            throw;
        }
        throw ValidationError(kModule, "model: " + std::string(e.what()));
    }
    bad("model.family", "unknown family '" + f + "'");
}

CorrelationKernel build_kernel(const KernelConfig& k, const std::string& base_dir) {
    if (k.kind == "exponential") {
        if (!(k.Gamma >= 0.0)) {
            bad("kernel.Gamma", "must be non-negative");
        }
        if (!(k.gamma > 0.0)) {
            bad("kernel.gamma", "must be positive");
        }
        return CorrelationKernel::exponential(k.Gamma, k.gamma);
    }
    std::vector<cd> values = k.values;
    if (values.empty()) {
        std::filesystem::path p(k.table_path);
        if (p.is_relative()) {
            p = std::filesystem::path(base_dir) / p;
        }
        std::ifstream in(p);
        if (!in) {
            bad("kernel.table_path", "cannot read '" + p.string() + "'");
        }
        std::string line;
        while (std::getline(in, line)) {
            if (line.empty() || line[0] == '#') {
                continue;
            }
            std::replace(line.begin(), line.end(), ',', ' ');
            std::istringstream ls(line);
            double re = 0.0;
            double im = 0.0;
            if (!(ls >> re)) {
                continue;  // header row
            }
            ls >> im;
            values.emplace_back(re, im);
        }
    }
    if (!(k.lag_step > 0.0)) {
        bad("kernel.lag_step", "must be positive");
    }
    try {
        return CorrelationKernel::tabulated(k.lag_step, values);
    } catch (const ValidationError& e) {
        throw ValidationError(kModule, "kernel: " + std::string(e.what()));
    }
}

StateVector build_initial_state(const RunSection& run, const ModelSpec& model) {
    const int d = model.dim;
    StateVector psi = StateVector::Zero(d);
    const std::string& s = run.initial_state;
    if (s == "amplitudes") {
        if (static_cast<int>(run.initial_amplitudes.size()) != d) {
            bad("run.initial_state", "needs " + std::to_string(d) + " amplitudes");
        }
        for (int i = 0; i < d; ++i) {
            psi[i] = run.initial_amplitudes[static_cast<std::size_t>(i)];
        }
    } else if (s == "uniform") {
        psi.setConstant(1.0);
    } else if (s == "ground") {
        psi[0] = 1.0;
    } else if (s == "top") {
        psi[d - 1] = 1.0;
    } else {
        int level = 0;
        try {
            std::size_t used = 0;
            level = std::stoi(s, &used);
            if (used != s.size()) {
                throw std::invalid_argument(s);
            }
        } catch (const std::exception&) {
            bad("run.initial_state", "expected ground, top, uniform, a level 1.." + std::to_string(d) +
                                         " or a list of amplitudes");
        }
        if (level < 1 || level > d) {
            bad("run.initial_state", "level must be in 1.." + std::to_string(d));
        }
        psi[level - 1] = 1.0;
    }
    const double n = psi.norm();
    if (!(n > 0.0) || !std::isfinite(n)) {
        bad("run.initial_state", "amplitudes must be finite and not all zero");
    }
    return psi / n;
}

int resolved_truncation_order(const RunConfig& config, const ModelSpec& model) {
    if (config.run.truncation_order >= 0) {
        return config.run.truncation_order;
    }
    return std::min(model.noise_order_exact, 1);
}

double time_unit(const RunConfig& config) {
    const std::string& f = config.model.family;
    if ((f == "spin_l" || f == "spin_3half") && config.model.omega != 0.0) {
        return std::abs(config.model.omega);
    }
    if (config.kernel.kind == "exponential" && config.kernel.Gamma > 0.0) {
        return config.kernel.Gamma;
    }
    return 1.0;
}

std::string canonical_text(const RunConfig& c) {
    std::ostringstream out;
    auto num = [&](double v) {
        char buf[40];
        std::snprintf(buf, sizeof buf, "%.17g", v);
        out << buf << ' ';
    };
    auto cnum = [&](cd v) {
        num(v.real());
        num(v.imag());
    };
    out << "family " << c.model.family << '\n';
    num(c.model.l);
    num(c.model.omega);
    for (double v : c.model.C) num(v);
    for (cd v : c.model.G) cnum(v);
    for (double v : c.model.omegas) num(v);
    for (cd v : c.model.kappas) cnum(v);
    for (const DriveConfig& d : c.model.drives) {
        out << d.ket << ' ' << d.bra << ' ';
        cnum(d.amplitude);
        num(d.frequency);
    }
    out << c.model.lower_levels << ' ';
    for (const auto& row : c.model.kappa_matrix) {
        for (cd v : row) cnum(v);
    }
    out << "\nkernel " << c.kernel.kind << ' ';
    num(c.kernel.Gamma);
    num(c.kernel.gamma);
    num(c.kernel.lag_step);
    for (cd v : c.kernel.values) cnum(v);
    out << c.kernel.table_path << "\ngrid ";
    num(c.grid.t_max());
    out << c.grid.n_steps() << "\nrun " << (c.run.mode == Mode::linear ? "linear" : "nonlinear") << ' '
        << c.run.trajectories << ' ' << c.run.seed << ' ' << c.run.truncation_order << ' '
        << c.run.initial_state << ' ';
    for (cd v : c.run.initial_amplitudes) cnum(v);
    out << c.run.record_every << ' ' << static_cast<int>(c.run.method) << '\n';
    return out.str();
}

std::string config_digest(const RunConfig& config) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char ch : canonical_text(config)) {
        h ^= ch;
        h *= 0x100000001b3ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

std::vector<std::pair<std::string, std::string>> model_catalog() {
    return catalog();
}

} // namespace nmqsd
