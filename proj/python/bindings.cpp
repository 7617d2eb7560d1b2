#include <optional>
#include <string>

#include <pybind11/complex.h>
#include <pybind11/eigen.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "nmqsd/app.hpp"
#include "nmqsd/config.hpp"
#include "nmqsd/ensemble.hpp"
#include "nmqsd/errors.hpp"
#include "nmqsd/models.hpp"
#include "nmqsd/noise.hpp"
#include "nmqsd/reference.hpp"

namespace py = pybind11;
using namespace nmqsd;

namespace {

py::array_t<std::complex<double>> stack(const std::vector<DensityMatrix>& rho) {
    const auto n = static_cast<py::ssize_t>(rho.size());
    const py::ssize_t d = n ? rho.front().rows() : 0;
    py::array_t<std::complex<double>> out({n, d, d});
    auto v = out.mutable_unchecked<3>();
    for (py::ssize_t k = 0; k < n; ++k) {
        for (py::ssize_t i = 0; i < d; ++i) {
            for (py::ssize_t j = 0; j < d; ++j) v(k, i, j) = rho[k](i, j);
        }
    }
    return out;
}

py::array_t<double> stack(const std::vector<Eigen::MatrixXd>& m) {
    const auto n = static_cast<py::ssize_t>(m.size());
    const py::ssize_t d = n ? m.front().rows() : 0;
    py::array_t<double> out({n, d, d});
    auto v = out.mutable_unchecked<3>();
    for (py::ssize_t k = 0; k < n; ++k) {
        for (py::ssize_t i = 0; i < d; ++i) {
            for (py::ssize_t j = 0; j < d; ++j) v(k, i, j) = m[k](i, j);
        }
    }
    return out;
}

template <class Run>
std::vector<double> times(const Run& run, double unit) {
    std::vector<double> t(run.points());
    for (std::size_t k = 0; k < t.size(); ++k) t[k] = run.time(k) * unit;
    return t;
}

RunConfig with_overrides(RunConfig c, std::optional<std::uint64_t> seed, std::optional<int> trajectories) {
    if (seed) c.run.seed = *seed;
    if (trajectories) {
        if (*trajectories < 1) throw ValidationError("cli", "trajectories must be >= 1");
        c.run.trajectories = *trajectories;
    }
    return c;
}

} // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Non-Markovian quantum state diffusion for multilevel systems";

    auto base = py::register_exception<Error>(m, "Error");
    py::register_exception<ValidationError>(m, "ValidationError", base.ptr());
    py::register_exception<NumericError>(m, "NumericError", base.ptr());

    py::class_<RunConfig>(m, "RunConfig")
        .def_property_readonly("family", [](const RunConfig& c) { return c.model.family; })
        .def_property_readonly("trajectories", [](const RunConfig& c) { return c.run.trajectories; })
        .def_property_readonly("seed", [](const RunConfig& c) { return c.run.seed; })
        .def_property_readonly("t_max", [](const RunConfig& c) { return c.grid.t_max(); })
        .def_property_readonly("n_steps", [](const RunConfig& c) { return c.grid.n_steps(); })
        .def_property_readonly("oracle", [](const RunConfig& c) { return c.compare.oracle; })
        .def_property_readonly("digest", &config_digest)
        .def("__repr__", [](const RunConfig& c) {
            return "<RunConfig " + c.model.family + " digest=" + config_digest(c) + ">";
        });

    m.def("parse_config", &parse_config, py::arg("text"), py::arg("base_dir") = ".",
          "Parses a YAML config document.");
    m.def("load_config", &load_config, py::arg("path"));

    m.def(
        "simulate",
        [](const RunConfig& config, std::optional<std::uint64_t> seed, std::optional<int> trajectories,
           int workers) {
            const RunConfig c = with_overrides(config, seed, trajectories);
            EnsembleResult r;
            {
                py::gil_scoped_release release;
                r = simulate(c, workers);
            }
            py::dict out;
            out["t"] = times(r, time_unit(c));
            out["rho"] = stack(r.rho);
            out["stderr"] = stack(r.stderr_entries);
            out["trace"] = r.trace;
            out["trace_stderr"] = r.trace_stderr;
            out["n_trajectories"] = r.n_trajectories;
            out["digest"] = r.config_digest;
            return out;
        },
        py::arg("config"), py::arg("seed") = py::none(), py::arg("trajectories") = py::none(),
        py::arg("workers") = 0,
        "Ensemble average; returns t, rho[k, i, j], stderr[k, i, j], trace and trace_stderr.");

    m.def(
        "reference",
        [](const RunConfig& config, const std::string& oracle) {
            MasterEquationRun r;
            {
                py::gil_scoped_release release;
                r = reference(config, oracle.empty() ? config.compare.oracle : oracle);
            }
            py::dict out;
            out["t"] = times(r, time_unit(config));
            out["rho"] = stack(r.rho);
            out["oracle"] = oracle_name(r.method);
            out["max_trace_drift"] = r.max_trace_drift;
            return out;
        },
        py::arg("config"), py::arg("oracle") = "");

    m.def(
        "von_neumann_entropy",
        [](const Eigen::MatrixXcd& rho, double log_base) { return von_neumann_entropy(rho, log_base); },
        py::arg("rho"), py::arg("log_base") = std::numbers::e);

    m.def(
        "basis_counts",
        [](int two_l) {
            if (two_l < 1) throw ValidationError("models", "2l must be >= 1");
            return enumerate_basis(build_spin_model(0.5 * two_l, 1.0)).count_per_order;
        },
        py::arg("two_l"), "Basis operators per noise order for the spin-l dissipation model.");

    m.def(
        "alpha",
        [](double Gamma, double gamma, double t, double s) {
            return alpha(CorrelationKernel::exponential(Gamma, gamma), t, s);
        },
        py::arg("Gamma"), py::arg("gamma"), py::arg("t"), py::arg("s"));

    m.def("list_models", &model_catalog);
}
