#pragma once

// Run configuration: a YAML document with the sections model, kernel, grid, run,
// output and compare. Unknown keys are rejected; every error names its key.

#include <cstdint>
#include <numbers>
#include <string>
#include <utility>
#include <vector>

#include "nmqsd/models.hpp"
#include "nmqsd/noise.hpp"
#include "nmqsd/propagator.hpp"

namespace nmqsd {

struct DriveConfig {
    /// 1-based level labels (ket, bra) of amplitude e^{i frequency t} |ket><bra| + h.c.
    int ket = 2;
    int bra = 3;
    cd amplitude{0.0, 0.0};
    double frequency = 0.0;
};

struct ModelConfig {
    /// spin_l, spin_3half, spin_general, spin_3half_general, three_level_general,
    /// driven_four_level, multi_transition, band_model.
    std::string family;
    double l = 0.5;
    double omega = 1.0;
    std::vector<double> C;
    std::vector<cd> G;
    std::vector<double> omegas;
    std::vector<cd> kappas;
    std::vector<DriveConfig> drives;
    int lower_levels = 0;
    std::vector<std::vector<cd>> kappa_matrix;
};

struct KernelConfig {
    /// exponential or tabulated.
    std::string kind = "exponential";
    double Gamma = 1.0;
    double gamma = 1.0;
    double lag_step = 0.0;
    std::vector<cd> values;
    std::string table_path;
};

struct RunSection {
    Mode mode = Mode::nonlinear;
    int trajectories = 1;
    std::uint64_t seed = 0;
    /// -1 selects the family default.
    int truncation_order = -1;
    /// "ground", "top", "uniform", a 1-based level, or explicit amplitudes.
    std::string initial_state = "uniform";
    std::vector<cd> initial_amplitudes;
    int record_every = 1;
    ObarMethod method = ObarMethod::automatic;
};

struct OutputSection {
    std::string path = "output";
    /// Any of rho_entries, populations, entropy, norm.
    std::vector<std::string> observables;
    /// 1-based (i, j) pairs.
    std::vector<std::pair<int, int>> rho_entries;
    double log_base = std::numbers::e;
    int precision = 17;
};

struct CompareSection {
    std::string oracle;
    double threshold = 4.0;
    int boson_cutoff = 0;
};

struct RunConfig {
    ModelConfig model;
    KernelConfig kernel;
    TimeGrid grid;
    RunSection run;
    OutputSection output;
    CompareSection compare;
    /// Directory of the config file, for relative paths.
    std::string base_dir;
};

/// Parses and validates a YAML document. Throws ValidationError naming the key.
RunConfig parse_config(const std::string& text, const std::string& base_dir = ".");
RunConfig load_config(const std::string& path);

ModelSpec build_model(const ModelConfig& config);
CorrelationKernel build_kernel(const KernelConfig& config, const std::string& base_dir = ".");
StateVector build_initial_state(const RunSection& run, const ModelSpec& model);
/// Family default when run.truncation_order is -1.
int resolved_truncation_order(const RunConfig& config, const ModelSpec& model);

/// Frequency unit of the t column: omega for spin families, Gamma otherwise.
double time_unit(const RunConfig& config);

/// Stable text form of the resolved configuration and its 64-bit FNV-1a hash.
std::string canonical_text(const RunConfig& config);
std::string config_digest(const RunConfig& config);

/// Names accepted for model.family with a one-line description.
std::vector<std::pair<std::string, std::string>> model_catalog();

} // namespace nmqsd
