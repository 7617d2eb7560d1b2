#pragma once

// Subcommand implementations behind the nmqsd command-line tool.
// Exit codes: 0 success, 1 validation error, 2 numeric failure, 3 comparison failure.

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>

#include "nmqsd/config.hpp"
#include "nmqsd/ensemble.hpp"
#include "nmqsd/reference.hpp"

namespace nmqsd {

enum ExitCode : int { kExitOk = 0, kExitValidation = 1, kExitNumeric = 2, kExitComparison = 3 };

struct CliOptions {
    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::optional<int> trajectories;
    int workers = 0;
    bool dry_run = false;
    std::string dump_coefficients;
    /// Oracle override for `reference` and `compare`.
    std::string oracle;
    /// Progress line counter on the error stream.
    bool progress = true;
};

int run_simulate(const CliOptions& options, std::ostream& out, std::ostream& err);
int run_reference(const CliOptions& options, std::ostream& out, std::ostream& err);
int run_compare(const CliOptions& options, std::ostream& out, std::ostream& err);
int run_noise_check(const CliOptions& options, std::ostream& out, std::ostream& err);
int run_list_models(std::ostream& out);

/// Loads the config and applies --seed / --trajectories.
RunConfig resolve_config(const CliOptions& options);

/// Runs the trajectory ensemble described by a config.
EnsembleResult simulate(const RunConfig& config, int workers, std::ostream* progress = nullptr);

/// Runs the oracle named by `oracle` on the config's model and grid.
MasterEquationRun reference(const RunConfig& config, const std::string& oracle);

/// CSV files for an ensemble (one per observable plus the requested entries).
/// Returns the paths written.
std::vector<std::string> write_ensemble_csv(const RunConfig& config, const EnsembleResult& result,
                                            EntropyWarnings* warnings = nullptr);
std::vector<std::string> write_reference_csv(const RunConfig& config, const MasterEquationRun& run);

/// Per-entry comparison in units of the ensemble standard error.
struct EntryDeviation {
    int i = 0;
    int j = 0;
    double max_sigma = 0.0;
    double at_time = 0.0;
};
std::vector<EntryDeviation> compare_runs(const EnsembleResult& ensemble, const MasterEquationRun& oracle);

/// Maps an exception to its exit code and prints "error [module]: message".
int report_error(std::ostream& err);

} // namespace nmqsd
