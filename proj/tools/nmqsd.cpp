#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "nmqsd/app.hpp"

int main(int argc, char** argv) {
    CLI::App app{"Non-Markovian quantum state diffusion with noise-dependent O operators"};
    app.require_subcommand(1);

    nmqsd::CliOptions opt;
    std::uint64_t seed = 0;
    int trajectories = 0;
    bool quiet = false;

    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--config", opt.config_path, "YAML run configuration")->required();
        sub->add_option("--seed", seed, "Master seed (overrides run.seed)");
        sub->add_option("--trajectories", trajectories, "Trajectory count (overrides run.trajectories)");
        sub->add_option("--workers", opt.workers, "Worker threads (0: hardware concurrency)");
        sub->add_flag("--dry-run", opt.dry_run, "Validate and print the plan without writing");
        sub->add_flag("--quiet", quiet, "No progress lines");
    };

    auto* simulate = app.add_subcommand("simulate", "Run the trajectory ensemble and write CSV observables");
    add_common(simulate);
    simulate->add_option("--dump-coefficients", opt.dump_coefficients, "Write the O-operator coefficients to CSV");

    auto* reference = app.add_subcommand("reference", "Run a deterministic master-equation oracle");
    add_common(reference);
    reference->add_option("--oracle", opt.oracle, "lindblad, convolutionless or pseudomode");

    auto* compare = app.add_subcommand("compare", "Compare the ensemble against an oracle");
    add_common(compare);
    compare->add_option("--oracle", opt.oracle, "lindblad, convolutionless or pseudomode");

    auto* noise = app.add_subcommand("noise-check", "Check sampled noise covariance against the kernel");
    add_common(noise);

    auto* list = app.add_subcommand("list-models", "List model families");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : nmqsd::kExitValidation;
    }

    for (auto* sub : {simulate, reference, compare, noise}) {
        if (sub->parsed()) {
            if (sub->count("--seed") > 0) {
                opt.seed = seed;
            }
            if (sub->count("--trajectories") > 0) {
                opt.trajectories = trajectories;
            }
        }
    }
    opt.progress = !quiet;

    if (simulate->parsed()) {
        return nmqsd::run_simulate(opt, std::cout, std::cerr);
    }
    if (reference->parsed()) {
        return nmqsd::run_reference(opt, std::cout, std::cerr);
    }
    if (compare->parsed()) {
        return nmqsd::run_compare(opt, std::cout, std::cerr);
    }
    if (noise->parsed()) {
        return nmqsd::run_noise_check(opt, std::cout, std::cerr);
    }
    if (list->parsed()) {
        return nmqsd::run_list_models(std::cout);
    }
    return nmqsd::kExitValidation;
}
