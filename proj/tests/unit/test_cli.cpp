#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "doctest.h"
#include "nmqsd/app.hpp"

using namespace nmqsd;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    TempDir() {
        path = fs::temp_directory_path() / ("nmqsd_cli_" + std::to_string(reinterpret_cast<std::uintptr_t>(this)));
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

std::string write_config(const fs::path& dir, const std::string& body) {
    const fs::path p = dir / "run.yaml";
    std::ofstream(p) << body;
    return p.string();
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

std::string small_config(const fs::path& out) {
    return "model: {family: spin_l, l: 1.5, omega: 1.0}\n"
           "kernel: {type: exponential, Gamma: 1.0, gamma: 0.5}\n"
           "grid: {t_max: 2.0, n_steps: 100}\n"
           "run: {trajectories: 40, seed: 5, truncation_order: 2, record_every: 10}\n"
           "output: {path: " + out.string() + ", rho_entries: [[1, 4]]}\n"
           "compare: {oracle: pseudomode}\n";
}

} // namespace

TEST_SUITE("cli") {

TEST_CASE("dry run writes nothing") {
    TempDir tmp;
    CliOptions o;
    o.config_path = write_config(tmp.path, small_config(tmp.path / "out"));
    o.dry_run = true;
    std::ostringstream out, err;
    CHECK(run_simulate(o, out, err) == kExitOk);
    CHECK(out.str().find("plan:") != std::string::npos);
    CHECK_FALSE(fs::exists(tmp.path / "out"));
}

TEST_CASE("simulate writes the CSV schema and is independent of the worker count") {
    TempDir tmp;
    CliOptions o;
    o.config_path = write_config(tmp.path, small_config(tmp.path / "out"));
    o.progress = false;
    o.workers = 1;
    std::ostringstream out, err;
    REQUIRE(run_simulate(o, out, err) == kExitOk);
    const std::string rho1 = slurp(tmp.path / "out" / "rho_entries.csv");
    const std::string pop1 = slurp(tmp.path / "out" / "populations.csv");
    const std::string ent1 = slurp(tmp.path / "out" / "entropy.csv");
    CHECK(rho1.rfind("t,re_rho_1_4,im_rho_1_4,abs_rho_1_4,se_re_rho_1_4,se_im_rho_1_4,se_abs_rho_1_4\n", 0) == 0);
    CHECK(pop1.rfind("t,rho_1_1,rho_2_2,rho_3_3,rho_4_4,se_rho_1_1,", 0) == 0);
    CHECK(ent1.rfind("t,entropy,se_entropy\n", 0) == 0);
    // 0, 10, ..., 100: 11 rows plus the header.
    CHECK(std::count(rho1.begin(), rho1.end(), '\n') == 12);
    CHECK_FALSE(fs::exists(tmp.path / "out" / "norm.csv"));

    o.workers = 3;
    REQUIRE(run_simulate(o, out, err) == kExitOk);
    CHECK(slurp(tmp.path / "out" / "rho_entries.csv") == rho1);
    CHECK(slurp(tmp.path / "out" / "populations.csv") == pop1);
    CHECK(slurp(tmp.path / "out" / "entropy.csv") == ent1);

    o.seed = 6;
    REQUIRE(run_simulate(o, out, err) == kExitOk);
    CHECK(slurp(tmp.path / "out" / "rho_entries.csv") != rho1);
}

TEST_CASE("reference writes the same schema with zero errors") {
    TempDir tmp;
    CliOptions o;
    o.config_path = write_config(tmp.path, small_config(tmp.path / "out"));
    std::ostringstream out, err;
    REQUIRE(run_reference(o, out, err) == kExitOk);
    const std::string rho = slurp(tmp.path / "out" / "rho_entries.csv");
    CHECK(rho.rfind("t,re_rho_1_4,", 0) == 0);
    CHECK(rho.find(",0,0,0\n") != std::string::npos);
}

TEST_CASE("exit codes") {
    TempDir tmp;
    std::ostringstream out, err;
    CliOptions o;
    o.progress = false;
    o.config_path = (tmp.path / "missing.yaml").string();
    CHECK(run_simulate(o, out, err) == kExitValidation);

    o.config_path = write_config(tmp.path, small_config(tmp.path / "out"));
    o.oracle = "convolutionless";
    CHECK(run_reference(o, out, err) == kExitValidation);
    CHECK(err.str().find("no noise-free master equation") != std::string::npos);

    // A threshold of 1e-3 standard errors cannot be met.
    o.oracle.clear();
    {
        std::string body = small_config(tmp.path / "out");
        body.replace(body.find("oracle: pseudomode"), 18, "oracle: pseudomode, threshold: 1e-3");
        o.config_path = write_config(tmp.path, body);
    }
    CHECK(run_compare(o, out, err) == kExitComparison);
    CHECK(fs::exists(tmp.path / "out" / "compare.csv"));

    o.trajectories = 0;
    CHECK(run_simulate(o, out, err) == kExitValidation);
}

TEST_CASE("list-models") {
    std::ostringstream out;
    CHECK(run_list_models(out) == kExitOk);
    CHECK(out.str().find("driven_four_level") != std::string::npos);
}

}
