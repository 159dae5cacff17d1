#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <string>

#include "spm/csv.hpp"
#include "spm/spm_format.hpp"

// Subprocess smoke tests of the command-line surface: subcommands, artifact
// files and the 0/2/3 exit-code contract.

#ifndef SPM_CLI_PATH
#define SPM_CLI_PATH "./spm"
#endif

namespace fs = std::filesystem;

namespace {

int run_cli(const std::string& args) {
    std::string cmd = std::string(SPM_CLI_PATH) + " " + args + " >/dev/null 2>&1";
    int status = std::system(cmd.c_str());
    return WEXITSTATUS(status);
}

fs::path fresh_dir(const std::string& name) {
    fs::path dir = fs::temp_directory_path() / name;
    fs::remove_all(dir);
    return dir;
}

} // namespace

TEST_CASE("gen-sis writes a model and exits 0") {
    auto dir = fresh_dir("spm_cli_sis");
    CHECK(run_cli("gen-sis --m 10 --connectivity 3 --seed 4 --out " + dir.string()) == 0);
    auto model = spm::parse_model(spm::read_text_file(dir / "model.spm"));
    CHECK(model.transitions.size() == 2 * 10 + 2 * 10 * 3);
    fs::remove_all(dir);
}

TEST_CASE("config errors exit with code 2") {
    auto dir = fresh_dir("spm_cli_bad");
    // connectivity >= m is a config error
    CHECK(run_cli("gen-sis --m 4 --connectivity 9 --out " + dir.string()) == 2);
    // no model source for the pipeline
    CHECK(run_cli("pipeline --out " + dir.string()) == 2);
    // unknown flag is a parse error
    CHECK(run_cli("gen-sis --no-such-flag 1 --out " + dir.string()) == 2);
    fs::remove_all(dir);
}

TEST_CASE("runtime failures exit with code 3") {
    // missing model file surfaces as a runtime error
    CHECK(run_cli("simulate --model /nonexistent.spm --out /tmp/spm_cli_x") == 3);
}

TEST_CASE("simulate and fluid subcommands write the expected artifacts") {
    auto dir = fresh_dir("spm_cli_sim");
    REQUIRE(run_cli("gen-sis --m 4 --connectivity 1 --population 40 --seed 2 --out " + dir.string()) == 0);
    std::string model = (dir / "model.spm").string();
    CHECK(run_cli("simulate --model " + model + " --runs 5 --t-end 1 --seed 3 --out " + dir.string()) == 0);
    CHECK(fs::exists(dir / "trajectory.csv"));
    CHECK(fs::exists(dir / "trajectory.meta.txt"));
    CHECK(run_cli("meanfield --model " + model + " --t-end 1 --out " + dir.string()) == 0);
    CHECK(fs::exists(dir / "meanfield.csv"));
    CHECK(run_cli("moments --model " + model + " --t-end 1 --out " + dir.string()) == 0);
    CHECK(fs::exists(dir / "moments.csv"));
    fs::remove_all(dir);
}

TEST_CASE("cluster, reduce and compare chain together") {
    auto dir = fresh_dir("spm_cli_chain");
    REQUIRE(run_cli("gen-sis --m 6 --connectivity 3 --population 60 --seed 5 --out " + dir.string()) == 0);
    std::string model = (dir / "model.spm").string();
    CHECK(run_cli("cluster --model " + model + " --metric mean-field --k 3 --seed 7 --out " + dir.string()) == 0);
    CHECK(fs::exists(dir / "assignments.csv"));
    CHECK(fs::exists(dir / "eigenvalues.csv"));
    CHECK(run_cli("reduce --model " + model + " --assignments " + (dir / "assignments.csv").string() +
                  " --out " + dir.string()) == 0);
    CHECK(fs::exists(dir / "reduced.spm"));
    CHECK(run_cli("compare --original " + model + " --reduced " + (dir / "reduced.spm").string() +
                  " --assignments " + (dir / "assignments.csv").string() +
                  " --runs 5 --t-end 1 --seed 9 --out " + dir.string()) == 0);
    CHECK(fs::exists(dir / "report.txt"));
    fs::remove_all(dir);
}

TEST_CASE("estimate-rates emits the three rate tables") {
    auto dir = fresh_dir("spm_cli_rates");
    fs::create_directories(dir);
    spm::write_text_file(dir / "journeys.csv",
                         "start,end,duration_sec\na,b,600\nb,a,900\na,a,300\n");
    CHECK(run_cli("estimate-rates --journeys " + (dir / "journeys.csv").string() +
                  " --horizon 2 --out " + dir.string()) == 0);
    CHECK(fs::exists(dir / "lambda.csv"));
    CHECK(fs::exists(dir / "dest_prob.csv"));
    CHECK(fs::exists(dir / "trip_rate.csv"));
    fs::remove_all(dir);
}
