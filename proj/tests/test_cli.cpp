#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

namespace fs = std::filesystem;

namespace {

const std::string kCli = S2C_CLI_PATH;
const std::string kWork = "/tmp/s2c_cli_test";

struct RunResult {
    int exit_code = 0;
    std::string out;
};

RunResult run(const std::string& args) {
    const std::string out_file = kWork + "/cmd.out";
    const std::string cmd = kCli + " " + args + " >" + out_file + " 2:" + "&1";
    const std::string real_cmd = kCli + " " + args + " >" + out_file + " 2>&1";
    const int status = std::system(real_cmd.c_str());
    (void)cmd;
    RunResult r;
    r.exit_code = WEXITSTATUS(status);
    std::ifstream f(out_file);
    r.out.assign((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    return r;
}

std::vector<char> file_bytes(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    REQUIRE(bool(f));
    return std::vector<char>((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
}

std::string tiny_model_flags() {
    return "--dims 8,12 --heads 2 --refiner-width 8 --refiner-layers 1 --predictor-width 8 "
           "--time-dim 8";
}

std::string tiny_train_flags() {
    return "--steps 12 --batch-size 4 --learning-rate 2e-3 --train-seed 7 --timesteps 20";
}

}  // namespace

TEST_CASE("pipeline smoke: gen-data, two-stage training, sample, evaluate") {
    fs::remove_all(kWork);
    fs::create_directories(kWork);
    const std::string data = kWork + "/data";

    auto g = run("gen-data --out " + data + " --clips 24 --frames 16 --joints 2 --pitches 8 --data-seed 7");
    REQUIRE(g.exit_code == 0);
    CHECK(fs::exists(data + "/dataset.s2c"));
    CHECK(fs::exists(data + "/manifest.txt"));
    CHECK(fs::exists(data + "/run-config.txt"));

    auto s1 = run("train-position --dataset " + data + " --out " + kWork + "/s1 " + tiny_model_flags() +
                  " --steps 12 --batch-size 4 --learning-rate 2e-3 --train-seed 7");
    REQUIRE(s1.exit_code == 0);
    CHECK(fs::exists(kWork + "/s1/predictors.s2c"));
    CHECK(fs::exists(kWork + "/s1/loss-position.csv"));

    auto s2 = run("train-motion --dataset " + data + " --predictors " + kWork +
                  "/s1/predictors.s2c --out " + kWork + "/s2 " + tiny_model_flags() + " " +
                  tiny_train_flags());
    REQUIRE(s2.exit_code == 0);
    CHECK(fs::exists(kWork + "/s2/motion.s2c"));

    auto smp = run("sample --dataset " + data + " --checkpoint-dir " + kWork + "/s2 --out " + kWork +
                   "/samp --split test --sample-clips 3 --sample-seed-left 7 --sample-seed-right 8");
    REQUIRE(smp.exit_code == 0);
    CHECK(fs::exists(kWork + "/samp/samples.s2c"));

    auto ev = run("evaluate --dataset " + data + " --samples " + kWork + "/samp --out " + kWork +
                  "/eval --gmm-components 1 --embed-steps 25 --metric-seed 7");
    REQUIRE(ev.exit_code == 0);
    std::ifstream metrics(kWork + "/eval/metrics.csv");
    std::string header;
    std::getline(metrics, header);
    CHECK(header == "metric,hand,value,config_hash,seed");
    int rows = 0;
    std::string line;
    while (std::getline(metrics, line)) {
        ++rows;
        CHECK(line.find("nan") == std::string::npos);
        CHECK(line.find("inf") == std::string::npos);
    }
    CHECK(rows == 10);
}

TEST_CASE("sampling twice with the same seeds is byte-identical") {
    const std::string data = kWork + "/data";
    REQUIRE(fs::exists(data + "/dataset.s2c"));  // produced by the smoke case
    auto a = run("sample --dataset " + data + " --checkpoint-dir " + kWork + "/s2 --out " + kWork +
                 "/samp-a --split test --sample-clips 3 --sample-seed-left 7 --sample-seed-right 8");
    auto b = run("sample --dataset " + data + " --checkpoint-dir " + kWork + "/s2 --out " + kWork +
                 "/samp-b --split test --sample-clips 3 --sample-seed-left 7 --sample-seed-right 8");
    REQUIRE(a.exit_code == 0);
    REQUIRE(b.exit_code == 0);
    CHECK(file_bytes(kWork + "/samp-a/samples.s2c") == file_bytes(kWork + "/samp-b/samples.s2c"));

    // different right seed changes the output
    auto c = run("sample --dataset " + data + " --checkpoint-dir " + kWork + "/s2 --out " + kWork +
                 "/samp-c --split test --sample-clips 3 --sample-seed-left 7 --sample-seed-right 9");
    REQUIRE(c.exit_code == 0);
    CHECK(file_bytes(kWork + "/samp-a/samples.s2c") != file_bytes(kWork + "/samp-c/samples.s2c"));
}

TEST_CASE("training re-runs reproduce checkpoints bitwise") {
    const std::string data = kWork + "/data";
    auto again = run("train-motion --dataset " + data + " --predictors " + kWork +
                     "/s1/predictors.s2c --out " + kWork + "/s2-again " + tiny_model_flags() + " " +
                     tiny_train_flags());
    REQUIRE(again.exit_code == 0);
    CHECK(file_bytes(kWork + "/s2/motion.s2c") == file_bytes(kWork + "/s2-again/motion.s2c"));
    CHECK(file_bytes(kWork + "/s2/loss-motion.csv") == file_bytes(kWork + "/s2-again/loss-motion.csv"));
}

TEST_CASE("missing assets exit with code 2 and name the path") {
    auto r = run("sample --dataset " + kWork + "/data --checkpoint-dir " + kWork +
                 "/no-such-dir --out " + kWork + "/x");
    CHECK(r.exit_code == 2);
    CHECK(r.out.find("no-such-dir") != std::string::npos);

    auto bad_flag = run("gen-data --out " + kWork + "/y --no-such-flag 3");
    CHECK(bad_flag.exit_code == 2);

    auto no_cmd = run("");
    CHECK(no_cmd.exit_code == 2);
}

TEST_CASE("verify passes on a fresh build with stable output") {
    auto a = run("verify");
    auto b = run("verify");
    CHECK(a.exit_code == 0);
    CHECK(a.out == b.out);
    CHECK(a.out.find("all checks passed") != std::string::npos);
}

TEST_CASE("one-cell ablate grid equals a manual train+sample+evaluate run") {
    const std::string data = kWork + "/data";
    const std::string abl = kWork + "/ablate1";
    auto r = run("ablate --dataset " + data + " --out " + abl +
                 " --grid dn=1,ps=1,fi=hcaa --ablate-seeds 1 " + tiny_model_flags() + " " +
                 tiny_train_flags() +
                 " --sample-clips 2 --eval-clips 2 --gmm-components 1 --embed-steps 25");
    REQUIRE(r.exit_code == 0);
    const std::string cell_dir = abl + "/cell-dn1-ps1-hcaa-seed7";
    REQUIRE(fs::exists(cell_dir + "/metrics.csv"));

    // manual composition with identical flags
    auto m1 = run("train-position --dataset " + data + " --out " + kWork + "/m-s1 " +
                  tiny_model_flags() + " " + tiny_train_flags());
    REQUIRE(m1.exit_code == 0);
    auto m2 = run("train-motion --dataset " + data + " --predictors " + kWork +
                  "/m-s1/predictors.s2c --out " + kWork + "/m-s2 " + tiny_model_flags() + " " +
                  tiny_train_flags() + " --fusion-mode hcaa --position-sharing 1 --decoupled-noise 1");
    REQUIRE(m2.exit_code == 0);
    auto m3 = run("sample --dataset " + data + " --checkpoint-dir " + kWork + "/m-s2 --out " + kWork +
                  "/m-samp --split test --sample-clips 2");
    REQUIRE(m3.exit_code == 0);
    auto m4 = run("evaluate --dataset " + data + " --samples " + kWork + "/m-samp --out " + kWork +
                  "/m-eval --eval-clips 2 --gmm-components 1 --embed-steps 25");
    REQUIRE(m4.exit_code == 0);

    CHECK(file_bytes(cell_dir + "/metrics.csv") == file_bytes(kWork + "/m-eval/metrics.csv"));
    CHECK(file_bytes(cell_dir + "/motion.s2c") == file_bytes(kWork + "/m-s2/motion.s2c"));
}

TEST_CASE("ablate emits the summary table with mean and spread") {
    std::ifstream f(kWork + "/ablate1/ablate-summary.csv");
    REQUIRE(bool(f));
    std::string header;
    std::getline(f, header);
    CHECK(header == "dn,ps,fi,metric,mean,spread");
    int rows = 0;
    std::string line;
    while (std::getline(f, line)) {
        ++rows;
    }
    CHECK(rows == 9);  // one cell x nine metric columns
}
