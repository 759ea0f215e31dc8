#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "cmfuse/checkpoint.hpp"
#include "cmfuse/cli.hpp"
#include "cmfuse/config.hpp"
#include "cmfuse/datamodel.hpp"
#include "cmfuse/training.hpp"
#include "helpers.hpp"

using namespace cmfuse;
using testutil::TempDir;

namespace {

int run_cli(const std::vector<std::string>& args) {
    std::vector<const char*> argv;
    argv.push_back("cmfuse");
    for (const auto& a : args) argv.push_back(a.c_str());
    return cli::run(static_cast<int>(argv.size()), argv.data());
}

void write_file(const std::string& path, const std::string& content) {
    std::ofstream out(path);
    out << content;
}

std::string tiny_phantom_config() {
    return "n = 8\n"
           "T = 30\n"
           "n_blocks = 2\n"
           "subjects_per_stage.NC = 2\n"
           "subjects_per_stage.EMCI = 2\n"
           "subjects_per_stage.LMCI = 2\n"
           "subjects_per_stage.AD = 2\n"
           "affected_rois = 0,4\n"
           "compensation_rois = 2\n"
           "noise_sigma = 0.2\n"
           "rho = 0.6\n"
           "seed = 31\n";
}

std::string tiny_train_config(int epochs) {
    return "epochs = " + std::to_string(epochs) +
           "\n"
           "batch_size = 4\n"
           "d = 4\n"
           "d_k = 4\n"
           "d_v = 4\n"
           "hidden = 16\n"
           "seed = 12\n";
}

}  // namespace

TEST_CASE("unknown subcommand exits with the usage code") {
    CHECK(run_cli({"frobnicate"}) == 2);
    CHECK(run_cli({}) == 2);
}

TEST_CASE("help exits cleanly at every level") {
    CHECK(run_cli({"--help"}) == 0);
    CHECK(run_cli({"train", "--help"}) == 0);
    CHECK(run_cli({"gen-phantom", "--help"}) == 0);
    CHECK(run_cli({"eval", "--help"}) == 0);
    CHECK(run_cli({"analyze", "--help"}) == 0);
    CHECK(run_cli({"gradcheck", "--help"}) == 0);
}

TEST_CASE("gen-phantom writes a loadable deterministic cohort") {
    TempDir dir("cli_gen");
    const std::string spec_path = dir.path() + "/spec.txt";
    write_file(spec_path, tiny_phantom_config());

    const std::string out1 = dir.path() + "/cohort1";
    const std::string out2 = dir.path() + "/cohort2";
    CHECK(run_cli({"gen-phantom", "--spec", spec_path, "--out", out1}) == 0);
    CHECK(run_cli({"gen-phantom", "--spec", spec_path, "--out", out2}) == 0);

    const auto a = load_cohort(out1);
    const auto b = load_cohort(out2);
    REQUIRE(a.size() == 8);
    for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK(a[i].id == b[i].id);
        CHECK(a[i].bold == b[i].bold);
    }
    // Effective spec file round-trips through the config parser.
    const PhantomSpec spec = phantom_spec_from_kv(parse_kv_file(out1 + "/phantom_spec.txt"));
    CHECK(spec.n == 8);
    CHECK(spec.seed == 31);
}

TEST_CASE("gen-phantom honors flag overrides over file values") {
    TempDir dir("cli_gen_ovr");
    const std::string spec_path = dir.path() + "/spec.txt";
    write_file(spec_path, tiny_phantom_config());
    const std::string out = dir.path() + "/cohort";
    CHECK(run_cli({"gen-phantom", "--spec", spec_path, "--out", out, "--seed", "77"}) == 0);
    const PhantomSpec spec = phantom_spec_from_kv(parse_kv_file(out + "/phantom_spec.txt"));
    CHECK(spec.seed == 77);
}

TEST_CASE("gen-phantom with a missing spec file exits with the I/O code") {
    TempDir dir("cli_gen_missing");
    CHECK(run_cli({"gen-phantom", "--spec", dir.path() + "/nope.txt", "--out", dir.path() + "/c"}) == 3);
}

TEST_CASE("config files with unknown keys exit with the usage code") {
    TempDir dir("cli_badkey");
    const std::string spec_path = dir.path() + "/spec.txt";
    write_file(spec_path, tiny_phantom_config() + "volume = 11\n");
    CHECK(run_cli({"gen-phantom", "--spec", spec_path, "--out", dir.path() + "/c"}) == 2);
}

TEST_CASE("train with zero epochs writes a checkpoint equal to initialization") {
    TempDir dir("cli_train0");
    const std::string spec_path = dir.path() + "/spec.txt";
    write_file(spec_path, tiny_phantom_config());
    const std::string cohort_dir = dir.path() + "/cohort";
    REQUIRE(run_cli({"gen-phantom", "--spec", spec_path, "--out", cohort_dir}) == 0);

    const std::string cfg_path = dir.path() + "/train.txt";
    write_file(cfg_path, tiny_train_config(0));
    const std::string out = dir.path() + "/run";
    CHECK(run_cli({"train", "--cohort", cohort_dir, "--config", cfg_path, "--out", out}) == 0);

    const TrainState loaded = load_checkpoint(out + "/checkpoint.bin");
    const TrainConfig cfg = train_config_from_kv(parse_kv_file(cfg_path));
    const TrainState fresh = init_train_state(8, 30, cfg);
    CHECK(loaded.epoch == 0);
    CHECK(loaded.gen_store.value_hash() == fresh.gen_store.value_hash());
    CHECK(loaded.disc_store.value_hash() == fresh.disc_store.value_hash());

    // Effective config was written and is reloadable.
    const TrainConfig eff = train_config_from_kv(parse_kv_file(out + "/effective_config.txt"));
    CHECK(eff.epochs == 0);
    CHECK(eff.seed == 12);
}

TEST_CASE("train flag overrides beat config-file values") {
    TempDir dir("cli_train_ovr");
    const std::string spec_path = dir.path() + "/spec.txt";
    write_file(spec_path, tiny_phantom_config());
    const std::string cohort_dir = dir.path() + "/cohort";
    REQUIRE(run_cli({"gen-phantom", "--spec", spec_path, "--out", cohort_dir}) == 0);

    const std::string cfg_path = dir.path() + "/train.txt";
    write_file(cfg_path, tiny_train_config(3));
    const std::string out = dir.path() + "/run";
    CHECK(run_cli({"train", "--cohort", cohort_dir, "--config", cfg_path, "--out", out,
                   "--epochs", "1", "--seed", "99"}) == 0);
    const TrainConfig eff = train_config_from_kv(parse_kv_file(out + "/effective_config.txt"));
    CHECK(eff.epochs == 1);
    CHECK(eff.seed == 99);

    const TrainState st = load_checkpoint(out + "/checkpoint.bin");
    CHECK(st.epoch == 1);

    std::ifstream metrics(out + "/metrics.csv");
    std::string line;
    int rows = 0;
    while (std::getline(metrics, line)) ++rows;
    CHECK(rows == 2);  // header + one epoch
}

TEST_CASE("train with a bad cohort path exits with the I/O code") {
    TempDir dir("cli_train_bad");
    const std::string cfg_path = dir.path() + "/train.txt";
    write_file(cfg_path, tiny_train_config(1));
    CHECK(run_cli({"train", "--cohort", dir.path() + "/nowhere", "--config", cfg_path, "--out",
                   dir.path() + "/run"}) == 3);
}

TEST_CASE("cohort invariant violations exit with the invariant code") {
    TempDir dir("cli_inv");
    const std::string spec_path = dir.path() + "/spec.txt";
    write_file(spec_path, tiny_phantom_config());
    const std::string cohort_dir = dir.path() + "/cohort";
    REQUIRE(run_cli({"gen-phantom", "--spec", spec_path, "--out", cohort_dir}) == 0);

    // Corrupt one SC file with a negative edge.
    const auto subjects = load_cohort(cohort_dir);
    Tensor sc = subjects[0].sc_emp.values();
    sc.at(0, 1) = -1.0;
    sc.at(1, 0) = -1.0;
    write_csv_matrix(cohort_dir + "/" + subjects[0].id + "_sc.csv", sc);

    const std::string cfg_path = dir.path() + "/train.txt";
    write_file(cfg_path, tiny_train_config(1));
    CHECK(run_cli({"train", "--cohort", cohort_dir, "--config", cfg_path, "--out",
                   dir.path() + "/run"}) == 4);
}

TEST_CASE("eval and analyze run end-to-end on a tiny cohort") {
    TempDir dir("cli_e2e");
    const std::string spec_path = dir.path() + "/spec.txt";
    write_file(spec_path, tiny_phantom_config());
    const std::string cohort_dir = dir.path() + "/cohort";
    REQUIRE(run_cli({"gen-phantom", "--spec", spec_path, "--out", cohort_dir}) == 0);

    const std::string cfg_path = dir.path() + "/train.txt";
    write_file(cfg_path, tiny_train_config(1));
    const std::string out = dir.path() + "/run";
    REQUIRE(run_cli({"train", "--cohort", cohort_dir, "--config", cfg_path, "--out", out}) == 0);
    const std::string ckpt = out + "/checkpoint.bin";

    const std::string eval_csv = dir.path() + "/eval.csv";
    CHECK(run_cli({"eval", "--cohort", cohort_dir, "--checkpoint", ckpt, "--experiment", "ad-nc",
                   "--folds", "2", "--seed", "3", "--retrain-epochs", "10", "--out", eval_csv}) == 0);
    CHECK(std::filesystem::exists(eval_csv));

    CHECK(run_cli({"eval", "--cohort", cohort_dir, "--checkpoint", ckpt, "--experiment", "bogus"}) == 2);

    const std::string an_dir = dir.path() + "/analysis";
    CHECK(run_cli({"analyze", "--cohort", cohort_dir, "--checkpoint", ckpt, "--from", "NC", "--to",
                   "AD", "--topk", "4", "--out", an_dir}) == 0);
    for (const char* f : {"mean_mc_NC.csv", "mean_mc_AD.csv", "delta.csv", "roi_ranking.csv",
                          "edges_q50.csv", "edges_q70.csv", "edges_q90.csv", "mean_mc_NC.bmp",
                          "mean_mc_AD.bmp", "delta.bmp"}) {
        CHECK_MESSAGE(std::filesystem::exists(an_dir + "/" + f), f);
    }

    CHECK(run_cli({"analyze", "--cohort", cohort_dir, "--checkpoint", ckpt, "--from", "XX", "--to",
                   "AD"}) == 2);
}
