#include "cmfuse/cli.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <vector>

#include <CLI11.hpp>

#include "cmfuse/analysis.hpp"
#include "cmfuse/checkpoint.hpp"
#include "cmfuse/config.hpp"
#include "cmfuse/datamodel.hpp"
#include "cmfuse/error.hpp"
#include "cmfuse/evaluation.hpp"
#include "cmfuse/gradcheck_suite.hpp"
#include "cmfuse/heatmap.hpp"
#include "cmfuse/phantom.hpp"
#include "cmfuse/training.hpp"

namespace fs = std::filesystem;

namespace cmfuse::cli {

namespace {

void log_kv(const std::string& key, const std::string& value, const std::string& source) {
    std::cout << "config: " << key << " = " << value << " (" << source << ")\n";
}

Stage parse_stage(const std::string& s) {
    const auto stage = stage_from_name(s);
    if (!stage) throw usage_error("unknown stage '" + s + "' (expected NC/EMCI/LMCI/AD)");
    return *stage;
}

void write_text_file(const std::string& path, const std::string& content) {
    std::ofstream out(path);
    if (!out) throw io_error("cannot open for writing: " + path);
    out << content;
    if (!out) throw io_error("write failed: " + path);
}

int cmd_gen_phantom(const std::string& spec_path, const std::string& out_dir,
                    const std::vector<std::pair<std::string, std::string>>& overrides, int threads) {
    PhantomSpec spec = phantom_spec_from_kv(parse_kv_file(spec_path));
    for (const auto& [key, value] : overrides) {
        if (key == "seed") spec.seed = std::stoull(value);
        else if (key == "n") spec.n = std::stoi(value);
        else if (key == "T") spec.T = std::stoi(value);
        log_kv(key, value, "flag");
    }
    spec.validate();

    const auto cohort = generate_cohort(spec, threads);
    save_cohort(cohort, out_dir);
    write_text_file(out_dir + "/phantom_spec.txt", phantom_spec_to_kv(spec));
    std::cout << "wrote " << cohort.size() << " subjects to " << out_dir << "\n";
    return 0;
}

int cmd_train(const std::string& cohort_dir, const std::string& config_path,
              const std::string& out_dir, CLI::App* sub, TrainConfig flag_values, int threads,
              bool threads_set) {
    TrainConfig cfg = train_config_from_kv(parse_kv_file(config_path));
    if (threads_set) cfg.threads = threads;

    // Flag overrides beat file values; log the effective value of each key
    // with its provenance.
    const auto overridden = [&](const char* flag) { return sub->count(flag) > 0; };
    if (overridden("--epochs")) cfg.epochs = flag_values.epochs;
    if (overridden("--seed")) cfg.seed = flag_values.seed;
    if (overridden("--lr")) cfg.lr = flag_values.lr;
    if (overridden("--batch-size")) cfg.batch_size = flag_values.batch_size;
    cfg.validate();
    log_kv("epochs", std::to_string(cfg.epochs), overridden("--epochs") ? "flag" : "file/default");
    log_kv("seed", std::to_string(cfg.seed), overridden("--seed") ? "flag" : "file/default");
    log_kv("lr", std::to_string(cfg.lr), overridden("--lr") ? "flag" : "file/default");
    log_kv("batch_size", std::to_string(cfg.batch_size),
           overridden("--batch-size") ? "flag" : "file/default");

    fs::create_directories(out_dir);
    if (cfg.checkpoint_path.empty()) cfg.checkpoint_path = out_dir + "/checkpoint.bin";
    if (cfg.metrics_path.empty()) cfg.metrics_path = out_dir + "/metrics.csv";
    write_text_file(out_dir + "/effective_config.txt", train_config_to_kv(cfg));

    const auto cohort = load_cohort(cohort_dir);
    if (cohort.empty()) throw invariant_error("train: cohort is empty");

    TrainState state = init_train_state(cohort.front().n(), cohort.front().t_len(), cfg);
    train_loop(state, cohort, cfg, [&](const TrainState& st) {
        const EpochMetrics& em = st.history.back();
        std::printf("epoch %d: d_sc=%.4f d_fc=%.4f g_adv_sc=%.4f g_adv_fc=%.4f cls=%.4f "
                    "rcs_sc=%.4f rcs_fc=%.4f acc=%.3f\n",
                    em.epoch, em.loss_d_sc, em.loss_d_fc, em.loss_g_adv_sc, em.loss_g_adv_fc,
                    em.loss_cls, em.loss_rcs_sc, em.loss_rcs_fc, em.train_acc);
        std::fflush(stdout);
        if (cfg.checkpoint_every > 0 && st.epoch % cfg.checkpoint_every == 0) {
            save_checkpoint(st, cfg.checkpoint_path);
        }
    });
    save_checkpoint(state, cfg.checkpoint_path);
    write_metrics_csv(cfg.metrics_path, state.history);
    std::cout << "checkpoint: " << cfg.checkpoint_path << "\nmetrics: " << cfg.metrics_path << "\n";
    return 0;
}

int cmd_eval(const std::string& cohort_dir, const std::string& checkpoint_path,
             const std::string& experiment, int folds, std::uint64_t seed,
             const std::string& out_path, int retrain_epochs, const std::string& mode) {
    const auto cohort = load_cohort(cohort_dir);
    const TrainState trained = load_checkpoint(checkpoint_path);

    EvalConfig ecfg;
    ecfg.folds = folds;
    ecfg.seed = seed;
    ecfg.retrain_epochs = retrain_epochs;
    if (mode == "head") ecfg.mode = EvalMode::RetrainHead;
    else if (mode == "finetune") ecfg.mode = EvalMode::FineTune;
    else throw usage_error("unknown eval mode '" + mode + "' (expected head|finetune)");

    TrainConfig tcfg;
    tcfg.d = trained.gcfg.d;
    tcfg.d_k = trained.gcfg.d_k;
    tcfg.d_v = trained.gcfg.d_v;
    tcfg.lambda_mix = trained.gcfg.lambda;
    tcfg.hidden = trained.hcfg.hidden;

    ExperimentResult result;
    if (experiment == "fourway") {
        result = fourway_experiment(cohort, trained, tcfg, ecfg);
    } else if (experiment == "ad-nc") {
        result = binary_experiment(cohort, trained, Stage::AD, Stage::NC, tcfg, ecfg);
    } else if (experiment == "lmci-nc") {
        result = binary_experiment(cohort, trained, Stage::LMCI, Stage::NC, tcfg, ecfg);
    } else if (experiment == "emci-nc") {
        result = binary_experiment(cohort, trained, Stage::EMCI, Stage::NC, tcfg, ecfg);
    } else {
        throw usage_error("unknown experiment '" + experiment +
                          "' (expected ad-nc|lmci-nc|emci-nc|fourway)");
    }

    const std::string path = out_path.empty() ? experiment + "_metrics.csv" : out_path;
    write_experiment_csv(path, result);
    std::cout << experiment_summary(result);
    std::cout << "metrics: " << path << "\n";
    return 0;
}

int cmd_analyze(const std::string& cohort_dir, const std::string& checkpoint_path,
                const std::string& from_str, const std::string& to_str, double tau_q, bool tau_set,
                int topk, const std::string& out_dir) {
    const Stage from = parse_stage(from_str);
    const Stage to = parse_stage(to_str);
    const auto cohort = load_cohort(cohort_dir);
    const TrainState trained = load_checkpoint(checkpoint_path);
    fs::create_directories(out_dir);

    const Tensor mean_from = group_mean_mc(cohort, trained.gen_store, trained.gcfg, from);
    const Tensor mean_to = group_mean_mc(cohort, trained.gen_store, trained.gcfg, to);
    write_csv_matrix(out_dir + "/mean_mc_" + stage_name(from) + ".csv", mean_from);
    write_csv_matrix(out_dir + "/mean_mc_" + stage_name(to) + ".csv", mean_to);
    write_heatmap_bmp(out_dir + "/mean_mc_" + stage_name(from) + ".bmp", mean_from, false);
    write_heatmap_bmp(out_dir + "/mean_mc_" + stage_name(to) + ".bmp", mean_to, false);

    const StageDelta base = delta_connectivity(mean_from, mean_to, 0.0, from, to);
    write_csv_matrix(out_dir + "/delta.csv", base.delta);
    write_heatmap_bmp(out_dir + "/delta.bmp", base.delta, true);

    const std::vector<double> quantiles = tau_set ? std::vector<double>{tau_q}
                                                  : std::vector<double>{0.5, 0.7, 0.9};
    for (double q : quantiles) {
        const double tau = tau_from_quantile(base.delta, q);
        const StageDelta d = delta_connectivity(mean_from, mean_to, tau, from, to);
        char qbuf[16];
        std::snprintf(qbuf, sizeof(qbuf), "%02d", static_cast<int>(std::lround(q * 100)));
        const std::string path = out_dir + "/edges_q" + qbuf + ".csv";
        std::ofstream out(path);
        if (!out) throw io_error("cannot open for writing: " + path);
        out << "i,j,delta,class\n";
        char buf[40];
        for (const auto& e : d.increased) {
            std::snprintf(buf, sizeof(buf), "%.17g", e.delta);
            out << e.i << ',' << e.j << ',' << buf << ",increased\n";
        }
        for (const auto& e : d.decreased) {
            std::snprintf(buf, sizeof(buf), "%.17g", e.delta);
            out << e.i << ',' << e.j << ',' << buf << ",decreased\n";
        }
        std::cout << "tau(q=" << q << ") = " << tau << ": " << d.increased.size() << " increased, "
                  << d.decreased.size() << " decreased -> " << path << "\n";
    }

    const auto ranking = top_k_rois(base, topk);
    const std::string rank_path = out_dir + "/roi_ranking.csv";
    std::ofstream out(rank_path);
    if (!out) throw io_error("cannot open for writing: " + rank_path);
    out << "rank,roi,score\n";
    char buf[40];
    for (std::size_t r = 0; r < ranking.size(); ++r) {
        std::snprintf(buf, sizeof(buf), "%.17g", ranking[r].score);
        out << r + 1 << ',' << ranking[r].roi << ',' << buf << '\n';
        std::cout << "roi " << ranking[r].roi << " score " << ranking[r].score << "\n";
    }
    std::cout << "ranking: " << rank_path << "\n";
    return 0;
}

int cmd_gradcheck(const std::string& scale) {
    if (scale != "small" && scale != "full") {
        throw usage_error("unknown scale '" + scale + "' (expected small|full)");
    }
    const auto reports = run_gradcheck_suite(scale == "full");
    bool all_pass = true;
    for (const auto& r : reports) {
        std::printf("%-32s max_rel_err=%.3e %s\n", r.op.c_str(), r.max_rel_err,
                    r.pass() ? "PASS" : "FAIL");
        all_pass = all_pass && r.pass();
    }
    if (!all_pass) throw numeric_error("gradient check failed");
    return 0;
}

}  // namespace

int run(int argc, const char* const* argv) {
    CLI::App app{"cross-modal structure-function fusion of brain connectivity"};
    app.require_subcommand(1);
    int threads = 1;
    app.add_option("--threads", threads, "worker thread cap for parallel sections");

    // gen-phantom
    auto* gen = app.add_subcommand("gen-phantom", "generate a synthetic cohort");
    std::string spec_path, gen_out;
    std::uint64_t gen_seed = 0;
    int gen_n = 0, gen_t = 0;
    gen->add_option("--spec", spec_path, "phantom spec file")->required();
    gen->add_option("--out", gen_out, "output cohort directory")->required();
    gen->add_option("--seed", gen_seed, "override spec seed");
    gen->add_option("--n", gen_n, "override ROI count");
    gen->add_option("--T", gen_t, "override time points");

    // train
    auto* tr = app.add_subcommand("train", "train the model on a cohort");
    std::string tr_cohort, tr_config, tr_out;
    TrainConfig tr_flags;
    tr->add_option("--cohort", tr_cohort, "cohort directory")->required();
    tr->add_option("--config", tr_config, "train config file")->required();
    tr->add_option("--out", tr_out, "output directory")->required();
    tr->add_option("--epochs", tr_flags.epochs, "override epochs");
    tr->add_option("--seed", tr_flags.seed, "override seed");
    tr->add_option("--lr", tr_flags.lr, "override learning rate");
    tr->add_option("--batch-size", tr_flags.batch_size, "override batch size");

    // eval
    auto* ev = app.add_subcommand("eval", "classification experiments");
    std::string ev_cohort, ev_ckpt, ev_experiment, ev_out, ev_mode = "head";
    int ev_folds = 5, ev_retrain = 300;
    std::uint64_t ev_seed = 17;
    ev->add_option("--cohort", ev_cohort, "cohort directory")->required();
    ev->add_option("--checkpoint", ev_ckpt, "trained checkpoint")->required();
    ev->add_option("--experiment", ev_experiment, "ad-nc|lmci-nc|emci-nc|fourway")->required();
    ev->add_option("--folds", ev_folds, "cross-validation folds");
    ev->add_option("--seed", ev_seed, "fold assignment / retrain seed");
    ev->add_option("--out", ev_out, "metrics CSV path");
    ev->add_option("--retrain-epochs", ev_retrain, "classifier retrain epochs per fold");
    ev->add_option("--mode", ev_mode, "head|finetune");

    // analyze
    auto* an = app.add_subcommand("analyze", "stage-delta biomarker analysis");
    std::string an_cohort, an_ckpt, an_from, an_to, an_out = "analysis";
    double an_tau = 0.5;
    int an_topk = 8;
    an->add_option("--cohort", an_cohort, "cohort directory")->required();
    an->add_option("--checkpoint", an_ckpt, "trained checkpoint")->required();
    an->add_option("--from", an_from, "source stage")->required();
    an->add_option("--to", an_to, "target stage")->required();
    auto* tau_opt = an->add_option("--tau", an_tau, "threshold quantile in [0,1)");
    an->add_option("--topk", an_topk, "ROIs to rank");
    an->add_option("--out", an_out, "output directory");

    // gradcheck
    auto* gc = app.add_subcommand("gradcheck", "finite-difference gradient suite");
    std::string gc_scale = "small";
    gc->add_option("--scale", gc_scale, "small|full");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << "error 2: " << e.what() << "\n";
        return 2;
    }

    try {
        if (gen->parsed()) {
            std::vector<std::pair<std::string, std::string>> overrides;
            if (gen->count("--seed")) overrides.emplace_back("seed", std::to_string(gen_seed));
            if (gen->count("--n")) overrides.emplace_back("n", std::to_string(gen_n));
            if (gen->count("--T")) overrides.emplace_back("T", std::to_string(gen_t));
            return cmd_gen_phantom(spec_path, gen_out, overrides, threads);
        }
        if (tr->parsed()) {
            return cmd_train(tr_cohort, tr_config, tr_out, tr, tr_flags, threads,
                             app.count("--threads") > 0);
        }
        if (ev->parsed()) {
            return cmd_eval(ev_cohort, ev_ckpt, ev_experiment, ev_folds, ev_seed, ev_out, ev_retrain,
                            ev_mode);
        }
        if (an->parsed()) {
            return cmd_analyze(an_cohort, an_ckpt, an_from, an_to, an_tau, tau_opt->count() > 0,
                               an_topk, an_out);
        }
        if (gc->parsed()) return cmd_gradcheck(gc_scale);
        throw usage_error("no subcommand given");
    } catch (const Error& e) {
        std::cerr << "error " << e.exit_code() << ": " << e.what() << "\n";
        return e.exit_code();
    } catch (const std::exception& e) {
        std::cerr << "error 1: unexpected: " << e.what() << "\n";
        return 1;
    }
}

}  // namespace cmfuse::cli
