// Acceptance suite: one pass/fail line per criterion, exit 0 only if all
// pass. Criteria 5-8 share a single end-to-end phantom run.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "cmfuse/analysis.hpp"
#include "cmfuse/checkpoint.hpp"
#include "cmfuse/datamodel.hpp"
#include "cmfuse/evaluation.hpp"
#include "cmfuse/generator.hpp"
#include "cmfuse/gradcheck_suite.hpp"
#include "cmfuse/heads.hpp"
#include "cmfuse/phantom.hpp"
#include "cmfuse/training.hpp"
#include "helpers.hpp"

using namespace cmfuse;

namespace {

int g_failures = 0;

void report(int id, const std::string& label, bool pass, const std::string& detail) {
    std::printf("[%s] criterion %d: %s (%s)\n", pass ? "PASS" : "FAIL", id, label.c_str(),
                detail.c_str());
    std::fflush(stdout);
    if (!pass) ++g_failures;
}

double seconds_since(const std::chrono::steady_clock::time_point& t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// --- criterion 1: gradient fidelity -----------------------------------------

void criterion_1() {
    const auto t0 = std::chrono::steady_clock::now();
    const auto reports = run_gradcheck_suite(false);
    double worst = 0.0;
    std::string worst_op;
    bool pass = true;
    for (const auto& r : reports) {
        if (r.max_rel_err > worst) {
            worst = r.max_rel_err;
            worst_op = r.op;
        }
        pass = pass && r.pass();
    }
    const double secs = seconds_since(t0);
    pass = pass && secs < 120.0;
    std::ostringstream os;
    os << reports.size() << " ops, worst " << worst_op << " rel_err=" << worst << ", " << secs << "s";
    report(1, "gradient fidelity at small scale", pass, os.str());
}

// --- criterion 2: fusion algebraic invariants --------------------------------

void criterion_2() {
    Rng rng(220);
    double worst_sym = 0.0, worst_neg = 0.0, worst_tail = 0.0;
    bool pass = true;
    for (int rep = 0; rep < 200; ++rep) {
        const Tensor s = Tensor::uniform(12, 12, 1.0, rng);
        const Tensor f = Tensor::uniform(12, 4, 1.0, rng);
        const MultimodalConnectivity mc = fuse_mc(s, f);
        for (int i = 0; i < 12; ++i) {
            for (int j = 0; j < 12; ++j) {
                worst_sym = std::max(worst_sym, std::fabs(mc.values.at(i, j) - mc.values.at(j, i)));
            }
        }
        const auto eig = testutil::symmetric_eigenvalues(mc.values);
        const double max_eig = eig.front();
        worst_neg = std::max(worst_neg, -(eig.back() / std::max(1e-300, max_eig)));
        for (std::size_t idx = 4; idx < eig.size(); ++idx) {
            worst_tail = std::max(worst_tail, std::fabs(eig[idx]) / std::max(1e-300, max_eig));
        }
    }
    pass = worst_sym < 1e-12 && worst_neg < 1e-10 && worst_tail < 1e-8;
    std::ostringstream os;
    os << "sym=" << worst_sym << " min_eig_ratio=" << worst_neg << " rank_tail=" << worst_tail;
    report(2, "MC symmetry, PSD, rank bound over 200 draws", pass, os.str());
}

// --- criterion 3: closed-form loss values ------------------------------------

void criterion_3() {
    const int n = 8;
    const HeadConfig hcfg{n, 16};
    bool pass = true;
    std::ostringstream os;

    ParamStore heads;
    Rng rng(33);
    register_head_params(heads, HeadKind::Classifier, hcfg, rng);
    heads.value("cls.l1.w").fill(0.0);
    heads.value("cls.l1.b").fill(0.0);
    Rng mc_rng(34);
    const MultimodalConnectivity mc = fuse_mc(Tensor::uniform(n, n, 1.0, mc_rng),
                                              Tensor::uniform(n, 4, 1.0, mc_rng));
    const double cls = loss_classification(mc, Stage::LMCI, heads);
    pass = pass && std::fabs(cls - std::log(4.0)) < 1e-10;
    os << "L_cls=" << cls;

    ParamStore disc;
    register_head_params(disc, HeadKind::DiscrSC, hcfg, rng);
    for (std::size_t i = 0; i < disc.size(); ++i) disc.entry(i).value.fill(0.0);
    Rng sc_rng(35);
    Tensor real(n, n), fake(n, n);
    for (int i = 0; i < n; ++i) {
        for (int j = i + 1; j < n; ++j) {
            real.at(i, j) = real.at(j, i) = std::fabs(sc_rng.gaussian());
            fake.at(i, j) = fake.at(j, i) = std::fabs(sc_rng.gaussian());
        }
    }
    const double adv = loss_adversarial_d(ConnMatrix(real, ConnFlavor::Structural),
                                          ConnMatrix(fake, ConnFlavor::Structural), disc,
                                          HeadKind::DiscrSC);
    pass = pass && std::fabs(adv - 2.0 * std::log(2.0)) < 1e-10;
    os << " L_adv_d=" << adv;

    const ConnMatrix same(real, ConnFlavor::Structural);
    const double rcs = loss_reconstruction(same, same);
    pass = pass && rcs == 0.0;
    os << " L_rcs=" << rcs;

    report(3, "closed-form loss values", pass, os.str());
}

// --- criterion 4: oracle equivalence -----------------------------------------

Tensor matmul_oracle(const Tensor& a, const Tensor& b) {
    Tensor c(a.rows(), b.cols());
    for (int i = 0; i < a.rows(); ++i) {
        for (int j = 0; j < b.cols(); ++j) {
            double s = 0.0;
            for (int l = 0; l < a.cols(); ++l) s += a.at(i, l) * b.at(l, j);
            c.at(i, j) = s;
        }
    }
    return c;
}

double pearson_entry_oracle(const Tensor& bold, int i, int j) {
    const int T = bold.cols();
    double sx = 0.0, sy = 0.0, sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (int t = 0; t < T; ++t) {
        sx += bold.at(i, t);
        sy += bold.at(j, t);
        sxy += bold.at(i, t) * bold.at(j, t);
        sxx += bold.at(i, t) * bold.at(i, t);
        syy += bold.at(j, t) * bold.at(j, t);
    }
    const double m = static_cast<double>(T);
    const double cov = sxy / m - (sx / m) * (sy / m);
    return cov / std::sqrt((sxx / m - (sx / m) * (sx / m)) * (syy / m - (sy / m) * (sy / m)));
}

void criterion_4() {
    Rng rng(440);
    double worst = 0.0;
    bool pass = true;

    for (int rep = 0; rep < 100; ++rep) {
        const Tensor a = Tensor::uniform(5, 4, 2.0, rng);
        const Tensor b = Tensor::uniform(4, 3, 2.0, rng);
        worst = std::max(worst, testutil::max_abs_diff(matmul(a, b), matmul_oracle(a, b)));
    }

    for (int rep = 0; rep < 100; ++rep) {
        const Tensor bold = Tensor::gaussian(6, 40, 1.0, rng);
        const ConnMatrix fc = pearson_fc(bold);
        for (int i = 0; i < 6; ++i) {
            for (int j = i + 1; j < 6; ++j) {
                worst = std::max(worst,
                                 std::fabs(fc.values().at(i, j) - pearson_entry_oracle(bold, i, j)));
            }
        }
    }

    for (int rep = 0; rep < 100; ++rep) {
        AttentionParams p;
        p.w_q = Tensor::uniform(6, 4, 1.0, rng);
        p.w_k = Tensor::uniform(6, 4, 1.0, rng);
        p.w_v = Tensor::uniform(6, 5, 1.0, rng);
        p.fc_weight = Tensor::uniform(5, 6, 1.0, rng);
        p.fc_bias = Tensor::uniform(1, 6, 1.0, rng);
        const Tensor x = Tensor::uniform(6, 6, 1.0, rng);
        const Tensor q = matmul_oracle(x, p.w_q);
        const Tensor k = matmul_oracle(x, p.w_k);
        const Tensor v = matmul_oracle(x, p.w_v);
        Tensor weights(6, 6);
        for (int i = 0; i < 6; ++i) {
            double total = 0.0;
            std::vector<double> e(6);
            for (int j = 0; j < 6; ++j) {
                double dot = 0.0;
                for (int l = 0; l < 4; ++l) dot += q.at(i, l) * k.at(j, l);
                e[static_cast<std::size_t>(j)] = std::exp(dot / 2.0);  // sqrt(d_k)=2
                total += e[static_cast<std::size_t>(j)];
            }
            for (int j = 0; j < 6; ++j) weights.at(i, j) = e[static_cast<std::size_t>(j)] / total;
        }
        worst = std::max(worst, testutil::max_abs_diff(attention(x, p), matmul_oracle(weights, v)));
    }

    for (int rep = 0; rep < 100; ++rep) {
        Tensor vals(6, 6);
        for (int i = 0; i < 6; ++i) {
            for (int j = i + 1; j < 6; ++j) {
                vals.at(i, j) = vals.at(j, i) = std::fabs(rng.gaussian());
            }
        }
        const ConnMatrix a(vals, ConnFlavor::Structural);
        const Tensor h = Tensor::uniform(6, 6, 1.0, rng);
        const Tensor w = Tensor::uniform(6, 6, 1.0, rng);
        Tensor loops = vals;
        for (int i = 0; i < 6; ++i) loops.at(i, i) += 1.0;
        std::vector<double> deg(6, 0.0);
        for (int i = 0; i < 6; ++i) {
            for (int j = 0; j < 6; ++j) deg[static_cast<std::size_t>(i)] += loops.at(i, j);
        }
        Tensor a_hat(6, 6);
        for (int i = 0; i < 6; ++i) {
            for (int j = 0; j < 6; ++j) {
                a_hat.at(i, j) = loops.at(i, j) / std::sqrt(deg[static_cast<std::size_t>(i)] *
                                                            deg[static_cast<std::size_t>(j)]);
            }
        }
        Tensor expected = matmul_oracle(matmul_oracle(a_hat, h), w);
        for (std::size_t i = 0; i < expected.size(); ++i) expected[i] = std::max(0.0, expected[i]);
        worst = std::max(worst, testutil::max_abs_diff(gcn_layer(h, a, w), expected));
    }

    for (int rep = 0; rep < 100; ++rep) {
        Tensor x(7, 7), y(7, 7);
        for (int i = 0; i < 7; ++i) {
            for (int j = i + 1; j < 7; ++j) {
                x.at(i, j) = x.at(j, i) = std::fabs(rng.gaussian());
                y.at(i, j) = y.at(j, i) = std::fabs(rng.gaussian());
            }
        }
        double expected = 0.0;
        int count = 0;
        for (int i = 0; i < 7; ++i) {
            for (int j = i + 1; j < 7; ++j) {
                expected += std::fabs(x.at(i, j) - y.at(i, j));
                ++count;
            }
        }
        expected /= count;
        const double got = loss_reconstruction(ConnMatrix(x, ConnFlavor::Structural),
                                               ConnMatrix(y, ConnFlavor::Structural));
        worst = std::max(worst, std::fabs(got - expected));
    }

    bool metrics_ok = true;
    for (int rep = 0; rep < 100; ++rep) {
        const int n = 10 + static_cast<int>(rng.below(30));
        std::vector<int> predicted(static_cast<std::size_t>(n)), actual(static_cast<std::size_t>(n));
        for (int i = 0; i < n; ++i) {
            predicted[static_cast<std::size_t>(i)] = static_cast<int>(rng.below(2));
            actual[static_cast<std::size_t>(i)] = static_cast<int>(rng.below(2));
        }
        const Metrics m = compute_metrics(predicted, actual, 1);
        long tp = 0, fn = 0, tn = 0, fp = 0;
        for (int i = 0; i < n; ++i) {
            const bool ap = actual[static_cast<std::size_t>(i)] == 1;
            const bool pp = predicted[static_cast<std::size_t>(i)] == 1;
            tp += ap && pp;
            fn += ap && !pp;
            tn += !ap && !pp;
            fp += !ap && pp;
        }
        metrics_ok = metrics_ok && m.tp == tp && m.fn == fn && m.tn == tn && m.fp == fp;
    }

    pass = worst < 1e-10 && metrics_ok;
    std::ostringstream os;
    os << "worst numeric deviation " << worst << ", confusion counts " << (metrics_ok ? "exact" : "WRONG");
    report(4, "oracle equivalence of core kernels", pass, os.str());
}

// --- criteria 5-8: end-to-end phantom run ------------------------------------

struct EndToEnd {
    PhantomSpec spec;
    TrainConfig cfg;
    std::vector<Subject> cohort;
    TrainState trained;
    std::string metrics_csv;
    double fourway_acc = 0.0;
    double adnc_acc = 0.0;
    double train_seconds = 0.0;
};

std::string metrics_to_string(const std::vector<EpochMetrics>& history) {
    const std::string path = (std::filesystem::temp_directory_path() / "cmfuse_acc_metrics.csv").string();
    write_metrics_csv(path, history);
    std::ifstream in(path, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    std::filesystem::remove(path);
    return ss.str();
}

EndToEnd run_end_to_end(int threads) {
    EndToEnd e2e;
    e2e.spec = PhantomSpec{};  // defaults: n=32, T=120, 40 subjects/stage
    e2e.cfg = TrainConfig{};   // defaults: 150 epochs, lr 1e-3, wd 0.01, betas (0.9,0.99)
    e2e.cfg.threads = threads;
    e2e.cohort = generate_cohort(e2e.spec, threads);

    const auto t0 = std::chrono::steady_clock::now();
    e2e.trained = train(e2e.cohort, e2e.cfg);
    e2e.train_seconds = seconds_since(t0);
    e2e.metrics_csv = metrics_to_string(e2e.trained.history);

    EvalConfig ecfg;  // 5 folds, seed 17, head retrain
    const ExperimentResult fourway = fourway_experiment(e2e.cohort, e2e.trained, e2e.cfg, ecfg);
    const ExperimentResult adnc =
        binary_experiment(e2e.cohort, e2e.trained, Stage::AD, Stage::NC, e2e.cfg, ecfg);
    e2e.fourway_acc = fourway.mean_accuracy;
    e2e.adnc_acc = adnc.mean_accuracy;
    return e2e;
}

void criterion_5(const EndToEnd& e2e) {
    const bool pass = e2e.fourway_acc >= 0.85 && e2e.adnc_acc >= 0.90 && e2e.train_seconds <= 1200.0;
    std::ostringstream os;
    os << "fourway acc=" << e2e.fourway_acc << " ad-nc acc=" << e2e.adnc_acc << " train "
       << e2e.train_seconds << "s over " << e2e.cfg.epochs << " epochs";
    report(5, "end-to-end phantom classification", pass, os.str());
}

void criterion_6(const EndToEnd& e2e) {
    const Tensor mean_nc = group_mean_mc(e2e.cohort, e2e.trained.gen_store, e2e.trained.gcfg, Stage::NC);
    const Tensor mean_ad = group_mean_mc(e2e.cohort, e2e.trained.gen_store, e2e.trained.gcfg, Stage::AD);
    const StageDelta delta = delta_connectivity(mean_nc, mean_ad, 0.0, Stage::NC, Stage::AD);
    const auto top8 = top_k_rois(delta, 8);

    const std::set<int> injected(e2e.spec.affected_rois.begin(), e2e.spec.affected_rois.end());
    int hits = 0;
    std::ostringstream os;
    os << "top8 = [";
    for (std::size_t i = 0; i < top8.size(); ++i) {
        if (injected.count(top8[i].roi)) ++hits;
        os << (i ? " " : "") << top8[i].roi;
    }
    os << "], injected hits = " << hits << "/8";
    report(6, "biomarker recovery of injected ROIs", hits >= 6, os.str());
}

double mean_reconstruction_l1(const std::vector<Subject>& cohort, const TrainState& state) {
    double total = 0.0;
    for (const auto& s : cohort) {
        const MultimodalConnectivity mc = generator_forward(s, state.gen_store, state.gcfg);
        const ConnMatrix dec_sc = decode_sc(mc, state.gen_store);
        const ConnMatrix dec_fc = decode_fc(mc, state.gen_store);
        total += 0.5 * (loss_reconstruction(dec_sc, s.sc_emp) + loss_reconstruction(dec_fc, s.fc_emp));
    }
    return total / static_cast<double>(cohort.size());
}

void criterion_7(const EndToEnd& e2e) {
    const TrainState init = init_train_state(e2e.spec.n, e2e.spec.T, e2e.cfg);
    const double at_init = mean_reconstruction_l1(e2e.cohort, init);
    const double at_end = mean_reconstruction_l1(e2e.cohort, e2e.trained);
    const bool pass = at_end <= 0.5 * at_init;
    std::ostringstream os;
    os << "mean L1 " << at_init << " -> " << at_end << " (ratio " << at_end / at_init << ")";
    report(7, "reconstruction efficacy", pass, os.str());
}

void criterion_8(const EndToEnd& first) {
    const EndToEnd repeat = run_end_to_end(1);
    const bool csv_equal = repeat.metrics_csv == first.metrics_csv;

    const EndToEnd threaded = run_end_to_end(3);
    const bool metrics_equal =
        threaded.fourway_acc == first.fourway_acc && threaded.adnc_acc == first.adnc_acc;
    const bool csv_equal_threaded = threaded.metrics_csv == first.metrics_csv;

    std::ostringstream os;
    os << "single-thread CSV " << (csv_equal ? "bitwise-equal" : "DIFFERS") << ", multi-thread metrics "
       << (metrics_equal ? "identical" : "DIFFER") << ", multi-thread CSV "
       << (csv_equal_threaded ? "bitwise-equal" : "differs");
    report(8, "determinism across reruns and thread counts", csv_equal && metrics_equal, os.str());
}

}  // namespace

int main() {
    criterion_1();
    criterion_2();
    criterion_3();
    criterion_4();

    std::printf("running end-to-end phantom (criteria 5-8)...\n");
    std::fflush(stdout);
    const EndToEnd e2e = run_end_to_end(1);
    criterion_5(e2e);
    criterion_6(e2e);
    criterion_7(e2e);
    criterion_8(e2e);

    std::printf("%s\n", g_failures == 0 ? "ALL CRITERIA PASS" : "CRITERIA FAILED");
    return g_failures == 0 ? 0 : 1;
}
