#include "cmfuse/training.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <thread>

#include "cmfuse/error.hpp"

namespace cmfuse {

namespace {

struct PreparedSubject {
    const Subject* subject = nullptr;
    Tensor sc_vec;  // strict upper triangle of empirical SC
    Tensor fc_vec;  // strict upper triangle of empirical FC
    Tensor a_hat;   // normalized adjacency for the GCN
    int stage_idx = 0;
};

PreparedSubject prepare(const Subject& s) {
    PreparedSubject p;
    p.subject = &s;
    p.sc_vec = vec_upper(s.sc_emp.values(), false);
    p.fc_vec = vec_upper(s.fc_emp.values(), false);
    p.a_hat = gcn_normalize(s.sc_emp.values());
    p.stage_idx = static_cast<int>(s.stage);
    return p;
}

// Per-subject result of one phase: loss components plus the gradient
// snapshot, reduced into the store in subject order afterwards.
struct PhaseWork {
    std::vector<double> losses;
    std::vector<std::pair<std::string, Tensor>> grads;
    int predicted = -1;
};

Var neg(Var x) { return scale(x, -1.0); }

PhaseWork eval_d_phase(const PreparedSubject& p, const TrainState& state) {
    Tape tape;
    ParamBinding pbg(state.gen_store, tape);
    ParamBinding pbd = ParamBinding::grad_only(state.disc_store, tape);

    Var mc = generator_graph(tape, pbg, p.subject->bold, p.subject->sc_emp.values(), p.a_hat,
                             state.gcfg);
    Var fake_sc = decoder_sc_vec_graph(pbg, mc);
    Var fake_fc = decoder_fc_vec_graph(pbg, mc);
    Var real_sc = tape.constant_ref(&p.sc_vec);
    Var real_fc = tape.constant_ref(&p.fc_vec);

    // -log D(real) - log(1 - D(fake)) expressed on logits for stability.
    Var d_sc = add(softplus(neg(discriminator_logit_graph(pbd, HeadKind::DiscrSC, real_sc))),
                   softplus(discriminator_logit_graph(pbd, HeadKind::DiscrSC, fake_sc)));
    Var d_fc = add(softplus(neg(discriminator_logit_graph(pbd, HeadKind::DiscrFC, real_fc))),
                   softplus(discriminator_logit_graph(pbd, HeadKind::DiscrFC, fake_fc)));
    Var total = add(d_sc, d_fc);
    tape.backward(total);

    PhaseWork w;
    w.losses = {d_sc.value()[0], d_fc.value()[0]};
    w.grads = pbd.extract_grads();
    return w;
}

PhaseWork eval_g_phase(const PreparedSubject& p, const TrainState& state, const TrainConfig& cfg) {
    Tape tape;
    ParamBinding pbg = ParamBinding::grad_only(state.gen_store, tape);
    ParamBinding pbd(state.disc_store, tape);

    Var mc = generator_graph(tape, pbg, p.subject->bold, p.subject->sc_emp.values(), p.a_hat,
                             state.gcfg);
    Var fake_sc = decoder_sc_vec_graph(pbg, mc);
    Var fake_fc = decoder_fc_vec_graph(pbg, mc);
    Var z_sc = discriminator_logit_graph(pbd, HeadKind::DiscrSC, fake_sc);
    Var z_fc = discriminator_logit_graph(pbd, HeadKind::DiscrFC, fake_fc);
    Var g_adv_sc = cfg.g_adv_saturating ? neg(softplus(z_sc)) : softplus(neg(z_sc));
    Var g_adv_fc = cfg.g_adv_saturating ? neg(softplus(z_fc)) : softplus(neg(z_fc));

    Var cls_logits = classifier_logits_graph(pbg, mc);
    Var cls = softmax_xent(cls_logits, p.stage_idx);
    Var rcs_sc = mean_abs_diff(fake_sc, tape.constant_ref(&p.sc_vec));
    Var rcs_fc = mean_abs_diff(fake_fc, tape.constant_ref(&p.fc_vec));

    Var total = add(add(scale(add(g_adv_sc, g_adv_fc), cfg.w_adv), scale(cls, cfg.w_cls)),
                    scale(add(rcs_sc, rcs_fc), cfg.w_rcs));
    tape.backward(total);

    PhaseWork w;
    w.losses = {g_adv_sc.value()[0], g_adv_fc.value()[0], cls.value()[0], rcs_sc.value()[0],
                rcs_fc.value()[0]};
    const Tensor& logits = cls_logits.value();
    int best = 0;
    for (int j = 1; j < logits.cols(); ++j) {
        if (logits[static_cast<std::size_t>(j)] > logits[static_cast<std::size_t>(best)]) best = j;
    }
    w.predicted = best;
    w.grads = pbg.extract_grads();
    return w;
}

// Runs fn over [0, count) on up to `threads` workers. Output slots are
// per-index, so the result is identical to the sequential order.
void parallel_for(std::size_t count, int threads, const std::function<void(std::size_t)>& fn) {
    if (threads <= 1 || count <= 1) {
        for (std::size_t i = 0; i < count; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> cursor{0};
    auto worker = [&] {
        for (;;) {
            const std::size_t i = cursor.fetch_add(1);
            if (i >= count) break;
            fn(i);
        }
    };
    std::vector<std::thread> pool;
    const int nw = static_cast<int>(std::min<std::size_t>(static_cast<std::size_t>(threads), count));
    pool.reserve(static_cast<std::size_t>(nw));
    for (int i = 0; i < nw; ++i) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
}

void check_losses_finite(const PhaseWork& w, const char* const names[], int epoch, int batch) {
    for (std::size_t i = 0; i < w.losses.size(); ++i) {
        if (!std::isfinite(w.losses[i])) {
            throw numeric_error("non-finite loss component '" + std::string(names[i]) +
                                "' at epoch " + std::to_string(epoch) + " batch " +
                                std::to_string(batch));
        }
    }
}

}  // namespace

void TrainConfig::validate() const {
    if (epochs < 0) throw invariant_error("TrainConfig: epochs must be >= 0");
    if (batch_size <= 0) throw invariant_error("TrainConfig: batch_size must be positive");
    if (lr <= 0.0) throw invariant_error("TrainConfig: lr must be positive");
    if (w_adv < 0.0 || w_cls < 0.0 || w_rcs < 0.0) {
        throw invariant_error("TrainConfig: loss weights must be >= 0");
    }
    if (lambda_mix < 0.0 || lambda_mix > 1.0) {
        throw invariant_error("TrainConfig: lambda_mix must be in [0,1]");
    }
    if (d <= 0 || d_k <= 0 || d_v <= 0 || hidden <= 0) {
        throw invariant_error("TrainConfig: dims must be positive");
    }
}

TrainState init_train_state(int n, int T, const TrainConfig& cfg) {
    cfg.validate();
    TrainState state;
    state.gcfg = GeneratorConfig{n, T, cfg.d, cfg.d_k, cfg.d_v, cfg.lambda_mix};
    state.hcfg = HeadConfig{n, cfg.hidden};
    state.rng = Rng(cfg.seed);
    register_generator_params(state.gen_store, state.gcfg, state.rng);
    register_all_head_params(state.gen_store, state.disc_store, state.hcfg, state.rng);
    return state;
}

void train_loop(TrainState& state, const std::vector<Subject>& cohort, const TrainConfig& cfg,
                const std::function<void(const TrainState&)>& on_epoch,
                const std::function<void(const TrainState&, char)>& on_phase) {
    cfg.validate();
    if (cohort.empty()) throw invariant_error("train: cohort is empty");
    // Fresh 4-way runs need every stage; resumed or fine-tune continuations
    // may legitimately see a restricted cohort.
    if (cfg.w_cls > 0.0 && state.epoch == 0) {
        bool present[kStageCount] = {};
        for (const auto& s : cohort) present[static_cast<int>(s.stage)] = true;
        for (int i = 0; i < kStageCount; ++i) {
            if (!present[i]) {
                throw invariant_error("train: stage " + stage_name(static_cast<Stage>(i)) +
                                      " absent but classification weight > 0");
            }
        }
    }
    for (const auto& s : cohort) {
        if (s.n() != state.gcfg.n || s.t_len() != state.gcfg.T) {
            throw invariant_error("train: subject " + s.id + " shape disagrees with model config");
        }
    }

    std::vector<PreparedSubject> prepared;
    prepared.reserve(cohort.size());
    for (const auto& s : cohort) prepared.push_back(prepare(s));

    static const char* kDNames[] = {"loss_d_sc", "loss_d_fc"};
    static const char* kGNames[] = {"loss_g_adv_sc", "loss_g_adv_fc", "loss_cls", "loss_rcs_sc",
                                    "loss_rcs_fc"};

    const AdamConfig adam = cfg.adam();
    const std::size_t n_subj = prepared.size();
    std::vector<std::size_t> order(n_subj);

    for (int epoch = state.epoch; epoch < cfg.epochs; ++epoch) {
        // Reset before shuffling so the epoch order is a pure function of
        // the RNG state; resumed runs then reproduce the schedule.
        for (std::size_t i = 0; i < n_subj; ++i) order[i] = i;
        state.rng.shuffle(order);
        EpochMetrics em;
        em.epoch = epoch;
        std::size_t correct = 0;

        int batch_index = 0;
        for (std::size_t start = 0; start < n_subj; start += static_cast<std::size_t>(cfg.batch_size), ++batch_index) {
            const std::size_t bsz = std::min<std::size_t>(cfg.batch_size, n_subj - start);
            const double inv_b = 1.0 / static_cast<double>(bsz);

            // Discriminator phase: decoded outputs are constants here.
            std::vector<PhaseWork> dwork(bsz);
            parallel_for(bsz, cfg.threads, [&](std::size_t k) {
                dwork[k] = eval_d_phase(prepared[order[start + k]], state);
            });
            for (std::size_t k = 0; k < bsz; ++k) {
                check_losses_finite(dwork[k], kDNames, epoch, batch_index);
                for (const auto& [name, g] : dwork[k].grads) {
                    state.disc_store.accumulate_grad(name, g, inv_b);
                }
                em.loss_d_sc += dwork[k].losses[0];
                em.loss_d_fc += dwork[k].losses[1];
            }
            state.disc_store.adam_step(adam);
            if (on_phase) on_phase(state, 'D');

            // Generator phase: discriminators are constants here.
            std::vector<PhaseWork> gwork(bsz);
            parallel_for(bsz, cfg.threads, [&](std::size_t k) {
                gwork[k] = eval_g_phase(prepared[order[start + k]], state, cfg);
            });
            for (std::size_t k = 0; k < bsz; ++k) {
                check_losses_finite(gwork[k], kGNames, epoch, batch_index);
                for (const auto& [name, g] : gwork[k].grads) {
                    state.gen_store.accumulate_grad(name, g, inv_b);
                }
                em.loss_g_adv_sc += gwork[k].losses[0];
                em.loss_g_adv_fc += gwork[k].losses[1];
                em.loss_cls += gwork[k].losses[2];
                em.loss_rcs_sc += gwork[k].losses[3];
                em.loss_rcs_fc += gwork[k].losses[4];
                if (gwork[k].predicted == prepared[order[start + k]].stage_idx) ++correct;
            }
            state.gen_store.adam_step(adam);
            if (on_phase) on_phase(state, 'G');
        }

        const double inv_n = 1.0 / static_cast<double>(n_subj);
        em.loss_d_sc *= inv_n;
        em.loss_d_fc *= inv_n;
        em.loss_g_adv_sc *= inv_n;
        em.loss_g_adv_fc *= inv_n;
        em.loss_cls *= inv_n;
        em.loss_rcs_sc *= inv_n;
        em.loss_rcs_fc *= inv_n;
        em.train_acc = static_cast<double>(correct) * inv_n;
        state.history.push_back(em);
        state.epoch = epoch + 1;
        if (on_epoch) on_epoch(state);
    }
}

TrainState train(const std::vector<Subject>& cohort, const TrainConfig& cfg) {
    if (cohort.empty()) throw invariant_error("train: cohort is empty");
    TrainState state = init_train_state(cohort.front().n(), cohort.front().t_len(), cfg);
    train_loop(state, cohort, cfg);
    return state;
}

void write_metrics_csv(const std::string& path, const std::vector<EpochMetrics>& history) {
    std::ofstream out(path);
    if (!out) throw io_error("cannot open for writing: " + path);
    out << "epoch,loss_d_sc,loss_d_fc,loss_g_adv_sc,loss_g_adv_fc,loss_cls,loss_rcs_sc,loss_rcs_fc,train_acc\n";
    char buf[40];
    for (const auto& em : history) {
        out << em.epoch;
        const double vals[] = {em.loss_d_sc,  em.loss_d_fc,  em.loss_g_adv_sc,
                               em.loss_g_adv_fc, em.loss_cls, em.loss_rcs_sc,
                               em.loss_rcs_fc, em.train_acc};
        for (double v : vals) {
            std::snprintf(buf, sizeof(buf), "%.17g", v);
            out << ',' << buf;
        }
        out << '\n';
    }
    if (!out) throw io_error("write failed: " + path);
}

// --- loss terms ---------------------------------------------------------------

namespace {

void check_disc_flavor(const ConnMatrix& c, HeadKind kind, const char* what) {
    if (kind != HeadKind::DiscrSC && kind != HeadKind::DiscrFC) {
        throw invariant_error(std::string(what) + ": head kind is not a discriminator");
    }
    const bool want_structural = kind == HeadKind::DiscrSC;
    if (want_structural != (c.flavor() == ConnFlavor::Structural)) {
        throw invariant_error(std::string(what) + ": connectivity flavor does not match discriminator");
    }
}

}  // namespace

double loss_adversarial_d(const ConnMatrix& real, const ConnMatrix& fake, const ParamStore& disc_store,
                          HeadKind kind) {
    check_disc_flavor(real, kind, "loss_adversarial_d");
    check_disc_flavor(fake, kind, "loss_adversarial_d");
    Tape tape;
    ParamBinding pb(disc_store, tape);
    Var z_real = discriminator_logit_graph(pb, kind, tape.constant(vec_upper(real.values(), false)));
    Var z_fake = discriminator_logit_graph(pb, kind, tape.constant(vec_upper(fake.values(), false)));
    return add(softplus(neg(z_real)), softplus(z_fake)).value()[0];
}

double loss_adversarial_g(const ConnMatrix& fake, const ParamStore& disc_store, HeadKind kind,
                          bool saturating) {
    check_disc_flavor(fake, kind, "loss_adversarial_g");
    Tape tape;
    ParamBinding pb(disc_store, tape);
    Var z = discriminator_logit_graph(pb, kind, tape.constant(vec_upper(fake.values(), false)));
    Var loss = saturating ? neg(softplus(z)) : softplus(neg(z));
    return loss.value()[0];
}

double loss_classification(const MultimodalConnectivity& mc, Stage stage, const ParamStore& store) {
    Tape tape;
    ParamBinding pb(store, tape);
    Var logits = classifier_logits_graph(pb, tape.constant_ref(&mc.values));
    return softmax_xent(logits, static_cast<int>(stage)).value()[0];
}

double loss_reconstruction(const ConnMatrix& decoded, const ConnMatrix& empirical) {
    if (decoded.flavor() != empirical.flavor()) {
        throw invariant_error("loss_reconstruction: flavor mismatch");
    }
    if (decoded.n() != empirical.n()) {
        throw invariant_error("loss_reconstruction: size mismatch");
    }
    const Tensor a = vec_upper(decoded.values(), false);
    const Tensor b = vec_upper(empirical.values(), false);
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += std::fabs(a[i] - b[i]);
    return s / static_cast<double>(a.size());
}

}  // namespace cmfuse
