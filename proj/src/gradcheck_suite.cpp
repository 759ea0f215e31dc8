#include "cmfuse/gradcheck_suite.hpp"

#include <cmath>

#include "cmfuse/grad_check.hpp"
#include "cmfuse/generator.hpp"
#include "cmfuse/heads.hpp"
#include "cmfuse/training.hpp"

namespace cmfuse {

namespace {

constexpr int kProbes = 120;
constexpr double kStep = 1e-5;

struct Dims {
    int n, T, d, d_k, d_v, hidden;
};

// Uniform values kept away from zero so ReLU/|.| kinks stay clear of the
// finite-difference step.
Tensor off_zero(int rows, int cols, Rng& rng) {
    Tensor t(rows, cols);
    for (std::size_t i = 0; i < t.size(); ++i) {
        const double u = rng.uniform(-1.0, 1.0);
        t[i] = (u >= 0.0 ? 1.0 : -1.0) * (0.05 + std::fabs(u));
    }
    return t;
}

double run_check(const GradFn& f, ParamStore& store, std::uint64_t probe_seed) {
    Rng rng(probe_seed);
    return grad_check(f, store, kProbes, kStep, rng);
}

// Deep compositions need a second step size: near-flat coordinates are
// roundoff-limited at 1e-5 while high-curvature ones are truncation-limited
// at 2e-3; each coordinate counts at its better-conditioned step.
double run_check_deep(const GradFn& f, ParamStore& store, std::uint64_t probe_seed) {
    Rng rng(probe_seed);
    return grad_check(f, store, kProbes, kStep, rng, 2e-3);
}

// Loss = sum(coeffs .* graph_output); fixed coefficients make the scalar
// sensitive to every output entry.
OpGradReport check_simple(const std::string& name, ParamStore& store, const Tensor& coeffs,
                          const std::function<Var(Tape&, ParamBinding&)>& build) {
    auto f = [&](bool accumulate) {
        Tape tape;
        ParamBinding pb(store, tape, true);
        Var loss = weighted_sum(build(tape, pb), coeffs);
        if (accumulate) {
            tape.backward(loss);
            pb.accumulate(1.0);
        }
        return loss.value()[0];
    };
    return {name, run_check(f, store, hash_string(name))};
}

OpGradReport check_scalar(const std::string& name, ParamStore& store,
                          const std::function<Var(Tape&, ParamBinding&)>& build) {
    auto f = [&](bool accumulate) {
        Tape tape;
        ParamBinding pb(store, tape, true);
        Var loss = build(tape, pb);
        if (accumulate) {
            tape.backward(loss);
            pb.accumulate(1.0);
        }
        return loss.value()[0];
    };
    return {name, run_check(f, store, hash_string(name))};
}

void register_attention_inputs(ParamStore& store, const std::string& prefix, int d_x, int d_k,
                               int d_v, int d_y, Rng& rng) {
    register_attention_params(store, prefix, d_x, d_k, d_v, d_y, rng);
}

}  // namespace

Subject make_test_subject(int n, int T, std::uint64_t seed, Stage stage) {
    Rng rng(seed);
    Subject s;
    s.id = "test_" + std::to_string(seed);
    s.stage = stage;
    s.bold = Tensor::gaussian(n, T, 1.0, rng);
    Tensor sc(n, n);
    for (int i = 0; i < n; ++i) {
        for (int j = i + 1; j < n; ++j) {
            const double w = std::fabs(rng.gaussian());
            sc.at(i, j) = w;
            sc.at(j, i) = w;
        }
    }
    s.sc_emp = ConnMatrix(std::move(sc), ConnFlavor::Structural);
    s.fc_emp = pearson_fc(s.bold);
    return s;
}

std::vector<OpGradReport> run_gradcheck_suite(bool full_scale) {
    const Dims dm = full_scale ? Dims{32, 120, 16, 16, 16, 64} : Dims{8, 30, 4, 4, 4, 16};
    std::vector<OpGradReport> reports;
    Rng rng(20250810);

    // matmul
    {
        ParamStore store;
        store.add("A", off_zero(5, 4, rng));
        store.add("B", off_zero(4, 3, rng));
        const Tensor coeffs = Tensor::uniform(5, 3, 1.0, rng);
        reports.push_back(check_simple("matmul", store, coeffs, [](Tape&, ParamBinding& pb) {
            return matmul(pb.use("A"), pb.use("B"));
        }));
    }
    // softmax_rows
    {
        ParamStore store;
        store.add("X", Tensor::uniform(6, 5, 2.0, rng));
        const Tensor coeffs = Tensor::uniform(6, 5, 1.0, rng);
        reports.push_back(check_simple("softmax_rows", store, coeffs, [](Tape&, ParamBinding& pb) {
            return softmax_rows(pb.use("X"));
        }));
    }
    // elementwise activations
    {
        const std::pair<std::string, Var (*)(Var)> acts[] = {
            {"relu", relu}, {"softplus", softplus}, {"tanh", tanh_op}, {"sigmoid", sigmoid_op}};
        for (const auto& [name, fn] : acts) {
            ParamStore store;
            store.add("X", off_zero(4, 6, rng));
            const Tensor coeffs = Tensor::uniform(4, 6, 1.0, rng);
            auto fnp = fn;
            reports.push_back(check_simple(name, store, coeffs, [fnp](Tape&, ParamBinding& pb) {
                return fnp(pb.use("X"));
            }));
        }
    }
    // conv1d valid / same (kernel and input both checked)
    {
        ParamStore store;
        store.add("X", off_zero(4, dm.T, rng));
        store.add("k", Tensor::uniform(1, 10, 0.5, rng));
        const Tensor coeffs = Tensor::uniform(4, dm.T - 9, 1.0, rng);
        reports.push_back(check_simple("conv1d_valid", store, coeffs, [](Tape&, ParamBinding& pb) {
            return conv1d_rows(pb.use("X"), pb.use("k"), ConvMode::Valid);
        }));
    }
    {
        ParamStore store;
        store.add("X", off_zero(4, 12, rng));
        store.add("k", Tensor::uniform(1, 10, 0.5, rng));
        const Tensor coeffs = Tensor::uniform(4, 12, 1.0, rng);
        reports.push_back(check_simple("conv1d_same", store, coeffs, [](Tape&, ParamBinding& pb) {
            return conv1d_rows(pb.use("X"), pb.use("k"), ConvMode::Same);
        }));
    }
    // affine_rows
    {
        ParamStore store;
        store.add("X", Tensor::uniform(5, 4, 1.0, rng));
        store.add("W", Tensor::uniform(4, 6, 1.0, rng));
        store.add("b", Tensor::uniform(1, 6, 1.0, rng));
        const Tensor coeffs = Tensor::uniform(5, 6, 1.0, rng);
        reports.push_back(check_simple("affine_rows", store, coeffs, [](Tape&, ParamBinding& pb) {
            return affine_rows(pb.use("X"), pb.use("W"), pb.use("b"));
        }));
    }
    // L1 reduction
    {
        ParamStore store;
        store.add("A", Tensor::uniform(5, 7, 1.0, rng));
        store.add("B", Tensor::uniform(5, 7, 1.0, rng));
        reports.push_back(check_scalar("l1_mean", store, [](Tape&, ParamBinding& pb) {
            return mean_abs_diff(pb.use("A"), pb.use("B"));
        }));
    }
    // softmax cross-entropy
    {
        ParamStore store;
        store.add("z", Tensor::uniform(1, kStageCount, 2.0, rng));
        reports.push_back(check_scalar("softmax_xent", store, [](Tape&, ParamBinding& pb) {
            return softmax_xent(pb.use("z"), 2);
        }));
    }
    // attention and both transformers
    {
        ParamStore store;
        Rng init(11);
        store.add("X", Tensor::uniform(dm.n, dm.d, 1.0, init));
        register_attention_inputs(store, "att", dm.d, dm.d_k, dm.d_v, dm.n, init);
        const Tensor coeffs = Tensor::uniform(dm.n, dm.d_v, 1.0, rng);
        reports.push_back(check_simple("attention", store, coeffs, [](Tape&, ParamBinding& pb) {
            AttentionVars av = bind_attention(pb, "att", 0.1);
            return attention_graph(pb.use("X"), av);
        }));
    }
    {
        ParamStore store;
        Rng init(12);
        store.add("F", Tensor::uniform(dm.n, dm.d, 1.0, init));
        store.add("S", Tensor::uniform(dm.n, dm.n, 1.0, init));
        register_attention_inputs(store, "f2s", dm.d, dm.d_k, dm.d_v, dm.n, init);
        const Tensor coeffs = Tensor::uniform(dm.n, dm.n, 1.0, rng);
        reports.push_back(check_simple("transformer_f2s", store, coeffs, [](Tape&, ParamBinding& pb) {
            AttentionVars av = bind_attention(pb, "f2s", 0.1);
            return transformer_graph(pb.use("F"), pb.use("S"), av);
        }));
    }
    {
        ParamStore store;
        Rng init(13);
        store.add("F", Tensor::uniform(dm.n, dm.d, 1.0, init));
        store.add("S", Tensor::uniform(dm.n, dm.n, 1.0, init));
        register_attention_inputs(store, "s2f", dm.n, dm.d_k, dm.d_v, dm.d, init);
        const Tensor coeffs = Tensor::uniform(dm.n, dm.d, 1.0, rng);
        reports.push_back(check_simple("transformer_s2f", store, coeffs, [](Tape&, ParamBinding& pb) {
            AttentionVars av = bind_attention(pb, "s2f", 0.1);
            return transformer_graph(pb.use("S"), pb.use("F"), av);
        }));
    }
    // gcn_layer (H and W differentiable; adjacency fixed)
    {
        const Subject subj = make_test_subject(dm.n, dm.T, 90001);
        const Tensor a_hat = gcn_normalize(subj.sc_emp.values());
        ParamStore store;
        Rng init(14);
        store.add("H", off_zero(dm.n, dm.n, init));
        store.add("W", Tensor::uniform(dm.n, dm.n, 0.5, init));
        const Tensor coeffs = Tensor::uniform(dm.n, dm.n, 1.0, rng);
        reports.push_back(check_simple("gcn_layer", store, coeffs, [&a_hat](Tape& tape, ParamBinding& pb) {
            return gcn_graph(pb.use("H"), tape.constant_ref(&a_hat), pb.use("W"));
        }));
    }
    // conv_bold block 1: kernel + projection
    {
        const Subject subj = make_test_subject(4, dm.T, 90002);
        ParamStore store;
        Rng init(15);
        store.add("k", Tensor::uniform(1, 10, 0.5, init));
        store.add("P", Tensor::uniform(dm.T - 9, dm.d, 0.5, init));
        const Tensor coeffs = Tensor::uniform(4, dm.d, 1.0, rng);
        reports.push_back(check_simple("conv_bold", store, coeffs, [&subj](Tape& tape, ParamBinding& pb) {
            Var conv = relu(conv1d_rows(tape.constant_ref(&subj.bold), pb.use("k"), ConvMode::Valid));
            return matmul(conv, pb.use("P"));
        }));
    }
    // fuse_mc
    {
        ParamStore store;
        Rng init(16);
        store.add("S", Tensor::uniform(dm.n, dm.n, 1.0, init));
        store.add("F", Tensor::uniform(dm.n, dm.d, 1.0, init));
        const Tensor coeffs = Tensor::uniform(dm.n, dm.n, 1.0, rng);
        reports.push_back(check_simple("fuse_mc", store, coeffs, [](Tape&, ParamBinding& pb) {
            return fuse_mc_graph(pb.use("S"), pb.use("F"));
        }));
    }
    // decoders through fuse
    {
        const HeadConfig hcfg{dm.n, dm.hidden};
        for (const auto& [name, kind] : {std::pair<std::string, HeadKind>{"decode_sc", HeadKind::DecoderSC},
                                         {"decode_fc", HeadKind::DecoderFC}}) {
            ParamStore store;
            Rng init(17);
            store.add("S", Tensor::uniform(dm.n, dm.n, 0.7, init));
            store.add("F", Tensor::uniform(dm.n, dm.d, 0.7, init));
            register_head_params(store, kind, hcfg, init);
            const Tensor coeffs = Tensor::uniform(1, hcfg.strict_len(), 1.0, rng);
            const HeadKind k = kind;
            reports.push_back(check_simple(name, store, coeffs, [k](Tape&, ParamBinding& pb) {
                Var mc = fuse_mc_graph(pb.use("S"), pb.use("F"));
                Var h = head_mlp_graph(pb, k, tri_upper(mc, true));
                return k == HeadKind::DecoderSC ? softplus(h) : tanh_op(h);
            }));
        }
    }
    // discriminator
    {
        const HeadConfig hcfg{dm.n, dm.hidden};
        ParamStore store;
        Rng init(18);
        store.add("x", Tensor::uniform(1, hcfg.strict_len(), 1.0, init));
        register_head_params(store, HeadKind::DiscrSC, hcfg, init);
        reports.push_back(check_scalar("discriminate", store, [](Tape&, ParamBinding& pb) {
            return sigmoid_op(discriminator_logit_graph(pb, HeadKind::DiscrSC, pb.use("x")));
        }));
    }
    // classifier + classification loss
    {
        const HeadConfig hcfg{dm.n, dm.hidden};
        ParamStore store;
        Rng init(19);
        store.add("MC", Tensor::uniform(dm.n, dm.n, 1.0, init));
        register_head_params(store, HeadKind::Classifier, hcfg, init);
        reports.push_back(check_scalar("loss_classification", store, [](Tape&, ParamBinding& pb) {
            Var mc = symmetrize(pb.use("MC"));
            return softmax_xent(head_mlp_graph(pb, HeadKind::Classifier, tri_upper(mc, true)), 1);
        }));
    }
    // adversarial D loss w.r.t. discriminator parameters
    {
        const HeadConfig hcfg{dm.n, dm.hidden};
        ParamStore store;
        Rng init(20);
        register_head_params(store, HeadKind::DiscrSC, hcfg, init);
        Rng data(21);
        const Tensor real = Tensor::uniform(1, hcfg.strict_len(), 1.0, data);
        const Tensor fake = Tensor::uniform(1, hcfg.strict_len(), 1.0, data);
        reports.push_back(check_scalar("loss_adversarial_d", store, [&](Tape& tape, ParamBinding& pb) {
            Var zr = discriminator_logit_graph(pb, HeadKind::DiscrSC, tape.constant_ref(&real));
            Var zf = discriminator_logit_graph(pb, HeadKind::DiscrSC, tape.constant_ref(&fake));
            return add(softplus(scale(zr, -1.0)), softplus(zf));
        }));
    }
    // reconstruction loss through a decoder
    {
        const HeadConfig hcfg{dm.n, dm.hidden};
        ParamStore store;
        Rng init(22);
        store.add("MC", Tensor::uniform(dm.n, dm.n, 1.0, init));
        register_head_params(store, HeadKind::DecoderSC, hcfg, init);
        Rng data(23);
        const Tensor target = Tensor::uniform(1, hcfg.strict_len(), 1.0, data);
        reports.push_back(check_scalar("loss_reconstruction", store, [&](Tape& tape, ParamBinding& pb) {
            Var mc = symmetrize(pb.use("MC"));
            Var dec = softplus(head_mlp_graph(pb, HeadKind::DecoderSC, tri_upper(mc, true)));
            return mean_abs_diff(dec, tape.constant_ref(&target));
        }));
    }

    // Full model, generator-side total loss and discriminator-side loss.
    {
        const Subject subj = make_test_subject(dm.n, dm.T, 90010);
        const Tensor a_hat = gcn_normalize(subj.sc_emp.values());
        const Tensor sc_vec = vec_upper(subj.sc_emp.values(), false);
        const Tensor fc_vec = vec_upper(subj.fc_emp.values(), false);
        const GeneratorConfig gcfg{dm.n, dm.T, dm.d, dm.d_k, dm.d_v, 0.1};
        const HeadConfig hcfg{dm.n, dm.hidden};

        TrainConfig tc;
        tc.d = dm.d;
        tc.d_k = dm.d_k;
        tc.d_v = dm.d_v;
        tc.hidden = dm.hidden;
        tc.seed = 31;
        TrainState state = init_train_state(dm.n, dm.T, tc);

        auto build_g_loss = [&](Tape& tape, ParamBinding& pbg, ParamBinding& pbd) {
            Var mc = generator_graph(tape, pbg, subj.bold, subj.sc_emp.values(), a_hat, gcfg);
            Var fake_sc = decoder_sc_vec_graph(pbg, mc);
            Var fake_fc = decoder_fc_vec_graph(pbg, mc);
            Var z_sc = discriminator_logit_graph(pbd, HeadKind::DiscrSC, fake_sc);
            Var z_fc = discriminator_logit_graph(pbd, HeadKind::DiscrFC, fake_fc);
            Var adv = add(softplus(scale(z_sc, -1.0)), softplus(scale(z_fc, -1.0)));
            Var cls = softmax_xent(classifier_logits_graph(pbg, mc), static_cast<int>(subj.stage));
            Var rcs = add(mean_abs_diff(fake_sc, tape.constant_ref(&sc_vec)),
                          mean_abs_diff(fake_fc, tape.constant_ref(&fc_vec)));
            return add(add(adv, cls), rcs);
        };

        auto f_gen = [&](bool accumulate) {
            Tape tape;
            ParamBinding pbg(state.gen_store, tape, true);
            ParamBinding pbd(static_cast<const ParamStore&>(state.disc_store), tape);
            Var loss = build_g_loss(tape, pbg, pbd);
            if (accumulate) {
                tape.backward(loss);
                pbg.accumulate(1.0);
            }
            return loss.value()[0];
        };
        reports.push_back({"full_model_generator_side",
                           run_check_deep(f_gen, state.gen_store, hash_string("full_gen"))});

        auto f_disc = [&](bool accumulate) {
            Tape tape;
            ParamBinding pbg(static_cast<const ParamStore&>(state.gen_store), tape);
            ParamBinding pbd(state.disc_store, tape, true);
            Var mc = generator_graph(tape, pbg, subj.bold, subj.sc_emp.values(), a_hat, gcfg);
            Var fake_sc = decoder_sc_vec_graph(pbg, mc);
            Var fake_fc = decoder_fc_vec_graph(pbg, mc);
            Var d_sc = add(softplus(scale(discriminator_logit_graph(pbd, HeadKind::DiscrSC,
                                                                    tape.constant_ref(&sc_vec)),
                                          -1.0)),
                           softplus(discriminator_logit_graph(pbd, HeadKind::DiscrSC, fake_sc)));
            Var d_fc = add(softplus(scale(discriminator_logit_graph(pbd, HeadKind::DiscrFC,
                                                                    tape.constant_ref(&fc_vec)),
                                          -1.0)),
                           softplus(discriminator_logit_graph(pbd, HeadKind::DiscrFC, fake_fc)));
            Var loss = add(d_sc, d_fc);
            if (accumulate) {
                tape.backward(loss);
                pbd.accumulate(1.0);
            }
            return loss.value()[0];
        };
        reports.push_back({"full_model_discriminator_side",
                           run_check_deep(f_disc, state.disc_store, hash_string("full_disc"))});
    }

    return reports;
}

}  // namespace cmfuse
