#include "cmfuse/heads.hpp"

#include <cmath>

#include "cmfuse/error.hpp"

namespace cmfuse {

const std::string& head_prefix(HeadKind kind) {
    static const std::string names[] = {"dec_sc", "dec_fc", "disc_sc", "disc_fc", "cls"};
    return names[static_cast<int>(kind)];
}

int HeadConfig::input_dim(HeadKind kind) const {
    switch (kind) {
        case HeadKind::DecoderSC:
        case HeadKind::DecoderFC:
        case HeadKind::Classifier:
            return incl_len();
        case HeadKind::DiscrSC:
        case HeadKind::DiscrFC:
            return strict_len();
    }
    throw invariant_error("unknown head kind");
}

int HeadConfig::output_dim(HeadKind kind) const {
    switch (kind) {
        case HeadKind::DecoderSC:
        case HeadKind::DecoderFC:
            return strict_len();
        case HeadKind::DiscrSC:
        case HeadKind::DiscrFC:
            return 1;
        case HeadKind::Classifier:
            return kStageCount;
    }
    throw invariant_error("unknown head kind");
}

void register_head_params(ParamStore& store, HeadKind kind, const HeadConfig& cfg, Rng& rng) {
    const std::string p = head_prefix(kind);
    const int in = cfg.input_dim(kind);
    const int out = cfg.output_dim(kind);
    const double b0 = std::sqrt(1.0 / in);
    const double b1 = std::sqrt(1.0 / cfg.hidden);
    store.add(p + ".l0.w", Tensor::uniform(in, cfg.hidden, b0, rng));
    store.add(p + ".l0.b", Tensor::uniform(1, cfg.hidden, b0, rng));
    store.add(p + ".l1.w", Tensor::uniform(cfg.hidden, out, b1, rng));
    store.add(p + ".l1.b", Tensor::uniform(1, out, b1, rng));
}

void register_all_head_params(ParamStore& gen_store, ParamStore& disc_store, const HeadConfig& cfg,
                              Rng& rng) {
    register_head_params(gen_store, HeadKind::DecoderSC, cfg, rng);
    register_head_params(gen_store, HeadKind::DecoderFC, cfg, rng);
    register_head_params(gen_store, HeadKind::Classifier, cfg, rng);
    register_head_params(disc_store, HeadKind::DiscrSC, cfg, rng);
    register_head_params(disc_store, HeadKind::DiscrFC, cfg, rng);
}

Var head_mlp_graph(ParamBinding& pb, HeadKind kind, Var x_row) {
    const std::string p = head_prefix(kind);
    Var h = relu(affine_rows(x_row, pb.use(p + ".l0.w"), pb.use(p + ".l0.b")));
    return affine_rows(h, pb.use(p + ".l1.w"), pb.use(p + ".l1.b"));
}

Var decoder_sc_vec_graph(ParamBinding& pb, Var mc) {
    return softplus(head_mlp_graph(pb, HeadKind::DecoderSC, tri_upper(mc, true)));
}

Var decoder_fc_vec_graph(ParamBinding& pb, Var mc) {
    return tanh_op(head_mlp_graph(pb, HeadKind::DecoderFC, tri_upper(mc, true)));
}

Var discriminator_logit_graph(ParamBinding& pb, HeadKind kind, Var conn_vec) {
    if (kind != HeadKind::DiscrSC && kind != HeadKind::DiscrFC) {
        throw invariant_error("discriminator_logit_graph: head kind is not a discriminator");
    }
    return head_mlp_graph(pb, kind, conn_vec);
}

Var classifier_logits_graph(ParamBinding& pb, Var mc) {
    return head_mlp_graph(pb, HeadKind::Classifier, tri_upper(mc, true));
}

ConnMatrix decode_sc(const MultimodalConnectivity& mc, const ParamStore& store) {
    Tape tape;
    ParamBinding pb(store, tape);
    Var vec = decoder_sc_vec_graph(pb, tape.constant_ref(&mc.values));
    return ConnMatrix(unvec_upper(vec.value(), mc.n(), false, 0.0), ConnFlavor::Structural);
}

ConnMatrix decode_fc(const MultimodalConnectivity& mc, const ParamStore& store) {
    Tape tape;
    ParamBinding pb(store, tape);
    Var vec = decoder_fc_vec_graph(pb, tape.constant_ref(&mc.values));
    return ConnMatrix(unvec_upper(vec.value(), mc.n(), false, 1.0), ConnFlavor::Functional);
}

double discriminate(const ConnMatrix& conn, const ParamStore& store, HeadKind kind) {
    const bool want_structural = kind == HeadKind::DiscrSC;
    if (kind != HeadKind::DiscrSC && kind != HeadKind::DiscrFC) {
        throw invariant_error("discriminate: head kind is not a discriminator");
    }
    if (want_structural != (conn.flavor() == ConnFlavor::Structural)) {
        throw invariant_error("discriminate: connectivity flavor does not match discriminator kind");
    }
    Tape tape;
    ParamBinding pb(store, tape);
    const Tensor vec = vec_upper(conn.values(), false);
    Var z = discriminator_logit_graph(pb, kind, tape.constant(vec));
    return sigmoid_op(z).value()[0];
}

std::vector<double> classify(const MultimodalConnectivity& mc, const ParamStore& store) {
    Tape tape;
    ParamBinding pb(store, tape);
    Var logits = classifier_logits_graph(pb, tape.constant_ref(&mc.values));
    const Tensor probs = tape.value(softmax_rows(logits));
    std::vector<double> out(probs.size());
    for (std::size_t i = 0; i < probs.size(); ++i) out[i] = probs[i];
    return out;
}

}  // namespace cmfuse
