#include "cmfuse/generator.hpp"

#include <cmath>

#include "cmfuse/error.hpp"

namespace cmfuse {

void AttentionParams::validate() const {
    if (w_q.rows() != w_k.rows() || w_q.cols() != w_k.cols()) {
        throw invariant_error("AttentionParams: w_q and w_k shapes must agree (d_q = d_k)");
    }
    if (w_v.rows() != w_q.rows()) {
        throw invariant_error("AttentionParams: w_v input dim disagrees with w_q");
    }
    if (fc_weight.rows() != w_v.cols()) {
        throw invariant_error("AttentionParams: fc_weight input dim must equal d_v");
    }
    if (fc_bias.rows() != 1 || fc_bias.cols() != fc_weight.cols()) {
        throw invariant_error("AttentionParams: fc_bias shape mismatch");
    }
    if (lambda < 0.0 || lambda > 1.0) {
        throw invariant_error("AttentionParams: lambda must be in [0,1]");
    }
}

Var attention_graph(Var x, const AttentionVars& p) {
    const int d_k = p.w_q.value().cols();
    Var q = matmul(x, p.w_q);
    Var k = matmul(x, p.w_k);
    Var v = matmul(x, p.w_v);
    Var logits = scale(matmul(q, k, false, true), 1.0 / std::sqrt(static_cast<double>(d_k)));
    return matmul(softmax_rows(logits), v);
}

Var transformer_graph(Var x, Var residual, const AttentionVars& p) {
    Var out = affine_rows(attention_graph(x, p), p.fc_weight, p.fc_bias);
    return add_scaled(out, residual, p.lambda);
}

Var gcn_graph(Var h, Var a_hat, Var w) {
    return relu(matmul(matmul(a_hat, h), w));
}

Var fuse_mc_graph(Var s, Var f) {
    Var sf = matmul(s, f);
    return symmetrize(matmul(sf, sf, false, true));
}

AttentionVars bind_attention(ParamBinding& pb, const std::string& prefix, double lambda) {
    AttentionVars v;
    v.w_q = pb.use(prefix + ".wq");
    v.w_k = pb.use(prefix + ".wk");
    v.w_v = pb.use(prefix + ".wv");
    v.fc_weight = pb.use(prefix + ".fcw");
    v.fc_bias = pb.use(prefix + ".fcb");
    v.lambda = lambda;
    return v;
}

Var generator_graph(Tape& tape, ParamBinding& pb, const Tensor& bold, const Tensor& sc,
                    const Tensor& a_hat, const GeneratorConfig& cfg) {
    if (bold.rows() != cfg.n || bold.cols() != cfg.T) {
        throw invariant_error("generator: BOLD shape " + std::to_string(bold.rows()) + "x" +
                              std::to_string(bold.cols()) + " disagrees with config " +
                              std::to_string(cfg.n) + "x" + std::to_string(cfg.T));
    }
    Var f = tape.constant_ref(&bold);
    Var s = tape.constant_ref(&sc);
    Var ahat = tape.constant_ref(&a_hat);
    for (int b = 1; b <= 3; ++b) {
        const std::string bp = "gen.b" + std::to_string(b);
        Var kernel = pb.use(bp + ".conv");
        Var f_tilde;
        if (b == 1) {
            Var conv = relu(conv1d_rows(f, kernel, ConvMode::Valid));
            f_tilde = matmul(conv, pb.use(bp + ".embed"));
        } else {
            f_tilde = relu(conv1d_rows(f, kernel, ConvMode::Same));
        }
        Var s_tilde = gcn_graph(s, ahat, pb.use(bp + ".gcn"));
        AttentionVars f2s = bind_attention(pb, bp + ".f2s", cfg.lambda);
        AttentionVars s2f = bind_attention(pb, bp + ".s2f", cfg.lambda);
        s = transformer_graph(f_tilde, s_tilde, f2s);
        f = transformer_graph(s_tilde, f_tilde, s2f);
    }
    return fuse_mc_graph(s, f);
}

namespace {

Tensor fan_in_uniform(int rows, int cols, Rng& rng) {
    return Tensor::uniform(rows, cols, std::sqrt(1.0 / rows), rng);
}

}  // namespace

void register_attention_params(ParamStore& store, const std::string& prefix, int d_x, int d_k,
                               int d_v, int d_y, Rng& rng) {
    store.add(prefix + ".wq", fan_in_uniform(d_x, d_k, rng));
    store.add(prefix + ".wk", fan_in_uniform(d_x, d_k, rng));
    store.add(prefix + ".wv", fan_in_uniform(d_x, d_v, rng));
    store.add(prefix + ".fcw", fan_in_uniform(d_v, d_y, rng));
    store.add(prefix + ".fcb", Tensor::uniform(1, d_y, std::sqrt(1.0 / d_v), rng));
}

void register_generator_params(ParamStore& store, const GeneratorConfig& cfg, Rng& rng) {
    if (cfg.T < cfg.conv_width()) {
        throw invariant_error("generator: T must be >= conv kernel width 10");
    }
    for (int b = 1; b <= 3; ++b) {
        const std::string bp = "gen.b" + std::to_string(b);
        store.add(bp + ".conv", Tensor::uniform(1, cfg.conv_width(), std::sqrt(1.0 / cfg.conv_width()), rng));
        if (b == 1) store.add(bp + ".embed", fan_in_uniform(cfg.post_conv_len(), cfg.d, rng));
        store.add(bp + ".gcn", fan_in_uniform(cfg.n, cfg.n, rng));
        register_attention_params(store, bp + ".f2s", cfg.d, cfg.d_k, cfg.d_v, cfg.n, rng);
        register_attention_params(store, bp + ".s2f", cfg.n, cfg.d_k, cfg.d_v, cfg.d, rng);
    }
}

Tensor gcn_normalize(const Tensor& a) {
    const int n = a.rows();
    if (a.cols() != n) throw invariant_error("gcn_normalize: adjacency must be square");
    std::vector<double> inv_sqrt_deg(n);
    for (int i = 0; i < n; ++i) {
        double deg = 1.0;  // self-loop
        for (int j = 0; j < n; ++j) deg += a.at(i, j);
        inv_sqrt_deg[i] = 1.0 / std::sqrt(deg);
    }
    Tensor a_hat(n, n);
    for (int i = 0; i < n; ++i) {
        a_hat.at(i, i) = inv_sqrt_deg[i] * (a.at(i, i) + 1.0) * inv_sqrt_deg[i];
        for (int j = i + 1; j < n; ++j) {
            const double v = inv_sqrt_deg[i] * a.at(i, j) * inv_sqrt_deg[j];
            a_hat.at(i, j) = v;
            a_hat.at(j, i) = v;
        }
    }
    return a_hat;
}

namespace {

AttentionVars attention_constants(Tape& tape, const AttentionParams& p) {
    p.validate();
    AttentionVars v;
    v.w_q = tape.constant_ref(&p.w_q);
    v.w_k = tape.constant_ref(&p.w_k);
    v.w_v = tape.constant_ref(&p.w_v);
    v.fc_weight = tape.constant_ref(&p.fc_weight);
    v.fc_bias = tape.constant_ref(&p.fc_bias);
    v.lambda = p.lambda;
    return v;
}

}  // namespace

Tensor attention(const Tensor& x, const AttentionParams& p) {
    Tape tape;
    AttentionVars v = attention_constants(tape, p);
    return attention_graph(tape.constant_ref(&x), v).value();
}

Tensor transformer_f2s(const Tensor& f_tilde, const Tensor& s_tilde, const AttentionParams& p) {
    Tape tape;
    AttentionVars v = attention_constants(tape, p);
    return transformer_graph(tape.constant_ref(&f_tilde), tape.constant_ref(&s_tilde), v).value();
}

Tensor transformer_s2f(const Tensor& s_tilde, const Tensor& f_tilde, const AttentionParams& p) {
    Tape tape;
    AttentionVars v = attention_constants(tape, p);
    return transformer_graph(tape.constant_ref(&s_tilde), tape.constant_ref(&f_tilde), v).value();
}

Tensor gcn_layer(const Tensor& h, const ConnMatrix& a, const Tensor& w) {
    if (a.flavor() != ConnFlavor::Structural) {
        throw invariant_error("gcn_layer: adjacency must be structural");
    }
    Tape tape;
    const Tensor a_hat = gcn_normalize(a.values());
    return gcn_graph(tape.constant_ref(&h), tape.constant(a_hat), tape.constant_ref(&w)).value();
}

Tensor conv_bold(const Tensor& stream, const Tensor& kernel, ConvMode mode,
                 const Tensor* projection) {
    Tape tape;
    Var out = relu(conv1d_rows(tape.constant_ref(&stream), tape.constant_ref(&kernel), mode));
    if (projection != nullptr) out = matmul(out, tape.constant_ref(projection));
    return out.value();
}

MultimodalConnectivity fuse_mc(const Tensor& s, const Tensor& f) {
    Tape tape;
    return {fuse_mc_graph(tape.constant_ref(&s), tape.constant_ref(&f)).value()};
}

MultimodalConnectivity generator_forward(const Subject& subject, const ParamStore& store,
                                         const GeneratorConfig& cfg) {
    subject.validate();
    Tape tape;
    ParamBinding pb(store, tape);
    const Tensor a_hat = gcn_normalize(subject.sc_emp.values());
    Var mc = generator_graph(tape, pb, subject.bold, subject.sc_emp.values(), a_hat, cfg);
    return {mc.value()};
}

}  // namespace cmfuse
