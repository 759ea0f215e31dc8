#pragma once

#include <string>

#include "cmfuse/datamodel.hpp"
#include "cmfuse/param_store.hpp"
#include "cmfuse/tape.hpp"

namespace cmfuse {

// Weights of one cross-modal transformer: query/key/value projections, the
// output affine layer mapping attention features to the target width, and
// the residual mixing coefficient.
struct AttentionParams {
    Tensor w_q;        // d_X x d_k
    Tensor w_k;        // d_X x d_k
    Tensor w_v;        // d_X x d_v
    Tensor fc_weight;  // d_v x d_Y
    Tensor fc_bias;    // 1 x d_Y
    double lambda = 0.1;

    void validate() const;
};

struct GeneratorConfig {
    int n = 32;   // ROIs
    int T = 120;  // BOLD time points
    int d = 16;   // functional stream width
    int d_k = 16;
    int d_v = 16;
    double lambda = 0.1;

    int conv_width() const { return 10; }
    int post_conv_len() const { return T - conv_width() + 1; }
};

// Fused n x n output MC = S F F^T S^T; symmetric and PSD with rank <= d by
// construction.
struct MultimodalConnectivity {
    Tensor values;
    int n() const { return values.rows(); }
};

struct AttentionVars {
    Var w_q, w_k, w_v, fc_weight, fc_bias;
    double lambda = 0.1;
};

// --- graph builders ---------------------------------------------------------

Var attention_graph(Var x, const AttentionVars& p);
// FC(attention(x)) + lambda * residual
Var transformer_graph(Var x, Var residual, const AttentionVars& p);
Var gcn_graph(Var h, Var a_hat, Var w);
Var fuse_mc_graph(Var s, Var f);

AttentionVars bind_attention(ParamBinding& pb, const std::string& prefix, double lambda);

// Full generator stack on a tape; a_hat is the normalized adjacency of the
// subject's empirical SC (see gcn_normalize).
Var generator_graph(Tape& tape, ParamBinding& pb, const Tensor& bold, const Tensor& sc,
                    const Tensor& a_hat, const GeneratorConfig& cfg);

// --- parameter registration -------------------------------------------------

void register_attention_params(ParamStore& store, const std::string& prefix, int d_x, int d_k,
                               int d_v, int d_y, Rng& rng);
void register_generator_params(ParamStore& store, const GeneratorConfig& cfg, Rng& rng);

// --- plain (non-graph) operations -------------------------------------------

// D^{-1/2} (A + I) D^{-1/2} with D the degree matrix of A + I.
Tensor gcn_normalize(const Tensor& a);

Tensor attention(const Tensor& x, const AttentionParams& p);
Tensor transformer_f2s(const Tensor& f_tilde, const Tensor& s_tilde, const AttentionParams& p);
Tensor transformer_s2f(const Tensor& s_tilde, const Tensor& f_tilde, const AttentionParams& p);
Tensor gcn_layer(const Tensor& h, const ConnMatrix& a, const Tensor& w);
// Per-row convolution + ReLU; optional learned projection (block 1).
Tensor conv_bold(const Tensor& stream, const Tensor& kernel, ConvMode mode,
                 const Tensor* projection = nullptr);
MultimodalConnectivity fuse_mc(const Tensor& s, const Tensor& f);
MultimodalConnectivity generator_forward(const Subject& subject, const ParamStore& store,
                                         const GeneratorConfig& cfg);

}  // namespace cmfuse
