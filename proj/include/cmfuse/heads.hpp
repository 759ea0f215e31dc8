#pragma once

#include <string>
#include <vector>

#include "cmfuse/datamodel.hpp"
#include "cmfuse/generator.hpp"
#include "cmfuse/param_store.hpp"

namespace cmfuse {

// The five MLP heads reading from the fused connectivity. Decoders map MC
// back to SC/FC, discriminators score real-vs-decoded connectivity, the
// classifier predicts the disease stage.
enum class HeadKind { DecoderSC, DecoderFC, DiscrSC, DiscrFC, Classifier };

const std::string& head_prefix(HeadKind kind);

struct HeadConfig {
    int n = 32;
    int hidden = 256;

    int incl_len() const { return n * (n + 1) / 2; }
    int strict_len() const { return n * (n - 1) / 2; }
    int input_dim(HeadKind kind) const;
    int output_dim(HeadKind kind) const;
};

void register_head_params(ParamStore& store, HeadKind kind, const HeadConfig& cfg, Rng& rng);
void register_all_head_params(ParamStore& gen_store, ParamStore& disc_store, const HeadConfig& cfg,
                              Rng& rng);

// --- graph builders ----------------------------------------------------------
// All take a row-vector input and return the pre-output-activation MLP value
// composed with the head's own output activation where one exists.

// hidden ReLU layer then affine output (logits / pre-activation).
Var head_mlp_graph(ParamBinding& pb, HeadKind kind, Var x_row);
// strict upper-triangle SC vector through softplus (entries >= 0).
Var decoder_sc_vec_graph(ParamBinding& pb, Var mc);
// strict upper-triangle FC vector through tanh (entries in [-1,1]).
Var decoder_fc_vec_graph(ParamBinding& pb, Var mc);
// scalar discriminator logit for a strict upper-triangle vector.
Var discriminator_logit_graph(ParamBinding& pb, HeadKind kind, Var conn_vec);
// 1x4 stage logits from MC.
Var classifier_logits_graph(ParamBinding& pb, Var mc);

// --- plain operations ---------------------------------------------------------

ConnMatrix decode_sc(const MultimodalConnectivity& mc, const ParamStore& store);
ConnMatrix decode_fc(const MultimodalConnectivity& mc, const ParamStore& store);
// Probability that conn is real; kind must match conn's flavor.
double discriminate(const ConnMatrix& conn, const ParamStore& store, HeadKind kind);
// Probability vector over the four stages.
std::vector<double> classify(const MultimodalConnectivity& mc, const ParamStore& store);

}  // namespace cmfuse
