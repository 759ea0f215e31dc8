#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "cmfuse/datamodel.hpp"
#include "cmfuse/generator.hpp"
#include "cmfuse/heads.hpp"
#include "cmfuse/param_store.hpp"
#include "cmfuse/rng.hpp"

namespace cmfuse {

struct TrainConfig {
    int epochs = 150;
    int batch_size = 8;
    double lr = 0.001;
    double weight_decay = 0.01;
    double beta1 = 0.9;
    double beta2 = 0.99;
    double lambda_mix = 0.1;
    double w_adv = 1.0;
    double w_cls = 1.0;
    double w_rcs = 10.0;
    int d = 16;
    int d_k = 16;
    int d_v = 16;
    int hidden = 256;
    // Literal minimax generator loss +log(1 - D(fake)) instead of the
    // default non-saturating -log D(fake).
    bool g_adv_saturating = false;
    std::uint64_t seed = 7;
    int checkpoint_every = 0;  // epochs between checkpoint rewrites; 0 = final only
    std::string checkpoint_path;
    std::string metrics_path;
    int threads = 1;

    AdamConfig adam() const { return {lr, weight_decay, beta1, beta2, 1e-8}; }
    void validate() const;
};

struct EpochMetrics {
    int epoch = 0;
    double loss_d_sc = 0.0;
    double loss_d_fc = 0.0;
    double loss_g_adv_sc = 0.0;
    double loss_g_adv_fc = 0.0;
    double loss_cls = 0.0;
    double loss_rcs_sc = 0.0;
    double loss_rcs_fc = 0.0;
    double train_acc = 0.0;
};

// Everything a run owns: parameters and optimizer state for the generator
// side (generator, decoders, classifier) and the discriminator side, plus
// the epoch counter and RNG. Serialization round-trips bitwise so a resumed
// run reproduces the original trajectory.
struct TrainState {
    GeneratorConfig gcfg;
    HeadConfig hcfg;
    ParamStore gen_store;
    ParamStore disc_store;
    int epoch = 0;
    Rng rng;
    std::vector<EpochMetrics> history;
};

TrainState init_train_state(int n, int T, const TrainConfig& cfg);

// Advances state from state.epoch to cfg.epochs over the cohort: per batch
// one discriminator phase (decoded outputs detached) then one generator
// phase on the weighted hybrid loss. on_epoch runs after each epoch;
// on_phase after each adam step with 'D' or 'G'.
void train_loop(TrainState& state, const std::vector<Subject>& cohort, const TrainConfig& cfg,
                const std::function<void(const TrainState&)>& on_epoch = {},
                const std::function<void(const TrainState&, char)>& on_phase = {});

TrainState train(const std::vector<Subject>& cohort, const TrainConfig& cfg);

void write_metrics_csv(const std::string& path, const std::vector<EpochMetrics>& history);

// --- loss terms ---------------------------------------------------------------

// -[log D(real) + log(1 - D(fake))]; kind selects the discriminator and must
// match both flavors. No gradient flows toward the generator here.
double loss_adversarial_d(const ConnMatrix& real, const ConnMatrix& fake, const ParamStore& disc_store,
                          HeadKind kind);
// -log D(fake) (non-saturating) or +log(1 - D(fake)) when saturating.
double loss_adversarial_g(const ConnMatrix& fake, const ParamStore& disc_store, HeadKind kind,
                          bool saturating = false);
// Softmax cross-entropy of the classifier on mc against the true stage.
double loss_classification(const MultimodalConnectivity& mc, Stage stage, const ParamStore& store);
// Mean absolute difference over strict upper-triangle entries.
double loss_reconstruction(const ConnMatrix& decoded, const ConnMatrix& empirical);

}  // namespace cmfuse
