#pragma once

#include <vector>

#include "cmfuse/datamodel.hpp"
#include "cmfuse/generator.hpp"

namespace cmfuse {

struct DeltaEdge {
    int i = 0;
    int j = 0;  // i < j
    double delta = 0.0;
};

// Thresholded difference of two stage-mean MC matrices: edges whose change
// exceeds tau in either direction.
struct StageDelta {
    Stage from_stage = Stage::NC;
    Stage to_stage = Stage::AD;
    Tensor delta;  // mean MC[to] - mean MC[from]
    double tau = 0.0;
    std::vector<DeltaEdge> increased;  // delta > tau
    std::vector<DeltaEdge> decreased;  // delta < -tau
};

struct RoiScore {
    int roi = 0;
    double score = 0.0;  // L1 row mass of the delta
};

// Entrywise mean of generator_forward over the stage's subjects.
Tensor group_mean_mc(const std::vector<Subject>& cohort, const ParamStore& gen_store,
                     const GeneratorConfig& cfg, Stage stage);

StageDelta delta_connectivity(const Tensor& mean_from, const Tensor& mean_to, double tau,
                              Stage from_stage = Stage::NC, Stage to_stage = Stage::AD);

// ROIs ranked by descending L1 row mass of the delta; ties break toward the
// lower index.
std::vector<RoiScore> top_k_rois(const StageDelta& delta, int k);

// Threshold at quantile q of the strict-upper |delta| entries.
double tau_from_quantile(const Tensor& delta, double q);

}  // namespace cmfuse
