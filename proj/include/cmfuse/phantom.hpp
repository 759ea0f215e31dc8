#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "cmfuse/datamodel.hpp"
#include "cmfuse/tensor.hpp"

namespace cmfuse {

// Recipe for a synthetic cohort with known injected stage effects: a block-
// structured base SC, per-stage attenuation of a set of affected ROIs, a
// disjoint set of compensating ROIs with per-stage gain, lognormal
// per-subject jitter, and VAR(1) dynamics coupling SC to BOLD (hence FC).
struct PhantomSpec {
    int n = 32;
    int T = 120;
    int n_blocks = 4;
    std::map<Stage, int> subjects_per_stage = {
        {Stage::NC, 40}, {Stage::EMCI, 40}, {Stage::LMCI, 40}, {Stage::AD, 40}};
    std::vector<int> affected_rois = {0, 4, 8, 12, 16, 20, 24, 28};
    std::map<Stage, double> attenuation = {
        {Stage::NC, 1.0}, {Stage::EMCI, 0.9}, {Stage::LMCI, 0.8}, {Stage::AD, 0.65}};
    std::vector<int> compensation_rois = {2, 10, 18, 26};
    std::map<Stage, double> compensation_gain = {
        {Stage::NC, 1.0}, {Stage::EMCI, 1.05}, {Stage::LMCI, 1.1}, {Stage::AD, 1.2}};
    double noise_sigma = 0.2;
    double rho = 0.8;
    std::uint64_t seed = 42;

    void validate() const;
};

// Stage-conditioned ground-truth SC: deterministic given (spec, stage), with
// the stage factors applied multiplicatively to affected/compensation rows
// and columns of the shared base matrix.
ConnMatrix make_ground_truth_sc(const PhantomSpec& spec, Stage stage);

struct BoldSim {
    Tensor bold;                       // n x T
    bool white_noise_fallback = false; // set when SC was all-zero but rho > 0
};

// VAR(1) simulation x_t = rho * A_hat * x_{t-1} + eps_t where A_hat is the
// SC rescaled to unit spectral radius; 50 burn-in steps discarded.
BoldSim simulate_bold(const ConnMatrix& sc, int T, double rho, std::uint64_t seed);

// Full cohort: per subject, jittered SC -> simulated BOLD -> Pearson FC.
// Deterministic given the spec; per-subject work is independently seeded and
// may run on `threads` workers with results identical to sequential.
std::vector<Subject> generate_cohort(const PhantomSpec& spec, int threads = 1);

std::uint64_t subject_seed(const PhantomSpec& spec, const std::string& subject_id);

}  // namespace cmfuse
