#pragma once

#include <string>
#include <vector>

#include "cmfuse/datamodel.hpp"

namespace cmfuse {

inline constexpr double kGradCheckTol = 1e-4;

struct OpGradReport {
    std::string op;
    double max_rel_err = 0.0;
    bool pass() const { return max_rel_err < kGradCheckTol; }
};

// Finite-difference verification of every differentiable op, the composed
// transformer blocks, the heads, each loss term, and the full model loss on
// both update paths. Small scale runs at n=8, d=4, T=30; full scale at
// n=32, d=16, T=120. At least 100 probe coordinates per op.
std::vector<OpGradReport> run_gradcheck_suite(bool full_scale);

// Deterministic synthetic subject used by checks and tests.
Subject make_test_subject(int n, int T, std::uint64_t seed, Stage stage = Stage::EMCI);

}  // namespace cmfuse
