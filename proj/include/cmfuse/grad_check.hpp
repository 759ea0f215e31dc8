#pragma once

#include <functional>

#include "cmfuse/param_store.hpp"
#include "cmfuse/rng.hpp"

namespace cmfuse {

// Scalar function of the store's current parameter values. When the flag is
// true the call must also accumulate analytic gradients into the store.
using GradFn = std::function<double(bool accumulate_grads)>;

// Central-difference check of analytic gradients at n_probes randomly chosen
// parameter coordinates. Returns the max of
//   |analytic - numeric| / max(1e-8, |analytic| + |numeric|).
// When fallback_h > 0 each coordinate is also compared at that second step
// size and the better-conditioned result counts: long compositions have both
// high-curvature coordinates (needing a small step) and near-flat ones whose
// difference quotient at a small step is pure roundoff (needing a large one).
double grad_check(const GradFn& forward, ParamStore& store, int n_probes, double h, Rng& rng,
                  double fallback_h = 0.0);

}  // namespace cmfuse
