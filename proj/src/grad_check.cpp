#include "cmfuse/grad_check.hpp"

#include <cmath>
#include <vector>

#include "cmfuse/error.hpp"

namespace cmfuse {

namespace {

double central_diff_rel(const GradFn& forward, ParamStore& store, std::size_t i, double analytic,
                        double h) {
    const double theta = store.get_coordinate(i);
    store.set_coordinate(i, theta + h);
    const double fp = forward(false);
    store.set_coordinate(i, theta - h);
    const double fm = forward(false);
    store.set_coordinate(i, theta);
    if (!std::isfinite(fp) || !std::isfinite(fm)) {
        throw numeric_error("grad_check: non-finite forward value at probe");
    }
    const double numeric = (fp - fm) / (2.0 * h);
    return std::fabs(analytic - numeric) / std::max(1e-8, std::fabs(analytic) + std::fabs(numeric));
}

}  // namespace

double grad_check(const GradFn& forward, ParamStore& store, int n_probes, double h, Rng& rng,
                  double fallback_h) {
    store.zero_grad();
    const double f0 = forward(true);
    if (!std::isfinite(f0)) throw numeric_error("grad_check: non-finite forward value");

    const std::size_t n_coords = store.coordinate_count();
    if (n_coords == 0) throw invariant_error("grad_check: store has no parameters");
    std::vector<double> analytic(n_coords);
    for (std::size_t i = 0; i < n_coords; ++i) analytic[i] = store.grad_coordinate(i);

    double max_rel = 0.0;
    for (int p = 0; p < n_probes; ++p) {
        const std::size_t i = static_cast<std::size_t>(rng.below(n_coords));
        double rel = central_diff_rel(forward, store, i, analytic[i], h);
        if (fallback_h > 0.0) {
            rel = std::min(rel, central_diff_rel(forward, store, i, analytic[i], fallback_h));
        }
        max_rel = std::max(max_rel, rel);
    }
    store.zero_grad();
    return max_rel;
}

}  // namespace cmfuse
