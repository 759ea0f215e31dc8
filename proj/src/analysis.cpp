#include "cmfuse/analysis.hpp"

#include <algorithm>
#include <cmath>

#include "cmfuse/error.hpp"

namespace cmfuse {

Tensor group_mean_mc(const std::vector<Subject>& cohort, const ParamStore& gen_store,
                     const GeneratorConfig& cfg, Stage stage) {
    Tensor sum;
    int count = 0;
    for (const auto& s : cohort) {
        if (s.stage != stage) continue;
        const MultimodalConnectivity mc = generator_forward(s, gen_store, cfg);
        if (count == 0) {
            sum = mc.values;
        } else {
            sum.axpy(1.0, mc.values);
        }
        ++count;
    }
    if (count == 0) {
        throw invariant_error("group_mean_mc: no subjects with stage " + stage_name(stage));
    }
    for (std::size_t i = 0; i < sum.size(); ++i) sum[i] /= static_cast<double>(count);
    return sum;
}

StageDelta delta_connectivity(const Tensor& mean_from, const Tensor& mean_to, double tau,
                              Stage from_stage, Stage to_stage) {
    if (!mean_from.same_shape(mean_to) || mean_from.rows() != mean_from.cols()) {
        throw invariant_error("delta_connectivity: mean matrices must be square and same shape");
    }
    if (tau < 0.0) throw invariant_error("delta_connectivity: tau must be >= 0");
    StageDelta d;
    d.from_stage = from_stage;
    d.to_stage = to_stage;
    d.tau = tau;
    const int n = mean_from.rows();
    d.delta = Tensor(n, n);
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) d.delta.at(i, j) = mean_to.at(i, j) - mean_from.at(i, j);
    }
    for (int i = 0; i < n; ++i) {
        for (int j = i + 1; j < n; ++j) {
            const double v = d.delta.at(i, j);
            if (v > tau) d.increased.push_back({i, j, v});
            else if (v < -tau) d.decreased.push_back({i, j, v});
        }
    }
    return d;
}

std::vector<RoiScore> top_k_rois(const StageDelta& delta, int k) {
    const int n = delta.delta.rows();
    if (k < 0 || k > n) {
        throw invariant_error("top_k_rois: k=" + std::to_string(k) + " out of range for n=" +
                              std::to_string(n));
    }
    std::vector<RoiScore> scores(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        double s = 0.0;
        for (int j = 0; j < n; ++j) s += std::fabs(delta.delta.at(i, j));
        scores[static_cast<std::size_t>(i)] = {i, s};
    }
    std::stable_sort(scores.begin(), scores.end(), [](const RoiScore& a, const RoiScore& b) {
        if (a.score != b.score) return a.score > b.score;
        return a.roi < b.roi;
    });
    scores.resize(static_cast<std::size_t>(k));
    return scores;
}

double tau_from_quantile(const Tensor& delta, double q) {
    if (q < 0.0 || q >= 1.0) throw invariant_error("tau_from_quantile: q must be in [0,1)");
    const int n = delta.rows();
    std::vector<double> mags;
    mags.reserve(static_cast<std::size_t>(n) * (n - 1) / 2);
    for (int i = 0; i < n; ++i) {
        for (int j = i + 1; j < n; ++j) mags.push_back(std::fabs(delta.at(i, j)));
    }
    if (mags.empty()) return 0.0;
    std::sort(mags.begin(), mags.end());
    const std::size_t idx = std::min(mags.size() - 1,
                                     static_cast<std::size_t>(q * static_cast<double>(mags.size())));
    return mags[idx];
}

}  // namespace cmfuse
