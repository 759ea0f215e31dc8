#include "cmfuse/phantom.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <thread>

#include "cmfuse/error.hpp"
#include "cmfuse/rng.hpp"

namespace cmfuse {

namespace {

double spectral_radius(const Tensor& m) {
    const int n = m.rows();
    Tensor v = Tensor::full(n, 1, 1.0 / std::sqrt(static_cast<double>(n)));
    double lambda = 0.0;
    Tensor w(n, 1);
    for (int iter = 0; iter < 200; ++iter) {
        gemm(m, false, v, false, w, false);
        double norm = 0.0;
        for (int i = 0; i < n; ++i) norm += w[static_cast<std::size_t>(i)] * w[static_cast<std::size_t>(i)];
        norm = std::sqrt(norm);
        if (norm < 1e-300) return 0.0;
        for (int i = 0; i < n; ++i) v[static_cast<std::size_t>(i)] = w[static_cast<std::size_t>(i)] / norm;
        lambda = norm;
    }
    return lambda;
}

}  // namespace

void PhantomSpec::validate() const {
    if (n < 2) throw invariant_error("PhantomSpec: n must be >= 2");
    if (T < 20) throw invariant_error("PhantomSpec: T must be >= 20");
    if (n_blocks < 1 || n_blocks > n) throw invariant_error("PhantomSpec: n_blocks out of range");
    if (noise_sigma < 0.0) throw invariant_error("PhantomSpec: noise_sigma must be >= 0");
    if (rho < 0.0 || rho >= 1.0) throw invariant_error("PhantomSpec: rho must be in [0,1)");
    for (int r : affected_rois) {
        if (r < 0 || r >= n) throw invariant_error("PhantomSpec: affected ROI " + std::to_string(r) + " out of [0,n)");
    }
    for (int r : compensation_rois) {
        if (r < 0 || r >= n) throw invariant_error("PhantomSpec: compensation ROI " + std::to_string(r) + " out of [0,n)");
        if (std::find(affected_rois.begin(), affected_rois.end(), r) != affected_rois.end()) {
            throw invariant_error("PhantomSpec: ROI " + std::to_string(r) + " is both affected and compensating");
        }
    }
    double prev_att = 2.0;
    double prev_gain = 0.0;
    for (Stage s : kAllStages) {
        if (attenuation.count(s) == 0 || compensation_gain.count(s) == 0 ||
            subjects_per_stage.count(s) == 0) {
            throw invariant_error("PhantomSpec: missing entry for stage " + stage_name(s));
        }
        const double a = attenuation.at(s);
        const double g = compensation_gain.at(s);
        if (a <= 0.0 || a > 1.0) throw invariant_error("PhantomSpec: attenuation must be in (0,1]");
        if (g < 1.0) throw invariant_error("PhantomSpec: compensation_gain must be >= 1");
        if (a > prev_att) throw invariant_error("PhantomSpec: attenuation must be non-increasing NC->AD");
        if (g < prev_gain) throw invariant_error("PhantomSpec: compensation_gain must be non-decreasing NC->AD");
        prev_att = a;
        prev_gain = g;
        if (subjects_per_stage.at(s) < 0) throw invariant_error("PhantomSpec: negative subject count");
    }
}

ConnMatrix make_ground_truth_sc(const PhantomSpec& spec, Stage stage) {
    spec.validate();
    const int n = spec.n;
    // Base matrix is shared by all stages: dense contiguous communities with
    // sparse weaker bridges between them, each present edge jittered by a
    // deterministic factor from the spec seed. Sparse inter-community edges
    // keep the direct SC->FC link visible over indirect paths.
    Rng rng(mix64(spec.seed, 0x6261736521ull));
    Tensor base(n, n);
    const int block_size = (n + spec.n_blocks - 1) / spec.n_blocks;
    for (int i = 0; i < n; ++i) {
        for (int j = i + 1; j < n; ++j) {
            const bool same_block = (i / block_size) == (j / block_size);
            double w = (same_block ? 1.0 : 0.25) * rng.uniform(0.5, 1.5);
            if (!same_block && rng.uniform() > 0.3) w = 0.0;
            base.at(i, j) = w;
            base.at(j, i) = w;
        }
    }
    std::vector<double> factor(n, 1.0);
    for (int r : spec.affected_rois) factor[r] *= spec.attenuation.at(stage);
    for (int r : spec.compensation_rois) factor[r] *= spec.compensation_gain.at(stage);
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) base.at(i, j) *= factor[i] * factor[j];
    }
    return ConnMatrix(std::move(base), ConnFlavor::Structural);
}

BoldSim simulate_bold(const ConnMatrix& sc, int T, double rho, std::uint64_t seed) {
    if (rho < 0.0 || rho >= 1.0) throw invariant_error("simulate_bold: rho must be in [0,1)");
    const int n = sc.n();
    BoldSim result;
    result.bold = Tensor(n, T);
    Rng rng(seed);

    const double radius = spectral_radius(sc.values());
    Tensor coupling(n, n);
    if (radius > 0.0) {
        const double s = rho / radius;
        for (int i = 0; i < n; ++i) {
            for (int j = 0; j < n; ++j) coupling.at(i, j) = s * sc.values().at(i, j);
        }
    } else if (rho > 0.0) {
        result.white_noise_fallback = true;
    }

    const int burn_in = 50;
    Tensor x(n, 1), next(n, 1);
    for (int t = 0; t < burn_in + T; ++t) {
        if (radius > 0.0) {
            gemm(coupling, false, x, false, next, false);
        } else {
            next.fill(0.0);
        }
        for (int i = 0; i < n; ++i) next[static_cast<std::size_t>(i)] += rng.gaussian();
        x = next;
        if (t >= burn_in) {
            for (int i = 0; i < n; ++i) result.bold.at(i, t - burn_in) = x[static_cast<std::size_t>(i)];
        }
    }
    return result;
}

std::uint64_t subject_seed(const PhantomSpec& spec, const std::string& subject_id) {
    return mix64(spec.seed, hash_string(subject_id));
}

namespace {

Subject make_subject(const PhantomSpec& spec, Stage stage, int index,
                     const ConnMatrix& ground_truth) {
    char idbuf[32];
    std::snprintf(idbuf, sizeof(idbuf), "%s_%03d", stage_name(stage).c_str(), index);
    Subject s;
    s.id = idbuf;
    s.stage = stage;

    const std::uint64_t sseed = subject_seed(spec, s.id);
    Rng jitter(mix64(sseed, 1));
    const int n = spec.n;
    Tensor sc(n, n);
    for (int i = 0; i < n; ++i) {
        for (int j = i + 1; j < n; ++j) {
            double w = ground_truth.values().at(i, j) * std::exp(spec.noise_sigma * jitter.gaussian());
            w = std::max(0.0, w);
            sc.at(i, j) = w;
            sc.at(j, i) = w;
        }
    }
    s.sc_emp = ConnMatrix(std::move(sc), ConnFlavor::Structural);
    s.bold = simulate_bold(s.sc_emp, spec.T, spec.rho, mix64(sseed, 2)).bold;
    s.fc_emp = pearson_fc(s.bold);
    s.validate();
    return s;
}

}  // namespace

std::vector<Subject> generate_cohort(const PhantomSpec& spec, int threads) {
    spec.validate();
    struct Job {
        Stage stage;
        int index;
    };
    std::vector<Job> jobs;
    for (Stage stage : kAllStages) {
        for (int i = 0; i < spec.subjects_per_stage.at(stage); ++i) jobs.push_back({stage, i});
    }
    std::map<Stage, ConnMatrix> truths;
    for (Stage stage : kAllStages) truths.emplace(stage, make_ground_truth_sc(spec, stage));

    std::vector<Subject> subjects(jobs.size());
    if (threads <= 1) {
        for (std::size_t k = 0; k < jobs.size(); ++k) {
            subjects[k] = make_subject(spec, jobs[k].stage, jobs[k].index, truths.at(jobs[k].stage));
        }
    } else {
        std::atomic<std::size_t> cursor{0};
        auto worker = [&] {
            for (;;) {
                const std::size_t k = cursor.fetch_add(1);
                if (k >= jobs.size()) break;
                subjects[k] = make_subject(spec, jobs[k].stage, jobs[k].index, truths.at(jobs[k].stage));
            }
        };
        std::vector<std::thread> pool;
        const int nw = std::min<int>(threads, static_cast<int>(jobs.size()));
        pool.reserve(static_cast<std::size_t>(nw));
        for (int i = 0; i < nw; ++i) pool.emplace_back(worker);
        for (auto& th : pool) th.join();
    }
    return subjects;
}

}  // namespace cmfuse
