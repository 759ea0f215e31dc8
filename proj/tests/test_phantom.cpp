#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "cmfuse/datamodel.hpp"
#include "cmfuse/error.hpp"
#include "cmfuse/phantom.hpp"
#include "helpers.hpp"

using namespace cmfuse;
using testutil::max_abs_diff;

namespace {

PhantomSpec small_spec() {
    PhantomSpec spec;
    spec.n = 12;
    spec.T = 40;
    spec.n_blocks = 3;
    spec.subjects_per_stage = {{Stage::NC, 3}, {Stage::EMCI, 3}, {Stage::LMCI, 3}, {Stage::AD, 3}};
    spec.affected_rois = {0, 3, 6, 9};
    spec.compensation_rois = {1, 7};
    spec.seed = 99;
    return spec;
}

double affected_row_sum(const ConnMatrix& sc, const std::vector<int>& rois) {
    double s = 0.0;
    for (int r : rois) {
        for (int j = 0; j < sc.n(); ++j) s += sc.values().at(r, j);
    }
    return s;
}

}  // namespace

TEST_CASE("ground truth with identity factors equals the base matrix") {
    PhantomSpec spec = small_spec();
    const ConnMatrix nc = make_ground_truth_sc(spec, Stage::NC);

    PhantomSpec no_effects = spec;
    no_effects.affected_rois.clear();
    no_effects.compensation_rois.clear();
    const ConnMatrix base = make_ground_truth_sc(no_effects, Stage::AD);
    // NC factors are 1.0, so the NC matrix IS the unperturbed base.
    CHECK(nc.values() == base.values());
}

TEST_CASE("AD affected rows are weaker than NC affected rows") {
    PhantomSpec spec = small_spec();
    const ConnMatrix nc = make_ground_truth_sc(spec, Stage::NC);
    const ConnMatrix ad = make_ground_truth_sc(spec, Stage::AD);
    CHECK(affected_row_sum(ad, spec.affected_rois) < affected_row_sum(nc, spec.affected_rois));
}

TEST_CASE("affected strength decreases monotonically along stage order") {
    PhantomSpec spec = small_spec();
    double prev = 1e300;
    for (Stage s : kAllStages) {
        const double cur = affected_row_sum(make_ground_truth_sc(spec, s), spec.affected_rois);
        CHECK(cur < prev + 1e-12);
        if (s != Stage::NC) CHECK(cur < prev);
        prev = cur;
    }
}

TEST_CASE("ground truth is deterministic and block-structured") {
    PhantomSpec spec = small_spec();
    const ConnMatrix a = make_ground_truth_sc(spec, Stage::LMCI);
    const ConnMatrix b = make_ground_truth_sc(spec, Stage::LMCI);
    CHECK(a.values() == b.values());

    // Within-block edges dominate between-block edges for untouched ROIs.
    const ConnMatrix nc = make_ground_truth_sc(spec, Stage::NC);
    CHECK(nc.values().at(4, 5) > nc.values().at(4, 11));
}

TEST_CASE("spec validation rejects overlapping ROI sets and bad factors") {
    PhantomSpec spec = small_spec();
    spec.compensation_rois = {0};
    CHECK_THROWS_AS(spec.validate(), Error);

    spec = small_spec();
    spec.attenuation[Stage::AD] = 1.1;
    CHECK_THROWS_AS(spec.validate(), Error);

    spec = small_spec();
    spec.attenuation[Stage::EMCI] = 0.5;
    spec.attenuation[Stage::LMCI] = 0.7;  // increases along the order
    CHECK_THROWS_AS(spec.validate(), Error);

    spec = small_spec();
    spec.rho = 1.0;
    CHECK_THROWS_AS(spec.validate(), Error);
}

TEST_CASE("rho zero gives near-independent columns") {
    Rng base(5);
    Tensor sc_vals = testutil::random_symmetric(8, 1.0, base, 0.0);
    for (std::size_t i = 0; i < sc_vals.size(); ++i) sc_vals[i] = std::fabs(sc_vals[i]);
    for (int i = 0; i < 8; ++i) sc_vals.at(i, i) = 0.0;
    const ConnMatrix sc(sc_vals, ConnFlavor::Structural);

    const BoldSim sim = simulate_bold(sc, 2000, 0.0, 321);
    CHECK(!sim.white_noise_fallback);
    const ConnMatrix fc = pearson_fc(sim.bold);
    for (int i = 0; i < 8; ++i) {
        for (int j = i + 1; j < 8; ++j) CHECK(std::fabs(fc.values().at(i, j)) < 0.15);
    }
}

TEST_CASE("strong SC edge raises its FC entry above the median") {
    // Two strongly connected ROIs against a weak background, averaged over
    // 20 seeds.
    Tensor sc_vals(8, 8);
    for (int i = 0; i < 8; ++i) {
        for (int j = i + 1; j < 8; ++j) {
            const double w = (i == 2 && j == 5) ? 1.0 : 0.05;
            sc_vals.at(i, j) = w;
            sc_vals.at(j, i) = w;
        }
    }
    const ConnMatrix sc(sc_vals, ConnFlavor::Structural);

    double strong_mean = 0.0;
    std::vector<double> edge_means;
    Tensor fc_sum(8, 8);
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const BoldSim sim = simulate_bold(sc, 1000, 0.9, 1000 + seed);
        fc_sum.axpy(1.0, pearson_fc(sim.bold).values());
    }
    std::vector<double> offdiag;
    for (int i = 0; i < 8; ++i) {
        for (int j = i + 1; j < 8; ++j) offdiag.push_back(fc_sum.at(i, j) / 20.0);
    }
    strong_mean = fc_sum.at(2, 5) / 20.0;
    std::sort(offdiag.begin(), offdiag.end());
    const double median = offdiag[offdiag.size() / 2];
    CHECK(strong_mean > median);
}

TEST_CASE("simulate_bold is deterministic per seed and falls back on zero SC") {
    const ConnMatrix zero(Tensor(6, 6), ConnFlavor::Structural);
    const BoldSim a = simulate_bold(zero, 30, 0.5, 7);
    const BoldSim b = simulate_bold(zero, 30, 0.5, 7);
    CHECK(a.bold == b.bold);
    CHECK(a.white_noise_fallback);
    const BoldSim c = simulate_bold(zero, 30, 0.0, 7);
    CHECK(!c.white_noise_fallback);
    CHECK(a.bold == c.bold);  // same noise stream either way
}

TEST_CASE("generate_cohort respects counts, ids and invariants") {
    PhantomSpec spec = small_spec();
    spec.subjects_per_stage = {{Stage::NC, 5}, {Stage::EMCI, 0}, {Stage::LMCI, 0}, {Stage::AD, 5}};
    const auto cohort = generate_cohort(spec);
    REQUIRE(cohort.size() == 10);
    int nc = 0, ad = 0;
    for (const auto& s : cohort) {
        s.validate();
        if (s.stage == Stage::NC) ++nc;
        if (s.stage == Stage::AD) ++ad;
        CHECK(s.id.find(stage_name(s.stage)) == 0);
    }
    CHECK(nc == 5);
    CHECK(ad == 5);
}

TEST_CASE("cohort generation is bitwise deterministic, also across threads") {
    PhantomSpec spec = small_spec();
    const auto a = generate_cohort(spec, 1);
    const auto b = generate_cohort(spec, 1);
    const auto c = generate_cohort(spec, 4);
    REQUIRE(a.size() == b.size());
    REQUIRE(a.size() == c.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK(a[i].id == b[i].id);
        CHECK(a[i].bold == b[i].bold);
        CHECK(a[i].sc_emp == b[i].sc_emp);
        CHECK(a[i].fc_emp == b[i].fc_emp);
        CHECK(a[i].bold == c[i].bold);
        CHECK(a[i].sc_emp == c[i].sc_emp);
        CHECK(a[i].fc_emp == c[i].fc_emp);
    }
}

TEST_CASE("group-mean SC approaches its own ground truth") {
    PhantomSpec spec = small_spec();
    spec.subjects_per_stage = {{Stage::NC, 1}, {Stage::EMCI, 1}, {Stage::LMCI, 1}, {Stage::AD, 40}};
    const auto cohort = generate_cohort(spec);
    Tensor mean_sc(spec.n, spec.n);
    int count = 0;
    for (const auto& s : cohort) {
        if (s.stage != Stage::AD) continue;
        mean_sc.axpy(1.0, s.sc_emp.values());
        ++count;
    }
    REQUIRE(count == 40);
    for (std::size_t i = 0; i < mean_sc.size(); ++i) mean_sc[i] /= count;
    const Tensor ad_truth = make_ground_truth_sc(spec, Stage::AD).values();
    const Tensor nc_truth = make_ground_truth_sc(spec, Stage::NC).values();
    CHECK(mean_sc.frobenius_distance(ad_truth) < mean_sc.frobenius_distance(nc_truth));
}

TEST_CASE("SC->FC coupling: rank correlation across edges is positive") {
    PhantomSpec spec;
    spec.n = 16;
    spec.T = 500;
    spec.n_blocks = 4;
    spec.subjects_per_stage = {{Stage::NC, 20}, {Stage::EMCI, 0}, {Stage::LMCI, 0}, {Stage::AD, 0}};
    spec.affected_rois = {0, 4, 8, 12};
    spec.compensation_rois = {2, 10};
    spec.rho = 0.8;
    spec.seed = 1234;
    const auto cohort = generate_cohort(spec);
    REQUIRE(cohort.size() == 20);

    Tensor mean_fc(spec.n, spec.n);
    for (const auto& s : cohort) mean_fc.axpy(1.0 / 20.0, s.fc_emp.values());
    const Tensor truth = make_ground_truth_sc(spec, Stage::NC).values();

    std::vector<double> sc_w, fc_w;
    for (int i = 0; i < spec.n; ++i) {
        for (int j = i + 1; j < spec.n; ++j) {
            sc_w.push_back(truth.at(i, j));
            fc_w.push_back(mean_fc.at(i, j));
        }
    }
    CHECK(testutil::spearman(sc_w, fc_w) > 0.3);
}
