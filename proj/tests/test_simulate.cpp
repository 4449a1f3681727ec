#include "sier/error.hpp"
#include "sier/simulate.hpp"
#include "support.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace sier;
using sier::testing::max_abs;

namespace {

// The generators draw C from child stream 3 and D from child stream 4.
Matrix expected_left_factor(std::uint64_t seed, Index p, Index p0) {
    RandomStream rs = RandomStream(seed).derive(3);
    Matrix c = Matrix::Zero(p, 3);
    c.topRows(p0) = sample_normal(p0, 3, 1.0, rs);
    for (Index j = 0; j < 3; ++j) c.col(j).normalize();
    return c;
}

} // namespace

TEST(SimCase, ParseAndPrint) {
    EXPECT_EQ(parse_sim_case("1"), SimCase::one);
    EXPECT_EQ(parse_sim_case("3"), SimCase::three);
    EXPECT_EQ(parse_sim_case("figure1"), SimCase::figure1);
    EXPECT_EQ(to_string(SimCase::two), "2");
    EXPECT_THROW(parse_sim_case("4"), ValidationError);
}

TEST(SimulationSpec, Validation) {
    EXPECT_NO_THROW(SimulationSpec::case1(0.3, 0.2, 0.1).validate());
    SimulationSpec s = SimulationSpec::case1(0.3, 0.2, 0.1);
    s.p = 400;
    EXPECT_THROW(s.validate(), ValidationError);
    EXPECT_THROW(SimulationSpec::case2(100, 20, 0.3, 1.0, 0.015).validate(), ValidationError);
    EXPECT_THROW(SimulationSpec::case3(1000, 100, 3.0).validate(), ValidationError);
    EXPECT_EQ(SimulationSpec::case3(1000, 100, 1.0).rho, 0.7);
    SimulationSpec z = SimulationSpec::case2(100, 20, 0.3, 0.0, 0.0);
    EXPECT_THROW(z.validate(), ValidationError);
}

TEST(GenCase1, Structure) {
    RandomStream rs(1);
    const SimulatedData d = gen_case1(0.3, 0.2, 0.1, rs);
    EXPECT_EQ(d.train.x.rows(), 90);
    EXPECT_EQ(d.test.x.rows(), 500);
    EXPECT_EQ(d.train.p(), 500);
    EXPECT_EQ(d.train.q(), 3);
    EXPECT_NEAR(d.truth.b(0, 0), 0.258199, 1e-6);
    EXPECT_EQ(d.truth.b(0, 0), 1.0 / std::sqrt(15.0));
    EXPECT_EQ(d.truth.b(15, 1), 0.5 / std::sqrt(30.0));
    EXPECT_EQ(d.truth.b(104, 2), 0.25 / std::sqrt(60.0));
    EXPECT_EQ(d.truth.b(105, 2), 0.0);
    EXPECT_EQ(d.truth.support.size(), 105u);
    EXPECT_EQ(d.truth.components.k, 3);
    // Filler predictors have standard deviation 0.1.
    const Matrix filler = d.test.x.rightCols(350);
    EXPECT_NEAR(std::sqrt(filler.squaredNorm() / static_cast<double>(filler.size())), 0.1, 0.005);
}

TEST(GenCase1, Deterministic) {
    RandomStream a(5), b(5);
    const SimulatedData x = gen_case1(0.5, 0.5, 0.2, a);
    const SimulatedData y = gen_case1(0.5, 0.5, 0.2, b);
    EXPECT_EQ(x.train.x, y.train.x);
    EXPECT_EQ(x.train.y, y.train.y);
    EXPECT_EQ(x.test.y, y.test.y);
    RandomStream c(6);
    EXPECT_NE(gen_case1(0.5, 0.5, 0.2, c).train.y, x.train.y);
}

TEST(GenCase1, OraclePredictorHitsNoiseFloor) {
    RandomStream rs(7);
    const SimulatedData d = gen_case1(0.3, 0.2, 0.1, rs, 90, 5000);
    const double e = mspe(d.test.y, d.test.x * d.truth.b);
    EXPECT_NEAR(e, 0.1, 0.006);
}

TEST(GenCase2, FactorsAndSupport) {
    for (std::uint64_t seed : {1u, 2u, 3u}) {
        RandomStream rs(seed);
        const SimulatedData d = gen_case2(100, 20, 0.3, 0.0, 0.015, rs);
        const Matrix c = expected_left_factor(seed, 100, 40);
        for (Index j = 0; j < 3; ++j) EXPECT_NEAR(c.col(j).norm(), 1.0, 1e-12);
        // B = C D with D recovered by least squares on the known C.
        const Matrix dmat = (c.transpose() * c).ldlt().solve(c.transpose() * d.truth.b);
        EXPECT_LE(max_abs(c * dmat - d.truth.b), 1e-12);
        for (Index i = 0; i < 3; ++i) EXPECT_NEAR(dmat.row(i).norm(), 1.0, 1e-10);
        EXPECT_LE(max_abs(dmat), 1.0);
        for (Index j : d.truth.support) EXPECT_LT(j, 40);
        EXPECT_GT(thin_svd(d.truth.b).singular_values[2], 1e-8);
        EXPECT_EQ(d.train.p(), 100);
        EXPECT_EQ(d.train.q(), 20);
    }
}

TEST(GenCase2, NoiseCovariance) {
    RandomStream rs(11);
    const double total = 0.015;
    const SimulatedData d = gen_case2(50, 20, 0.3, 0.5, total, rs, 90, 100000);
    const Matrix eps = d.test.y - d.test.x * d.truth.b;
    const Matrix cov = eps.transpose() * eps / static_cast<double>(eps.rows());
    EXPECT_NEAR(cov.trace(), total, 0.02 * total);
    const double sigma2 = total / 20.0;
    EXPECT_NEAR(cov(0, 1), 0.5 * sigma2, 0.05 * sigma2);
}

TEST(GenCase3, CovarianceEntries) {
    const Matrix s1 = case3_d_covariance(200, 1.0);
    EXPECT_DOUBLE_EQ(s1(0, 100), std::exp(-1.0));
    EXPECT_EQ(s1.diagonal(), Vector::Ones(200));
    const Matrix s2 = case3_d_covariance(200, 2.0);
    EXPECT_DOUBLE_EQ(s2(0, 50), std::exp(-0.25));
}

TEST(GenCase3, FactorsAndSupport) {
    const std::uint64_t seed = 4;
    RandomStream rs(seed);
    const SimulatedData d = gen_case3(1000, 100, 1.0, 0.7, rs, 90, 20);
    const Matrix c = expected_left_factor(seed, 1000, 100);
    const Matrix dmat = (c.transpose() * c).ldlt().solve(c.transpose() * d.truth.b);
    EXPECT_LE(max_abs(c * dmat - d.truth.b), 1e-12);
    for (Index i = 0; i < 3; ++i) EXPECT_NEAR(dmat.row(i).norm(), 1.0, 1e-12);
    for (Index j : d.truth.support) EXPECT_LT(j, 100);
    EXPECT_EQ(d.truth.support.size(), 100u);
}

TEST(GenerateDispatch, MatchesDirectCall) {
    SimulationSpec spec = SimulationSpec::case2(60, 5, 0.3, 0.0, 0.015);
    spec.n_test = 30;
    RandomStream a(9), b(9);
    const SimulatedData x = generate(spec, a);
    const SimulatedData y = gen_case2(60, 5, 0.3, 0.0, 0.015, b, 90, 30);
    EXPECT_EQ(x.train.y, y.train.y);
    RandomStream c(1);
    EXPECT_THROW(generate(SimulationSpec::figure1(), c), ValidationError);
}

TEST(Figure1, InstanceShape) {
    RandomStream rs(3), again(3);
    const Figure1Instance f = gen_figure1(rs);
    EXPECT_EQ(f.x.rows(), 100);
    EXPECT_EQ(f.x.cols(), 1000);
    EXPECT_EQ(f.b.cols(), 100);
    const Vector sv = thin_svd(f.x * f.b).singular_values;
    EXPECT_LE(sv[25], 1e-9 * sv[0]);
    const Figure1Instance g = gen_figure1(again);
    EXPECT_EQ(f.x, g.x);
    EXPECT_EQ(f.b, g.b);
}

TEST(Figure1, CurveProperties) {
    Figure1Options opts;
    opts.n = 50;
    opts.p = 200;
    opts.q = 40;
    opts.rank = 10;
    for (std::uint64_t seed = 1; seed <= 3; ++seed) {
        RandomStream rs(seed);
        const Figure1Instance f = gen_figure1(rs, opts);
        const ApproxCurve c = approx_error_curve(f.x, f.b);
        ASSERT_EQ(c.sier.size(), 10);
        EXPECT_LE(c.sier[9], 1e-10);
        EXPECT_LE(c.svd[9], 1e-10);
        const SignalDecomposition pop = population_decomposition(f.x, f.b);
        for (Index k = 0; k < 10; ++k) {
            if (k > 0) EXPECT_LE(c.sier[k], c.sier[k - 1]);
            EXPECT_LE(c.sier[k], c.svd[k] + 1e-12);
            EXPECT_NEAR(c.sier[k], pop.mu.tail(9 - k).sum() / pop.mu.sum(), 1e-10);
        }
    }
    EXPECT_THROW(approx_error_curve(Matrix::Ones(3, 2), Matrix::Zero(2, 2)), ValidationError);
}

TEST(Figure1, MeanCurveOfOneReplicate) {
    Figure1Options opts;
    opts.n = 30;
    opts.p = 60;
    opts.q = 10;
    opts.rank = 4;
    opts.p0 = 20;
    const ApproxCurve m = mean_approx_curve(opts, 1, 8);
    RandomStream rs = RandomStream(8).derive(0);
    const Figure1Instance f = gen_figure1(rs, opts);
    const ApproxCurve c = approx_error_curve(f.x, f.b);
    EXPECT_EQ(m.sier, c.sier);
    EXPECT_EQ(m.svd, c.svd);
}

TEST(Metrics, Mspe) {
    const Matrix y = sier::testing::random_matrix(4, 3, 1);
    EXPECT_EQ(mspe(y, y), 0.0);
    Matrix off = y;
    off(2, 1) += 2.0;
    EXPECT_DOUBLE_EQ(mspe(y, off), 1.0);
    EXPECT_THROW(mspe(y, Matrix::Zero(4, 2)), ValidationError);
}

TEST(Metrics, Selection) {
    const std::vector<Index> support{1, 3};
    const SelectionMetrics all = selection_metrics(support, support, 6);
    EXPECT_EQ(*all.sensitivity, 1.0);
    EXPECT_EQ(all.specificity, 1.0);
    const SelectionMetrics none = selection_metrics({}, support, 6);
    EXPECT_EQ(*none.sensitivity, 0.0);
    EXPECT_EQ(none.specificity, 1.0);
    const SelectionMetrics mixed = selection_metrics({1, 2}, support, 6);
    EXPECT_EQ(*mixed.sensitivity, 0.5);
    EXPECT_EQ(mixed.specificity, 0.75);
    EXPECT_FALSE(selection_metrics({0}, {}, 3).sensitivity.has_value());
    EXPECT_THROW(selection_metrics({7}, support, 6), ValidationError);
}

TEST(Metrics, Aggregate) {
    const Aggregate one = aggregate({2.5});
    EXPECT_EQ(one.mean, 2.5);
    EXPECT_EQ(one.sd, 0.0);
    const Aggregate two = aggregate({1.0, 3.0});
    EXPECT_EQ(two.mean, 2.0);
    EXPECT_DOUBLE_EQ(two.sd, std::sqrt(2.0));
}

TEST(Study, ReplicatesAreIndependentOfBatch) {
    SimulationSpec spec = SimulationSpec::case2(60, 5, 0.3, 0.0, 0.05);
    spec.n_test = 40;
    spec.reps = 2;
    spec.seed = 17;
    TuningGrid grid;
    grid.pairs = {{0.5, 0.1}, {5.0, 0.3}};
    const StudyResult study = run_study(spec, grid, SolverConfig{}, 2);
    ASSERT_EQ(study.rows.size(), 2u);
    const ReplicateResult alone = run_replicate(spec, grid, SolverConfig{}, 1);
    EXPECT_EQ(study.rows[1].mspe, alone.mspe);
    EXPECT_EQ(study.rows[1].k_opt, alone.k_opt);
    EXPECT_EQ(study.rows[1].sp, alone.sp);
    EXPECT_EQ(study.rows[0].rep, 0);

    spec.reps = 1;
    const StudyResult single = run_study(spec, grid, SolverConfig{}, 1);
    EXPECT_EQ(single.mspe().mean, single.rows[0].mspe);
    EXPECT_EQ(single.mspe().sd, 0.0);
    EXPECT_EQ(single.rows[0].mspe, study.rows[0].mspe);
    EXPECT_GT(single.rows[0].mspe, 0.0);
}
