#include "fit_helpers.hpp"
#include "sier/error.hpp"
#include "sier/extractor.hpp"
#include "support.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

using namespace sier;
using sier::testing::centered;
using sier::testing::expect_orthonormal;
using sier::testing::max_abs;
using sier::testing::random_matrix;

namespace {

// Centred X with a planted coefficient matrix of the given rank.
struct Planted {
    Matrix x;
    Matrix b;
};

Planted planted(Index n, Index p, Index q, Index rank, std::uint64_t seed) {
    Planted out;
    out.x = centered(random_matrix(n, p, seed));
    out.b = random_matrix(p, rank, seed + 1) * random_matrix(rank, q, seed + 2);
    return out;
}

CrossMoment diag_moment(const Vector& b_diag) {
    const Index p = b_diag.size();
    return CrossMoment::from_factors(Matrix::Identity(p, p), b_diag.cwiseSqrt().asDiagonal().toDenseMatrix());
}

} // namespace

TEST(CrossMoment, HandExample) {
    Matrix x(2, 1), y(2, 1);
    x << 1, -1;
    y << 1, -1;
    const CrossMoment cm = cross_moment(x, y);
    EXPECT_DOUBLE_EQ(cm.m()(0, 0), 1.0);
    ASSERT_TRUE(cm.b_hat().has_value());
    EXPECT_DOUBLE_EQ((*cm.b_hat())(0, 0), 1.0);
}

TEST(CrossMoment, ConstantResponsesGiveZero) {
    const Matrix x = centered(random_matrix(6, 4, 1));
    const CrossMoment cm = cross_moment(x, Matrix::Constant(6, 2, 3.5));
    EXPECT_LE(max_abs(cm.m()), 1e-15);
}

TEST(CrossMoment, MatchesDefinition) {
    const Matrix x = centered(random_matrix(6, 4, 2));
    const Matrix y = random_matrix(6, 3, 3);
    const CrossMoment cm = cross_moment(x, y);
    const Matrix yc = centered(y);
    const Matrix brute = x.transpose() * yc * yc.transpose() * x / 36.0;
    EXPECT_LE(max_abs(*cm.b_hat() - brute), 1e-12);
    Eigen::SelfAdjointEigenSolver<Matrix> eig(*cm.b_hat());
    EXPECT_GE(eig.eigenvalues().minCoeff(), -1e-12);
    EXPECT_LE(max_abs(cm.apply_s(Vector::Ones(4)) - x.transpose() * x * Vector::Ones(4) / 6.0), 1e-12);
}

TEST(CrossMoment, DimensionMismatch) {
    EXPECT_THROW(cross_moment(Matrix::Zero(3, 2), Matrix::Zero(4, 1)), ValidationError);
}

TEST(PenaltyPair, Validation) {
    EXPECT_THROW((PenaltyPair{-1.0, 0.0}.validate()), ValidationError);
    EXPECT_THROW((PenaltyPair{1.0, 1.0}.validate()), ValidationError);
    EXPECT_NO_THROW((PenaltyPair{0.0, 0.0}.validate()));
}

TEST(RatioObjective, ScaleInvariant) {
    RandomStream rs(4);
    const Matrix x = centered(random_matrix(12, 5, 5));
    const CrossMoment cm = cross_moment(x, random_matrix(12, 3, 6));
    for (int i = 0; i < 20; ++i) {
        const Vector alpha = sample_normal(5, 1, 1.0, rs);
        const PenaltyPair pen{rs.uniform(0.0, 5.0), rs.uniform(0.0, 0.9)};
        const double f = ratio_objective(cm, pen, alpha);
        for (double c : {1e-3, 7.0, 1e3, -2.0}) {
            EXPECT_LE(std::abs(ratio_objective(cm, pen, c * alpha) - f), 1e-10 * std::abs(f));
        }
    }
}

TEST(PopulationDecomposition, ZeroCoefficients) {
    const SignalDecomposition dec = population_decomposition(centered(random_matrix(10, 4, 7)), Matrix::Zero(4, 2));
    EXPECT_EQ(dec.k, 0);
    EXPECT_EQ(dec.a.cols(), 0);
    EXPECT_EQ(dec.w.cols(), 0);
}

TEST(PopulationDecomposition, SingleResponse) {
    const Matrix x = centered(random_matrix(20, 5, 8));
    const Matrix beta = random_matrix(5, 1, 9);
    const SignalDecomposition dec = population_decomposition(x, beta);
    ASSERT_EQ(dec.k, 1);
    const Matrix s = x.transpose() * x / 20.0;
    Vector expected = beta.col(0) / std::sqrt((beta.transpose() * s * beta)(0, 0));
    canonical_sign(expected);
    EXPECT_LE(max_abs(dec.a.col(0) - expected), 1e-10);
    EXPECT_NEAR(std::abs(dec.w(0, 0)), std::sqrt(dec.mu[0]), 1e-12);
}

TEST(PopulationDecomposition, BestApproximationErrors) {
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        const Planted pl = planted(30, 12, 8, 5, 10 * seed);
        const SignalDecomposition dec = population_decomposition(pl.x, pl.b);
        ASSERT_EQ(dec.k, 5);
        const Matrix xb = pl.x * pl.b;
        for (Index k = 0; k <= 5; ++k) {
            const double err = (xb - pl.x * coefficient_matrix(dec, k)).squaredNorm();
            const double tail = 30.0 * dec.mu.tail(5 - k).sum();
            EXPECT_LE(std::abs(err - tail), 1e-8 * xb.squaredNorm()) << "k = " << k;
        }
    }
}

TEST(PopulationDecomposition, MaximumValues) {
    const Planted pl = planted(30, 12, 8, 4, 77);
    const SignalDecomposition dec = population_decomposition(pl.x, pl.b);
    const Matrix s = pl.x.transpose() * pl.x / 30.0;
    const Matrix big_b = s * pl.b * pl.b.transpose() * s;
    for (Index k = 0; k < dec.k; ++k) {
        const double v = dec.a.col(k).dot(big_b * dec.a.col(k));
        EXPECT_NEAR(v, dec.mu[k], 1e-8 * dec.mu[k]);
    }
    const Matrix ata = dec.a.transpose() * s * dec.a;
    EXPECT_LE(max_abs(ata - Matrix::Identity(dec.k, dec.k)), 1e-8);
    EXPECT_LE(max_abs(dec.t.transpose() * dec.t / 30.0 - Matrix::Identity(dec.k, dec.k)), 1e-8);
}

TEST(SolveComponent, UnpenalizedEigenproblem) {
    Vector d(3);
    d << 3, 1, 0;
    const CrossMoment cm = diag_moment(d);
    const ComponentResult r = solve_component(cm, {0.0, 0.0}, Matrix(3, 0), SolverConfig{}, RandomStream(1));
    EXPECT_NEAR(r.mu_hat, 3.0, 1e-12);
    EXPECT_NEAR(std::abs(r.alpha[0]), 1.0, 1e-12);
    EXPECT_LE(r.alpha.tail(2).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_GE(r.alpha[0], 0.0);
}

TEST(SolveComponent, TwoDimensionalGridOracle) {
    Matrix b(2, 2);
    b << 2, 1, 1, 2;
    const CrossMoment cm = CrossMoment::from_factors(Matrix::Identity(2, 2), cholesky_factor(b));
    const PenaltyPair pen{0.5, 0.5};
    const ComponentResult r = solve_component(cm, pen, Matrix(2, 0), SolverConfig{}, RandomStream(2));
    double best = 0.0;
    for (double th = 0.0; th < std::numbers::pi; th += 1e-4) {
        Vector a(2);
        a << std::cos(th), std::sin(th);
        best = std::max(best, ratio_objective(cm, pen, a));
    }
    EXPECT_GE(r.objective, best * (1.0 - 1e-3));
    EXPECT_NEAR(r.objective, ratio_objective(cm, pen, r.alpha), 1e-12 * r.objective);
    EXPECT_NEAR(r.alpha.squaredNorm(), 1.0, 1e-8);
}

TEST(SolveComponent, ScaleInvariantAtSolution) {
    const Planted pl = planted(25, 10, 4, 3, 31);
    const CrossMoment cm = cross_moment(pl.x, pl.x * pl.b + random_matrix(25, 4, 32));
    const PenaltyPair pen{1.0, 0.4};
    const ComponentResult r = solve_component(cm, pen, Matrix(10, 0), SolverConfig{}, RandomStream(3));
    const double f = ratio_objective(cm, pen, r.alpha);
    for (double c : {1e-3, 7.0, 1e3}) {
        EXPECT_LE(std::abs(ratio_objective(cm, pen, c * r.alpha) - f), 1e-10 * f);
    }
}

TEST(SolveComponent, RespectsConstraints) {
    const Planted pl = planted(40, 15, 5, 4, 41);
    const CrossMoment cm = cross_moment(pl.x, pl.x * pl.b + 0.1 * random_matrix(40, 5, 42));
    const PenaltyPair pen{0.5, 0.3};
    Matrix prev(15, 0);
    for (int k = 0; k < 3; ++k) {
        const ComponentResult r = solve_component(cm, pen, prev, SolverConfig{}, RandomStream(5).derive(k));
        ASSERT_FALSE(r.exhausted);
        EXPECT_NEAR(cm.apply_s(r.alpha).dot(r.alpha), 1.0, 1e-8);
        if (prev.cols() > 0) {
            EXPECT_LE((prev.transpose() * cm.apply_s(r.alpha)).cwiseAbs().maxCoeff(), SolverConfig{}.ortho_tol);
        }
        EXPECT_NEAR(r.mu_hat, (cm.m().transpose() * r.alpha).squaredNorm(), 1e-10 * r.mu_hat);
        prev.conservativeResize(15, k + 1);
        prev.col(k) = r.alpha;
    }
}

TEST(SolveComponent, IterativePathAgreesWithClosedForm) {
    const Planted pl = planted(30, 8, 4, 3, 51);
    const CrossMoment cm = cross_moment(pl.x, pl.x * pl.b + 0.2 * random_matrix(30, 4, 52));
    const ComponentResult exact = solve_component(cm, {0.5, 0.0}, Matrix(8, 0), SolverConfig{}, RandomStream(6));
    const ComponentResult iter = solve_component(cm, {0.5, 1e-9}, Matrix(8, 0), SolverConfig{}, RandomStream(6));
    EXPECT_NEAR(iter.objective, exact.objective, 1e-6 * exact.objective);
    EXPECT_LE(max_abs(iter.alpha - exact.alpha), 1e-4);
}

TEST(SolveComponent, ExhaustedSignal) {
    const CrossMoment cm = CrossMoment::from_factors(Matrix::Identity(3, 3), Matrix::Zero(3, 2));
    const ComponentResult r = solve_component(cm, {0.5, 0.5}, Matrix(3, 0), SolverConfig{}, RandomStream(1));
    EXPECT_TRUE(r.exhausted);
}

TEST(SolveComponent, LassoShareProducesZeros) {
    const Planted pl = planted(40, 30, 3, 2, 61);
    Matrix b = Matrix::Zero(30, 3);
    b.topRows(4) = pl.b.topRows(4);
    const CrossMoment cm = cross_moment(pl.x, pl.x * b + 0.05 * random_matrix(40, 3, 62));
    const ComponentResult r = solve_component(cm, {1.0, 0.6}, Matrix(30, 0), SolverConfig{}, RandomStream(7));
    EXPECT_GT((r.alpha.array() == 0.0).count(), 10);
}

TEST(FitComponents, NoiselessMatchesPopulation) {
    const Planted pl = planted(40, 10, 6, 3, 71);
    const Matrix y = pl.x * pl.b;
    const CrossMoment cm = cross_moment(pl.x, y);
    const SignalDecomposition pop = population_decomposition(pl.x, pl.b);
    for (double lambda : {0.0, 0.3}) {
        const SignalDecomposition dec = fit_components(cm, {1e-6, lambda}, 3, SolverConfig{}, RandomStream(8));
        ASSERT_EQ(dec.k, 3);
        for (Index k = 0; k < 3; ++k) EXPECT_NEAR(dec.mu[k], pop.mu[k], 1e-4 * pop.mu[k]);
        expect_orthonormal(cm, dec);
    }
}

TEST(FitComponents, SingleComponentAndZeroResponses) {
    const Planted pl = planted(20, 6, 3, 2, 81);
    const CrossMoment cm = cross_moment(pl.x, pl.x * pl.b);
    const SignalDecomposition one = fit_components(cm, {0.5, 0.3}, 1, SolverConfig{}, RandomStream(9));
    EXPECT_EQ(one.k, 1);
    const CrossMoment zero = cross_moment(pl.x, Matrix::Zero(20, 3));
    EXPECT_EQ(fit_components(zero, {0.5, 0.3}, 3, SolverConfig{}, RandomStream(9)).k, 0);
}

TEST(FitComponents, UnpenalizedMagnitudesDecrease) {
    const Planted pl = planted(50, 8, 6, 4, 91);
    const CrossMoment cm = cross_moment(pl.x, pl.x * pl.b + random_matrix(50, 6, 92));
    const SignalDecomposition dec = fit_components(cm, {0.0, 0.0}, 6, SolverConfig{}, RandomStream(10));
    ASSERT_EQ(dec.k, 6);
    for (Index k = 1; k < dec.k; ++k) EXPECT_GE(dec.mu[k - 1], dec.mu[k] * (1.0 - 1e-10));
    expect_orthonormal(cm, dec);
}

TEST(FitComponents, PenalizedOrthonormalHighDimensional) {
    const Planted pl = planted(30, 120, 5, 3, 101);
    const CrossMoment cm = cross_moment(pl.x, pl.x * pl.b + random_matrix(30, 5, 102));
    for (PenaltyPair pen : {PenaltyPair{0.05, 0.05}, PenaltyPair{1.0, 0.3}, PenaltyPair{100, 0.6}, PenaltyPair{5, 0.0}}) {
        const SignalDecomposition dec = fit_components(cm, pen, 5, SolverConfig{}, RandomStream(11));
        EXPECT_GE(dec.k, 3);
        expect_orthonormal(cm, dec);
        for (Index k = 0; k < dec.k; ++k) EXPECT_GE(dec.mu[k], 0.0);
    }
}

TEST(FitComponents, StopRuleEndsExtraction) {
    const Planted pl = planted(30, 10, 5, 4, 111);
    const CrossMoment cm = cross_moment(pl.x, pl.x * pl.b);
    const SignalDecomposition dec = fit_components(cm, {0.5, 0.2}, 4, SolverConfig{}, RandomStream(12),
                                                   [](std::span<const double> mu) { return mu.size() == 2; });
    EXPECT_EQ(dec.k, 2);
}

TEST(EstimateW, ConstantResponses) {
    const Planted pl = planted(20, 5, 2, 2, 121);
    const SignalDecomposition pop = population_decomposition(pl.x, pl.b);
    EXPECT_LE(max_abs(estimate_w(pop.t, Matrix::Constant(20, 3, 2.0))), 1e-14);
}

TEST(EstimateW, SingleScoreResponse) {
    const Planted pl = planted(20, 5, 2, 2, 131);
    const SignalDecomposition pop = population_decomposition(pl.x, pl.b);
    Vector v(3);
    v << 0.6, 0.0, -0.8;
    const Matrix y = pop.t.col(0) * v.transpose();
    const Matrix w = estimate_w(pop.t, y);
    EXPECT_LE(max_abs(w.col(0) - v), 1e-12);
    EXPECT_LE(max_abs(w.col(1)), 1e-12);
}

TEST(EstimateW, MatchesLeastSquares) {
    const Planted pl = planted(25, 6, 4, 3, 141);
    const SignalDecomposition pop = population_decomposition(pl.x, pl.b);
    const Matrix y = random_matrix(25, 4, 142);
    const Matrix t = pop.t;
    const Matrix ls = (t.transpose() * t).ldlt().solve(t.transpose() * centered(y));
    EXPECT_LE(max_abs(estimate_w(t, y) - ls.transpose()), 1e-10);
}

TEST(EstimateW, RejectsNonOrthogonalScores) {
    EXPECT_THROW(estimate_w(Matrix::Ones(5, 2), Matrix::Zero(5, 1)), NumericalError);
}

TEST(CoefficientMatrix, PrefixesAndRange) {
    const Planted pl = planted(20, 5, 3, 2, 151);
    const SignalDecomposition pop = population_decomposition(pl.x, pl.b);
    EXPECT_EQ(coefficient_matrix(pop, 0), Matrix::Zero(5, 3));
    const Matrix b1 = coefficient_matrix(pop, 1);
    EXPECT_LE(max_abs(b1 - pop.a.col(0) * pop.w.col(0).transpose()), 1e-15);
    EXPECT_EQ(thin_svd(b1).singular_values.tail(2).cwiseAbs().maxCoeff() <= 1e-12 * b1.norm(), true);
    EXPECT_THROW(coefficient_matrix(pop, 3), ValidationError);
}

TEST(CoefficientMatrix, SingleResponseIsLeastSquares) {
    const Matrix x = centered(random_matrix(50, 10, 161));
    const Matrix y = x * random_matrix(10, 1, 162) + random_matrix(50, 1, 163);
    const CrossMoment cm = cross_moment(x, y);
    const SignalDecomposition dec = fit_components(cm, {0.0, 0.0}, 1, SolverConfig{}, RandomStream(13));
    const Vector ols = (x.transpose() * x).ldlt().solve(x.transpose() * centered(y));
    const Vector b = coefficient_matrix(dec, 1).col(0);
    EXPECT_LE((b - ols).norm() / ols.norm(), 1e-8);
}

TEST(SignalFraction, Examples) {
    const std::vector<double> a{1.0, 0.0}, b{1.0, 1.0}, c{1.0, 0.01}, z{0.0, 0.0};
    EXPECT_EQ(signal_fraction(a, 2), 0.0);
    EXPECT_EQ(signal_fraction(b, 2), 0.5);
    EXPECT_NEAR(signal_fraction(c, 2), 0.01 / 1.01, 1e-15);
    EXPECT_EQ(signal_fraction(z, 1), 0.0);
    EXPECT_THROW(signal_fraction(b, 3), ValidationError);
}
