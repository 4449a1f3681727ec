#include "sier/tuning.hpp"

#include "sier/error.hpp"

#include <algorithm>
#include <limits>
#include <numeric>
#include <string>

namespace sier {

TuningGrid TuningGrid::standard() {
    TuningGrid g;
    g.pairs = {{0.05, 0.05}, {0.1, 0.05}, {0.1, 0.1}, {0.5, 0.1}, {0.5, 0.2}, {1.0, 0.2},
               {1.0, 0.3},   {5.0, 0.3},  {5.0, 0.4}, {10.0, 0.4}, {50.0, 0.5}, {100.0, 0.6}};
    return g;
}

void TuningGrid::validate() const {
    if (pairs.empty()) throw ValidationError("tuning grid: no (tau, lambda) pairs");
    for (const auto& p : pairs) p.validate();
    if (!(threshold > 0.0 && threshold < 1.0)) {
        throw ValidationError("tuning grid: threshold must lie in (0, 1), got " +
                              std::to_string(threshold));
    }
}

Index max_components(std::span<const double> mu, Index n, Index p, Index q, double threshold) {
    const Index cap = std::min({n, p, q});
    const Index seen = std::min<Index>(cap, static_cast<Index>(mu.size()));
    for (Index k = 2; k <= seen; ++k) {
        if (signal_fraction(mu, k) <= threshold) return k;
    }
    return cap;
}

PenaltyPair effective_penalty(const PenaltyPair& nominal, PenaltyScale scale, Index n) {
    if (scale == PenaltyScale::per_observation) return nominal;
    if (n < 1) throw ValidationError("effective_penalty: no observations");
    return {nominal.tau / static_cast<double>(n), nominal.lambda};
}

StopRule component_cap_rule(double threshold) {
    return [threshold](std::span<const double> mu) {
        const auto k = static_cast<Index>(mu.size());
        return k > 1 && signal_fraction(mu, k) <= threshold;
    };
}

std::vector<Index> fold_assignment(Index n, Index folds, RandomStream rs) {
    if (folds < 2 || n < folds) {
        throw ValidationError("cross-validation: cannot split " + std::to_string(n) +
                              " observations into " + std::to_string(folds) + " folds");
    }
    std::vector<Index> perm(static_cast<std::size_t>(n));
    std::iota(perm.begin(), perm.end(), Index{0});
    for (Index i = n - 1; i > 0; --i) {
        const auto j = static_cast<Index>(rs.below(static_cast<std::uint64_t>(i + 1)));
        std::swap(perm[static_cast<std::size_t>(i)], perm[static_cast<std::size_t>(j)]);
    }
    std::vector<Index> fold_of(static_cast<std::size_t>(n));
    const Index base = n / folds;
    const Index extra = n % folds;
    Index pos = 0;
    for (Index f = 0; f < folds; ++f) {
        const Index size = base + (f < extra ? 1 : 0);
        for (Index i = 0; i < size; ++i) fold_of[static_cast<std::size_t>(perm[static_cast<std::size_t>(pos++)])] = f;
    }
    return fold_of;
}

namespace {

constexpr std::uint64_t kFoldStream = 0;
constexpr std::uint64_t kFullFitStream = 1;
constexpr std::uint64_t kFoldFitStream = 2;

} // namespace

CvResult cross_validate(const Dataset& data, const TuningGrid& grid, const SolverConfig& cfg,
                        RandomStream rs, const CvOptions& opts) {
    grid.validate();
    cfg.validate();
    const Index n = data.n();
    const Index folds = opts.folds;
    if (n < 2 * folds) {
        throw ValidationError("cross-validation: " + std::to_string(n) +
                              " observations are too few for " + std::to_string(folds) + " folds");
    }
    const auto n_pairs = static_cast<Index>(grid.pairs.size());

    // Step 1: component caps on the whole dataset.
    const StandardizedData full = standardize_fit(data, opts.scale);
    const CrossMoment full_cm(full.data.x, full.data.y);
    const Index cap = std::min({n, full.standardizer.p_kept(), data.q()});
    std::vector<SignalDecomposition> full_fits(static_cast<std::size_t>(n_pairs));
    const StopRule stop = component_cap_rule(grid.threshold);
    parallel_for(n_pairs, opts.threads, [&](Index i) {
        full_fits[static_cast<std::size_t>(i)] =
            fit_components(full_cm,
                           effective_penalty(grid.pairs[static_cast<std::size_t>(i)], opts.penalty, n),
                           cap, cfg,
                           rs.derive(kFullFitStream).derive(static_cast<std::uint64_t>(i)), stop);
    });

    CvReport report;
    report.pairs = grid.pairs;
    report.folds = folds;
    for (const auto& fit : full_fits) report.k_caps.push_back(fit.k);
    if (std::all_of(report.k_caps.begin(), report.k_caps.end(), [](Index k) { return k == 0; })) {
        throw DataError("cross-validation: no tuning pair extracted any component (degenerate fit)");
    }

    // Step 2: validation errors for every (pair, fold, component count).
    report.fold_of = fold_assignment(n, folds, rs.derive(kFoldStream));
    std::vector<std::vector<Index>> train_rows(static_cast<std::size_t>(folds));
    std::vector<std::vector<Index>> val_rows(static_cast<std::size_t>(folds));
    for (Index i = 0; i < n; ++i) {
        const Index f = report.fold_of[static_cast<std::size_t>(i)];
        for (Index l = 0; l < folds; ++l) {
            (l == f ? val_rows : train_rows)[static_cast<std::size_t>(l)].push_back(i);
        }
    }
    for (Index l = 0; l < folds; ++l) {
        if (train_rows[static_cast<std::size_t>(l)].size() < 2) {
            throw ValidationError("cross-validation: fold " + std::to_string(l + 1) +
                                  " leaves fewer than 2 training rows");
        }
    }

    report.fold_errors.resize(static_cast<std::size_t>(n_pairs));
    for (Index i = 0; i < n_pairs; ++i) {
        report.fold_errors[static_cast<std::size_t>(i)].assign(
            static_cast<std::size_t>(report.k_caps[static_cast<std::size_t>(i)]),
            std::vector<double>(static_cast<std::size_t>(folds), 0.0));
    }

    parallel_for(n_pairs * folds, opts.threads, [&](Index job) {
        const Index i = job / folds;
        const Index l = job % folds;
        const Index k_cap = report.k_caps[static_cast<std::size_t>(i)];
        if (k_cap == 0) return;
        const Dataset train = data.subset(train_rows[static_cast<std::size_t>(l)]);
        const Dataset val = data.subset(val_rows[static_cast<std::size_t>(l)]);
        const StandardizedData frame = standardize_fit(train, opts.scale);
        const CrossMoment cm(frame.data.x, frame.data.y);
        const Index k_fold = std::min({k_cap, static_cast<Index>(train.n()),
                                       frame.standardizer.p_kept()});
        FittedModel model;
        model.standardizer = frame.standardizer;
        model.decomposition =
            fit_components(cm,
                           effective_penalty(grid.pairs[static_cast<std::size_t>(i)], opts.penalty,
                                             train.n()),
                           k_fold, cfg,
                           rs.derive(kFoldFitStream).derive(static_cast<std::uint64_t>(job)));
        const Matrix xs = standardize_apply(frame.standardizer, val.x);
        const Matrix resid0 = (val.y.rowwise() - frame.standardizer.y_mean.transpose());
        const double n_val = static_cast<double>(val.n());
        // Prefix sums: the j-component prediction reuses components 1..j.
        Matrix fitted = Matrix::Zero(val.n(), data.q());
        const Index have = model.decomposition.k;
        for (Index j = 1; j <= k_cap; ++j) {
            if (j <= have) {
                fitted += (xs * model.decomposition.a.col(j - 1)) *
                          model.decomposition.w.col(j - 1).transpose();
            }
            report.fold_errors[static_cast<std::size_t>(i)][static_cast<std::size_t>(j - 1)]
                              [static_cast<std::size_t>(l)] =
                (resid0 - fitted).squaredNorm() / n_val;
        }
    });

    double best = std::numeric_limits<double>::infinity();
    Index max_cap = *std::max_element(report.k_caps.begin(), report.k_caps.end());
    report.mean_errors.resize(static_cast<std::size_t>(n_pairs));
    for (Index i = 0; i < n_pairs; ++i) {
        for (const auto& per_fold : report.fold_errors[static_cast<std::size_t>(i)]) {
            double sum = 0.0;
            for (double e : per_fold) sum += e;
            report.mean_errors[static_cast<std::size_t>(i)].push_back(sum / static_cast<double>(folds));
        }
    }
    for (Index j = 1; j <= max_cap; ++j) {
        for (Index i = 0; i < n_pairs; ++i) {
            const auto& row = report.mean_errors[static_cast<std::size_t>(i)];
            if (j > static_cast<Index>(row.size())) continue;
            const double e = row[static_cast<std::size_t>(j - 1)];
            if (e < best) {
                best = e;
                report.chosen_pair = i;
                report.chosen_k = j;
            }
        }
    }

    CvResult out;
    out.model.standardizer = full.standardizer;
    out.model.decomposition = std::move(full_fits[static_cast<std::size_t>(report.chosen_pair)]);
    out.model.tau = grid.pairs[static_cast<std::size_t>(report.chosen_pair)].tau;
    out.model.lambda = grid.pairs[static_cast<std::size_t>(report.chosen_pair)].lambda;
    out.model.k_opt = report.chosen_k;
    out.model.scale = opts.scale;
    out.model.penalty = opts.penalty;
    out.report = std::move(report);
    return out;
}

} // namespace sier
