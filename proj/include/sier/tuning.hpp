#pragma once

#include "sier/extractor.hpp"
#include "sier/model.hpp"

#include <vector>

namespace sier {

/// Ordered (tau, lambda) pairs searched by cross-validation. Along the list
/// both the overall penalty and its squared-l1 share increase.
struct TuningGrid {
    std::vector<PenaltyPair> pairs;
    /// Cut-off on mu_k / (mu_1 + ... + mu_k) that caps the component count.
    double threshold = 0.05;

    /// The standard 12-pair grid.
    static TuningGrid standard();
    void validate() const;
};

/// K = min(min(n, p, q), first k > 1 with mu_k / sum_{i<=k} mu_i <= threshold).
/// When the ratio never drops to the threshold the min(n, p, q) cap applies.
Index max_components(std::span<const double> mu, Index n, Index p, Index q, double threshold);

/// Stop rule for fit_components implementing the ratio part of max_components.
StopRule component_cap_rule(double threshold);

struct CvReport {
    std::vector<PenaltyPair> pairs;
    std::vector<Index> k_caps;                           // per pair, from the full data
    std::vector<std::vector<double>> mean_errors;        // [pair][j - 1]
    std::vector<std::vector<std::vector<double>>> fold_errors; // [pair][j - 1][fold]
    std::vector<Index> fold_of;                          // fold id per observation
    Index folds = 0;
    Index chosen_pair = 0;
    Index chosen_k = 0;
};

/// The penalty handed to the solver for a fit on n rows.
PenaltyPair effective_penalty(const PenaltyPair& nominal, PenaltyScale scale, Index n);

struct CvOptions {
    Index folds = 5;
    int threads = 1;
    ScaleMode scale = ScaleMode::unit_diagonal;
    PenaltyScale penalty = PenaltyScale::per_observation;
};

struct CvResult {
    FittedModel model;
    CvReport report;
};

/// Shuffles 0..n-1 with `rs` and cuts the permutation into `folds`
/// contiguous blocks whose sizes differ by at most one.
std::vector<Index> fold_assignment(Index n, Index folds, RandomStream rs);

/// Selects (tau, lambda) and the component count by K-fold cross-validation.
///
/// Component caps are computed per pair on the whole dataset. Each fold is
/// standardized with its own training rows; validation error is
/// ||Y_val - Y_hat||_F^2 / n_val. Ties go to the smaller component count,
/// then the earlier pair. The returned model is the whole-data fit of the
/// chosen pair with k_opt set to the chosen count.
CvResult cross_validate(const Dataset& data, const TuningGrid& grid, const SolverConfig& cfg,
                        RandomStream rs, const CvOptions& opts = {});

} // namespace sier
