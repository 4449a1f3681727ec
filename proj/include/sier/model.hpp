#pragma once

#include "sier/numerics.hpp"

#include <optional>
#include <vector>

namespace sier {

/// Raw predictors X (n x p) and responses Y (n x q).
struct Dataset {
    Matrix x;
    Matrix y;

    Dataset() = default;
    Dataset(Matrix x_, Matrix y_);

    Index n() const { return x.rows(); }
    Index p() const { return x.cols(); }
    Index q() const { return y.cols(); }

    /// Rows selected by `rows`, in the given order.
    Dataset subset(std::span<const Index> rows) const;
};

/// How predictor columns are scaled after centring.
enum class ScaleMode {
    unit_diagonal, // divide by the column root-mean-square so that diag(S) = 1
    center_only,   // keep raw units
};

/// How a nominal tau enters the objective fitted on n rows.
enum class PenaltyScale {
    per_observation, // tau as written, next to alpha^T S alpha with S = X^T X / n
    total,           // tau next to alpha^T X^T X alpha, i.e. tau / n in the ratio
};

/// Maps raw data to the model frame: X column-centred with unit-diagonal
/// S = X^T X / n, zero-variance columns removed, Y centred.
struct Standardizer {
    Vector x_mean;              // length p (original numbering)
    Vector x_scale;             // length p; 0 for dropped columns, 1 under center_only
    Vector y_mean;              // length q
    std::vector<Index> dropped; // ascending
    std::vector<Index> kept;    // ascending; complement of `dropped`

    Index p() const { return x_mean.size(); }
    Index p_kept() const { return static_cast<Index>(kept.size()); }
    Index q() const { return y_mean.size(); }

    /// Rebuilds `kept` from `dropped` and p.
    void rebuild_kept();
};

/// One SiER decomposition B = A W^T in the model frame.
struct SignalDecomposition {
    Index k = 0;
    Matrix a;  // p_kept x K, columns alpha_k with alpha^T S alpha = 1
    Matrix w;  // q x K
    Vector mu; // signal magnitudes alpha_k^T B alpha_k
    Matrix t;  // n x K training scores X alpha_k (empty after deserialisation)
    /// Whether every component's solver met its tolerance.
    bool converged = true;
};

struct FittedModel {
    Standardizer standardizer;
    SignalDecomposition decomposition;
    double tau = 0.0; // nominal, see `penalty`
    double lambda = 0.0;
    Index k_opt = 0;
    ScaleMode scale = ScaleMode::unit_diagonal;
    PenaltyScale penalty = PenaltyScale::per_observation;
};

/// Result of standardize_fit.
struct StandardizedData {
    Standardizer standardizer;
    Dataset data; // model frame
};

StandardizedData standardize_fit(const Dataset& data, ScaleMode mode = ScaleMode::unit_diagonal);

/// (x - x_mean) / x_scale per retained column; dropped columns removed.
Matrix standardize_apply(const Standardizer& std, const Matrix& x_new);

/// Y_hat = 1 y_mean^T + standardize_apply(X_new) * sum_{j<=k} alpha_j w_j^T.
/// `k` defaults to model.k_opt; k = 0 gives constant y_mean rows.
Matrix predict(const FittedModel& model, const Matrix& x_new, std::optional<Index> k = {});

/// Original-numbering indices j with max_{k<=k_opt} |A_jk| > tol.
std::vector<Index> selected_features(const FittedModel& model, double tol = 1e-8);

} // namespace sier
