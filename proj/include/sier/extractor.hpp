#pragma once

#include "sier/model.hpp"
#include "sier/numerics.hpp"

#include <functional>
#include <optional>
#include <span>

namespace sier {

/// Tuning pair of the penalty tau * ||alpha||_lambda^2 with
/// ||alpha||_lambda^2 = (1 - lambda) ||alpha||_2^2 + lambda ||alpha||_1^2.
struct PenaltyPair {
    double tau = 0.0;
    double lambda = 0.0;

    double ridge() const { return tau * (1.0 - lambda); }
    double l1_squared() const { return tau * lambda; }
    void validate() const;
};

struct SolverConfig {
    int max_outer_iters = 500;
    /// Relative change of the ratio objective that ends the outer loop.
    double tol = 1e-8;
    /// Perturbed restarts in addition to the deterministic start.
    int restarts = 3;
    /// Initial weight of the orthogonality penalty, relative to unit diag(S).
    double ortho_penalty_start = 1e3;
    /// Required bound on |alpha_l^T S alpha| for earlier components.
    double ortho_tol = 1e-6;
    int max_inner_sweeps = 5000;

    void validate() const;
};

/// Sufficient statistics of a standardized dataset.
///
/// S = Z^T Z with Z = X / sqrt(n) is only ever applied through Z, and
/// B_hat = M M^T through M = X^T (Y - 1 ybar^T) / n. For p <= 200 B_hat is
/// also materialised so tests can check it directly.
class CrossMoment {
public:
    /// Builds from a model-frame design `x` and responses `y` (centred here).
    CrossMoment(const Matrix& x, const Matrix& y);
    /// Builds from Z and M directly; S = Z^T Z and B_hat = M M^T.
    static CrossMoment from_factors(Matrix z, Matrix m);

    Index n() const { return z_.rows(); }
    Index p() const { return z_.cols(); }
    Index q() const { return m_.cols(); }

    const Matrix& z() const { return z_; }
    const Matrix& m() const { return m_; }
    /// Centred responses; empty when built from factors.
    const Matrix& y_centered() const { return y_centered_; }
    const std::optional<Matrix>& b_hat() const { return b_hat_; }
    const Vector& s_diag() const { return s_diag_; }

    Vector apply_s(const Vector& v) const { return z_.transpose() * (z_ * v); }

    /// G^+ x for G = S + ridge I, restricted to the row space of Z. Exact
    /// for x in that space, which holds for M and for S A.
    Matrix ridge_solve(double ridge, const Matrix& x) const;

private:
    CrossMoment() = default;
    void finish();

    Matrix z_;
    Matrix m_;
    Matrix y_centered_;
    std::optional<Matrix> b_hat_;
    Vector s_diag_;
    Matrix row_space_; // p x r right singular vectors of Z
    Vector eig_s_;     // r non-zero eigenvalues of S
};

/// M = X^T (Y - 1 ybar^T) / n together with Z = X / sqrt(n).
CrossMoment cross_moment(const Matrix& x, const Matrix& y);

/// f(alpha) = alpha^T B_hat alpha / (alpha^T S alpha + tau ||alpha||_lambda^2).
double ratio_objective(const CrossMoment& cm, const PenaltyPair& pen, const Vector& alpha);

struct ComponentResult {
    Vector alpha;       // alpha^T S alpha = 1
    double mu_hat = 0;  // alpha^T B_hat alpha
    double objective = 0;
    bool exhausted = false;
    bool converged = true;
    int iterations = 0;
};

/// Next sparse component: maximises ratio_objective subject to
/// alpha^T S alpha = 1 and alpha_l^T S alpha = 0 for the columns of `prev`.
///
/// With tau * lambda = 0 the problem is a generalized eigenproblem and is
/// solved in closed form. Otherwise alternating maximisation over
/// alpha^T B_hat alpha = max_{|v|=1} ((M v)^T alpha)^2 is used, with each
/// linear subproblem solved by coordinate descent and the orthogonality
/// constraints handled by an augmented Lagrangian.
ComponentResult solve_component(const CrossMoment& cm, const PenaltyPair& pen, const Matrix& prev,
                                const SolverConfig& cfg, RandomStream rs);

/// Called after every extracted component with mu_hat_1..mu_hat_k; returning
/// true stops extraction.
using StopRule = std::function<bool(std::span<const double>)>;

/// Sequentially extracts up to k_max components, stopping early on signal
/// exhaustion or when `stop` says so.
SignalDecomposition fit_components(const CrossMoment& cm, const PenaltyPair& pen, Index k_max,
                                   const SolverConfig& cfg, RandomStream rs,
                                   const StopRule& stop = {});

/// Exact decomposition of a known coefficient matrix from the SVD of X B.
SignalDecomposition population_decomposition(const Matrix& x, const Matrix& b_true);

/// W^T = T^T (Y - 1 ybar^T) / n; requires T^T T / n = I.
Matrix estimate_w(const Matrix& t, const Matrix& y);

/// sum_{j<=k} alpha_j w_j^T.
Matrix coefficient_matrix(const SignalDecomposition& dec, Index k);

/// mu_k / (mu_1 + ... + mu_k) with 1-based k; 0 when the partial sum is 0.
double signal_fraction(std::span<const double> mu, Index k);

} // namespace sier
