#pragma once

#include <Eigen/Dense>

#include <array>
#include <cstdint>
#include <functional>
#include <span>

namespace sier {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

/// Throws ValidationError when `m` holds a NaN or infinity.
void require_finite(const Matrix& m, const char* what);

/// Counter-based normal/uniform source (Philox4x32-10).
///
/// The (seed, stream) pair is the key/counter prefix, so two streams with
/// different ids never share a block, and a stream replays identically on
/// every platform. Instances are single-owner; derive() hands out
/// independent children for replicates, folds and restarts.
class RandomStream {
public:
    RandomStream(std::uint64_t seed, std::uint64_t stream = 0) noexcept;

    std::uint64_t seed() const noexcept { return seed_; }
    std::uint64_t stream() const noexcept { return stream_; }

    /// Child stream with the same seed and an id mixed from (stream, tag).
    RandomStream derive(std::uint64_t tag) const noexcept;

    std::uint64_t next_u64() noexcept;
    /// Uniform on [0, 1) with 53 random bits.
    double uniform() noexcept;
    double uniform(double lo, double hi) noexcept { return lo + (hi - lo) * uniform(); }
    /// Standard normal via Box-Muller.
    double normal() noexcept;
    /// Uniform integer in [0, bound).
    std::uint64_t below(std::uint64_t bound) noexcept;

private:
    void refill() noexcept;

    std::uint64_t seed_;
    std::uint64_t stream_;
    std::uint64_t block_ = 0;
    std::array<std::uint32_t, 4> buffer_{};
    int used_ = 4;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

struct SvdResult {
    Vector singular_values; // non-increasing
    Matrix u;               // m x r, orthonormal columns
    Matrix v;               // n x r, orthonormal columns
};

/// Thin SVD with r = min(rows, cols). In every left vector the entry of
/// largest magnitude (lowest index on ties) is non-negative.
SvdResult thin_svd(const Matrix& a);

/// Lower-triangular L with L L^T = C.
///
/// When plain factorization fails, retries with a ridge of
/// 1e-10 * trace(C)/dim, escalating by 10x up to 1e-6 * trace(C)/dim.
Matrix cholesky_factor(const Matrix& c);

/// `count` rows drawn i.i.d. from N(mean, L L^T).
Matrix sample_mvn(const Vector& mean, const Matrix& chol, RandomStream& rs, Index count);

/// `count` rows drawn from N(0, Sigma) with Sigma_jk = rho^|j-k|, generated
/// by the stationary AR(1) recursion.
Matrix sample_ar1(double rho, Index dim, RandomStream& rs, Index count);

/// `count` rows drawn from N(0, R) with unit diagonal and constant
/// off-diagonal r, using the closed-form symmetric square root of R.
Matrix sample_compound_symmetric(double r, Index dim, RandomStream& rs, Index count);

/// `count` x `dim` matrix of i.i.d. N(0, sd^2) entries (row-major draw order).
Matrix sample_normal(Index count, Index dim, double sd, RandomStream& rs);

inline double soft_threshold(double z, double t) noexcept {
    if (z > t) return z - t;
    if (z < -t) return z + t;
    return 0.0;
}

/// Flips `v` so that its largest-magnitude entry (lowest index on ties) is
/// non-negative. Returns the applied sign (+1 or -1).
double canonical_sign(Eigen::Ref<Vector> v);

/// Runs fn(i) for i in [0, count) on up to `threads` workers. Results must
/// be written to per-index slots so output is independent of scheduling.
void parallel_for(Index count, int threads, const std::function<void(Index)>& fn);

/// Thread count from SIER_THREADS, falling back to 1.
int default_thread_count();

} // namespace sier
