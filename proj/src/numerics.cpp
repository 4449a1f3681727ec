#include "sier/numerics.hpp"

#include "sier/error.hpp"

#include <atomic>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <mutex>
#include <numbers>
#include <string>
#include <thread>
#include <vector>

namespace sier {

void require_finite(const Matrix& m, const char* what) {
    if (!m.allFinite()) {
        throw ValidationError(std::string(what) + ": matrix contains NaN or Inf");
    }
}

// ---------------------------------------------------------------------------
// RandomStream

namespace {

constexpr std::uint32_t kPhiloxM0 = 0xD2511F53u;
constexpr std::uint32_t kPhiloxM1 = 0xCD9E8D57u;
constexpr std::uint32_t kPhiloxW0 = 0x9E3779B9u;
constexpr std::uint32_t kPhiloxW1 = 0xBB67AE85u;

std::uint64_t splitmix64(std::uint64_t x) noexcept {
    x += 0x9E3779B97F4A7C15ull;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
    return x ^ (x >> 31);
}

std::array<std::uint32_t, 4> philox4x32_10(std::array<std::uint32_t, 4> ctr,
                                           std::uint32_t k0, std::uint32_t k1) noexcept {
    for (int round = 0; round < 10; ++round) {
        const std::uint64_t p0 = std::uint64_t{kPhiloxM0} * ctr[0];
        const std::uint64_t p1 = std::uint64_t{kPhiloxM1} * ctr[2];
        const auto hi0 = static_cast<std::uint32_t>(p0 >> 32);
        const auto lo0 = static_cast<std::uint32_t>(p0);
        const auto hi1 = static_cast<std::uint32_t>(p1 >> 32);
        const auto lo1 = static_cast<std::uint32_t>(p1);
        ctr = {hi1 ^ ctr[1] ^ k0, lo1, hi0 ^ ctr[3] ^ k1, lo0};
        k0 += kPhiloxW0;
        k1 += kPhiloxW1;
    }
    return ctr;
}

} // namespace

RandomStream::RandomStream(std::uint64_t seed, std::uint64_t stream) noexcept
    : seed_(seed), stream_(stream) {}

RandomStream RandomStream::derive(std::uint64_t tag) const noexcept {
    return RandomStream(seed_, splitmix64(stream_ ^ splitmix64(tag)));
}

void RandomStream::refill() noexcept {
    const std::array<std::uint32_t, 4> ctr = {
        static_cast<std::uint32_t>(block_), static_cast<std::uint32_t>(block_ >> 32),
        static_cast<std::uint32_t>(stream_), static_cast<std::uint32_t>(stream_ >> 32)};
    buffer_ = philox4x32_10(ctr, static_cast<std::uint32_t>(seed_),
                            static_cast<std::uint32_t>(seed_ >> 32));
    ++block_;
    used_ = 0;
}

std::uint64_t RandomStream::next_u64() noexcept {
    if (used_ > 2) refill();
    const std::uint64_t out = (std::uint64_t{buffer_[used_]} << 32) | buffer_[used_ + 1];
    used_ += 2;
    return out;
}

double RandomStream::uniform() noexcept {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double RandomStream::normal() noexcept {
    if (has_spare_) {
        has_spare_ = false;
        return spare_;
    }
    const double u1 = 1.0 - uniform(); // (0, 1]
    const double u2 = uniform();
    const double radius = std::sqrt(-2.0 * std::log(u1));
    const double angle = 2.0 * std::numbers::pi * u2;
    spare_ = radius * std::sin(angle);
    has_spare_ = true;
    return radius * std::cos(angle);
}

std::uint64_t RandomStream::below(std::uint64_t bound) noexcept {
    // Rejection sampling removes modulo bias.
    const std::uint64_t limit = bound == 0 ? 0 : (~std::uint64_t{0} - bound + 1) % bound;
    for (;;) {
        const std::uint64_t x = next_u64();
        if (x >= limit) return bound == 0 ? 0 : x % bound;
    }
}

// ---------------------------------------------------------------------------
// Dense kernels

double canonical_sign(Eigen::Ref<Vector> v) {
    Index best = 0;
    double best_abs = -1.0;
    for (Index i = 0; i < v.size(); ++i) {
        const double a = std::abs(v[i]);
        if (a > best_abs) {
            best_abs = a;
            best = i;
        }
    }
    if (v.size() > 0 && v[best] < 0.0) {
        v = -v;
        return -1.0;
    }
    return 1.0;
}

SvdResult thin_svd(const Matrix& a) {
    require_finite(a, "thin_svd");
    SvdResult out;
    const Index r = std::min(a.rows(), a.cols());
    if (r == 0) {
        out.singular_values.resize(0);
        out.u.resize(a.rows(), 0);
        out.v.resize(a.cols(), 0);
        return out;
    }
    Eigen::BDCSVD<Matrix> svd(a, Eigen::ComputeThinU | Eigen::ComputeThinV);
    if (svd.info() != Eigen::Success || !svd.singularValues().allFinite()) {
        throw NumericalError("thin_svd: no convergence for " + std::to_string(a.rows()) + "x" +
                             std::to_string(a.cols()) + " matrix");
    }
    out.singular_values = svd.singularValues();
    out.u = svd.matrixU();
    out.v = svd.matrixV();
    for (Index k = 0; k < r; ++k) {
        if (canonical_sign(out.u.col(k)) < 0.0) out.v.col(k) = -out.v.col(k);
    }
    return out;
}

namespace {

// Returns the 1-based order of the first non-positive leading minor, or 0.
Index try_cholesky(const Matrix& c, double ridge, Matrix& l) {
    const Index n = c.rows();
    l.setZero(n, n);
    for (Index j = 0; j < n; ++j) {
        double d = c(j, j) + ridge - l.row(j).head(j).squaredNorm();
        if (!(d > 0.0)) return j + 1;
        const double ljj = std::sqrt(d);
        l(j, j) = ljj;
        for (Index i = j + 1; i < n; ++i) {
            l(i, j) = (c(i, j) - l.row(i).head(j).dot(l.row(j).head(j))) / ljj;
        }
    }
    return 0;
}

} // namespace

Matrix cholesky_factor(const Matrix& c) {
    require_finite(c, "cholesky_factor");
    if (c.rows() != c.cols()) {
        throw ValidationError("cholesky_factor: matrix is " + std::to_string(c.rows()) + "x" +
                              std::to_string(c.cols()) + ", expected square");
    }
    const Index n = c.rows();
    if (n == 0) return Matrix(0, 0);
    const double scale = std::max(1.0, c.cwiseAbs().maxCoeff());
    if ((c - c.transpose()).cwiseAbs().maxCoeff() > 1e-12 * scale) {
        throw ValidationError("cholesky_factor: matrix is not symmetric");
    }
    Matrix l;
    Index failed = try_cholesky(c, 0.0, l);
    if (failed == 0) return l;
    const double base = std::max(c.trace() / static_cast<double>(n), 0.0);
    for (double rel = 1e-10; rel <= 1e-6 * (1 + 1e-9); rel *= 10.0) {
        failed = try_cholesky(c, rel * base, l);
        if (failed == 0) return l;
    }
    throw NumericalError("cholesky_factor: matrix is not positive semi-definite; leading minor " +
                         std::to_string(failed) + " of " + std::to_string(n) +
                         " is non-positive after maximal jitter");
}

Matrix sample_mvn(const Vector& mean, const Matrix& chol, RandomStream& rs, Index count) {
    if (chol.rows() != chol.cols() || chol.rows() != mean.size()) {
        throw ValidationError("sample_mvn: mean has " + std::to_string(mean.size()) +
                              " entries but factor is " + std::to_string(chol.rows()) + "x" +
                              std::to_string(chol.cols()));
    }
    const Index dim = mean.size();
    Matrix out(count, dim);
    Vector z(dim);
    const auto lower = chol.triangularView<Eigen::Lower>();
    for (Index i = 0; i < count; ++i) {
        for (Index j = 0; j < dim; ++j) z[j] = rs.normal();
        out.row(i) = (mean + lower * z).transpose();
    }
    return out;
}

Matrix sample_ar1(double rho, Index dim, RandomStream& rs, Index count) {
    if (!(std::abs(rho) < 1.0)) {
        throw ValidationError("sample_ar1: |rho| must be < 1, got " + std::to_string(rho));
    }
    const double innov = std::sqrt(1.0 - rho * rho);
    Matrix out(count, dim);
    for (Index i = 0; i < count; ++i) {
        double prev = 0.0;
        for (Index j = 0; j < dim; ++j) {
            const double z = rs.normal();
            prev = j == 0 ? z : rho * prev + innov * z;
            out(i, j) = prev;
        }
    }
    return out;
}

Matrix sample_compound_symmetric(double r, Index dim, RandomStream& rs, Index count) {
    if (dim > 0 && !(r < 1.0 && 1.0 + static_cast<double>(dim - 1) * r >= 0.0)) {
        throw ValidationError("sample_compound_symmetric: correlation " + std::to_string(r) +
                              " is not valid for dimension " + std::to_string(dim));
    }
    const double s = std::sqrt(1.0 - r);
    const double t = std::sqrt(1.0 + static_cast<double>(dim - 1) * r);
    const double shift = dim > 0 ? (t - s) / static_cast<double>(dim) : 0.0;
    Matrix out(count, dim);
    Vector z(dim);
    for (Index i = 0; i < count; ++i) {
        for (Index j = 0; j < dim; ++j) z[j] = rs.normal();
        const double common = shift * z.sum();
        out.row(i) = (s * z.array() + common).matrix().transpose();
    }
    return out;
}

Matrix sample_normal(Index count, Index dim, double sd, RandomStream& rs) {
    Matrix out(count, dim);
    for (Index i = 0; i < count; ++i)
        for (Index j = 0; j < dim; ++j) out(i, j) = sd * rs.normal();
    return out;
}

// ---------------------------------------------------------------------------

void parallel_for(Index count, int threads, const std::function<void(Index)>& fn) {
    if (count <= 0) return;
    const Index workers = std::min<Index>(std::max(threads, 1), count);
    if (workers == 1) {
        for (Index i = 0; i < count; ++i) fn(i);
        return;
    }
    std::atomic<Index> next{0};
    std::mutex guard;
    Index failed_index = count;
    std::exception_ptr failure;
    auto work = [&] {
        for (Index i = next++; i < count; i = next++) {
            try {
                fn(i);
            } catch (...) {
                std::lock_guard lock(guard);
                // Report the lowest failing index so errors are deterministic.
                if (i < failed_index) {
                    failed_index = i;
                    failure = std::current_exception();
                }
            }
        }
    };
    std::vector<std::jthread> pool;
    pool.reserve(static_cast<std::size_t>(workers));
    for (Index w = 0; w < workers; ++w) pool.emplace_back(work);
    pool.clear();
    if (failure) std::rethrow_exception(failure);
}

int default_thread_count() {
    if (const char* env = std::getenv("SIER_THREADS")) {
        const int n = std::atoi(env);
        if (n > 0) return n;
    }
    return 1;
}

} // namespace sier
