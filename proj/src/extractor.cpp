#include "sier/extractor.hpp"

#include "sier/error.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace sier {

void PenaltyPair::validate() const {
    if (!(tau >= 0.0) || !std::isfinite(tau)) {
        throw ValidationError("penalty: tau must be finite and >= 0, got " + std::to_string(tau));
    }
    if (!(lambda >= 0.0 && lambda < 1.0)) {
        throw ValidationError("penalty: lambda must lie in [0, 1), got " + std::to_string(lambda));
    }
}

void SolverConfig::validate() const {
    if (max_outer_iters <= 0 || !(tol > 0.0) || restarts < 0 || !(ortho_penalty_start > 0.0) ||
        !(ortho_tol > 0.0) || max_inner_sweeps <= 0) {
        throw ValidationError("solver config: iteration limits and tolerances must be positive");
    }
}

// ---------------------------------------------------------------------------
// CrossMoment

CrossMoment::CrossMoment(const Matrix& x, const Matrix& y) {
    if (x.rows() != y.rows()) {
        throw ValidationError("cross_moment: X has " + std::to_string(x.rows()) +
                              " rows but Y has " + std::to_string(y.rows()));
    }
    if (x.rows() < 1) throw ValidationError("cross_moment: empty design");
    const double n = static_cast<double>(x.rows());
    y_centered_ = y.rowwise() - y.colwise().mean();
    z_ = x / std::sqrt(n);
    m_ = x.transpose() * y_centered_ / n;
    finish();
}

CrossMoment CrossMoment::from_factors(Matrix z, Matrix m) {
    if (z.cols() != m.rows()) {
        throw ValidationError("cross_moment: Z has " + std::to_string(z.cols()) +
                              " columns but M has " + std::to_string(m.rows()) + " rows");
    }
    CrossMoment cm;
    cm.z_ = std::move(z);
    cm.m_ = std::move(m);
    cm.finish();
    return cm;
}

void CrossMoment::finish() {
    require_finite(z_, "cross_moment Z");
    require_finite(m_, "cross_moment M");
    s_diag_ = z_.colwise().squaredNorm().transpose();
    if (p() <= 200) b_hat_ = m_ * m_.transpose();

    const SvdResult svd = thin_svd(z_);
    const double d1 = svd.singular_values.size() > 0 ? svd.singular_values[0] : 0.0;
    const double cutoff = static_cast<double>(std::max(n(), p())) *
                          std::numeric_limits<double>::epsilon() * d1;
    Index r = 0;
    while (r < svd.singular_values.size() && svd.singular_values[r] > cutoff) ++r;
    row_space_ = svd.v.leftCols(r);
    eig_s_ = svd.singular_values.head(r).array().square().matrix();
}

Matrix CrossMoment::ridge_solve(double ridge, const Matrix& x) const {
    const Matrix coords = row_space_.transpose() * x;
    const Vector inv = (eig_s_.array() + ridge).inverse().matrix();
    return row_space_ * (inv.asDiagonal() * coords);
}

CrossMoment cross_moment(const Matrix& x, const Matrix& y) { return CrossMoment(x, y); }

double ratio_objective(const CrossMoment& cm, const PenaltyPair& pen, const Vector& alpha) {
    const double signal = (cm.m().transpose() * alpha).squaredNorm();
    const double l1 = alpha.lpNorm<1>();
    const double denom = (cm.z() * alpha).squaredNorm() + pen.ridge() * alpha.squaredNorm() +
                         pen.l1_squared() * l1 * l1;
    if (denom <= 0.0) return 0.0;
    return signal / denom;
}

// ---------------------------------------------------------------------------
// Component solver

namespace {

// Maximiser of ||M^T alpha||^2 / alpha^T (S + ridge I) alpha over N^T alpha = 0.
// The optimum is alpha = Q M v, where Q is the constrained inverse of the
// quadratic form and v the top eigenvector of M^T Q M.
std::optional<Vector> ridge_direction(const CrossMoment& cm, double ridge, const Matrix& nmat) {
    Matrix qm = cm.ridge_solve(ridge, cm.m());
    if (nmat.cols() > 0) {
        const Matrix qn = cm.ridge_solve(ridge, nmat);
        const Matrix gram = nmat.transpose() * qn;
        qm -= qn * gram.ldlt().solve(nmat.transpose() * qm);
    }
    Matrix h = cm.m().transpose() * qm;
    h = 0.5 * (h + h.transpose());
    Eigen::SelfAdjointEigenSolver<Matrix> es(h);
    if (es.info() != Eigen::Success) {
        throw NumericalError("solve_component: eigen-decomposition of " + std::to_string(h.rows()) +
                             "x" + std::to_string(h.cols()) + " reduced problem failed");
    }
    const Index top = h.rows() - 1;
    if (!(es.eigenvalues()[top] > 0.0)) return std::nullopt;
    Vector alpha = qm * es.eigenvectors().col(top);
    if (!(alpha.squaredNorm() > 0.0)) return std::nullopt;
    return alpha;
}

// Minimises the augmented Lagrangian
//   F(a) = 1/2 [a^T S a + ridge |a|^2 + l1sq |a|_1^2 + rho |N^T a|^2]
//          - (c - N eta)^T a.
// Coordinate sweeps use the split l1sq |a|_1^2 = l1sq (a_j^2 + 2 L_{-j} |a_j|)
// and settle the support; a Newton step on the current sign orthant then
// handles the dense couplings from the squared-l1 and penalty terms.
class PenalizedSubproblem {
public:
    PenalizedSubproblem(const CrossMoment& cm, const PenaltyPair& pen, const Matrix& nmat,
                        const SolverConfig& cfg)
        : cm_(cm), ridge_(pen.ridge()), l1sq_(pen.l1_squared()), nmat_(nmat), nt_(nmat.transpose()),
          nsq_(nmat.rowwise().squaredNorm()), cfg_(cfg), rho_(cfg.ortho_penalty_start) {
        eta_ = Vector::Zero(nt_.rows());
    }

    void reset(const Vector& alpha) {
        alpha_ = alpha;
        resync();
        eta_.setZero();
        rho_ = cfg_.ortho_penalty_start;
        escalations_ = 0;
        last_violation_ = std::numeric_limits<double>::infinity();
    }

    const Vector& alpha() const { return alpha_; }

    double quadratic() const {
        return r_.squaredNorm() + ridge_ * alpha_.squaredNorm() + l1sq_ * l1_ * l1_;
    }

    // Moves alpha along its ray to the minimiser for linear term c.
    void rescale_for(const Vector& c) {
        const double g = quadratic();
        const double lin = c.dot(alpha_);
        if (g > 0.0 && lin > 0.0) {
            const double t = lin / g;
            alpha_ *= t;
            r_ *= t;
            u_ *= t;
            l1_ *= t;
        }
    }

    // |alpha_l^T S alpha| / sqrt(alpha^T S alpha), maximised over l.
    double violation() const {
        if (u_.size() == 0) return 0.0;
        const double norm = r_.norm();
        return norm > 0.0 ? u_.cwiseAbs().maxCoeff() / norm : 0.0;
    }

    void solve(const Vector& c) {
        resync();
        for (int round = 0; round < 60; ++round) {
            lin_ = c;
            if (u_.size() > 0) lin_.noalias() -= nmat_ * eta_;
            descend();
            if (u_.size() == 0) return;
            const double viol = violation();
            if (viol <= cfg_.ortho_tol) return;
            eta_ += rho_ * u_;
            if (viol > 0.25 * last_violation_ && escalations_ < 6) {
                rho_ *= 10.0;
                ++escalations_;
            }
            last_violation_ = viol;
        }
    }

private:
    // Incremental updates drift; recomputed after every Newton step.
    void resync() {
        r_ = cm_.z() * alpha_;
        u_ = nt_ * alpha_;
        l1_ = alpha_.lpNorm<1>();
    }

    double update(Index j) {
        const double old = alpha_[j];
        const auto zj = cm_.z().col(j);
        const double sjj = cm_.s_diag()[j];
        double lin = lin_[j] - (zj.dot(r_) - sjj * old);
        double curv = sjj + ridge_ + l1sq_;
        if (u_.size() > 0) {
            const auto nj = nt_.col(j);
            lin -= rho_ * (nj.dot(u_) - nsq_[j] * old);
            curv += rho_ * nsq_[j];
        }
        const double rest = std::max(l1_ - std::abs(old), 0.0);
        const double fresh = soft_threshold(lin, l1sq_ * rest) / curv;
        const double delta = fresh - old;
        if (delta == 0.0) return 0.0;
        alpha_[j] = fresh;
        r_.noalias() += delta * zj;
        if (u_.size() > 0) u_.noalias() += delta * nt_.col(j);
        l1_ = rest + std::abs(fresh);
        return curv * delta * delta;
    }

    double sweep() {
        double change = 0.0;
        for (Index j = 0; j < alpha_.size(); ++j) change = std::max(change, update(j));
        return change;
    }

    // Exact minimiser of F restricted to the closed orthant of the current
    // signs, reached by a step clipped at the first sign change.
    // Returns false when the step was clipped.
    bool newton() {
        std::vector<Index> act;
        for (Index j = 0; j < alpha_.size(); ++j)
            if (alpha_[j] != 0.0) act.push_back(j);
        const auto na = static_cast<Index>(act.size());
        if (na == 0) return true;
        const Index m = nt_.rows();
        const Index n = cm_.n();

        // Hessian on the orthant: ridge I + W W^T with W = [Z_A^T, sqrt(l1sq) s, sqrt(rho) N_A].
        const Index width = n + 1 + m;
        Matrix w(na, width);
        Vector a(na), sgn(na), g(na);
        for (Index i = 0; i < na; ++i) {
            const Index j = act[static_cast<std::size_t>(i)];
            a[i] = alpha_[j];
            sgn[i] = alpha_[j] > 0.0 ? 1.0 : -1.0;
            w.row(i).head(n) = cm_.z().col(j).transpose();
            w(i, n) = std::sqrt(l1sq_) * sgn[i];
            if (m > 0) w.row(i).tail(m) = std::sqrt(rho_) * nt_.col(j).transpose();
            g[i] = ridge_ * a[i] - lin_[j];
        }
        g.noalias() += w * (w.transpose() * a);

        Vector step;
        if (na <= width) {
            Matrix h = w * w.transpose();
            h.diagonal().array() += ridge_;
            step = -h.llt().solve(g);
        } else {
            Matrix small = w.transpose() * w;
            small.diagonal().array() += ridge_;
            const Vector wg = w.transpose() * g;
            step = -(g - w * small.llt().solve(wg)) / ridge_;
        }
        if (!step.allFinite()) return true;

        // Backtracking along the projected path: each trial may drop several
        // coordinates at once. The step clipped at the first sign change
        // always decreases F and ends the search.
        double t_clip = 1.0;
        Index hit = -1;
        for (Index i = 0; i < na; ++i) {
            if (sgn[i] * step[i] < 0.0) {
                const double ti = -a[i] / step[i];
                if (ti < t_clip) {
                    t_clip = ti;
                    hit = i;
                }
            }
        }
        auto place = [&](double t, Index zero) {
            for (Index i = 0; i < na; ++i) {
                const Index j = act[static_cast<std::size_t>(i)];
                const double v = a[i] + t * step[i];
                alpha_[j] = (i == zero || sgn[i] * v <= 0.0) ? 0.0 : v;
            }
            resync();
        };
        if (hit < 0) {
            place(1.0, -1);
            return true;
        }
        const double f0 = objective();
        for (double t = 1.0; t > t_clip; t *= 0.5) {
            place(t, -1);
            if (objective() < f0) return false;
        }
        place(t_clip, hit);
        return false;
    }

    double objective() const {
        double f = 0.5 * quadratic() - lin_.dot(alpha_);
        if (u_.size() > 0) f += 0.5 * rho_ * u_.squaredNorm();
        return f;
    }

    void descend() {
        const int limit = cfg_.max_inner_sweeps;
        for (int it = 0; it < limit; ++it) {
            const double scale = std::max(std::abs(lin_.dot(alpha_)), 1e-300);
            const double change = sweep();
            if (change <= 1e-14 * scale) return;
            // A second sweep lets the support settle before the Newton steps.
            sweep();
            for (int k = 0; k < 20 && !newton(); ++k) {
            }
        }
    }

    const CrossMoment& cm_;
    double ridge_;
    double l1sq_;
    Matrix nmat_; // p x m, constraint normals S alpha_l
    Matrix nt_;   // transpose of nmat_
    Vector nsq_;  // |N_j|^2 per coordinate
    const SolverConfig& cfg_;

    Vector alpha_;
    Vector r_;   // Z alpha
    Vector u_;   // N^T alpha
    double l1_ = 0.0;
    Vector lin_; // c - N eta
    Vector eta_;
    double rho_;
    int escalations_ = 0;
    double last_violation_ = std::numeric_limits<double>::infinity();
};

struct Run {
    Vector alpha;
    double objective = 0.0;
    bool converged = false;
    int iterations = 0;
};

Run alternate(PenalizedSubproblem& sub, const CrossMoment& cm, const PenaltyPair& pen,
              const Vector& start, const SolverConfig& cfg) {
    Run run;
    sub.reset(start);
    double prev = ratio_objective(cm, pen, start);
    for (int it = 1; it <= cfg.max_outer_iters; ++it) {
        run.iterations = it;
        const Vector s = cm.m().transpose() * sub.alpha();
        const double ns = s.norm();
        if (!(ns > 0.0)) break;
        const Vector c = cm.m() * (s / ns);
        sub.rescale_for(c);
        sub.solve(c);
        const double f = ratio_objective(cm, pen, sub.alpha());
        if (std::abs(f - prev) <= cfg.tol * std::abs(f)) {
            run.converged = true;
            prev = f;
            break;
        }
        prev = f;
    }
    run.alpha = sub.alpha();
    run.objective = prev;
    return run;
}

// Normalises to alpha^T S alpha = 1 and applies the sign convention.
bool normalise(const CrossMoment& cm, Vector& alpha) {
    const double norm = (cm.z() * alpha).norm();
    if (!(norm > 0.0)) return false;
    alpha /= norm;
    canonical_sign(alpha);
    return true;
}

// Removes the S-projection of alpha onto the columns of prev (S-orthonormal).
void s_orthogonalise(const Matrix& prev, const Matrix& nmat, Vector& alpha) {
    for (int pass = 0; pass < 2; ++pass) alpha -= prev * (nmat.transpose() * alpha);
}

} // namespace

ComponentResult solve_component(const CrossMoment& cm, const PenaltyPair& pen, const Matrix& prev,
                                const SolverConfig& cfg, RandomStream rs) {
    pen.validate();
    cfg.validate();
    if (prev.rows() != cm.p() && prev.cols() > 0) {
        throw ValidationError("solve_component: previous components have " +
                              std::to_string(prev.rows()) + " rows, expected " +
                              std::to_string(cm.p()));
    }
    ComponentResult out;
    out.exhausted = true;
    out.alpha = Vector::Zero(cm.p());
    const double m_energy = cm.m().squaredNorm();
    if (!(m_energy > 0.0) || cm.p() == 0) return out;

    const Matrix nmat = prev.cols() > 0 ? Matrix(cm.z().transpose() * (cm.z() * prev))
                                        : Matrix(cm.p(), 0);

    const double l1sq = pen.l1_squared();
    // The squared-l1 term is replaced by its l2 lower bound for the start.
    std::optional<Vector> start = ridge_direction(cm, pen.ridge() + l1sq, nmat);
    if (!start) return out;

    Vector best;
    bool converged = true;
    int iterations = 0;
    if (l1sq == 0.0) {
        best = *start;
    } else {
        PenalizedSubproblem sub(cm, pen, nmat, cfg);
        const double start_norm = start->norm();
        double best_obj = -1.0;
        double best_l1 = std::numeric_limits<double>::infinity();
        for (int k = 0; k <= cfg.restarts; ++k) {
            Vector init = *start;
            if (k > 0) {
                RandomStream child = rs.derive(static_cast<std::uint64_t>(k));
                Vector noise(cm.p());
                for (Index j = 0; j < cm.p(); ++j) noise[j] = child.normal();
                init += (0.1 * start_norm / noise.norm()) * noise;
            }
            Run run = alternate(sub, cm, pen, init, cfg);
            iterations += run.iterations;
            Vector cand = run.alpha;
            if (!normalise(cm, cand)) continue;
            const double obj = ratio_objective(cm, pen, cand);
            const double l1 = cand.lpNorm<1>();
            const bool tie = std::abs(obj - best_obj) <= 1e-10 * std::abs(obj);
            if ((!tie && obj > best_obj) || (tie && l1 < best_l1)) {
                best_obj = obj;
                best_l1 = l1;
                best = std::move(cand);
                converged = run.converged;
            }
        }
        if (best.size() == 0) return out;
    }

    if (!normalise(cm, best)) return out;
    if (nmat.cols() > 0 && (nmat.transpose() * best).cwiseAbs().maxCoeff() > cfg.ortho_tol) {
        s_orthogonalise(prev, nmat, best);
        if (!normalise(cm, best)) return out;
    }
    const double mu = (cm.m().transpose() * best).squaredNorm();
    if (!(mu > 1e-14 * m_energy)) return out;

    out.alpha = std::move(best);
    out.mu_hat = mu;
    out.objective = ratio_objective(cm, pen, out.alpha);
    out.exhausted = false;
    out.converged = converged;
    out.iterations = iterations;
    return out;
}

SignalDecomposition fit_components(const CrossMoment& cm, const PenaltyPair& pen, Index k_max,
                                   const SolverConfig& cfg, RandomStream rs,
                                   const StopRule& stop) {
    pen.validate();
    cfg.validate();
    if (k_max < 0) throw ValidationError("fit_components: negative component count");
    const Index p = cm.p();
    Matrix a(p, 0);
    std::vector<double> mus;
    bool converged = true;
    for (Index k = 0; k < k_max; ++k) {
        ComponentResult res = solve_component(cm, pen, a, cfg, rs.derive(static_cast<std::uint64_t>(k)));
        if (res.exhausted) break;
        Vector alpha = std::move(res.alpha);
        double mu = res.mu_hat;
        if (k > 0) {
            const Matrix nmat = cm.z().transpose() * (cm.z() * a);
            if ((nmat.transpose() * alpha).cwiseAbs().maxCoeff() > 1e-8) {
                s_orthogonalise(a, nmat, alpha);
                if (!normalise(cm, alpha)) break;
                mu = (cm.m().transpose() * alpha).squaredNorm();
            }
        }
        converged = converged && res.converged;
        a.conservativeResize(p, k + 1);
        a.col(k) = alpha;
        mus.push_back(mu);
        if (stop && stop(mus)) break;
    }

    SignalDecomposition dec;
    dec.k = a.cols();
    dec.a = std::move(a);
    dec.mu = Eigen::Map<const Vector>(mus.data(), static_cast<Index>(mus.size()));
    dec.t = std::sqrt(static_cast<double>(cm.n())) * (cm.z() * dec.a);
    dec.converged = converged;
    if (cm.y_centered().rows() == cm.n()) {
        dec.w = estimate_w(dec.t, cm.y_centered());
    } else {
        // Built from factors: W^T = T^T Yc / n = A^T M.
        dec.w = cm.m().transpose() * dec.a;
    }
    return dec;
}

// ---------------------------------------------------------------------------

SignalDecomposition population_decomposition(const Matrix& x, const Matrix& b_true) {
    if (x.cols() != b_true.rows()) {
        throw ValidationError("population_decomposition: X has " + std::to_string(x.cols()) +
                              " columns but B has " + std::to_string(b_true.rows()) + " rows");
    }
    const double n = static_cast<double>(x.rows());
    const Matrix signal = x * b_true;
    const SvdResult svd = thin_svd(signal);

    SignalDecomposition dec;
    Index k = 0;
    if (svd.singular_values.size() > 0) {
        const double cutoff = 1e-10 * svd.singular_values[0];
        while (k < svd.singular_values.size() && svd.singular_values[k] > cutoff) ++k;
    }
    dec.k = k;
    dec.a.resize(b_true.rows(), k);
    dec.w.resize(b_true.cols(), k);
    dec.t.resize(x.rows(), k);
    dec.mu.resize(k);
    for (Index j = 0; j < k; ++j) {
        const double sigma = svd.singular_values[j];
        Vector w = (sigma / std::sqrt(n)) * svd.v.col(j);
        Vector alpha = (n / (sigma * sigma)) * (b_true * w);
        Vector t = std::sqrt(n) * svd.u.col(j);
        if (canonical_sign(alpha) < 0.0) {
            w = -w;
            t = -t;
        }
        dec.a.col(j) = alpha;
        dec.w.col(j) = w;
        dec.t.col(j) = t;
        dec.mu[j] = sigma * sigma / n;
    }
    return dec;
}

Matrix estimate_w(const Matrix& t, const Matrix& y) {
    if (t.rows() != y.rows()) {
        throw ValidationError("estimate_w: T has " + std::to_string(t.rows()) +
                              " rows but Y has " + std::to_string(y.rows()));
    }
    const double n = static_cast<double>(t.rows());
    if (t.cols() > 0) {
        const Matrix gram = t.transpose() * t / n;
        const double drift =
            (gram - Matrix::Identity(t.cols(), t.cols())).cwiseAbs().maxCoeff();
        if (drift > 1e-6) {
            throw NumericalError("estimate_w: scores are not orthonormal (T^T T / n deviates by " +
                                 std::to_string(drift) + ")");
        }
    }
    const Matrix yc = y.rowwise() - y.colwise().mean();
    return (t.transpose() * yc / n).transpose();
}

Matrix coefficient_matrix(const SignalDecomposition& dec, Index k) {
    if (k < 0 || k > dec.k) {
        throw ValidationError("coefficient_matrix: component count " + std::to_string(k) +
                              " outside [0, " + std::to_string(dec.k) + "]");
    }
    return dec.a.leftCols(k) * dec.w.leftCols(k).transpose();
}

double signal_fraction(std::span<const double> mu, Index k) {
    if (k < 1 || k > static_cast<Index>(mu.size())) {
        throw ValidationError("signal_fraction: k = " + std::to_string(k) + " outside [1, " +
                              std::to_string(mu.size()) + "]");
    }
    double total = 0.0;
    for (Index i = 0; i < k; ++i) total += mu[static_cast<std::size_t>(i)];
    if (!(total > 0.0)) return 0.0;
    return mu[static_cast<std::size_t>(k - 1)] / total;
}

} // namespace sier
