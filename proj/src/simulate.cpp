#include "sier/simulate.hpp"

#include "sier/error.hpp"

#include <cmath>
#include <string>

namespace sier {

std::string to_string(SimCase c) {
    switch (c) {
    case SimCase::one: return "1";
    case SimCase::two: return "2";
    case SimCase::three: return "3";
    case SimCase::figure1: return "figure1";
    }
    return "?";
}

SimCase parse_sim_case(const std::string& s) {
    if (s == "1") return SimCase::one;
    if (s == "2") return SimCase::two;
    if (s == "3") return SimCase::three;
    if (s == "figure1") return SimCase::figure1;
    throw ValidationError("unknown simulation case '" + s + "' (expected 1, 2, 3 or figure1)");
}

SimulationSpec SimulationSpec::case1(double rho, double r, double sigma2_total) {
    SimulationSpec s;
    s.kind = SimCase::one;
    s.p = 500;
    s.q = 3;
    s.k = 3;
    s.p0 = 105;
    s.rho = rho;
    s.r = r;
    s.sigma2_total = sigma2_total;
    return s;
}

SimulationSpec SimulationSpec::case2(Index p, Index q, double rho, double r, double sigma2_total) {
    SimulationSpec s;
    s.kind = SimCase::two;
    s.p = p;
    s.q = q;
    s.k = 3;
    s.p0 = 40;
    s.rho = rho;
    s.r = r;
    s.sigma2_total = sigma2_total;
    return s;
}

SimulationSpec SimulationSpec::case3(Index p, Index q, double gamma, double rho) {
    SimulationSpec s;
    s.kind = SimCase::three;
    s.p = p;
    s.q = q;
    s.k = 3;
    s.p0 = 100;
    s.rho = rho;
    s.r = 0.5;
    s.sigma2_total = 0.15;
    s.gamma = gamma;
    return s;
}

SimulationSpec SimulationSpec::figure1() {
    SimulationSpec s;
    s.kind = SimCase::figure1;
    s.p = 1000;
    s.q = 100;
    s.k = 25;
    s.p0 = 40;
    s.rho = 0.7;
    s.n_train = 100;
    s.n_test = 0;
    s.reps = 100;
    return s;
}

void SimulationSpec::validate() const {
    auto fail = [](const std::string& msg) { throw ValidationError("simulation: " + msg); };
    if (reps < 1) fail("reps must be >= 1");
    if (kind == SimCase::figure1) {
        if (n_train < 1 || p < p0 || k < 1 || q < 1 || p0 < 1) fail("invalid figure1 dimensions");
        if (!(rho > -1.0 / static_cast<double>(p - 1) && rho < 1.0)) fail("rho out of range");
        return;
    }
    if (n_train < 10) fail("n_train must be >= 10 for five-fold cross-validation");
    if (n_test < 1) fail("n_test must be >= 1");
    if (!(sigma2_total > 0.0)) fail("noise level q*sigma^2 must be > 0");
    if (!(r < 1.0 && 1.0 + static_cast<double>(q - 1) * r >= 0.0)) {
        fail("noise correlation r = " + std::to_string(r) + " invalid for q = " + std::to_string(q));
    }
    switch (kind) {
    case SimCase::one:
        if (p != 500 || q != 3) fail("case 1 fixes p = 500 and q = 3");
        if (!(std::abs(rho) < 1.0)) fail("case 1 requires |rho| < 1");
        break;
    case SimCase::two:
        if (p < 50 || q < 1) fail("case 2 needs p >= 50 and q >= 1");
        if (!(rho > -1.0 / 49.0 && rho < 1.0)) fail("case 2 rho out of range");
        break;
    case SimCase::three:
        if (p < 200 || q < 1) fail("case 3 needs p >= 200 and q >= 1");
        if (!(std::abs(rho) < 1.0)) fail("case 3 requires |rho| < 1");
        if (!(gamma > 0.0 && gamma <= 2.0)) fail("case 3 needs gamma in (0, 2]");
        break;
    case SimCase::figure1: break;
    }
}

// ---------------------------------------------------------------------------
// Generators

namespace {

constexpr std::uint64_t kDesignStream = 1;
constexpr std::uint64_t kNoiseStream = 2;
constexpr std::uint64_t kLeftFactorStream = 3;
constexpr std::uint64_t kRightFactorStream = 4;

std::vector<Index> nonzero_rows(const Matrix& b) {
    std::vector<Index> out;
    for (Index j = 0; j < b.rows(); ++j)
        if ((b.row(j).array() != 0.0).any()) out.push_back(j);
    return out;
}

// Design with a correlated leading block and N(0, 0.1^2) filler columns.
Matrix design(Index rows, Index p, Index block, bool ar1, double rho, RandomStream& rs) {
    Matrix x(rows, p);
    RandomStream lead = rs.derive(0);
    RandomStream tail = rs.derive(1);
    x.leftCols(block) = ar1 ? sample_ar1(rho, block, lead, rows)
                            : sample_compound_symmetric(rho, block, lead, rows);
    x.rightCols(p - block) = sample_normal(rows, p - block, 0.1, tail);
    return x;
}

Matrix noise(Index rows, Index q, double r, double sigma2_total, RandomStream& rs) {
    const double sigma = std::sqrt(sigma2_total / static_cast<double>(q));
    return sigma * sample_compound_symmetric(r, q, rs, rows);
}

// C: p x k with the first p0 rows N(0, 1), the rest zero, columns unit norm.
Matrix sparse_left_factor(Index p, Index k, Index p0, RandomStream& rs) {
    Matrix c = Matrix::Zero(p, k);
    c.topRows(p0) = sample_normal(p0, k, 1.0, rs);
    for (Index j = 0; j < k; ++j) c.col(j) /= c.col(j).norm();
    return c;
}

SimulatedData assemble(Matrix x, Matrix b, double r, double sigma2_total, Index n_train,
                       RandomStream& rs) {
    RandomStream eps_rs = rs.derive(kNoiseStream);
    const Index total = x.rows();
    Matrix y = x * b + noise(total, b.cols(), r, sigma2_total, eps_rs);
    SimulatedData out;
    out.train = Dataset(x.topRows(n_train), y.topRows(n_train));
    out.test = Dataset(x.bottomRows(total - n_train), y.bottomRows(total - n_train));
    const Matrix centred = out.train.x.rowwise() - out.train.x.colwise().mean();
    out.truth.components = population_decomposition(centred, b);
    out.truth.support = nonzero_rows(b);
    out.truth.b = std::move(b);
    return out;
}

} // namespace

SimulatedData gen_case1(double rho, double r, double sigma2_total, RandomStream& rs,
                        Index n_train, Index n_test) {
    SimulationSpec spec = SimulationSpec::case1(rho, r, sigma2_total);
    spec.n_train = n_train;
    spec.n_test = n_test;
    spec.validate();

    constexpr Index p = 500;
    Matrix b = Matrix::Zero(p, 3);
    b.block(0, 0, 15, 1).setConstant(1.0 / std::sqrt(15.0));
    b.block(15, 1, 30, 1).setConstant(0.5 / std::sqrt(30.0));
    b.block(45, 2, 60, 1).setConstant(0.25 / std::sqrt(60.0));

    RandomStream x_rs = rs.derive(kDesignStream);
    Matrix x = design(n_train + n_test, p, 150, true, rho, x_rs);
    return assemble(std::move(x), std::move(b), r, sigma2_total, n_train, rs);
}

SimulatedData gen_case2(Index p, Index q, double rho, double r, double sigma2_total,
                        RandomStream& rs, Index n_train, Index n_test) {
    SimulationSpec spec = SimulationSpec::case2(p, q, rho, r, sigma2_total);
    spec.n_train = n_train;
    spec.n_test = n_test;
    spec.validate();

    RandomStream c_rs = rs.derive(kLeftFactorStream);
    RandomStream d_rs = rs.derive(kRightFactorStream);
    const Matrix c = sparse_left_factor(p, 3, 40, c_rs);
    Matrix d(3, q);
    for (Index i = 0; i < 3; ++i)
        for (Index j = 0; j < q; ++j) d(i, j) = d_rs.uniform(-1.0, 1.0);
    for (Index i = 0; i < 3; ++i) d.row(i) /= d.row(i).norm();

    RandomStream x_rs = rs.derive(kDesignStream);
    Matrix x = design(n_train + n_test, p, 50, false, rho, x_rs);
    return assemble(std::move(x), c * d, r, sigma2_total, n_train, rs);
}

Matrix case3_d_covariance(Index q, double gamma) {
    Matrix sd(q, q);
    for (Index i = 0; i < q; ++i)
        for (Index j = 0; j < q; ++j)
            sd(i, j) = std::exp(-std::pow(std::abs(static_cast<double>(i - j)) / 100.0, gamma));
    return sd;
}

SimulatedData gen_case3(Index p, Index q, double gamma, double rho, RandomStream& rs,
                        Index n_train, Index n_test) {
    SimulationSpec spec = SimulationSpec::case3(p, q, gamma, rho);
    spec.n_train = n_train;
    spec.n_test = n_test;
    spec.validate();

    RandomStream c_rs = rs.derive(kLeftFactorStream);
    RandomStream d_rs = rs.derive(kRightFactorStream);
    const Matrix c = sparse_left_factor(p, 3, 100, c_rs);
    const Matrix chol = cholesky_factor(case3_d_covariance(q, gamma));
    Matrix d = sample_mvn(Vector::Zero(q), chol, d_rs, 3);
    for (Index i = 0; i < 3; ++i) d.row(i) /= d.row(i).norm();

    RandomStream x_rs = rs.derive(kDesignStream);
    Matrix x = design(n_train + n_test, p, 200, true, rho, x_rs);
    return assemble(std::move(x), c * d, 0.5, 0.15, n_train, rs);
}

SimulatedData generate(const SimulationSpec& spec, RandomStream& rs) {
    switch (spec.kind) {
    case SimCase::one: return gen_case1(spec.rho, spec.r, spec.sigma2_total, rs, spec.n_train, spec.n_test);
    case SimCase::two:
        return gen_case2(spec.p, spec.q, spec.rho, spec.r, spec.sigma2_total, rs, spec.n_train,
                         spec.n_test);
    case SimCase::three:
        return gen_case3(spec.p, spec.q, spec.gamma, spec.rho, rs, spec.n_train, spec.n_test);
    case SimCase::figure1: break;
    }
    throw ValidationError("generate: the figure1 case has no train/test split");
}

Figure1Instance gen_figure1(RandomStream& rs, const Figure1Options& opts) {
    if (opts.p0 > opts.p || opts.rank < 1 || opts.n < 1 || opts.q < 1) {
        throw ValidationError("gen_figure1: invalid dimensions");
    }
    RandomStream x_rs = rs.derive(kDesignStream);
    RandomStream c_rs = rs.derive(kLeftFactorStream);
    RandomStream d_rs = rs.derive(kRightFactorStream);
    Figure1Instance out;
    out.x = sample_compound_symmetric(opts.rho, opts.p, x_rs, opts.n);
    Matrix c = Matrix::Zero(opts.p, opts.rank);
    c.topRows(opts.p0) = sample_normal(opts.p0, opts.rank, 1.0, c_rs);
    Matrix d(opts.rank, opts.q);
    for (Index i = 0; i < opts.rank; ++i)
        for (Index j = 0; j < opts.q; ++j) d(i, j) = d_rs.uniform(-1.0, 1.0);
    out.b = c * d;
    return out;
}

// ---------------------------------------------------------------------------
// Metrics

ApproxCurve approx_error_curve(const Matrix& x, const Matrix& b_true) {
    const Matrix signal = x * b_true;
    const double total = signal.squaredNorm();
    if (!(total > 0.0)) throw ValidationError("approx_error_curve: X B is zero");

    const SignalDecomposition dec = population_decomposition(x, b_true);
    const Index k = dec.k;
    const SvdResult bsvd = thin_svd(b_true);

    const Matrix xa = x * dec.a;
    const Matrix xu = x * (bsvd.u.leftCols(k) * bsvd.singular_values.head(k).asDiagonal());
    ApproxCurve out;
    out.sier.resize(k);
    out.svd.resize(k);
    Matrix approx_sier = Matrix::Zero(signal.rows(), signal.cols());
    Matrix approx_svd = Matrix::Zero(signal.rows(), signal.cols());
    for (Index j = 0; j < k; ++j) {
        approx_sier += xa.col(j) * dec.w.col(j).transpose();
        approx_svd += xu.col(j) * bsvd.v.col(j).transpose();
        out.sier[j] = (signal - approx_sier).squaredNorm() / total;
        out.svd[j] = (signal - approx_svd).squaredNorm() / total;
    }
    return out;
}

ApproxCurve mean_approx_curve(const Figure1Options& opts, Index reps, std::uint64_t seed) {
    if (reps < 1) throw ValidationError("mean_approx_curve: reps must be >= 1");
    ApproxCurve sum;
    const RandomStream base(seed);
    for (Index rep = 0; rep < reps; ++rep) {
        RandomStream rs = base.derive(static_cast<std::uint64_t>(rep));
        const Figure1Instance inst = gen_figure1(rs, opts);
        ApproxCurve c = approx_error_curve(inst.x, inst.b);
        if (rep == 0) {
            sum = std::move(c);
            continue;
        }
        const Index k = std::min(sum.sier.size(), c.sier.size());
        sum.sier = sum.sier.head(k) + c.sier.head(k);
        sum.svd = sum.svd.head(k) + c.svd.head(k);
    }
    sum.sier /= static_cast<double>(reps);
    sum.svd /= static_cast<double>(reps);
    return sum;
}

double mspe(const Matrix& y_test, const Matrix& y_pred) {
    if (y_test.rows() != y_pred.rows() || y_test.cols() != y_pred.cols()) {
        throw ValidationError("mspe: shapes " + std::to_string(y_test.rows()) + "x" +
                              std::to_string(y_test.cols()) + " and " +
                              std::to_string(y_pred.rows()) + "x" + std::to_string(y_pred.cols()) +
                              " differ");
    }
    if (y_test.rows() == 0) throw ValidationError("mspe: empty test set");
    return (y_test - y_pred).squaredNorm() / static_cast<double>(y_test.rows());
}

SelectionMetrics selection_metrics(const std::vector<Index>& selected,
                                   const std::vector<Index>& support, Index p) {
    std::vector<char> in_support(static_cast<std::size_t>(p), 0);
    for (Index j : support) {
        if (j < 0 || j >= p) throw ValidationError("selection_metrics: support index out of range");
        in_support[static_cast<std::size_t>(j)] = 1;
    }
    std::vector<char> chosen(static_cast<std::size_t>(p), 0);
    for (Index j : selected) {
        if (j < 0 || j >= p) throw ValidationError("selection_metrics: selected index out of range");
        chosen[static_cast<std::size_t>(j)] = 1;
    }
    Index tp = 0, tn = 0, pos = 0;
    for (Index j = 0; j < p; ++j) {
        const auto u = static_cast<std::size_t>(j);
        if (in_support[u]) {
            ++pos;
            tp += chosen[u];
        } else {
            tn += !chosen[u];
        }
    }
    SelectionMetrics out;
    if (pos > 0) out.sensitivity = static_cast<double>(tp) / static_cast<double>(pos);
    const Index neg = p - pos;
    out.specificity = neg > 0 ? static_cast<double>(tn) / static_cast<double>(neg) : 1.0;
    return out;
}

// ---------------------------------------------------------------------------
// Studies

Aggregate aggregate(const std::vector<double>& values) {
    Aggregate a;
    if (values.empty()) return a;
    double sum = 0.0;
    for (double v : values) sum += v;
    a.mean = sum / static_cast<double>(values.size());
    if (values.size() > 1) {
        double ss = 0.0;
        for (double v : values) ss += (v - a.mean) * (v - a.mean);
        a.sd = std::sqrt(ss / static_cast<double>(values.size() - 1));
    }
    return a;
}

namespace {

template <class F>
Aggregate collect(const std::vector<ReplicateResult>& rows, F&& field) {
    std::vector<double> values;
    for (const auto& r : rows) {
        if (auto v = field(r)) values.push_back(*v);
    }
    return aggregate(values);
}

} // namespace

Aggregate StudyResult::mspe() const {
    return collect(rows, [](const ReplicateResult& r) { return std::optional<double>(r.mspe); });
}
Aggregate StudyResult::k_opt() const {
    return collect(rows, [](const ReplicateResult& r) {
        return std::optional<double>(static_cast<double>(r.k_opt));
    });
}
Aggregate StudyResult::se() const {
    return collect(rows, [](const ReplicateResult& r) { return r.se; });
}
Aggregate StudyResult::sp() const {
    return collect(rows, [](const ReplicateResult& r) { return std::optional<double>(r.sp); });
}
Aggregate StudyResult::n_selected() const {
    return collect(rows, [](const ReplicateResult& r) {
        return std::optional<double>(static_cast<double>(r.n_selected));
    });
}

ReplicateResult run_replicate(const SimulationSpec& spec, const TuningGrid& grid,
                              const SolverConfig& cfg, Index rep, Index folds) {
    const RandomStream rep_rs = RandomStream(spec.seed).derive(static_cast<std::uint64_t>(rep));
    RandomStream data_rs = rep_rs.derive(1);
    const SimulatedData sim = generate(spec, data_rs);
    const CvResult cv = cross_validate(sim.train, grid, cfg, rep_rs.derive(2), {folds, 1, spec.scale, spec.penalty});
    const Matrix pred = predict(cv.model, sim.test.x);
    const std::vector<Index> selected = selected_features(cv.model);
    const SelectionMetrics sel = selection_metrics(selected, sim.truth.support, spec.p);

    ReplicateResult row;
    row.rep = rep;
    row.mspe = sier::mspe(sim.test.y, pred);
    row.k_opt = cv.model.k_opt;
    row.se = sel.sensitivity;
    row.sp = sel.specificity;
    row.n_selected = static_cast<Index>(selected.size());
    row.tau = cv.model.tau;
    row.lambda = cv.model.lambda;
    return row;
}

StudyResult run_study(const SimulationSpec& spec, const TuningGrid& grid, const SolverConfig& cfg,
                      int threads, Index folds) {
    spec.validate();
    if (spec.kind == SimCase::figure1) {
        throw ValidationError("run_study: use mean_approx_curve for the figure1 case");
    }
    StudyResult out;
    out.spec = spec;
    out.rows.resize(static_cast<std::size_t>(spec.reps));
    parallel_for(spec.reps, threads, [&](Index rep) {
        out.rows[static_cast<std::size_t>(rep)] = run_replicate(spec, grid, cfg, rep, folds);
    });
    return out;
}

} // namespace sier
