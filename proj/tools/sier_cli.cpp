#include "sier/error.hpp"
#include "sier/io.hpp"
#include "sier/simulate.hpp"
#include "sier/tuning.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <iostream>
#include <optional>
#include <string>

namespace {

using namespace sier;

enum ExitCode { kOk = 0, kUsage = 2, kData = 3, kNumerical = 4 };

struct Common {
    std::string grid_file;
    double threshold = 0.05;
    Index folds = 5;
    int threads = 1;
    std::uint64_t seed = 1;
};

void add_common(CLI::App* cmd, Common& c) {
    cmd->add_option("--grid", c.grid_file, "CSV of tau,lambda pairs replacing the standard grid")
        ->check(CLI::ExistingFile);
    cmd->add_option("--threshold", c.threshold, "signal-fraction cut-off capping the component count")
        ->capture_default_str();
    cmd->add_option("--folds", c.folds, "cross-validation folds")->capture_default_str();
    cmd->add_option("--threads", c.threads, "worker threads (default from SIER_THREADS)")
        ->capture_default_str();
    cmd->add_option("--seed", c.seed, "random seed")->capture_default_str();
}

TuningGrid make_grid(const Common& c) {
    TuningGrid g = c.grid_file.empty() ? TuningGrid::standard() : io::read_grid(c.grid_file, c.threshold);
    g.threshold = c.threshold;
    g.validate();
    if (c.folds < 2) throw ValidationError("--folds must be >= 2");
    if (c.threads < 1) throw ValidationError("--threads must be >= 1");
    return g;
}

PenaltyScale parse_penalty_scale(const std::string& s) {
    if (s == "per-observation") return PenaltyScale::per_observation;
    if (s == "total") return PenaltyScale::total;
    throw ValidationError("--penalty-scale must be 'per-observation' or 'total', got '" + s + "'");
}

std::string fmt(const char* pattern, double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, pattern, v);
    return buf;
}

void print_cv_table(const CvReport& r, std::ostream& os) {
    Index max_k = 0;
    for (const auto& row : r.mean_errors) max_k = std::max<Index>(max_k, static_cast<Index>(row.size()));
    os << "mean validation error by (tau, lambda) and component count\n";
    os << "      tau   lambda  K";
    for (Index j = 1; j <= max_k; ++j) os << fmt("%10.0f", static_cast<double>(j)) << ' ';
    os << '\n';
    for (std::size_t i = 0; i < r.pairs.size(); ++i) {
        os << fmt("%9g", r.pairs[i].tau) << fmt("%9g", r.pairs[i].lambda)
           << fmt("%3.0f", static_cast<double>(r.k_caps[i]));
        for (std::size_t j = 0; j < r.mean_errors[i].size(); ++j) {
            const bool chosen = static_cast<Index>(i) == r.chosen_pair &&
                                static_cast<Index>(j + 1) == r.chosen_k;
            os << fmt("%10.5g", r.mean_errors[i][j]) << (chosen ? '*' : ' ');
        }
        os << '\n';
    }
    const auto& best = r.pairs[static_cast<std::size_t>(r.chosen_pair)];
    os << "chosen: tau = " << best.tau << ", lambda = " << best.lambda << ", k_opt = " << r.chosen_k
       << " (" << r.folds << " folds)\n";
}

// ---------------------------------------------------------------------------

struct FitArgs {
    std::string x_file, y_file, out, report;
    bool center_only = false;
    std::string penalty_scale = "per-observation";
    Common common;
};

int cmd_fit(const FitArgs& a) {
    const TuningGrid grid = make_grid(a.common);
    const io::CsvTable x = io::read_csv(a.x_file);
    const io::CsvTable y = io::read_csv(a.y_file);
    if (x.values.rows() != y.values.rows()) {
        throw DataError("x has " + std::to_string(x.values.rows()) + " rows but y has " +
                        std::to_string(y.values.rows()));
    }
    const Dataset data(x.values, y.values);
    SolverConfig cfg;
    const CvResult res =
        cross_validate(data, grid, cfg, RandomStream(a.common.seed),
                       {a.common.folds, a.common.threads,
                        a.center_only ? ScaleMode::center_only : ScaleMode::unit_diagonal,
                        parse_penalty_scale(a.penalty_scale)});
    io::save_model(a.out, res.model);
    const std::string report = a.report.empty() ? a.out + ".cv.csv" : a.report;
    io::write_atomic(report, io::cv_report_csv(res.report));
    print_cv_table(res.report, std::cout);
    if (!res.model.decomposition.converged) {
        std::cerr << "warning: the solver hit its iteration limit on at least one component\n";
    }
    std::cout << "model written to " << a.out << ", report to " << report << '\n';
    return kOk;
}

struct PredictArgs {
    std::string model, x_file, out;
    std::optional<Index> k;
};

int cmd_predict(const PredictArgs& a) {
    const FittedModel model = io::load_model(a.model);
    const io::CsvTable x = io::read_csv(a.x_file);
    if (x.values.cols() != model.standardizer.p()) {
        throw ValidationError("x has " + std::to_string(x.values.cols()) + " columns but the model expects " +
                              std::to_string(model.standardizer.p()));
    }
    const Matrix pred = predict(model, x.values, a.k);
    std::vector<std::string> header;
    for (Index j = 0; j < pred.cols(); ++j) header.push_back("y" + std::to_string(j + 1));
    io::write_csv(a.out, pred, header);
    return kOk;
}

int cmd_cv_report(const std::string& file) {
    print_cv_table(io::read_cv_report(file), std::cout);
    return kOk;
}

struct SimulateArgs {
    std::string which = "1";
    Index reps = 50;
    std::optional<double> rho, r, noise, gamma;
    std::optional<Index> p, q, n_train, n_test;
    std::string out;
    bool standardize = false;
    std::string penalty_scale = "total";
    Common common;
};

int cmd_simulate(const SimulateArgs& a) {
    const SimCase kind = parse_sim_case(a.which);
    if (kind == SimCase::figure1) {
        Figure1Options opts;
        if (a.p) opts.p = *a.p;
        if (a.q) opts.q = *a.q;
        if (a.n_train) opts.n = *a.n_train;
        if (a.rho) opts.rho = *a.rho;
        const ApproxCurve c = mean_approx_curve(opts, a.reps, a.common.seed);
        io::write_atomic(a.out, io::curve_csv(c));
        std::cout << "figure1: " << c.sier.size() << " components averaged over " << a.reps
                  << " instances, written to " << a.out << '\n';
        return kOk;
    }

    SimulationSpec spec;
    switch (kind) {
    case SimCase::one:
        spec = SimulationSpec::case1(a.rho.value_or(0.3), a.r.value_or(0.2), a.noise.value_or(0.1));
        if ((a.p && *a.p != 500) || (a.q && *a.q != 3)) {
            throw ValidationError("case 1 fixes p = 500 and q = 3");
        }
        break;
    case SimCase::two:
        spec = SimulationSpec::case2(a.p.value_or(100), a.q.value_or(20), a.rho.value_or(0.3),
                                     a.r.value_or(0.0), a.noise.value_or(0.015));
        break;
    case SimCase::three:
        if (!a.rho) {
            std::cerr << "warning: case 3 leaves the predictor correlation open; using rho = 0.7 "
                         "(pass --rho to override)\n";
        }
        if (a.r || a.noise) throw ValidationError("case 3 fixes r = 0.5 and q*sigma^2 = 0.15");
        spec = SimulationSpec::case3(a.p.value_or(300), a.q.value_or(100), a.gamma.value_or(1.0),
                                     a.rho.value_or(0.7));
        break;
    case SimCase::figure1: break;
    }
    if (kind != SimCase::three && a.gamma) throw ValidationError("--gamma applies to case 3 only");
    spec.reps = a.reps;
    spec.scale = a.standardize ? ScaleMode::unit_diagonal : ScaleMode::center_only;
    spec.penalty = parse_penalty_scale(a.penalty_scale);
    spec.seed = a.common.seed;
    if (a.n_train) spec.n_train = *a.n_train;
    if (a.n_test) spec.n_test = *a.n_test;
    spec.validate();
    const TuningGrid grid = make_grid(a.common);
    const StudyResult study = run_study(spec, grid, SolverConfig{}, a.common.threads, a.common.folds);
    io::write_atomic(a.out, io::study_csv(study));

    const Aggregate m = study.mspe(), k = study.k_opt(), se = study.se(), sp = study.sp();
    std::cout << "case " << to_string(kind) << ", " << spec.reps << " replicates: MSPE "
              << fmt("%.3f", m.mean) << " (" << fmt("%.3f", m.sd) << "), K " << fmt("%.2f", k.mean)
              << " (" << fmt("%.2f", k.sd) << "), Se " << fmt("%.3f", se.mean) << " ("
              << fmt("%.3f", se.sd) << "), Sp " << fmt("%.3f", sp.mean) << " (" << fmt("%.3f", sp.sd)
              << ")\n";
    return kOk;
}

int cmd_approx_curve(std::uint64_t seed, Index reps, const std::string& out) {
    const ApproxCurve c = mean_approx_curve(Figure1Options{}, reps, seed);
    io::write_atomic(out, io::curve_csv(c));
    std::cout << "wrote " << c.sier.size() << " rows to " << out << '\n';
    return kOk;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Sparse reduced-rank multivariate regression by signal extraction"};
    app.require_subcommand(1);

    const int env_threads = default_thread_count();

    FitArgs fit;
    fit.common.threads = env_threads;
    auto* fit_cmd = app.add_subcommand("fit", "tune and fit a model on x.csv / y.csv");
    fit_cmd->add_option("x", fit.x_file, "predictor CSV")->required()->check(CLI::ExistingFile);
    fit_cmd->add_option("y", fit.y_file, "response CSV")->required()->check(CLI::ExistingFile);
    fit_cmd->add_option("--out", fit.out, "model file to write")->required();
    fit_cmd->add_option("--report", fit.report, "CV report CSV (default <out>.cv.csv)");
    fit_cmd->add_flag("--center-only", fit.center_only, "centre predictors without rescaling them");
    fit_cmd->add_option("--penalty-scale", fit.penalty_scale,
                        "per-observation: tau next to X^T X / n; total: tau next to X^T X")
        ->capture_default_str();
    add_common(fit_cmd, fit.common);

    PredictArgs pr;
    auto* pr_cmd = app.add_subcommand("predict", "predict responses for x.csv");
    pr_cmd->add_option("model", pr.model, "model file")->required()->check(CLI::ExistingFile);
    pr_cmd->add_option("x", pr.x_file, "predictor CSV")->required()->check(CLI::ExistingFile);
    pr_cmd->add_option("--out", pr.out, "predictions CSV")->required();
    pr_cmd->add_option("--k", pr.k, "number of leading components (default k_opt)");

    std::string report_file;
    auto* rep_cmd = app.add_subcommand("cv-report", "print a CV report written by fit");
    rep_cmd->add_option("report", report_file, "report CSV")->required()->check(CLI::ExistingFile);

    SimulateArgs sim;
    sim.common.threads = env_threads;
    auto* sim_cmd = app.add_subcommand("simulate", "run a simulation study");
    sim_cmd->add_option("--case", sim.which, "1, 2, 3 or figure1")->capture_default_str();
    sim_cmd->add_option("--reps", sim.reps, "replicates")->capture_default_str();
    sim_cmd->add_option("--rho", sim.rho, "predictor correlation");
    sim_cmd->add_option("--r", sim.r, "noise correlation");
    sim_cmd->add_option("--noise", sim.noise, "noise level q*sigma^2");
    sim_cmd->add_option("--gamma", sim.gamma, "case 3 decay exponent");
    sim_cmd->add_option("--p", sim.p, "predictors");
    sim_cmd->add_option("--q", sim.q, "responses");
    sim_cmd->add_option("--n-train", sim.n_train, "training rows");
    sim_cmd->add_option("--n-test", sim.n_test, "test rows");
    sim_cmd->add_option("--out", sim.out, "output CSV")->required();
    sim_cmd->add_flag("--standardize", sim.standardize, "rescale predictors to unit variance before fitting");
    sim_cmd->add_option("--penalty-scale", sim.penalty_scale, "per-observation or total")
        ->capture_default_str();
    add_common(sim_cmd, sim.common);

    std::uint64_t curve_seed = 1;
    Index curve_reps = 1;
    std::string curve_out;
    auto* curve_cmd = app.add_subcommand("approx-curve", "relative low-rank approximation errors");
    curve_cmd->add_option("--seed", curve_seed, "random seed")->capture_default_str();
    curve_cmd->add_option("--reps", curve_reps, "instances to average")->capture_default_str();
    curve_cmd->add_option("--out", curve_out, "output CSV")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kUsage;
    }

    try {
        if (*fit_cmd) return cmd_fit(fit);
        if (*pr_cmd) return cmd_predict(pr);
        if (*rep_cmd) return cmd_cv_report(report_file);
        if (*sim_cmd) return cmd_simulate(sim);
        if (*curve_cmd) return cmd_approx_curve(curve_seed, curve_reps, curve_out);
    } catch (const ValidationError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kUsage;
    } catch (const DataError& e) {
        std::cerr << "data error: " << e.what() << '\n';
        return kData;
    } catch (const NumericalError& e) {
        std::cerr << "numerical error: " << e.what() << '\n';
        return kNumerical;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kNumerical;
    }
    return kUsage;
}
