#include "sier/model.hpp"

#include "sier/error.hpp"
#include "sier/extractor.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace sier {

Dataset::Dataset(Matrix x_, Matrix y_) : x(std::move(x_)), y(std::move(y_)) {
    if (x.rows() != y.rows()) {
        throw ValidationError("dataset: X has " + std::to_string(x.rows()) + " rows but Y has " +
                              std::to_string(y.rows()));
    }
    require_finite(x, "dataset X");
    require_finite(y, "dataset Y");
}

Dataset Dataset::subset(std::span<const Index> rows) const {
    Matrix xs(static_cast<Index>(rows.size()), x.cols());
    Matrix ys(static_cast<Index>(rows.size()), y.cols());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        xs.row(static_cast<Index>(i)) = x.row(rows[i]);
        ys.row(static_cast<Index>(i)) = y.row(rows[i]);
    }
    Dataset out;
    out.x = std::move(xs);
    out.y = std::move(ys);
    return out;
}

void Standardizer::rebuild_kept() {
    kept.clear();
    std::size_t d = 0;
    for (Index j = 0; j < p(); ++j) {
        if (d < dropped.size() && dropped[d] == j) {
            ++d;
            continue;
        }
        kept.push_back(j);
    }
}

StandardizedData standardize_fit(const Dataset& data, ScaleMode mode) {
    const Index n = data.n();
    if (n < 2) {
        throw ValidationError("standardize: need at least 2 rows, got " + std::to_string(n));
    }
    const double inv_n = 1.0 / static_cast<double>(n);

    Standardizer st;
    st.x_mean = data.x.colwise().mean().transpose();
    st.y_mean = data.y.colwise().mean().transpose();
    st.x_scale = Vector::Zero(data.p());
    for (Index j = 0; j < data.p(); ++j) {
        const double ss = (data.x.col(j).array() - st.x_mean[j]).square().sum() * inv_n;
        const double scale = std::sqrt(ss);
        // Constant columns can leave rounding dust after centring.
        if (!(scale > 1e-12 * std::max(1.0, std::abs(st.x_mean[j])))) {
            st.dropped.push_back(j);
        } else {
            st.x_scale[j] = mode == ScaleMode::unit_diagonal ? scale : 1.0;
        }
    }
    st.rebuild_kept();
    if (st.kept.empty()) {
        throw DataError("standardize: all " + std::to_string(data.p()) +
                        " predictor columns have zero variance");
    }

    StandardizedData out;
    out.data.x = standardize_apply(st, data.x);
    out.data.y = data.y.rowwise() - st.y_mean.transpose();
    out.standardizer = std::move(st);
    return out;
}

Matrix standardize_apply(const Standardizer& st, const Matrix& x_new) {
    if (x_new.cols() != st.p()) {
        throw ValidationError("standardize: expected " + std::to_string(st.p()) +
                              " predictor columns, got " + std::to_string(x_new.cols()));
    }
    Matrix out(x_new.rows(), st.p_kept());
    for (Index c = 0; c < st.p_kept(); ++c) {
        const Index j = st.kept[static_cast<std::size_t>(c)];
        out.col(c) = (x_new.col(j).array() - st.x_mean[j]) / st.x_scale[j];
    }
    return out;
}

Matrix predict(const FittedModel& model, const Matrix& x_new, std::optional<Index> k) {
    const Index kk = k.value_or(model.k_opt);
    if (kk < 0 || kk > model.decomposition.k) {
        throw ValidationError("predict: component count " + std::to_string(kk) +
                              " outside [0, " + std::to_string(model.decomposition.k) + "]");
    }
    const Matrix xs = standardize_apply(model.standardizer, x_new);
    Matrix out = xs * coefficient_matrix(model.decomposition, kk);
    out.rowwise() += model.standardizer.y_mean.transpose();
    return out;
}

std::vector<Index> selected_features(const FittedModel& model, double tol) {
    std::vector<Index> out;
    const auto& a = model.decomposition.a;
    const Index k = std::min(model.k_opt, model.decomposition.k);
    if (k == 0) return out;
    for (Index r = 0; r < a.rows(); ++r) {
        if (a.row(r).head(k).cwiseAbs().maxCoeff() > tol) {
            out.push_back(model.standardizer.kept[static_cast<std::size_t>(r)]);
        }
    }
    return out;
}

} // namespace sier
