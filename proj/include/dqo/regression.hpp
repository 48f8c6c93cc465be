#ifndef DQO_REGRESSION_HPP
#define DQO_REGRESSION_HPP

// Ordinary least squares with the measurement-error prediction interval.
//
// Encoding convention: every feature vector is augmented with a leading
// entry before it meets the coefficients or the Gram inverse. Observed or
// imputed feature vectors get a leading 1 (intercept); measurement-error
// vectors get a leading 0.

#include "dqo/dataset.hpp"
#include "dqo/tdist.hpp"

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include <cassert>
#include <cmath>
#include <stdexcept>
#include <vector>

namespace dqo {

/// Thrown when the Gram matrix cannot be inverted even after ridge jitter.
class SingularFitError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

inline constexpr double kDefaultAlpha = 0.1;
inline constexpr double kConditionLimit = 1e12;
inline constexpr double kRidgeJitter = 1e-8;

struct TrainedModel {
    Vector beta_hat;     ///< intercept first, then one coefficient per model feature
    Matrix gram_inverse; ///< (X̄ᵀX̄)⁻¹, (d+1)×(d+1)
    double sigma2_hat = 0.0;
    std::size_t dof = 0; ///< n - d - 1
    std::vector<std::size_t> feature_ids;
    double alpha_default = kDefaultAlpha;
    bool regularized = false;

    std::size_t dims() const { return static_cast<std::size_t>(beta_hat.size()) - 1; }

    /// Two-sided critical value t_{dof; 1 - alpha/2}.
    double critical_value(double alpha) const
    {
        if (!(alpha > 0.0 && alpha < 1.0))
            throw std::invalid_argument("alpha must lie in (0, 1)");
        if (alpha == alpha_default && cached_alpha_ == alpha)
            return cached_t_;
        return stats::t_quantile(static_cast<double>(dof), 1.0 - alpha / 2.0);
    }

    /// Precomputes the critical value for alpha_default.
    void cache_critical_value()
    {
        cached_alpha_ = -1.0;
        cached_t_ = critical_value(alpha_default);
        cached_alpha_ = alpha_default;
    }

private:
    double cached_alpha_ = -1.0;
    double cached_t_ = 0.0;
};

struct PredictionInterval {
    double point = 0.0;
    double lower = 0.0;
    double upper = 0.0;
    double width = 0.0;
    double alpha = kDefaultAlpha;
};

inline Vector with_intercept(const Vector& z)
{
    Vector out(z.size() + 1);
    out(0) = 1.0;
    out.tail(z.size()) = z;
    return out;
}

inline Vector with_zero_lead(const Vector& delta)
{
    Vector out(delta.size() + 1);
    out(0) = 0.0;
    out.tail(delta.size()) = delta;
    return out;
}

inline Matrix design_matrix(const Matrix& X)
{
    Matrix out(X.rows(), X.cols() + 1);
    out.col(0).setOnes();
    out.rightCols(X.cols()) = X;
    return out;
}

namespace detail {

/// Condition number of the unit-diagonal rescaling of a symmetric PSD
/// matrix. Column scale does not affect it, only genuine collinearity.
inline double equilibrated_condition(const Matrix& gram)
{
    Vector scale = gram.diagonal();
    for (Eigen::Index i = 0; i < scale.size(); ++i) {
        if (!(scale(i) > 0.0))
            return std::numeric_limits<double>::infinity();
        scale(i) = 1.0 / std::sqrt(scale(i));
    }
    const Matrix scaled = scale.asDiagonal() * gram * scale.asDiagonal();
    Eigen::SelfAdjointEigenSolver<Matrix> eig(scaled, Eigen::EigenvaluesOnly);
    if (eig.info() != Eigen::Success)
        return std::numeric_limits<double>::infinity();
    const double lo = eig.eigenvalues().minCoeff();
    const double hi = eig.eigenvalues().maxCoeff();
    if (!(lo > 0.0))
        return std::numeric_limits<double>::infinity();
    return hi / lo;
}

} // namespace detail

/// Least-squares fit with intercept. A Gram matrix whose condition estimate
/// exceeds 1e12 receives ridge jitter 1e-8 * trace / (d + 1) on its
/// diagonal and the model is flagged `regularized`.
inline TrainedModel fit_ols(const Matrix& X, const Vector& y, double alpha = kDefaultAlpha)
{
    const auto n = static_cast<std::size_t>(X.rows());
    const auto d = static_cast<std::size_t>(X.cols());
    if (static_cast<std::size_t>(y.size()) != n)
        throw std::invalid_argument("fit_ols: X and y row counts differ");
    if (n <= d + 1)
        throw std::invalid_argument("fit_ols: need n > d + 1 rows");
    if (!X.allFinite() || !y.allFinite())
        throw std::invalid_argument("fit_ols: non-finite input");

    const Matrix Xbar = design_matrix(X);
    Matrix gram = Xbar.transpose() * Xbar;

    TrainedModel model;
    model.alpha_default = alpha;
    if (detail::equilibrated_condition(gram) > kConditionLimit) {
        const double jitter = kRidgeJitter * gram.trace() / static_cast<double>(d + 1);
        gram.diagonal().array() += jitter;
        model.regularized = true;
    }

    Eigen::LLT<Matrix> llt(gram);
    if (llt.info() != Eigen::Success)
        throw SingularFitError("fit_ols: Gram matrix is singular");
    Matrix G = llt.solve(Matrix::Identity(gram.rows(), gram.cols()));
    if (!G.allFinite())
        throw SingularFitError("fit_ols: Gram inverse is not finite");
    G = 0.5 * (G + G.transpose());

    model.gram_inverse = G;
    model.beta_hat = G * (Xbar.transpose() * y);
    const Vector resid = y - Xbar * model.beta_hat;
    model.dof = n - d - 1;
    model.sigma2_hat = resid.squaredNorm() / static_cast<double>(model.dof);
    model.feature_ids.resize(d);
    for (std::size_t f = 0; f < d; ++f)
        model.feature_ids[f] = f;
    model.cache_critical_value();
    return model;
}

inline double predict_point(const TrainedModel& model, const Vector& z)
{
    if (static_cast<std::size_t>(z.size()) != model.dims())
        throw std::invalid_argument("predict_point: dimension mismatch");
    return model.beta_hat(0) + model.beta_hat.tail(z.size()).dot(z);
}

/// Prediction interval for a partially imputed point: half-width
/// t * sqrt(σ̂²(1 + z̄ᵀGz̄ + δ̄ᵀGδ̄)), where δ carries the per-feature
/// estimation error of imputed entries (0 for observed ones).
inline PredictionInterval predict_interval(const TrainedModel& model, const Vector& z, const Vector& delta,
                                           double alpha)
{
    const auto d = model.dims();
    if (static_cast<std::size_t>(z.size()) != d || static_cast<std::size_t>(delta.size()) != d)
        throw std::invalid_argument("predict_interval: dimension mismatch");
    const Vector zbar = with_intercept(z);
    const Vector dbar = with_zero_lead(delta);
    const double quad = zbar.dot(model.gram_inverse * zbar) + dbar.dot(model.gram_inverse * dbar);
    double radicand = model.sigma2_hat * (1.0 + quad);
    assert(radicand >= -1e-12 * std::max(1.0, model.sigma2_hat));
    radicand = std::max(radicand, 0.0);

    PredictionInterval pi;
    pi.alpha = alpha;
    pi.point = predict_point(model, z);
    const double half = model.critical_value(alpha) * std::sqrt(radicand);
    pi.lower = pi.point - half;
    pi.upper = pi.point + half;
    pi.width = 2.0 * half;
    return pi;
}

inline PredictionInterval predict_interval(const TrainedModel& model, const Vector& z, const Vector& delta)
{
    return predict_interval(model, z, delta, model.alpha_default);
}

/// Mean squared leave-one-out prediction error, via the hat-matrix identity
/// e_i / (1 - h_ii). Rows with leverage within 1e-12 of one are refit
/// without that row instead.
inline double loocv_error(const TrainedModel& model, const Matrix& X, const Vector& y)
{
    const Matrix Xbar = design_matrix(X);
    const Vector fitted = Xbar * model.beta_hat;
    const Matrix XG = Xbar * model.gram_inverse;
    const auto n = X.rows();

    double total = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
        const double h = XG.row(i).dot(Xbar.row(i));
        double loo_resid = 0.0;
        if (h >= 1.0 - 1e-12) {
            Matrix Xi(n - 1, X.cols());
            Vector yi(n - 1);
            for (Eigen::Index r = 0, w = 0; r < n; ++r) {
                if (r == i)
                    continue;
                Xi.row(w) = X.row(r);
                yi(w) = y(r);
                ++w;
            }
            const TrainedModel sub = fit_ols(Xi, yi);
            loo_resid = y(i) - predict_point(sub, X.row(i).transpose());
        } else {
            loo_resid = (y(i) - fitted(i)) / (1.0 - h);
        }
        total += loo_resid * loo_resid;
    }
    return total / static_cast<double>(n);
}

inline double loocv_error(const Matrix& X, const Vector& y) { return loocv_error(fit_ols(X, y), X, y); }

// ---------------------------------------------------------------------------
// Serialization
//
//   {"beta_hat": [...], "gram_inverse": [[...], ...], "sigma2_hat": s,
//    "dof": n, "feature_ids": [...], "alpha": a, "regularized": bool}
//
// nlohmann/json writes doubles in shortest round-trip form, so a reload
// reproduces predictions exactly.
// ---------------------------------------------------------------------------

inline nlohmann::json model_to_json(const TrainedModel& m)
{
    nlohmann::json j;
    j["beta_hat"] = std::vector<double>(m.beta_hat.data(), m.beta_hat.data() + m.beta_hat.size());
    nlohmann::json rows = nlohmann::json::array();
    for (Eigen::Index r = 0; r < m.gram_inverse.rows(); ++r) {
        std::vector<double> row(static_cast<std::size_t>(m.gram_inverse.cols()));
        for (Eigen::Index c = 0; c < m.gram_inverse.cols(); ++c)
            row[static_cast<std::size_t>(c)] = m.gram_inverse(r, c);
        rows.push_back(row);
    }
    j["gram_inverse"] = std::move(rows);
    j["sigma2_hat"] = m.sigma2_hat;
    j["dof"] = m.dof;
    j["feature_ids"] = m.feature_ids;
    j["alpha"] = m.alpha_default;
    j["regularized"] = m.regularized;
    return j;
}

inline TrainedModel model_from_json(const nlohmann::json& j)
{
    TrainedModel m;
    const auto beta = j.at("beta_hat").get<std::vector<double>>();
    const auto dim = static_cast<Eigen::Index>(beta.size());
    if (dim < 1)
        throw std::invalid_argument("model: empty beta_hat");
    m.beta_hat = Eigen::Map<const Vector>(beta.data(), dim);
    const auto& rows = j.at("gram_inverse");
    if (static_cast<Eigen::Index>(rows.size()) != dim)
        throw std::invalid_argument("model: gram_inverse has wrong shape");
    m.gram_inverse.resize(dim, dim);
    for (Eigen::Index r = 0; r < dim; ++r) {
        const auto row = rows.at(static_cast<std::size_t>(r)).get<std::vector<double>>();
        if (static_cast<Eigen::Index>(row.size()) != dim)
            throw std::invalid_argument("model: gram_inverse has wrong shape");
        for (Eigen::Index c = 0; c < dim; ++c)
            m.gram_inverse(r, c) = row[static_cast<std::size_t>(c)];
    }
    m.sigma2_hat = j.at("sigma2_hat").get<double>();
    m.dof = j.at("dof").get<std::size_t>();
    m.feature_ids = j.at("feature_ids").get<std::vector<std::size_t>>();
    m.alpha_default = j.value("alpha", kDefaultAlpha);
    m.regularized = j.value("regularized", false);
    if (m.dof < 1 || m.sigma2_hat < 0 || m.feature_ids.size() + 1 != beta.size())
        throw std::invalid_argument("model: inconsistent fields");
    m.cache_critical_value();
    return m;
}

} // namespace dqo

#endif // DQO_REGRESSION_HPP
