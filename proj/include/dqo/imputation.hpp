#ifndef DQO_IMPUTATION_HPP
#define DQO_IMPUTATION_HPP

// k-nearest-neighbour estimation of unanswered features, restricted to the
// dimensions currently known, plus per-feature measurement error.

#include "dqo/dataset.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <span>
#include <stdexcept>
#include <vector>

namespace dqo {

inline constexpr std::size_t kDefaultNeighbors = 100;

/// Neighbour count plus the training-set standardisation used in distances.
/// Features with zero spread get scale 0 and drop out of the distance.
struct ImputerConfig {
    std::size_t k = kDefaultNeighbors;
    Vector center;
    Vector scale; ///< 1/sd, or 0 for constant columns
    std::vector<bool> discrete;

    std::size_t dims() const { return discrete.size(); }
};

inline ImputerConfig make_imputer_config(const Matrix& X, const std::vector<FeatureSpec>& specs, std::size_t k)
{
    const auto n = static_cast<std::size_t>(X.rows());
    if (k == 0)
        throw std::invalid_argument("imputer: k must be positive");
    if (k > n)
        throw std::invalid_argument("imputer: k = " + std::to_string(k) + " exceeds the " + std::to_string(n) +
                                    " training rows");
    if (specs.size() != static_cast<std::size_t>(X.cols()))
        throw std::invalid_argument("imputer: spec count does not match columns");
    ImputerConfig cfg;
    cfg.k = k;
    cfg.center = X.colwise().mean().transpose();
    cfg.scale.resize(X.cols());
    for (Eigen::Index f = 0; f < X.cols(); ++f) {
        const double var = (X.col(f).array() - cfg.center(f)).square().sum() / static_cast<double>(n);
        cfg.scale(f) = var > 0.0 ? 1.0 / std::sqrt(var) : 0.0;
    }
    for (const auto& s : specs)
        cfg.discrete.push_back(s.is_discrete());
    return cfg;
}

namespace detail {

/// Mode with ties resolved to the smallest value.
template <typename Values>
double mode_of(const Values& values)
{
    std::map<double, std::size_t> counts;
    for (double v : values)
        ++counts[v];
    double best = 0.0;
    std::size_t best_count = 0;
    for (const auto& [v, c] : counts)
        if (c > best_count) {
            best = v;
            best_count = c;
        }
    return best;
}

inline double summarize(const Matrix& X, Eigen::Index f, std::span<const std::size_t> rows, bool discrete)
{
    if (discrete) {
        std::vector<double> vals;
        vals.reserve(rows.size());
        for (auto r : rows)
            vals.push_back(X(static_cast<Eigen::Index>(r), f));
        return mode_of(vals);
    }
    double sum = 0.0;
    for (auto r : rows)
        sum += X(static_cast<Eigen::Index>(r), f);
    return sum / static_cast<double>(rows.size());
}

/// Squared standardised distances from `query` to every training row over `known`.
inline std::vector<double> sq_distances(const Matrix& X, const ImputerConfig& cfg, const Vector& query,
                                        std::span<const std::size_t> known)
{
    std::vector<double> dist(static_cast<std::size_t>(X.rows()), 0.0);
    for (auto f : known) {
        const auto col = static_cast<Eigen::Index>(f);
        const double s = cfg.scale(col);
        if (s == 0.0)
            continue;
        const double q = query(col);
        const double* data = X.col(col).data();
        for (std::size_t i = 0; i < dist.size(); ++i) {
            const double diff = (data[i] - q) * s;
            dist[i] += diff * diff;
        }
    }
    return dist;
}

/// Indices of the k smallest distances; ties go to the lower row index.
inline std::vector<std::size_t> nearest(const std::vector<double>& dist, std::size_t k,
                                        std::size_t exclude = static_cast<std::size_t>(-1))
{
    std::vector<std::size_t> idx;
    idx.reserve(dist.size());
    for (std::size_t i = 0; i < dist.size(); ++i)
        if (i != exclude)
            idx.push_back(i);
    k = std::min(k, idx.size());
    auto less = [&](std::size_t a, std::size_t b) { return dist[a] < dist[b] || (dist[a] == dist[b] && a < b); };
    std::nth_element(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(k), idx.end(), less);
    idx.resize(k);
    std::sort(idx.begin(), idx.end());
    return idx;
}

inline std::vector<bool> as_mask(std::span<const std::size_t> known, std::size_t d)
{
    std::vector<bool> mask(d, false);
    for (auto f : known) {
        if (f >= d)
            throw std::out_of_range("known feature index out of range");
        mask[f] = true;
    }
    return mask;
}

} // namespace detail

/// Training marginals: mean of continuous features, mode of discrete ones.
inline Vector marginal_estimates(const Matrix& X, const ImputerConfig& cfg)
{
    std::vector<std::size_t> all(static_cast<std::size_t>(X.rows()));
    std::iota(all.begin(), all.end(), 0);
    Vector out(X.cols());
    for (Eigen::Index f = 0; f < X.cols(); ++f)
        out(f) = detail::summarize(X, f, all, cfg.discrete[static_cast<std::size_t>(f)]);
    return out;
}

/// Copies known entries of `x` and fills every other feature with the mean
/// (continuous) or mode (discrete) of that feature over the k training rows
/// nearest to `x` on the known dimensions. With nothing known, the training
/// marginals are used instead.
inline Vector estimate_features(const Matrix& X, const Vector& x, std::span<const std::size_t> known,
                                const ImputerConfig& cfg)
{
    const auto d = static_cast<std::size_t>(X.cols());
    if (static_cast<std::size_t>(x.size()) != d || cfg.dims() != d)
        throw std::invalid_argument("estimate_features: dimension mismatch");
    if (cfg.k > static_cast<std::size_t>(X.rows()))
        throw std::invalid_argument("estimate_features: k exceeds training rows");
    const auto mask = detail::as_mask(known, d);

    Vector z(static_cast<Eigen::Index>(d));
    if (known.empty()) {
        z = marginal_estimates(X, cfg);
        return z;
    }
    const auto neighbours = detail::nearest(detail::sq_distances(X, cfg, x, known), cfg.k);
    for (std::size_t f = 0; f < d; ++f) {
        const auto col = static_cast<Eigen::Index>(f);
        z(col) = mask[f] ? x(col) : detail::summarize(X, col, neighbours, cfg.discrete[f]);
    }
    return z;
}

/// Root-mean-square error of predicting each feature from its k nearest
/// neighbours among the other training rows, with distances over
/// `known_profile`. Features in the profile get 0. An empty profile scores
/// the training marginals instead.
inline Vector estimate_measurement_error(const Matrix& X, const ImputerConfig& cfg,
                                         std::span<const std::size_t> known_profile)
{
    const auto d = static_cast<std::size_t>(X.cols());
    const auto n = static_cast<std::size_t>(X.rows());
    if (cfg.dims() != d)
        throw std::invalid_argument("estimate_measurement_error: dimension mismatch");
    const auto mask = detail::as_mask(known_profile, d);
    Vector sse = Vector::Zero(static_cast<Eigen::Index>(d));

    if (known_profile.empty()) {
        const Vector marg = marginal_estimates(X, cfg);
        for (Eigen::Index f = 0; f < X.cols(); ++f)
            sse(f) = (X.col(f).array() - marg(f)).square().sum();
    } else {
        if (n < 2 || cfg.k > n - 1)
            throw std::invalid_argument("estimate_measurement_error: k must leave room for self-exclusion");
        for (std::size_t i = 0; i < n; ++i) {
            const Vector row = X.row(static_cast<Eigen::Index>(i)).transpose();
            const auto nb = detail::nearest(detail::sq_distances(X, cfg, row, known_profile), cfg.k, i);
            for (std::size_t f = 0; f < d; ++f) {
                if (mask[f])
                    continue;
                const auto col = static_cast<Eigen::Index>(f);
                const double err = detail::summarize(X, col, nb, cfg.discrete[f]) - row(col);
                sse(col) += err * err;
            }
        }
    }
    Vector delta = (sse / static_cast<double>(n)).cwiseSqrt();
    for (std::size_t f = 0; f < d; ++f)
        if (mask[f])
            delta(static_cast<Eigen::Index>(f)) = 0.0;
    return delta;
}

/// Training matrix bundled with its imputation config; shared read-only by sessions.
class KnnImputer {
public:
    KnnImputer() = default;
    KnnImputer(Matrix X, const std::vector<FeatureSpec>& specs, std::size_t k)
        : X_(std::move(X)), cfg_(make_imputer_config(X_, specs, k))
    {
    }
    KnnImputer(Matrix X, ImputerConfig cfg) : X_(std::move(X)), cfg_(std::move(cfg))
    {
        if (cfg_.dims() != static_cast<std::size_t>(X_.cols()) || cfg_.k == 0 ||
            cfg_.k > static_cast<std::size_t>(X_.rows()))
            throw std::invalid_argument("imputer: config does not match training data");
    }

    Vector estimate(const Vector& x, std::span<const std::size_t> known) const
    {
        return estimate_features(X_, x, known, cfg_);
    }

    Vector measurement_error(std::span<const std::size_t> known_profile) const
    {
        return estimate_measurement_error(X_, cfg_, known_profile);
    }

    const Matrix& data() const { return X_; }
    const ImputerConfig& config() const { return cfg_; }
    std::size_t dims() const { return static_cast<std::size_t>(X_.cols()); }

private:
    Matrix X_;
    ImputerConfig cfg_;
};

} // namespace dqo

#endif // DQO_IMPUTATION_HPP
