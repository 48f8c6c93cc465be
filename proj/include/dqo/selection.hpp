#ifndef DQO_SELECTION_HPP
#define DQO_SELECTION_HPP

#include "dqo/dataset.hpp"
#include "dqo/regression.hpp"

#include <limits>
#include <optional>
#include <stdexcept>
#include <vector>

namespace dqo {

/// Order in which forward selection added the costly features.
struct SelectionTrace {
    std::vector<std::size_t> ordered_features;
    std::vector<double> cv_errors; ///< LOOCV error after each addition
    double initial_error = 0.0;    ///< LOOCV error of the free-features-only model
};

inline constexpr std::size_t kDefaultMaxFeatures = 30;

namespace detail {

inline Matrix gather_columns(const Matrix& X, const std::vector<std::size_t>& cols)
{
    Matrix out(X.rows(), static_cast<Eigen::Index>(cols.size()));
    for (std::size_t j = 0; j < cols.size(); ++j)
        out.col(static_cast<Eigen::Index>(j)) = X.col(static_cast<Eigen::Index>(cols[j]));
    return out;
}

/// LOOCV error of the model on `cols`, or nothing when the columns are
/// collinear (fit needs jitter) or cannot be fit at all.
inline std::optional<double> candidate_error(const Matrix& X, const Vector& y, const std::vector<std::size_t>& cols)
{
    if (static_cast<std::size_t>(X.rows()) <= cols.size() + 1)
        return std::nullopt;
    const Matrix sub = gather_columns(X, cols);
    try {
        const TrainedModel m = fit_ols(sub, y);
        if (m.regularized)
            return std::nullopt;
        return loocv_error(m, sub, y);
    } catch (const SingularFitError&) {
        return std::nullopt;
    }
}

} // namespace detail

/// Greedy forward selection starting from the free feature set. Each round
/// adds the non-free feature whose inclusion gives the lowest LOOCV error
/// (ties to the lowest feature id). Stops after `max_features` additions,
/// when no candidate can be fit, or when the best improvement falls below
/// `min_improvement`. Candidates that are collinear with the current model
/// are skipped for that round.
inline SelectionTrace forward_select(const DatasetTable& train, std::size_t max_features = kDefaultMaxFeatures,
                                     double min_improvement = 0.0)
{
    std::vector<std::size_t> current = train.free_set();
    const auto base = detail::candidate_error(train.X, train.y, current);
    if (!base)
        throw std::invalid_argument("forward_select: the free-feature model cannot be fit");

    SelectionTrace trace;
    trace.initial_error = *base;
    double current_error = *base;

    std::vector<bool> used(train.dims(), false);
    for (auto f : current)
        used[f] = true;

    while (trace.ordered_features.size() < max_features) {
        std::optional<std::size_t> best;
        double best_error = std::numeric_limits<double>::infinity();
        for (std::size_t c = 0; c < train.dims(); ++c) {
            if (used[c])
                continue;
            auto cols = current;
            cols.push_back(c);
            const auto err = detail::candidate_error(train.X, train.y, cols);
            if (err && *err < best_error) {
                best_error = *err;
                best = c;
            }
        }
        if (!best || current_error - best_error < min_improvement)
            break;
        used[*best] = true;
        current.push_back(*best);
        trace.ordered_features.push_back(*best);
        trace.cv_errors.push_back(best_error);
        current_error = best_error;
    }
    return trace;
}

} // namespace dqo

#endif // DQO_SELECTION_HPP
