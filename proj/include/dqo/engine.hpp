#ifndef DQO_ENGINE_HPP
#define DQO_ENGINE_HPP

// Dynamic question ordering: expected-width scoring, cost-penalised choice
// of the next question, session transitions and the full ordering loop.

#include "dqo/dataset.hpp"
#include "dqo/imputation.hpp"
#include "dqo/regression.hpp"
#include "dqo/selection.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <memory>
#include <numeric>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace dqo {

/// How outcome probabilities are combined when scoring a candidate.
enum class WidthForm {
    /// One square root over the probability-weighted quadratic forms (the
    /// pseudocode form). Default.
    weighted_variance,
    /// Probability-weighted sum of per-outcome widths.
    weighted_width,
};

inline std::string to_string(WidthForm f) { return f == WidthForm::weighted_width ? "weighted_width" : "weighted_variance"; }

inline WidthForm parse_width_form(const std::string& s)
{
    if (s == "weighted_variance") return WidthForm::weighted_variance;
    if (s == "weighted_width") return WidthForm::weighted_width;
    throw std::invalid_argument("unknown width form '" + s + "'");
}

/// Everything a session needs, shared read-only between sessions.
struct DqoModel {
    std::string target_name = "y";
    TrainedModel model;
    std::vector<FeatureSpec> specs; ///< model feature order, ranges/proportions filled
    KnnImputer imputer;
    Vector delta;          ///< kNN error given the free features (0 on free features)
    Vector marginal_error; ///< error of the training marginals; used for free features left unfilled
    std::optional<SelectionTrace> selection; ///< ids in model feature order
    WidthForm width_form = WidthForm::weighted_variance;

    std::size_t dims() const { return specs.size(); }

    std::vector<std::size_t> free_set() const
    {
        std::vector<std::size_t> out;
        for (std::size_t f = 0; f < specs.size(); ++f)
            if (specs[f].tier == CostTier::free)
                out.push_back(f);
        return out;
    }

    std::vector<double> costs() const
    {
        std::vector<double> out;
        for (const auto& s : specs)
            out.push_back(s.cost);
        return out;
    }

    std::optional<std::size_t> find(const std::string& name) const
    {
        for (std::size_t f = 0; f < specs.size(); ++f)
            if (specs[f].name == name)
                return f;
        return std::nullopt;
    }

    void validate() const
    {
        const auto d = dims();
        if (model.dims() != d || imputer.dims() != d || static_cast<std::size_t>(delta.size()) != d ||
            static_cast<std::size_t>(marginal_error.size()) != d)
            throw std::invalid_argument("model bundle: inconsistent dimensions");
        for (const auto& s : specs) {
            s.validate();
            if (s.range.empty())
                throw std::invalid_argument("model bundle: feature '" + s.name + "' has no outcome range");
        }
    }
};

/// Thrown for invalid session transitions (wrong pending question, repeat answers).
class SessionError : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

/// Thrown when an answer is outside a discrete feature's domain.
class AnswerError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Thrown when no candidate question remains.
class SessionComplete : public std::runtime_error {
public:
    SessionComplete() : std::runtime_error("no questions remain") {}
};

enum class StepOutcome { answered, dont_know };

struct SessionState {
    std::vector<bool> known;
    std::vector<bool> unavailable;
    Vector answers; ///< values on known features, NaN elsewhere
    Vector z;       ///< answers plus current imputations
    Vector delta;   ///< estimation error per feature, 0 once answered
    std::vector<std::size_t> ordering;
    std::vector<StepOutcome> outcomes; ///< parallel to ordering
    std::vector<PredictionInterval> predictions;
    std::vector<double> cost_history; ///< cumulative cost after each prediction
    double cumulative_cost = 0.0;
    double lambda = 0.0;
    double alpha = kDefaultAlpha;
    std::optional<std::size_t> pending;
    std::vector<std::size_t> out_of_range; ///< continuous answers outside the training range

    std::size_t dims() const { return known.size(); }

    std::vector<std::size_t> known_indices() const
    {
        std::vector<std::size_t> out;
        for (std::size_t f = 0; f < known.size(); ++f)
            if (known[f])
                out.push_back(f);
        return out;
    }

    std::vector<std::size_t> candidates() const
    {
        std::vector<std::size_t> out;
        for (std::size_t f = 0; f < known.size(); ++f)
            if (!known[f] && !unavailable[f])
                out.push_back(f);
        return out;
    }

    bool complete() const { return candidates().empty(); }

    const PredictionInterval& current() const { return predictions.back(); }
};

/// Expected next-step interval width per candidate feature.
struct ExpectedWidths {
    std::map<std::size_t, double> values;
};

// ---------------------------------------------------------------------------
// Session construction and transitions
// ---------------------------------------------------------------------------

inline void append_prediction(const DqoModel& m, SessionState& s)
{
    s.predictions.push_back(predict_interval(m.model, s.z, s.delta, s.alpha));
    s.cost_history.push_back(s.cumulative_cost);
}

/// Starts a session with `prefilled` answers already known. Unanswered
/// features carry the bundle's kNN error; free features that were not
/// prefilled carry the marginal error instead.
inline SessionState start_session(const DqoModel& m, const std::map<std::size_t, double>& prefilled, double lambda,
                                  double alpha)
{
    if (!(lambda >= 0.0) || !std::isfinite(lambda))
        throw std::invalid_argument("lambda must be a non-negative finite number");
    if (!(alpha > 0.0 && alpha < 1.0))
        throw std::invalid_argument("alpha must lie in (0, 1)");
    const auto d = m.dims();
    SessionState s;
    s.known.assign(d, false);
    s.unavailable.assign(d, false);
    s.answers = Vector::Constant(static_cast<Eigen::Index>(d), std::numeric_limits<double>::quiet_NaN());
    s.lambda = lambda;
    s.alpha = alpha;
    for (const auto& [f, v] : prefilled) {
        if (f >= d)
            throw std::out_of_range("prefilled feature index out of range");
        if (m.specs[f].is_discrete() && !m.specs[f].admits(v))
            throw AnswerError("value " + csv::format_double(v) + " is not a valid answer for '" + m.specs[f].name +
                              "'");
        if (!std::isfinite(v))
            throw AnswerError("prefilled value for '" + m.specs[f].name + "' is not finite");
        s.known[f] = true;
        s.answers(static_cast<Eigen::Index>(f)) = v;
    }
    s.delta = m.delta;
    for (std::size_t f = 0; f < d; ++f) {
        const auto i = static_cast<Eigen::Index>(f);
        if (s.known[f])
            s.delta(i) = 0.0;
        else if (m.specs[f].tier == CostTier::free)
            s.delta(i) = m.marginal_error(i);
    }
    s.z = m.imputer.estimate(s.answers, s.known_indices());
    append_prediction(m, s);
    return s;
}

/// Marks `f` as the question awaiting an answer.
inline void set_pending(SessionState& s, std::size_t f)
{
    if (f >= s.dims() || s.known[f] || s.unavailable[f])
        throw SessionError("feature " + std::to_string(f) + " is not an open question");
    s.pending = f;
}

/// Records the respondent's reply to the pending question `f`; an empty
/// `value` means "don't know". Answers zero the feature's error, charge its
/// cost and re-impute the rest; "don't know" removes the feature from
/// future consideration without charge.
inline void apply_answer(const DqoModel& m, SessionState& s, std::size_t f, std::optional<double> value)
{
    if (f >= s.dims())
        throw SessionError("feature index out of range");
    if (s.known[f] || s.unavailable[f])
        throw SessionError("feature '" + m.specs[f].name + "' was already answered");
    if (s.pending != f)
        throw SessionError("feature '" + m.specs[f].name + "' is not the pending question");
    const auto i = static_cast<Eigen::Index>(f);
    const auto& spec = m.specs[f];

    if (value) {
        const double v = *value;
        if (!std::isfinite(v))
            throw AnswerError("answer for '" + spec.name + "' is not finite");
        if (spec.is_discrete() && !spec.admits(v))
            throw AnswerError("value " + csv::format_double(v) + " is not a valid answer for '" + spec.name + "'");
        if (!spec.is_discrete() && !spec.range.empty() && (v < spec.range.front() || v > spec.range.back()))
            s.out_of_range.push_back(f);
        s.known[f] = true;
        s.answers(i) = v;
        s.delta(i) = 0.0;
        s.cumulative_cost += spec.cost;
        s.z = m.imputer.estimate(s.answers, s.known_indices());
        s.outcomes.push_back(StepOutcome::answered);
    } else {
        s.unavailable[f] = true;
        s.outcomes.push_back(StepOutcome::dont_know);
    }
    s.ordering.push_back(f);
    s.pending.reset();
    append_prediction(m, s);
}

// ---------------------------------------------------------------------------
// Scoring and choice
// ---------------------------------------------------------------------------

/// Expected interval width of the next prediction for each open candidate,
/// enumerating the candidate's outcome range R with probabilities p while
/// holding the other entries of z fixed and zeroing the candidate's error.
inline ExpectedWidths expected_interval_widths(const TrainedModel& model, const SessionState& s,
                                               const std::vector<FeatureSpec>& specs, double alpha,
                                               WidthForm form = WidthForm::weighted_variance)
{
    const auto cands = s.candidates();
    if (cands.empty())
        throw SessionComplete();
    const double t = model.critical_value(alpha);
    const Matrix& G = model.gram_inverse;
    const Vector zbar0 = with_intercept(s.z);
    const Vector dbar0 = with_zero_lead(s.delta);

    ExpectedWidths out;
    for (auto f : cands) {
        const auto& spec = specs.at(f);
        if (spec.range.empty())
            throw std::invalid_argument("feature '" + spec.name + "' has no outcome range");
        const auto pos = static_cast<Eigen::Index>(f) + 1;

        Vector dbar = dbar0;
        dbar(pos) = 0.0;
        const double delta_term = dbar.dot(G * dbar);

        Vector zbar = zbar0;
        double v = 0.0;
        double weighted_width = 0.0;
        for (std::size_t l = 0; l < spec.range.size(); ++l) {
            zbar(pos) = spec.range[l];
            const double u = zbar.dot(G * zbar) + delta_term;
            const double p = spec.proportions[l];
            v += p * u;
            weighted_width += p * std::sqrt(std::max(0.0, model.sigma2_hat * (1.0 + u)));
        }
        out.values[f] = form == WidthForm::weighted_variance
                            ? 2.0 * t * std::sqrt(std::max(0.0, model.sigma2_hat * (1.0 + v)))
                            : 2.0 * t * weighted_width;
    }
    return out;
}

/// argmin over candidates of E_f + lambda * c_f; ties go to the smaller
/// E_f, then the lower feature id.
inline std::size_t choose_next(const ExpectedWidths& widths, const std::vector<double>& costs, double lambda)
{
    if (widths.values.empty())
        throw SessionComplete();
    std::optional<std::size_t> best;
    double best_score = 0.0;
    double best_width = 0.0;
    for (const auto& [f, w] : widths.values) {
        const double score = w + lambda * costs.at(f);
        if (!best || score < best_score || (score == best_score && w < best_width)) {
            best = f;
            best_score = score;
            best_width = w;
        }
    }
    return *best;
}

// ---------------------------------------------------------------------------
// Orderers
// ---------------------------------------------------------------------------

/// The test point being simulated. `truth` is absent in live sessions.
struct RowContext {
    std::size_t row_id = 0;
    const Vector* truth = nullptr;
};

/// Picks the next question for a session. Implementations are stateless so
/// one instance can serve many rows concurrently.
class Orderer {
public:
    virtual ~Orderer() = default;
    virtual std::string name() const = 0;
    virtual std::size_t choose(const DqoModel& m, const SessionState& s, const RowContext& row) const = 0;
};

class DqoOrderer final : public Orderer {
public:
    explicit DqoOrderer(WidthForm form = WidthForm::weighted_variance) : form_(form) {}
    std::string name() const override { return form_ == WidthForm::weighted_width ? "dqo_weighted_width" : "dqo"; }
    std::size_t choose(const DqoModel& m, const SessionState& s, const RowContext&) const override
    {
        return choose_next(expected_interval_widths(m.model, s, m.specs, s.alpha, form_), m.costs(), s.lambda);
    }

private:
    WidthForm form_;
};

/// An independent uniformly random permutation per row, derived from (seed, row id).
class RandomOrderer final : public Orderer {
public:
    explicit RandomOrderer(std::uint64_t seed) : seed_(seed) {}
    std::string name() const override { return "random"; }
    std::size_t choose(const DqoModel&, const SessionState& s, const RowContext& row) const override
    {
        std::vector<std::size_t> perm(s.dims());
        std::iota(perm.begin(), perm.end(), 0);
        std::seed_seq seq{static_cast<std::uint32_t>(seed_), static_cast<std::uint32_t>(seed_ >> 32),
                          static_cast<std::uint32_t>(row.row_id), static_cast<std::uint32_t>(row.row_id >> 32)};
        std::mt19937_64 rng(seq);
        std::shuffle(perm.begin(), perm.end(), rng);
        for (auto f : perm)
            if (!s.known[f] && !s.unavailable[f])
                return f;
        throw SessionComplete();
    }

private:
    std::uint64_t seed_;
};

/// The same ordering for every row; features missing from the list follow by id.
class FixedOrderer final : public Orderer {
public:
    FixedOrderer(std::string name, std::vector<std::size_t> order) : name_(std::move(name)), order_(std::move(order)) {}
    std::string name() const override { return name_; }
    const std::vector<std::size_t>& order() const { return order_; }
    std::size_t choose(const DqoModel&, const SessionState& s, const RowContext&) const override
    {
        for (auto f : order_)
            if (f < s.dims() && !s.known[f] && !s.unavailable[f])
                return f;
        const auto c = s.candidates();
        if (c.empty())
            throw SessionComplete();
        return c.front();
    }

private:
    std::string name_;
    std::vector<std::size_t> order_;
};

/// Fixed order by decreasing measurement error (ties by id).
inline FixedOrderer fixed_decreasing_orderer(const Vector& delta)
{
    std::vector<std::size_t> order(static_cast<std::size_t>(delta.size()));
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return delta(static_cast<Eigen::Index>(a)) > delta(static_cast<Eigen::Index>(b));
    });
    return FixedOrderer("fixed_decreasing", std::move(order));
}

inline FixedOrderer fixed_selection_orderer(const SelectionTrace& trace)
{
    return FixedOrderer("fixed_selection", trace.ordered_features);
}

/// Actual interval width after answering `f` with its true value, the
/// remaining unknowns re-imputed with f known.
inline double actual_width_if_answered(const DqoModel& m, const SessionState& s, std::size_t f, const Vector& truth)
{
    Vector answers = s.answers;
    answers(static_cast<Eigen::Index>(f)) = truth(static_cast<Eigen::Index>(f));
    auto known = s.known_indices();
    known.insert(std::upper_bound(known.begin(), known.end(), f), f);
    const Vector z = m.imputer.estimate(answers, known);
    Vector delta = s.delta;
    delta(static_cast<Eigen::Index>(f)) = 0.0;
    return predict_interval(m.model, z, delta, s.alpha).width;
}

/// Chooses by the true next-step width (penalised by lambda * cost); needs the hidden row.
class OracleOrderer final : public Orderer {
public:
    std::string name() const override { return "oracle"; }
    std::size_t choose(const DqoModel& m, const SessionState& s, const RowContext& row) const override
    {
        if (!row.truth)
            throw std::invalid_argument("oracle orderer needs the true feature values");
        ExpectedWidths actual;
        for (auto f : s.candidates())
            actual.values[f] = actual_width_if_answered(m, s, f, *row.truth);
        return choose_next(actual, m.costs(), s.lambda);
    }
};

/// Builds an orderer by name: dqo, dqo_weighted_width, random, fixed_decreasing,
/// fixed_selection, oracle.
inline std::unique_ptr<Orderer> make_orderer(const std::string& kind, const DqoModel& m, std::uint64_t seed = 0)
{
    if (kind == "dqo")
        return std::make_unique<DqoOrderer>(m.width_form);
    if (kind == "dqo_weighted_width")
        return std::make_unique<DqoOrderer>(WidthForm::weighted_width);
    if (kind == "random")
        return std::make_unique<RandomOrderer>(seed);
    if (kind == "fixed_decreasing")
        return std::make_unique<FixedOrderer>(fixed_decreasing_orderer(m.delta));
    if (kind == "fixed_selection") {
        if (!m.selection)
            throw std::invalid_argument("fixed_selection needs a selection trace in the model bundle");
        return std::make_unique<FixedOrderer>(fixed_selection_orderer(*m.selection));
    }
    if (kind == "oracle")
        return std::make_unique<OracleOrderer>();
    throw std::invalid_argument("unknown orderer '" + kind + "'");
}

// ---------------------------------------------------------------------------
// Full run
// ---------------------------------------------------------------------------

/// Asks every open question of a fully specified point `x`, answering from
/// x, until none remain. The returned state has |ordering| = d - |initial|
/// and one more prediction than questions asked.
inline SessionState run_dqo_all(const DqoModel& m, const Vector& x, const std::vector<std::size_t>& initial_known,
                                const Orderer& orderer, double lambda, double alpha, std::size_t row_id = 0)
{
    if (static_cast<std::size_t>(x.size()) != m.dims())
        throw std::invalid_argument("run_dqo_all: dimension mismatch");
    std::map<std::size_t, double> prefilled;
    for (auto f : initial_known)
        prefilled[f] = x(static_cast<Eigen::Index>(f));
    SessionState s = start_session(m, prefilled, lambda, alpha);
    const RowContext row{row_id, &x};
    while (!s.complete()) {
        const auto f = orderer.choose(m, s, row);
        set_pending(s, f);
        apply_answer(m, s, f, x(static_cast<Eigen::Index>(f)));
    }
    return s;
}

} // namespace dqo

#endif // DQO_ENGINE_HPP
