#ifndef DQO_TESTS_SUPPORT_HPP
#define DQO_TESTS_SUPPORT_HPP

// Fixtures and independent reference computations shared by the tests.
// The references deliberately avoid the library's own numerics: inverses
// by Gauss-Jordan elimination, quadratic forms by explicit loops.

#include "dqo/bundle.hpp"
#include "dqo/synthetic.hpp"

#include <cmath>
#include <algorithm>
#include <climits>
#include <filesystem>
#include <map>
#include <random>
#include <string>
#include <vector>

namespace dqo::testing {

inline std::filesystem::path temp_dir(const std::string& name)
{
    auto p = std::filesystem::temp_directory_path() / ("dqo_test_" + name);
    std::filesystem::remove_all(p);
    std::filesystem::create_directories(p);
    return p;
}

inline FeatureSpec make_spec(std::size_t id, const std::string& name, FeatureKind kind, CostTier tier,
                             std::vector<double> levels = {})
{
    FeatureSpec s;
    s.id = id;
    s.name = name;
    s.kind = kind;
    s.tier = tier;
    s.cost = default_cost(tier);
    s.levels = std::move(levels);
    return s;
}

inline DatasetTable make_table(const Matrix& X, const Vector& y, std::vector<FeatureSpec> specs)
{
    DatasetTable t;
    t.X = X;
    t.y = y;
    t.features = std::move(specs);
    for (std::size_t i = 0; i < static_cast<std::size_t>(X.rows()); ++i)
        t.row_ids.push_back(i);
    return t;
}

/// Dense inverse by Gauss-Jordan elimination with partial pivoting.
inline std::vector<std::vector<double>> gauss_jordan_inverse(std::vector<std::vector<double>> a)
{
    const std::size_t n = a.size();
    std::vector<std::vector<double>> inv(n, std::vector<double>(n, 0.0));
    for (std::size_t i = 0; i < n; ++i)
        inv[i][i] = 1.0;
    for (std::size_t c = 0; c < n; ++c) {
        std::size_t piv = c;
        for (std::size_t r = c + 1; r < n; ++r)
            if (std::abs(a[r][c]) > std::abs(a[piv][c]))
                piv = r;
        std::swap(a[c], a[piv]);
        std::swap(inv[c], inv[piv]);
        const double p = a[c][c];
        for (std::size_t j = 0; j < n; ++j) {
            a[c][j] /= p;
            inv[c][j] /= p;
        }
        for (std::size_t r = 0; r < n; ++r) {
            if (r == c)
                continue;
            const double f = a[r][c];
            for (std::size_t j = 0; j < n; ++j) {
                a[r][j] -= f * a[c][j];
                inv[r][j] -= f * inv[c][j];
            }
        }
    }
    return inv;
}

/// Long-hand OLS: G = (X̄ᵀX̄)⁻¹, beta = G X̄ᵀy, s2 = RSS/(n-d-1).
struct ReferenceFit {
    std::vector<std::vector<double>> G;
    std::vector<double> beta;
    double s2 = 0.0;
    int dof = 0;
};

inline ReferenceFit reference_fit(const Matrix& X, const Vector& y)
{
    const auto n = static_cast<std::size_t>(X.rows());
    const auto p = static_cast<std::size_t>(X.cols()) + 1;
    auto xbar = [&](std::size_t i, std::size_t j) { return j == 0 ? 1.0 : X(i, j - 1); };
    std::vector<std::vector<double>> gram(p, std::vector<double>(p, 0.0));
    std::vector<double> xty(p, 0.0);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t a = 0; a < p; ++a) {
            xty[a] += xbar(i, a) * y(i);
            for (std::size_t b = 0; b < p; ++b)
                gram[a][b] += xbar(i, a) * xbar(i, b);
        }
    ReferenceFit r;
    r.G = gauss_jordan_inverse(gram);
    r.beta.assign(p, 0.0);
    for (std::size_t a = 0; a < p; ++a)
        for (std::size_t b = 0; b < p; ++b)
            r.beta[a] += r.G[a][b] * xty[b];
    double rss = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        double pred = 0.0;
        for (std::size_t a = 0; a < p; ++a)
            pred += r.beta[a] * xbar(i, a);
        rss += (y(i) - pred) * (y(i) - pred);
    }
    r.dof = static_cast<int>(n - p);
    r.s2 = rss / r.dof;
    return r;
}

/// Mean squared held-out error from n literal refits.
inline double naive_loocv(const Matrix& X, const Vector& y)
{
    const auto n = X.rows();
    double sse = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
        Matrix Xi(n - 1, X.cols());
        Vector yi(n - 1);
        for (Eigen::Index r = 0, k = 0; r < n; ++r) {
            if (r == i)
                continue;
            Xi.row(k) = X.row(r);
            yi(k++) = y(r);
        }
        const auto fit = reference_fit(Xi, yi);
        double pred = fit.beta[0];
        for (Eigen::Index j = 0; j < X.cols(); ++j)
            pred += fit.beta[static_cast<std::size_t>(j) + 1] * X(i, j);
        sse += (y(i) - pred) * (y(i) - pred);
    }
    return sse / static_cast<double>(n);
}

/// vᵀ G v with v given without its leading entry, which is `lead`.
inline double quad_form(const std::vector<std::vector<double>>& G, const Vector& v, double lead)
{
    const std::size_t p = G.size();
    auto at = [&](std::size_t i) { return i == 0 ? lead : v(static_cast<Eigen::Index>(i - 1)); };
    double s = 0.0;
    for (std::size_t a = 0; a < p; ++a)
        for (std::size_t b = 0; b < p; ++b)
            s += at(a) * G[a][b] * at(b);
    return s;
}

inline std::vector<std::vector<double>> to_nested(const Matrix& M)
{
    std::vector<std::vector<double>> out(static_cast<std::size_t>(M.rows()),
                                         std::vector<double>(static_cast<std::size_t>(M.cols())));
    for (Eigen::Index i = 0; i < M.rows(); ++i)
        for (Eigen::Index j = 0; j < M.cols(); ++j)
            out[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] = M(i, j);
    return out;
}

/// Expected next width for candidate f by enumerating every outcome r of f:
/// plug r into z, zero f's error, evaluate the interval formula for each
/// outcome, then combine with the outcome probabilities.
inline double brute_expected_width(const DqoModel& m, const SessionState& s, std::size_t f, WidthForm form)
{
    const auto G = to_nested(m.model.gram_inverse);
    const double t = m.model.critical_value(s.alpha);
    const double s2 = m.model.sigma2_hat;
    const auto& spec = m.specs[f];
    Vector delta = s.delta;
    delta(static_cast<Eigen::Index>(f)) = 0.0;
    const double dterm = quad_form(G, delta, 0.0);
    double mixed_variance = 0.0, mixed_width = 0.0;
    for (std::size_t r = 0; r < spec.range.size(); ++r) {
        Vector z = s.z;
        z(static_cast<Eigen::Index>(f)) = spec.range[r];
        const double radicand = s2 * (1.0 + quad_form(G, z, 1.0) + dterm);
        mixed_variance += spec.proportions[r] * radicand;
        mixed_width += spec.proportions[r] * 2.0 * t * std::sqrt(radicand);
    }
    return form == WidthForm::weighted_variance ? 2.0 * t * std::sqrt(mixed_variance) : mixed_width;
}

/// Reference kNN fill: scan every row, sort by (distance, row), average the
/// first k rows in row order (continuous) or take their most frequent value,
/// smallest on ties (discrete).
inline Vector brute_knn(const Matrix& X, const Vector& x, const std::vector<std::size_t>& known,
                 const std::vector<bool>& discrete, std::size_t k, std::size_t skip = SIZE_MAX)
{
    const auto n = static_cast<std::size_t>(X.rows());
    const auto d = static_cast<std::size_t>(X.cols());
    std::vector<double> sd(d);
    for (std::size_t f = 0; f < d; ++f) {
        double mean = 0;
        for (std::size_t i = 0; i < n; ++i)
            mean += X(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(f));
        mean /= static_cast<double>(n);
        double ss = 0;
        for (std::size_t i = 0; i < n; ++i) {
            const double e = X(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(f)) - mean;
            ss += e * e;
        }
        sd[f] = std::sqrt(ss / static_cast<double>(n));
    }
    std::vector<std::pair<double, std::size_t>> order;
    for (std::size_t i = 0; i < n; ++i) {
        if (i == skip)
            continue;
        double dist = 0;
        for (auto f : known) {
            if (sd[f] == 0)
                continue;
            const double diff = (X(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(f)) - x(static_cast<Eigen::Index>(f))) / sd[f];
            dist += diff * diff;
        }
        order.emplace_back(dist, i);
    }
    std::sort(order.begin(), order.end());
    // With nothing known every row is equally near; fall back to the marginals.
    const std::size_t take = known.empty() ? order.size() : k;
    std::vector<std::size_t> rows;
    for (std::size_t j = 0; j < take; ++j)
        rows.push_back(order[j].second);
    std::sort(rows.begin(), rows.end());

    Vector z = x;
    for (std::size_t f = 0; f < d; ++f) {
        if (std::find(known.begin(), known.end(), f) != known.end())
            continue;
        const auto col = static_cast<Eigen::Index>(f);
        if (discrete[f]) {
            std::map<double, int> counts;
            for (auto r : rows)
                ++counts[X(static_cast<Eigen::Index>(r), col)];
            int best = -1;
            for (const auto& [v, c] : counts)
                if (c > best) {
                    best = c;
                    z(col) = v;
                }
        } else {
            double s = 0;
            for (auto r : rows)
                s += X(static_cast<Eigen::Index>(r), col);
            z(col) = s / static_cast<double>(rows.size());
        }
    }
    return z;
}

/// A small trained model on synthetic data: `d` features, the first `n_free`
/// free and the rest alternating low/high, discrete levels as given
/// (0 = continuous), continuous outcomes binned into `max_levels`.
inline DqoModel small_model(std::uint64_t seed, std::size_t d, std::vector<std::size_t> levels, std::size_t n_free,
                            std::size_t max_levels, std::size_t n = 200, std::size_t k = 10,
                            WidthForm form = WidthForm::weighted_variance)
{
    SyntheticConfig cfg;
    cfg.n = n;
    cfg.d = d;
    cfg.discrete_levels = std::move(levels);
    cfg.n_free = n_free;
    cfg.latent_factors = 2;
    cfg.seed = seed;
    cfg.structure_seed = seed;
    const auto data = generate_synthetic(cfg);
    TrainOptions opt;
    opt.select = false;
    opt.k = k;
    opt.max_levels = max_levels;
    opt.width_form = form;
    return train_model(data.table, opt);
}

} // namespace dqo::testing

#endif // DQO_TESTS_SUPPORT_HPP
