#ifndef DQO_SYNTHETIC_HPP
#define DQO_SYNTHETIC_HPP

// Synthetic survey data with a known linear generating model. Features share
// a few latent factors so that answered questions carry information about
// unanswered ones.

#include "dqo/dataset.hpp"

#include <cmath>
#include <numbers>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace dqo {

struct SyntheticConfig {
    std::size_t n = 2000;
    std::size_t d = 15;
    /// Intercept first; generated from `structure_seed` when empty.
    std::vector<double> beta;
    double noise_sd = 1.0;
    /// Level count per feature; 0 marks a continuous feature. Empty means
    /// every third feature discrete with 2-5 levels.
    std::vector<std::size_t> discrete_levels;
    /// Cost tier per feature; empty means the first `n_free` are free and
    /// the rest alternate low/high.
    std::vector<CostTier> tiers;
    std::size_t n_free = 3;
    std::size_t latent_factors = 3;
    /// Upper bound on the share of a feature's variance explained by the latent factors.
    double latent_strength = 0.85;
    /// Seeds the rows. Rows drawn under different seeds share one generating model.
    std::uint64_t seed = 1;
    /// Seeds the generating model (everything except the rows themselves).
    std::uint64_t structure_seed = 1;
};

/// Generating model, kept for oracle checks.
struct SyntheticParams {
    std::vector<double> beta;
    std::vector<std::vector<double>> loadings; ///< d × latent_factors
    std::vector<double> means;
    std::vector<double> scales;
};

struct SyntheticData {
    DatasetTable table;
    SyntheticParams params;
};

inline SyntheticParams synthetic_params(const SyntheticConfig& cfg)
{
    std::mt19937_64 rng(cfg.structure_seed * 0x9E3779B97F4A7C15ULL + 17);
    std::normal_distribution<double> normal(0.0, 1.0);
    std::uniform_real_distribution<double> unif(0.0, 1.0);

    SyntheticParams p;
    p.loadings.resize(cfg.d);
    p.means.resize(cfg.d);
    p.scales.resize(cfg.d);
    for (std::size_t f = 0; f < cfg.d; ++f) {
        std::vector<double> a(cfg.latent_factors);
        double norm = 0.0;
        for (auto& v : a) {
            v = normal(rng);
            norm += v * v;
        }
        const double strength = cfg.latent_strength * (0.3 + 0.7 * unif(rng));
        const double s = norm > 0 ? std::sqrt(strength / norm) : 0.0;
        for (auto& v : a)
            v *= s;
        p.loadings[f] = std::move(a);
        p.means[f] = std::round(10.0 * (unif(rng) * 40.0 - 10.0)) / 10.0;
        p.scales[f] = std::exp(normal(rng) * 0.8);
    }
    if (!cfg.beta.empty()) {
        if (cfg.beta.size() != cfg.d + 1)
            throw std::invalid_argument("generate_synthetic: beta must have d + 1 entries");
        p.beta = cfg.beta;
    } else {
        p.beta.push_back(10.0);
        for (std::size_t f = 0; f < cfg.d; ++f) {
            const double sign = unif(rng) < 0.5 ? -1.0 : 1.0;
            p.beta.push_back(sign * (0.3 + 1.7 * unif(rng)) / p.scales[f]);
        }
    }
    return p;
}

inline SyntheticData generate_synthetic(const SyntheticConfig& cfg)
{
    if (cfg.d == 0 || cfg.n <= cfg.d + 1)
        throw std::invalid_argument("generate_synthetic: need d >= 1 and n > d + 1");
    if (!(cfg.noise_sd >= 0.0))
        throw std::invalid_argument("generate_synthetic: noise_sd must be non-negative");
    if (!cfg.discrete_levels.empty() && cfg.discrete_levels.size() != cfg.d)
        throw std::invalid_argument("generate_synthetic: discrete_levels must have d entries");
    if (!cfg.tiers.empty() && cfg.tiers.size() != cfg.d)
        throw std::invalid_argument("generate_synthetic: tiers must have d entries");
    if (cfg.n_free > cfg.d)
        throw std::invalid_argument("generate_synthetic: more free features than features");

    std::vector<std::size_t> levels = cfg.discrete_levels;
    if (levels.empty()) {
        levels.assign(cfg.d, 0);
        for (std::size_t f = 0; f < cfg.d; f += 3)
            levels[f] = 2 + (f / 3) % 4;
    }
    for (auto l : levels)
        if (l == 1)
            throw std::invalid_argument("generate_synthetic: a discrete feature needs at least 2 levels");

    SyntheticData out;
    out.params = synthetic_params(cfg);
    const auto& p = out.params;

    auto& t = out.table;
    t.target_name = "y";
    for (std::size_t f = 0; f < cfg.d; ++f) {
        FeatureSpec s;
        s.id = f;
        s.name = "x" + std::to_string(f + 1);
        s.kind = levels[f] ? FeatureKind::discrete : FeatureKind::continuous;
        if (!cfg.tiers.empty())
            s.tier = cfg.tiers[f];
        else
            s.tier = f < cfg.n_free ? CostTier::free : ((f - cfg.n_free) % 2 == 0 ? CostTier::low : CostTier::high);
        s.cost = default_cost(s.tier);
        for (std::size_t l = 1; l <= levels[f]; ++l)
            s.levels.push_back(static_cast<double>(l));
        t.features.push_back(std::move(s));
    }

    std::mt19937_64 rng(cfg.seed * 0xD1B54A32D192ED03ULL + cfg.structure_seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    const auto n = static_cast<Eigen::Index>(cfg.n);
    const auto d = static_cast<Eigen::Index>(cfg.d);
    t.X.resize(n, d);
    t.y.resize(n);
    t.row_ids.resize(cfg.n);
    std::vector<double> u(cfg.latent_factors);
    for (Eigen::Index i = 0; i < n; ++i) {
        for (auto& v : u)
            v = normal(rng);
        double y = p.beta[0];
        for (Eigen::Index f = 0; f < d; ++f) {
            const auto& a = p.loadings[static_cast<std::size_t>(f)];
            double common = 0.0, strength = 0.0;
            for (std::size_t k = 0; k < a.size(); ++k) {
                common += a[k] * u[k];
                strength += a[k] * a[k];
            }
            const double c = common + std::sqrt(std::max(0.0, 1.0 - strength)) * normal(rng);
            double x = 0.0;
            const auto lv = levels[static_cast<std::size_t>(f)];
            if (lv) {
                const double phi = 0.5 * std::erfc(-c / std::numbers::sqrt2);
                x = 1.0 + std::min(static_cast<double>(lv - 1), std::floor(phi * static_cast<double>(lv)));
            } else {
                x = p.means[static_cast<std::size_t>(f)] + p.scales[static_cast<std::size_t>(f)] * c;
            }
            t.X(i, f) = x;
            y += p.beta[static_cast<std::size_t>(f) + 1] * x;
        }
        t.y(i) = y + cfg.noise_sd * normal(rng);
        t.row_ids[static_cast<std::size_t>(i)] = static_cast<std::size_t>(i);
    }
    return out;
}

inline SyntheticData generate_synthetic(std::size_t n, std::size_t d, std::vector<double> beta, double noise_sd,
                                        std::vector<std::size_t> discrete_levels, std::uint64_t seed)
{
    SyntheticConfig cfg;
    cfg.n = n;
    cfg.d = d;
    cfg.beta = std::move(beta);
    cfg.noise_sd = noise_sd;
    cfg.discrete_levels = std::move(discrete_levels);
    cfg.seed = seed;
    cfg.structure_seed = seed;
    cfg.n_free = std::min<std::size_t>(cfg.n_free, d);
    return generate_synthetic(cfg);
}

/// The standard desk-scale benchmark: 2000 rows, 15 features (5 discrete),
/// 3 free features, Gaussian noise; `seed` picks both the generating model
/// and the rows.
inline SyntheticConfig benchmark_config(std::uint64_t seed)
{
    SyntheticConfig cfg;
    cfg.n = 2000;
    cfg.d = 15;
    cfg.noise_sd = 1.0;
    cfg.seed = seed;
    cfg.structure_seed = seed;
    return cfg;
}

} // namespace dqo

#endif // DQO_SYNTHETIC_HPP
