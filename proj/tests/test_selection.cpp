#include "support.hpp"

#include "dqo/selection.hpp"

#include <gtest/gtest.h>

#include <random>

using namespace dqo;
using dqo::testing::make_spec;
using dqo::testing::make_table;

namespace {

/// n rows of independent Gaussian columns; the first `n_free` are free.
DatasetTable noise_table(std::mt19937_64& rng, int n, int d, int n_free)
{
    std::normal_distribution<double> g(0.0, 1.0);
    Matrix X(n, d);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < d; ++j)
            X(i, j) = g(rng);
    std::vector<FeatureSpec> specs;
    for (int j = 0; j < d; ++j)
        specs.push_back(make_spec(static_cast<std::size_t>(j), "x" + std::to_string(j + 1), FeatureKind::continuous,
                                  j < n_free ? CostTier::free : CostTier::high));
    Vector y(n);
    for (int i = 0; i < n; ++i)
        y(i) = g(rng);
    return make_table(X, y, std::move(specs));
}

} // namespace

TEST(ForwardSelect, RedundantCopyNeverReportedAsImproving)
{
    std::mt19937_64 rng(1);
    auto t = noise_table(rng, 80, 4, 1);
    t.X.col(3) = t.X.col(0); // costly exact copy of the free feature
    t.y = 1.5 * t.X.col(0).array() + 0.8 * t.X.col(1).array() + 0.3 * t.y.array();
    const auto trace = forward_select(t, 10, 0.0);
    for (auto f : trace.ordered_features)
        EXPECT_NE(f, 3u);
    ASSERT_FALSE(trace.ordered_features.empty());
    EXPECT_EQ(trace.ordered_features.front(), 1u);
}

TEST(ForwardSelect, FindsTheInformativeCostlyFeature)
{
    int hits = 0;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        std::mt19937_64 rng(seed);
        auto t = noise_table(rng, 100, 6, 2);
        t.y = 2.0 * t.X.col(2).array() + t.y.array();
        const auto trace = forward_select(t, 3, 0.0);
        hits += !trace.ordered_features.empty() && trace.ordered_features.front() == 2u;
    }
    EXPECT_GE(hits, 18);
}

TEST(ForwardSelect, ZeroBudgetGivesInitialErrorOnly)
{
    std::mt19937_64 rng(2);
    const auto t = noise_table(rng, 50, 5, 2);
    const auto trace = forward_select(t, 0, 0.0);
    EXPECT_TRUE(trace.ordered_features.empty());
    EXPECT_TRUE(trace.cv_errors.empty());
    EXPECT_NEAR(trace.initial_error, loocv_error(t.X.leftCols(2), t.y), 1e-12);
}

TEST(ForwardSelect, EachRoundPicksTheBestCandidate)
{
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        std::mt19937_64 rng(seed + 40);
        auto t = noise_table(rng, 60, 8, 2);
        t.y = t.X.col(0).array() + 0.5 * t.X.col(4).array() - 0.7 * t.X.col(6).array() + t.y.array();
        const auto trace = forward_select(t, 8, -std::numeric_limits<double>::infinity());
        ASSERT_EQ(trace.ordered_features.size(), 6u);
        ASSERT_EQ(trace.cv_errors.size(), trace.ordered_features.size());

        std::vector<std::size_t> current{0, 1};
        for (std::size_t round = 0; round < trace.ordered_features.size(); ++round) {
            double best = std::numeric_limits<double>::infinity();
            std::size_t best_f = 0;
            for (std::size_t c = 2; c < 8; ++c) {
                if (std::find(current.begin(), current.end(), c) != current.end())
                    continue;
                auto cols = current;
                cols.push_back(c);
                Matrix sub(t.X.rows(), static_cast<Eigen::Index>(cols.size()));
                for (std::size_t j = 0; j < cols.size(); ++j)
                    sub.col(static_cast<Eigen::Index>(j)) = t.X.col(static_cast<Eigen::Index>(cols[j]));
                const double e = loocv_error(sub, t.y);
                if (e < best) {
                    best = e;
                    best_f = c;
                }
            }
            EXPECT_EQ(trace.ordered_features[round], best_f) << "seed " << seed << " round " << round;
            EXPECT_NEAR(trace.cv_errors[round], best, 1e-12 * best);
            current.push_back(trace.ordered_features[round]);
        }
    }
}

TEST(ForwardSelect, ThresholdStopsEarly)
{
    std::mt19937_64 rng(5);
    auto t = noise_table(rng, 80, 6, 1);
    t.y = 3.0 * t.X.col(1).array() + 0.2 * t.y.array();
    const auto trace = forward_select(t, 10, 0.05);
    ASSERT_EQ(trace.ordered_features.size(), 1u);
    EXPECT_EQ(trace.ordered_features[0], 1u);
}

TEST(ForwardSelect, DeterministicAndDisjointFromFreeSet)
{
    std::mt19937_64 rng(6);
    auto t = noise_table(rng, 70, 7, 3);
    t.y = t.X.rowwise().sum() + t.y;
    const auto a = forward_select(t, 30, 0.0);
    const auto b = forward_select(t, 30, 0.0);
    EXPECT_EQ(a.ordered_features, b.ordered_features);
    EXPECT_EQ(a.cv_errors, b.cv_errors);
    std::set<std::size_t> seen;
    for (auto f : a.ordered_features) {
        EXPECT_GE(f, 3u);
        EXPECT_TRUE(seen.insert(f).second);
    }
}

TEST(ForwardSelect, UnfittableFreeSetIsAnError)
{
    std::mt19937_64 rng(7);
    const auto t = noise_table(rng, 4, 5, 3);
    EXPECT_THROW(forward_select(t, 2, 0.0), std::invalid_argument);
}
