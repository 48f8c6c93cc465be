#include "support.hpp"

#include "dqo/csv.hpp"
#include "dqo/dataset.hpp"
#include "dqo/regression.hpp"
#include "dqo/synthetic.hpp"

#include <gtest/gtest.h>

#include <fstream>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

using namespace dqo;
using dqo::testing::make_spec;
using dqo::testing::make_table;
using dqo::testing::temp_dir;

namespace {

void write_text(const std::filesystem::path& p, const std::string& text)
{
    std::ofstream out(p, std::ios::binary);
    out << text;
}

const char* kTwoFeatureMeta = R"({
  "target": "kwh",
  "features": [
    {"name": "bedrooms", "kind": "discrete", "cost_tier": "free", "levels": [1, 2, 3, 4]},
    {"name": "sqft", "kind": "continuous", "cost_tier": "high"}
  ],
  "free_set": ["bedrooms"]
})";

} // namespace

TEST(Csv, QuotedFieldsAndLineEndings)
{
    const auto rows = csv::parse("a,b\r\n\"x, y\",\"say \"\"hi\"\"\"\n1,\n");
    ASSERT_EQ(rows.size(), 3u);
    EXPECT_EQ(rows[1][0], "x, y");
    EXPECT_EQ(rows[1][1], "say \"hi\"");
    EXPECT_EQ(rows[2][1], "");
}

TEST(Csv, ParseDoubleIsStrict)
{
    double v = 0;
    EXPECT_TRUE(csv::parse_double(" 2.5 ", v));
    EXPECT_EQ(v, 2.5);
    EXPECT_FALSE(csv::parse_double("2.5x", v));
    EXPECT_FALSE(csv::parse_double("three", v));
    EXPECT_FALSE(csv::parse_double("", v));
}

TEST(LoadDataset, MinimalValidFile)
{
    const auto dir = temp_dir("load_min");
    write_text(dir / "d.csv", "bedrooms,sqft,kwh\n1,800,5000\n2,1200,7000\n3,1500,8000\n");
    write_text(dir / "d.meta", kTwoFeatureMeta);
    const auto meta = read_metadata((dir / "d.meta").string());
    const auto t = load_dataset((dir / "d.csv").string(), meta, false);
    EXPECT_EQ(t.rows(), 3u);
    EXPECT_EQ(t.dims(), 2u);
    EXPECT_EQ(t.free_set(), std::vector<std::size_t>{0});
    EXPECT_EQ(t.X(2, 1), 1500.0);
    EXPECT_EQ(t.y(1), 7000.0);
    // Three rows leave no residual degrees of freedom for two features.
    EXPECT_THROW(load_dataset((dir / "d.csv").string(), (dir / "d.meta").string()), LoadError);
}

TEST(LoadDataset, NonNumericCellNamesRowAndColumn)
{
    const auto dir = temp_dir("load_bad");
    write_text(dir / "d.csv", "sqft,bedrooms,kwh\n800,two,5000\n1200,2,7000\n1500,3,8000\n1700,3,9000\n");
    write_text(dir / "d.meta", kTwoFeatureMeta);
    try {
        load_dataset((dir / "d.csv").string(), (dir / "d.meta").string());
        FAIL() << "expected a load error";
    } catch (const LoadError& e) {
        EXPECT_EQ(e.row(), 2u);
        EXPECT_EQ(e.column(), "bedrooms");
    }
}

TEST(LoadDataset, RejectsUndeclaredLevelAndMissingColumn)
{
    const auto dir = temp_dir("load_levels");
    write_text(dir / "d.meta", kTwoFeatureMeta);
    write_text(dir / "a.csv", "bedrooms,sqft,kwh\n1,800,1\n2,900,2\n9,950,3\n4,990,4\n");
    try {
        load_dataset((dir / "a.csv").string(), (dir / "d.meta").string());
        FAIL() << "expected a load error";
    } catch (const LoadError& e) {
        EXPECT_EQ(e.row(), 4u);
        EXPECT_EQ(e.column(), "bedrooms");
    }
    write_text(dir / "b.csv", "bedrooms,kwh\n1,1\n2,2\n3,3\n4,4\n");
    try {
        load_dataset((dir / "b.csv").string(), (dir / "d.meta").string());
        FAIL() << "expected a load error";
    } catch (const LoadError& e) {
        EXPECT_EQ(e.column(), "sqft");
    }
}

TEST(LoadDataset, MetadataFreeSetMustMatchTiers)
{
    auto j = nlohmann::json::parse(kTwoFeatureMeta);
    j["free_set"] = {"sqft"};
    EXPECT_THROW(parse_metadata(j), LoadError);
    j["free_set"] = {"bedrooms"};
    const auto meta = parse_metadata(j);
    EXPECT_EQ(meta.features[1].cost, 5.0);
    EXPECT_EQ(meta.features[0].cost, 0.0);
}

TEST(LoadDataset, FreeSetOfLargeTable)
{
    // Survey-scale shape: 2470 rows, 30 features, two free listing features.
    SyntheticConfig cfg;
    cfg.n = 2470;
    cfg.d = 30;
    cfg.n_free = 2;
    cfg.seed = 4;
    auto data = generate_synthetic(cfg);
    data.table.features[0].name = "bedrooms";
    data.table.features[1].name = "bathrooms";
    const auto dir = temp_dir("load_large");
    save_dataset(data.table, (dir / "d.csv").string(), (dir / "d.meta").string());
    const auto t = load_dataset((dir / "d.csv").string(), (dir / "d.meta").string());
    EXPECT_EQ(t.rows(), 2470u);
    EXPECT_EQ(t.dims(), 30u);
    ASSERT_EQ(t.free_set().size(), 2u);
    EXPECT_EQ(t.features[t.free_set()[0]].name, "bedrooms");
    EXPECT_EQ(t.features[t.free_set()[1]].name, "bathrooms");
}

TEST(LoadDataset, RoundTripIsBitExact)
{
    auto data = generate_synthetic(benchmark_config(9));
    // Awkward values: long mantissas and a tiny magnitude.
    data.table.y(0) = 0.1 + 0.2;
    data.table.y(1) = -1.0 / 3.0;
    data.table.X(2, 1) = 1e-300;
    const auto dir = temp_dir("roundtrip");
    save_dataset(data.table, (dir / "d.csv").string(), (dir / "d.meta").string());
    const auto back = load_dataset((dir / "d.csv").string(), (dir / "d.meta").string());
    ASSERT_EQ(back.X.rows(), data.table.X.rows());
    EXPECT_TRUE((back.X.array() == data.table.X.array()).all());
    EXPECT_TRUE((back.y.array() == data.table.y.array()).all());
    std::ostringstream a, b;
    write_dataset_csv(data.table, a);
    write_dataset_csv(back, b);
    EXPECT_EQ(a.str(), b.str());
}

TEST(FeatureStats, DiscreteFrequencies)
{
    Matrix X(4, 1);
    X << 1, 1, 2, 2;
    const auto t = make_table(X, Vector::Zero(4), {make_spec(0, "a", FeatureKind::discrete, CostTier::low)});
    const auto specs = compute_feature_stats(t, 10);
    EXPECT_EQ(specs[0].range, (std::vector<double>{1, 2}));
    EXPECT_EQ(specs[0].proportions, (std::vector<double>{0.5, 0.5}));
}

TEST(FeatureStats, ConstantColumnWarns)
{
    Matrix X(3, 1);
    X << 3, 3, 3;
    const auto t = make_table(X, Vector::Zero(3), {make_spec(0, "c", FeatureKind::continuous, CostTier::low)});
    std::vector<std::string> warnings;
    const auto specs = compute_feature_stats(t, 10, &warnings);
    EXPECT_EQ(specs[0].range, std::vector<double>{3});
    EXPECT_EQ(specs[0].proportions, std::vector<double>{1.0});
    EXPECT_EQ(warnings.size(), 1u);
}

TEST(FeatureStats, ContinuousEqualProbabilityBins)
{
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const int n = 1000;
    Matrix X(n, 1);
    for (int i = 0; i < n; ++i)
        X(i, 0) = u(rng);
    const auto t = make_table(X, Vector::Zero(n), {make_spec(0, "u", FeatureKind::continuous, CostTier::low)});
    const auto specs = compute_feature_stats(t, 10);
    ASSERT_EQ(specs[0].range.size(), 10u);

    // Oracle: order statistics located by selection, interpolated at
    // (n-1)·p for bin midpoints p = 0.05, 0.15, ...
    for (int b = 0; b < 10; ++b) {
        const double pos = (n - 1) * (0.05 + 0.1 * b);
        std::vector<double> v(X.data(), X.data() + n);
        const auto lo = static_cast<std::size_t>(pos);
        std::nth_element(v.begin(), v.begin() + static_cast<long>(lo), v.end());
        const double a = v[lo];
        const double c = *std::min_element(v.begin() + static_cast<long>(lo) + 1, v.end());
        EXPECT_NEAR(specs[0].range[static_cast<std::size_t>(b)], a + (pos - lo) * (c - a), 1e-12);
        EXPECT_NEAR(specs[0].proportions[static_cast<std::size_t>(b)], 0.1, 0.01);
    }
    EXPECT_NEAR(std::accumulate(specs[0].proportions.begin(), specs[0].proportions.end(), 0.0), 1.0, 1e-9);
}

TEST(FeatureStats, InvariantsOnSyntheticData)
{
    const auto data = generate_synthetic(benchmark_config(2));
    const auto specs = compute_feature_stats(data.table, 10);
    for (std::size_t f = 0; f < specs.size(); ++f) {
        const auto& s = specs[f];
        EXPECT_NO_THROW(s.validate());
        EXPECT_NEAR(std::accumulate(s.proportions.begin(), s.proportions.end(), 0.0), 1.0, 1e-9);
        if (s.is_discrete()) {
            for (Eigen::Index i = 0; i < data.table.X.rows(); ++i)
                EXPECT_TRUE(std::count(s.range.begin(), s.range.end(), data.table.X(i, static_cast<Eigen::Index>(f))));
        }
    }
}

TEST(Split, SmallTableDeterministic)
{
    Matrix X = Matrix::Zero(10, 1);
    for (int i = 0; i < 10; ++i)
        X(i, 0) = i;
    const auto t = make_table(X, X.col(0), {make_spec(0, "a", FeatureKind::continuous, CostTier::free)});
    const auto [tr, te] = split_train_test(t, 0.1, 7);
    EXPECT_EQ(tr.rows(), 9u);
    EXPECT_EQ(te.rows(), 1u);
    const auto [tr2, te2] = split_train_test(t, 0.1, 7);
    EXPECT_EQ(te.row_ids, te2.row_ids);
    EXPECT_EQ(tr.row_ids, tr2.row_ids);
}

TEST(Split, NinetyTenOnSurveyScaleTable)
{
    Matrix X = Matrix::Zero(2470, 1);
    const auto t = make_table(X, Vector::Zero(2470), {make_spec(0, "a", FeatureKind::continuous, CostTier::free)});
    const auto [tr, te] = split_train_test(t, 0.1, 1);
    EXPECT_EQ(tr.rows(), 2223u);
    EXPECT_EQ(te.rows(), 247u);
}

TEST(Split, PartitionAndSeedSensitivity)
{
    Matrix X = Matrix::Zero(100, 1);
    const auto t = make_table(X, Vector::Zero(100), {make_spec(0, "a", FeatureKind::continuous, CostTier::free)});
    const auto [tr, te] = split_train_test(t, 0.3, 1);
    std::set<std::size_t> all(tr.row_ids.begin(), tr.row_ids.end());
    for (auto r : te.row_ids)
        EXPECT_TRUE(all.insert(r).second) << "row in both parts";
    EXPECT_EQ(all.size(), 100u);
    const auto [tr2, te2] = split_train_test(t, 0.3, 2);
    EXPECT_NE(te.row_ids, te2.row_ids);
    EXPECT_THROW(split_train_test(t, 0.001, 1), std::invalid_argument);
    EXPECT_THROW(split_train_test(t, 1.0, 1), std::invalid_argument);
}

TEST(Synthetic, ZeroNoiseIsExactlyLinear)
{
    std::vector<double> beta{1.5, 2.0, -1.0, 0.5, 3.0};
    const auto data = generate_synthetic(300, 4, beta, 0.0, {0, 3, 0, 2}, 11);
    for (Eigen::Index i = 0; i < data.table.X.rows(); ++i) {
        double y = beta[0];
        for (Eigen::Index f = 0; f < 4; ++f)
            y += beta[static_cast<std::size_t>(f) + 1] * data.table.X(i, f);
        EXPECT_NEAR(data.table.y(i), y, 1e-12 * (1 + std::abs(y)));
    }
}

TEST(Synthetic, DeterministicForFixedSeed)
{
    const auto a = generate_synthetic(benchmark_config(3));
    const auto b = generate_synthetic(benchmark_config(3));
    EXPECT_TRUE((a.table.X.array() == b.table.X.array()).all());
    EXPECT_TRUE((a.table.y.array() == b.table.y.array()).all());
    const auto c = generate_synthetic(benchmark_config(4));
    EXPECT_FALSE((a.table.X.array() == c.table.X.array()).all());
}

TEST(Synthetic, OlsRecoversGeneratingCoefficients)
{
    for (std::uint64_t seed : {1u, 2u, 3u}) {
        const auto data = generate_synthetic(benchmark_config(seed));
        const auto model = fit_ols(data.table.X, data.table.y);
        for (std::size_t j = 0; j < data.params.beta.size(); ++j) {
            const auto jj = static_cast<Eigen::Index>(j);
            const double se = std::sqrt(model.sigma2_hat * model.gram_inverse(jj, jj));
            EXPECT_LE(std::abs(model.beta_hat(jj) - data.params.beta[j]), 3.0 * se + 1e-12)
                << "seed " << seed << " coefficient " << j;
        }
    }
}

TEST(Synthetic, RejectsInvalidDimensions)
{
    EXPECT_THROW(generate_synthetic(5, 4, {}, 1.0, {}, 1), std::invalid_argument);
    EXPECT_THROW(generate_synthetic(100, 3, {1, 2}, 1.0, {}, 1), std::invalid_argument);
}
