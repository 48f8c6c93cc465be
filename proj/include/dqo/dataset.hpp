#ifndef DQO_DATASET_HPP
#define DQO_DATASET_HPP

#include "dqo/csv.hpp"

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <fstream>
#include <map>
#include <numeric>
#include <optional>
#include <random>
#include <set>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

namespace dqo {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

enum class FeatureKind { continuous, discrete };
enum class CostTier { free, low, high };

inline constexpr double kDefaultFreeCost = 0.0;
inline constexpr double kDefaultLowCost = 1.0;
inline constexpr double kDefaultHighCost = 5.0;

inline double default_cost(CostTier tier)
{
    switch (tier) {
    case CostTier::free: return kDefaultFreeCost;
    case CostTier::low: return kDefaultLowCost;
    case CostTier::high: return kDefaultHighCost;
    }
    return 0.0;
}

inline std::string to_string(FeatureKind k) { return k == FeatureKind::discrete ? "discrete" : "continuous"; }

inline std::string to_string(CostTier t)
{
    switch (t) {
    case CostTier::free: return "free";
    case CostTier::low: return "low";
    case CostTier::high: return "high";
    }
    return "?";
}

inline FeatureKind parse_kind(const std::string& s)
{
    if (s == "discrete") return FeatureKind::discrete;
    if (s == "continuous") return FeatureKind::continuous;
    throw std::invalid_argument("unknown feature kind '" + s + "'");
}

inline CostTier parse_tier(const std::string& s)
{
    if (s == "free") return CostTier::free;
    if (s == "low") return CostTier::low;
    if (s == "high") return CostTier::high;
    throw std::invalid_argument("unknown cost tier '" + s + "'");
}

/// Per-question metadata.
///
/// `levels` is the declared answer domain of a discrete feature (empty means
/// "any integer code"). `range`/`proportions` are the empirical outcome
/// distribution filled in by compute_feature_stats and enumerated when
/// scoring expected interval widths.
struct FeatureSpec {
    std::size_t id = 0;
    std::string name;
    FeatureKind kind = FeatureKind::continuous;
    CostTier tier = CostTier::low;
    double cost = kDefaultLowCost;
    std::vector<double> levels;
    std::vector<double> range;
    std::vector<double> proportions;
    std::string prompt;

    bool is_discrete() const { return kind == FeatureKind::discrete; }

    const std::string& question_text() const { return prompt.empty() ? name : prompt; }

    /// Whether `v` is an admissible answer. Continuous answers are always admissible.
    bool admits(double v) const
    {
        if (!is_discrete())
            return std::isfinite(v);
        if (!std::isfinite(v) || v != std::round(v))
            return false;
        const auto& domain = levels.empty() ? range : levels;
        if (domain.empty())
            return true;
        return std::find(domain.begin(), domain.end(), v) != domain.end();
    }

    /// Throws std::invalid_argument when an invariant is violated.
    void validate() const
    {
        if (cost < 0 || !std::isfinite(cost))
            throw std::invalid_argument("feature '" + name + "': cost must be non-negative");
        if (tier == CostTier::free && cost != 0.0)
            throw std::invalid_argument("feature '" + name + "': free tier requires cost 0");
        if (range.size() != proportions.size())
            throw std::invalid_argument("feature '" + name + "': range/proportions length mismatch");
        if (!range.empty()) {
            double total = std::accumulate(proportions.begin(), proportions.end(), 0.0);
            if (std::abs(total - 1.0) > 1e-9)
                throw std::invalid_argument("feature '" + name + "': proportions must sum to 1");
            for (std::size_t i = 1; i < range.size(); ++i)
                if (!(range[i] > range[i - 1]))
                    throw std::invalid_argument("feature '" + name + "': range must be strictly increasing");
        }
    }
};

/// Raised by load_dataset. `row` is the 1-based record number in the file
/// (the header is record 1); 0 when the problem is not tied to a row.
class LoadError : public std::runtime_error {
public:
    LoadError(const std::string& what, std::size_t row = 0, std::string column = {})
        : std::runtime_error(what), row_(row), column_(std::move(column))
    {
    }
    std::size_t row() const { return row_; }
    const std::string& column() const { return column_; }

private:
    std::size_t row_;
    std::string column_;
};

struct DatasetTable {
    Matrix X;
    Vector y;
    std::vector<FeatureSpec> features;
    std::string target_name = "y";
    /// Position of each row in the originating file (stable through splits).
    std::vector<std::size_t> row_ids;

    std::size_t rows() const { return static_cast<std::size_t>(X.rows()); }
    std::size_t dims() const { return static_cast<std::size_t>(X.cols()); }

    std::vector<std::size_t> free_set() const
    {
        std::vector<std::size_t> out;
        for (std::size_t f = 0; f < features.size(); ++f)
            if (features[f].tier == CostTier::free)
                out.push_back(f);
        return out;
    }

    std::optional<std::size_t> find(const std::string& name) const
    {
        for (std::size_t f = 0; f < features.size(); ++f)
            if (features[f].name == name)
                return f;
        return std::nullopt;
    }

    /// Subset of rows, in the given order.
    DatasetTable select_rows(const std::vector<std::size_t>& idx) const
    {
        DatasetTable out;
        out.features = features;
        out.target_name = target_name;
        out.X.resize(static_cast<Eigen::Index>(idx.size()), X.cols());
        out.y.resize(static_cast<Eigen::Index>(idx.size()));
        for (std::size_t i = 0; i < idx.size(); ++i) {
            out.X.row(static_cast<Eigen::Index>(i)) = X.row(static_cast<Eigen::Index>(idx[i]));
            out.y(static_cast<Eigen::Index>(i)) = y(static_cast<Eigen::Index>(idx[i]));
            out.row_ids.push_back(row_ids.empty() ? idx[i] : row_ids[idx[i]]);
        }
        return out;
    }

    /// Subset of feature columns, in the given order; feature ids are renumbered.
    DatasetTable select_features(const std::vector<std::size_t>& cols) const
    {
        DatasetTable out;
        out.target_name = target_name;
        out.y = y;
        out.row_ids = row_ids;
        out.X.resize(X.rows(), static_cast<Eigen::Index>(cols.size()));
        for (std::size_t j = 0; j < cols.size(); ++j) {
            out.X.col(static_cast<Eigen::Index>(j)) = X.col(static_cast<Eigen::Index>(cols[j]));
            FeatureSpec spec = features[cols[j]];
            spec.id = j;
            out.features.push_back(std::move(spec));
        }
        return out;
    }
};

// ---------------------------------------------------------------------------
// Metadata sidecar (JSON):
//
//   {
//     "target": "kwh",
//     "features": [
//       {"name": "bedrooms", "kind": "discrete", "cost_tier": "free",
//        "levels": [1, 2, 3, 4, 5], "prompt": "How many bedrooms?"},
//       {"name": "sqft", "kind": "continuous", "cost_tier": "high", "cost": 6}
//     ],
//     "free_set": ["bedrooms"]
//   }
//
// "cost" defaults from the tier (free 0, low 1, high 5). "free_set" is
// optional; when present it must list exactly the free-tier features.
// ---------------------------------------------------------------------------

struct Metadata {
    std::string target;
    std::vector<FeatureSpec> features;
};

inline Metadata parse_metadata(const nlohmann::json& j)
{
    Metadata meta;
    if (!j.contains("target") || !j.at("target").is_string())
        throw LoadError("metadata: missing string field 'target'");
    meta.target = j.at("target").get<std::string>();
    if (!j.contains("features") || !j.at("features").is_array() || j.at("features").empty())
        throw LoadError("metadata: 'features' must be a non-empty array");

    std::set<std::string> seen;
    for (const auto& jf : j.at("features")) {
        FeatureSpec spec;
        try {
            spec.id = meta.features.size();
            spec.name = jf.at("name").get<std::string>();
            spec.kind = parse_kind(jf.at("kind").get<std::string>());
            spec.tier = parse_tier(jf.at("cost_tier").get<std::string>());
            spec.cost = jf.contains("cost") ? jf.at("cost").get<double>() : default_cost(spec.tier);
            if (jf.contains("levels")) {
                if (!spec.is_discrete())
                    throw std::invalid_argument("'levels' only applies to discrete features");
                spec.levels = jf.at("levels").get<std::vector<double>>();
                std::sort(spec.levels.begin(), spec.levels.end());
                if (std::adjacent_find(spec.levels.begin(), spec.levels.end()) != spec.levels.end())
                    throw std::invalid_argument("duplicate level");
                for (double v : spec.levels)
                    if (v != std::round(v))
                        throw std::invalid_argument("levels must be integer codes");
            }
            if (jf.contains("prompt"))
                spec.prompt = jf.at("prompt").get<std::string>();
            spec.validate();
        } catch (const LoadError&) {
            throw;
        } catch (const std::exception& e) {
            throw LoadError(std::string("metadata: feature #") + std::to_string(meta.features.size()) + ": " +
                            e.what(), 0, spec.name);
        }
        if (!seen.insert(spec.name).second)
            throw LoadError("metadata: duplicate feature name '" + spec.name + "'", 0, spec.name);
        if (spec.name == meta.target)
            throw LoadError("metadata: feature shares the target's name", 0, spec.name);
        meta.features.push_back(std::move(spec));
    }

    if (j.contains("free_set")) {
        std::set<std::string> declared;
        for (const auto& n : j.at("free_set"))
            declared.insert(n.get<std::string>());
        std::set<std::string> tiered;
        for (const auto& f : meta.features)
            if (f.tier == CostTier::free)
                tiered.insert(f.name);
        if (declared != tiered)
            throw LoadError("metadata: 'free_set' must list exactly the free-tier features");
    }
    return meta;
}

inline nlohmann::json metadata_to_json(const DatasetTable& table)
{
    nlohmann::json j;
    j["target"] = table.target_name;
    j["features"] = nlohmann::json::array();
    nlohmann::json free = nlohmann::json::array();
    for (const auto& f : table.features) {
        nlohmann::json jf{{"name", f.name}, {"kind", to_string(f.kind)}, {"cost_tier", to_string(f.tier)},
                          {"cost", f.cost}};
        if (!f.levels.empty())
            jf["levels"] = f.levels;
        if (!f.prompt.empty())
            jf["prompt"] = f.prompt;
        j["features"].push_back(std::move(jf));
        if (f.tier == CostTier::free)
            free.push_back(f.name);
    }
    j["free_set"] = std::move(free);
    return j;
}

/// Builds a validated table from parsed CSV records (header first).
/// `for_fitting` enforces n > d + 1; evaluation tables may be smaller.
inline DatasetTable table_from_records(const std::vector<csv::Row>& records, const Metadata& meta,
                                       bool for_fitting = true)
{
    if (records.empty())
        throw LoadError("csv: file is empty");
    const auto& header = records.front();
    std::unordered_map<std::string, std::size_t> column_of;
    for (std::size_t c = 0; c < header.size(); ++c)
        column_of.emplace(header[c], c);

    auto locate = [&](const std::string& name) {
        auto it = column_of.find(name);
        if (it == column_of.end())
            throw LoadError("csv: missing column '" + name + "'", 1, name);
        return it->second;
    };

    const std::size_t d = meta.features.size();
    std::vector<std::size_t> src(d);
    for (std::size_t f = 0; f < d; ++f)
        src[f] = locate(meta.features[f].name);
    const std::size_t target_col = locate(meta.target);

    // Trailing blank lines are tolerated.
    std::size_t last = records.size();
    while (last > 1 && records[last - 1].size() == 1 && records[last - 1][0].empty())
        --last;
    const std::size_t n = last - 1;

    DatasetTable table;
    table.features = meta.features;
    table.target_name = meta.target;
    table.X.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
    table.y.resize(static_cast<Eigen::Index>(n));
    table.row_ids.resize(n);

    for (std::size_t i = 0; i < n; ++i) {
        const auto& rec = records[i + 1];
        const std::size_t file_row = i + 2;
        if (rec.size() != header.size())
            throw LoadError("csv: row " + std::to_string(file_row) + " has " + std::to_string(rec.size()) +
                                " fields, header has " + std::to_string(header.size()),
                            file_row);
        auto cell = [&](std::size_t col, const std::string& name) {
            double v = 0;
            if (!csv::parse_double(rec[col], v) || !std::isfinite(v))
                throw LoadError("csv: non-numeric value '" + rec[col] + "' at row " + std::to_string(file_row) +
                                    ", column '" + name + "'",
                                file_row, name);
            return v;
        };
        for (std::size_t f = 0; f < d; ++f) {
            const auto& spec = meta.features[f];
            double v = cell(src[f], spec.name);
            if (spec.is_discrete()) {
                if (v != std::round(v))
                    throw LoadError("csv: non-integer code at row " + std::to_string(file_row) + ", column '" +
                                        spec.name + "'",
                                    file_row, spec.name);
                if (!spec.levels.empty() && !spec.admits(v))
                    throw LoadError("csv: value outside declared levels at row " + std::to_string(file_row) +
                                        ", column '" + spec.name + "'",
                                    file_row, spec.name);
            }
            table.X(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(f)) = v;
        }
        table.y(static_cast<Eigen::Index>(i)) = cell(target_col, meta.target);
        table.row_ids[i] = i;
    }
    if (n == 0)
        throw LoadError("dataset: no data rows");
    if (for_fitting && n <= d + 1)
        throw LoadError("dataset: need more than d+1 = " + std::to_string(d + 1) + " rows, got " +
                        std::to_string(n));
    return table;
}

inline Metadata read_metadata(const std::string& meta_path)
{
    std::ifstream in(meta_path);
    if (!in)
        throw LoadError("metadata: cannot open " + meta_path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw LoadError(std::string("metadata: malformed JSON: ") + e.what());
    }
    return parse_metadata(j);
}

inline DatasetTable load_dataset(const std::string& csv_path, const Metadata& meta, bool for_fitting = true)
{
    std::vector<csv::Row> records;
    try {
        records = csv::read_file(csv_path);
    } catch (const std::runtime_error& e) {
        throw LoadError(e.what());
    }
    return table_from_records(records, meta, for_fitting);
}

inline DatasetTable load_dataset(const std::string& csv_path, const std::string& meta_path)
{
    return load_dataset(csv_path, read_metadata(meta_path));
}

inline void write_dataset_csv(const DatasetTable& table, std::ostream& out)
{
    csv::Row header;
    for (const auto& f : table.features)
        header.push_back(f.name);
    header.push_back(table.target_name);
    csv::write_row(out, header);
    for (Eigen::Index i = 0; i < table.X.rows(); ++i) {
        csv::Row row;
        for (Eigen::Index f = 0; f < table.X.cols(); ++f)
            row.push_back(csv::format_double(table.X(i, f)));
        row.push_back(csv::format_double(table.y(i)));
        csv::write_row(out, row);
    }
}

inline void save_dataset(const DatasetTable& table, const std::string& csv_path, const std::string& meta_path)
{
    std::ofstream out(csv_path, std::ios::binary);
    if (!out)
        throw std::runtime_error("cannot write " + csv_path);
    write_dataset_csv(table, out);
    std::ofstream mout(meta_path);
    if (!mout)
        throw std::runtime_error("cannot write " + meta_path);
    mout << metadata_to_json(table).dump(2) << "\n";
}

// ---------------------------------------------------------------------------
// Feature statistics
// ---------------------------------------------------------------------------

inline constexpr std::size_t kDefaultMaxLevels = 10;

/// Linear-interpolation sample quantile of sorted data (Hyndman-Fan type 7).
inline double sample_quantile(const std::vector<double>& sorted, double prob)
{
    if (sorted.empty())
        throw std::invalid_argument("sample_quantile: empty sample");
    const double h = (static_cast<double>(sorted.size()) - 1.0) * prob;
    const auto lo = static_cast<std::size_t>(std::floor(h));
    const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
    return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

/// Fills range/proportions of every feature from the table's rows, which
/// must be training rows only. Discrete: distinct values and their relative
/// frequencies. Continuous: `max_levels` equal-probability bins, each
/// represented by the sample quantile at its probability midpoint; bins whose
/// representatives coincide are merged. Constant columns yield a single
/// outcome and are reported through `warnings`.
inline std::vector<FeatureSpec> compute_feature_stats(const DatasetTable& table, std::size_t max_levels,
                                                      std::vector<std::string>* warnings = nullptr)
{
    if (max_levels == 0)
        throw std::invalid_argument("compute_feature_stats: max_levels must be positive");
    if (table.rows() == 0)
        throw std::invalid_argument("compute_feature_stats: no rows");
    std::vector<FeatureSpec> out = table.features;
    const double n = static_cast<double>(table.rows());

    for (std::size_t f = 0; f < out.size(); ++f) {
        auto& spec = out[f];
        std::vector<double> col(table.X.col(static_cast<Eigen::Index>(f)).data(),
                                table.X.col(static_cast<Eigen::Index>(f)).data() + table.X.rows());
        std::sort(col.begin(), col.end());
        spec.range.clear();
        spec.proportions.clear();

        if (spec.is_discrete()) {
            for (std::size_t i = 0; i < col.size();) {
                std::size_t j = i;
                while (j < col.size() && col[j] == col[i])
                    ++j;
                spec.range.push_back(col[i]);
                spec.proportions.push_back(static_cast<double>(j - i) / n);
                i = j;
            }
        } else {
            const double p = 1.0 / static_cast<double>(max_levels);
            for (std::size_t b = 0; b < max_levels; ++b) {
                double q = sample_quantile(col, (static_cast<double>(b) + 0.5) * p);
                if (!spec.range.empty() && q <= spec.range.back())
                    spec.proportions.back() += p;
                else {
                    spec.range.push_back(q);
                    spec.proportions.push_back(p);
                }
            }
        }
        // Renormalise against accumulated round-off.
        double total = std::accumulate(spec.proportions.begin(), spec.proportions.end(), 0.0);
        for (double& p : spec.proportions)
            p /= total;

        if (spec.range.size() == 1 && warnings)
            warnings->push_back("feature '" + spec.name + "' is constant in the training rows");
    }
    return out;
}

// ---------------------------------------------------------------------------
// Splitting
// ---------------------------------------------------------------------------

/// Seeded partition; exactly floor(n * test_fraction) rows go to the test side.
/// Each side keeps the original row order.
inline std::pair<DatasetTable, DatasetTable> split_train_test(const DatasetTable& table, double test_fraction,
                                                              std::uint64_t seed)
{
    if (!(test_fraction > 0.0 && test_fraction < 1.0))
        throw std::invalid_argument("split_train_test: test_fraction must lie in (0, 1)");
    const std::size_t n = table.rows();
    const auto n_test = static_cast<std::size_t>(std::floor(static_cast<double>(n) * test_fraction));
    if (n_test == 0 || n_test >= n)
        throw std::invalid_argument("split_train_test: fraction leaves one side empty");

    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    std::mt19937_64 rng(seed);
    std::shuffle(idx.begin(), idx.end(), rng);
    std::vector<std::size_t> test(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_test));
    std::vector<std::size_t> train(idx.begin() + static_cast<std::ptrdiff_t>(n_test), idx.end());
    std::sort(test.begin(), test.end());
    std::sort(train.begin(), train.end());
    return {table.select_rows(train), table.select_rows(test)};
}

} // namespace dqo

#endif // DQO_DATASET_HPP
