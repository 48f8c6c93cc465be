#ifndef DQO_HARNESS_HPP
#define DQO_HARNESS_HPP

// Simulated question answering over a test set, trajectory AUC summaries
// and the report files consumed by the CLI.
//
// Trajectory CSV: row_id,orderer,lambda,step,asked_feature,width,abs_error,cum_cost
//   step 0 is the prediction before any question; asked_feature is the
//   feature name answered at that step (empty at step 0).
// Summary CSV:    orderer,lambda,rows,width_auc,error_auc,cost_auc  (means over rows)
// Positions CSV:  feature,pos_1,...,pos_Q  (how often each feature was asked at each position)

#include "dqo/csv.hpp"
#include "dqo/engine.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

namespace dqo {

struct TrajectoryStep {
    std::size_t step = 0;
    std::string asked_feature; ///< empty at step 0
    double point = 0.0;
    double lower = 0.0;
    double upper = 0.0;
    double width = 0.0;
    double abs_error = 0.0;
    double cum_cost = 0.0;
};

struct Trajectory {
    std::size_t row_id = 0;
    std::string orderer;
    double lambda = 0.0;
    std::vector<TrajectoryStep> steps;

    /// Number of questions asked (Q).
    std::size_t questions() const { return steps.empty() ? 0 : steps.size() - 1; }
};

struct AucValues {
    double width_auc = 0.0;
    double error_auc = 0.0;
    double cost_auc = 0.0;
};

struct AucRow {
    std::string orderer;
    double lambda = 0.0;
    std::size_t rows = 0;
    AucValues mean;
};

inline Trajectory make_trajectory(const DqoModel& m, const SessionState& s, double truth, std::size_t row_id,
                                  std::string orderer)
{
    Trajectory t;
    t.row_id = row_id;
    t.orderer = std::move(orderer);
    t.lambda = s.lambda;
    for (std::size_t q = 0; q < s.predictions.size(); ++q) {
        const auto& pi = s.predictions[q];
        TrajectoryStep st;
        st.step = q;
        if (q > 0)
            st.asked_feature = m.specs.at(s.ordering.at(q - 1)).name;
        st.point = pi.point;
        st.lower = pi.lower;
        st.upper = pi.upper;
        st.width = pi.width;
        st.abs_error = std::abs(truth - pi.point);
        st.cum_cost = s.cost_history.at(q);
        t.steps.push_back(std::move(st));
    }
    return t;
}

/// Extracts model-ordered feature vectors from a table whose columns carry
/// the model's feature names (extra columns are ignored).
inline Matrix align_features(const DatasetTable& test, const DqoModel& m)
{
    Matrix X(test.X.rows(), static_cast<Eigen::Index>(m.dims()));
    for (std::size_t f = 0; f < m.dims(); ++f) {
        const auto src = test.find(m.specs[f].name);
        if (!src)
            throw std::invalid_argument("test data lacks model feature '" + m.specs[f].name + "'");
        X.col(static_cast<Eigen::Index>(f)) = test.X.col(static_cast<Eigen::Index>(*src));
    }
    return X;
}

/// Runs every (test row, orderer, lambda) combination, answering from the
/// hidden test values and starting from the model's free features.
/// Output is ordered by row, then orderer, then lambda.
inline std::vector<Trajectory> simulate(const DatasetTable& test, const DqoModel& m,
                                        const std::vector<const Orderer*>& orderers,
                                        const std::vector<double>& lambdas, double alpha)
{
    const Matrix X = align_features(test, m);
    const auto initial = m.free_set();
    std::vector<Trajectory> out;
    out.reserve(test.rows() * orderers.size() * lambdas.size());
    for (std::size_t i = 0; i < test.rows(); ++i) {
        const Vector x = X.row(static_cast<Eigen::Index>(i)).transpose();
        const double truth = test.y(static_cast<Eigen::Index>(i));
        const std::size_t row_id = test.row_ids.empty() ? i : test.row_ids[i];
        for (const auto* ord : orderers)
            for (double lambda : lambdas) {
                const auto s = run_dqo_all(m, x, initial, *ord, lambda, alpha, row_id);
                out.push_back(make_trajectory(m, s, truth, row_id, ord->name()));
            }
    }
    return out;
}

/// Unit-step left Riemann sums over steps 0..Q-1; the point after the last
/// question is excluded.
inline AucValues compute_auc(const Trajectory& t)
{
    AucValues a;
    for (std::size_t q = 0; q + 1 < t.steps.size(); ++q) {
        a.width_auc += t.steps[q].width;
        a.error_auc += t.steps[q].abs_error;
        a.cost_auc += t.steps[q].cum_cost;
    }
    return a;
}

/// Mean AUCs per (orderer, lambda), in order of first appearance.
inline std::vector<AucRow> summarize(const std::vector<Trajectory>& trajs)
{
    std::vector<AucRow> rows;
    std::map<std::pair<std::string, double>, std::size_t> slot;
    for (const auto& t : trajs) {
        auto key = std::make_pair(t.orderer, t.lambda);
        auto it = slot.find(key);
        if (it == slot.end()) {
            it = slot.emplace(key, rows.size()).first;
            rows.push_back(AucRow{t.orderer, t.lambda, 0, {}});
        }
        auto& r = rows[it->second];
        const auto a = compute_auc(t);
        r.rows += 1;
        r.mean.width_auc += a.width_auc;
        r.mean.error_auc += a.error_auc;
        r.mean.cost_auc += a.cost_auc;
    }
    for (auto& r : rows) {
        const double n = static_cast<double>(r.rows);
        r.mean.width_auc /= n;
        r.mean.error_auc /= n;
        r.mean.cost_auc /= n;
    }
    return rows;
}

/// counts(f, p) = number of trajectories that asked feature `feature_names[f]`
/// at position p (0-based).
inline Eigen::MatrixXi oracle_position_frequencies(const std::vector<Trajectory>& trajs,
                                                   const std::vector<std::string>& feature_names)
{
    std::size_t positions = 0;
    for (const auto& t : trajs)
        positions = std::max(positions, t.questions());
    Eigen::MatrixXi counts = Eigen::MatrixXi::Zero(static_cast<Eigen::Index>(feature_names.size()),
                                                   static_cast<Eigen::Index>(positions));
    std::map<std::string, Eigen::Index> index;
    for (std::size_t f = 0; f < feature_names.size(); ++f)
        index.emplace(feature_names[f], static_cast<Eigen::Index>(f));
    for (const auto& t : trajs)
        for (std::size_t q = 1; q < t.steps.size(); ++q) {
            auto it = index.find(t.steps[q].asked_feature);
            if (it == index.end())
                throw std::invalid_argument("unknown feature '" + t.steps[q].asked_feature + "' in trajectory");
            counts(it->second, static_cast<Eigen::Index>(q - 1)) += 1;
        }
    return counts;
}

// ---------------------------------------------------------------------------
// Files
// ---------------------------------------------------------------------------

inline const csv::Row& trajectory_header()
{
    static const csv::Row h{"row_id", "orderer", "lambda", "step", "asked_feature", "width", "abs_error", "cum_cost"};
    return h;
}

inline void write_trajectories(std::ostream& out, const std::vector<Trajectory>& trajs)
{
    csv::write_row(out, trajectory_header());
    for (const auto& t : trajs)
        for (const auto& s : t.steps)
            csv::write_row(out, {std::to_string(t.row_id), t.orderer, csv::format_double(t.lambda),
                                 std::to_string(s.step), s.asked_feature, csv::format_double(s.width),
                                 csv::format_double(s.abs_error), csv::format_double(s.cum_cost)});
}

inline std::vector<Trajectory> read_trajectories(const std::string& path)
{
    const auto records = csv::read_file(path);
    if (records.empty() || records.front() != trajectory_header())
        throw std::runtime_error(path + ": not a trajectory file");
    std::vector<Trajectory> out;
    for (std::size_t r = 1; r < records.size(); ++r) {
        const auto& rec = records[r];
        if (rec.size() == 1 && rec[0].empty())
            continue;
        if (rec.size() != 8)
            throw std::runtime_error(path + ": malformed record " + std::to_string(r + 1));
        double row_id = 0, lambda = 0, step = 0;
        TrajectoryStep s;
        if (!csv::parse_double(rec[0], row_id) || !csv::parse_double(rec[2], lambda) ||
            !csv::parse_double(rec[3], step) || !csv::parse_double(rec[5], s.width) ||
            !csv::parse_double(rec[6], s.abs_error) || !csv::parse_double(rec[7], s.cum_cost))
            throw std::runtime_error(path + ": non-numeric field in record " + std::to_string(r + 1));
        s.step = static_cast<std::size_t>(step);
        s.asked_feature = rec[4];
        if (s.step == 0) {
            Trajectory t;
            t.row_id = static_cast<std::size_t>(row_id);
            t.orderer = rec[1];
            t.lambda = lambda;
            out.push_back(std::move(t));
        } else if (out.empty() || out.back().steps.size() != s.step) {
            throw std::runtime_error(path + ": steps out of order at record " + std::to_string(r + 1));
        }
        out.back().steps.push_back(std::move(s));
    }
    return out;
}

inline void write_summary(std::ostream& out, const std::vector<AucRow>& rows)
{
    csv::write_row(out, {"orderer", "lambda", "rows", "width_auc", "error_auc", "cost_auc"});
    for (const auto& r : rows)
        csv::write_row(out, {r.orderer, csv::format_double(r.lambda), std::to_string(r.rows),
                             csv::format_double(r.mean.width_auc), csv::format_double(r.mean.error_auc),
                             csv::format_double(r.mean.cost_auc)});
}

inline void write_positions(std::ostream& out, const Eigen::MatrixXi& counts,
                            const std::vector<std::string>& feature_names)
{
    csv::Row header{"feature"};
    for (Eigen::Index p = 0; p < counts.cols(); ++p)
        header.push_back("pos_" + std::to_string(p + 1));
    csv::write_row(out, header);
    for (Eigen::Index f = 0; f < counts.rows(); ++f) {
        csv::Row row{feature_names[static_cast<std::size_t>(f)]};
        for (Eigen::Index p = 0; p < counts.cols(); ++p)
            row.push_back(std::to_string(counts(f, p)));
        csv::write_row(out, row);
    }
}

/// File name for one (orderer, lambda) combination.
inline std::string trajectory_file_name(const std::string& orderer, double lambda)
{
    return orderer + "_lambda" + csv::format_double(lambda) + ".csv";
}

} // namespace dqo

#endif // DQO_HARNESS_HPP
