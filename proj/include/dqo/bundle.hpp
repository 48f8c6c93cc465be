#ifndef DQO_BUNDLE_HPP
#define DQO_BUNDLE_HPP

// Training pipeline and the on-disk model bundle.
//
// Bundle file (JSON):
//   format          "dqo-model", version 1
//   target          target column name
//   features        [{name, kind, cost_tier, cost, levels?, prompt?, range, proportions,
//                     source_column}]   (model feature order)
//   model           regression block, see model_to_json
//   imputer         {k, center, scale, training_rows: [[...], ...]}
//   delta           kNN measurement error per feature given the free features
//   marginal_error  error of the training marginals per feature
//   selection       {ordered_features: [names], cv_errors, initial_error} or null
//   width_form      "weighted_variance" | "weighted_width"

#include "dqo/dataset.hpp"
#include "dqo/engine.hpp"
#include "dqo/imputation.hpp"
#include "dqo/regression.hpp"
#include "dqo/selection.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <fstream>
#include <string>
#include <vector>

namespace dqo {

struct TrainOptions {
    bool select = true;
    std::size_t max_features = kDefaultMaxFeatures;
    double min_improvement = 0.0;
    std::size_t k = kDefaultNeighbors;
    std::size_t max_levels = kDefaultMaxLevels;
    double alpha = kDefaultAlpha;
    WidthForm width_form = WidthForm::weighted_variance;
};

/// Selects features (free set plus forward selection), fits the regression
/// and prepares imputation tables. Everything is estimated from `train`.
inline DqoModel train_model(const DatasetTable& train, const TrainOptions& opt = {},
                            std::vector<std::string>* warnings = nullptr)
{
    std::vector<std::size_t> columns = train.free_set();
    std::vector<std::size_t> selected;
    std::optional<SelectionTrace> trace;
    if (opt.select) {
        trace = forward_select(train, opt.max_features, opt.min_improvement);
        selected = trace->ordered_features;
    } else {
        for (std::size_t f = 0; f < train.dims(); ++f)
            if (train.features[f].tier != CostTier::free)
                selected.push_back(f);
    }
    columns.insert(columns.end(), selected.begin(), selected.end());
    std::sort(columns.begin(), columns.end());

    const DatasetTable sub = train.select_features(columns);

    DqoModel m;
    m.target_name = train.target_name;
    m.width_form = opt.width_form;
    m.specs = compute_feature_stats(sub, opt.max_levels, warnings);
    m.model = fit_ols(sub.X, sub.y, opt.alpha);
    m.model.feature_ids = columns;
    m.imputer = KnnImputer(sub.X, m.specs, opt.k);
    m.delta = m.imputer.measurement_error(sub.free_set());
    m.marginal_error = m.imputer.measurement_error({});

    if (trace) {
        SelectionTrace local;
        local.initial_error = trace->initial_error;
        local.cv_errors = trace->cv_errors;
        for (auto f : trace->ordered_features)
            local.ordered_features.push_back(static_cast<std::size_t>(
                std::lower_bound(columns.begin(), columns.end(), f) - columns.begin()));
        m.selection = std::move(local);
    }
    m.validate();
    return m;
}

inline nlohmann::json bundle_to_json(const DqoModel& m)
{
    using nlohmann::json;
    auto vec = [](const Vector& v) { return std::vector<double>(v.data(), v.data() + v.size()); };

    json j;
    j["format"] = "dqo-model";
    j["version"] = 1;
    j["target"] = m.target_name;
    j["width_form"] = to_string(m.width_form);
    j["features"] = json::array();
    for (std::size_t f = 0; f < m.specs.size(); ++f) {
        const auto& s = m.specs[f];
        json jf{{"name", s.name},   {"kind", to_string(s.kind)}, {"cost_tier", to_string(s.tier)},
                {"cost", s.cost},   {"range", s.range},          {"proportions", s.proportions},
                {"source_column", f < m.model.feature_ids.size() ? m.model.feature_ids[f] : f}};
        if (!s.levels.empty())
            jf["levels"] = s.levels;
        if (!s.prompt.empty())
            jf["prompt"] = s.prompt;
        j["features"].push_back(std::move(jf));
    }
    j["model"] = model_to_json(m.model);

    const auto& X = m.imputer.data();
    json rows = json::array();
    for (Eigen::Index i = 0; i < X.rows(); ++i)
        rows.push_back(vec(X.row(i).transpose()));
    j["imputer"] = {{"k", m.imputer.config().k},
                    {"center", vec(m.imputer.config().center)},
                    {"scale", vec(m.imputer.config().scale)},
                    {"training_rows", std::move(rows)}};
    j["delta"] = vec(m.delta);
    j["marginal_error"] = vec(m.marginal_error);
    if (m.selection) {
        json names = json::array();
        for (auto f : m.selection->ordered_features)
            names.push_back(m.specs.at(f).name);
        j["selection"] = {{"ordered_features", std::move(names)},
                          {"cv_errors", m.selection->cv_errors},
                          {"initial_error", m.selection->initial_error}};
    } else {
        j["selection"] = nullptr;
    }
    return j;
}

inline DqoModel bundle_from_json(const nlohmann::json& j)
{
    if (j.value("format", std::string()) != "dqo-model")
        throw std::invalid_argument("not a dqo model bundle");
    if (j.value("version", 0) != 1)
        throw std::invalid_argument("unsupported model bundle version");
    auto vec = [](const nlohmann::json& a) {
        const auto v = a.get<std::vector<double>>();
        return Vector(Eigen::Map<const Vector>(v.data(), static_cast<Eigen::Index>(v.size())));
    };

    DqoModel m;
    m.target_name = j.at("target").get<std::string>();
    m.width_form = parse_width_form(j.value("width_form", std::string("weighted_variance")));
    for (const auto& jf : j.at("features")) {
        FeatureSpec s;
        s.id = m.specs.size();
        s.name = jf.at("name").get<std::string>();
        s.kind = parse_kind(jf.at("kind").get<std::string>());
        s.tier = parse_tier(jf.at("cost_tier").get<std::string>());
        s.cost = jf.at("cost").get<double>();
        s.range = jf.at("range").get<std::vector<double>>();
        s.proportions = jf.at("proportions").get<std::vector<double>>();
        if (jf.contains("levels"))
            s.levels = jf.at("levels").get<std::vector<double>>();
        if (jf.contains("prompt"))
            s.prompt = jf.at("prompt").get<std::string>();
        m.specs.push_back(std::move(s));
    }
    m.model = model_from_json(j.at("model"));

    const auto& ji = j.at("imputer");
    const auto& rows = ji.at("training_rows");
    const auto d = static_cast<Eigen::Index>(m.specs.size());
    Matrix X(static_cast<Eigen::Index>(rows.size()), d);
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const auto r = rows[i].get<std::vector<double>>();
        if (static_cast<Eigen::Index>(r.size()) != d)
            throw std::invalid_argument("model bundle: training row has wrong width");
        for (Eigen::Index c = 0; c < d; ++c)
            X(static_cast<Eigen::Index>(i), c) = r[static_cast<std::size_t>(c)];
    }
    ImputerConfig cfg;
    cfg.k = ji.at("k").get<std::size_t>();
    cfg.center = vec(ji.at("center"));
    cfg.scale = vec(ji.at("scale"));
    for (const auto& s : m.specs)
        cfg.discrete.push_back(s.is_discrete());
    m.imputer = KnnImputer(std::move(X), std::move(cfg));
    m.delta = vec(j.at("delta"));
    m.marginal_error = vec(j.at("marginal_error"));

    if (j.contains("selection") && !j.at("selection").is_null()) {
        const auto& js = j.at("selection");
        SelectionTrace t;
        for (const auto& n : js.at("ordered_features")) {
            auto f = m.find(n.get<std::string>());
            if (!f)
                throw std::invalid_argument("model bundle: selection names unknown feature");
            t.ordered_features.push_back(*f);
        }
        t.cv_errors = js.at("cv_errors").get<std::vector<double>>();
        t.initial_error = js.at("initial_error").get<double>();
        m.selection = std::move(t);
    }
    m.validate();
    return m;
}

inline void save_bundle(const DqoModel& m, const std::string& path)
{
    std::ofstream out(path);
    if (!out)
        throw std::runtime_error("cannot write " + path);
    out << bundle_to_json(m).dump() << "\n";
}

inline DqoModel load_bundle(const std::string& path)
{
    std::ifstream in(path);
    if (!in)
        throw std::runtime_error("cannot open model bundle " + path);
    nlohmann::json j;
    in >> j;
    return bundle_from_json(j);
}

/// Metadata describing the bundle's feature columns; used to load test CSVs.
inline Metadata bundle_metadata(const DqoModel& m)
{
    Metadata meta;
    meta.target = m.target_name;
    meta.features = m.specs;
    for (auto& s : meta.features) {
        // Test rows are validated against declared levels only.
        s.range.clear();
        s.proportions.clear();
    }
    return meta;
}

} // namespace dqo

#endif // DQO_BUNDLE_HPP
