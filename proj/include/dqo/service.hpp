#ifndef DQO_SERVICE_HPP
#define DQO_SERVICE_HPP

// Stateful survey sessions over HTTP+JSON.
//
//   GET  /v1/models                     loaded model bundles
//   POST /v1/sessions                   {"model_id", "lambda", "alpha", "prefilled": {name: value}}
//   POST /v1/sessions/{id}/answers      {"feature_id": i, "value": v} or {"feature_id": i, "dont_know": true}
//   GET  /v1/sessions/{id}              full snapshot
//
// Errors are {"error": code, "message": text} with status 400 (malformed
// request), 404 (unknown model or session), 409 (not the pending question),
// 410 (session expired) or 422 (answer outside the allowed values).
// Numbers are written in shortest round-trip form (17 significant digits at most).

#include "dqo/engine.hpp"

#include <httplib.h>
#include <nlohmann/json.hpp>

#include <chrono>
#include <cstdio>
#include <map>
#include <memory>
#include <mutex>
#include <random>
#include <shared_mutex>
#include <string>

namespace dqo {

struct ServiceResponse {
    int status = 200;
    nlohmann::json body;
};

class SurveyService {
public:
    using Clock = std::chrono::system_clock;

    explicit SurveyService(std::chrono::seconds ttl = std::chrono::hours(1)) : ttl_(ttl) {}

    void add_model(const std::string& model_id, std::shared_ptr<const DqoModel> model)
    {
        model->validate();
        std::unique_lock lock(mutex_);
        models_[model_id] = std::move(model);
    }

    std::size_t live_sessions() const
    {
        std::shared_lock lock(mutex_);
        return sessions_.size();
    }

    ServiceResponse list_models() const
    {
        nlohmann::json out = nlohmann::json::array();
        std::shared_lock lock(mutex_);
        for (const auto& [id, m] : models_) {
            nlohmann::json features = nlohmann::json::array();
            for (std::size_t f = 0; f < m->dims(); ++f)
                features.push_back(question_json(*m, f));
            nlohmann::json free = nlohmann::json::array();
            for (auto f : m->free_set())
                free.push_back(m->specs[f].name);
            out.push_back({{"model_id", id},
                           {"target", m->target_name},
                           {"alpha", m->model.alpha_default},
                           {"features", std::move(features)},
                           {"free_set", std::move(free)}});
        }
        return {200, {{"models", std::move(out)}}};
    }

    ServiceResponse create_session(const nlohmann::json& req)
    {
        if (!req.is_object())
            return error(400, "bad_request", "request body must be a JSON object");
        std::shared_ptr<const DqoModel> model;
        std::string model_id;
        {
            std::shared_lock lock(mutex_);
            if (req.contains("model_id")) {
                if (!req["model_id"].is_string())
                    return error(400, "bad_request", "model_id must be a string");
                model_id = req["model_id"].get<std::string>();
            } else if (models_.size() == 1) {
                model_id = models_.begin()->first;
            } else {
                return error(400, "bad_request", "model_id is required");
            }
            auto it = models_.find(model_id);
            if (it == models_.end())
                return error(404, "unknown_model", "no model '" + model_id + "'");
            model = it->second;
        }

        double lambda = 0.0;
        double alpha = model->model.alpha_default;
        std::map<std::size_t, double> prefilled;
        try {
            if (req.contains("lambda"))
                lambda = req.at("lambda").get<double>();
            if (req.contains("alpha"))
                alpha = req.at("alpha").get<double>();
            if (req.contains("prefilled")) {
                if (!req["prefilled"].is_object())
                    return error(400, "bad_request", "prefilled must map feature names to values");
                for (const auto& [name, v] : req["prefilled"].items()) {
                    auto f = model->find(name);
                    if (!f)
                        return error(422, "invalid_prefilled", "unknown feature '" + name + "'");
                    if (!v.is_number())
                        return error(422, "invalid_prefilled", "value for '" + name + "' must be a number");
                    prefilled[*f] = v.get<double>();
                }
            }
        } catch (const nlohmann::json::exception& e) {
            return error(400, "bad_request", e.what());
        }
        if (!(lambda >= 0.0) || !std::isfinite(lambda))
            return error(400, "bad_request", "lambda must be a non-negative number");
        if (!(alpha > 0.0 && alpha < 1.0))
            return error(400, "bad_request", "alpha must lie in (0, 1)");

        auto entry = std::make_shared<Entry>();
        entry->model_id = model_id;
        entry->model = model;
        entry->created = Clock::now();
        entry->expires = entry->created + ttl_;
        try {
            entry->state = start_session(*model, prefilled, lambda, alpha);
        } catch (const AnswerError& e) {
            return error(422, "invalid_prefilled", e.what());
        }
        advance(*entry);

        const std::string id = new_session_id();
        {
            std::unique_lock lock(mutex_);
            purge_expired_locked();
            sessions_[id] = entry;
        }
        std::lock_guard guard(entry->mutex);
        return {201, descriptor(id, *entry)};
    }

    ServiceResponse submit_answer(const std::string& session_id, const nlohmann::json& req)
    {
        std::shared_ptr<Entry> entry;
        if (auto r = lookup(session_id, entry))
            return *r;
        if (!req.is_object() || !req.contains("feature_id") || !req["feature_id"].is_number_integer())
            return error(400, "bad_request", "feature_id (integer) is required");
        const bool dont_know = req.value("dont_know", false);
        std::optional<double> value;
        if (!dont_know) {
            if (!req.contains("value") || !req["value"].is_number())
                return error(400, "bad_request", "value (number) or dont_know=true is required");
            value = req["value"].get<double>();
        }
        const auto fid = req["feature_id"].get<long long>();

        std::lock_guard guard(entry->mutex);
        auto& s = entry->state;
        const auto& m = *entry->model;
        if (fid < 0 || static_cast<std::size_t>(fid) >= m.dims())
            return error(409, "not_pending", "feature_id " + std::to_string(fid) + " is not the pending question");
        const auto f = static_cast<std::size_t>(fid);
        if (!s.pending || *s.pending != f)
            return error(409, "not_pending",
                         "feature '" + m.specs[f].name + "' is not the pending question" +
                             (s.pending ? " (pending: '" + m.specs[*s.pending].name + "')" : " (session complete)"));
        try {
            apply_answer(m, s, f, value);
        } catch (const AnswerError& e) {
            auto r = error(422, "invalid_value", e.what());
            r.body["allowed"] = question_json(m, f).at("range");
            return r;
        } catch (const SessionError& e) {
            return error(409, "not_pending", e.what());
        }
        advance(*entry);
        return {200, descriptor(session_id, *entry)};
    }

    ServiceResponse get_session(const std::string& session_id)
    {
        std::shared_ptr<Entry> entry;
        if (auto r = lookup(session_id, entry))
            return *r;
        std::lock_guard guard(entry->mutex);
        return {200, snapshot(session_id, *entry)};
    }

    /// Registers the routes on an httplib server.
    void mount(httplib::Server& server)
    {
        auto reply = [](httplib::Response& res, const ServiceResponse& r) {
            res.status = r.status;
            res.set_content(r.body.dump(), "application/json");
        };
        auto parse = [](const httplib::Request& req, nlohmann::json& out) {
            if (req.body.empty()) {
                out = nlohmann::json::object();
                return true;
            }
            out = nlohmann::json::parse(req.body, nullptr, false);
            return !out.is_discarded();
        };
        server.Get("/v1/models", [this, reply](const httplib::Request&, httplib::Response& res) {
            reply(res, list_models());
        });
        server.Post("/v1/sessions", [this, reply, parse](const httplib::Request& req, httplib::Response& res) {
            nlohmann::json body;
            if (!parse(req, body))
                return reply(res, error(400, "bad_request", "malformed JSON"));
            reply(res, create_session(body));
        });
        server.Post(R"(/v1/sessions/([0-9a-f]+)/answers)",
                    [this, reply, parse](const httplib::Request& req, httplib::Response& res) {
                        nlohmann::json body;
                        if (!parse(req, body))
                            return reply(res, error(400, "bad_request", "malformed JSON"));
                        reply(res, submit_answer(req.matches[1], body));
                    });
        server.Get(R"(/v1/sessions/([0-9a-f]+))", [this, reply](const httplib::Request& req, httplib::Response& res) {
            reply(res, get_session(req.matches[1]));
        });
    }

private:
    struct Entry {
        std::mutex mutex;
        std::string model_id;
        std::shared_ptr<const DqoModel> model;
        SessionState state;
        Clock::time_point created;
        Clock::time_point expires;
    };

    static ServiceResponse error(int status, const std::string& code, const std::string& message)
    {
        return {status, {{"error", code}, {"message", message}}};
    }

    static std::string new_session_id()
    {
        static thread_local std::random_device rd;
        char buf[33];
        std::uint64_t hi = (static_cast<std::uint64_t>(rd()) << 32) ^ rd();
        std::uint64_t lo = (static_cast<std::uint64_t>(rd()) << 32) ^ rd();
        std::snprintf(buf, sizeof buf, "%016llx%016llx", static_cast<unsigned long long>(hi),
                      static_cast<unsigned long long>(lo));
        return buf;
    }

    std::optional<ServiceResponse> lookup(const std::string& id, std::shared_ptr<Entry>& entry)
    {
        std::unique_lock lock(mutex_);
        auto it = sessions_.find(id);
        if (it == sessions_.end())
            return error(404, "unknown_session", "no session '" + id + "'");
        if (Clock::now() >= it->second->expires) {
            sessions_.erase(it);
            return error(410, "session_expired", "session '" + id + "' has expired");
        }
        entry = it->second;
        return std::nullopt;
    }

    void purge_expired_locked()
    {
        const auto now = Clock::now();
        std::erase_if(sessions_, [&](const auto& kv) { return now >= kv.second->expires; });
    }

    /// Chooses and records the next question, if any remain.
    static void advance(Entry& e)
    {
        if (e.state.complete())
            return;
        const DqoOrderer orderer(e.model->width_form);
        set_pending(e.state, orderer.choose(*e.model, e.state, RowContext{}));
    }

    static nlohmann::json interval_json(const PredictionInterval& pi)
    {
        return {{"point", pi.point}, {"lower", pi.lower}, {"upper", pi.upper}, {"width", pi.width}, {"alpha", pi.alpha}};
    }

    static nlohmann::json question_json(const DqoModel& m, std::size_t f)
    {
        const auto& s = m.specs[f];
        // Discrete: the allowed codes. Continuous: the representative outcome
        // values, a hint only since any real is accepted.
        const nlohmann::json range = s.is_discrete() && !s.levels.empty() ? s.levels : s.range;
        return {{"feature_id", f}, {"name", s.name},           {"prompt", s.question_text()}, {"kind", to_string(s.kind)},
                {"range", range},  {"cost_tier", to_string(s.tier)}, {"cost", s.cost}};
    }

    static long long unix_seconds(Clock::time_point t)
    {
        return std::chrono::duration_cast<std::chrono::seconds>(t.time_since_epoch()).count();
    }

    static nlohmann::json descriptor(const std::string& id, const Entry& e)
    {
        const auto& s = e.state;
        std::size_t answered = 0;
        for (auto o : s.outcomes)
            answered += o == StepOutcome::answered;
        nlohmann::json j{{"session_id", id},
                         {"model_id", e.model_id},
                         {"lambda", s.lambda},
                         {"alpha", s.alpha},
                         {"complete", s.complete()},
                         {"prediction", interval_json(s.current())},
                         {"cumulative_cost", s.cumulative_cost},
                         {"questions_asked", s.ordering.size()},
                         {"questions_answered", answered},
                         {"questions_remaining", s.candidates().size()},
                         {"created_at", unix_seconds(e.created)},
                         {"expires_at", unix_seconds(e.expires)}};
        j["question"] = s.pending ? question_json(*e.model, *s.pending) : nlohmann::json(nullptr);
        return j;
    }

    static nlohmann::json snapshot(const std::string& id, const Entry& e)
    {
        nlohmann::json j = descriptor(id, e);
        const auto& s = e.state;
        const auto& m = *e.model;
        nlohmann::json ordering = nlohmann::json::array();
        for (std::size_t q = 0; q < s.ordering.size(); ++q) {
            const auto f = s.ordering[q];
            const bool answered = s.outcomes[q] == StepOutcome::answered;
            ordering.push_back({{"feature_id", f},
                                {"name", m.specs[f].name},
                                {"outcome", answered ? "answered" : "dont_know"},
                                {"value", answered ? nlohmann::json(s.answers(static_cast<Eigen::Index>(f)))
                                                   : nlohmann::json(nullptr)}});
        }
        nlohmann::json preds = nlohmann::json::array();
        for (std::size_t q = 0; q < s.predictions.size(); ++q) {
            auto p = interval_json(s.predictions[q]);
            p["step"] = q;
            p["cum_cost"] = s.cost_history[q];
            preds.push_back(std::move(p));
        }
        nlohmann::json known = nlohmann::json::object();
        for (std::size_t f = 0; f < s.dims(); ++f)
            if (s.known[f])
                known[m.specs[f].name] = s.answers(static_cast<Eigen::Index>(f));
        nlohmann::json flagged = nlohmann::json::array();
        for (auto f : s.out_of_range)
            flagged.push_back(m.specs[f].name);
        j["ordering"] = std::move(ordering);
        j["predictions"] = std::move(preds);
        j["known"] = std::move(known);
        j["out_of_range"] = std::move(flagged);
        return j;
    }

    std::chrono::seconds ttl_;
    mutable std::shared_mutex mutex_;
    std::map<std::string, std::shared_ptr<const DqoModel>> models_;
    std::map<std::string, std::shared_ptr<Entry>> sessions_;
};

} // namespace dqo

#endif // DQO_SERVICE_HPP
