#include "rso/service.hpp"

#include <httplib.h>

#include <charconv>
#include <random>
#include <thread>

#include "rso/error.hpp"
#include "rso/rng.hpp"
#include "rso/text.hpp"

namespace rso {

std::string_view status_name(SessionStatus s) {
    switch (s) {
        case SessionStatus::AwaitingSystem: return "AwaitingSystem";
        case SessionStatus::AwaitingUser: return "AwaitingUser";
        case SessionStatus::Closed: return "Closed";
    }
    return "?";
}

struct SessionService::Live {
    std::string id;
    std::string persona;
    std::uint64_t seed = 0;
    std::shared_ptr<LiveUser> user;
    std::thread thread;

    std::mutex mu;
    std::condition_variable cv;
    SessionStatus status = SessionStatus::AwaitingSystem;
    std::vector<ChatMessageOut> messages;
    std::vector<TurnTrace> turns;
    std::optional<Json> outcome;
    /// The session thread has returned.
    bool done = false;

    /// Caller holds `mu`.
    void finish(Json why) {
        if (status == SessionStatus::Closed) return;
        status = SessionStatus::Closed;
        outcome = std::move(why);
        cv.notify_all();
    }
};

SessionService::SessionService(SessionConfig config, std::shared_ptr<const PolicyParams> params,
                               ServiceOptions options)
    : config_(std::move(config)), params_(std::move(params)), options_(std::move(options)) {
    if (!params_) throw PreconditionError("service needs policy parameters");
    if (options_.max_sessions < 1) throw ConfigError("service.max_sessions", "must be >= 1");
    config_.validate();
}

SessionService::~SessionService() { shutdown(); }

void SessionService::shutdown() {
    std::vector<std::shared_ptr<Live>> all;
    {
        std::lock_guard lock(mu_);
        stopping_ = true;
        all = sessions_;
    }
    for (auto& s : all) s->user->close();
    for (auto& s : all) {
        if (s->thread.joinable()) s->thread.join();
    }
}

int SessionService::live_sessions() const {
    std::lock_guard lock(mu_);
    int n = 0;
    for (const auto& s : sessions_) {
        std::lock_guard l(s->mu);
        n += s->status != SessionStatus::Closed;
    }
    return n;
}

std::shared_ptr<SessionService::Live> SessionService::find(const std::string& id) const {
    std::lock_guard lock(mu_);
    for (const auto& s : sessions_) {
        if (s->id == id) return s;
    }
    throw ServiceError(404, "not_found", "no session " + id);
}

void SessionService::evict_closed() {
    // caller holds mu_
    int closed = 0;
    for (const auto& s : sessions_) {
        std::lock_guard l(s->mu);
        closed += s->status == SessionStatus::Closed;
    }
    for (auto it = sessions_.begin(); it != sessions_.end() && closed > options_.retain_closed;) {
        bool drop = false;
        {
            std::lock_guard l((*it)->mu);
            drop = (*it)->status == SessionStatus::Closed && (*it)->done;
        }
        if (drop) {
            if ((*it)->thread.joinable()) (*it)->thread.join();
            it = sessions_.erase(it);
            --closed;
        } else {
            ++it;
        }
    }
}

std::string SessionService::create(const std::string& persona) {
    std::lock_guard lock(mu_);
    if (stopping_) throw ServiceError(503, "shutting_down", "service is shutting down");
    int live = 0;
    for (const auto& s : sessions_) {
        std::lock_guard l(s->mu);
        live += s->status != SessionStatus::Closed;
    }
    if (live >= options_.max_sessions) {
        throw ServiceError(429, "session_cap",
                           "live session limit reached (" + std::to_string(options_.max_sessions) + ")");
    }
    evict_closed();

    auto s = std::make_shared<Live>();
    const auto n = next_id_++;
    std::random_device rd;
    char suffix[17];
    std::snprintf(suffix, sizeof suffix, "%08x%08x", rd(), rd());
    s->id = "s" + std::to_string(n) + "-" + suffix;
    s->persona = persona;
    s->seed = derive_seed(config_.rng_seed, n);
    std::weak_ptr<Live> weak = s;
    const bool debug = options_.debug_strategy;
    const auto catalog = config_.catalog;
    s->user = std::make_shared<LiveUser>(options_.reply_timeout, [weak, debug, catalog](const DialogueState& st) {
        auto live = weak.lock();
        if (!live) return;
        std::lock_guard l(live->mu);
        if (live->status == SessionStatus::Closed) return;
        ChatMessageOut m;
        m.speaker = "system";
        m.text = st.last_system_text().value_or("");
        m.turn = st.history.empty() ? 0 : st.history.back().turn_index;
        if (debug && st.last_strategy) m.strategy_name = catalog->at(*st.last_strategy).name;
        live->messages.push_back(std::move(m));
        live->status = SessionStatus::AwaitingUser;
        live->cv.notify_all();
    });
    sessions_.push_back(s);
    s->thread = std::thread([this, s] { run(s); });
    return s->id;
}

void SessionService::run(std::shared_ptr<Live> live) {
    SessionConfig c = config_;
    c.observer = nullptr;
    c.on_turn = [live](const TurnTrace& trace, const DialogueState&) {
        std::lock_guard l(live->mu);
        live->turns.push_back(trace);
        if (live->status != SessionStatus::Closed && !trace.record.terminated && trace.user_reply) {
            live->status = SessionStatus::AwaitingSystem;
        }
    };
    if (!live->persona.empty()) {
        const auto base = c.pinned_context.value_or("");
        c.pinned_context = (base.empty() ? "" : base + "\n") + "USER PERSONA: " + live->persona;
    }
    Json why;
    try {
        const auto ep = run_session(c, *params_, *live->user, live->seed, live->id);
        if (ep.trajectory.outcome.accepted()) {
            why = Json{{"kind", "accepted"}, {"turn", ep.trajectory.outcome.turn}};
        } else if (ep.abandoned) {
            why = Json{{"kind", live->user->closed() ? "closed" : "timeout"}};
        } else {
            why = Json{{"kind", "turn_cap"}};
        }
    } catch (const std::exception& e) {
        why = Json{{"kind", "error"}, {"message", e.what()}};
    }
    live->user->close();
    std::lock_guard l(live->mu);
    live->finish(std::move(why));
    live->done = true;
}

PollResult SessionService::poll(const std::string& id, std::size_t since, std::chrono::milliseconds wait) {
    auto s = find(id);
    wait = std::clamp(wait, std::chrono::milliseconds(0), options_.max_wait);
    std::unique_lock l(s->mu);
    s->cv.wait_for(l, wait, [&] { return s->messages.size() > since || s->status == SessionStatus::Closed; });
    PollResult r;
    r.status = s->status;
    for (std::size_t i = std::min(since, s->messages.size()); i < s->messages.size(); ++i) {
        r.new_messages.push_back(s->messages[i]);
    }
    r.next = s->messages.size();
    r.outcome = s->outcome;
    return r;
}

void SessionService::post_message(const std::string& id, const std::string& raw) {
    auto s = find(id);
    const auto text = text::trim(raw);
    if (text.empty()) throw ServiceError(400, "empty_text", "text must not be empty");
    if (text.size() > kMaxMessageBytes) {
        throw ServiceError(413, "text_too_long", "text exceeds " + std::to_string(kMaxMessageBytes) + " bytes");
    }
    std::lock_guard l(s->mu);
    if (s->status == SessionStatus::Closed) throw ServiceError(409, "session_closed", "session is closed");
    if (s->status != SessionStatus::AwaitingUser) {
        throw ServiceError(409, "not_your_turn", "the system has not replied yet");
    }
    const int turn = s->messages.empty() ? 0 : s->messages.back().turn;
    if (!s->user->push(text)) throw ServiceError(409, "session_closed", "session is closed");
    s->messages.push_back({"user", text, turn, std::nullopt});
    s->status = SessionStatus::AwaitingSystem;
    s->cv.notify_all();
}

void SessionService::close(const std::string& id) {
    auto s = find(id);
    s->user->close();
    std::lock_guard l(s->mu);
    s->finish(Json{{"kind", "closed"}});
}

Json SessionService::trace(const std::string& id) {
    auto s = find(id);
    std::lock_guard l(s->mu);
    Json turns = Json::array();
    for (const auto& t : s->turns) turns.push_back(turn_to_json(t, *config_.catalog));
    return Json{{"session_id", s->id}, {"status", status_name(s->status)}, {"turns", turns}};
}

// ---------------------------------------------------------------- HTTP

namespace {

void send_json(httplib::Response& res, int status, const Json& body) {
    res.status = status;
    res.set_content(body.dump(), "application/json");
}

void send_error(httplib::Response& res, int status, const std::string& code, const std::string& message) {
    send_json(res, status, Json{{"error", {{"code", code}, {"message", message}}}});
}

/// Non-negative integer query parameter, or `fallback` when absent.
long long int_param(const httplib::Request& req, const char* name, long long fallback) {
    if (!req.has_param(name)) return fallback;
    const auto v = req.get_param_value(name);
    long long out = 0;
    const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc() || ptr != v.data() + v.size() || out < 0) {
        throw ServiceError(400, "bad_parameter", std::string(name) + " must be a non-negative integer");
    }
    return out;
}

/// Parses an optional JSON object body.
Json object_body(const httplib::Request& req, bool required) {
    if (text::trim(req.body).empty()) {
        if (required) throw ServiceError(400, "bad_body", "expected a JSON object body");
        return Json::object();
    }
    auto j = Json::parse(req.body, nullptr, false);
    if (j.is_discarded() || !j.is_object()) throw ServiceError(400, "bad_body", "body is not a JSON object");
    return j;
}

Json message_json(const ChatMessageOut& m) {
    Json j{{"speaker", m.speaker}, {"text", m.text}, {"turn", m.turn}};
    if (m.strategy_name) j["strategy_name"] = *m.strategy_name;
    return j;
}

}  // namespace

void SessionService::mount(httplib::Server& server) {
    const auto guarded = [this](auto handler) {
        return [this, handler](const httplib::Request& req, httplib::Response& res) {
            try {
                if (!options_.auth_token.empty() &&
                    req.get_header_value("Authorization") != "Bearer " + options_.auth_token) {
                    throw ServiceError(401, "unauthorized", "missing or wrong bearer token");
                }
                handler(req, res);
            } catch (const ServiceError& e) {
                send_error(res, e.http_status(), e.code(), e.what());
            } catch (const std::exception& e) {
                send_error(res, 500, "internal", e.what());
            }
        };
    };

    server.Get("/healthz", [this](const httplib::Request&, httplib::Response& res) {
        send_json(res, 200, Json{{"ok", true}, {"live_sessions", live_sessions()}});
    });

    server.Post("/v1/sessions", guarded([this](const httplib::Request& req, httplib::Response& res) {
        const auto body = object_body(req, false);
        std::string persona;
        if (body.contains("persona") && !body["persona"].is_null()) {
            if (!body["persona"].is_string()) throw ServiceError(400, "bad_body", "persona must be a string");
            persona = body["persona"].get<std::string>();
            if (persona.size() > kMaxMessageBytes) throw ServiceError(413, "persona_too_long", "persona is too long");
        }
        send_json(res, 201, Json{{"session_id", create(persona)}});
    }));

    server.Get(R"(/v1/sessions/([^/]+))", guarded([this](const httplib::Request& req, httplib::Response& res) {
        const auto wait = int_param(req, "wait_ms", 0);
        const auto since = int_param(req, "since", 0);
        const auto r = poll(req.matches[1], static_cast<std::size_t>(since),
                            std::chrono::milliseconds(std::min<long long>(wait, options_.max_wait.count())));
        Json msgs = Json::array();
        for (const auto& m : r.new_messages) msgs.push_back(message_json(m));
        Json body{{"status", status_name(r.status)}, {"new_messages", msgs}, {"next", r.next}};
        if (r.outcome) body["outcome"] = *r.outcome;
        send_json(res, 200, body);
    }));

    server.Post(R"(/v1/sessions/([^/]+)/messages)",
                guarded([this](const httplib::Request& req, httplib::Response& res) {
                    const auto body = object_body(req, true);
                    if (!body.contains("text") || !body["text"].is_string()) {
                        throw ServiceError(400, "bad_body", "text must be a string");
                    }
                    post_message(req.matches[1], body["text"].get<std::string>());
                    send_json(res, 202, Json{{"accepted", true}});
                }));

    server.Delete(R"(/v1/sessions/([^/]+))", guarded([this](const httplib::Request& req, httplib::Response& res) {
        close(req.matches[1]);
        send_json(res, 200, Json{{"closed", true}});
    }));

    server.Get(R"(/v1/sessions/([^/]+)/trace)", guarded([this](const httplib::Request& req, httplib::Response& res) {
        send_json(res, 200, trace(req.matches[1]));
    }));

    server.set_error_handler([](const httplib::Request&, httplib::Response& res) {
        if (res.body.empty()) {
            send_error(res, res.status, res.status == 404 ? "not_found" : "http_error", httplib::status_message(res.status));
        }
    });
    server.set_exception_handler([](const httplib::Request&, httplib::Response& res, std::exception_ptr) {
        send_error(res, 500, "internal", "unhandled error");
    });
}

}  // namespace rso
