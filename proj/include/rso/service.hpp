#pragma once

// Live chat sessions over HTTP. Each session runs the normal session loop on
// its own thread with a LiveUser; clients long-poll for system messages.
//
//   POST   /v1/sessions                {persona?}  -> {session_id}
//   GET    /v1/sessions/{id}?wait_ms=N&since=K   -> {status, new_messages, outcome?}
//   POST   /v1/sessions/{id}/messages  {text}      -> {accepted: true}
//   DELETE /v1/sessions/{id}                       -> {closed: true}
//   GET    /v1/sessions/{id}/trace                 -> {session_id, status, turns}
//   GET    /healthz                                -> {ok: true}
//
// Errors are {"error": {"code", "message"}} with a 4xx/5xx status.

#include <chrono>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "rso/error.hpp"
#include "rso/records.hpp"
#include "rso/session.hpp"

namespace httplib {
class Server;
}

namespace rso {

enum class SessionStatus { AwaitingSystem, AwaitingUser, Closed };
std::string_view status_name(SessionStatus s);

/// An error to report to the client.
class ServiceError : public Error {
public:
    ServiceError(int http_status, std::string code, const std::string& message)
        : Error(message), status_(http_status), code_(std::move(code)) {}
    int http_status() const noexcept { return status_; }
    const std::string& code() const noexcept { return code_; }

private:
    int status_;
    std::string code_;
};

struct ChatMessageOut {
    std::string speaker;  // "system" or "user"
    std::string text;
    int turn = 0;
    std::optional<std::string> strategy_name;
};

struct PollResult {
    SessionStatus status = SessionStatus::AwaitingSystem;
    std::vector<ChatMessageOut> new_messages;
    /// Index to pass as `since` next time.
    std::size_t next = 0;
    std::optional<Json> outcome;
};

struct ServiceOptions {
    int max_sessions = 16;
    std::chrono::milliseconds reply_timeout = std::chrono::minutes(15);
    bool debug_strategy = false;
    /// Required as "Authorization: Bearer <token>" on /v1 routes when set.
    std::string auth_token;
    /// Closed sessions kept for /trace before the oldest are dropped.
    int retain_closed = 64;
    std::chrono::milliseconds max_wait = std::chrono::seconds(30);
};

class SessionService {
public:
    /// `params` is shared read-only by every session.
    SessionService(SessionConfig config, std::shared_ptr<const PolicyParams> params, ServiceOptions options);
    ~SessionService();

    SessionService(const SessionService&) = delete;
    SessionService& operator=(const SessionService&) = delete;

    std::string create(const std::string& persona = {});
    PollResult poll(const std::string& id, std::size_t since, std::chrono::milliseconds wait);
    void post_message(const std::string& id, const std::string& text);
    void close(const std::string& id);
    Json trace(const std::string& id);
    int live_sessions() const;

    /// Registers the routes on `server`.
    void mount(httplib::Server& server);

    /// Closes every session and joins their threads.
    void shutdown();

private:
    struct Live;
    std::shared_ptr<Live> find(const std::string& id) const;
    void run(std::shared_ptr<Live> live);
    void evict_closed();

    SessionConfig config_;
    std::shared_ptr<const PolicyParams> params_;
    ServiceOptions options_;
    mutable std::mutex mu_;
    std::vector<std::shared_ptr<Live>> sessions_;  // creation order
    std::uint64_t next_id_ = 0;
    bool stopping_ = false;
};

/// Maximum accepted message length in bytes.
inline constexpr std::size_t kMaxMessageBytes = 4000;

}  // namespace rso
