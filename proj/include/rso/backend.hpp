#pragma once

#include <chrono>
#include <cstdint>
#include <functional>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

#include "rso/prompts.hpp"

namespace rso {

struct ChatMessage {
    std::string role;
    std::string content;
};

/// One expert call. `inputs` carries the named template inputs the prompt was
/// rendered from; remote backends ignore them, mocks key on them.
struct ChatRequest {
    std::string expert;
    std::vector<ChatMessage> messages;
    PromptInputs inputs;
    double temperature = 0.7;
    int max_tokens = 512;
    int sample_index = 0;
};

/// Thread-safe ordered log of expert invocations, shared between mocks.
class CallLog {
public:
    void record(std::string event);
    std::vector<std::string> events() const;
    void clear();

private:
    mutable std::mutex mu_;
    std::vector<std::string> events_;
};

/// A text-in/text-out expert service.
class ExpertBackend {
public:
    virtual ~ExpertBackend() = default;

    /// Throws ExpertUnavailable once transport retries are exhausted.
    virtual std::string complete(const ChatRequest& request) = 0;

    /// Whether `complete` may be called from several threads at once.
    virtual bool concurrent() const { return false; }
};

using BackendPtr = std::shared_ptr<ExpertBackend>;

// ---------------------------------------------------------------- mocks

/// Deterministic scripted backend. The responder sees the request, the
/// seed and the per-backend call counter.
class MockBackend final : public ExpertBackend {
public:
    using Responder = std::function<std::string(const ChatRequest&, std::uint64_t seed, std::uint64_t call)>;

    MockBackend(Responder responder, std::uint64_t seed = 0, std::shared_ptr<CallLog> log = nullptr);

    std::string complete(const ChatRequest& request) override;

    std::uint64_t calls() const;
    /// Prompts received so far, in call order.
    std::vector<ChatRequest> requests() const;
    /// Training runs turn this off to keep memory flat.
    void keep_requests(bool keep);

private:
    Responder responder_;
    std::uint64_t seed_;
    std::shared_ptr<CallLog> log_;
    mutable std::mutex mu_;
    std::uint64_t calls_ = 0;
    std::vector<ChatRequest> requests_;
    bool keep_requests_ = true;
};

namespace mock {

/// Always the same reply.
MockBackend::Responder constant(std::string reply);

/// Replies in order, repeating the last one once exhausted.
MockBackend::Responder sequence(std::vector<std::string> replies);

struct Rule {
    std::string contains;  // case-insensitive substring
    std::string reply;
};

/// First rule whose `contains` occurs in inputs[field] (or in the full prompt
/// when field is empty) wins; otherwise `fallback`.
MockBackend::Responder rules(std::string field, std::vector<Rule> rules, std::string fallback);

/// Renders `format` against the request inputs, e.g. "[{strategy_name}] ...".
/// Additional inputs available: {top_entity} (first line of {entities}).
MockBackend::Responder templated(std::string format);

/// Builds a labeled-section preference reply from keywords found in the
/// user's lines of inputs["transcript"].
MockBackend::Responder keyword_preference(std::vector<std::string> keywords);

/// Integer score in [lo, hi] drawn from a hash of (seed, prompt, sample).
MockBackend::Responder random_score(int lo, int hi);

/// Returns the content of the last message.
MockBackend::Responder echo();

/// Simulated-user stand-in. Accepts when the latest system line mentions
/// inputs["target_item"]; otherwise accepts a marked [[item]] about one time
/// in `accept_one_in`, and else answers with a preference phrase. Draws hash
/// the prompt, so replies do not depend on call order.
MockBackend::Responder persona_user(int accept_one_in = 4);

/// Rewarder stand-in: "5" when the latest user line says they will watch
/// something, else a prompt-hashed score in [lo, hi].
MockBackend::Responder acceptance_judge(int lo = 1, int hi = 3);

}  // namespace mock

// ---------------------------------------------------------------- remote

struct RemoteConfig {
    enum class Protocol { ChatCompletions, Completions };
    std::string base_url = "http://127.0.0.1:8000";
    std::string path;  // default derived from protocol
    std::string model;
    /// Name of the environment variable holding the bearer token.
    std::string auth_env;
    Protocol protocol = Protocol::ChatCompletions;
    double temperature = 0.7;
    int max_tokens = 512;
    std::chrono::milliseconds timeout{30000};
    int max_retries = 3;
    std::chrono::milliseconds retry_backoff{250};
};

/// POSTs a JSON body and returns the parsed response body, retrying on
/// transport errors, 429 and 5xx. Shares the process-wide in-flight cap.
std::string post_json_with_retry(const RemoteConfig& config, const std::string& path,
                                 const std::string& body, int* attempts = nullptr);

/// Chat-completions (or single-completion) HTTP backend.
class RemoteBackend final : public ExpertBackend {
public:
    explicit RemoteBackend(RemoteConfig config);

    std::string complete(const ChatRequest& request) override;
    bool concurrent() const override { return true; }

    const RemoteConfig& config() const noexcept { return config_; }

private:
    RemoteConfig config_;
};

/// Process-wide cap on concurrent remote requests (default 8).
void set_max_in_flight_requests(int cap);
int max_in_flight_requests();

}  // namespace rso
