#include <httplib.h>

#include <condition_variable>
#include <cstdlib>
#include <json.hpp>
#include <thread>

#include "rso/backend.hpp"
#include "rso/error.hpp"

namespace rso {

namespace {

class InFlightGate {
public:
    void set_cap(int cap) {
        std::lock_guard lock(mu_);
        cap_ = std::max(1, cap);
        cv_.notify_all();
    }
    int cap() const {
        std::lock_guard lock(mu_);
        return cap_;
    }
    void acquire() {
        std::unique_lock lock(mu_);
        cv_.wait(lock, [&] { return in_flight_ < cap_; });
        ++in_flight_;
    }
    void release() {
        std::lock_guard lock(mu_);
        --in_flight_;
        cv_.notify_one();
    }

private:
    mutable std::mutex mu_;
    std::condition_variable cv_;
    int cap_ = 8;
    int in_flight_ = 0;
};

InFlightGate& gate() {
    static InFlightGate g;
    return g;
}

struct GateHold {
    GateHold() { gate().acquire(); }
    ~GateHold() { gate().release(); }
    GateHold(const GateHold&) = delete;
    GateHold& operator=(const GateHold&) = delete;
};

std::string default_path(RemoteConfig::Protocol p) {
    return p == RemoteConfig::Protocol::ChatCompletions ? "/v1/chat/completions" : "/v1/completions";
}

}  // namespace

void set_max_in_flight_requests(int cap) { gate().set_cap(cap); }
int max_in_flight_requests() { return gate().cap(); }

std::string post_json_with_retry(const RemoteConfig& config, const std::string& path,
                                 const std::string& body, int* attempts_out) {
    httplib::Headers headers;
    if (!config.auth_env.empty()) {
        if (const char* token = std::getenv(config.auth_env.c_str()); token && *token) {
            headers.emplace("Authorization", std::string("Bearer ") + token);
        }
    }
    const int max_attempts = std::max(0, config.max_retries) + 1;
    std::string last_error;
    int attempts = 0;
    for (int attempt = 0; attempt < max_attempts; ++attempt) {
        if (attempt > 0) std::this_thread::sleep_for(config.retry_backoff * attempt);
        ++attempts;
        GateHold hold;
        httplib::Client client(config.base_url);
        const auto secs = config.timeout.count() / 1000;
        const auto usecs = (config.timeout.count() % 1000) * 1000;
        client.set_connection_timeout(secs, usecs);
        client.set_read_timeout(secs, usecs);
        client.set_write_timeout(secs, usecs);
        auto res = client.Post(path, headers, body, "application/json");
        if (!res) {
            last_error = "transport error: " + httplib::to_string(res.error());
            continue;
        }
        if (res->status == 200) {
            if (attempts_out) *attempts_out = attempts;
            return res->body;
        }
        last_error = "HTTP " + std::to_string(res->status);
        if (res->status != 429 && res->status < 500) break;
    }
    if (attempts_out) *attempts_out = attempts;
    throw ExpertUnavailable(config.base_url + path + " failed after " + std::to_string(attempts) +
                                " attempt(s): " + last_error,
                            attempts);
}

RemoteBackend::RemoteBackend(RemoteConfig config) : config_(std::move(config)) {
    if (config_.timeout.count() <= 0) throw ConfigError("timeout_ms", "must be positive");
    if (config_.max_retries < 0) throw ConfigError("max_retries", "must be >= 0");
    if (config_.model.empty()) throw ConfigError("model", "remote backend needs a model name");
    if (config_.path.empty()) config_.path = default_path(config_.protocol);
}

std::string RemoteBackend::complete(const ChatRequest& request) {
    using nlohmann::json;
    json body;
    body["model"] = config_.model;
    body["temperature"] = config_.temperature;
    body["max_tokens"] = config_.max_tokens;
    if (config_.protocol == RemoteConfig::Protocol::ChatCompletions) {
        body["messages"] = json::array();
        for (const auto& m : request.messages) body["messages"].push_back({{"role", m.role}, {"content", m.content}});
    } else {
        std::string prompt;
        for (const auto& m : request.messages) prompt += m.content + "\n";
        body["prompt"] = prompt;
    }
    const auto raw = post_json_with_retry(config_, config_.path, body.dump());
    json parsed = json::parse(raw, nullptr, false);
    if (parsed.is_discarded()) throw ExpertUnavailable("remote reply is not JSON", 1);
    try {
        const auto& choice = parsed.at("choices").at(0);
        if (config_.protocol == RemoteConfig::Protocol::ChatCompletions) {
            return choice.at("message").at("content").get<std::string>();
        }
        return choice.at("text").get<std::string>();
    } catch (const json::exception& e) {
        throw ExpertUnavailable(std::string("unexpected remote reply shape: ") + e.what(), 1);
    }
}

}  // namespace rso
