#pragma once

#include <atomic>
#include <condition_variable>
#include <cstdlib>
#include <iostream>
#include <mutex>
#include <string>
#include <vector>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "dtot/backend.hpp"
#include "dtot/errors.hpp"

namespace dtot {

struct HttpBackendConfig {
    std::string base_url;   // e.g. "http://localhost:8000"
    std::string model;
    std::string auth_env;   // environment variable holding the bearer token
    BackendKind kind = BackendKind::BlackBox;
    int timeout_ms = 30000;
    int max_in_flight = 4;
    bool verbose = false;   // log redacted requests/responses to stderr

    /// FirstToken scores a single-token verbalizer from the top alternatives
    /// of the first generated token. Echo scores an arbitrary continuation by
    /// replaying prompt+continuation through a completions endpoint that
    /// returns prompt logprobs.
    enum class LogprobMode { FirstToken, Echo };
    LogprobMode logprob_mode = LogprobMode::FirstToken;
};

/// Chat-completions client serving both backend kinds; the kind is declared
/// in config, not sniffed. Calls are independent and a counting gate bounds
/// the number of requests in flight.
class HttpBackend : public Backend {
public:
    explicit HttpBackend(HttpBackendConfig cfg) : cfg_(std::move(cfg)) {
        if (cfg_.base_url.empty()) throw ValidationError("http backend needs a base URL");
        if (cfg_.max_in_flight < 1) throw ValidationError("max_in_flight must be >= 1");
        if (!cfg_.auth_env.empty()) {
            const char* token = std::getenv(cfg_.auth_env.c_str());
            if (token != nullptr) token_ = token;
        }
    }

    BackendKind kind() const override { return cfg_.kind; }

    ModelResponse complete(const CompletionCall& call) override {
        nlohmann::json body{
            {"model", cfg_.model},
            {"messages", nlohmann::json::array({nlohmann::json{
                             {"role", "user"}, {"content", call.prompt_text}}})},
            {"temperature", call.decoding.temperature},
            {"max_tokens", call.decoding.max_tokens},
        };
        bool want_logprobs =
            call.decoding.request_logprobs || cfg_.kind == BackendKind::WhiteBox;
        if (want_logprobs) {
            body["logprobs"] = true;
            body["top_logprobs"] = call.decoding.top_logprobs;
        }
        nlohmann::json reply = post_json("/v1/chat/completions", body);
        const auto& choice = first_choice(reply);
        std::string content = choice.at("message").at("content").get<std::string>();
        ModelResponse response = parse_response(content, cfg_.kind);
        if (choice.contains("logprobs") && !choice.at("logprobs").is_null() &&
            choice.at("logprobs").contains("content")) {
            std::vector<std::pair<std::string, double>> lps;
            for (const auto& item : choice.at("logprobs").at("content"))
                lps.emplace_back(item.at("token").get<std::string>(),
                                 item.at("logprob").get<double>());
            response.answer_token_logprobs = std::move(lps);
        }
        return response;
    }

    double sequence_logprob(const CompletionCall& call,
                            const std::string& continuation) override {
        if (cfg_.kind == BackendKind::BlackBox)
            throw UnsupportedOperationError(
                "sequence_logprob is not available on a black-box backend");
        if (continuation.empty()) return 0.0;
        if (cfg_.logprob_mode == HttpBackendConfig::LogprobMode::FirstToken)
            return first_token_logprob(call, continuation);
        return echo_logprob(call, continuation);
    }

private:
    // Probability floor for verbalizers absent from the top-k alternatives.
    static constexpr double kLogprobFloor = -30.0;

    double first_token_logprob(const CompletionCall& call, const std::string& continuation) {
        if (whitespace_token_count(continuation) != 1)
            throw UnsupportedOperationError(
                "first-token logprob mode only scores single-token verbalizers; "
                "use logprob mode 'echo' for longer continuations");
        nlohmann::json body{
            {"model", cfg_.model},
            {"messages", nlohmann::json::array({nlohmann::json{
                             {"role", "user"}, {"content", call.prompt_text}}})},
            {"temperature", 0.0},
            {"max_tokens", 1},
            {"logprobs", true},
            {"top_logprobs", call.decoding.top_logprobs},
        };
        nlohmann::json reply = post_json("/v1/chat/completions", body);
        const auto& choice = first_choice(reply);
        if (!choice.contains("logprobs") || choice.at("logprobs").is_null())
            throw TransportError("endpoint returned no logprobs");
        const auto& items = choice.at("logprobs").at("content");
        if (items.empty()) throw TransportError("endpoint returned empty logprob content");
        for (const auto& alt : items.at(0).at("top_logprobs")) {
            std::string token = alt.at("token").get<std::string>();
            if (iequals(trim(token), continuation))
                return alt.at("logprob").get<double>();
        }
        return kLogprobFloor;
    }

    double echo_logprob(const CompletionCall& call, const std::string& continuation) {
        nlohmann::json body{
            {"model", cfg_.model},
            {"prompt", call.prompt_text + continuation},
            {"max_tokens", 0},
            {"echo", true},
            {"logprobs", 0},
        };
        nlohmann::json reply = post_json("/v1/completions", body);
        const auto& choice = first_choice(reply);
        const auto& lp = choice.at("logprobs");
        const auto& offsets = lp.at("text_offset");
        const auto& values = lp.at("token_logprobs");
        double sum = 0.0;
        for (size_t i = 0; i < offsets.size() && i < values.size(); ++i) {
            if (values.at(i).is_null()) continue;
            if (offsets.at(i).get<size_t>() >= call.prompt_text.size())
                sum += values.at(i).get<double>();
        }
        return sum;
    }

    static const nlohmann::json& first_choice(const nlohmann::json& reply) {
        if (!reply.contains("choices") || reply.at("choices").empty())
            throw TransportError("endpoint reply has no choices");
        return reply.at("choices").at(0);
    }

    nlohmann::json post_json(const std::string& path, const nlohmann::json& body) {
        InFlightGuard guard(*this);
        httplib::Client client(cfg_.base_url);
        client.set_connection_timeout(0, cfg_.timeout_ms * 1000);
        client.set_read_timeout(cfg_.timeout_ms / 1000, (cfg_.timeout_ms % 1000) * 1000);
        httplib::Headers headers;
        if (!token_.empty()) headers.emplace("Authorization", "Bearer " + token_);
        std::string payload = body.dump();
        if (cfg_.verbose)
            std::cerr << "[http] POST " << cfg_.base_url << path << " " << payload << "\n";
        auto res = client.Post(path, headers, payload, "application/json");
        if (!res)
            throw TransportError("request to " + cfg_.base_url + path + " failed: " +
                                 httplib::to_string(res.error()));
        if (cfg_.verbose)
            std::cerr << "[http] " << res->status << " " << res->body.substr(0, 2000) << "\n";
        if (res->status < 200 || res->status >= 300)
            throw TransportError("endpoint returned status " + std::to_string(res->status) +
                                 ": " + res->body.substr(0, 500));
        try {
            return nlohmann::json::parse(res->body);
        } catch (const nlohmann::json::exception& e) {
            throw TransportError(std::string("endpoint reply is not valid JSON: ") + e.what());
        }
    }

    class InFlightGuard {
    public:
        explicit InFlightGuard(HttpBackend& b) : backend_(b) {
            std::unique_lock<std::mutex> lock(backend_.mutex_);
            backend_.cv_.wait(lock,
                              [&] { return backend_.in_flight_ < backend_.cfg_.max_in_flight; });
            ++backend_.in_flight_;
        }
        ~InFlightGuard() {
            {
                std::lock_guard<std::mutex> lock(backend_.mutex_);
                --backend_.in_flight_;
            }
            backend_.cv_.notify_one();
        }

    private:
        HttpBackend& backend_;
    };

    HttpBackendConfig cfg_;
    std::string token_;
    std::mutex mutex_;
    std::condition_variable cv_;
    int in_flight_ = 0;
};

/// Embeddings endpoint client; dimension is learned from the first reply.
class HttpEmbedder : public Embedder {
public:
    HttpEmbedder(std::string base_url, std::string model, std::string auth_env = "",
                 int timeout_ms = 30000)
        : base_url_(std::move(base_url)), model_(std::move(model)),
          timeout_ms_(timeout_ms) {
        if (!auth_env.empty()) {
            const char* token = std::getenv(auth_env.c_str());
            if (token != nullptr) token_ = token;
        }
    }

    size_t dimension() const override { return dimension_; }

    std::vector<double> embed(const std::string& text) override {
        httplib::Client client(base_url_);
        client.set_read_timeout(timeout_ms_ / 1000, (timeout_ms_ % 1000) * 1000);
        httplib::Headers headers;
        if (!token_.empty()) headers.emplace("Authorization", "Bearer " + token_);
        nlohmann::json body{{"model", model_}, {"input", text}};
        auto res = client.Post("/v1/embeddings", headers, body.dump(), "application/json");
        if (!res || res->status < 200 || res->status >= 300)
            throw TransportError("embeddings request failed" +
                                 (res ? " with status " + std::to_string(res->status)
                                      : std::string()));
        nlohmann::json reply = nlohmann::json::parse(res->body);
        auto vec = reply.at("data").at(0).at("embedding").get<std::vector<double>>();
        dimension_ = vec.size();
        return vec;
    }

private:
    std::string base_url_;
    std::string model_;
    std::string token_;
    int timeout_ms_;
    std::atomic<size_t> dimension_{0};
};

} // namespace dtot
