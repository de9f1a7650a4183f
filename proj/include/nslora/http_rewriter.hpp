#pragma once

#include <chrono>
#include <cstdlib>
#include <string>
#include <thread>
#include <vector>

#include <httplib.h>
#include <json.hpp>

#include "nslora/rewriter.hpp"

namespace nslora {

// JSON-over-HTTP teacher client. POSTs chat-style completion requests to
// {base_url}/chat/completions and retries transport failures with
// exponential backoff.
class HttpRewriter : public RewriteClient {
public:
    explicit HttpRewriter(EndpointConfig config) : config_(std::move(config)) {
        // split base_url into scheme://host:port and a path prefix
        auto scheme_end = config_.base_url.find("://");
        auto path_start = scheme_end == std::string::npos
                              ? config_.base_url.find('/')
                              : config_.base_url.find('/', scheme_end + 3);
        if (path_start == std::string::npos) {
            host_ = config_.base_url;
        } else {
            host_ = config_.base_url.substr(0, path_start);
            path_prefix_ = config_.base_url.substr(path_start);
            while (!path_prefix_.empty() && path_prefix_.back() == '/')
                path_prefix_.pop_back();
        }
    }

    std::string rewrite_question(const RewriteRequest& req) override {
        std::string user = "Original question: " + req.question +
                           "\nStudent answer (wrong): " + req.model_answer +
                           "\nGround truth: " + req.ground_truth +
                           "\nRewrite attempt " + std::to_string(req.iteration) + ".";
        if (req.feedback_hint) user += "\nFeedback: " + *req.feedback_hint;
        return complete(kRewriteTemplateV1, user);
    }

    std::string rewrite_system_prompt(const std::string& current,
                                      const std::vector<std::string>& feedback) override {
        std::string user = "Current system prompt: " + current +
                           "\nThis epoch's rewritten samples:\n";
        for (const auto& f : feedback) user += "- " + f + "\n";
        user += "Propose an improved global system prompt. Reply with the prompt only.";
        return complete(
            "You improve system prompts for a student model based on per-sample rewrite "
            "feedback. Reply with the improved prompt only.",
            user);
    }

private:
    std::string complete(const std::string& system, const std::string& user) {
        nlohmann::json body;
        body["model"] = config_.model_name;
        body["temperature"] = config_.temperature;
        body["messages"] = nlohmann::json::array(
            {{{"role", "system"}, {"content", system}}, {{"role", "user"}, {"content", user}}});

        std::string last_error;
        for (int attempt = 0; attempt <= config_.max_retries; ++attempt) {
            if (attempt > 0)
                std::this_thread::sleep_for(std::chrono::milliseconds(
                    config_.backoff_base_ms * (1 << (attempt - 1))));
            httplib::Client cli(host_);
            cli.set_connection_timeout(0, config_.timeout_ms * 1000);
            cli.set_read_timeout(config_.timeout_ms / 1000, (config_.timeout_ms % 1000) * 1000);
            httplib::Headers headers;
            if (!config_.api_key.empty())
                headers.emplace("Authorization", "Bearer " + config_.api_key);
            auto res = cli.Post(path_prefix_ + "/chat/completions", headers, body.dump(),
                                "application/json");
            if (!res) {
                last_error = "transport failure: " + httplib::to_string(res.error());
                continue;
            }
            if (res->status >= 500) {
                last_error = "server status " + std::to_string(res->status);
                continue;
            }
            if (res->status != 200)
                throw RewriteError(RewriteError::Kind::Transport,
                                   "endpoint status " + std::to_string(res->status));
            nlohmann::json j = nlohmann::json::parse(res->body, nullptr, false);
            if (j.is_discarded())
                throw RewriteError(RewriteError::Kind::EmptyResponse,
                                   "unparseable endpoint response");
            std::string content;
            try {
                content = j.at("choices").at(0).at("message").at("content").get<std::string>();
            } catch (...) {
                throw RewriteError(RewriteError::Kind::EmptyResponse,
                                   "response missing choices[0].message.content");
            }
            if (content.empty())
                throw RewriteError(RewriteError::Kind::EmptyResponse, "empty content");
            return content;
        }
        throw RewriteError(RewriteError::Kind::Transport,
                           "retries exhausted: " + last_error);
    }

    EndpointConfig config_;
    std::string host_;
    std::string path_prefix_;
};

inline std::string api_key_from_env() {
    const char* key = std::getenv("NSLORA_API_KEY");
    return key ? key : "";
}

}  // namespace nslora
