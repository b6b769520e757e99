#include "calib/backend.hpp"

#include <httplib.h>
#include <json.hpp>

#include <atomic>
#include <chrono>
#include <cstdlib>
#include <thread>

using nlohmann::json;

namespace calib {

namespace {

std::atomic<long> g_http_constructions{0};

struct SplitUrl {
    std::string origin;  // scheme://host[:port]
    std::string prefix;  // path prefix, no trailing slash
};

SplitUrl split_base_url(const std::string& url) {
    auto scheme_end = url.find("://");
    if (scheme_end == std::string::npos) {
        throw ConfigError("base_url must start with http:// or https://: " + url);
    }
    auto path_start = url.find('/', scheme_end + 3);
    if (path_start == std::string::npos) return {url, ""};
    std::string prefix = url.substr(path_start);
    while (!prefix.empty() && prefix.back() == '/') prefix.pop_back();
    return {url.substr(0, path_start), prefix};
}

class HttpChatBackend : public Backend {
public:
    explicit HttpChatBackend(BackendConfig config) : config_(std::move(config)) {
        g_http_constructions.fetch_add(1);
        auto split = split_base_url(config_.base_url);
        origin_ = split.origin;
        prefix_ = split.prefix;
        if (!config_.api_key_env.empty()) {
            const char* v = std::getenv(config_.api_key_env.c_str());
            api_key_ = v ? v : "";
            if (api_key_.empty()) {
                throw BackendError("API key environment variable not set: " + config_.api_key_env,
                                   true);
            }
        }
    }

    const BackendConfig& config() const override { return config_; }

    Completion complete(const CompletionRequest& req) override {
        std::string body = build_payload(req).dump();
        int attempts_left = config_.max_retries + 1;
        std::chrono::milliseconds backoff{config_.backoff_base_ms};
        std::string last_error;

        while (attempts_left-- > 0) {
            calls_.fetch_add(1);
            auto started = std::chrono::steady_clock::now();

            // one client per call: httplib clients are not safe for
            // concurrent use across dispatch threads
            httplib::Client client(origin_);
            client.set_connection_timeout(config_.request_timeout_ms / 1000,
                                          (config_.request_timeout_ms % 1000) * 1000);
            client.set_read_timeout(config_.request_timeout_ms / 1000,
                                    (config_.request_timeout_ms % 1000) * 1000);

            auto res = client.Post(prefix_ + endpoint_path(), headers(), body, "application/json");
            auto elapsed = std::chrono::duration_cast<std::chrono::milliseconds>(
                std::chrono::steady_clock::now() - started);

            if (!res) {
                last_error = "transport error: " + httplib::to_string(res.error());
            } else if (res->status == 200) {
                json doc;
                try {
                    doc = json::parse(res->body);
                    Completion c = parse_response(doc, req);
                    c.model_id = config_.model_id;
                    c.latency = elapsed;
                    return c;
                } catch (const json::exception& e) {
                    throw BackendError("malformed provider payload: " + std::string(e.what()));
                }
            } else if (res->status == 401 || res->status == 403) {
                throw BackendError("authentication failed (HTTP " + std::to_string(res->status) +
                                       "): " + res->body.substr(0, 200),
                                   true);
            } else if (res->status == 429 || res->status >= 500) {
                last_error = "HTTP " + std::to_string(res->status);
            } else {
                throw BackendError("provider rejected request (HTTP " +
                                       std::to_string(res->status) +
                                       "): " + res->body.substr(0, 200),
                                   true);
            }

            if (attempts_left > 0) {
                std::this_thread::sleep_for(backoff);
                backoff *= 2;
            }
        }
        throw BackendError("retries exhausted after " + std::to_string(config_.max_retries + 1) +
                           " attempts: " + last_error);
    }

protected:
    virtual json build_payload(const CompletionRequest& req) const = 0;
    virtual std::string endpoint_path() const = 0;
    virtual httplib::Headers headers() const = 0;
    virtual Completion parse_response(const json& doc, const CompletionRequest& req) const = 0;

    BackendConfig config_;
    std::string origin_;
    std::string prefix_;
    std::string api_key_;
};

class OpenAiBackend : public HttpChatBackend {
public:
    using HttpChatBackend::HttpChatBackend;

protected:
    json build_payload(const CompletionRequest& req) const override {
        json payload{{"model", config_.model_id},
                     {"messages", json::array({{{"role", "user"}, {"content", req.prompt}}})},
                     {"temperature", req.decode.temperature},
                     {"top_p", req.decode.top_p},
                     {"max_tokens", req.decode.max_tokens}};
        if (req.needs_logprobs) payload["logprobs"] = true;
        return payload;
    }

    std::string endpoint_path() const override { return "/chat/completions"; }

    httplib::Headers headers() const override {
        return {{"Authorization", "Bearer " + api_key_}};
    }

    Completion parse_response(const json& doc, const CompletionRequest& req) const override {
        Completion c;
        const json& choice = doc.at("choices").at(0);
        c.text = choice.at("message").at("content").is_null()
                     ? ""
                     : choice.at("message").at("content").get<std::string>();
        if (req.needs_logprobs) {
            if (!choice.contains("logprobs") || choice.at("logprobs").is_null()) {
                throw BackendError("provider returned no logprobs", true);
            }
            const json& content = choice.at("logprobs").at("content");
            if (!content.empty()) {
                double lp = content.at(0).at("logprob").get<double>();
                if (lp > 0.0) throw BackendError("malformed provider payload: positive logprob");
                c.first_token_logprob = lp;
            }
        }
        if (doc.contains("usage")) {
            c.prompt_tokens = doc.at("usage").value("prompt_tokens", 0L);
            c.completion_tokens = doc.at("usage").value("completion_tokens", 0L);
        }
        return c;
    }
};

class AnthropicBackend : public HttpChatBackend {
public:
    explicit AnthropicBackend(BackendConfig config) : HttpChatBackend(std::move(config)) {
        // first-token probabilities are not exposed by this API family
        config_.capabilities.logprobs = false;
    }

protected:
    json build_payload(const CompletionRequest& req) const override {
        if (req.needs_logprobs) {
            throw BackendError("backend does not expose logprobs", true);
        }
        return json{{"model", config_.model_id},
                    {"max_tokens", req.decode.max_tokens},
                    {"temperature", req.decode.temperature},
                    {"top_p", req.decode.top_p},
                    {"messages", json::array({{{"role", "user"}, {"content", req.prompt}}})}};
    }

    std::string endpoint_path() const override { return "/v1/messages"; }

    httplib::Headers headers() const override {
        return {{"x-api-key", api_key_}, {"anthropic-version", "2023-06-01"}};
    }

    Completion parse_response(const json& doc, const CompletionRequest&) const override {
        Completion c;
        const json& content = doc.at("content");
        if (!content.empty()) {
            c.text = content.at(0).at("text").get<std::string>();
        }
        if (doc.contains("usage")) {
            c.prompt_tokens = doc.at("usage").value("input_tokens", 0L);
            c.completion_tokens = doc.at("usage").value("output_tokens", 0L);
        }
        return c;
    }
};

} // namespace

long http_backend_constructions() {
    return g_http_constructions.load();
}

std::shared_ptr<Backend> make_openai_backend(BackendConfig config) {
    return std::make_shared<OpenAiBackend>(std::move(config));
}

std::shared_ptr<Backend> make_anthropic_backend(BackendConfig config) {
    return std::make_shared<AnthropicBackend>(std::move(config));
}

} // namespace calib
