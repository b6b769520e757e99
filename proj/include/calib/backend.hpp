#pragma once

#include "calib/decode.hpp"
#include "calib/errors.hpp"

#include <atomic>
#include <chrono>
#include <memory>
#include <mutex>
#include <optional>
#include <regex>
#include <string>
#include <vector>

namespace calib {

enum class BackendKind { openai_compatible, anthropic_compatible, scripted };

std::string to_string(BackendKind k);
BackendKind backend_kind_from_string(const std::string& s);

struct BackendCapabilities {
    bool logprobs = false;
};

struct BackendConfig {
    BackendKind kind = BackendKind::scripted;
    std::string base_url;       // e.g. https://api.openai.com/v1
    std::string model_id = "scripted";
    std::string api_key_env;    // environment variable holding the key
    std::string scenario_path;  // scripted only
    DecodeParams decode_defaults;
    BackendCapabilities capabilities;
    int max_retries = 3;
    int request_timeout_ms = 30000;
    int max_parallel = 4;
    int backoff_base_ms = 250;
    long max_total_tokens = 0;  // 0 = no budget cap

    void validate() const;
};

struct Completion {
    std::string text;
    std::optional<double> first_token_logprob;  // natural log, <= 0
    std::string model_id;
    std::chrono::milliseconds latency{0};
    bool cached = false;
    long prompt_tokens = 0;
    long completion_tokens = 0;
};

struct CompletionRequest {
    std::string unit_id;
    std::string prompt;
    DecodeParams decode;  // effective parameters, part of the cache key
    int sample_index = 0;
    bool needs_logprobs = false;
};

class Backend {
public:
    virtual ~Backend() = default;
    virtual Completion complete(const CompletionRequest& req) = 0;
    virtual const BackendConfig& config() const = 0;

    // Provider invocations (cache misses when wrapped in a CachingBackend).
    long provider_calls() const { return calls_.load(); }

protected:
    std::atomic<long> calls_{0};
};

// Digest identifying a completion; equal inputs collide, any field change
// separates.
std::string cache_key(const std::string& model_id, const std::string& prompt,
                      const DecodeParams& decode, int sample_index);

// Content-addressed completion store: one JSON document per completion under
// dir, written atomically. Concurrent readers, exclusive writer.
class CompletionCache {
public:
    explicit CompletionCache(std::string dir);

    std::optional<Completion> get(const std::string& key) const;
    void put(const std::string& key, const CompletionRequest& req, const Completion& completion);

    const std::string& dir() const { return dir_; }

private:
    std::string dir_;
    mutable std::mutex write_mutex_;
};

// Wraps a provider backend with the persistent cache and the token budget.
class CachingBackend : public Backend {
public:
    CachingBackend(std::shared_ptr<Backend> inner, std::string cache_dir);

    Completion complete(const CompletionRequest& req) override;
    const BackendConfig& config() const override { return inner_->config(); }

    long cache_hits() const { return hits_.load(); }
    long total_tokens() const { return tokens_.load(); }

private:
    std::shared_ptr<Backend> inner_;
    CompletionCache cache_;
    std::atomic<long> hits_{0};
    std::atomic<long> tokens_{0};
};

// Deterministic offline backend driven by a scenario file: an ordered rule
// list, first match wins. A rule with a reply sequence selects the entry by
// the last integer embedded in the request's unit_id, so replies stay stable
// under concurrent dispatch.
class ScriptedBackend : public Backend {
public:
    struct Rule {
        std::string contains;       // substring matcher (used when pattern empty)
        std::string pattern;        // regex matcher source, compiled at load time
        std::optional<std::regex> compiled;
        std::vector<std::string> replies;
        std::optional<double> logprob;
    };

    ScriptedBackend(BackendConfig config, std::vector<Rule> rules,
                    std::optional<std::string> fallback);

    static std::shared_ptr<ScriptedBackend> from_file(const std::string& path,
                                                      BackendConfig config);

    Completion complete(const CompletionRequest& req) override;
    const BackendConfig& config() const override { return config_; }

private:
    BackendConfig config_;
    std::vector<Rule> rules_;
    std::optional<std::string> fallback_;
};

// Parses a scenario file into a scripted backend (capabilities declared in
// the scenario override the config).
std::shared_ptr<ScriptedBackend> scripted_rules(const std::string& path,
                                                BackendConfig config = {});

// HTTP chat backends. Construction count is instrumented so offline tests
// can assert that scripted runs never touch the HTTP stack.
long http_backend_constructions();

std::shared_ptr<Backend> make_openai_backend(BackendConfig config);
std::shared_ptr<Backend> make_anthropic_backend(BackendConfig config);

// Factory over BackendConfig.kind; scripted configs load their scenario.
std::shared_ptr<Backend> make_backend(const BackendConfig& config);

} // namespace calib
