#include "calib/backend.hpp"

#include "calib/digest.hpp"

#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <regex>

using nlohmann::json;
namespace fs = std::filesystem;

namespace calib {

std::string to_string(BackendKind k) {
    switch (k) {
        case BackendKind::openai_compatible: return "openai_compatible";
        case BackendKind::anthropic_compatible: return "anthropic_compatible";
        case BackendKind::scripted: return "scripted";
    }
    return "scripted";
}

BackendKind backend_kind_from_string(const std::string& s) {
    if (s == "openai_compatible") return BackendKind::openai_compatible;
    if (s == "anthropic_compatible") return BackendKind::anthropic_compatible;
    if (s == "scripted") return BackendKind::scripted;
    throw ConfigError("unknown backend kind: '" + s + "'");
}

void BackendConfig::validate() const {
    if (decode_defaults.temperature < 0.0) throw ConfigError("temperature must be >= 0");
    if (decode_defaults.top_p <= 0.0 || decode_defaults.top_p > 1.0)
        throw ConfigError("top_p must be in (0,1]");
    if (max_parallel < 1) throw ConfigError("max_parallel must be >= 1");
    if (max_retries < 0) throw ConfigError("max_retries must be >= 0");
    if (kind == BackendKind::scripted) {
        if (scenario_path.empty()) throw ConfigError("scripted backend requires a scenario file");
    } else {
        if (base_url.empty()) throw ConfigError("HTTP backend requires base_url");
    }
}

std::string cache_key(const std::string& model_id, const std::string& prompt,
                      const DecodeParams& decode, int sample_index) {
    std::string material = model_id + "\n" + decode.canonical() + "\n" +
                           std::to_string(sample_index) + "\n" + prompt;
    return sha256_hex(material);
}

// ---------------------------------------------------------------------------
// Cache

CompletionCache::CompletionCache(std::string dir) : dir_(std::move(dir)) {
    fs::create_directories(dir_);
}

std::optional<Completion> CompletionCache::get(const std::string& key) const {
    fs::path path = fs::path(dir_) / (key + ".json");
    std::ifstream in(path, std::ios::binary);
    if (!in) return std::nullopt;
    json doc;
    try {
        in >> doc;
    } catch (const json::exception& e) {
        throw BackendError("corrupt cache entry " + path.string() + ": " + e.what(), true);
    }
    Completion c;
    c.text = doc.at("text").get<std::string>();
    if (doc.contains("first_token_logprob") && !doc.at("first_token_logprob").is_null()) {
        c.first_token_logprob = doc.at("first_token_logprob").get<double>();
    }
    c.model_id = doc.at("model_id").get<std::string>();
    c.prompt_tokens = doc.value("prompt_tokens", 0L);
    c.completion_tokens = doc.value("completion_tokens", 0L);
    c.cached = true;
    return c;
}

void CompletionCache::put(const std::string& key, const CompletionRequest& req,
                          const Completion& completion) {
    json doc{{"model_id", completion.model_id},
             {"sample_index", req.sample_index},
             {"decode",
              {{"temperature", req.decode.temperature},
               {"top_p", req.decode.top_p},
               {"max_tokens", req.decode.max_tokens}}},
             {"prompt", req.prompt},
             {"text", completion.text},
             {"prompt_tokens", completion.prompt_tokens},
             {"completion_tokens", completion.completion_tokens}};
    if (completion.first_token_logprob) {
        doc["first_token_logprob"] = *completion.first_token_logprob;
    } else {
        doc["first_token_logprob"] = nullptr;
    }

    std::lock_guard<std::mutex> lock(write_mutex_);
    fs::path final_path = fs::path(dir_) / (key + ".json");
    fs::path tmp_path = fs::path(dir_) / (key + ".tmp");
    {
        std::ofstream out(tmp_path, std::ios::binary);
        if (!out) throw BackendError("cannot write cache entry: " + tmp_path.string(), true);
        out << doc.dump(2);
    }
    fs::rename(tmp_path, final_path);
}

CachingBackend::CachingBackend(std::shared_ptr<Backend> inner, std::string cache_dir)
    : inner_(std::move(inner)), cache_(std::move(cache_dir)) {}

Completion CachingBackend::complete(const CompletionRequest& req) {
    std::string key = cache_key(inner_->config().model_id, req.prompt, req.decode,
                                req.sample_index);
    if (auto hit = cache_.get(key)) {
        hits_.fetch_add(1);
        return *hit;
    }
    Completion fresh = inner_->complete(req);
    cache_.put(key, req, fresh);
    long total = tokens_.fetch_add(fresh.prompt_tokens + fresh.completion_tokens) +
                 fresh.prompt_tokens + fresh.completion_tokens;
    long cap = inner_->config().max_total_tokens;
    if (cap > 0 && total > cap) {
        throw BackendError("token budget exhausted: " + std::to_string(total) + " > " +
                               std::to_string(cap),
                           true);
    }
    return fresh;
}

// ---------------------------------------------------------------------------
// Scripted backend

namespace {

// Last integer embedded in the unit id selects the reply from a sequence.
int unit_ordinal(const std::string& unit_id) {
    int value = 0;
    bool found = false;
    for (std::size_t i = 0; i < unit_id.size();) {
        if (std::isdigit(static_cast<unsigned char>(unit_id[i]))) {
            std::size_t j = i;
            long v = 0;
            while (j < unit_id.size() && std::isdigit(static_cast<unsigned char>(unit_id[j]))) {
                v = v * 10 + (unit_id[j] - '0');
                if (v > 1000000000L) v = v % 1000000000L;
                ++j;
            }
            value = static_cast<int>(v);
            found = true;
            i = j;
        } else {
            ++i;
        }
    }
    return found ? value : 0;
}

long approx_tokens(const std::string& s) {
    return static_cast<long>(s.size() / 4) + 1;
}

} // namespace

ScriptedBackend::ScriptedBackend(BackendConfig config, std::vector<Rule> rules,
                                 std::optional<std::string> fallback)
    : config_(std::move(config)), rules_(std::move(rules)), fallback_(std::move(fallback)) {
    config_.kind = BackendKind::scripted;
    for (auto& rule : rules_) {
        if (rule.replies.empty()) throw ConfigError("scenario rule without replies");
        if (rule.logprob && *rule.logprob > 0.0)
            throw ConfigError("scenario logprob must be <= 0");
        if (!rule.pattern.empty() && !rule.compiled) {
            try {
                rule.compiled = std::regex(rule.pattern);
            } catch (const std::regex_error& e) {
                throw ConfigError("invalid scenario regex '" + rule.pattern + "': " + e.what());
            }
        }
    }
}

Completion ScriptedBackend::complete(const CompletionRequest& req) {
    calls_.fetch_add(1);
    const std::string* reply = nullptr;
    std::optional<double> logprob;
    for (const auto& rule : rules_) {
        bool matched = rule.compiled ? std::regex_search(req.prompt, *rule.compiled)
                                     : req.prompt.find(rule.contains) != std::string::npos;
        if (!matched) continue;
        std::size_t idx =
            static_cast<std::size_t>(unit_ordinal(req.unit_id)) % rule.replies.size();
        reply = &rule.replies[idx];
        logprob = rule.logprob;
        break;
    }
    if (!reply) {
        if (!fallback_) {
            throw BackendError("scenario has no rule matching prompt: " +
                               req.prompt.substr(0, 80));
        }
        reply = &*fallback_;
    }
    Completion c;
    c.text = *reply;
    c.model_id = config_.model_id;
    if (req.needs_logprobs) c.first_token_logprob = logprob;
    c.prompt_tokens = approx_tokens(req.prompt);
    c.completion_tokens = approx_tokens(c.text);
    return c;
}

std::shared_ptr<ScriptedBackend> ScriptedBackend::from_file(const std::string& path,
                                                            BackendConfig config) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open scenario file: " + path);
    json doc;
    try {
        in >> doc;
    } catch (const json::exception& e) {
        throw ConfigError("scenario parse error in " + path + ": " + e.what());
    }

    std::vector<Rule> rules;
    for (const auto& r : doc.value("rules", json::array())) {
        Rule rule;
        rule.contains = r.value("contains", "");
        rule.pattern = r.value("regex", "");
        if (rule.contains.empty() && rule.pattern.empty()) {
            throw ConfigError("scenario rule needs a 'contains' or 'regex' matcher");
        }
        if (r.contains("reply")) {
            rule.replies.push_back(r.at("reply").get<std::string>());
        }
        if (r.contains("replies")) {
            for (const auto& rep : r.at("replies")) {
                rule.replies.push_back(rep.get<std::string>());
            }
        }
        if (r.contains("logprob")) rule.logprob = r.at("logprob").get<double>();
        rules.push_back(std::move(rule));
    }
    std::optional<std::string> fallback;
    if (doc.contains("fallback") && !doc.at("fallback").is_null()) {
        fallback = doc.at("fallback").get<std::string>();
    }
    if (doc.contains("capabilities")) {
        config.capabilities.logprobs = doc.at("capabilities").value("logprobs", false);
    }
    if (doc.contains("model_id")) config.model_id = doc.at("model_id").get<std::string>();
    config.scenario_path = path;
    return std::make_shared<ScriptedBackend>(std::move(config), std::move(rules),
                                             std::move(fallback));
}

std::shared_ptr<ScriptedBackend> scripted_rules(const std::string& path, BackendConfig config) {
    return ScriptedBackend::from_file(path, std::move(config));
}

std::shared_ptr<Backend> make_backend(const BackendConfig& config) {
    config.validate();
    switch (config.kind) {
        case BackendKind::scripted:
            return ScriptedBackend::from_file(config.scenario_path, config);
        case BackendKind::openai_compatible:
            return make_openai_backend(config);
        case BackendKind::anthropic_compatible:
            return make_anthropic_backend(config);
    }
    throw ConfigError("unhandled backend kind");
}

} // namespace calib
