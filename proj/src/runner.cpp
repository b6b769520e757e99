#include "calib/runner.hpp"

#include "calib/digest.hpp"
#include "calib/parsing.hpp"
#include "calib/report.hpp"

#include <json.hpp>

#include <algorithm>
#include <atomic>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <set>
#include <thread>

using nlohmann::json;
namespace fs = std::filesystem;

namespace calib {

namespace {

std::atomic<bool> g_stop{false};

json persona_to_json(const Persona& p) {
    switch (p.variant) {
        case Persona::Variant::none:
            return json{{"variant", "none"}};
        case Persona::Variant::expertise:
            return json{{"variant", "expertise"}, {"role", p.role}, {"subject", p.subject}};
        case Persona::Variant::demographic:
            return json{{"variant", "demographic"},
                        {"race", p.race},
                        {"gender", p.gender},
                        {"age", p.age_band}};
    }
    return json{{"variant", "none"}};
}

Persona persona_from_json(const json& j) {
    if (j.is_string()) {
        std::string s = j.get<std::string>();
        if (s == "none" || s == "self") return Persona::self();
        throw ConfigError("unknown persona shorthand: '" + s + "'");
    }
    std::string variant = j.value("variant", "none");
    if (variant == "none") return Persona::self();
    if (variant == "expertise") {
        return Persona::expertise(j.value("role", ""), j.value("subject", ""));
    }
    if (variant == "demographic") {
        return Persona::demographic(j.value("race", ""), j.value("gender", ""),
                                    j.value("age", ""));
    }
    throw ConfigError("unknown persona variant: '" + variant + "'");
}

json method_to_json(const MethodSpec& m) {
    json j{{"method", to_string(m.method)}};
    if (m.method == Method::top_k) j["k"] = m.k;
    if (m.method == Method::sampling) {
        j["n_samples"] = m.n_samples;
        j["sampling_temperature"] = m.sampling_temperature;
    }
    return j;
}

MethodSpec method_from_json(const json& j) {
    MethodSpec m;
    if (j.is_string()) {
        m.method = method_from_string(j.get<std::string>());
        return m;
    }
    m.method = method_from_string(j.at("method").get<std::string>());
    m.k = j.value("k", m.k);
    m.n_samples = j.value("n_samples", m.n_samples);
    m.sampling_temperature = j.value("sampling_temperature", m.sampling_temperature);
    return m;
}

json backend_to_json(const BackendConfig& b) {
    return json{{"kind", to_string(b.kind)},
                {"base_url", b.base_url},
                {"model_id", b.model_id},
                {"api_key_env", b.api_key_env},
                {"scenario", b.scenario_path},
                {"decode_defaults",
                 {{"temperature", b.decode_defaults.temperature},
                  {"top_p", b.decode_defaults.top_p},
                  {"max_tokens", b.decode_defaults.max_tokens}}},
                {"capabilities", {{"logprobs", b.capabilities.logprobs}}},
                {"max_retries", b.max_retries},
                {"request_timeout_ms", b.request_timeout_ms},
                {"max_parallel", b.max_parallel},
                {"backoff_ms", b.backoff_base_ms},
                {"max_total_tokens", b.max_total_tokens}};
}

BackendConfig backend_from_json(const json& j) {
    BackendConfig b;
    b.kind = backend_kind_from_string(j.value("kind", "scripted"));
    b.base_url = j.value("base_url", "");
    b.model_id = j.value("model_id", b.kind == BackendKind::scripted ? "scripted" : "");
    b.api_key_env = j.value("api_key_env", "");
    b.scenario_path = j.value("scenario", "");
    if (j.contains("decode_defaults")) {
        const json& d = j.at("decode_defaults");
        b.decode_defaults.temperature = d.value("temperature", 0.0);
        b.decode_defaults.top_p = d.value("top_p", 1.0);
        b.decode_defaults.max_tokens = d.value("max_tokens", 512);
    }
    if (j.contains("capabilities")) {
        b.capabilities.logprobs = j.at("capabilities").value("logprobs", false);
    } else {
        // logprobs are an OpenAI-style feature; other kinds opt in explicitly
        b.capabilities.logprobs = b.kind == BackendKind::openai_compatible;
    }
    b.max_retries = j.value("max_retries", b.max_retries);
    b.request_timeout_ms = j.value("request_timeout_ms", b.request_timeout_ms);
    b.max_parallel = j.value("max_parallel", b.max_parallel);
    b.backoff_base_ms = j.value("backoff_ms", b.backoff_base_ms);
    b.max_total_tokens = j.value("max_total_tokens", 0L);
    return b;
}

json config_to_json(const ExperimentConfig& c) {
    json datasets = json::array();
    for (const auto& d : c.datasets) {
        datasets.push_back({{"path", d.path},
                            {"format", d.format == BankFormat::jsonl ? "jsonl" : "csv"}});
    }
    json methods = json::array();
    for (const auto& m : c.methods) methods.push_back(method_to_json(m));
    json personas = json::array();
    for (const auto& p : c.personas) personas.push_back(persona_to_json(p));
    return json{{"label", c.label},
                {"datasets", datasets},
                {"subtask_filter", c.subtask_filter},
                {"group_size", c.group_size},
                {"ordering", c.ordering == GroupOrdering::as_is ? "as_is" : "shuffled"},
                {"seed", c.seed},
                {"methods", methods},
                {"personas", personas},
                {"backend", backend_to_json(c.backend)},
                {"output_dir", c.output_dir},
                {"per_question_ece", c.per_question_ece},
                {"retry_failed_confidence", c.retry_failed_confidence}};
}

ExperimentConfig config_from_json(const json& j) {
    ExperimentConfig c;
    c.label = j.value("label", "run");
    for (const auto& d : j.value("datasets", json::array())) {
        DatasetSpec spec;
        if (d.is_string()) {
            spec.path = d.get<std::string>();
        } else {
            spec.path = d.at("path").get<std::string>();
            spec.format = bank_format_from_string(d.value("format", "jsonl"));
        }
        c.datasets.push_back(std::move(spec));
    }
    if (j.contains("subtask_filter")) {
        c.subtask_filter = j.at("subtask_filter").get<std::vector<std::string>>();
    }
    c.group_size = j.value("group_size", 10);
    std::string ordering = j.value("ordering", "as_is");
    if (ordering == "as_is") {
        c.ordering = GroupOrdering::as_is;
    } else if (ordering == "shuffled") {
        c.ordering = GroupOrdering::shuffled;
    } else {
        throw ConfigError("unknown ordering: '" + ordering + "'");
    }
    c.seed = j.value("seed", 0ULL);
    for (const auto& m : j.value("methods", json::array())) {
        c.methods.push_back(method_from_json(m));
    }
    if (j.contains("personas")) {
        for (const auto& p : j.at("personas")) c.personas.push_back(persona_from_json(p));
    }
    if (c.personas.empty()) c.personas.push_back(Persona::self());
    if (j.contains("backend")) c.backend = backend_from_json(j.at("backend"));
    c.output_dir = j.value("output_dir", c.output_dir);
    c.per_question_ece = j.value("per_question_ece", false);
    c.retry_failed_confidence = j.value("retry_failed_confidence", true);
    return c;
}

} // namespace

void ExperimentConfig::validate() const {
    if (datasets.empty()) throw ConfigError("config needs at least one dataset");
    if (methods.empty()) throw ConfigError("config needs at least one method");
    if (personas.empty()) throw ConfigError("config needs at least one persona");
    if (group_size < 1) throw ConfigError("group_size must be >= 1");

    // unit ids and report keys are built from these names; collisions would
    // silently merge result buckets
    std::set<std::string> method_names;
    for (const auto& m : methods) {
        m.validate();
        if (!method_names.insert(to_string(m.method)).second) {
            throw ConfigError("method '" + to_string(m.method) + "' listed more than once");
        }
    }
    std::set<std::string> persona_labels;
    for (const auto& p : personas) {
        p.validate();
        if (!persona_labels.insert(p.label()).second) {
            throw ConfigError("persona label '" + p.label() + "' listed more than once");
        }
    }
    backend.validate();
}

std::string ExperimentConfig::to_json_text() const {
    return config_to_json(*this).dump(2) + "\n";
}

std::string ExperimentConfig::digest() const {
    return sha256_hex(config_to_json(*this).dump());
}

ExperimentConfig ExperimentConfig::from_json_text(const std::string& text) {
    try {
        return config_from_json(json::parse(text));
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config parse error: ") + e.what());
    }
}

ExperimentConfig ExperimentConfig::load_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open config file: " + path);
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return from_json_text(text);
}

// ---------------------------------------------------------------------------
// Planning

ExperimentPlan plan_experiment(const ExperimentConfig& config,
                               const BackendCapabilities& capabilities) {
    config.validate();

    std::vector<QuestionRecord> records;
    std::set<std::string> seen_ids;
    for (const auto& spec : config.datasets) {
        for (auto& rec : load_dataset(spec.path, spec.format)) {
            if (!seen_ids.insert(rec.id).second) {
                throw DatasetError("duplicate id '" + rec.id + "' across dataset files");
            }
            records.push_back(std::move(rec));
        }
    }
    if (!config.subtask_filter.empty()) {
        std::set<std::string> keep(config.subtask_filter.begin(), config.subtask_filter.end());
        std::erase_if(records, [&keep](const QuestionRecord& r) {
            return !keep.count(Subtask{r.subject, r.difficulty}.key());
        });
    }
    if (records.empty()) throw ConfigError("no questions remain after subtask filtering");

    for (const auto& m : config.methods) {
        if (m.method == Method::probability && !capabilities.logprobs) {
            throw ConfigError("probability method requires logprobs, which backend '" +
                              config.backend.model_id + "' does not provide");
        }
    }

    ExperimentPlan plan;
    plan.groups = group_questions(records, config.group_size, config.ordering, config.seed);

    std::string digest_material;
    for (const auto& method : config.methods) {
        for (const auto& persona : config.personas) {
            for (std::size_t gi = 0; gi < plan.groups.size(); ++gi) {
                PlannedGroup pg;
                pg.method = method;
                pg.persona = persona;
                pg.group_slot = static_cast<int>(gi);
                for (auto& req : render_method_plan(plan.groups[gi], method, persona)) {
                    pg.request_slots.push_back(plan.requests.size());
                    digest_material += req.unit_id;
                    digest_material += '\x1f';
                    digest_material += req.text;
                    digest_material += '\x1f';
                    digest_material +=
                        req.decode.apply(config.backend.decode_defaults).canonical();
                    digest_material += '\x1f';
                    digest_material += std::to_string(req.samples);
                    digest_material += '\x1e';
                    plan.requests.push_back(std::move(req));
                }
                plan.planned.push_back(std::move(pg));
            }
        }
    }
    plan.digest = sha256_hex(digest_material);
    return plan;
}

std::vector<PromptRequest> plan_requests(const ExperimentConfig& config,
                                         const BackendCapabilities& capabilities) {
    return plan_experiment(config, capabilities).requests;
}

// ---------------------------------------------------------------------------
// Execution

void request_stop() { g_stop.store(true); }
void clear_stop() { g_stop.store(false); }
bool stop_requested() { return g_stop.load(); }

int RunArtifacts::failed_groups() const {
    return static_cast<int>(std::count_if(records.begin(), records.end(),
                                          [](const GroupRecord& r) {
                                              return !r.confidence.has_value() || r.answer_failed;
                                          }));
}

namespace {

struct DispatchResult {
    std::vector<std::optional<Completion>> completions;  // one per expanded call
    std::vector<std::size_t> first_call;                 // request slot -> call index
};

DispatchResult dispatch_all(const ExperimentConfig& config, Backend& backend,
                            const std::vector<PromptRequest>& requests) {
    struct Call {
        std::size_t req_slot;
        int sample_index;
    };
    std::vector<Call> calls;
    DispatchResult out;
    out.first_call.resize(requests.size());
    for (std::size_t i = 0; i < requests.size(); ++i) {
        out.first_call[i] = calls.size();
        for (int s = 0; s < requests[i].samples; ++s) {
            calls.push_back({i, s});
        }
    }
    out.completions.resize(calls.size());

    std::atomic<std::size_t> next{0};
    std::atomic<bool> fatal{false};
    std::mutex fatal_mutex;
    std::string fatal_message;

    auto worker = [&]() {
        while (!fatal.load() && !stop_requested()) {
            std::size_t i = next.fetch_add(1);
            if (i >= calls.size()) break;
            const auto& call = calls[i];
            const auto& req = requests[call.req_slot];
            CompletionRequest cr;
            cr.unit_id = req.unit_id;
            cr.prompt = req.text;
            cr.decode = req.decode.apply(config.backend.decode_defaults);
            cr.sample_index = call.sample_index;
            cr.needs_logprobs = req.needs_logprobs;
            try {
                out.completions[i] = backend.complete(cr);
            } catch (const BackendError& e) {
                if (e.fatal) {
                    std::lock_guard<std::mutex> lock(fatal_mutex);
                    fatal_message = e.what();
                    fatal.store(true);
                }
                // non-fatal: the call stays empty and the group is marked failed
            } catch (const std::exception& e) {
                // anything else escaping a worker would terminate the process
                std::lock_guard<std::mutex> lock(fatal_mutex);
                fatal_message = e.what();
                fatal.store(true);
            }
        }
    };

    std::size_t n_workers = std::min<std::size_t>(
        static_cast<std::size_t>(std::max(1, config.backend.max_parallel)), calls.size());
    n_workers = std::max<std::size_t>(n_workers, 1);
    std::vector<std::thread> pool;
    pool.reserve(n_workers);
    for (std::size_t w = 0; w < n_workers; ++w) pool.emplace_back(worker);
    for (auto& t : pool) t.join();

    if (stop_requested()) throw BackendError("run interrupted; cache retained", true);
    if (fatal.load()) throw BackendError(fatal_message, true);
    return out;
}

std::string source_name(ConfidenceValue::Source s) {
    switch (s) {
        case ConfidenceValue::Source::count_scale: return "count_scale";
        case ConfidenceValue::Source::percent: return "percent";
        case ConfidenceValue::Source::topk_prob: return "topk_prob";
        case ConfidenceValue::Source::avg_conf: return "avg_conf";
        case ConfidenceValue::Source::first_token_prob: return "first_token_prob";
    }
    return "percent";
}

// Union of the group's option labels, first-appearance order.
std::vector<std::string> group_labels(const QuestionGroup& group) {
    std::vector<std::string> labels;
    for (const auto& q : group.questions) {
        for (const auto& opt : q.options) {
            if (std::find(labels.begin(), labels.end(), opt.label) == labels.end()) {
                labels.push_back(opt.label);
            }
        }
    }
    return labels;
}

std::vector<std::string> question_labels(const QuestionRecord& q) {
    std::vector<std::string> labels;
    labels.reserve(q.options.size());
    for (const auto& opt : q.options) labels.push_back(opt.label);
    return labels;
}

struct ParseContext {
    const ExperimentConfig& config;
    Backend& backend;
    const ExperimentPlan& plan;
    const DispatchResult& dispatched;
    long parse_retries = 0;

    const Completion* completion(std::size_t req_slot, int sample) const {
        const auto& maybe = dispatched.completions[dispatched.first_call[req_slot] + sample];
        return maybe ? &*maybe : nullptr;
    }

    // One fresh ask of the same prompt in a distinct cache slot; used once
    // per unit on confidence parse failure.
    std::optional<Completion> retry(const PromptRequest& req, int sample_index) {
        if (!config.retry_failed_confidence) return std::nullopt;
        CompletionRequest cr;
        cr.unit_id = req.unit_id;
        cr.prompt = req.text;
        cr.decode = req.decode.apply(config.backend.decode_defaults);
        cr.sample_index = sample_index + 1000;
        cr.needs_logprobs = req.needs_logprobs;
        try {
            auto c = backend.complete(cr);
            ++parse_retries;
            return c;
        } catch (const BackendError& e) {
            if (e.fatal) throw;
            return std::nullopt;
        }
    }
};

struct QuestionResult {
    std::string answer = kUnparsedLabel;
    std::optional<ConfidenceValue> confidence;
    bool had_completion = false;
};

} // namespace

std::vector<SubtaskReport> aggregate_reports(const ExperimentConfig& config,
                                             std::vector<GroupRecord> records) {
    std::sort(records.begin(), records.end(),
              [](const GroupRecord& a, const GroupRecord& b) { return a.unit < b.unit; });

    std::map<std::string, Persona> persona_by_label;
    for (const auto& p : config.personas) persona_by_label[p.label()] = p;

    // key: method | persona | subtask, in sorted order
    std::map<std::string, std::vector<const GroupRecord*>> buckets;
    for (const auto& rec : records) {
        buckets[rec.method + "|" + rec.persona + "|" + rec.subtask.key()].push_back(&rec);
    }

    std::vector<SubtaskReport> reports;
    for (const auto& [key, bucket] : buckets) {
        SubtaskReport report;
        report.subtask = bucket.front()->subtask;
        report.method = bucket.front()->method;
        auto it = persona_by_label.find(bucket.front()->persona);
        report.persona = it != persona_by_label.end() ? it->second : Persona::self();

        double acc_sum = 0.0;
        int acc_n = 0;
        std::vector<GroupOutcome> outcomes;
        for (const GroupRecord* rec : bucket) {
            if (!rec->answer_failed) {
                acc_sum += rec->accuracy;
                ++acc_n;
            }
            // a calibration sample needs both sides; answer-failed groups
            // are tallied as failures even when their confidence parsed
            if (rec->confidence && !rec->answer_failed) {
                GroupOutcome o;
                o.accuracy = rec->accuracy;
                o.confidence = *rec->confidence;
                o.method = rec->method;
                o.persona = rec->persona;
                o.subtask = rec->subtask;
                o.group_index = rec->group_index;
                o.size = rec->size;
                outcomes.push_back(std::move(o));
            } else {
                ++report.n_failed;
            }
        }
        report.n_groups = static_cast<int>(outcomes.size());
        report.accuracy = acc_n > 0 ? acc_sum / acc_n : 0.0;
        if (!outcomes.empty()) {
            double conf_sum = 0.0;
            for (const auto& o : outcomes) conf_sum += o.confidence;
            report.avg_confidence = conf_sum / static_cast<double>(outcomes.size());
            report.ece = ece(outcomes, 10);
        }
        reports.push_back(std::move(report));
    }
    return reports;
}

namespace {

std::vector<GroupRecord> parse_all(ParseContext& ctx) {
    std::vector<GroupRecord> records;
    const ExperimentPlan& plan = ctx.plan;

    for (const auto& pg : plan.planned) {
        const QuestionGroup& group = plan.groups[static_cast<std::size_t>(pg.group_slot)];
        const Method method = pg.method.method;
        const bool per_question_records =
            ctx.config.per_question_ece &&
            (method == Method::vanilla || method == Method::top_k ||
             method == Method::sampling || method == Method::probability);

        GroupRecord base;
        base.unit = unit_base(group, method, pg.persona);
        base.method = to_string(method);
        base.persona = pg.persona.label();
        base.subtask = group.subtask;
        base.group_index = group.group_index;
        base.size = group.size();

        if (method == Method::afce || method == Method::quiz_like) {
            const PromptRequest& first_req = plan.requests[pg.request_slots.front()];
            std::optional<ConfidenceValue> conf;
            ParsedAnswerSet answers;
            bool have_answers = false;

            if (method == Method::afce) {
                const PromptRequest& conf_req = plan.requests[pg.request_slots[0]];
                if (const Completion* c = ctx.completion(pg.request_slots[0], 0)) {
                    conf = parse_count_confidence(c->text, group.size());
                    if (!conf) {
                        if (auto fresh = ctx.retry(conf_req, 0)) {
                            conf = parse_count_confidence(fresh->text, group.size());
                        }
                    }
                }
                if (const Completion* c = ctx.completion(pg.request_slots[1], 0)) {
                    have_answers = true;
                    answers = group.all_multiple_choice()
                                  ? parse_option_letters(c->text, group.size(), group_labels(group))
                                  : parse_numbered_answers(c->text, group.size());
                }
            } else {
                if (const Completion* c = ctx.completion(pg.request_slots[0], 0)) {
                    have_answers = true;
                    auto labels = group.all_multiple_choice() ? group_labels(group)
                                                              : std::vector<std::string>{};
                    QuizReply reply = parse_quiz_reply(c->text, group.size(), labels);
                    answers = std::move(reply.answers);
                    conf = reply.confidence;
                    if (!conf) {
                        // retry is for the count estimate; answers keep the
                        // original reply
                        if (auto fresh = ctx.retry(first_req, 0)) {
                            conf = parse_quiz_reply(fresh->text, group.size(), labels).confidence;
                        }
                    }
                }
            }

            GroupRecord rec = base;
            if (have_answers) {
                int correct = 0;
                for (int i = 0; i < group.size(); ++i) {
                    if (grade_answer(group.questions[static_cast<std::size_t>(i)],
                                     answers.labels[static_cast<std::size_t>(i)])) {
                        ++correct;
                    }
                }
                rec.accuracy = static_cast<double>(correct) / group.size();
                rec.answer_unparsed = static_cast<int>(answers.unparsed_indices.size());
            } else {
                rec.answer_failed = true;
            }
            if (conf) {
                rec.confidence = conf->value;
                rec.conf_source = source_name(conf->source);
            }
            records.push_back(std::move(rec));
            continue;
        }

        // per-question methods
        std::vector<QuestionResult> results(static_cast<std::size_t>(group.size()));
        for (std::size_t qi = 0; qi < pg.request_slots.size(); ++qi) {
            const PromptRequest& req = plan.requests[pg.request_slots[qi]];
            const QuestionRecord& question = group.questions[qi];
            auto labels = question_labels(question);
            QuestionResult& qr = results[qi];

            if (method == Method::vanilla) {
                if (const Completion* c = ctx.completion(pg.request_slots[qi], 0)) {
                    qr.had_completion = true;
                    VanillaReply reply = parse_vanilla_reply(
                        c->text, question.kind == Kind::multiple_choice
                                     ? labels
                                     : std::vector<std::string>{});
                    if (reply.answer) qr.answer = *reply.answer;
                    qr.confidence = reply.confidence;
                    if (!qr.confidence) {
                        if (auto fresh = ctx.retry(req, 0)) {
                            VanillaReply again = parse_vanilla_reply(
                                fresh->text, question.kind == Kind::multiple_choice
                                                 ? labels
                                                 : std::vector<std::string>{});
                            qr.confidence = again.confidence;
                            if (!reply.answer && again.answer) qr.answer = *again.answer;
                        }
                    }
                }
            } else if (method == Method::top_k) {
                if (const Completion* c = ctx.completion(pg.request_slots[qi], 0)) {
                    qr.had_completion = true;
                    auto best = parse_topk(c->text, pg.method.k, labels);
                    if (!best) {
                        if (auto fresh = ctx.retry(req, 0)) {
                            best = parse_topk(fresh->text, pg.method.k, labels);
                        }
                    }
                    if (best) {
                        qr.answer = best->first;
                        qr.confidence = best->second;
                    }
                }
            } else if (method == Method::sampling) {
                std::vector<std::pair<std::string, ConfidenceValue>> pairs;
                std::string first_label;
                for (int s = 0; s < req.samples; ++s) {
                    const Completion* c = ctx.completion(pg.request_slots[qi], s);
                    if (!c) continue;
                    qr.had_completion = true;
                    VanillaReply reply = parse_vanilla_reply(
                        c->text, question.kind == Kind::multiple_choice
                                     ? labels
                                     : std::vector<std::string>{});
                    if (reply.answer && first_label.empty()) first_label = *reply.answer;
                    if (reply.answer && reply.confidence) {
                        pairs.emplace_back(*reply.answer, *reply.confidence);
                    }
                }
                if (pairs.empty() && qr.had_completion) {
                    if (auto fresh = ctx.retry(req, 0)) {
                        VanillaReply again = parse_vanilla_reply(
                            fresh->text, question.kind == Kind::multiple_choice
                                             ? labels
                                             : std::vector<std::string>{});
                        if (again.answer && again.confidence) {
                            pairs.emplace_back(*again.answer, *again.confidence);
                        }
                    }
                }
                if (auto agg = aggregate_avg_conf(pairs)) {
                    qr.answer = agg->first;
                    qr.confidence = agg->second;
                } else if (!first_label.empty()) {
                    qr.answer = first_label;  // gradeable answer, confidence failed
                }
            } else if (method == Method::probability) {
                const Completion* c = ctx.completion(pg.request_slots[qi], 0);
                if (c) {
                    qr.had_completion = true;
                    if (auto label = parse_bare_answer(c->text, labels)) qr.answer = *label;
                    qr.confidence = probability_confidence(c->first_token_logprob);
                    if (!qr.confidence) {
                        if (auto fresh = ctx.retry(req, 0)) {
                            if (qr.answer == kUnparsedLabel) {
                                if (auto label = parse_bare_answer(fresh->text, labels)) {
                                    qr.answer = *label;
                                }
                            }
                            qr.confidence = probability_confidence(fresh->first_token_logprob);
                        }
                    }
                }
            }
        }

        if (per_question_records) {
            for (std::size_t qi = 0; qi < results.size(); ++qi) {
                GroupRecord rec = base;
                rec.unit = plan.requests[pg.request_slots[qi]].unit_id;
                rec.size = 1;
                const QuestionResult& qr = results[qi];
                if (qr.had_completion) {
                    rec.accuracy = grade_answer(group.questions[qi], qr.answer) ? 1.0 : 0.0;
                    rec.answer_unparsed = qr.answer == kUnparsedLabel ? 1 : 0;
                } else {
                    rec.answer_failed = true;
                }
                if (qr.confidence) {
                    rec.confidence = qr.confidence->value;
                    rec.conf_source = source_name(qr.confidence->source);
                }
                records.push_back(std::move(rec));
            }
            continue;
        }

        GroupRecord rec = base;
        bool any_completion = false;
        int correct = 0;
        double conf_sum = 0.0;
        int conf_n = 0;
        ConfidenceValue::Source src = ConfidenceValue::Source::percent;
        for (std::size_t qi = 0; qi < results.size(); ++qi) {
            const QuestionResult& qr = results[qi];
            any_completion = any_completion || qr.had_completion;
            if (grade_answer(group.questions[qi], qr.answer)) ++correct;
            if (qr.answer == kUnparsedLabel) ++rec.answer_unparsed;
            if (qr.confidence) {
                conf_sum += qr.confidence->value;
                ++conf_n;
                src = qr.confidence->source;
            }
        }
        if (any_completion) {
            rec.accuracy = static_cast<double>(correct) / group.size();
        } else {
            rec.answer_failed = true;
            rec.answer_unparsed = group.size();
        }
        if (conf_n > 0) {
            rec.confidence = conf_sum / conf_n;
            rec.conf_source = source_name(src);
        }
        records.push_back(std::move(rec));
    }
    return records;
}

} // namespace

RunArtifacts run_experiment(const ExperimentConfig& config, std::shared_ptr<Backend> backend) {
    ExperimentPlan plan = plan_experiment(config, backend->config().capabilities);

    DispatchResult dispatched = dispatch_all(config, *backend, plan.requests);

    ParseContext ctx{config, *backend, plan, dispatched};
    std::vector<GroupRecord> records = parse_all(ctx);
    std::sort(records.begin(), records.end(),
              [](const GroupRecord& a, const GroupRecord& b) { return a.unit < b.unit; });

    RunArtifacts artifacts;
    artifacts.config = config;
    artifacts.config_digest = config.digest();
    artifacts.plan_digest = plan.digest;
    artifacts.records = std::move(records);
    artifacts.reports = aggregate_reports(config, artifacts.records);
    artifacts.provider_calls = backend->provider_calls();
    artifacts.parse_retries = ctx.parse_retries;
    if (auto* caching = dynamic_cast<CachingBackend*>(backend.get())) {
        artifacts.cache_hits = caching->cache_hits();
        artifacts.total_tokens = caching->total_tokens();
    }
    return artifacts;
}

RunArtifacts run_experiment(const ExperimentConfig& config) {
    config.validate();
    std::string digest = config.digest();
    fs::path run_dir(config.output_dir);
    fs::path manifest_path = run_dir / "manifest.json";
    if (fs::exists(manifest_path)) {
        std::ifstream in(manifest_path, std::ios::binary);
        json manifest;
        in >> manifest;
        std::string existing = manifest.value("config_digest", "");
        if (!existing.empty() && existing != digest) {
            throw ConfigError("run directory " + config.output_dir +
                              " belongs to a different config (digest mismatch)");
        }
    }

    auto provider = make_backend(config.backend);
    auto backend = std::make_shared<CachingBackend>(provider, (run_dir / "cache").string());

    RunArtifacts artifacts = run_experiment(config, backend);
    artifacts.provider_calls = provider->provider_calls();
    artifacts.cache_hits = backend->cache_hits();
    write_artifacts(artifacts, config.output_dir);
    return artifacts;
}

// ---------------------------------------------------------------------------
// Artifact files

namespace {

json record_to_json_line(const GroupRecord& rec) {
    json j{{"unit", rec.unit},
           {"method", rec.method},
           {"persona", rec.persona},
           {"subject", rec.subtask.subject},
           {"difficulty", to_string(rec.subtask.difficulty)},
           {"group_index", rec.group_index},
           {"size", rec.size},
           {"accuracy", rec.accuracy},
           {"answer_failed", rec.answer_failed},
           {"answer_unparsed", rec.answer_unparsed},
           {"conf_source", rec.conf_source}};
    if (rec.confidence) {
        j["confidence"] = *rec.confidence;
    } else {
        j["confidence"] = nullptr;
    }
    return j;
}

GroupRecord record_from_json_line(const json& j) {
    GroupRecord rec;
    rec.unit = j.at("unit").get<std::string>();
    rec.method = j.at("method").get<std::string>();
    rec.persona = j.at("persona").get<std::string>();
    rec.subtask.subject = j.at("subject").get<std::string>();
    rec.subtask.difficulty = difficulty_from_string(j.at("difficulty").get<std::string>());
    rec.group_index = j.at("group_index").get<int>();
    rec.size = j.at("size").get<int>();
    rec.accuracy = j.at("accuracy").get<double>();
    rec.answer_failed = j.at("answer_failed").get<bool>();
    rec.answer_unparsed = j.at("answer_unparsed").get<int>();
    rec.conf_source = j.value("conf_source", "");
    if (!j.at("confidence").is_null()) rec.confidence = j.at("confidence").get<double>();
    return rec;
}

void write_reports_dir(const RunArtifacts& artifacts, const fs::path& run_dir) {
    fs::path reports_dir = run_dir / "reports";
    fs::create_directories(reports_dir);
    emit_subtask_table(artifacts.reports, (reports_dir / "subtasks.csv").string(),
                       (reports_dir / "subtasks.json").string());
    emit_calibration_plot(calibration_series(artifacts.reports),
                          (reports_dir / "calibration.svg").string());

    std::vector<SubtaskReport> self_reports, other_reports, demographic_reports;
    std::set<std::string> self_keys;
    for (const auto& r : artifacts.reports) {
        if (r.persona.variant == Persona::Variant::none) {
            self_reports.push_back(r);
            self_keys.insert(r.method + "|" + r.subtask.key());
        }
    }
    for (const auto& r : artifacts.reports) {
        if (r.persona.variant == Persona::Variant::expertise &&
            self_keys.count(r.method + "|" + r.subtask.key())) {
            other_reports.push_back(r);
        } else if (r.persona.variant == Persona::Variant::demographic) {
            demographic_reports.push_back(r);
        }
    }
    emit_persona_report(self_reports, other_reports, demographic_reports,
                        (reports_dir / "personas.json").string());
}

} // namespace

void write_artifacts(const RunArtifacts& artifacts, const std::string& run_dir_str) {
    fs::path run_dir(run_dir_str);
    fs::create_directories(run_dir);

    int failed = artifacts.failed_groups();
    json manifest{{"label", artifacts.config.label},
                  {"config", json::parse(artifacts.config.to_json_text())},
                  {"config_digest", artifacts.config_digest},
                  {"plan_digest", artifacts.plan_digest},
                  {"created_at_unix", static_cast<long>(std::time(nullptr))},
                  {"provider_calls", artifacts.provider_calls},
                  {"cache_hits", artifacts.cache_hits},
                  {"parse_retries", artifacts.parse_retries},
                  {"total_tokens", artifacts.total_tokens},
                  {"groups_total", static_cast<long>(artifacts.records.size())},
                  {"groups_failed", failed}};
    {
        std::ofstream out(run_dir / "manifest.json", std::ios::binary);
        if (!out) throw ConfigError("cannot write manifest under " + run_dir_str);
        out << manifest.dump(2) << "\n";
    }
    {
        std::ofstream out(run_dir / "outcomes.jsonl", std::ios::binary);
        for (const auto& rec : artifacts.records) {
            out << record_to_json_line(rec).dump() << "\n";
        }
    }
    write_reports_dir(artifacts, run_dir);
}

RunArtifacts load_artifacts(const std::string& run_dir_str) {
    fs::path run_dir(run_dir_str);
    std::ifstream manifest_in(run_dir / "manifest.json", std::ios::binary);
    if (!manifest_in) throw ConfigError("no manifest.json under " + run_dir_str);
    json manifest;
    try {
        manifest_in >> manifest;
    } catch (const json::exception& e) {
        throw ConfigError("corrupt manifest: " + std::string(e.what()));
    }

    RunArtifacts artifacts;
    artifacts.config = ExperimentConfig::from_json_text(manifest.at("config").dump());
    artifacts.config_digest = manifest.value("config_digest", "");
    artifacts.plan_digest = manifest.value("plan_digest", "");
    artifacts.provider_calls = manifest.value("provider_calls", 0L);
    artifacts.cache_hits = manifest.value("cache_hits", 0L);
    artifacts.parse_retries = manifest.value("parse_retries", 0L);
    artifacts.total_tokens = manifest.value("total_tokens", 0L);

    std::ifstream in(run_dir / "outcomes.jsonl", std::ios::binary);
    if (!in) throw ConfigError("no outcomes.jsonl under " + run_dir_str);
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        try {
            artifacts.records.push_back(record_from_json_line(json::parse(line)));
        } catch (const json::exception& e) {
            throw ConfigError("corrupt outcomes.jsonl line " + std::to_string(line_no) + ": " +
                              e.what());
        }
    }
    artifacts.reports = aggregate_reports(artifacts.config, artifacts.records);
    return artifacts;
}

void regenerate_reports(const std::string& run_dir) {
    RunArtifacts artifacts = load_artifacts(run_dir);
    write_reports_dir(artifacts, fs::path(run_dir));
}

} // namespace calib
