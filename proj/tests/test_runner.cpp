#include "calib/runner.hpp"

#include "calib/digest.hpp"
#include "test_support.hpp"

#include <doctest.h>
#include <json.hpp>

#include <atomic>
#include <chrono>
#include <filesystem>
#include <thread>

using namespace calib;
using namespace testsupport;

namespace {

// Bank with one subtask and a fixed per-position answer key: within every
// group of 10, questions 0-5 key to A and 6-9 key to B.
void write_six_of_ten_bank(const std::string& path, int n) {
    std::vector<QuestionRecord> bank;
    for (int i = 0; i < n; ++i) {
        bank.push_back(make_mc("q" + std::to_string(i), "physics", Difficulty::high_school,
                               (i % 10) < 6 ? "A" : "B"));
    }
    save_dataset(bank, path);
}

// Scenario: confidence 9/10 on every group, every answer A (6/10 correct).
const char* kSixOfTenScenario = R"({
  "rules": [
    {"contains": "Estimate how many questions you can answer correctly", "reply": "9"},
    {"contains": "Estimate how many questions you think A can answer correctly", "reply": "9"},
    {"contains": "Now, please answer these questions with the following format:",
     "reply": "1. A\n2. A\n3. A\n4. A\n5. A\n6. A\n7. A\n8. A\n9. A\n10. A"}
  ]
})";

ExperimentConfig base_config(const TempDir& tmp, const std::string& bank_rel,
                             const std::string& scenario_text) {
    write_text(tmp.str("scenario.json"), scenario_text);
    ExperimentConfig config;
    config.label = "test";
    config.datasets.push_back({tmp.str(bank_rel), BankFormat::jsonl});
    config.group_size = 10;
    config.methods.push_back(MethodSpec{Method::afce});
    config.personas.push_back(Persona::self());
    config.backend.kind = BackendKind::scripted;
    config.backend.scenario_path = tmp.str("scenario.json");
    config.backend.max_parallel = 4;
    config.output_dir = tmp.str("run");
    return config;
}

} // namespace

TEST_CASE("plan arithmetic") {
    TempDir tmp;
    write_six_of_ten_bank(tmp.str("bank.jsonl"), 170);
    auto config = base_config(tmp, "bank.jsonl", kSixOfTenScenario);

    SUBCASE("vanilla over 17 groups of 10 is 170 requests") {
        config.methods = {MethodSpec{Method::vanilla}};
        auto plan = plan_experiment(config, BackendCapabilities{});
        CHECK(plan.groups.size() == 17);
        CHECK(plan.requests.size() == 170);
    }
    SUBCASE("sampling is one request per question carrying three samples") {
        config.methods = {MethodSpec{Method::sampling}};
        config.datasets.clear();
        write_six_of_ten_bank(tmp.str("bank100.jsonl"), 100);
        config.datasets.push_back({tmp.str("bank100.jsonl"), BankFormat::jsonl});
        auto plan = plan_experiment(config, BackendCapabilities{});
        CHECK(plan.requests.size() == 100);
        for (const auto& req : plan.requests) CHECK(req.samples == 3);
    }
    SUBCASE("afce is two requests per group, confidence before answer") {
        auto plan = plan_experiment(config, BackendCapabilities{});
        CHECK(plan.requests.size() == 2 * plan.groups.size());
        for (std::size_t i = 0; i < plan.requests.size(); i += 2) {
            CHECK(plan.requests[i].purpose == Purpose::confidence);
            CHECK(plan.requests[i + 1].purpose == Purpose::answer);
            CHECK(plan.requests[i].group_index == plan.requests[i + 1].group_index);
        }
    }
    SUBCASE("plan digest is stable across invocations") {
        auto a = plan_experiment(config, BackendCapabilities{});
        auto b = plan_experiment(config, BackendCapabilities{});
        CHECK(a.digest == b.digest);
        CHECK(!a.digest.empty());
    }
    SUBCASE("probability against a backend without logprobs fails at plan time") {
        config.methods = {MethodSpec{Method::probability}};
        CHECK_THROWS_AS(plan_experiment(config, BackendCapabilities{false}), ConfigError);
        CHECK_NOTHROW(plan_experiment(config, BackendCapabilities{true}));
    }
    SUBCASE("empty subtask filter result is a config error") {
        config.subtask_filter = {"nosuch:college"};
        CHECK_THROWS_AS(plan_experiment(config, BackendCapabilities{}), ConfigError);
    }
    SUBCASE("afce over the bundled nine-subtask layout: 2 requests per group") {
        config.datasets = {{source_path("data/sample_bank.jsonl"), BankFormat::jsonl}};
        config.subtask_filter = {
            "physics:high_school", "chemistry:high_school", "biology:high_school",
            "physics:college",     "chemistry:college",     "biology:college",
            "physics:expert",      "chemistry:expert",      "biology:expert"};
        config.group_size = 4;
        auto plan = plan_experiment(config, BackendCapabilities{});
        CHECK(plan.groups.size() == 9);
        CHECK(plan.requests.size() == 2 * plan.groups.size());
    }
}

TEST_CASE("scripted afce end to end: 6/10 correct, confidence 9") {
    TempDir tmp;
    write_six_of_ten_bank(tmp.str("bank.jsonl"), 30);
    auto config = base_config(tmp, "bank.jsonl", kSixOfTenScenario);

    RunArtifacts artifacts = run_experiment(config);
    REQUIRE(artifacts.records.size() == 3);
    for (const auto& rec : artifacts.records) {
        CHECK(rec.accuracy == 0.6);
        REQUIRE(rec.confidence.has_value());
        CHECK(*rec.confidence == 0.9);
        CHECK(rec.conf_source == "count_scale");
        CHECK_FALSE(rec.answer_failed);
    }
    REQUIRE(artifacts.reports.size() == 1);
    const SubtaskReport& report = artifacts.reports.front();
    CHECK(report.accuracy == doctest::Approx(0.6).epsilon(1e-15));
    CHECK(report.avg_confidence == doctest::Approx(0.9).epsilon(1e-15));
    CHECK(report.ece == doctest::Approx(0.3).epsilon(1e-15));
    CHECK(report.n_groups == 3);
    CHECK(report.n_failed == 0);
    CHECK(artifacts.provider_calls == 6);  // exactly 2 per group
    CHECK(artifacts.failed_groups() == 0);
}

TEST_CASE("warm cache rerun: zero provider calls, identical artifact bytes") {
    TempDir tmp;
    write_six_of_ten_bank(tmp.str("bank.jsonl"), 30);
    auto config = base_config(tmp, "bank.jsonl", kSixOfTenScenario);

    RunArtifacts first = run_experiment(config);
    CHECK(first.provider_calls == 6);
    auto outcomes_a = read_text(tmp.str("run/outcomes.jsonl"));
    auto csv_a = read_text(tmp.str("run/reports/subtasks.csv"));
    auto json_a = read_text(tmp.str("run/reports/subtasks.json"));
    auto svg_a = read_text(tmp.str("run/reports/calibration.svg"));
    auto personas_a = read_text(tmp.str("run/reports/personas.json"));
    REQUIRE(!outcomes_a.empty());

    RunArtifacts second = run_experiment(config);
    CHECK(second.provider_calls == 0);
    CHECK(second.cache_hits == 6);
    CHECK(read_text(tmp.str("run/outcomes.jsonl")) == outcomes_a);
    CHECK(read_text(tmp.str("run/reports/subtasks.csv")) == csv_a);
    CHECK(read_text(tmp.str("run/reports/subtasks.json")) == json_a);
    CHECK(read_text(tmp.str("run/reports/calibration.svg")) == svg_a);
    CHECK(read_text(tmp.str("run/reports/personas.json")) == personas_a);
}

TEST_CASE("run directory rejects a different config") {
    TempDir tmp;
    write_six_of_ten_bank(tmp.str("bank.jsonl"), 30);
    auto config = base_config(tmp, "bank.jsonl", kSixOfTenScenario);
    run_experiment(config);
    config.label = "different";
    CHECK_THROWS_AS(run_experiment(config), ConfigError);
}

namespace {

// Delays each call by a pseudo-random amount so completion order is a
// permutation of dispatch order.
class JitterBackend : public Backend {
public:
    JitterBackend(std::shared_ptr<Backend> inner, std::uint64_t seed)
        : inner_(std::move(inner)), seed_(seed) {}

    Completion complete(const CompletionRequest& req) override {
        calls_.fetch_add(1);
        auto jitter = fnv1a64(req.unit_id + std::to_string(req.sample_index)) ^ seed_;
        std::this_thread::sleep_for(std::chrono::microseconds(jitter % 2500));
        return inner_->complete(req);
    }
    const BackendConfig& config() const override { return inner_->config(); }

private:
    std::shared_ptr<Backend> inner_;
    std::uint64_t seed_;
};

// Tracks the peak number of concurrent in-flight requests.
class GaugeBackend : public Backend {
public:
    explicit GaugeBackend(std::shared_ptr<Backend> inner) : inner_(std::move(inner)) {}

    Completion complete(const CompletionRequest& req) override {
        calls_.fetch_add(1);
        int now = in_flight_.fetch_add(1) + 1;
        int seen = peak_.load();
        while (now > seen && !peak_.compare_exchange_weak(seen, now)) {
        }
        std::this_thread::sleep_for(std::chrono::milliseconds(2));
        Completion c = inner_->complete(req);
        in_flight_.fetch_sub(1);
        return c;
    }
    const BackendConfig& config() const override { return inner_->config(); }
    int peak() const { return peak_.load(); }

private:
    std::shared_ptr<Backend> inner_;
    std::atomic<int> in_flight_{0};
    std::atomic<int> peak_{0};
};

bool same_records(const std::vector<GroupRecord>& a, const std::vector<GroupRecord>& b) {
    if (a.size() != b.size()) return false;
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (a[i].unit != b[i].unit || a[i].accuracy != b[i].accuracy ||
            a[i].confidence != b[i].confidence || a[i].answer_failed != b[i].answer_failed ||
            a[i].answer_unparsed != b[i].answer_unparsed) {
            return false;
        }
    }
    return true;
}

bool same_reports(const std::vector<SubtaskReport>& a, const std::vector<SubtaskReport>& b) {
    if (a.size() != b.size()) return false;
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (!(a[i].subtask == b[i].subtask) || a[i].method != b[i].method ||
            a[i].accuracy != b[i].accuracy || a[i].avg_confidence != b[i].avg_confidence ||
            a[i].ece != b[i].ece || a[i].n_groups != b[i].n_groups ||
            a[i].n_failed != b[i].n_failed) {
            return false;
        }
    }
    return true;
}

} // namespace

TEST_CASE("completion arrival order never changes aggregates") {
    TempDir tmp;
    write_six_of_ten_bank(tmp.str("bank.jsonl"), 40);
    auto config = base_config(tmp, "bank.jsonl", kSixOfTenScenario);
    config.methods = {MethodSpec{Method::afce}, MethodSpec{Method::vanilla},
                      MethodSpec{Method::quiz_like}};
    // vanilla needs a reply too
    write_text(tmp.str("scenario.json"), R"({
      "rules": [
        {"contains": "Estimate how many questions you can answer correctly", "reply": "9"},
        {"contains": "estimate how many were answered correctly",
         "reply": "1. A\n2. A\n3. A\n4. A\n5. A\n6. A\n7. A\n8. A\n9. A\n10. A\nCorrect answers estimate: 8"},
        {"contains": "report your confidence in this answer", "reply": "Answer: A\nConfidence: 85"},
        {"contains": "Now, please answer these questions with the following format:",
         "reply": "1. A\n2. A\n3. A\n4. A\n5. A\n6. A\n7. A\n8. A\n9. A\n10. A"}
      ]
    })");

    config.backend.max_parallel = 1;
    RunArtifacts sequential = run_experiment(config, make_backend(config.backend));

    for (std::uint64_t trial = 0; trial < 6; ++trial) {
        config.backend.max_parallel = 8;
        auto jittered = std::make_shared<JitterBackend>(make_backend(config.backend), trial);
        RunArtifacts parallel = run_experiment(config, jittered);
        CHECK(same_records(sequential.records, parallel.records));
        CHECK(same_reports(sequential.reports, parallel.reports));
    }
}

TEST_CASE("at most max_parallel requests are in flight") {
    TempDir tmp;
    write_six_of_ten_bank(tmp.str("bank.jsonl"), 40);
    auto config = base_config(tmp, "bank.jsonl", kSixOfTenScenario);
    config.methods = {MethodSpec{Method::vanilla}};
    write_text(tmp.str("scenario.json"), R"({
      "rules": [{"contains": "confidence", "reply": "Answer: A\nConfidence: 85"}]
    })");
    config.backend.max_parallel = 3;
    auto gauge = std::make_shared<GaugeBackend>(make_backend(config.backend));
    run_experiment(config, gauge);
    CHECK(gauge->provider_calls() == 40);
    CHECK(gauge->peak() <= 3);
    CHECK(gauge->peak() >= 2);  // the pool actually ran concurrently
}

TEST_CASE("persona changes that alter only confidence replies leave accuracy bit-identical") {
    TempDir tmp;
    write_six_of_ten_bank(tmp.str("bank.jsonl"), 30);
    auto config = base_config(tmp, "bank.jsonl", kSixOfTenScenario);
    config.personas = {Persona::self(), Persona::expertise("expert")};
    write_text(tmp.str("scenario.json"), R"({
      "rules": [
        {"contains": "Estimate how many questions you think A can answer correctly", "reply": "9"},
        {"contains": "Estimate how many questions you can answer correctly", "reply": "7"},
        {"contains": "Now, please answer these questions with the following format:",
         "reply": "1. A\n2. A\n3. A\n4. A\n5. A\n6. A\n7. A\n8. A\n9. A\n10. A"}
      ]
    })");

    RunArtifacts artifacts = run_experiment(config);
    REQUIRE(artifacts.reports.size() == 2);
    const auto* self_report = &artifacts.reports[0];
    const auto* other_report = &artifacts.reports[1];
    if (self_report->persona.variant != Persona::Variant::none) {
        std::swap(self_report, other_report);
    }
    CHECK(self_report->accuracy == other_report->accuracy);  // bit-identical
    CHECK(self_report->avg_confidence == doctest::Approx(0.7).epsilon(1e-15));
    CHECK(other_report->avg_confidence == doctest::Approx(0.9).epsilon(1e-15));
    CHECK(overplacement_score(*self_report, *other_report) ==
          doctest::Approx(0.2).epsilon(1e-12));
}

TEST_CASE("accounting: groups with confidence plus failures equal planned groups") {
    TempDir tmp;
    write_six_of_ten_bank(tmp.str("bank.jsonl"), 30);
    auto config = base_config(tmp, "bank.jsonl", kSixOfTenScenario);
    // group index 1 answers with an unparsable confidence reply
    write_text(tmp.str("scenario.json"), R"({
      "rules": [
        {"contains": "Estimate how many questions you can answer correctly",
         "replies": ["9", "no idea", "9"]},
        {"contains": "Now, please answer these questions with the following format:",
         "reply": "1. A\n2. A\n3. A\n4. A\n5. A\n6. A\n7. A\n8. A\n9. A\n10. A"}
      ]
    })");
    config.retry_failed_confidence = false;

    RunArtifacts artifacts = run_experiment(config);
    REQUIRE(artifacts.reports.size() == 1);
    const auto& report = artifacts.reports.front();
    CHECK(report.n_groups == 2);
    CHECK(report.n_failed == 1);
    CHECK(report.n_groups + report.n_failed == 3);
    // the failed group still contributed accuracy
    CHECK(report.accuracy == doctest::Approx(0.6).epsilon(1e-15));
    CHECK(artifacts.failed_groups() == 1);
}

TEST_CASE("unparsable answers score as incorrect, fixed denominator") {
    TempDir tmp;
    write_six_of_ten_bank(tmp.str("bank.jsonl"), 10);
    auto config = base_config(tmp, "bank.jsonl", kSixOfTenScenario);
    write_text(tmp.str("scenario.json"), R"({
      "rules": [
        {"contains": "Estimate how many questions you can answer correctly", "reply": "9"},
        {"contains": "Now, please answer these questions with the following format:",
         "reply": "1. A\n2. A\n3. A\n4. A\n5. A\n6. A\n7. A\n8. A\n9. A"}
      ]
    })");

    RunArtifacts artifacts = run_experiment(config);
    REQUIRE(artifacts.records.size() == 1);
    // 9 answered lines: 6 A-keyed correct, the missing 10th is incorrect
    CHECK(artifacts.records[0].accuracy == 0.6);
    CHECK(artifacts.records[0].answer_unparsed == 1);
}

namespace {

// Replies garbage until the retry sample index, then a parsable count.
class RetryProbeBackend : public Backend {
public:
    RetryProbeBackend() {
        config_.kind = BackendKind::scripted;
        config_.scenario_path = "-";
        config_.model_id = "retry-probe";
    }
    Completion complete(const CompletionRequest& req) override {
        calls_.fetch_add(1);
        Completion c;
        c.model_id = config_.model_id;
        if (req.prompt.find("Estimate how many") != std::string::npos) {
            c.text = req.sample_index >= 1000 ? "7" : "hard to say";
        } else {
            c.text = "1. A\n2. A\n3. A\n4. A\n5. A\n6. A\n7. A\n8. A\n9. A\n10. A";
        }
        return c;
    }
    const BackendConfig& config() const override { return config_; }

private:
    BackendConfig config_;
};

} // namespace

TEST_CASE("one automatic retry recovers a parsable confidence and is tallied") {
    TempDir tmp;
    write_six_of_ten_bank(tmp.str("bank.jsonl"), 10);
    auto config = base_config(tmp, "bank.jsonl", kSixOfTenScenario);

    SUBCASE("retry enabled") {
        RunArtifacts artifacts = run_experiment(config, std::make_shared<RetryProbeBackend>());
        REQUIRE(artifacts.records.size() == 1);
        REQUIRE(artifacts.records[0].confidence.has_value());
        CHECK(*artifacts.records[0].confidence == 0.7);
        CHECK(artifacts.parse_retries == 1);
        CHECK(artifacts.failed_groups() == 0);
    }
    SUBCASE("retry disabled records the failure") {
        config.retry_failed_confidence = false;
        RunArtifacts artifacts = run_experiment(config, std::make_shared<RetryProbeBackend>());
        REQUIRE(artifacts.records.size() == 1);
        CHECK_FALSE(artifacts.records[0].confidence.has_value());
        CHECK(artifacts.parse_retries == 0);
        CHECK(artifacts.failed_groups() == 1);
    }
}

TEST_CASE("scripted runs never touch the HTTP stack") {
    TempDir tmp;
    write_six_of_ten_bank(tmp.str("bank.jsonl"), 30);
    auto config = base_config(tmp, "bank.jsonl", kSixOfTenScenario);
    long before = http_backend_constructions();
    run_experiment(config);
    CHECK(http_backend_constructions() == before);
}

TEST_CASE("per-question sample unit behind the config flag") {
    TempDir tmp;
    write_six_of_ten_bank(tmp.str("bank.jsonl"), 20);
    auto config = base_config(tmp, "bank.jsonl", kSixOfTenScenario);
    config.methods = {MethodSpec{Method::vanilla}};
    config.per_question_ece = true;
    write_text(tmp.str("scenario.json"), R"({
      "rules": [{"contains": "confidence", "reply": "Answer: A\nConfidence: 85"}]
    })");

    RunArtifacts artifacts = run_experiment(config);
    CHECK(artifacts.records.size() == 20);
    for (const auto& rec : artifacts.records) {
        CHECK(rec.size == 1);
        CHECK((rec.accuracy == 0.0 || rec.accuracy == 1.0));
        REQUIRE(rec.confidence.has_value());
        CHECK(*rec.confidence == 0.85);
    }
}

TEST_CASE("sampling aggregates across samples; probability reads logprobs") {
    TempDir tmp;
    write_six_of_ten_bank(tmp.str("bank.jsonl"), 10);
    auto config = base_config(tmp, "bank.jsonl", kSixOfTenScenario);

    SUBCASE("sampling") {
        config.methods = {MethodSpec{Method::sampling}};
        write_text(tmp.str("scenario.json"), R"({
          "rules": [{"contains": "confidence", "reply": "Answer: A\nConfidence: 80"}]
        })");
        RunArtifacts artifacts = run_experiment(config);
        REQUIRE(artifacts.records.size() == 1);
        // three identical samples: unanimous vote share
        REQUIRE(artifacts.records[0].confidence.has_value());
        CHECK(*artifacts.records[0].confidence == doctest::Approx(1.0));
        CHECK(artifacts.records[0].accuracy == 0.6);
        CHECK(artifacts.provider_calls == 30);  // 10 questions x 3 samples
        CHECK(artifacts.records[0].conf_source == "avg_conf");
    }
    SUBCASE("probability") {
        config.methods = {MethodSpec{Method::probability}};
        write_text(tmp.str("scenario.json"), R"({
          "capabilities": {"logprobs": true},
          "rules": [{"contains": "selecting only the option letter", "reply": "A",
                     "logprob": -0.35667494393873245}]
        })");
        RunArtifacts artifacts = run_experiment(config);
        REQUIRE(artifacts.records.size() == 1);
        REQUIRE(artifacts.records[0].confidence.has_value());
        CHECK(*artifacts.records[0].confidence == doctest::Approx(0.7).epsilon(1e-12));
        CHECK(artifacts.records[0].conf_source == "first_token_prob");
        CHECK(artifacts.records[0].accuracy == 0.6);
    }
}

TEST_CASE("duplicate method or persona names are rejected") {
    TempDir tmp;
    write_six_of_ten_bank(tmp.str("bank.jsonl"), 10);
    auto config = base_config(tmp, "bank.jsonl", kSixOfTenScenario);

    SUBCASE("duplicate method") {
        config.methods = {MethodSpec{Method::top_k}, MethodSpec{Method::top_k}};
        config.methods[1].k = 6;
        CHECK_THROWS_AS(config.validate(), ConfigError);
    }
    SUBCASE("duplicate persona label") {
        config.personas = {Persona::expertise("expert"), Persona::expertise("expert")};
        CHECK_THROWS_AS(config.validate(), ConfigError);
    }
    SUBCASE("same role with distinct subjects is fine: the label disambiguates") {
        config.personas = {Persona::expertise("expert", "physics"),
                           Persona::expertise("expert", "chemistry")};
        CHECK_NOTHROW(config.validate());
        CHECK(config.personas[0].label() == "expert:physics");
    }
}

TEST_CASE("config json round-trips through the manifest form") {
    TempDir tmp;
    write_six_of_ten_bank(tmp.str("bank.jsonl"), 10);
    auto config = base_config(tmp, "bank.jsonl", kSixOfTenScenario);
    config.personas = {Persona::self(), Persona::expertise("expert", "physics"),
                       Persona::demographic("Asian", "Female", "25-39")};
    config.methods = {MethodSpec{Method::afce}, MethodSpec{Method::top_k}};
    config.subtask_filter = {"physics:high_school"};

    auto round = ExperimentConfig::from_json_text(config.to_json_text());
    CHECK(round.digest() == config.digest());
    CHECK(round.personas.size() == 3);
    CHECK(round.personas[2].label() == "Asian Female 25-39");
    CHECK(round.methods[1].method == Method::top_k);
    CHECK(round.subtask_filter == config.subtask_filter);
}

TEST_CASE("a scenario built from recorded transcripts replays identical outcomes") {
    TempDir tmp;
    write_six_of_ten_bank(tmp.str("bank.jsonl"), 30);
    auto config = base_config(tmp, "bank.jsonl", kSixOfTenScenario);
    RunArtifacts original = run_experiment(config);

    // rebuild a scenario from the cache: one exact-prompt rule per completion
    nlohmann::json replay{{"rules", nlohmann::json::array()}};
    for (const auto& entry : std::filesystem::directory_iterator(tmp.str("run/cache"))) {
        if (entry.path().extension() != ".json") continue;
        auto doc = nlohmann::json::parse(read_text(entry.path().string()));
        replay["rules"].push_back({{"contains", doc.at("prompt").get<std::string>()},
                                   {"reply", doc.at("text").get<std::string>()}});
    }
    write_text(tmp.str("replay_scenario.json"), replay.dump());

    auto replay_config = config;
    replay_config.backend.scenario_path = tmp.str("replay_scenario.json");
    replay_config.output_dir = tmp.str("replay_run");
    RunArtifacts replayed = run_experiment(replay_config);

    REQUIRE(replayed.records.size() == original.records.size());
    for (std::size_t i = 0; i < original.records.size(); ++i) {
        CHECK(replayed.records[i].unit == original.records[i].unit);
        CHECK(replayed.records[i].accuracy == original.records[i].accuracy);
        CHECK(replayed.records[i].confidence == original.records[i].confidence);
    }
}

TEST_CASE("stop request aborts dispatch with the cache intact") {
    TempDir tmp;
    write_six_of_ten_bank(tmp.str("bank.jsonl"), 30);
    auto config = base_config(tmp, "bank.jsonl", kSixOfTenScenario);
    request_stop();
    CHECK_THROWS_AS(run_experiment(config), BackendError);
    clear_stop();
    CHECK_NOTHROW(run_experiment(config));
}
