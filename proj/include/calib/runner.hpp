#pragma once

#include "calib/backend.hpp"
#include "calib/dataset.hpp"
#include "calib/metrics.hpp"
#include "calib/prompts.hpp"

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace calib {

struct DatasetSpec {
    std::string path;
    BankFormat format = BankFormat::jsonl;
};

struct ExperimentConfig {
    std::string label = "run";
    std::vector<DatasetSpec> datasets;
    std::vector<std::string> subtask_filter;  // "subject:difficulty" keys, empty = all
    int group_size = 10;
    GroupOrdering ordering = GroupOrdering::as_is;
    std::uint64_t seed = 0;
    std::vector<MethodSpec> methods;
    std::vector<Persona> personas;  // defaults to the none variant
    BackendConfig backend;
    std::string output_dir = "runs/out";
    bool per_question_ece = false;       // per-question sample unit for per-question methods
    bool retry_failed_confidence = true; // one automatic re-ask on confidence parse failure

    void validate() const;
    std::string digest() const;
    static ExperimentConfig from_json_text(const std::string& text);
    static ExperimentConfig load_file(const std::string& path);
    std::string to_json_text() const;
};

// Everything needed to execute and re-aggregate one experiment.
struct PlannedGroup {
    MethodSpec method;
    Persona persona;
    int group_slot = 0;                      // index into ExperimentPlan::groups
    std::vector<std::size_t> request_slots;  // indices into ExperimentPlan::requests
};

struct ExperimentPlan {
    std::vector<QuestionGroup> groups;
    std::vector<PromptRequest> requests;  // deterministic order, stable unit ids
    std::vector<PlannedGroup> planned;
    std::string digest;
};

// Builds the deterministic request plan. Throws ConfigError when a method
// needs logprobs the backend cannot provide, or when filtering leaves no
// subtask.
ExperimentPlan plan_experiment(const ExperimentConfig& config,
                               const BackendCapabilities& capabilities);

// Thin wrapper exposing just the ordered request list.
std::vector<PromptRequest> plan_requests(const ExperimentConfig& config,
                                         const BackendCapabilities& capabilities);

// Per-group result row; failures stay visible rather than vanish.
struct GroupRecord {
    std::string unit;  // method|persona|subtask|g#### (optionally |q###)
    std::string method;
    std::string persona;
    Subtask subtask;
    int group_index = 0;
    int size = 0;
    double accuracy = 0.0;
    bool answer_failed = false;  // no answers at all (backend failure)
    int answer_unparsed = 0;     // slots scored incorrect for being unparsable
    std::optional<double> confidence;
    std::string conf_source;
};

struct RunArtifacts {
    ExperimentConfig config;
    std::string config_digest;
    std::string plan_digest;
    std::vector<GroupRecord> records;     // sorted by unit
    std::vector<SubtaskReport> reports;   // aggregated per (method, persona, subtask)
    long provider_calls = 0;
    long cache_hits = 0;
    long parse_retries = 0;
    long total_tokens = 0;

    // Records excluded from calibration: missing confidence or no answers.
    int failed_groups() const;
};

// Executes the experiment against the configured backend (factory +
// persistent cache under output_dir/cache). Fatal config/auth errors abort
// before any report is written; the raw cache is retained.
RunArtifacts run_experiment(const ExperimentConfig& config);

// Same pipeline against an injected backend (no cache wrapping); used by
// tests and adversarial fakes.
RunArtifacts run_experiment(const ExperimentConfig& config, std::shared_ptr<Backend> backend);

// Aggregates records into per-(method, persona, subtask) reports. Sorts by
// unit id first, so completion arrival order never matters.
std::vector<SubtaskReport> aggregate_reports(const ExperimentConfig& config,
                                             std::vector<GroupRecord> records);

// manifest.json + outcomes.jsonl + reports/{subtasks.csv,subtasks.json,
// calibration.svg,personas.json} under run_dir. Only the manifest carries
// timestamps; everything else is byte-deterministic.
void write_artifacts(const RunArtifacts& artifacts, const std::string& run_dir);

// Reloads a run directory (manifest + outcomes) and re-aggregates.
RunArtifacts load_artifacts(const std::string& run_dir);

// Rebuilds reports/ from the stored outcomes; byte-idempotent.
void regenerate_reports(const std::string& run_dir);

// Cooperative stop used by the CLI signal handler: dispatch stops issuing
// new requests and the run aborts with the cache intact.
void request_stop();
void clear_stop();
bool stop_requested();

} // namespace calib
