#include "calib/dataset.hpp"
#include "calib/runner.hpp"
#include "calib/report.hpp"

#include <CLI11.hpp>

#include <csignal>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>

namespace fs = std::filesystem;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitBackendFatal = 3;
constexpr int kExitWithFailures = 4;

void handle_signal(int) {
    calib::request_stop();
}

std::vector<std::string> split_csv_list(const std::string& s) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : s) {
        if (c == ',') {
            if (!cur.empty()) out.push_back(cur);
            cur.clear();
        } else {
            cur.push_back(c);
        }
    }
    if (!cur.empty()) out.push_back(cur);
    return out;
}

int cmd_validate(const std::string& path, const std::string& format) {
    auto records = calib::load_dataset(path, calib::bank_format_from_string(format));
    std::map<std::string, int> counts;
    std::map<std::string, int> kind_counts;
    for (const auto& rec : records) {
        counts[rec.subject + "/" + calib::to_string(rec.difficulty)] += 1;
        kind_counts[calib::to_string(rec.kind)] += 1;
    }
    for (const auto& [key, n] : counts) {
        std::printf("%s: %d\n", key.c_str(), n);
    }
    std::printf("total: %zu records, %zu subtasks", records.size(), counts.size());
    for (const auto& [kind, n] : kind_counts) {
        std::printf(", %d %s", n, kind.c_str());
    }
    std::printf("\n");
    return kExitOk;
}

void print_run_summary(const calib::RunArtifacts& artifacts) {
    std::printf("%-12s %-14s %-12s %-22s %6s %6s %6s %4s %4s\n", "difficulty", "subject",
                "method", "persona", "acc", "avc", "ece", "n", "fail");
    for (const auto& r : artifacts.reports) {
        std::printf("%-12s %-14s %-12s %-22s %6s %6s %6s %4d %4d\n",
                    calib::to_string(r.subtask.difficulty).c_str(), r.subtask.subject.c_str(),
                    r.method.c_str(), r.persona.label().c_str(),
                    calib::format_percent(r.accuracy).c_str(),
                    calib::format_percent(r.avg_confidence).c_str(),
                    calib::format_percent(r.ece).c_str(), r.n_groups, r.n_failed);
    }
    std::printf("provider calls: %ld, cache hits: %ld, parse retries: %ld, tokens: %ld\n",
                artifacts.provider_calls, artifacts.cache_hits, artifacts.parse_retries,
                artifacts.total_tokens);
}

int cmd_run(const std::string& config_path, const std::string& backend_override,
            const std::string& methods, int group_size, long seed, const std::string& ordering,
            const std::string& output_dir, const std::string& label) {
    calib::ExperimentConfig config = calib::ExperimentConfig::load_file(config_path);

    // flags win over config-file fields
    if (!backend_override.empty()) {
        const std::string prefix = "scripted:";
        if (backend_override.rfind(prefix, 0) != 0) {
            throw calib::ConfigError("--backend-override expects scripted:<scenario file>");
        }
        config.backend = calib::BackendConfig{};
        config.backend.kind = calib::BackendKind::scripted;
        config.backend.scenario_path = backend_override.substr(prefix.size());
    }
    if (!methods.empty()) {
        config.methods.clear();
        for (const auto& name : split_csv_list(methods)) {
            calib::MethodSpec spec;
            spec.method = calib::method_from_string(name);
            config.methods.push_back(spec);
        }
    }
    if (group_size > 0) config.group_size = group_size;
    if (seed >= 0) config.seed = static_cast<std::uint64_t>(seed);
    if (!ordering.empty()) {
        if (ordering == "as_is") {
            config.ordering = calib::GroupOrdering::as_is;
        } else if (ordering == "shuffled") {
            config.ordering = calib::GroupOrdering::shuffled;
        } else {
            throw calib::ConfigError("--ordering must be as_is or shuffled");
        }
    }
    if (!output_dir.empty()) config.output_dir = output_dir;
    if (!label.empty()) config.label = label;

    calib::RunArtifacts artifacts = calib::run_experiment(config);
    print_run_summary(artifacts);
    std::printf("artifacts written to %s\n", config.output_dir.c_str());

    if (artifacts.failed_groups() > 0) return kExitWithFailures;
    return kExitOk;
}

int cmd_report(const std::string& run_dir) {
    calib::regenerate_reports(run_dir);
    std::printf("reports regenerated under %s/reports\n", run_dir.c_str());
    return kExitOk;
}

int cmd_compare(const std::vector<std::string>& run_dirs) {
    std::printf("run,label,method,persona,ave\n");
    for (const auto& dir : run_dirs) {
        calib::RunArtifacts artifacts = calib::load_artifacts(dir);
        // AvE per (method, persona) over its subtask reports
        std::map<std::string, std::vector<calib::SubtaskReport>> slices;
        for (const auto& r : artifacts.reports) {
            slices[r.method + "," + r.persona.label()].push_back(r);
        }
        for (const auto& [key, slice] : slices) {
            std::printf("%s,%s,%s,%s\n", dir.c_str(), artifacts.config.label.c_str(), key.c_str(),
                        calib::format_percent(calib::average_ece(slice)).c_str());
        }
    }
    return kExitOk;
}

fs::path cache_dir_of(const std::string& dir) {
    fs::path p(dir);
    if (fs::exists(p / "cache")) return p / "cache";
    return p;
}

int cmd_cache(const std::string& inspect_dir, const std::string& clear_dir) {
    if (!inspect_dir.empty()) {
        fs::path dir = cache_dir_of(inspect_dir);
        if (!fs::exists(dir)) throw calib::ConfigError("no cache at " + dir.string());
        std::size_t entries = 0;
        std::uintmax_t bytes = 0;
        for (const auto& e : fs::directory_iterator(dir)) {
            if (e.path().extension() == ".json") {
                ++entries;
                bytes += e.file_size();
            }
        }
        std::printf("%zu cached completions, %ju bytes, %s\n", entries, bytes,
                    dir.string().c_str());
        return kExitOk;
    }
    fs::path dir = cache_dir_of(clear_dir);
    if (!fs::exists(dir)) throw calib::ConfigError("no cache at " + dir.string());
    std::size_t removed = 0;
    for (const auto& e : fs::directory_iterator(dir)) {
        if (e.path().extension() == ".json") {
            fs::remove(e.path());
            ++removed;
        }
    }
    std::printf("removed %zu cached completions from %s\n", removed, dir.string().c_str());
    return kExitOk;
}

} // namespace

int main(int argc, char** argv) {
    std::signal(SIGINT, handle_signal);
    std::signal(SIGTERM, handle_signal);

    CLI::App app{"confidence-elicitation harness: run QA banks against LLM backends "
                 "and score calibration"};
    app.require_subcommand(1);

    auto* validate = app.add_subcommand("validate", "check a question bank and print subtask counts");
    std::string data_path, data_format = "jsonl";
    validate->add_option("--data", data_path, "bank file")->required();
    validate->add_option("--format", data_format, "jsonl or csv");

    auto* run = app.add_subcommand("run", "execute an experiment");
    std::string config_path, backend_override, methods, ordering, output_dir, label;
    int group_size = 0;
    long seed = -1;
    run->add_option("--config", config_path, "experiment config JSON")->required();
    run->add_option("--backend-override", backend_override, "scripted:<scenario file>");
    run->add_option("--methods", methods, "comma-separated method list override");
    run->add_option("--group-size", group_size, "questions per group override");
    run->add_option("--seed", seed, "shuffle seed override");
    run->add_option("--ordering", ordering, "as_is or shuffled");
    run->add_option("--output-dir", output_dir, "run directory override");
    run->add_option("--label", label, "run label override");

    auto* report = app.add_subcommand("report", "regenerate reports for a finished run");
    std::string report_dir;
    report->add_option("--run", report_dir, "run directory")->required();

    auto* compare = app.add_subcommand("compare", "AvE table across runs");
    std::vector<std::string> compare_dirs;
    compare->add_option("--runs", compare_dirs, "run directories")->required()->expected(-1);

    auto* cache = app.add_subcommand("cache", "inspect or clear a completion cache");
    std::string inspect_dir, clear_dir;
    cache->add_option("--inspect", inspect_dir, "run or cache directory");
    cache->add_option("--clear", clear_dir, "run or cache directory");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitConfig;
    }

    try {
        if (validate->parsed()) return cmd_validate(data_path, data_format);
        if (run->parsed()) {
            return cmd_run(config_path, backend_override, methods, group_size, seed, ordering,
                           output_dir, label);
        }
        if (report->parsed()) return cmd_report(report_dir);
        if (compare->parsed()) return cmd_compare(compare_dirs);
        if (cache->parsed()) {
            if (inspect_dir.empty() == clear_dir.empty()) {
                throw calib::ConfigError("cache needs exactly one of --inspect or --clear");
            }
            return cmd_cache(inspect_dir, clear_dir);
        }
    } catch (const calib::ConfigError& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return kExitConfig;
    } catch (const calib::DatasetError& e) {
        std::fprintf(stderr, "dataset error: %s\n", e.what());
        return kExitConfig;
    } catch (const calib::BackendError& e) {
        std::fprintf(stderr, "backend error: %s\n", e.what());
        return kExitBackendFatal;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitBackendFatal;
    }
    return kExitConfig;
}
