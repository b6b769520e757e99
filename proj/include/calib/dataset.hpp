#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace calib {

enum class Difficulty { high_school, college, expert, general };
enum class Kind { multiple_choice, open_ended };

std::string to_string(Difficulty d);
std::string to_string(Kind k);
Difficulty difficulty_from_string(const std::string& s);
Kind kind_from_string(const std::string& s);

struct DatasetError : std::runtime_error {
    explicit DatasetError(const std::string& what) : std::runtime_error(what) {}
};

struct QuestionOption {
    std::string label;
    std::string body;
    bool operator==(const QuestionOption&) const = default;
};

struct QuestionRecord {
    std::string id;
    std::string subject;
    Difficulty difficulty = Difficulty::general;
    Kind kind = Kind::multiple_choice;
    std::string text;
    std::vector<QuestionOption> options;  // empty iff open_ended
    std::vector<std::string> answers;     // one option label, or accepted strings

    bool operator==(const QuestionRecord&) const = default;
};

struct Subtask {
    std::string subject;
    Difficulty difficulty = Difficulty::general;

    bool operator==(const Subtask&) const = default;
    // "subject:difficulty", the aggregation key used in unit ids and reports.
    std::string key() const;
};

struct QuestionGroup {
    int group_index = 0;
    Subtask subtask;
    std::vector<QuestionRecord> questions;

    int size() const { return static_cast<int>(questions.size()); }
    bool all_multiple_choice() const;
};

enum class GroupOrdering { as_is, shuffled };

// Checks every QuestionRecord invariant; throws DatasetError naming the
// offending record on violation.
void validate_record(const QuestionRecord& rec);

// Loads a bank from a JSONL or CSV file. Every returned record is validated,
// ids are unique, input order is preserved. Errors carry the 1-based line
// number of the offending line.
enum class BankFormat { jsonl, csv };
std::vector<QuestionRecord> load_dataset(const std::string& path, BankFormat format);
BankFormat bank_format_from_string(const std::string& s);

// Serializes records back to the JSONL schema (one object per line).
std::string to_jsonl(const std::vector<QuestionRecord>& records);
void save_dataset(const std::vector<QuestionRecord>& records, const std::string& path);

// Partitions records into homogeneous per-subtask groups of at most
// group_size questions, in input order or in a seeded per-subtask shuffle.
// The final partial group of a subtask is retained with its actual size.
std::vector<QuestionGroup> group_questions(const std::vector<QuestionRecord>& records,
                                           int group_size,
                                           GroupOrdering ordering,
                                           std::uint64_t seed);

// Grading rule for open-ended answers: case, whitespace and punctuation
// normalized exact match against any accepted answer string.
std::string normalize_answer(const std::string& s);
bool grade_answer(const QuestionRecord& rec, const std::string& reply);

} // namespace calib
