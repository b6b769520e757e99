#include "calib/dataset.hpp"

#include "calib/digest.hpp"

#include <json.hpp>

#include <algorithm>
#include <cctype>
#include <fstream>
#include <random>
#include <unordered_map>
#include <unordered_set>

using nlohmann::json;

namespace calib {

std::string to_string(Difficulty d) {
    switch (d) {
        case Difficulty::high_school: return "high_school";
        case Difficulty::college: return "college";
        case Difficulty::expert: return "expert";
        case Difficulty::general: return "general";
    }
    return "general";
}

std::string to_string(Kind k) {
    return k == Kind::multiple_choice ? "multiple_choice" : "open_ended";
}

Difficulty difficulty_from_string(const std::string& s) {
    if (s == "high_school") return Difficulty::high_school;
    if (s == "college") return Difficulty::college;
    if (s == "expert") return Difficulty::expert;
    if (s == "general") return Difficulty::general;
    throw DatasetError("unknown difficulty tag: '" + s + "'");
}

Kind kind_from_string(const std::string& s) {
    if (s == "multiple_choice") return Kind::multiple_choice;
    if (s == "open_ended") return Kind::open_ended;
    throw DatasetError("unknown kind: '" + s + "'");
}

std::string Subtask::key() const {
    return subject + ":" + to_string(difficulty);
}

bool QuestionGroup::all_multiple_choice() const {
    return std::all_of(questions.begin(), questions.end(),
                       [](const QuestionRecord& q) { return q.kind == Kind::multiple_choice; });
}

void validate_record(const QuestionRecord& rec) {
    auto fail = [&rec](const std::string& msg) {
        throw DatasetError("record '" + rec.id + "': " + msg);
    };
    if (rec.id.empty()) fail("empty id");
    if (rec.subject.empty()) fail("empty subject");
    if (rec.text.empty()) fail("empty question text");
    if (rec.answers.empty()) fail("missing answer");

    if (rec.kind == Kind::multiple_choice) {
        if (rec.options.size() < 2) fail("multiple_choice requires at least 2 options");
        std::unordered_set<std::string> labels;
        for (const auto& opt : rec.options) {
            if (opt.label.empty()) fail("empty option label");
            if (!labels.insert(opt.label).second) fail("duplicate option label '" + opt.label + "'");
        }
        if (rec.answers.size() != 1) fail("multiple_choice requires exactly one answer label");
        if (!labels.count(rec.answers.front()))
            fail("answer label '" + rec.answers.front() + "' not among option labels");
    } else {
        if (!rec.options.empty()) fail("open_ended must have no options");
        for (const auto& a : rec.answers) {
            if (a.empty()) fail("empty accepted answer string");
        }
    }
}

namespace {

json record_to_json(const QuestionRecord& rec) {
    json opts = json::array();
    for (const auto& o : rec.options) {
        opts.push_back({{"label", o.label}, {"body", o.body}});
    }
    json answers;
    if (rec.kind == Kind::multiple_choice) {
        answers = rec.answers.front();
    } else {
        answers = rec.answers;
    }
    return json{{"id", rec.id},
                {"subject", rec.subject},
                {"difficulty", to_string(rec.difficulty)},
                {"kind", to_string(rec.kind)},
                {"text", rec.text},
                {"options", opts},
                {"answers", answers}};
}

QuestionRecord record_from_json(const json& j) {
    QuestionRecord rec;
    rec.id = j.at("id").get<std::string>();
    rec.subject = j.at("subject").get<std::string>();
    rec.difficulty = difficulty_from_string(j.at("difficulty").get<std::string>());
    rec.kind = kind_from_string(j.at("kind").get<std::string>());
    rec.text = j.at("text").get<std::string>();
    if (j.contains("options")) {
        for (const auto& o : j.at("options")) {
            rec.options.push_back({o.at("label").get<std::string>(), o.at("body").get<std::string>()});
        }
    }
    const json& ans = j.at("answers");
    if (ans.is_string()) {
        rec.answers.push_back(ans.get<std::string>());
    } else if (ans.is_array()) {
        for (const auto& a : ans) rec.answers.push_back(a.get<std::string>());
    } else {
        throw DatasetError("answers must be a string or an array of strings");
    }
    return rec;
}

// Minimal CSV reader with RFC-style quoting. Returns one vector of cells per row.
std::vector<std::vector<std::string>> read_csv(std::istream& in) {
    std::vector<std::vector<std::string>> rows;
    std::vector<std::string> row;
    std::string cell;
    bool quoted = false;
    bool any = false;
    char c;
    while (in.get(c)) {
        any = true;
        if (quoted) {
            if (c == '"') {
                if (in.peek() == '"') {
                    in.get(c);
                    cell.push_back('"');
                } else {
                    quoted = false;
                }
            } else {
                cell.push_back(c);
            }
        } else if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            row.push_back(std::move(cell));
            cell.clear();
        } else if (c == '\n') {
            row.push_back(std::move(cell));
            cell.clear();
            rows.push_back(std::move(row));
            row.clear();
        } else if (c != '\r') {
            cell.push_back(c);
        }
    }
    if (any && (!cell.empty() || !row.empty())) {
        row.push_back(std::move(cell));
        rows.push_back(std::move(row));
    }
    return rows;
}

std::vector<std::string> split_pipe(const std::string& s) {
    std::vector<std::string> parts;
    std::string cur;
    for (char c : s) {
        if (c == '|') {
            parts.push_back(cur);
            cur.clear();
        } else {
            cur.push_back(c);
        }
    }
    if (!cur.empty()) parts.push_back(cur);
    return parts;
}

// Option cell entries are "<label>. <body>".
QuestionOption parse_option_cell(const std::string& entry, std::size_t line_no) {
    auto dot = entry.find(". ");
    if (dot == std::string::npos || dot == 0) {
        throw DatasetError("line " + std::to_string(line_no) +
                           ": malformed option entry '" + entry + "' (want 'label. body')");
    }
    return {entry.substr(0, dot), entry.substr(dot + 2)};
}

std::vector<QuestionRecord> load_jsonl(std::istream& in) {
    std::vector<QuestionRecord> records;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        json j;
        try {
            j = json::parse(line);
            records.push_back(record_from_json(j));
        } catch (const json::exception& e) {
            throw DatasetError("line " + std::to_string(line_no) + ": " + e.what());
        } catch (const DatasetError& e) {
            throw DatasetError("line " + std::to_string(line_no) + ": " + e.what());
        }
    }
    return records;
}

std::vector<QuestionRecord> load_csv(std::istream& in) {
    auto rows = read_csv(in);
    if (rows.empty()) return {};
    const std::vector<std::string> header = {"id",   "subject", "difficulty", "kind",
                                             "text", "options", "answers"};
    if (rows.front() != header) {
        throw DatasetError("line 1: CSV header must be id,subject,difficulty,kind,text,options,answers");
    }
    std::vector<QuestionRecord> records;
    for (std::size_t i = 1; i < rows.size(); ++i) {
        std::size_t line_no = i + 1;
        const auto& row = rows[i];
        if (row.size() == 1 && row.front().empty()) continue;
        if (row.size() != header.size()) {
            throw DatasetError("line " + std::to_string(line_no) + ": expected " +
                               std::to_string(header.size()) + " fields, got " +
                               std::to_string(row.size()));
        }
        QuestionRecord rec;
        rec.id = row[0];
        rec.subject = row[1];
        try {
            rec.difficulty = difficulty_from_string(row[2]);
            rec.kind = kind_from_string(row[3]);
        } catch (const DatasetError& e) {
            throw DatasetError("line " + std::to_string(line_no) + ": " + e.what());
        }
        rec.text = row[4];
        for (const auto& entry : split_pipe(row[5])) {
            rec.options.push_back(parse_option_cell(entry, line_no));
        }
        if (rec.kind == Kind::multiple_choice) {
            rec.answers.push_back(row[6]);
        } else {
            rec.answers = split_pipe(row[6]);
        }
        records.push_back(std::move(rec));
    }
    return records;
}

} // namespace

BankFormat bank_format_from_string(const std::string& s) {
    if (s == "jsonl") return BankFormat::jsonl;
    if (s == "csv") return BankFormat::csv;
    throw DatasetError("unknown bank format: '" + s + "'");
}

std::vector<QuestionRecord> load_dataset(const std::string& path, BankFormat format) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DatasetError("cannot open dataset file: " + path);

    std::vector<QuestionRecord> records =
        format == BankFormat::jsonl ? load_jsonl(in) : load_csv(in);

    std::unordered_set<std::string> ids;
    for (const auto& rec : records) {
        validate_record(rec);
        if (!ids.insert(rec.id).second) {
            throw DatasetError("duplicate id '" + rec.id + "' in " + path);
        }
    }
    return records;
}

std::string to_jsonl(const std::vector<QuestionRecord>& records) {
    std::string out;
    for (const auto& rec : records) {
        out += record_to_json(rec).dump();
        out += '\n';
    }
    return out;
}

void save_dataset(const std::vector<QuestionRecord>& records, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DatasetError("cannot write dataset file: " + path);
    out << to_jsonl(records);
}

std::vector<QuestionGroup> group_questions(const std::vector<QuestionRecord>& records,
                                           int group_size,
                                           GroupOrdering ordering,
                                           std::uint64_t seed) {
    if (group_size < 1) throw DatasetError("group_size must be >= 1");

    // Subtasks keep their order of first appearance.
    std::vector<Subtask> subtask_order;
    std::unordered_map<std::string, std::vector<QuestionRecord>> by_subtask;
    for (const auto& rec : records) {
        Subtask st{rec.subject, rec.difficulty};
        auto [it, inserted] = by_subtask.try_emplace(st.key());
        if (inserted) subtask_order.push_back(st);
        it->second.push_back(rec);
    }

    std::vector<QuestionGroup> groups;
    int group_index = 0;
    for (const auto& st : subtask_order) {
        auto& qs = by_subtask[st.key()];
        if (ordering == GroupOrdering::shuffled) {
            // Per-subtask engine so differing seeds permute only within a
            // subtask; Fisher-Yates with modulo draw for cross-platform
            // byte-stable output.
            std::mt19937_64 eng(seed ^ fnv1a64(st.key()));
            for (std::size_t i = qs.size(); i > 1; --i) {
                std::size_t j = static_cast<std::size_t>(eng() % i);
                std::swap(qs[i - 1], qs[j]);
            }
        }
        for (std::size_t off = 0; off < qs.size(); off += group_size) {
            QuestionGroup g;
            g.group_index = group_index++;
            g.subtask = st;
            std::size_t end = std::min(off + group_size, qs.size());
            g.questions.assign(qs.begin() + off, qs.begin() + end);
            groups.push_back(std::move(g));
        }
    }
    return groups;
}

std::string normalize_answer(const std::string& s) {
    std::string out;
    out.reserve(s.size());
    bool pending_space = false;
    for (unsigned char c : s) {
        if (std::isalnum(c)) {
            if (pending_space && !out.empty()) out.push_back(' ');
            pending_space = false;
            out.push_back(static_cast<char>(std::tolower(c)));
        } else if (std::isspace(c)) {
            pending_space = true;
        }
        // punctuation dropped
    }
    return out;
}

bool grade_answer(const QuestionRecord& rec, const std::string& reply) {
    if (rec.kind == Kind::multiple_choice) {
        return reply == rec.answers.front();
    }
    std::string norm = normalize_answer(reply);
    return std::any_of(rec.answers.begin(), rec.answers.end(), [&norm](const std::string& a) {
        return normalize_answer(a) == norm;
    });
}

} // namespace calib
