#include "calib/parsing.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdlib>

namespace calib {

namespace {

struct Line {
    std::string text;
    int number = -1;      // parsed "n." / "n)" / "n:" prefix, or -1
    std::string rest;     // text after the numeric prefix
};

std::string trim(const std::string& s) {
    std::size_t b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    std::size_t e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

std::vector<Line> split_lines(const std::string& text) {
    std::vector<Line> lines;
    std::size_t start = 0;
    while (start <= text.size()) {
        std::size_t nl = text.find('\n', start);
        std::string raw = text.substr(start, nl == std::string::npos ? std::string::npos : nl - start);
        Line line;
        line.text = trim(raw);
        // numeric prefix "n." / "n)" / "n:"; absurd digit runs are not indices
        std::size_t i = 0;
        while (i < line.text.size() && std::isdigit(static_cast<unsigned char>(line.text[i]))) ++i;
        if (i > 0 && i <= 6 && i < line.text.size() &&
            (line.text[i] == '.' || line.text[i] == ')' || line.text[i] == ':')) {
            line.number = std::atoi(line.text.substr(0, i).c_str());
            line.rest = trim(line.text.substr(i + 1));
        }
        lines.push_back(std::move(line));
        if (nl == std::string::npos) break;
        start = nl + 1;
    }
    return lines;
}

// Case-insensitive match of an alphanumeric token against the valid labels;
// returns the canonical label.
std::optional<std::string> match_label(const std::string& token,
                                       const std::vector<std::string>& labels) {
    for (const auto& label : labels) {
        if (label.size() != token.size()) continue;
        bool eq = true;
        for (std::size_t i = 0; i < label.size(); ++i) {
            if (std::tolower(static_cast<unsigned char>(label[i])) !=
                std::tolower(static_cast<unsigned char>(token[i]))) {
                eq = false;
                break;
            }
        }
        if (eq) return label;
    }
    return std::nullopt;
}

// First standalone token in s matching a valid label. Returns the label and
// the position one past the token.
std::optional<std::pair<std::string, std::size_t>> find_label(
    const std::string& s, const std::vector<std::string>& labels, std::size_t from = 0) {
    std::size_t i = from;
    while (i < s.size()) {
        if (std::isalnum(static_cast<unsigned char>(s[i]))) {
            std::size_t j = i;
            while (j < s.size() && std::isalnum(static_cast<unsigned char>(s[j]))) ++j;
            if (auto m = match_label(s.substr(i, j - i), labels)) {
                return std::make_pair(*m, j);
            }
            i = j;
        } else {
            ++i;
        }
    }
    return std::nullopt;
}

// Removes echoes of the prompt's numeric scale ("0-k", "0 to k") so the scan
// for the reported number does not trip on them.
std::string strip_scale_echo(std::string s, const std::string& bound) {
    auto erase_pattern = [&s](const std::string& middle, const std::string& bound) {
        // pattern: '0' + middle + bound, middle may be padded with spaces
        for (std::size_t pos = 0; (pos = s.find('0', pos)) != std::string::npos;) {
            std::size_t p = pos + 1;
            while (p < s.size() && s[p] == ' ') ++p;
            if (s.compare(p, middle.size(), middle) != 0) {
                ++pos;
                continue;
            }
            p += middle.size();
            while (p < s.size() && s[p] == ' ') ++p;
            if (s.compare(p, bound.size(), bound) != 0 ||
                (p + bound.size() < s.size() &&
                 std::isdigit(static_cast<unsigned char>(s[p + bound.size()])))) {
                ++pos;
                continue;
            }
            s.erase(pos, p + bound.size() - pos);
        }
    };
    erase_pattern("-", bound);
    erase_pattern("to", bound);
    return s;
}

struct NumberToken {
    double value;
    bool has_percent;
    bool is_integer;
    bool negative;
};

// Scans numeric tokens left to right: integer or decimal runs with an
// optional sign and an optional trailing % (whitespace allowed before %).
std::vector<NumberToken> scan_numbers(const std::string& s) {
    std::vector<NumberToken> out;
    std::size_t i = 0;
    while (i < s.size()) {
        if (!std::isdigit(static_cast<unsigned char>(s[i]))) {
            ++i;
            continue;
        }
        std::size_t begin = i;
        // leading-dot decimal (".85"), when the dot does not belong to a
        // preceding number
        bool leading_dot = begin > 0 && s[begin - 1] == '.' &&
                           (begin < 2 || !std::isdigit(static_cast<unsigned char>(s[begin - 2])));
        if (leading_dot) --begin;
        bool negative = begin > 0 && s[begin - 1] == '-' &&
                        (begin < 2 || !std::isdigit(static_cast<unsigned char>(s[begin - 2])));
        std::size_t j = i;
        while (j < s.size() && std::isdigit(static_cast<unsigned char>(s[j]))) ++j;
        bool is_integer = !leading_dot;
        if (!leading_dot && j < s.size() && s[j] == '.' && j + 1 < s.size() &&
            std::isdigit(static_cast<unsigned char>(s[j + 1]))) {
            is_integer = false;
            ++j;
            while (j < s.size() && std::isdigit(static_cast<unsigned char>(s[j]))) ++j;
        }
        // fraction part of a decimal we already consumed cannot start a token
        std::size_t k = j;
        while (k < s.size() && s[k] == ' ') ++k;
        bool has_percent = k < s.size() && s[k] == '%';
        std::string token = s.substr(begin, j - begin);
        if (token.size() <= 12) {  // ignore absurd digit runs
            NumberToken t;
            t.value = std::strtod(token.c_str(), nullptr);
            t.has_percent = has_percent;
            t.is_integer = is_integer;
            t.negative = negative;
            out.push_back(t);
        }
        i = j;
    }
    return out;
}

// Fills a ParsedAnswerSet from numbered lines; extract pulls the answer out
// of the rest of a numbered line (or of a bare line in positional mode).
template <typename Extract>
ParsedAnswerSet parse_numbered_block(const std::string& text, int expected, Extract extract,
                                     bool allow_bare_lines,
                                     const std::vector<std::string>& labels) {
    ParsedAnswerSet result;
    result.labels.assign(static_cast<std::size_t>(expected), kUnparsedLabel);

    auto lines = split_lines(text);
    bool any_numbered = false;
    for (const auto& line : lines) {
        if (line.number < 1 || line.number > expected) continue;
        any_numbered = true;
        std::size_t idx = static_cast<std::size_t>(line.number - 1);
        if (result.labels[idx] != kUnparsedLabel) continue;  // first occurrence wins
        if (auto v = extract(line.rest)) result.labels[idx] = *v;
    }

    if (!any_numbered && allow_bare_lines) {
        std::vector<std::string> bare;
        for (const auto& line : lines) {
            if (line.text.empty()) continue;
            if (auto m = match_label(line.text, labels)) {
                bare.push_back(*m);
            } else {
                bare.clear();
                break;
            }
        }
        if (static_cast<int>(bare.size()) == expected) {
            result.labels = std::move(bare);
        }
    }

    for (int i = 0; i < expected; ++i) {
        if (result.labels[static_cast<std::size_t>(i)] == kUnparsedLabel) {
            result.unparsed_indices.push_back(i);
        }
    }
    return result;
}

} // namespace

ParsedAnswerSet parse_option_letters(const std::string& text, int expected,
                                     const std::vector<std::string>& valid_labels) {
    return parse_numbered_block(
        text, expected,
        [&valid_labels](const std::string& rest) -> std::optional<std::string> {
            if (auto hit = find_label(rest, valid_labels)) return hit->first;
            return std::nullopt;
        },
        /*allow_bare_lines=*/true, valid_labels);
}

ParsedAnswerSet parse_numbered_answers(const std::string& text, int expected) {
    return parse_numbered_block(
        text, expected,
        [](const std::string& rest) -> std::optional<std::string> {
            if (rest.empty()) return std::nullopt;
            return rest;
        },
        /*allow_bare_lines=*/false, {});
}

std::optional<ConfidenceValue> parse_count_confidence(const std::string& text, int k) {
    if (k < 1) return std::nullopt;
    std::string cleaned = strip_scale_echo(text, std::to_string(k));
    for (const auto& t : scan_numbers(cleaned)) {
        if (!t.is_integer || t.negative) continue;
        if (t.value < 0 || t.value > k) continue;
        ConfidenceValue cv;
        cv.value = t.value / k;
        cv.source = ConfidenceValue::Source::count_scale;
        cv.count = static_cast<int>(t.value);
        cv.scale_k = k;
        return cv;
    }
    return std::nullopt;
}

std::optional<ConfidenceValue> parse_percent_confidence(const std::string& text) {
    std::string cleaned = strip_scale_echo(text, "100");
    for (const auto& t : scan_numbers(cleaned)) {
        if (t.negative || t.value > 100.0) continue;
        ConfidenceValue cv;
        cv.source = ConfidenceValue::Source::percent;
        if (t.has_percent) {
            cv.value = t.value / 100.0;
        } else if (t.value <= 1.0) {
            cv.value = t.value;  // already a fraction
        } else {
            cv.value = t.value / 100.0;
        }
        return cv;
    }
    return std::nullopt;
}

std::optional<std::pair<std::string, ConfidenceValue>> parse_topk(
    const std::string& text, int k, const std::vector<std::string>& valid_labels) {
    std::vector<std::pair<std::string, double>> pairs;
    for (const auto& line : split_lines(text)) {
        if (static_cast<int>(pairs.size()) >= k) break;
        // accept "G1: B - 70%", "B 70%", "G2) A: 20" and similar
        const std::string& s = line.text;
        auto hit = find_label(s, valid_labels);
        if (!hit) continue;
        std::string tail = s.substr(hit->second);
        double prob = -1.0;
        for (const auto& t : scan_numbers(tail)) {
            if (t.negative || t.value > 100.0) continue;
            // same reading as parse_percent_confidence
            if (t.has_percent) {
                prob = t.value / 100.0;
            } else if (t.value <= 1.0) {
                prob = t.value;
            } else {
                prob = t.value / 100.0;
            }
            break;
        }
        if (prob < 0.0) continue;
        pairs.emplace_back(hit->first, prob);
    }
    if (pairs.empty()) return std::nullopt;
    std::size_t best = 0;
    for (std::size_t i = 1; i < pairs.size(); ++i) {
        if (pairs[i].second > pairs[best].second) best = i;  // ties keep the earliest
    }
    ConfidenceValue cv;
    cv.value = pairs[best].second;
    cv.source = ConfidenceValue::Source::topk_prob;
    return std::make_pair(pairs[best].first, cv);
}

std::optional<std::pair<std::string, ConfidenceValue>> aggregate_avg_conf(
    const std::vector<std::pair<std::string, ConfidenceValue>>& samples) {
    if (samples.empty()) return std::nullopt;

    std::vector<std::string> order;  // labels by first appearance, for stable iteration
    auto score_of = [&samples](const std::string& label) {
        double s = 0.0;
        for (const auto& [l, c] : samples) {
            if (l == label) s += c.value;
        }
        return s;
    };
    double total = 0.0;
    for (const auto& [label, conf] : samples) {
        total += conf.value;
        if (std::find(order.begin(), order.end(), label) == order.end()) {
            order.push_back(label);
        }
    }
    std::sort(order.begin(), order.end());  // option-label order for tie-breaks

    std::string best_label;
    double best_score = -1.0;
    if (total > 0.0) {
        for (const auto& label : order) {
            double s = score_of(label) / total;
            if (s > best_score) {
                best_score = s;
                best_label = label;
            }
        }
    } else {
        // all-zero confidences: fall back to majority vote, score 0
        std::size_t best_count = 0;
        for (const auto& label : order) {
            std::size_t n = static_cast<std::size_t>(
                std::count_if(samples.begin(), samples.end(),
                              [&label](const auto& s) { return s.first == label; }));
            if (n > best_count) {
                best_count = n;
                best_label = label;
            }
        }
        best_score = 0.0;
    }
    ConfidenceValue cv;
    cv.value = best_score;
    cv.source = ConfidenceValue::Source::avg_conf;
    return std::make_pair(best_label, cv);
}

std::optional<ConfidenceValue> probability_confidence(std::optional<double> first_token_logprob) {
    if (!first_token_logprob || *first_token_logprob > 0.0) return std::nullopt;
    ConfidenceValue cv;
    cv.value = std::exp(*first_token_logprob);
    cv.source = ConfidenceValue::Source::first_token_prob;
    return cv;
}

namespace {

// Case-insensitive find of a marker word followed by ':'; returns position
// after the colon, or npos.
std::size_t find_marker(const std::string& text, const std::string& word) {
    for (std::size_t i = 0; i + word.size() < text.size(); ++i) {
        bool eq = true;
        for (std::size_t j = 0; j < word.size(); ++j) {
            if (std::tolower(static_cast<unsigned char>(text[i + j])) != word[j]) {
                eq = false;
                break;
            }
        }
        if (!eq) continue;
        std::size_t p = i + word.size();
        while (p < text.size() && (text[p] == ' ' || text[p] == '\t')) ++p;
        if (p < text.size() && text[p] == ':') return p + 1;
    }
    return std::string::npos;
}

std::string rest_of_line(const std::string& text, std::size_t from) {
    std::size_t nl = text.find('\n', from);
    return trim(text.substr(from, nl == std::string::npos ? std::string::npos : nl - from));
}

} // namespace

VanillaReply parse_vanilla_reply(const std::string& text,
                                 const std::vector<std::string>& valid_labels) {
    VanillaReply out;
    std::size_t after_answer = find_marker(text, "answer");
    std::size_t conf_scan_from = 0;

    if (valid_labels.empty()) {
        // open-ended: the answer is the rest of the Answer: line
        if (after_answer != std::string::npos) {
            std::string ans = rest_of_line(text, after_answer);
            if (!ans.empty()) out.answer = ans;
            conf_scan_from = text.find('\n', after_answer);
            if (conf_scan_from == std::string::npos) conf_scan_from = text.size();
        }
    } else {
        if (after_answer != std::string::npos) {
            std::string line = rest_of_line(text, after_answer);
            if (auto hit = find_label(line, valid_labels)) {
                out.answer = hit->first;
                conf_scan_from = after_answer;
            }
        }
        if (!out.answer) {
            if (auto hit = find_label(text, valid_labels)) {
                out.answer = hit->first;
                conf_scan_from = hit->second;
            }
        }
    }

    std::size_t after_conf = find_marker(text, "confidence");
    if (after_conf != std::string::npos) {
        out.confidence = parse_percent_confidence(text.substr(after_conf));
    } else {
        out.confidence = parse_percent_confidence(text.substr(conf_scan_from));
    }
    return out;
}

QuizReply parse_quiz_reply(const std::string& text, int expected,
                           const std::vector<std::string>& valid_labels) {
    QuizReply out;
    out.answers = valid_labels.empty() ? parse_numbered_answers(text, expected)
                                       : parse_option_letters(text, expected, valid_labels);

    // The count estimate lives outside the numbered answer block.
    std::string remainder;
    for (const auto& line : split_lines(text)) {
        if (line.number >= 1 && line.number <= expected) continue;
        if (!line.text.empty()) {
            remainder += line.text;
            remainder += '\n';
        }
    }
    out.confidence = parse_count_confidence(remainder, expected);
    return out;
}

std::optional<std::string> parse_bare_answer(const std::string& text,
                                             const std::vector<std::string>& valid_labels) {
    if (auto hit = find_label(text, valid_labels)) return hit->first;
    return std::nullopt;
}

} // namespace calib
