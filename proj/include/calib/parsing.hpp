#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace calib {

// Sentinel stored at unparsed positions; distinct from any option label and
// scored incorrect downstream.
inline constexpr const char* kUnparsedLabel = "?";

struct ParsedAnswerSet {
    std::vector<std::string> labels;    // length == expected count
    std::vector<int> unparsed_indices;  // 0-based positions holding the sentinel
};

struct ConfidenceValue {
    enum class Source { count_scale, percent, topk_prob, avg_conf, first_token_prob };
    double value = 0.0;  // always in [0,1]
    Source source = Source::percent;
    int count = -1;    // count_scale only: the raw integer c
    int scale_k = -1;  // count_scale only: the scale bound k

    bool operator==(const ConfidenceValue&) const = default;
};

// Numbered option-letter block. Accepts "n. X", "n) X", "n: X" and, when the
// reply carries no numbering at all, bare letters one per line. Out-of-set or
// missing entries land in unparsed_indices.
ParsedAnswerSet parse_option_letters(const std::string& text, int expected,
                                     const std::vector<std::string>& valid_labels);

// Numbered free-text block for open-ended groups; same line grammar, the
// remainder of each numbered line is the answer.
ParsedAnswerSet parse_numbered_answers(const std::string& text, int expected);

// First integer in [0,k] found in the text, as c/k. Echoes of the prompt's
// "0-k" scale are ignored; integers outside [0,k] are rejected, never clamped.
std::optional<ConfidenceValue> parse_count_confidence(const std::string& text, int k);

// First number in [0,100] with an optional % sign, as value/100. A bare
// number <= 1 without a percent cue is taken as a fraction ("0.85" -> 0.85).
std::optional<ConfidenceValue> parse_percent_confidence(const std::string& text);

// Up to k (guess, probability) lines; returns the highest-probability valid
// guess, ties broken by earliest listed. Guesses outside valid_labels are
// dropped; probabilities need not sum to 1.
std::optional<std::pair<std::string, ConfidenceValue>> parse_topk(
    const std::string& text, int k, const std::vector<std::string>& valid_labels);

// Avg-Conf aggregation over sampled replies: score(a) = sum of confidences
// where label==a divided by the total confidence; returns the argmax label
// with its score. Ties break by option-label order.
std::optional<std::pair<std::string, ConfidenceValue>> aggregate_avg_conf(
    const std::vector<std::pair<std::string, ConfidenceValue>>& samples);

// First-token probability: exp(logprob). Missing logprob is a configuration
// failure surfaced upstream; this returns nullopt.
std::optional<ConfidenceValue> probability_confidence(std::optional<double> first_token_logprob);

struct VanillaReply {
    std::optional<std::string> answer;  // option label, or free text for open-ended
    std::optional<ConfidenceValue> confidence;
};

// "Answer: X / Confidence: N" pair. Empty valid_labels means open-ended: the
// answer is the text after the Answer: marker.
VanillaReply parse_vanilla_reply(const std::string& text,
                                 const std::vector<std::string>& valid_labels);

struct QuizReply {
    ParsedAnswerSet answers;
    std::optional<ConfidenceValue> confidence;
};

// Combined quiz reply: the numbered answer block plus a correct-count
// estimate taken from the lines not consumed as answers.
QuizReply parse_quiz_reply(const std::string& text, int expected,
                           const std::vector<std::string>& valid_labels);

// Single answer token for the probability method.
std::optional<std::string> parse_bare_answer(const std::string& text,
                                             const std::vector<std::string>& valid_labels);

} // namespace calib
