#pragma once

#include "calib/dataset.hpp"
#include "calib/decode.hpp"

#include <string>
#include <vector>

namespace calib {

struct Persona {
    enum class Variant { none, expertise, demographic };

    Variant variant = Variant::none;
    std::string role;      // expertise
    std::string subject;   // expertise; empty = use the group's subject
    std::string race;      // demographic
    std::string gender;
    std::string age_band;

    static Persona self() { return {}; }
    static Persona expertise(std::string role, std::string subject = "") {
        Persona p;
        p.variant = Variant::expertise;
        p.role = std::move(role);
        p.subject = std::move(subject);
        return p;
    }
    static Persona demographic(std::string race, std::string gender, std::string age_band) {
        Persona p;
        p.variant = Variant::demographic;
        p.race = std::move(race);
        p.gender = std::move(gender);
        p.age_band = std::move(age_band);
        return p;
    }

    void validate() const;
    // Label used in unit ids and report rows; the none variant reads "self".
    std::string label() const;

    bool operator==(const Persona&) const = default;
};

enum class Method { vanilla, top_k, quiz_like, sampling, probability, afce };

std::string to_string(Method m);
Method method_from_string(const std::string& s);

struct MethodSpec {
    Method method = Method::afce;
    int k = 4;                          // top_k only
    int n_samples = 3;                  // sampling only
    double sampling_temperature = 1.0;  // sampling only

    void validate() const;
};

enum class Scope { per_question, per_group };
enum class Purpose { answer, confidence, combined };

// One renderable prompt. parser_tag names the reply parser:
//   "option_letters"   — numbered option-letter block (group answer stage)
//   "open_lines"       — numbered free-text block (open-ended answer stage)
//   "count_confidence" — bare correct-count estimate
//   "quiz_combined"    — answers plus count estimate in one reply
//   "vanilla_combined" — Answer:/Confidence: pair
//   "topk"             — Gn: <letter> - <prob%> lines
//   "bare_answer"      — single answer token
struct PromptRequest {
    std::string unit_id;
    Scope scope = Scope::per_group;
    Purpose purpose = Purpose::combined;
    std::string text;
    std::string parser_tag;
    DecodeOverrides decode;
    int samples = 1;
    bool needs_logprobs = false;
    int group_index = 0;
    int question_index = -1;  // -1 for per_group requests
};

// Question block as substituted for {Qn}: text, then one "label. body" line
// per option for multiple choice.
std::string render_question_block(const QuestionRecord& q);

// Group-scoped renderers. Output matches templates/ byte for byte after
// substitution; the numbered stanza and the 0-K scale follow the group size.
std::string render_answer_prompt(const QuestionGroup& group, const Persona& persona);
std::string render_self_confidence_prompt(const QuestionGroup& group, const Persona& persona);
std::string render_other_confidence_prompt(const QuestionGroup& group,
                                           const std::string& role,
                                           const std::string& subject);
std::string render_quiz_prompt(const QuestionGroup& group, const Persona& persona);

// Per-question renderers.
std::string render_vanilla_prompt(const QuestionRecord& q, const Persona& persona);
std::string render_topk_prompt(const QuestionRecord& q, int k, const Persona& persona);
std::string render_bare_answer_prompt(const QuestionRecord& q, const Persona& persona);

// Stable unit-id prefix "method|persona|subtask|g####" shared by a group's
// requests and its outcome record.
std::string unit_base(const QuestionGroup& group, Method method, const Persona& persona);

// Elicitation plan for one group. AFCE emits exactly two stateless per-group
// requests, confidence first. method_label/persona label/subtask key are
// baked into stable unit ids.
std::vector<PromptRequest> render_method_plan(const QuestionGroup& group,
                                              const MethodSpec& spec,
                                              const Persona& persona);

} // namespace calib
