#include "calib/prompts.hpp"

#include "calib/errors.hpp"

#include <cstdio>

namespace calib {

namespace {

const char* kNoExplanation = " Do not provide any explanation.";

std::string scale(int k) {
    return "0-" + std::to_string(k);
}

std::string persona_sentence(const Persona& p) {
    switch (p.variant) {
        case Persona::Variant::none:
            return "";
        case Persona::Variant::expertise:
            // Rendered literally as printed in the studied templates; no
            // article correction ("a expert").
            return "You are a " + p.role + ". ";
        case Persona::Variant::demographic:
            return "You are a " + p.race + " " + p.gender + " in the " + p.age_band +
                   " age group. ";
    }
    return "";
}

std::string questions_section(const QuestionGroup& group) {
    std::string out = "Questions:";
    for (int i = 0; i < group.size(); ++i) {
        out += "\nQ" + std::to_string(i + 1) + ": " + render_question_block(group.questions[i]);
    }
    return out;
}

std::string format_stanza(int count, bool multiple_choice) {
    std::string out = "Now, please answer these questions with the following format:";
    const char* slot = multiple_choice ? ". <Only Option Letter >" : ". <Answer >";
    for (int i = 1; i <= count; ++i) {
        out += "\n   " + std::to_string(i) + slot;
    }
    return out;
}

std::string single_question_section(const QuestionRecord& q) {
    return "Question:\nQ1: " + render_question_block(q);
}

} // namespace

void Persona::validate() const {
    switch (variant) {
        case Variant::none:
            return;
        case Variant::expertise:
            if (role.empty()) throw ConfigError("expertise persona requires a role");
            return;
        case Variant::demographic:
            if (race.empty() || gender.empty() || age_band.empty())
                throw ConfigError("demographic persona requires race, gender and age");
            return;
    }
}

std::string Persona::label() const {
    switch (variant) {
        case Variant::none:
            return "self";
        case Variant::expertise:
            // a subject override distinguishes same-role personas
            return subject.empty() ? role : role + ":" + subject;
        case Variant::demographic:
            return race + " " + gender + " " + age_band;
    }
    return "self";
}

std::string to_string(Method m) {
    switch (m) {
        case Method::vanilla: return "vanilla";
        case Method::top_k: return "top_k";
        case Method::quiz_like: return "quiz_like";
        case Method::sampling: return "sampling";
        case Method::probability: return "probability";
        case Method::afce: return "afce";
    }
    return "afce";
}

Method method_from_string(const std::string& s) {
    if (s == "vanilla") return Method::vanilla;
    if (s == "top_k") return Method::top_k;
    if (s == "quiz_like") return Method::quiz_like;
    if (s == "sampling") return Method::sampling;
    if (s == "probability") return Method::probability;
    if (s == "afce") return Method::afce;
    throw ConfigError("unknown method: '" + s + "'");
}

void MethodSpec::validate() const {
    if (method == Method::top_k && k < 2) throw ConfigError("top_k requires k >= 2");
    if (method == Method::sampling) {
        if (n_samples < 2) throw ConfigError("sampling requires n_samples >= 2");
        if (sampling_temperature <= 0.0)
            throw ConfigError("sampling requires sampling_temperature > 0");
    }
}

std::string render_question_block(const QuestionRecord& q) {
    std::string out = q.text;
    for (const auto& opt : q.options) {
        out += "\n" + opt.label + ". " + opt.body;
    }
    return out;
}

std::string render_answer_prompt(const QuestionGroup& group, const Persona& persona) {
    if (group.size() == 0) throw ConfigError("cannot render a prompt for an empty group");
    persona.validate();
    bool mc = group.all_multiple_choice();

    std::string head;
    if (persona.variant == Persona::Variant::demographic) {
        head = persona_sentence(persona) +
               (mc ? "Read the question and provide your answer (only the option letter)."
                   : "Read the question and provide your answer (a short answer).");
    } else {
        head = persona_sentence(persona) +
               (mc ? "Please answer the following questions by selecting only the option letter."
                   : "Please answer the following questions, each with a short answer.");
    }
    return head + kNoExplanation + "\n" + questions_section(group) + "\n" +
           format_stanza(group.size(), mc);
}

std::string render_self_confidence_prompt(const QuestionGroup& group, const Persona& persona) {
    if (group.size() == 0) throw ConfigError("cannot render a prompt for an empty group");
    persona.validate();
    std::string k = scale(group.size());

    if (persona.variant == Persona::Variant::demographic) {
        return persona_sentence(persona) +
               "Read the question, estimate how many questions you can answer correctly "
               "(choose a number from " + k + ")." + kNoExplanation + "\n" +
               questions_section(group) + "\n" +
               "Estimate how many questions you can answer correctly: <only choose one number from " +
               k + ">.";
    }
    // The none-variant wording; expertise personas estimate via the
    // third-person prompt instead (see render_other_confidence_prompt).
    return "Read the question, and estimate how many questions you can answer correctly "
           "(choose a number from " + k + ")." + kNoExplanation + "\n" +
           questions_section(group) + "\n" +
           "Estimate how many questions you can answer correctly: <choose a number from " + k + ">.";
}

std::string render_other_confidence_prompt(const QuestionGroup& group,
                                           const std::string& role,
                                           const std::string& subject) {
    if (group.size() == 0) throw ConfigError("cannot render a prompt for an empty group");
    if (role.empty() || subject.empty())
        throw ConfigError("other-confidence prompt requires role and subject");
    std::string k = scale(group.size());
    return "A is an " + role + " in " + subject +
           ". Read the question, and after considering A's ability, estimate how many "
           "questions A can answer correctly (choose a number from " + k + ")." +
           kNoExplanation + "\n" + questions_section(group) + "\n" +
           "Estimate how many questions you think A can answer correctly: <choose a number from " +
           k + ">.";
}

std::string render_quiz_prompt(const QuestionGroup& group, const Persona& persona) {
    if (group.size() == 0) throw ConfigError("cannot render a prompt for an empty group");
    persona.validate();
    std::string n = std::to_string(group.size());
    std::string k = scale(group.size());
    return persona_sentence(persona) + "Please answer the following " + n +
           " questions and estimate how many were answered correctly (choose a number from " +
           k + ")." + kNoExplanation + "\n" + questions_section(group) + "\n" +
           format_stanza(group.size(), group.all_multiple_choice()) + "\n" +
           "Correct answers estimate: <choose a number from " + k + ">.";
}

std::string render_vanilla_prompt(const QuestionRecord& q, const Persona& persona) {
    persona.validate();
    bool mc = q.kind == Kind::multiple_choice;
    return persona_sentence(persona) +
           "Read the question, provide your answer, and report your confidence in this answer "
           "(choose a number from 0-100)." + kNoExplanation + "\n" +
           single_question_section(q) + "\n" +
           "Now, please answer with the following format:\n" +
           (mc ? "Answer: <Only Option Letter >" : "Answer: <Answer >") + "\n" +
           "Confidence: <number from 0-100>";
}

std::string render_topk_prompt(const QuestionRecord& q, int k, const Persona& persona) {
    persona.validate();
    if (k < 2) throw ConfigError("top_k requires k >= 2");
    std::string out = persona_sentence(persona) + "Provide your " + std::to_string(k) +
                      " best guesses and the probability that each option is correct "
                      "(0% to 100%) for the following question." + kNoExplanation + "\n" +
                      single_question_section(q) + "\n" +
                      "Now, please answer with the following format:";
    for (int i = 1; i <= k; ++i) {
        out += "\nG" + std::to_string(i) + ": <Only Option Letter> - <Probability %>";
    }
    return out;
}

std::string render_bare_answer_prompt(const QuestionRecord& q, const Persona& persona) {
    persona.validate();
    return persona_sentence(persona) +
           "Please answer the following question by selecting only the option letter." +
           kNoExplanation + "\n" + single_question_section(q) + "\n" +
           "Answer: <Only Option Letter >";
}

std::string unit_base(const QuestionGroup& group, Method method, const Persona& persona) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "g%04d", group.group_index);
    return to_string(method) + "|" + persona.label() + "|" + group.subtask.key() + "|" + buf;
}

namespace {

std::string question_unit(const std::string& prefix, int question_index) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "|q%03d", question_index);
    return prefix + buf;
}

} // namespace

std::vector<PromptRequest> render_method_plan(const QuestionGroup& group,
                                              const MethodSpec& spec,
                                              const Persona& persona) {
    if (group.size() == 0) throw ConfigError("cannot plan an empty group");
    spec.validate();
    persona.validate();
    bool mc = group.all_multiple_choice();
    if (!mc && (spec.method == Method::top_k || spec.method == Method::probability)) {
        throw ConfigError(to_string(spec.method) + " is not defined for open-ended groups");
    }

    std::string prefix = unit_base(group, spec.method, persona);
    std::vector<PromptRequest> plan;

    auto per_question = [&](const std::string& parser_tag, Purpose purpose,
                            auto&& render, int samples, bool logprobs,
                            DecodeOverrides decode = {}) {
        for (int i = 0; i < group.size(); ++i) {
            PromptRequest req;
            req.unit_id = question_unit(prefix, i);
            req.scope = Scope::per_question;
            req.purpose = purpose;
            req.text = render(group.questions[i]);
            req.parser_tag = parser_tag;
            req.decode = decode;
            req.samples = samples;
            req.needs_logprobs = logprobs;
            req.group_index = group.group_index;
            req.question_index = i;
            plan.push_back(std::move(req));
        }
    };

    switch (spec.method) {
        case Method::vanilla:
            per_question("vanilla_combined", Purpose::combined,
                         [&](const QuestionRecord& q) { return render_vanilla_prompt(q, persona); },
                         1, false);
            break;
        case Method::top_k:
            per_question("topk", Purpose::combined,
                         [&](const QuestionRecord& q) { return render_topk_prompt(q, spec.k, persona); },
                         1, false);
            break;
        case Method::sampling: {
            DecodeOverrides decode;
            decode.temperature = spec.sampling_temperature;
            per_question("vanilla_combined", Purpose::combined,
                         [&](const QuestionRecord& q) { return render_vanilla_prompt(q, persona); },
                         spec.n_samples, false, decode);
            break;
        }
        case Method::probability:
            per_question("bare_answer", Purpose::answer,
                         [&](const QuestionRecord& q) { return render_bare_answer_prompt(q, persona); },
                         1, true);
            break;
        case Method::quiz_like: {
            PromptRequest req;
            req.unit_id = prefix;
            req.scope = Scope::per_group;
            req.purpose = Purpose::combined;
            req.text = render_quiz_prompt(group, persona);
            req.parser_tag = "quiz_combined";
            req.group_index = group.group_index;
            plan.push_back(std::move(req));
            break;
        }
        case Method::afce: {
            // Two stateless requests, confidence first. Expertise personas
            // estimate in the third person about the group's subject.
            PromptRequest conf;
            conf.unit_id = prefix + "|conf";
            conf.scope = Scope::per_group;
            conf.purpose = Purpose::confidence;
            if (persona.variant == Persona::Variant::expertise) {
                const std::string& subject =
                    persona.subject.empty() ? group.subtask.subject : persona.subject;
                conf.text = render_other_confidence_prompt(group, persona.role, subject);
            } else {
                conf.text = render_self_confidence_prompt(group, persona);
            }
            conf.parser_tag = "count_confidence";
            conf.group_index = group.group_index;
            plan.push_back(std::move(conf));

            PromptRequest ans;
            ans.unit_id = prefix + "|ans";
            ans.scope = Scope::per_group;
            ans.purpose = Purpose::answer;
            ans.text = render_answer_prompt(group, persona);
            ans.parser_tag = mc ? "option_letters" : "open_lines";
            ans.group_index = group.group_index;
            plan.push_back(std::move(ans));
            break;
        }
    }
    return plan;
}

} // namespace calib
