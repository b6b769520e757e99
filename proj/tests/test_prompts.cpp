#include "calib/prompts.hpp"

#include "calib/errors.hpp"
#include "test_support.hpp"

#include <doctest.h>

#include <map>
#include <set>

using namespace calib;
using namespace testsupport;

namespace {

// Independent expansion of a templates/ file: plain string substitution, no
// renderer code involved.
std::string expand(const std::string& template_rel,
                   const std::map<std::string, std::string>& vars) {
    std::string text = read_text(source_path("templates/" + template_rel));
    REQUIRE(!text.empty());
    if (text.back() == '\n') text.pop_back();
    for (const auto& [key, value] : vars) {
        std::string needle = "{" + key + "}";
        std::size_t pos = 0;
        while ((pos = text.find(needle, pos)) != std::string::npos) {
            text.replace(pos, needle.size(), value);
            pos += value.size();
        }
    }
    return text;
}

std::string question_block(const QuestionRecord& q) {
    std::string block = q.text;
    for (const auto& opt : q.options) {
        block += "\n" + opt.label + ". " + opt.body;
    }
    return block;
}

std::map<std::string, std::string> group_vars(const QuestionGroup& g) {
    std::map<std::string, std::string> vars;
    vars["K"] = std::to_string(g.size());
    for (int i = 0; i < g.size(); ++i) {
        vars["Q" + std::to_string(i + 1)] = question_block(g.questions[i]);
    }
    return vars;
}

QuestionGroup open_group(int n) {
    std::vector<QuestionRecord> qs;
    for (int i = 0; i < n; ++i) {
        QuestionRecord rec;
        rec.id = "open" + std::to_string(i);
        rec.subject = "general";
        rec.difficulty = Difficulty::general;
        rec.kind = Kind::open_ended;
        rec.text = "Open question " + std::to_string(i) + "?";
        rec.answers = {"answer"};
        qs.push_back(std::move(rec));
    }
    return make_group(std::move(qs));
}

} // namespace

TEST_CASE("group prompts match the stored templates byte for byte") {
    QuestionGroup g = make_group(make_bank(10));
    auto vars = group_vars(g);

    SUBCASE("answer, no persona") {
        CHECK(render_answer_prompt(g, Persona::self()) == expand("afce_answer.txt", vars));
    }
    SUBCASE("confidence, no persona") {
        CHECK(render_self_confidence_prompt(g, Persona::self()) ==
              expand("afce_confidence.txt", vars));
    }
    SUBCASE("answer under expertise persona") {
        auto v = vars;
        v["role"] = "expert";
        CHECK(render_answer_prompt(g, Persona::expertise("expert")) ==
              expand("afce_answer_expertise.txt", v));
    }
    SUBCASE("third-person confidence") {
        auto v = vars;
        v["role"] = "expert";
        v["subject"] = "chemistry";
        CHECK(render_other_confidence_prompt(g, "expert", "chemistry") ==
              expand("afce_confidence_other.txt", v));
    }
    SUBCASE("answer under demographic persona") {
        auto v = vars;
        v["race"] = "Asian";
        v["gender"] = "Female";
        v["age"] = "25-39";
        CHECK(render_answer_prompt(g, Persona::demographic("Asian", "Female", "25-39")) ==
              expand("afce_answer_demographic.txt", v));
    }
    SUBCASE("confidence under demographic persona") {
        auto v = vars;
        v["race"] = "Asian";
        v["gender"] = "Female";
        v["age"] = "25-39";
        CHECK(render_self_confidence_prompt(g, Persona::demographic("Asian", "Female", "25-39")) ==
              expand("afce_confidence_demographic.txt", v));
    }
    SUBCASE("quiz combined") {
        CHECK(render_quiz_prompt(g, Persona::self()) == expand("quiz_combined.txt", vars));
    }
    SUBCASE("open-ended answer stanza") {
        QuestionGroup og = open_group(10);
        CHECK(render_answer_prompt(og, Persona::self()) ==
              expand("afce_answer_open.txt", group_vars(og)));
    }
}

TEST_CASE("per-question prompts match the stored templates") {
    auto q = make_mc("q0", "physics", Difficulty::college, "B");
    std::map<std::string, std::string> vars{{"Q1", question_block(q)}};

    SUBCASE("vanilla") {
        CHECK(render_vanilla_prompt(q, Persona::self()) == expand("vanilla.txt", vars));
    }
    SUBCASE("topk") {
        auto v = vars;
        v["K"] = "4";
        CHECK(render_topk_prompt(q, 4, Persona::self()) == expand("topk.txt", v));
    }
    SUBCASE("bare answer") {
        CHECK(render_bare_answer_prompt(q, Persona::self()) == expand("bare_answer.txt", vars));
    }
    SUBCASE("vanilla, open-ended") {
        QuestionRecord oq;
        oq.id = "o";
        oq.subject = "general";
        oq.kind = Kind::open_ended;
        oq.text = "Open?";
        oq.answers = {"yes"};
        CHECK(render_vanilla_prompt(oq, Persona::self()) ==
              expand("vanilla_open.txt", {{"Q1", "Open?"}}));
    }
}

TEST_CASE("rendered fragments the templates were transcribed from") {
    QuestionGroup g = make_group(make_bank(10));

    std::string answer = render_answer_prompt(g, Persona::self());
    CHECK(answer.rfind("Please answer the following questions by selecting only the option letter.",
                       0) == 0);

    std::string conf = render_self_confidence_prompt(g, Persona::self());
    CHECK(conf.find("choose a number from 0-10") != std::string::npos);
    CHECK(conf.ends_with(
        "Estimate how many questions you can answer correctly: <choose a number from 0-10>."));

    // the role line is rendered literally, article uncorrected
    std::string expert = render_answer_prompt(g, Persona::expertise("expert"));
    CHECK(expert.rfind("You are a expert. ", 0) == 0);

    std::string demo =
        render_answer_prompt(g, Persona::demographic("Asian", "Female", "25-39"));
    CHECK(demo.rfind("You are a Asian Female in the 25-39 age group.", 0) == 0);

    CHECK(render_other_confidence_prompt(g, "expert", "chemistry")
              .find("A is an expert in chemistry") != std::string::npos);
    CHECK(render_other_confidence_prompt(g, "layman", "physics")
              .find("A is an layman in physics") != std::string::npos);
}

TEST_CASE("confidence scale bound follows the group size") {
    QuestionGroup g5 = make_group(make_bank(5));
    std::string conf = render_self_confidence_prompt(g5, Persona::self());
    CHECK(conf.find("0-5") != std::string::npos);
    CHECK(conf.find("0-10") == std::string::npos);
    CHECK(render_other_confidence_prompt(g5, "expert", "physics").find("0-5") !=
          std::string::npos);
    CHECK(render_quiz_prompt(g5, Persona::self()).find("choose a number from 0-5") !=
          std::string::npos);

    // partial final group keeps the protocol meaningful at its actual size
    QuestionGroup g3 = make_group(make_bank(3));
    CHECK(render_self_confidence_prompt(g3, Persona::self()).find("0-3") != std::string::npos);
}

TEST_CASE("stanza length and scale track any group size") {
    for (int k : {1, 2, 3, 7, 11}) {
        CAPTURE(k);
        QuestionGroup g = make_group(make_bank(k));
        std::string ans = render_answer_prompt(g, Persona::self());
        std::size_t slots = 0, pos = 0;
        while ((pos = ans.find("<Only Option Letter >", pos)) != std::string::npos) {
            ++slots;
            pos += 1;
        }
        CHECK(slots == static_cast<std::size_t>(k));

        std::string conf = render_self_confidence_prompt(g, Persona::self());
        std::string scale = "0-" + std::to_string(k) + ">.";
        CHECK(conf.ends_with("<choose a number from " + scale));
    }
}

TEST_CASE("afce statelessness: no answer request in the confidence text and vice versa") {
    QuestionGroup g = make_group(make_bank(10));
    auto plan = render_method_plan(g, MethodSpec{Method::afce}, Persona::self());
    REQUIRE(plan.size() == 2);
    CHECK(plan[0].purpose == Purpose::confidence);
    CHECK(plan[1].purpose == Purpose::answer);
    CHECK(plan[0].text.find("Only Option Letter") == std::string::npos);
    CHECK(plan[0].text.find("selecting") == std::string::npos);
    CHECK(plan[1].text.find("estimate") == std::string::npos);
    CHECK(plan[1].text.find("confidence") == std::string::npos);
    CHECK(plan[0].parser_tag == "count_confidence");
    CHECK(plan[1].parser_tag == "option_letters");
}

TEST_CASE("method plans have the promised shapes") {
    QuestionGroup g = make_group(make_bank(10));

    SUBCASE("vanilla: one combined request per question") {
        auto plan = render_method_plan(g, MethodSpec{Method::vanilla}, Persona::self());
        CHECK(plan.size() == 10);
        for (const auto& req : plan) {
            CHECK(req.scope == Scope::per_question);
            CHECK(req.purpose == Purpose::combined);
            CHECK(req.samples == 1);
        }
    }
    SUBCASE("sampling: per-question requests carrying samples and temperature") {
        MethodSpec spec{Method::sampling};
        spec.n_samples = 3;
        spec.sampling_temperature = 1.0;
        auto plan = render_method_plan(g, spec, Persona::self());
        CHECK(plan.size() == 10);
        for (const auto& req : plan) {
            CHECK(req.samples == 3);
            REQUIRE(req.decode.temperature.has_value());
            CHECK(*req.decode.temperature == 1.0);
        }
    }
    SUBCASE("quiz: one per-group combined request") {
        auto plan = render_method_plan(g, MethodSpec{Method::quiz_like}, Persona::self());
        REQUIRE(plan.size() == 1);
        CHECK(plan[0].scope == Scope::per_group);
        CHECK(plan[0].parser_tag == "quiz_combined");
    }
    SUBCASE("probability: answer-only with logprobs") {
        auto plan = render_method_plan(g, MethodSpec{Method::probability}, Persona::self());
        CHECK(plan.size() == 10);
        for (const auto& req : plan) {
            CHECK(req.purpose == Purpose::answer);
            CHECK(req.needs_logprobs);
        }
    }
    SUBCASE("expertise persona routes afce confidence through the third person") {
        auto plan = render_method_plan(g, MethodSpec{Method::afce},
                                       Persona::expertise("expert"));
        REQUIRE(plan.size() == 2);
        // subject defaults to the group's own subject
        CHECK(plan[0].text.find("A is an expert in physics") != std::string::npos);
        CHECK(plan[1].text.rfind("You are a expert. ", 0) == 0);
    }
    SUBCASE("unit ids are distinct and stable") {
        auto a = render_method_plan(g, MethodSpec{Method::vanilla}, Persona::self());
        auto b = render_method_plan(g, MethodSpec{Method::vanilla}, Persona::self());
        REQUIRE(a.size() == b.size());
        std::set<std::string> ids;
        for (std::size_t i = 0; i < a.size(); ++i) {
            CHECK(a[i].unit_id == b[i].unit_id);
            CHECK(a[i].text == b[i].text);
            ids.insert(a[i].unit_id);
        }
        CHECK(ids.size() == a.size());
    }
}

TEST_CASE("open-ended groups reject label-based methods at plan time") {
    QuestionGroup og = open_group(4);
    CHECK_THROWS_AS(render_method_plan(og, MethodSpec{Method::top_k}, Persona::self()),
                    ConfigError);
    CHECK_THROWS_AS(render_method_plan(og, MethodSpec{Method::probability}, Persona::self()),
                    ConfigError);
    CHECK_NOTHROW(render_method_plan(og, MethodSpec{Method::afce}, Persona::self()));
}

TEST_CASE("persona and method spec validation") {
    CHECK_THROWS_AS(Persona::expertise("").validate(), ConfigError);
    CHECK_THROWS_AS(Persona::demographic("", "Female", "25-39").validate(), ConfigError);
    CHECK(Persona::self().label() == "self");
    CHECK(Persona::demographic("Asian", "Female", "25-39").label() == "Asian Female 25-39");

    MethodSpec bad_k{Method::top_k};
    bad_k.k = 1;
    CHECK_THROWS_AS(bad_k.validate(), ConfigError);
    MethodSpec bad_temp{Method::sampling};
    bad_temp.sampling_temperature = 0.0;
    CHECK_THROWS_AS(bad_temp.validate(), ConfigError);
}
