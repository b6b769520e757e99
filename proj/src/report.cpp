#include "calib/report.hpp"

#include "calib/errors.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>

using nlohmann::json;

namespace calib {

namespace {

int difficulty_rank(Difficulty d) {
    switch (d) {
        case Difficulty::high_school: return 0;
        case Difficulty::college: return 1;
        case Difficulty::expert: return 2;
        case Difficulty::general: return 3;
    }
    return 3;
}

int method_rank(const std::string& m) {
    static const char* order[] = {"vanilla", "top_k", "quiz_like",
                                  "sampling", "probability", "afce"};
    for (int i = 0; i < 6; ++i) {
        if (m == order[i]) return i;
    }
    return 6;
}

bool row_less(const SubtaskReport& a, const SubtaskReport& b) {
    int da = difficulty_rank(a.subtask.difficulty), db = difficulty_rank(b.subtask.difficulty);
    if (da != db) return da < db;
    if (a.subtask.subject != b.subtask.subject) return a.subtask.subject < b.subtask.subject;
    int ma = method_rank(a.method), mb = method_rank(b.method);
    if (ma != mb) return ma < mb;
    return a.persona.label() < b.persona.label();
}

std::string csv_escape(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += "\"\"";
        else out.push_back(c);
    }
    out += "\"";
    return out;
}

void write_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ConfigError("cannot write report file: " + path);
    out << content;
}

} // namespace

std::string format_percent(double fraction) {
    double pct = fraction * 100.0;
    // half-up (away from zero) at one decimal
    double scaled = pct * 10.0;
    double rounded = scaled >= 0.0 ? std::floor(scaled + 0.5) : std::ceil(scaled - 0.5);
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.1f", rounded / 10.0);
    return buf;
}

void emit_subtask_table(const std::vector<SubtaskReport>& reports,
                        const std::string& csv_path, const std::string& json_path) {
    if (reports.empty()) throw ConfigError("no reports to tabulate");
    std::vector<SubtaskReport> rows = reports;
    std::sort(rows.begin(), rows.end(), row_less);

    std::string csv = "difficulty,subject,method,persona,acc,avc,ece\n";
    json jrows = json::array();
    for (const auto& r : rows) {
        std::string acc = format_percent(r.accuracy);
        std::string avc = format_percent(r.avg_confidence);
        std::string ece_pct = format_percent(r.ece);
        csv += to_string(r.subtask.difficulty) + "," + csv_escape(r.subtask.subject) + "," +
               r.method + "," + csv_escape(r.persona.label()) + "," + acc + "," + avc + "," +
               ece_pct + "\n";
        jrows.push_back({{"difficulty", to_string(r.subtask.difficulty)},
                         {"subject", r.subtask.subject},
                         {"method", r.method},
                         {"persona", r.persona.label()},
                         {"acc", acc},
                         {"avc", avc},
                         {"ece", ece_pct},
                         {"raw",
                          {{"accuracy", r.accuracy},
                           {"avg_confidence", r.avg_confidence},
                           {"ece", r.ece},
                           {"n_groups", r.n_groups},
                           {"n_failed", r.n_failed}}}});
    }

    // AvE summary per (method, persona), in row order
    json javes = json::array();
    std::vector<std::pair<std::string, std::string>> seen;
    for (const auto& r : rows) {
        std::pair<std::string, std::string> key{r.method, r.persona.label()};
        if (std::find(seen.begin(), seen.end(), key) != seen.end()) continue;
        seen.push_back(key);
        std::vector<SubtaskReport> slice;
        for (const auto& other : rows) {
            if (other.method == key.first && other.persona.label() == key.second) {
                slice.push_back(other);
            }
        }
        double ave = average_ece(slice);
        std::string ave_pct = format_percent(ave);
        csv += "AvE,," + key.first + "," + csv_escape(key.second) + ",,," + ave_pct + "\n";
        javes.push_back({{"method", key.first},
                         {"persona", key.second},
                         {"ave", ave_pct},
                         {"raw", {{"average_ece", ave}, {"n_subtasks", slice.size()}}}});
    }

    write_file(csv_path, csv);
    json doc{{"rows", jrows}, {"averages", javes}};
    write_file(json_path, doc.dump(2) + "\n");
}

std::vector<MethodSeries> calibration_series(const std::vector<SubtaskReport>& reports) {
    std::vector<SubtaskReport> rows;
    for (const auto& r : reports) {
        if (r.persona.variant == Persona::Variant::none) rows.push_back(r);
    }
    if (rows.empty()) {
        for (const auto& r : reports) rows.push_back(r);  // persona-only runs plot as-is
    }
    std::sort(rows.begin(), rows.end(), row_less);

    std::vector<MethodSeries> series;
    std::vector<std::string> methods;
    for (const auto& r : rows) {
        if (std::find(methods.begin(), methods.end(), r.method) == methods.end()) {
            methods.push_back(r.method);
        }
    }
    std::sort(methods.begin(), methods.end(), [](const std::string& a, const std::string& b) {
        return method_rank(a) < method_rank(b);
    });

    for (const auto& method : methods) {
        MethodSeries s;
        s.label = method;
        for (const auto& r : rows) {
            if (r.method == method) s.points.emplace_back(r.accuracy, r.avg_confidence);
        }
        try {
            s.fit = calibration_fit(s.points);
        } catch (const std::invalid_argument& e) {
            s.warning = e.what();
        }
        series.push_back(std::move(s));
    }
    return series;
}

namespace {

const char* kPalette[] = {"#4e79a7", "#f28e2b", "#e15759", "#76b7b2", "#59a14f", "#edc948"};

double plot_x(double v) { return 60.0 + v * 520.0; }
double plot_y(double v) { return 580.0 - v * 520.0; }

std::string num(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.2f", v);
    return buf;
}

} // namespace

void emit_calibration_plot(const std::vector<MethodSeries>& series, const std::string& svg_path) {
    std::string svg;
    svg += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"640\" height=\"640\" "
           "viewBox=\"0 0 640 640\">\n";
    svg += "<rect x=\"0\" y=\"0\" width=\"640\" height=\"640\" fill=\"white\"/>\n";

    // axes with 0.2 ticks
    svg += "<g stroke=\"#333333\" stroke-width=\"1\" font-size=\"12\" font-family=\"sans-serif\">\n";
    svg += "<line x1=\"60\" y1=\"580\" x2=\"580\" y2=\"580\"/>\n";
    svg += "<line x1=\"60\" y1=\"60\" x2=\"60\" y2=\"580\"/>\n";
    for (int i = 0; i <= 5; ++i) {
        double v = i / 5.0;
        svg += "<line x1=\"" + num(plot_x(v)) + "\" y1=\"580\" x2=\"" + num(plot_x(v)) +
               "\" y2=\"586\"/>\n";
        svg += "<text x=\"" + num(plot_x(v)) + "\" y=\"600\" text-anchor=\"middle\" "
               "stroke=\"none\" fill=\"#333333\">" + num(v) + "</text>\n";
        svg += "<line x1=\"54\" y1=\"" + num(plot_y(v)) + "\" x2=\"60\" y2=\"" + num(plot_y(v)) +
               "\"/>\n";
        svg += "<text x=\"48\" y=\"" + num(plot_y(v) + 4) + "\" text-anchor=\"end\" "
               "stroke=\"none\" fill=\"#333333\">" + num(v) + "</text>\n";
    }
    svg += "<text x=\"320\" y=\"628\" text-anchor=\"middle\" stroke=\"none\" "
           "fill=\"#333333\">accuracy</text>\n";
    svg += "<text x=\"20\" y=\"320\" text-anchor=\"middle\" stroke=\"none\" fill=\"#333333\" "
           "transform=\"rotate(-90 20 320)\">confidence</text>\n";
    svg += "</g>\n";

    // ideal calibration line
    svg += "<line class=\"diag\" x1=\"" + num(plot_x(0)) + "\" y1=\"" + num(plot_y(0)) +
           "\" x2=\"" + num(plot_x(1)) + "\" y2=\"" + num(plot_y(1)) +
           "\" stroke=\"#999999\" stroke-dasharray=\"6,4\"/>\n";

    int warn_slot = 0;
    for (std::size_t si = 0; si < series.size(); ++si) {
        const auto& s = series[si];
        const char* color = kPalette[si % 6];

        if (s.fit) {
            // visible stretch of y = slope*x + intercept inside [0,1]^2
            double x0 = 0.0, x1 = 1.0;
            if (s.fit->slope != 0.0) {
                double xa = (0.0 - s.fit->intercept) / s.fit->slope;
                double xb = (1.0 - s.fit->intercept) / s.fit->slope;
                if (xa > xb) std::swap(xa, xb);
                x0 = std::max(x0, xa);
                x1 = std::min(x1, xb);
            } else if (s.fit->intercept < 0.0 || s.fit->intercept > 1.0) {
                x1 = x0 - 1.0;  // entirely outside
            }
            if (x0 <= x1) {
                double y0 = s.fit->slope * x0 + s.fit->intercept;
                double y1 = s.fit->slope * x1 + s.fit->intercept;
                svg += "<path class=\"fit\" d=\"M " + num(plot_x(x0)) + " " + num(plot_y(y0)) +
                       " L " + num(plot_x(x1)) + " " + num(plot_y(y1)) + "\" stroke=\"" + color +
                       "\" stroke-width=\"2\" fill=\"none\"/>\n";
            }
        } else if (!s.warning.empty()) {
            svg += "<text class=\"warning\" x=\"70\" y=\"" + num(80.0 + 16.0 * warn_slot++) +
                   "\" font-size=\"12\" font-family=\"sans-serif\" fill=\"#b00000\">" + s.label +
                   ": " + s.warning + "</text>\n";
        }

        for (const auto& [x, y] : s.points) {
            svg += "<circle class=\"pt\" cx=\"" + num(plot_x(x)) + "\" cy=\"" + num(plot_y(y)) +
                   "\" r=\"4\" fill=\"" + color + "\" fill-opacity=\"0.8\"/>\n";
        }

        // legend
        double ly = 70.0 + 18.0 * static_cast<double>(si);
        svg += "<rect x=\"482\" y=\"" + num(ly - 9) +
               "\" width=\"10\" height=\"10\" fill=\"" + std::string(color) + "\"/>\n";
        svg += "<text x=\"498\" y=\"" + num(ly) +
               "\" font-size=\"12\" font-family=\"sans-serif\" fill=\"#333333\">" + s.label +
               "</text>\n";
    }
    svg += "</svg>\n";
    write_file(svg_path, svg);
}

void emit_persona_report(const std::vector<SubtaskReport>& self_reports,
                         const std::vector<SubtaskReport>& other_reports,
                         const std::vector<SubtaskReport>& demographic_reports,
                         const std::string& json_path) {
    std::map<std::string, const SubtaskReport*> self_by_key;
    for (const auto& r : self_reports) {
        self_by_key[r.method + "|" + r.subtask.key()] = &r;
    }

    std::vector<SubtaskReport> others = other_reports;
    std::sort(others.begin(), others.end(), [](const SubtaskReport& a, const SubtaskReport& b) {
        if (a.persona.label() != b.persona.label()) return a.persona.label() < b.persona.label();
        return row_less(a, b);
    });

    json overplacement = json::array();
    for (const auto& other : others) {
        auto it = self_by_key.find(other.method + "|" + other.subtask.key());
        if (it == self_by_key.end()) {
            throw ConfigError("no self report matching " + other.method + "/" +
                              other.subtask.key() + " for persona '" + other.persona.label() +
                              "'");
        }
        const SubtaskReport& self = *it->second;
        overplacement.push_back(
            {{"role", other.persona.role},
             {"method", other.method},
             {"subtask", other.subtask.key()},
             {"score", overplacement_score(self, other)},
             {"self", {{"accuracy", self.accuracy}, {"avg_confidence", self.avg_confidence}}},
             {"other",
              {{"accuracy", other.accuracy}, {"avg_confidence", other.avg_confidence}}}});
    }

    // one block per (attribute, value), in first-appearance order per attribute
    struct Cell {
        std::string attribute;
        std::string value;
        std::vector<const SubtaskReport*> reports;
    };
    std::vector<Cell> cells;
    auto add = [&cells](const std::string& attribute, const std::string& value,
                        const SubtaskReport* r) {
        for (auto& c : cells) {
            if (c.attribute == attribute && c.value == value) {
                c.reports.push_back(r);
                return;
            }
        }
        cells.push_back({attribute, value, {r}});
    };
    std::vector<SubtaskReport> demos = demographic_reports;
    std::sort(demos.begin(), demos.end(), [](const SubtaskReport& a, const SubtaskReport& b) {
        if (a.persona.label() != b.persona.label()) return a.persona.label() < b.persona.label();
        return row_less(a, b);
    });
    for (const auto& r : demos) {
        add("race", r.persona.race, &r);
        add("gender", r.persona.gender, &r);
        add("age", r.persona.age_band, &r);
    }
    std::stable_sort(cells.begin(), cells.end(), [](const Cell& a, const Cell& b) {
        auto rank = [](const std::string& attr) {
            return attr == "race" ? 0 : attr == "gender" ? 1 : 2;
        };
        return rank(a.attribute) < rank(b.attribute);
    });

    json demographic = json::array();
    for (const auto& cell : cells) {
        double sum = 0.0;
        json pairs = json::array();
        for (const SubtaskReport* r : cell.reports) {
            double delta = delta_demographic(*r);
            sum += delta;
            pairs.push_back({{"persona", r->persona.label()},
                             {"method", r->method},
                             {"subtask", r->subtask.key()},
                             {"accuracy", r->accuracy},
                             {"avg_confidence", r->avg_confidence},
                             {"delta", delta}});
        }
        demographic.push_back({{"attribute", cell.attribute},
                               {"value", cell.value},
                               {"delta", sum / static_cast<double>(cell.reports.size())},
                               {"pairs", pairs}});
    }

    json doc{{"overplacement", overplacement}, {"demographic", demographic}};
    write_file(json_path, doc.dump(2) + "\n");
}

} // namespace calib
