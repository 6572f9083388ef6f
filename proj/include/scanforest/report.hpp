#pragma once

#include <cstdint>
#include <cstdio>
#include <map>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "scanforest/error.hpp"
#include "scanforest/metrics.hpp"
#include "scanforest/tuning.hpp"
#include "scanforest/version.hpp"

namespace scanforest {

// ---------------------------------------------------------------------------
// Report JSON schema (version kReportSchemaVersion)
// ---------------------------------------------------------------------------

inline void to_json(nlohmann::json& j, const ClassEfficacy& e) {
    j = nlohmann::json{{"precision", e.precision},
                       {"recall", e.recall},
                       {"f1", e.f1},
                       {"support", e.support}};
}

inline void from_json(const nlohmann::json& j, ClassEfficacy& e) {
    e.precision = j.at("precision").get<double>();
    e.recall = j.at("recall").get<double>();
    e.f1 = j.at("f1").get<double>();
    e.support = j.at("support").get<std::size_t>();
}

inline void to_json(nlohmann::json& j, const EfficacyReport& r) {
    j = nlohmann::json{{"accuracy", r.accuracy},
                       {"macro_precision", r.macro_precision},
                       {"macro_recall", r.macro_recall},
                       {"macro_f1", r.macro_f1},
                       {"per_class", r.per_class},
                       {"zero_division", r.zero_division}};
}

inline void from_json(const nlohmann::json& j, EfficacyReport& r) {
    r.accuracy = j.at("accuracy").get<double>();
    r.macro_precision = j.at("macro_precision").get<double>();
    r.macro_recall = j.at("macro_recall").get<double>();
    r.macro_f1 = j.at("macro_f1").get<double>();
    r.per_class = j.at("per_class").get<std::array<ClassEfficacy, 2>>();
    r.zero_division = j.at("zero_division").get<bool>();
}

inline void to_json(nlohmann::json& j, const ConfusionMatrix& cm) {
    j = nlohmann::json::array({nlohmann::json::array({cm.counts[0][0], cm.counts[0][1]}),
                               nlohmann::json::array({cm.counts[1][0], cm.counts[1][1]})});
}

inline void from_json(const nlohmann::json& j, ConfusionMatrix& cm) {
    for (int a = 0; a < 2; ++a)
        for (int p = 0; p < 2; ++p)
            cm.counts[static_cast<std::size_t>(a)][static_cast<std::size_t>(p)] =
                j.at(static_cast<std::size_t>(a)).at(static_cast<std::size_t>(p))
                    .get<std::size_t>();
}

inline nlohmann::json trial_to_json(const TrialReport& t) {
    nlohmann::json j;
    j["set_id"] = to_string(t.set_id);
    j["method"] = to_string(t.method);
    j["seed"] = t.seed;
    j["split"] = {{"train", {{"benign", t.train_rows[0]}, {"scan", t.train_rows[1]}}},
                  {"test", {{"benign", t.test_rows[0]}, {"scan", t.test_rows[1]}}}};
    j["search"] = {{"best_config", t.best_config},
                   {"cv_mean_score", t.cv_mean_score},
                   {"cv_std_score", t.cv_std_score},
                   {"candidates_evaluated", t.candidates_evaluated}};
    j["test_efficacy"] = t.test;
    j["confusion"] = t.cm;
    if (t.has_breakdown) {
        nlohmann::json groups = nlohmann::json::array();
        for (const auto& [key, gr] : t.breakdown) {
            groups.push_back({{"tool", to_string(key.tool)},
                              {"technique", to_string(key.technique)},
                              {"scan_rows", gr.scan_rows},
                              {"benign_rows", gr.benign_rows},
                              {"efficacy", gr.report}});
        }
        j["breakdown"] = std::move(groups);
    } else {
        j["breakdown"] = nullptr;
    }
    j["toolkit_version"] = t.toolkit_version;
    j["elapsed_seconds"] = t.elapsed_seconds;
    return j;
}

inline TrialReport trial_from_json(const nlohmann::json& j) {
    TrialReport t;
    const auto set_id = set_id_from_string(j.at("set_id").get<std::string>());
    if (!set_id) throw ParseFailure("unknown set_id '" + j.at("set_id").dump() + "'");
    t.set_id = *set_id;
    const auto method = search_method_from_string(j.at("method").get<std::string>());
    if (!method) throw ParseFailure("unknown method '" + j.at("method").dump() + "'");
    t.method = *method;
    t.seed = j.at("seed").get<std::uint64_t>();
    t.train_rows = {j.at("split").at("train").at("benign").get<std::size_t>(),
                    j.at("split").at("train").at("scan").get<std::size_t>()};
    t.test_rows = {j.at("split").at("test").at("benign").get<std::size_t>(),
                   j.at("split").at("test").at("scan").get<std::size_t>()};
    t.best_config = j.at("search").at("best_config").get<HyperparamSet>();
    t.cv_mean_score = j.at("search").at("cv_mean_score").get<double>();
    t.cv_std_score = j.at("search").at("cv_std_score").get<double>();
    t.candidates_evaluated = j.at("search").at("candidates_evaluated").get<std::size_t>();
    t.test = j.at("test_efficacy").get<EfficacyReport>();
    t.cm = j.at("confusion").get<ConfusionMatrix>();
    t.has_breakdown = j.contains("breakdown") && !j.at("breakdown").is_null();
    if (t.has_breakdown) {
        for (const auto& g : j.at("breakdown")) {
            const auto tool = tool_from_string(g.at("tool").get<std::string>());
            const auto technique = technique_from_string(g.at("technique").get<std::string>());
            if (!tool || !technique)
                throw ParseFailure("unknown tool/technique in breakdown entry");
            GroupReport gr;
            gr.scan_rows = g.at("scan_rows").get<std::size_t>();
            gr.benign_rows = g.at("benign_rows").get<std::size_t>();
            gr.report = g.at("efficacy").get<EfficacyReport>();
            t.breakdown.emplace(GroupKey{*tool, *technique}, std::move(gr));
        }
    }
    t.toolkit_version = j.value("toolkit_version", std::string{});
    t.elapsed_seconds = j.value("elapsed_seconds", 0.0);
    return t;
}

inline nlohmann::json report_to_json(const std::vector<TrialReport>& trials) {
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& t : trials) rows.push_back(trial_to_json(t));
    return nlohmann::json{{"schema_version", kReportSchemaVersion},
                          {"toolkit_version", kVersion},
                          {"trials", std::move(rows)}};
}

/// Rejects files whose schema_version is missing or unknown.
inline std::vector<TrialReport> report_from_json(const nlohmann::json& j) {
    if (!j.contains("schema_version") || !j.at("schema_version").is_number_integer())
        throw UnsupportedVersion("report lacks an integer schema_version");
    if (j.at("schema_version").get<int>() != kReportSchemaVersion)
        throw UnsupportedVersion("unsupported report schema_version " +
                                 j.at("schema_version").dump());
    std::vector<TrialReport> out;
    for (const auto& t : j.at("trials")) out.push_back(trial_from_json(t));
    return out;
}

// ---------------------------------------------------------------------------
// Rendering
// ---------------------------------------------------------------------------

namespace detail {

inline std::string fixed4(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.4f", v);
    return buf;
}

struct TextTable {
    std::vector<std::string> headers;
    std::vector<std::vector<std::string>> rows;

    std::string markdown() const {
        std::string out = "|";
        for (const auto& h : headers) out += " " + h + " |";
        out += "\n|";
        for (const auto& h : headers) out += std::string(h.size() + 2, '-') + "|";
        out += "\n";
        for (const auto& row : rows) {
            out += "|";
            for (const auto& cell : row) out += " " + cell + " |";
            out += "\n";
        }
        return out;
    }

    std::string text() const {
        std::vector<std::size_t> widths(headers.size());
        for (std::size_t c = 0; c < headers.size(); ++c) widths[c] = headers[c].size();
        for (const auto& row : rows)
            for (std::size_t c = 0; c < row.size(); ++c)
                widths[c] = std::max(widths[c], row[c].size());
        auto pad = [&](const std::string& s, std::size_t w) {
            return s + std::string(w - s.size(), ' ');
        };
        std::string out;
        for (std::size_t c = 0; c < headers.size(); ++c)
            out += pad(headers[c], widths[c]) + (c + 1 < headers.size() ? "  " : "");
        out += "\n";
        std::size_t rule = 0;
        for (std::size_t c = 0; c < widths.size(); ++c)
            rule += widths[c] + (c + 1 < widths.size() ? 2 : 0);
        out += std::string(rule, '-') + "\n";
        for (const auto& row : rows) {
            for (std::size_t c = 0; c < row.size(); ++c)
                out += pad(row[c], widths[c]) + (c + 1 < row.size() ? "  " : "");
            out += "\n";
        }
        return out;
    }
};

/// Within each set the random-search row comes first, the grid-search row
/// second; sets keep first-appearance order.
inline std::vector<std::vector<const TrialReport*>> group_by_set(
    const std::vector<TrialReport>& trials) {
    std::vector<SetId> seen;
    std::vector<std::vector<const TrialReport*>> groups;
    for (const auto& t : trials) {
        std::size_t g = 0;
        for (; g < seen.size(); ++g)
            if (seen[g] == t.set_id) break;
        if (g == seen.size()) {
            seen.push_back(t.set_id);
            groups.emplace_back();
        }
        groups[g].push_back(&t);
    }
    for (auto& group : groups)
        std::stable_sort(group.begin(), group.end(), [](const auto* a, const auto* b) {
            return (a->method == SearchMethod::random) > (b->method == SearchMethod::random);
        });
    return groups;
}

inline TextTable trial_table(std::span<const TrialReport* const> group) {
    TextTable t;
    t.headers = {"Search", "Accuracy", "Recall", "Precision", "F1",
                 "CV mean", "Estimators", "Depth"};
    for (const TrialReport* r : group) {
        t.rows.push_back({to_string(r->method), fixed4(r->test.accuracy),
                          fixed4(r->test.macro_recall), fixed4(r->test.macro_precision),
                          fixed4(r->test.macro_f1), fixed4(r->cv_mean_score),
                          std::to_string(r->best_config.n_estimators),
                          r->best_config.max_depth ? std::to_string(*r->best_config.max_depth)
                                                   : std::string("unlimited")});
    }
    return t;
}

inline TextTable breakdown_table(const TrialReport& r) {
    TextTable t;
    t.headers = {"Tool", "Technique", "Accuracy", "Scan recall", "Macro F1",
                 "Scan rows", "Benign rows"};
    for (const auto& [key, gr] : r.breakdown) {
        t.rows.push_back({to_string(key.tool), to_string(key.technique),
                          fixed4(gr.report.accuracy), fixed4(gr.report.per_class[1].recall),
                          fixed4(gr.report.macro_f1), std::to_string(gr.scan_rows),
                          std::to_string(gr.benign_rows)});
    }
    return t;
}

}  // namespace detail

/// Elapsed times and timestamps are deliberately excluded so identical
/// seeds render byte-identical documents.
inline std::string render_markdown(const std::vector<TrialReport>& trials) {
    std::string out = "# Trial results\n";
    for (const auto& group : detail::group_by_set(trials)) {
        out += "\n## Set " + std::string(to_string(group.front()->set_id)) + "\n\n";
        out += detail::trial_table(group).markdown();
        for (const TrialReport* r : group) {
            out += "\n### Per-group breakdown (" + std::string(to_string(r->method)) + ")\n\n";
            if (r->has_breakdown)
                out += detail::breakdown_table(*r).markdown();
            else
                out += "No tool/technique metadata in the test rows; breakdown omitted.\n";
        }
    }
    return out;
}

inline std::string render_text(const std::vector<TrialReport>& trials) {
    std::string out;
    for (const auto& group : detail::group_by_set(trials)) {
        out += "Set " + std::string(to_string(group.front()->set_id)) + "\n\n";
        out += detail::trial_table(group).text();
        for (const TrialReport* r : group) {
            out += "\nPer-group breakdown (" + std::string(to_string(r->method)) + ")\n";
            if (r->has_breakdown)
                out += detail::breakdown_table(*r).text();
            else
                out += "No tool/technique metadata in the test rows; breakdown omitted.\n";
        }
        out += "\n";
    }
    return out;
}

// ---------------------------------------------------------------------------
// Baseline comparison output
// ---------------------------------------------------------------------------

inline nlohmann::json comparison_to_json(const BaselineComparison& c) {
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& row : c.rows)
        rows.push_back({{"trial", row.trial_label},
                        {"trial_accuracy", row.trial_accuracy},
                        {"study", row.study},
                        {"baseline_accuracy", row.baseline_accuracy}});
    return nlohmann::json{{"schema_version", kReportSchemaVersion},
                          {"comparison", std::move(rows)},
                          {"ttest",
                           {{"t", c.ttest.t},
                            {"p", c.ttest.p},
                            {"df", c.ttest.df},
                            {"mean_diff", c.ttest.mean_diff},
                            {"diff_std", c.ttest.diff_std}}}};
}

namespace detail {

inline std::string optional_cell(const std::optional<double>& v) {
    return v ? fixed4(*v) : std::string("NaN");
}

inline TextTable comparison_table(const BaselineComparison& c,
                                  std::span<const BaselineEntry> baselines) {
    TextTable t;
    t.headers = {"Study", "Accuracy", "Recall", "Precision", "F1", "Reproduction"};
    std::map<std::string, std::vector<std::string>> paired;
    for (const auto& row : c.rows)
        paired[row.study].push_back(row.trial_label + " " + fixed4(row.trial_accuracy));
    for (const auto& b : baselines) {
        std::string repro = "-";
        if (const auto it = paired.find(b.study); it != paired.end()) {
            repro.clear();
            for (std::size_t i = 0; i < it->second.size(); ++i)
                repro += (i ? ", " : "") + it->second[i];
        }
        t.rows.push_back({b.study, optional_cell(b.accuracy), optional_cell(b.recall),
                          optional_cell(b.precision), optional_cell(b.f1), repro});
    }
    return t;
}

inline std::string ttest_line(const TTestResult& r) {
    return "paired t-test: t = " + fixed4(r.t) + ", p = " + fixed4(r.p) +
           ", df = " + std::to_string(r.df) + ", std = " + fixed4(r.diff_std) + "\n";
}

}  // namespace detail

inline std::string render_comparison_markdown(const BaselineComparison& c,
                                              std::span<const BaselineEntry> baselines) {
    std::string out = "# Efficacy comparison across source studies\n\n";
    out += detail::comparison_table(c, baselines).markdown();
    out += "\n" + detail::ttest_line(c.ttest);
    return out;
}

inline std::string render_comparison_text(const BaselineComparison& c,
                                          std::span<const BaselineEntry> baselines) {
    std::string out = detail::comparison_table(c, baselines).text();
    out += "\n" + detail::ttest_line(c.ttest);
    return out;
}

}  // namespace scanforest
