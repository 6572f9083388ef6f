#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "scanforest/dataset.hpp"
#include "scanforest/error.hpp"
#include "scanforest/rng.hpp"

namespace scanforest {

// ---------------------------------------------------------------------------
// Confusion matrix and efficacy
// ---------------------------------------------------------------------------

struct ConfusionMatrix {
    // counts[actual][predicted]
    std::array<std::array<std::size_t, 2>, 2> counts{{{0, 0}, {0, 0}}};

    std::size_t total() const {
        return counts[0][0] + counts[0][1] + counts[1][0] + counts[1][1];
    }
    bool operator==(const ConfusionMatrix&) const = default;
};

inline ConfusionMatrix confusion(std::span<const int> actual, std::span<const int> predicted) {
    if (actual.size() != predicted.size())
        throw LengthMismatch("confusion: " + std::to_string(actual.size()) + " actual vs " +
                             std::to_string(predicted.size()) + " predicted");
    if (actual.empty()) throw EmptyInput("confusion: no rows");
    ConfusionMatrix cm;
    for (std::size_t i = 0; i < actual.size(); ++i)
        ++cm.counts[actual[i] != 0][predicted[i] != 0];
    return cm;
}

struct ClassEfficacy {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    std::size_t support = 0;
};

struct EfficacyReport {
    double accuracy = 0.0;
    std::array<ClassEfficacy, 2> per_class{};
    double macro_precision = 0.0;
    double macro_recall = 0.0;
    double macro_f1 = 0.0;
    // set when any precision/recall/f1 denominator was zero (value forced
    // to 0 rather than raising)
    bool zero_division = false;
};

inline EfficacyReport efficacy(const ConfusionMatrix& cm) {
    const std::size_t total = cm.total();
    if (total == 0) throw EmptyMatrix("efficacy: empty confusion matrix");

    EfficacyReport r;
    r.accuracy = static_cast<double>(cm.counts[0][0] + cm.counts[1][1]) /
                 static_cast<double>(total);
    for (int c = 0; c < 2; ++c) {
        const auto ci = static_cast<std::size_t>(c);
        const double tp = static_cast<double>(cm.counts[ci][ci]);
        const double fp = static_cast<double>(cm.counts[1 - ci][ci]);
        const double fn = static_cast<double>(cm.counts[ci][1 - ci]);
        ClassEfficacy& e = r.per_class[ci];
        e.support = cm.counts[ci][0] + cm.counts[ci][1];
        if (tp + fp > 0.0)
            e.precision = tp / (tp + fp);
        else
            r.zero_division = true;
        if (tp + fn > 0.0)
            e.recall = tp / (tp + fn);
        else
            r.zero_division = true;
        if (e.precision + e.recall > 0.0)
            e.f1 = 2.0 * e.precision * e.recall / (e.precision + e.recall);
        else
            r.zero_division = true;
    }
    r.macro_precision = (r.per_class[0].precision + r.per_class[1].precision) / 2.0;
    r.macro_recall = (r.per_class[0].recall + r.per_class[1].recall) / 2.0;
    r.macro_f1 = (r.per_class[0].f1 + r.per_class[1].f1) / 2.0;
    return r;
}

// ---------------------------------------------------------------------------
// Per-group breakdown
// ---------------------------------------------------------------------------

struct GroupKey {
    Tool tool;
    Technique technique;
    auto operator<=>(const GroupKey&) const = default;
};

struct GroupReport {
    EfficacyReport report;
    std::size_t scan_rows = 0;
    std::size_t benign_rows = 0;
};

namespace detail {

inline std::size_t group_ordinal(GroupKey key) {
    return static_cast<std::size_t>(key.tool) * 6 + static_cast<std::size_t>(key.technique);
}

}  // namespace detail

/// Per-(tool, technique) efficacy. A scan group alone has no negative
/// class, so each group is evaluated together with an equal-size benign
/// sample drawn without replacement, deterministically from `seed` and the
/// group's ordinal.
inline std::map<GroupKey, GroupReport> group_breakdown(const Dataset& rows,
                                                       std::span<const int> predictions,
                                                       std::uint64_t seed) {
    if (rows.n_rows() != predictions.size())
        throw LengthMismatch("group_breakdown: " + std::to_string(rows.n_rows()) +
                             " rows vs " + std::to_string(predictions.size()) +
                             " predictions");

    std::map<GroupKey, std::vector<std::size_t>> groups;
    std::vector<std::size_t> benign;
    for (std::size_t i = 0; i < rows.n_rows(); ++i) {
        const FlowRecord& row = rows.rows[i];
        if (row.label == 0) {
            benign.push_back(i);
        } else if (row.tool && row.technique) {
            groups[GroupKey{*row.tool, *row.technique}].push_back(i);
        }
    }
    if (groups.empty())
        throw NoMetadata("group_breakdown: no scan row carries tool/technique metadata");

    std::map<GroupKey, GroupReport> out;
    for (const auto& [key, scan_indices] : groups) {
        const auto want = static_cast<std::uint32_t>(
            std::min(scan_indices.size(), benign.size()));
        Rng rng(derive_seed(seed, detail::group_ordinal(key)));
        const auto picks =
            rng.sample_without_replacement(static_cast<std::uint32_t>(benign.size()), want);

        std::vector<int> actual;
        std::vector<int> predicted;
        actual.reserve(scan_indices.size() + want);
        predicted.reserve(scan_indices.size() + want);
        for (const std::size_t i : scan_indices) {
            actual.push_back(1);
            predicted.push_back(predictions[i]);
        }
        for (const std::uint32_t p : picks) {
            actual.push_back(0);
            predicted.push_back(predictions[benign[p]]);
        }
        GroupReport gr;
        gr.scan_rows = scan_indices.size();
        gr.benign_rows = want;
        gr.report = efficacy(confusion(actual, predicted));
        out.emplace(key, std::move(gr));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Student's t machinery
// ---------------------------------------------------------------------------

namespace detail {

/// Continued fraction for the regularized incomplete beta function
/// (modified Lentz scheme). Converges for x < (a+1)/(a+b+2).
inline double betacf(double a, double b, double x) {
    constexpr int kMaxIter = 300;
    constexpr double kEps = 3e-16;
    constexpr double kFpMin = 1e-300;

    const double qab = a + b;
    const double qap = a + 1.0;
    const double qam = a - 1.0;
    double c = 1.0;
    double d = 1.0 - qab * x / qap;
    if (std::fabs(d) < kFpMin) d = kFpMin;
    d = 1.0 / d;
    double h = d;
    for (int m = 1; m <= kMaxIter; ++m) {
        const int m2 = 2 * m;
        double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if (std::fabs(d) < kFpMin) d = kFpMin;
        c = 1.0 + aa / c;
        if (std::fabs(c) < kFpMin) c = kFpMin;
        d = 1.0 / d;
        h *= d * c;
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if (std::fabs(d) < kFpMin) d = kFpMin;
        c = 1.0 + aa / c;
        if (std::fabs(c) < kFpMin) c = kFpMin;
        d = 1.0 / d;
        const double del = d * c;
        h *= del;
        if (std::fabs(del - 1.0) < kEps) break;
    }
    return h;
}

}  // namespace detail

/// Regularized incomplete beta function I_x(a, b), absolute error
/// within 1e-10 over the t-test range.
inline double incomplete_beta(double a, double b, double x) {
    if (x < 0.0 || x > 1.0) throw Error("incomplete_beta: x outside [0,1]");
    if (x == 0.0) return 0.0;
    if (x == 1.0) return 1.0;
    const double ln_front = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) +
                            a * std::log(x) + b * std::log(1.0 - x);
    const double front = std::exp(ln_front);
    if (x < (a + 1.0) / (a + b + 2.0)) return front * detail::betacf(a, b, x) / a;
    return 1.0 - front * detail::betacf(b, a, 1.0 - x) / b;
}

/// Two-sided tail probability P(|T| >= |t|) for Student's t with df
/// degrees of freedom.
inline double student_t_two_sided(double t, double df) {
    if (df <= 0.0) throw Error("student_t_two_sided: df must be positive");
    const double x = df / (df + t * t);
    return incomplete_beta(df / 2.0, 0.5, x);
}

/// P(T <= t) for Student's t.
inline double student_t_cdf(double t, double df) {
    const double two_sided = student_t_two_sided(t, df);
    return t >= 0.0 ? 1.0 - two_sided / 2.0 : two_sided / 2.0;
}

struct TTestResult {
    double t = 0.0;
    double p = 1.0;
    std::size_t df = 0;
    double mean_diff = 0.0;
    double diff_std = 0.0;
};

/// Paired two-sided t-test with sample standard deviation (n-1).
inline TTestResult paired_ttest(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size())
        throw LengthMismatch("paired_ttest: " + std::to_string(a.size()) + " vs " +
                             std::to_string(b.size()) + " samples");
    if (a.size() < 2) throw EmptyInput("paired_ttest: need at least 2 pairs");

    const auto n = static_cast<double>(a.size());
    std::vector<double> d(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) d[i] = a[i] - b[i];
    double mean = 0.0;
    for (const double v : d) mean += v;
    mean /= n;
    double ss = 0.0;
    for (const double v : d) ss += (v - mean) * (v - mean);
    const double sd = std::sqrt(ss / (n - 1.0));
    if (sd == 0.0) throw ZeroVariance("paired_ttest: all differences equal");

    TTestResult r;
    r.df = a.size() - 1;
    r.mean_diff = mean;
    r.diff_std = sd;
    r.t = mean / (sd / std::sqrt(n));
    r.p = student_t_two_sided(r.t, static_cast<double>(r.df));
    return r;
}

// ---------------------------------------------------------------------------
// Baseline table
// ---------------------------------------------------------------------------

struct BaselineEntry {
    std::string study;
    std::optional<double> accuracy;
    std::optional<double> recall;
    std::optional<double> precision;
    std::optional<double> f1;

    bool operator==(const BaselineEntry&) const = default;
};

/// Published per-study efficacy constants, embedded verbatim. Absent cells
/// mark values the source never reported. Sirisha's accuracy is kept as
/// published in the comparison table even though the study's own corpus
/// splits report higher values elsewhere.
inline const std::vector<BaselineEntry>& builtin_baselines() {
    static const std::vector<BaselineEntry> table = {
        {"Algaolahi", 0.9975, 0.9989, 0.9975, 0.9982},
        {"Baah", 0.9998, 0.9997, 0.9999, 0.9998},
        {"Sirisha", 0.7650, 0.6525, 0.9721, 0.7809},
        {"SaiKiran", 0.9993, std::nullopt, std::nullopt, std::nullopt},
        {"Mohseni", 0.9964, std::nullopt, std::nullopt, std::nullopt},
        {"Bertoli", std::nullopt, std::nullopt, std::nullopt, 1.0000},
    };
    return table;
}

namespace detail {

inline std::optional<double> parse_baseline_cell(const std::string& cell, std::size_t line,
                                                 const std::string& column) {
    std::string s = cell;
    while (!s.empty() && (s.back() == ' ' || s.back() == '\r')) s.pop_back();
    std::size_t start = 0;
    while (start < s.size() && s[start] == ' ') ++start;
    s = s.substr(start);
    if (s.empty() || s == "NaN" || s == "nan" || s == "-") return std::nullopt;
    try {
        std::size_t used = 0;
        const double v = std::stod(s, &used);
        if (used != s.size()) throw std::invalid_argument(s);
        return v;
    } catch (const std::exception&) {
        throw ParseFailure("baselines line " + std::to_string(line) + ", column " + column +
                           ": cannot parse '" + s + "'");
    }
}

}  // namespace detail

/// Reads a baseline table from CSV with header
/// `study,accuracy,recall,precision,f1`; empty, `-`, or NaN cells mark
/// absent values.
inline std::vector<BaselineEntry> load_baselines_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open baselines file: " + path);

    std::string line;
    if (!std::getline(in, line)) throw EmptyDataset("baselines file has no header: " + path);
    while (!line.empty() && line.back() == '\r') line.pop_back();
    if (line != "study,accuracy,recall,precision,f1")
        throw MissingColumn("baselines header must be 'study,accuracy,recall,precision,f1', got '" +
                            line + "'");

    std::vector<BaselineEntry> out;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        while (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::vector<std::string> cells;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) cells.push_back(cell);
        if (!line.empty() && line.back() == ',') cells.push_back("");
        if (cells.size() != 5)
            throw ParseFailure("baselines line " + std::to_string(line_no) + ": expected 5 cells, got " +
                               std::to_string(cells.size()));
        BaselineEntry e;
        e.study = cells[0];
        e.accuracy = detail::parse_baseline_cell(cells[1], line_no, "accuracy");
        e.recall = detail::parse_baseline_cell(cells[2], line_no, "recall");
        e.precision = detail::parse_baseline_cell(cells[3], line_no, "precision");
        e.f1 = detail::parse_baseline_cell(cells[4], line_no, "f1");
        out.push_back(std::move(e));
    }
    if (out.empty()) throw EmptyDataset("baselines file has no rows: " + path);
    return out;
}

// ---------------------------------------------------------------------------
// Baseline comparison
// ---------------------------------------------------------------------------

struct TrialAccuracy {
    std::string label;
    double accuracy = 0.0;
};

struct ComparisonRow {
    std::string trial_label;
    double trial_accuracy = 0.0;
    std::string study;
    double baseline_accuracy = 0.0;
};

struct BaselineComparison {
    std::vector<ComparisonRow> rows;
    TTestResult ttest;
};

/// Pairs trial accuracies with baseline accuracies per the explicit index
/// map and runs the paired t-test over them. The pairing is recorded in the
/// returned rows so the comparison is auditable.
inline BaselineComparison compare_to_baselines(
    std::span<const TrialAccuracy> trials, std::span<const BaselineEntry> baselines,
    std::span<const std::pair<std::size_t, std::size_t>> pairing) {
    if (pairing.size() < 2)
        throw InvalidConfig("pairing must map at least 2 trials to baselines");

    BaselineComparison out;
    std::vector<double> ours;
    std::vector<double> theirs;
    for (const auto& [trial_index, baseline_index] : pairing) {
        if (trial_index >= trials.size())
            throw InvalidConfig("pairing names trial index " + std::to_string(trial_index) +
                                " but only " + std::to_string(trials.size()) +
                                " trials were given");
        if (baseline_index >= baselines.size())
            throw InvalidConfig("pairing names baseline index " + std::to_string(baseline_index) +
                                " but the table has " + std::to_string(baselines.size()) +
                                " rows");
        const BaselineEntry& base = baselines[baseline_index];
        if (!base.accuracy)
            throw InvalidConfig("baseline '" + base.study + "' reports no accuracy");
        out.rows.push_back({trials[trial_index].label, trials[trial_index].accuracy,
                            base.study, *base.accuracy});
        ours.push_back(trials[trial_index].accuracy);
        theirs.push_back(*base.accuracy);
    }
    out.ttest = paired_ttest(ours, theirs);
    return out;
}

}  // namespace scanforest
