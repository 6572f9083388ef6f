#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <vector>

#include "scanforest/metrics.hpp"
#include "scanforest/scangen.hpp"

#include "helpers.hpp"

using namespace scanforest;
using test_helpers::flow;

namespace {

std::string write_temp(const std::string& name, const std::string& content) {
    const auto path = std::filesystem::temp_directory_path() / name;
    std::ofstream out(path);
    out << content;
    out.close();
    return path.string();
}

/// Frozen reference results for paired_ttest, computed independently with
/// high-precision arithmetic.
struct TTestOracle {
    std::vector<double> a;
    std::vector<double> b;
    double t;
    double p;
    std::size_t df;
    double sd;
};

const std::vector<TTestOracle>& ttest_oracles() {
    static const std::vector<TTestOracle> cases = {
        {{0.9970, 0.9976, 0.9939, 0.9947},
         {0.9975, 0.9998, 0.7650, 0.9993},
         0.957823813397, 0.408812202659, 3, 0.115678894647},
        {{0.5, 0.6, 0.7, 0.8, 0.9},
         {0.55, 0.58, 0.72, 0.79, 0.88},
         -0.293294230043, 0.783884443388, 4, 0.030495901364},
        {{1.0, 2.0, 3.0},
         {1.1, 2.2, 2.7},
         0.0, 1.0, 2, 0.264575131106},
        {{0.1, 0.2, 0.3, 0.4, 0.5, 0.6},
         {0.15, 0.19, 0.33, 0.38, 0.52, 0.61},
         -1.264911064067, 0.261651766300, 5, 0.025819888975},
        {{10.0, 12.0, 9.0, 11.0},
         {10.5, 11.0, 9.5, 10.0},
         0.577350269190, 0.604181303591, 3, 0.866025403784},
    };
    return cases;
}

}  // namespace

TEST_CASE("confusion matrix on worked examples") {
    const std::vector<int> actual{0, 1, 1, 0};
    const std::vector<int> predicted{0, 1, 0, 0};
    const ConfusionMatrix cm = confusion(actual, predicted);
    REQUIRE(cm.counts[0][0] == 2);
    REQUIRE(cm.counts[0][1] == 0);
    REQUIRE(cm.counts[1][0] == 1);
    REQUIRE(cm.counts[1][1] == 1);
    REQUIRE(cm.total() == 4);

    const std::vector<int> shorter{0, 1};
    REQUIRE_THROWS_AS(confusion(actual, shorter), LengthMismatch);
    const std::vector<int> empty;
    REQUIRE_THROWS_AS(confusion(empty, empty), EmptyInput);
}

TEST_CASE("confusion matrix cells always sum to the pair count") {
    Rng rng(101);
    std::vector<int> actual(1000);
    std::vector<int> predicted(1000);
    std::size_t agree = 0;
    for (std::size_t i = 0; i < 1000; ++i) {
        actual[i] = static_cast<int>(rng.below(2));
        predicted[i] = static_cast<int>(rng.below(2));
        agree += actual[i] == predicted[i];
    }
    const ConfusionMatrix cm = confusion(actual, predicted);
    REQUIRE(cm.total() == 1000);
    REQUIRE(cm.counts[0][0] + cm.counts[1][1] == agree);
}

TEST_CASE("efficacy of a perfect classifier") {
    ConfusionMatrix cm;
    cm.counts = {{{50, 0}, {0, 50}}};
    const EfficacyReport r = efficacy(cm);
    REQUIRE(r.accuracy == 1.0);
    for (int c = 0; c < 2; ++c) {
        REQUIRE(r.per_class[c].precision == 1.0);
        REQUIRE(r.per_class[c].recall == 1.0);
        REQUIRE(r.per_class[c].f1 == 1.0);
        REQUIRE(r.per_class[c].support == 50);
    }
    REQUIRE(r.macro_f1 == 1.0);
    REQUIRE_FALSE(r.zero_division);
}

TEST_CASE("efficacy flags zero-division instead of raising") {
    ConfusionMatrix cm;
    cm.counts = {{{50, 0}, {50, 0}}};  // everything predicted benign
    const EfficacyReport r = efficacy(cm);
    REQUIRE(r.accuracy == 0.5);
    REQUIRE(r.zero_division);
    REQUIRE(r.per_class[1].precision == 0.0);
    REQUIRE(r.per_class[1].recall == 0.0);
    REQUIRE(r.per_class[1].f1 == 0.0);
    REQUIRE(r.macro_recall == 0.5);
}

TEST_CASE("efficacy on a worked asymmetric example") {
    ConfusionMatrix cm;
    cm.counts = {{{85, 5}, {10, 100}}};
    const EfficacyReport r = efficacy(cm);
    REQUIRE(r.accuracy == Catch::Approx(0.925).margin(1e-15));
    REQUIRE(r.per_class[0].precision == 85.0 / 95.0);
    REQUIRE(r.per_class[0].recall == 85.0 / 90.0);
    REQUIRE(r.per_class[1].precision == 100.0 / 105.0);
    REQUIRE(r.per_class[1].recall == 100.0 / 110.0);
    REQUIRE(r.per_class[0].support == 90);
    REQUIRE(r.per_class[1].support == 110);
    REQUIRE(r.macro_precision ==
            Catch::Approx((85.0 / 95.0 + 100.0 / 105.0) / 2.0).margin(1e-15));

    ConfusionMatrix empty;
    REQUIRE_THROWS_AS(efficacy(empty), EmptyMatrix);
}

TEST_CASE("support-weighted recall equals accuracy") {
    Rng rng(77);
    std::vector<int> actual(500);
    std::vector<int> predicted(500);
    for (std::size_t i = 0; i < 500; ++i) {
        actual[i] = static_cast<int>(rng.below(2));
        predicted[i] = rng.bernoulli(0.8) ? actual[i] : 1 - actual[i];
    }
    const EfficacyReport r = efficacy(confusion(actual, predicted));
    const double micro =
        (r.per_class[0].recall * static_cast<double>(r.per_class[0].support) +
         r.per_class[1].recall * static_cast<double>(r.per_class[1].support)) /
        500.0;
    REQUIRE(micro == Catch::Approx(r.accuracy).margin(1e-12));
}

TEST_CASE("f1 matches its counts-only form") {
    ConfusionMatrix cm;
    cm.counts = {{{37, 13}, {8, 42}}};
    const EfficacyReport r = efficacy(cm);
    // class 1: f1 = 2tp / (2tp + fp + fn), independent of p/r intermediates
    REQUIRE(r.per_class[1].f1 ==
            Catch::Approx(2.0 * 42.0 / (2.0 * 42.0 + 13.0 + 8.0)).margin(1e-12));
    REQUIRE(r.per_class[0].f1 ==
            Catch::Approx(2.0 * 37.0 / (2.0 * 37.0 + 8.0 + 13.0)).margin(1e-12));
}

TEST_CASE("group_breakdown on a single group") {
    std::vector<FlowRecord> rows;
    for (int i = 0; i < 6; ++i) rows.push_back(flow({static_cast<double>(i)}, 0));
    for (int i = 0; i < 4; ++i)
        rows.push_back(flow({10.0 + i}, 1, Tool::nmap, Technique::syn));
    const Dataset d = test_helpers::dataset({"x"}, std::move(rows));
    std::vector<int> predictions;
    for (const auto& r : d.rows) predictions.push_back(r.label);

    const auto breakdown = group_breakdown(d, predictions, 5);
    REQUIRE(breakdown.size() == 1);
    const auto& g = breakdown.at(GroupKey{Tool::nmap, Technique::syn});
    REQUIRE(g.scan_rows == 4);
    REQUIRE(g.benign_rows == 4);  // equal-size benign sample
    REQUIRE(g.report.accuracy == 1.0);
}

TEST_CASE("group_breakdown covers every profile in a default corpus") {
    const Dataset d = test_helpers::corpus(2000, 19);
    std::vector<int> predictions;
    for (const auto& r : d.rows) predictions.push_back(r.label);
    const auto breakdown = group_breakdown(d, predictions, 7);
    REQUIRE(breakdown.size() == 10);
    for (const auto& [key, g] : breakdown) {
        REQUIRE(g.report.accuracy == 1.0);
        REQUIRE(g.scan_rows > 0);
        REQUIRE(g.benign_rows == g.scan_rows);
    }
}

TEST_CASE("group_breakdown benign sampling is seed-deterministic") {
    const Dataset d = test_helpers::corpus(1500, 23);
    // a deliberately poor predictor so the sampled benign rows matter
    std::vector<int> predictions;
    Rng noise(3);
    for (const auto& r : d.rows)
        predictions.push_back(noise.bernoulli(0.4) ? 1 - r.label : r.label);

    const auto a = group_breakdown(d, predictions, 99);
    const auto b = group_breakdown(d, predictions, 99);
    REQUIRE(a.size() == b.size());
    for (const auto& [key, ga] : a) {
        const auto& gb = b.at(key);
        REQUIRE(ga.report.accuracy == gb.report.accuracy);
        REQUIRE(ga.scan_rows == gb.scan_rows);
        REQUIRE(ga.benign_rows == gb.benign_rows);
    }
}

TEST_CASE("group_breakdown failure modes") {
    std::vector<FlowRecord> rows{flow({1.0}, 0), flow({2.0}, 1)};
    const Dataset d = test_helpers::dataset({"x"}, std::move(rows));
    const std::vector<int> predictions{0, 1};
    REQUIRE_THROWS_AS(group_breakdown(d, predictions, 1), NoMetadata);

    const std::vector<int> wrong_len{0};
    REQUIRE_THROWS_AS(group_breakdown(d, wrong_len, 1), LengthMismatch);
}

TEST_CASE("paired_ttest matches frozen references") {
    for (std::size_t i = 0; i < ttest_oracles().size(); ++i) {
        const auto& c = ttest_oracles()[i];
        INFO("oracle case " << i);
        const TTestResult r = paired_ttest(c.a, c.b);
        REQUIRE(r.df == c.df);
        REQUIRE(r.t == Catch::Approx(c.t).margin(1e-9));
        REQUIRE(r.p == Catch::Approx(c.p).margin(1e-9));
        REQUIRE(r.diff_std == Catch::Approx(c.sd).margin(1e-9));
    }
}

TEST_CASE("paired_ttest input validation") {
    const std::vector<double> a{1.0, 2.0, 3.0};
    const std::vector<double> b{1.5, 2.5};
    REQUIRE_THROWS_AS(paired_ttest(a, b), LengthMismatch);

    const std::vector<double> one{1.0};
    REQUIRE_THROWS_AS(paired_ttest(one, one), EmptyInput);

    // exactly representable values, so every difference is bitwise equal
    const std::vector<double> x{1.0, 2.0, 3.0};
    const std::vector<double> y{0.5, 1.5, 2.5};
    REQUIRE_THROWS_AS(paired_ttest(x, y), ZeroVariance);
    REQUIRE_THROWS_AS(paired_ttest(x, x), ZeroVariance);
}

TEST_CASE("paired_ttest is antisymmetric and shift-invariant") {
    const std::vector<double> a{10.0, 12.0, 9.0, 11.0};
    const std::vector<double> b{10.5, 11.0, 9.5, 10.0};
    const TTestResult fwd = paired_ttest(a, b);
    const TTestResult rev = paired_ttest(b, a);
    REQUIRE(fwd.t == -rev.t);
    REQUIRE(fwd.p == rev.p);
    REQUIRE(fwd.diff_std == rev.diff_std);

    // a shift by an exactly representable constant leaves differences intact
    std::vector<double> a2 = a;
    std::vector<double> b2 = b;
    for (auto& v : a2) v += 2.0;
    for (auto& v : b2) v += 2.0;
    const TTestResult shifted = paired_ttest(a2, b2);
    REQUIRE(shifted.t == fwd.t);
    REQUIRE(shifted.p == fwd.p);
}

TEST_CASE("two-sided t tail probability matches a frozen grid") {
    struct GridPoint {
        double t;
        double df;
        double p;
    };
    const std::vector<GridPoint> grid = {
        {0.5, 1, 0.704832764699},  {0.5, 3, 0.651447964848},
        {0.5, 5, 0.638298871641},  {0.5, 10, 0.627893605743},
        {0.5, 30, 0.620723004885}, {1.0, 1, 0.5},
        {1.0, 3, 0.391002218956},  {1.0, 5, 0.363217467649},
        {1.0, 10, 0.340893132302}, {1.0, 30, 0.325308615426},
        {1.5, 1, 0.374334083622},  {1.5, 3, 0.230583865245},
        {1.5, 5, 0.193903680242},  {1.5, 10, 0.164507326445},
        {1.5, 30, 0.144065929129}, {2.0, 1, 0.295167235301},
        {2.0, 3, 0.139325968559},  {2.0, 5, 0.101939478830},
        {2.0, 10, 0.073388034771}, {2.0, 30, 0.054625044963},
        {3.0, 1, 0.204832764699},  {3.0, 3, 0.057668885622},
        {3.0, 5, 0.030099247897},  {3.0, 10, 0.013343655023},
        {3.0, 30, 0.005389964066},
    };
    for (const auto& g : grid) {
        INFO("t=" << g.t << " df=" << g.df);
        REQUIRE(student_t_two_sided(g.t, g.df) == Catch::Approx(g.p).margin(1e-10));
        REQUIRE(student_t_two_sided(-g.t, g.df) == Catch::Approx(g.p).margin(1e-10));
    }
    REQUIRE(student_t_two_sided(0.0, 7.0) == 1.0);
    REQUIRE(student_t_cdf(0.0, 7.0) == 0.5);
    REQUIRE_THROWS_AS(student_t_two_sided(1.0, 0.0), Error);
}

TEST_CASE("incomplete_beta endpoints and range check") {
    REQUIRE(incomplete_beta(2.0, 3.0, 0.0) == 0.0);
    REQUIRE(incomplete_beta(2.0, 3.0, 1.0) == 1.0);
    REQUIRE_THROWS_AS(incomplete_beta(2.0, 3.0, -0.1), Error);
    REQUIRE_THROWS_AS(incomplete_beta(2.0, 3.0, 1.1), Error);
    // I_x(1,1) is the identity
    REQUIRE(incomplete_beta(1.0, 1.0, 0.37) == Catch::Approx(0.37).margin(1e-12));
}

TEST_CASE("builtin baseline table is exact") {
    const auto& table = builtin_baselines();
    REQUIRE(table.size() == 6);
    REQUIRE(table[0] == BaselineEntry{"Algaolahi", 0.9975, 0.9989, 0.9975, 0.9982});
    REQUIRE(table[1] == BaselineEntry{"Baah", 0.9998, 0.9997, 0.9999, 0.9998});
    REQUIRE(table[2] == BaselineEntry{"Sirisha", 0.7650, 0.6525, 0.9721, 0.7809});
    REQUIRE(table[3] ==
            BaselineEntry{"SaiKiran", 0.9993, std::nullopt, std::nullopt, std::nullopt});
    REQUIRE(table[4] ==
            BaselineEntry{"Mohseni", 0.9964, std::nullopt, std::nullopt, std::nullopt});
    REQUIRE(table[5] ==
            BaselineEntry{"Bertoli", std::nullopt, std::nullopt, std::nullopt, 1.0000});
}

TEST_CASE("baseline CSV round trip") {
    const std::string path = write_temp(
        "scanforest_baselines_ok.csv",
        "study,accuracy,recall,precision,f1\n"
        "Algaolahi,0.9975,0.9989,0.9975,0.9982\n"
        "SaiKiran,0.9993,NaN,-,\n"
        "Bertoli,nan,NaN,NaN,1.0000\n");
    const auto rows = load_baselines_csv(path);
    REQUIRE(rows.size() == 3);
    REQUIRE(rows[0] == BaselineEntry{"Algaolahi", 0.9975, 0.9989, 0.9975, 0.9982});
    REQUIRE(rows[1] ==
            BaselineEntry{"SaiKiran", 0.9993, std::nullopt, std::nullopt, std::nullopt});
    REQUIRE(rows[2] ==
            BaselineEntry{"Bertoli", std::nullopt, std::nullopt, std::nullopt, 1.0});
    std::filesystem::remove(path);
}

TEST_CASE("baseline CSV failure modes") {
    const std::string bad_header = write_temp(
        "scanforest_baselines_header.csv", "study,acc\nAlgaolahi,0.9\n");
    REQUIRE_THROWS_AS(load_baselines_csv(bad_header), MissingColumn);
    std::filesystem::remove(bad_header);

    const std::string bad_cell = write_temp(
        "scanforest_baselines_cell.csv",
        "study,accuracy,recall,precision,f1\nX,zero.nine,1,1,1\n");
    REQUIRE_THROWS_AS(load_baselines_csv(bad_cell), ParseFailure);
    std::filesystem::remove(bad_cell);

    const std::string empty = write_temp(
        "scanforest_baselines_empty.csv", "study,accuracy,recall,precision,f1\n");
    REQUIRE_THROWS_AS(load_baselines_csv(empty), EmptyDataset);
    std::filesystem::remove(empty);

    REQUIRE_THROWS_AS(load_baselines_csv("/nonexistent/baselines.csv"), IoError);
}

TEST_CASE("compare_to_baselines pairs trials and reruns the frozen case") {
    const std::vector<TrialAccuracy> trials = {
        {"A/random", 0.9970}, {"A/grid", 0.9976}, {"B/random", 0.9939}, {"B/grid", 0.9947}};
    const std::vector<std::pair<std::size_t, std::size_t>> pairing = {
        {0, 0}, {1, 1}, {2, 2}, {3, 3}};
    const BaselineComparison cmp =
        compare_to_baselines(trials, builtin_baselines(), pairing);
    REQUIRE(cmp.rows.size() == 4);
    REQUIRE(cmp.rows[0].study == "Algaolahi");
    REQUIRE(cmp.rows[3].study == "SaiKiran");
    REQUIRE(cmp.rows[3].trial_label == "B/grid");
    REQUIRE(cmp.rows[2].baseline_accuracy == 0.7650);
    REQUIRE(cmp.ttest.df == 3);
    REQUIRE(cmp.ttest.t == Catch::Approx(0.957823813397).margin(1e-9));
    REQUIRE(cmp.ttest.p == Catch::Approx(0.408812202659).margin(1e-9));
}

TEST_CASE("compare_to_baselines failure modes") {
    const std::vector<TrialAccuracy> trials = {{"A/random", 0.99}, {"A/grid", 0.98}};
    const auto& table = builtin_baselines();

    const std::vector<std::pair<std::size_t, std::size_t>> single = {{0, 0}};
    REQUIRE_THROWS_AS(compare_to_baselines(trials, table, single), InvalidConfig);

    const std::vector<std::pair<std::size_t, std::size_t>> bad_trial = {{0, 0}, {5, 1}};
    REQUIRE_THROWS_AS(compare_to_baselines(trials, table, bad_trial), InvalidConfig);

    const std::vector<std::pair<std::size_t, std::size_t>> bad_base = {{0, 0}, {1, 9}};
    REQUIRE_THROWS_AS(compare_to_baselines(trials, table, bad_base), InvalidConfig);

    // Bertoli reports no accuracy
    const std::vector<std::pair<std::size_t, std::size_t>> no_acc = {{0, 0}, {1, 5}};
    REQUIRE_THROWS_AS(compare_to_baselines(trials, table, no_acc), InvalidConfig);

    // pairing one trial against one study twice leaves zero variance
    const std::vector<std::pair<std::size_t, std::size_t>> self = {{0, 0}, {0, 0}};
    REQUIRE_THROWS_AS(compare_to_baselines(trials, table, self), ZeroVariance);
}
