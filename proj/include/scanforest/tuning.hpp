#pragma once

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "scanforest/dataset.hpp"
#include "scanforest/error.hpp"
#include "scanforest/forest.hpp"
#include "scanforest/metrics.hpp"
#include "scanforest/rng.hpp"
#include "scanforest/version.hpp"

namespace scanforest {

enum class SetId : std::uint8_t { A, B, C, D, custom };
enum class SearchMethod : std::uint8_t { grid, random };

inline const char* to_string(SetId id) {
    switch (id) {
        case SetId::A: return "A";
        case SetId::B: return "B";
        case SetId::C: return "C";
        case SetId::D: return "D";
        case SetId::custom: return "custom";
    }
    return "?";
}

inline const char* to_string(SearchMethod m) {
    return m == SearchMethod::grid ? "grid" : "random";
}

inline std::optional<SetId> set_id_from_string(std::string_view s) {
    if (s == "A") return SetId::A;
    if (s == "B") return SetId::B;
    if (s == "C") return SetId::C;
    if (s == "D") return SetId::D;
    if (s == "custom") return SetId::custom;
    return std::nullopt;
}

inline std::optional<SearchMethod> search_method_from_string(std::string_view s) {
    if (s == "grid") return SearchMethod::grid;
    if (s == "random") return SearchMethod::random;
    return std::nullopt;
}

/// Iteration budget of the randomized searcher when the caller does not
/// choose one; always capped at the grid size.
inline constexpr int kDefaultRandomIterations = 10;

// ---------------------------------------------------------------------------
// Search space
// ---------------------------------------------------------------------------

struct SearchSpace {
    SetId set_id = SetId::custom;
    std::vector<int> n_estimators;
    std::vector<int> max_depth;
    int min_samples_leaf = 1;
    int min_samples_split = 2;
    MaxFeatures max_features = MaxFeatures::sqrt();
    Criterion criterion = Criterion::gini;
    ClassWeight class_weight = ClassWeight::none;
    bool bootstrap = true;

    void validate() const {
        if (n_estimators.empty()) throw InvalidConfig("n_estimators list is empty");
        if (max_depth.empty()) throw InvalidConfig("max_depth list is empty");
        for (const int e : n_estimators)
            if (e < 1) throw InvalidConfig("n_estimators values must be >= 1");
        for (const int d : max_depth)
            if (d < 1) throw InvalidConfig("max_depth values must be >= 1");
        if (min_samples_leaf < 1) throw InvalidConfig("min_samples_leaf must be >= 1");
        if (min_samples_split < 2) throw InvalidConfig("min_samples_split must be >= 2");
    }
};

/// The four published tuning spaces.
inline SearchSpace builtin_space(SetId id) {
    SearchSpace s;
    s.set_id = id;
    switch (id) {
        case SetId::A:
            s.n_estimators = {10, 50, 100, 200};
            s.max_depth = {5, 10};
            s.min_samples_leaf = 1;
            s.max_features = MaxFeatures::sqrt();
            s.criterion = Criterion::gini;
            s.class_weight = ClassWeight::balanced;
            break;
        case SetId::B:
            s.n_estimators = {15, 25, 50, 100};
            s.max_depth = {5, 10};
            s.min_samples_leaf = 1;
            s.max_features = MaxFeatures::sqrt();
            s.criterion = Criterion::gini;
            s.class_weight = ClassWeight::balanced;
            break;
        case SetId::C:
            s.n_estimators = {200, 500};
            s.max_depth = {4, 5, 6, 7, 8};
            s.min_samples_leaf = 14;
            s.max_features = MaxFeatures::sqrt();
            s.criterion = Criterion::gini;
            s.class_weight = ClassWeight::balanced;
            break;
        case SetId::D:
            s.n_estimators = {200, 500};
            s.max_depth = {4, 5, 6, 7, 8};
            s.min_samples_leaf = 14;
            s.max_features = MaxFeatures::log2();
            s.criterion = Criterion::entropy;
            s.class_weight = ClassWeight::none;
            break;
        case SetId::custom:
            throw InvalidConfig("custom has no builtin search space");
    }
    return s;
}

/// Cartesian product in deterministic order: n_estimators outer,
/// max_depth inner.
inline std::vector<HyperparamSet> enumerate_grid(const SearchSpace& space) {
    space.validate();
    std::vector<HyperparamSet> grid;
    grid.reserve(space.n_estimators.size() * space.max_depth.size());
    for (const int est : space.n_estimators) {
        for (const int depth : space.max_depth) {
            HyperparamSet c;
            c.n_estimators = est;
            c.max_depth = depth;
            c.min_samples_leaf = space.min_samples_leaf;
            c.min_samples_split = space.min_samples_split;
            c.max_features = space.max_features;
            c.criterion = space.criterion;
            c.class_weight = space.class_weight;
            c.bootstrap = space.bootstrap;
            grid.push_back(c);
        }
    }
    return grid;
}

// ---------------------------------------------------------------------------
// Cross-validated search
// ---------------------------------------------------------------------------

struct CandidateScore {
    std::size_t grid_index = 0;  // position in enumerate_grid order
    HyperparamSet config;
    std::vector<double> fold_scores;
    double mean_score = 0.0;
    double std_score = 0.0;  // population standard deviation over folds
};

struct SearchResult {
    HyperparamSet best_config;
    double cv_mean_score = 0.0;
    double cv_std_score = 0.0;
    std::size_t best_index = 0;  // row in `table`
    std::vector<CandidateScore> table;
    SearchMethod method = SearchMethod::grid;
    double elapsed_seconds = 0.0;
    std::uint64_t fold_fingerprint = 0;
};

/// Order-sensitive digest of a fold assignment; equal fingerprints mean
/// every candidate saw identical folds.
inline std::uint64_t fold_fingerprint(const std::vector<FoldIndices>& folds) {
    std::uint64_t h = 0;
    for (std::size_t f = 0; f < folds.size(); ++f) {
        h = mix64(h ^ derive_seed(0, f));
        for (const std::size_t i : folds[f].validation) h = mix64(h ^ (i + 1));
    }
    return h;
}

namespace detail {

inline double accuracy_on(const ForestModel& model, const Dataset& data) {
    std::size_t correct = 0;
    for (const auto& row : data.rows)
        if (predict(model, row.features) == (row.label != 0 ? 1 : 0)) ++correct;
    return static_cast<double>(correct) / static_cast<double>(data.n_rows());
}

struct FoldData {
    Dataset train;
    Dataset validation;
    std::uint64_t fit_seed = 0;
};

/// Shared by both searchers: fold layout and per-fold fit seeds depend only
/// on (train, k, seed), never on the candidate list, so grid and random
/// searches over the same seed score each candidate identically.
inline std::vector<FoldData> materialize_folds(const Dataset& train, int k, std::uint64_t seed,
                                               std::uint64_t& fingerprint_out) {
    const auto folds = stratified_kfold(train, k, derive_seed(seed, 0));
    fingerprint_out = fold_fingerprint(folds);
    std::vector<FoldData> out;
    out.reserve(folds.size());
    for (std::size_t f = 0; f < folds.size(); ++f) {
        FoldData fd;
        fd.train = take_rows(train, folds[f].train);
        fd.validation = take_rows(train, folds[f].validation);
        fd.fit_seed = derive_seed(seed, 1 + f);
        out.push_back(std::move(fd));
    }
    return out;
}

inline CandidateScore score_candidate(const std::vector<FoldData>& folds, std::size_t grid_index,
                                      const HyperparamSet& config) {
    CandidateScore cs;
    cs.grid_index = grid_index;
    cs.config = config;
    cs.fold_scores.reserve(folds.size());
    for (const auto& fd : folds) {
        const auto model = fit(fd.train, config, fd.fit_seed);
        cs.fold_scores.push_back(accuracy_on(model, fd.validation));
    }
    double mean = 0.0;
    for (const double s : cs.fold_scores) mean += s;
    mean /= static_cast<double>(cs.fold_scores.size());
    double var = 0.0;
    for (const double s : cs.fold_scores) var += (s - mean) * (s - mean);
    cs.mean_score = mean;
    cs.std_score = std::sqrt(var / static_cast<double>(cs.fold_scores.size()));
    return cs;
}

/// Best row = highest mean; ties resolve to the lowest grid index, making
/// the winner independent of table order.
inline SearchResult finish_search(std::vector<CandidateScore> table, SearchMethod method,
                                  std::uint64_t fingerprint,
                                  std::chrono::steady_clock::time_point started) {
    SearchResult r;
    std::size_t best = 0;
    for (std::size_t i = 1; i < table.size(); ++i) {
        const bool better = table[i].mean_score > table[best].mean_score ||
                            (table[i].mean_score == table[best].mean_score &&
                             table[i].grid_index < table[best].grid_index);
        if (better) best = i;
    }
    r.best_index = best;
    r.best_config = table[best].config;
    r.cv_mean_score = table[best].mean_score;
    r.cv_std_score = table[best].std_score;
    r.table = std::move(table);
    r.method = method;
    r.fold_fingerprint = fingerprint;
    r.elapsed_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    return r;
}

}  // namespace detail

inline SearchResult grid_search(const Dataset& train, const SearchSpace& space, int k,
                                std::uint64_t seed) {
    const auto started = std::chrono::steady_clock::now();
    const auto grid = enumerate_grid(space);
    if (grid.empty()) throw NoCandidates("empty hyperparameter grid");

    std::uint64_t fingerprint = 0;
    const auto folds = detail::materialize_folds(train, k, seed, fingerprint);
    std::vector<CandidateScore> table;
    table.reserve(grid.size());
    for (std::size_t i = 0; i < grid.size(); ++i)
        table.push_back(detail::score_candidate(folds, i, grid[i]));
    return detail::finish_search(std::move(table), SearchMethod::grid, fingerprint, started);
}

/// Samples min(n_iter, grid size) distinct candidates without replacement.
/// Fold layout and fit seeds match grid_search at the same seed, so with
/// n_iter >= grid size the two methods select the same best candidate.
inline SearchResult random_search(const Dataset& train, const SearchSpace& space, int n_iter,
                                  int k, std::uint64_t seed) {
    if (n_iter < 1) throw InvalidConfig("n_iter must be >= 1");
    const auto started = std::chrono::steady_clock::now();
    const auto grid = enumerate_grid(space);
    if (grid.empty()) throw NoCandidates("empty hyperparameter grid");

    const auto m = static_cast<std::uint32_t>(
        std::min<std::size_t>(static_cast<std::size_t>(n_iter), grid.size()));
    Rng sampler(derive_seed(seed, 777));
    const auto picks =
        sampler.sample_without_replacement(static_cast<std::uint32_t>(grid.size()), m);

    std::uint64_t fingerprint = 0;
    const auto folds = detail::materialize_folds(train, k, seed, fingerprint);
    std::vector<CandidateScore> table;
    table.reserve(picks.size());
    for (const std::uint32_t g : picks)
        table.push_back(detail::score_candidate(folds, g, grid[g]));
    return detail::finish_search(std::move(table), SearchMethod::random, fingerprint, started);
}

// ---------------------------------------------------------------------------
// Trial runner
// ---------------------------------------------------------------------------

struct TrialReport {
    SetId set_id = SetId::custom;
    SearchMethod method = SearchMethod::grid;
    std::uint64_t seed = 0;
    std::array<std::size_t, 2> train_rows{0, 0};  // per class
    std::array<std::size_t, 2> test_rows{0, 0};
    HyperparamSet best_config;
    double cv_mean_score = 0.0;
    double cv_std_score = 0.0;
    std::size_t candidates_evaluated = 0;
    ConfusionMatrix cm;
    EfficacyReport test;
    bool has_breakdown = false;
    std::map<GroupKey, GroupReport> breakdown;
    std::string toolkit_version = kVersion;
    double elapsed_seconds = 0.0;
};

/// The full protocol for one (set, method) trial: stratified 70/30 split,
/// cross-validated search on the training partition, refit of the winning
/// config on all training rows, evaluation on the held-out partition.
///
/// Every random draw derives from (seed, set_id, method), so consecutive
/// trials behave exactly as if each ran in a fresh process, and plan.seed
/// is superseded by that derivation.
inline TrialReport run_trial(const Dataset& data, const SearchSpace& space, SearchMethod method,
                             const SplitPlan& plan, std::uint64_t seed,
                             int n_iter = kDefaultRandomIterations) {
    const auto started = std::chrono::steady_clock::now();
    space.validate();
    const std::uint64_t trial_seed = derive_seed(
        derive_seed(seed, static_cast<std::uint64_t>(space.set_id)),
        static_cast<std::uint64_t>(method));

    SplitPlan local = plan;
    local.seed = derive_seed(trial_seed, 0);
    const auto [train, test] = stratified_split(data, local);

    const auto search =
        method == SearchMethod::grid
            ? grid_search(train, space, plan.fold_count, derive_seed(trial_seed, 1))
            : random_search(train, space, n_iter, plan.fold_count, derive_seed(trial_seed, 1));

    const auto model = fit(train, search.best_config, derive_seed(trial_seed, 2));
    const auto predictions = predict(model, test);
    std::vector<int> actual;
    actual.reserve(test.n_rows());
    for (const auto& row : test.rows) actual.push_back(row.label != 0 ? 1 : 0);

    TrialReport report;
    report.set_id = space.set_id;
    report.method = method;
    report.seed = seed;
    for (const auto& row : train.rows) ++report.train_rows[row.label != 0];
    for (const auto& row : test.rows) ++report.test_rows[row.label != 0];
    report.best_config = search.best_config;
    report.cv_mean_score = search.cv_mean_score;
    report.cv_std_score = search.cv_std_score;
    report.candidates_evaluated = search.table.size();
    report.cm = confusion(actual, predictions);
    report.test = efficacy(report.cm);
    try {
        report.breakdown = group_breakdown(test, predictions, derive_seed(trial_seed, 3));
        report.has_breakdown = true;
    } catch (const NoMetadata&) {
        report.has_breakdown = false;
    }
    report.elapsed_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    return report;
}

}  // namespace scanforest
