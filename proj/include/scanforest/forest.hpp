#pragma once

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "scanforest/dataset.hpp"
#include "scanforest/error.hpp"
#include "scanforest/rng.hpp"
#include "scanforest/version.hpp"

namespace scanforest {

enum class Criterion : std::uint8_t { gini, entropy };
enum class ClassWeight : std::uint8_t { none, balanced, balanced_subsample };

inline const char* to_string(Criterion c) {
    return c == Criterion::gini ? "gini" : "entropy";
}

inline const char* to_string(ClassWeight w) {
    switch (w) {
        case ClassWeight::none: return "none";
        case ClassWeight::balanced: return "balanced";
        case ClassWeight::balanced_subsample: return "balanced_subsample";
    }
    return "?";
}

/// Number of candidate features examined at each split.
struct MaxFeatures {
    enum class Kind : std::uint8_t { sqrt, log2, all, fixed } kind = Kind::sqrt;
    int m = 0;  // used by fixed only

    static MaxFeatures sqrt() { return {Kind::sqrt, 0}; }
    static MaxFeatures log2() { return {Kind::log2, 0}; }
    static MaxFeatures all() { return {Kind::all, 0}; }
    static MaxFeatures fixed(int m) { return {Kind::fixed, m}; }

    bool operator==(const MaxFeatures&) const = default;
};

inline std::string to_string(MaxFeatures mf) {
    switch (mf.kind) {
        case MaxFeatures::Kind::sqrt: return "sqrt";
        case MaxFeatures::Kind::log2: return "log2";
        case MaxFeatures::Kind::all: return "all";
        case MaxFeatures::Kind::fixed: return std::to_string(mf.m);
    }
    return "?";
}

struct HyperparamSet {
    int n_estimators = 100;
    std::optional<int> max_depth;  // nullopt = unlimited
    int min_samples_leaf = 1;
    int min_samples_split = 2;
    MaxFeatures max_features = MaxFeatures::sqrt();
    Criterion criterion = Criterion::gini;
    ClassWeight class_weight = ClassWeight::none;
    bool bootstrap = true;

    bool operator==(const HyperparamSet&) const = default;

    void validate(std::size_t feature_count) const {
        if (n_estimators < 1) throw Error("n_estimators must be >= 1");
        if (max_depth && *max_depth < 1) throw Error("max_depth must be >= 1");
        if (min_samples_leaf < 1) throw Error("min_samples_leaf must be >= 1");
        if (min_samples_split < 2) throw Error("min_samples_split must be >= 2");
        if (max_features.kind == MaxFeatures::Kind::fixed &&
            (max_features.m < 1 || static_cast<std::size_t>(max_features.m) > feature_count))
            throw Error("fixed max_features out of range [1, " +
                        std::to_string(feature_count) + "]");
    }
};

// ---------------------------------------------------------------------------
// Impurity and weighting
// ---------------------------------------------------------------------------

inline double gini(std::span<const double> counts) {
    double total = 0.0;
    for (const double c : counts) total += c;
    if (!(total > 0.0)) throw EmptyNode("gini of empty node");
    double sum_sq = 0.0;
    for (const double c : counts) {
        const double p = c / total;
        sum_sq += p * p;
    }
    return 1.0 - sum_sq;
}

/// Shannon entropy in bits, with the 0*log(0) = 0 convention.
inline double entropy(std::span<const double> counts) {
    double total = 0.0;
    for (const double c : counts) total += c;
    if (!(total > 0.0)) throw EmptyNode("entropy of empty node");
    double h = 0.0;
    for (const double c : counts) {
        if (c > 0.0) {
            const double p = c / total;
            h -= p * std::log2(p);
        }
    }
    return h;
}

/// Per-class sample weights. balanced follows n / (k * n_c); the
/// balanced_subsample variant uses the same formula, applied by the caller
/// to the realized class counts of each bootstrap sample.
inline std::vector<double> class_weights(ClassWeight mode, std::span<const std::size_t> counts) {
    std::size_t total = 0;
    for (const std::size_t c : counts) {
        if (c == 0) throw MissingClass("class with zero count");
        total += c;
    }
    std::vector<double> w(counts.size(), 1.0);
    if (mode == ClassWeight::none) return w;
    const auto k = static_cast<double>(counts.size());
    for (std::size_t c = 0; c < counts.size(); ++c)
        w[c] = static_cast<double>(total) / (k * static_cast<double>(counts[c]));
    return w;
}

inline int feature_subset_size(MaxFeatures policy, int d) {
    switch (policy.kind) {
        case MaxFeatures::Kind::sqrt: {
            int s = static_cast<int>(std::sqrt(static_cast<double>(d)));
            while ((s + 1) * (s + 1) <= d) ++s;
            while (s > 1 && s * s > d) --s;
            return std::max(1, s);
        }
        case MaxFeatures::Kind::log2: {
            const int s = std::bit_width(static_cast<unsigned>(d)) - 1;
            return std::max(1, s);
        }
        case MaxFeatures::Kind::all:
            return d;
        case MaxFeatures::Kind::fixed:
            return policy.m;
    }
    return 1;
}

// ---------------------------------------------------------------------------
// Trees
// ---------------------------------------------------------------------------

/// Flat node storage; feature < 0 marks a leaf. Votes are the weighted
/// class counts of the training samples that reached the leaf.
struct TreeNode {
    int feature = -1;
    double threshold = 0.0;
    std::int32_t left = -1;
    std::int32_t right = -1;
    std::array<double, 2> class_votes{0.0, 0.0};
    int prediction = 0;
};

struct Tree {
    std::vector<TreeNode> nodes;  // nodes[0] is the root

    int predict(std::span<const double> x) const {
        std::size_t i = 0;
        while (nodes[i].feature >= 0)
            i = x[static_cast<std::size_t>(nodes[i].feature)] <= nodes[i].threshold
                    ? static_cast<std::size_t>(nodes[i].left)
                    : static_cast<std::size_t>(nodes[i].right);
        return nodes[i].prediction;
    }

    std::size_t internal_node_count() const {
        std::size_t n = 0;
        for (const auto& node : nodes)
            if (node.feature >= 0) ++n;
        return n;
    }
};

/// Column-major training matrix; built once per fit and shared by all trees.
struct TrainView {
    std::size_t n = 0;
    std::size_t d = 0;
    std::vector<std::vector<double>> columns;  // [d][n]
    std::vector<std::uint8_t> labels;          // [n]

    static TrainView from(const Dataset& data) {
        TrainView v;
        v.n = data.n_rows();
        v.d = data.n_features();
        v.columns.assign(v.d, std::vector<double>(v.n));
        v.labels.resize(v.n);
        for (std::size_t i = 0; i < v.n; ++i) {
            const auto& row = data.rows[i];
            if (row.features.size() != v.d)
                throw DimensionMismatch("row " + std::to_string(i) + " has " +
                                        std::to_string(row.features.size()) + " features");
            for (std::size_t f = 0; f < v.d; ++f) v.columns[f][i] = row.features[f];
            v.labels[i] = static_cast<std::uint8_t>(row.label != 0);
        }
        return v;
    }

    /// Row order of each column sorted by value (ties by row index).
    std::vector<std::vector<std::uint32_t>> presort() const {
        std::vector<std::vector<std::uint32_t>> order(d, std::vector<std::uint32_t>(n));
        for (std::size_t f = 0; f < d; ++f) {
            auto& ord = order[f];
            for (std::size_t i = 0; i < n; ++i) ord[i] = static_cast<std::uint32_t>(i);
            const auto& col = columns[f];
            std::sort(ord.begin(), ord.end(), [&col](std::uint32_t a, std::uint32_t b) {
                return col[a] < col[b] || (col[a] == col[b] && a < b);
            });
        }
        return order;
    }
};

namespace detail {

inline double impurity2(Criterion crit, double w0, double w1) {
    const double total = w0 + w1;
    if (crit == Criterion::gini) {
        const double p0 = w0 / total;
        const double p1 = w1 / total;
        return 1.0 - p0 * p0 - p1 * p1;
    }
    double h = 0.0;
    if (w0 > 0.0) h -= (w0 / total) * std::log2(w0 / total);
    if (w1 > 0.0) h -= (w1 / total) * std::log2(w1 / total);
    return h;
}

struct SweepBest {
    bool found = false;
    std::size_t left_count = 0;  // samples routed left
    double threshold = 0.0;
    // criterion-specific proxy, monotone in the impurity decrease; only
    // comparable between sweeps sharing one node's totals
    double score = 0.0;
    double decrease = 0.0;
    std::array<std::uint32_t, 2> left_sc{0, 0};
};

/// Scan a value-sorted sample sequence for the threshold maximizing the
/// weighted impurity decrease. Thresholds sit at midpoints between
/// consecutive distinct values; equal gains keep the earliest threshold.
///
/// The hot loop maximizes a proxy instead of the decrease itself: for gini,
/// sum over children of (w0^2 + w1^2) / w; for unit-weight entropy,
/// integer-count lookups into a caller-built x*log2(x) table (pass as
/// `xlogx`, size n+1, only with unit class weights). Both are strictly
/// monotone transforms, so argmax and ties are unchanged; the decrease is
/// recovered once for the winner.
template <class ValueAt, class LabelAt>
SweepBest sweep_split(std::size_t n, ValueAt&& value_at, LabelAt&& label_at,
                      const std::array<double, 2>& wclass, Criterion crit,
                      std::uint32_t min_leaf, const std::array<std::uint32_t, 2>& total_sc,
                      double parent_impurity, const double* xlogx = nullptr) {
    SweepBest best;
    const double w_total = wclass[0] * total_sc[0] + wclass[1] * total_sc[1];
    std::array<std::uint32_t, 2> left{0, 0};
    for (std::size_t i = 0; i + 1 < n; ++i) {
        ++left[label_at(i)];
        const double v = value_at(i);
        const double v_next = value_at(i + 1);
        if (v == v_next) continue;
        const auto nl = static_cast<std::uint32_t>(i + 1);
        const auto nr = static_cast<std::uint32_t>(n) - nl;
        if (nl < min_leaf || nr < min_leaf) continue;

        double score = 0.0;
        if (crit == Criterion::gini) {
            const double wl0 = wclass[0] * left[0];
            const double wl1 = wclass[1] * left[1];
            const double wr0 = wclass[0] * (total_sc[0] - left[0]);
            const double wr1 = wclass[1] * (total_sc[1] - left[1]);
            score = (wl0 * wl0 + wl1 * wl1) / (wl0 + wl1) +
                    (wr0 * wr0 + wr1 * wr1) / (wr0 + wr1);
        } else if (xlogx != nullptr) {
            const std::uint32_t nr0 = total_sc[0] - left[0];
            const std::uint32_t nr1 = total_sc[1] - left[1];
            score = -(xlogx[nl] - xlogx[left[0]] - xlogx[left[1]] + xlogx[nr] -
                      xlogx[nr0] - xlogx[nr1]);
        } else {
            const double wl0 = wclass[0] * left[0];
            const double wl1 = wclass[1] * left[1];
            const double wr0 = wclass[0] * (total_sc[0] - left[0]);
            const double wr1 = wclass[1] * (total_sc[1] - left[1]);
            score = -((wl0 + wl1) * impurity2(Criterion::entropy, wl0, wl1) +
                      (wr0 + wr1) * impurity2(Criterion::entropy, wr0, wr1));
        }

        if (!best.found || score > best.score) {
            double threshold = v + (v_next - v) / 2.0;
            if (!(threshold < v_next)) threshold = v;  // adjacent doubles
            best.found = true;
            best.left_count = nl;
            best.threshold = threshold;
            best.score = score;
            best.left_sc = left;
        }
    }
    if (best.found) {
        const double child_sum =
            crit == Criterion::gini ? w_total - best.score : -best.score;
        best.decrease = parent_impurity - child_sum / w_total;
        if (!(best.decrease > 0.0)) best.found = false;
    }
    return best;
}

}  // namespace detail

struct SplitChoice {
    int feature_index = -1;
    double threshold = 0.0;
    double impurity_decrease = 0.0;
};

/// Best admissible split of `rows` over `candidate_features`, or nullopt if
/// no threshold yields a positive weighted impurity decrease. Ties resolve
/// to the lowest feature index, then the lowest threshold.
inline std::optional<SplitChoice> best_split(const TrainView& view,
                                             std::span<const std::uint32_t> rows,
                                             std::span<const int> candidate_features,
                                             Criterion criterion,
                                             const std::array<double, 2>& wclass,
                                             int min_samples_leaf) {
    if (rows.size() < 2) return std::nullopt;

    std::array<std::uint32_t, 2> total_sc{0, 0};
    for (const std::uint32_t r : rows) ++total_sc[view.labels[r]];
    if (total_sc[0] == 0 || total_sc[1] == 0) return std::nullopt;

    const double parent = detail::impurity2(criterion, wclass[0] * total_sc[0],
                                            wclass[1] * total_sc[1]);

    std::vector<int> features(candidate_features.begin(), candidate_features.end());
    std::sort(features.begin(), features.end());

    std::vector<double> xlogx;
    if (criterion == Criterion::entropy && wclass[0] == 1.0 && wclass[1] == 1.0) {
        xlogx.resize(rows.size() + 1, 0.0);
        for (std::size_t i = 2; i < xlogx.size(); ++i)
            xlogx[i] = static_cast<double>(i) * std::log2(static_cast<double>(i));
    }

    std::optional<SplitChoice> choice;
    double choice_score = 0.0;
    std::vector<std::pair<double, std::uint8_t>> sorted(rows.size());
    for (const int f : features) {
        const auto& col = view.columns[static_cast<std::size_t>(f)];
        for (std::size_t i = 0; i < rows.size(); ++i)
            sorted[i] = {col[rows[i]], view.labels[rows[i]]};
        std::sort(sorted.begin(), sorted.end(),
                  [](const auto& a, const auto& b) { return a.first < b.first; });
        const auto best = detail::sweep_split(
            sorted.size(), [&](std::size_t i) { return sorted[i].first; },
            [&](std::size_t i) { return sorted[i].second; }, wclass, criterion,
            static_cast<std::uint32_t>(min_samples_leaf), total_sc, parent,
            xlogx.empty() ? nullptr : xlogx.data());
        if (best.found && (!choice || best.score > choice_score)) {
            choice = SplitChoice{f, best.threshold, best.decrease};
            choice_score = best.score;
        }
    }
    return choice;
}

namespace detail {

/// Single-tree CART builder. Columns are argsorted once per fit; node
/// partitions restage each feature's row list stably, so per-node split
/// search is a linear sweep with no sorting.
class TreeBuilder {
public:
    TreeBuilder(const TrainView& view, const std::vector<std::vector<std::uint32_t>>& order,
                const HyperparamSet& config)
        : view_(view), order_(order), config_(config),
          subset_size_(feature_subset_size(config.max_features, static_cast<int>(view.d))) {
        staged_.assign(view_.d, {});
        tmp_.reserve(view_.n * 2);
        side_.assign(view_.n, 0);
        multiplicity_.assign(view_.n, 0);
        feature_pool_.resize(view_.d);
        importances_.assign(view_.d, 0.0);
        if (config.criterion == Criterion::entropy) {
            xlogx_.resize(view_.n + 1, 0.0);
            for (std::size_t i = 2; i < xlogx_.size(); ++i)
                xlogx_[i] = static_cast<double>(i) * std::log2(static_cast<double>(i));
        }
    }

    /// Builds one tree. For balanced_subsample, a bootstrap sample that
    /// loses a class is redrawn with the next derived seed (at most 10
    /// times).
    Tree build(std::uint64_t seed, const std::array<double, 2>& base_weights) {
        Rng rng(seed);
        std::array<double, 2> wclass = base_weights;
        if (!config_.bootstrap) {
            std::fill(multiplicity_.begin(), multiplicity_.end(), 1u);
        } else {
            for (int attempt = 0;; ++attempt) {
                std::fill(multiplicity_.begin(), multiplicity_.end(), 0u);
                for (std::size_t i = 0; i < view_.n; ++i)
                    ++multiplicity_[rng.below(view_.n)];
                if (config_.class_weight != ClassWeight::balanced_subsample) break;
                std::array<std::size_t, 2> bag_counts{0, 0};
                for (std::size_t r = 0; r < view_.n; ++r)
                    bag_counts[view_.labels[r]] += multiplicity_[r];
                if (bag_counts[0] > 0 && bag_counts[1] > 0) {
                    const auto w = class_weights(ClassWeight::balanced_subsample, bag_counts);
                    wclass = {w[0], w[1]};
                    break;
                }
                if (attempt >= 10)
                    throw MissingClass("bootstrap sample lost a class 10 times in a row");
                rng = Rng(derive_seed(seed, static_cast<std::uint64_t>(attempt) + 1));
            }
        }

        std::size_t n_entries = 0;
        std::array<std::uint32_t, 2> root_sc{0, 0};
        for (std::size_t r = 0; r < view_.n; ++r) {
            n_entries += multiplicity_[r];
            root_sc[view_.labels[r]] += multiplicity_[r];
        }
        for (std::size_t f = 0; f < view_.d; ++f) {
            staged_[f].clear();
            staged_[f].reserve(n_entries);
            for (const std::uint32_t r : order_[f])
                for (std::uint32_t c = 0; c < multiplicity_[r]; ++c) staged_[f].push_back(r);
        }
        tmp_.resize(n_entries);

        Tree tree;
        std::fill(importances_.begin(), importances_.end(), 0.0);
        w_root_ = wclass[0] * root_sc[0] + wclass[1] * root_sc[1];

        tree.nodes.emplace_back();
        std::vector<Pending> stack;
        stack.push_back({0, static_cast<std::uint32_t>(n_entries), 0, 0, root_sc,
                         impurity2(config_.criterion, wclass[0] * root_sc[0],
                                   wclass[1] * root_sc[1])});
        while (!stack.empty()) {
            const Pending node = stack.back();
            stack.pop_back();
            expand(tree, node, wclass, rng, stack);
        }
        return tree;
    }

    const std::vector<double>& importances() const { return importances_; }

private:
    struct Pending {
        std::uint32_t lo, hi;
        std::uint32_t depth;
        std::int32_t node_index;
        std::array<std::uint32_t, 2> sc;
        double impurity;
    };

    void make_leaf(Tree& tree, const Pending& node, const std::array<double, 2>& wclass) {
        TreeNode& leaf = tree.nodes[static_cast<std::size_t>(node.node_index)];
        leaf.class_votes = {wclass[0] * node.sc[0], wclass[1] * node.sc[1]};
        leaf.prediction = leaf.class_votes[1] > leaf.class_votes[0] ? 1 : 0;
    }

    void expand(Tree& tree, const Pending& node, const std::array<double, 2>& wclass,
                Rng& rng, std::vector<Pending>& stack) {
        const std::uint32_t n = node.hi - node.lo;
        const bool depth_capped =
            config_.max_depth && node.depth >= static_cast<std::uint32_t>(*config_.max_depth);
        if (depth_capped || n < static_cast<std::uint32_t>(config_.min_samples_split) ||
            n < 2u * static_cast<std::uint32_t>(config_.min_samples_leaf) ||
            node.sc[0] == 0 || node.sc[1] == 0) {
            make_leaf(tree, node, wclass);
            return;
        }

        // fresh candidate subset at every node; ascending order so that
        // equal-gain ties resolve to the lowest feature index
        const std::size_t m = static_cast<std::size_t>(subset_size_);
        for (std::size_t i = 0; i < view_.d; ++i) feature_pool_[i] = static_cast<int>(i);
        if (m < view_.d) {
            for (std::size_t i = 0; i < m; ++i) {
                const std::size_t j = i + rng.below(view_.d - i);
                std::swap(feature_pool_[i], feature_pool_[j]);
            }
            std::sort(feature_pool_.begin(), feature_pool_.begin() + static_cast<std::ptrdiff_t>(m));
        }

        const double* xlogx =
            (config_.criterion == Criterion::entropy && wclass[0] == 1.0 && wclass[1] == 1.0)
                ? xlogx_.data()
                : nullptr;
        int best_feature = -1;
        SweepBest best;
        for (std::size_t ci = 0; ci < m; ++ci) {
            const int f = feature_pool_[ci];
            const auto* seg = staged_[static_cast<std::size_t>(f)].data() + node.lo;
            const auto& col = view_.columns[static_cast<std::size_t>(f)];
            const auto res = sweep_split(
                n, [&](std::size_t i) { return col[seg[i]]; },
                [&](std::size_t i) { return view_.labels[seg[i]]; }, wclass,
                config_.criterion, static_cast<std::uint32_t>(config_.min_samples_leaf),
                node.sc, node.impurity, xlogx);
            if (res.found && (best_feature < 0 || res.score > best.score)) {
                best_feature = f;
                best = res;
            }
        }
        if (best_feature < 0) {
            make_leaf(tree, node, wclass);
            return;
        }

        const double w_node = wclass[0] * node.sc[0] + wclass[1] * node.sc[1];
        importances_[static_cast<std::size_t>(best_feature)] +=
            (w_node / w_root_) * best.decrease;

        // route: the first left_count entries of the winning feature's
        // segment go left; duplicates of a row always share a side
        const auto& win = staged_[static_cast<std::size_t>(best_feature)];
        for (std::uint32_t i = node.lo; i < node.hi; ++i)
            side_[win[i]] = static_cast<std::uint8_t>(i - node.lo >= best.left_count);

        for (std::size_t f = 0; f < view_.d; ++f) {
            auto& arr = staged_[f];
            std::uint32_t write = node.lo;
            std::size_t spill = 0;
            for (std::uint32_t i = node.lo; i < node.hi; ++i) {
                const std::uint32_t r = arr[i];
                if (side_[r] == 0)
                    arr[write++] = r;
                else
                    tmp_[spill++] = r;
            }
            std::copy(tmp_.begin(), tmp_.begin() + static_cast<std::ptrdiff_t>(spill),
                      arr.begin() + write);
        }

        const auto node_index = static_cast<std::size_t>(node.node_index);
        const auto left_index = static_cast<std::int32_t>(tree.nodes.size());
        tree.nodes.emplace_back();
        tree.nodes.emplace_back();
        TreeNode& parent = tree.nodes[node_index];
        parent.feature = best_feature;
        parent.threshold = best.threshold;
        parent.left = left_index;
        parent.right = left_index + 1;

        const std::array<std::uint32_t, 2> right_sc{node.sc[0] - best.left_sc[0],
                                                    node.sc[1] - best.left_sc[1]};
        const auto mid = node.lo + static_cast<std::uint32_t>(best.left_count);
        // right first so the left child pops first (preorder expansion,
        // keeping rng consumption deterministic)
        stack.push_back({mid, node.hi, node.depth + 1, left_index + 1, right_sc,
                         impurity2(config_.criterion, wclass[0] * right_sc[0],
                                   wclass[1] * right_sc[1])});
        stack.push_back({node.lo, mid, node.depth + 1, left_index, best.left_sc,
                         impurity2(config_.criterion, wclass[0] * best.left_sc[0],
                                   wclass[1] * best.left_sc[1])});
    }

    const TrainView& view_;
    const std::vector<std::vector<std::uint32_t>>& order_;
    const HyperparamSet& config_;
    int subset_size_;
    double w_root_ = 0.0;
    std::vector<std::vector<std::uint32_t>> staged_;
    std::vector<std::uint32_t> tmp_;
    std::vector<std::uint8_t> side_;
    std::vector<std::uint32_t> multiplicity_;
    std::vector<int> feature_pool_;
    std::vector<double> importances_;
    std::vector<double> xlogx_;
};

inline std::array<double, 2> base_class_weights(const TrainView& view, ClassWeight mode) {
    std::array<std::size_t, 2> counts{0, 0};
    for (const std::uint8_t y : view.labels) ++counts[y];
    if (mode == ClassWeight::balanced) {
        const auto w = class_weights(ClassWeight::balanced, counts);
        return {w[0], w[1]};
    }
    // balanced_subsample starts from unit weights; the builder recomputes
    // per bag
    return {1.0, 1.0};
}

}  // namespace detail

/// Trains a single tree on `data`. Bootstrap resampling and the per-node
/// feature subsets are driven entirely by rng_seed.
inline Tree build_tree(const Dataset& data, const HyperparamSet& config, std::uint64_t rng_seed) {
    if (data.rows.empty()) throw EmptyDataset("build_tree: empty dataset");
    config.validate(data.n_features());
    const auto view = TrainView::from(data);
    const auto order = view.presort();
    const auto wclass = detail::base_class_weights(view, config.class_weight);
    detail::TreeBuilder builder(view, order, config);
    return builder.build(rng_seed, wclass);
}

struct ForestModel {
    std::vector<Tree> trees;
    HyperparamSet config;
    std::vector<std::string> feature_names;
    std::vector<double> importances;
    std::uint64_t train_seed = 0;

    std::size_t n_features() const { return feature_names.size(); }
};

/// Trains a forest. Tree i is seeded with derive_seed(seed, i), so the
/// model is identical for any n_threads.
inline ForestModel fit(const Dataset& data, const HyperparamSet& config, std::uint64_t seed,
                       int n_threads = 1) {
    if (data.rows.empty()) throw EmptyDataset("fit: empty dataset");
    config.validate(data.n_features());

    std::array<std::size_t, 2> counts{0, 0};
    for (const auto& row : data.rows) ++counts[row.label != 0];
    if (counts[0] == 0 || counts[1] == 0)
        throw SingleClassData("training data holds a single class");

    const auto view = TrainView::from(data);
    const auto order = view.presort();
    const auto base_weights = detail::base_class_weights(view, config.class_weight);

    const auto n_trees = static_cast<std::size_t>(config.n_estimators);
    std::vector<Tree> trees(n_trees);
    std::vector<std::vector<double>> tree_importances(n_trees);

    const int workers =
        std::clamp(n_threads, 1, static_cast<int>(std::min<std::size_t>(n_trees, 64)));
    auto run = [&](std::size_t first) {
        detail::TreeBuilder builder(view, order, config);
        for (std::size_t i = first; i < n_trees; i += static_cast<std::size_t>(workers)) {
            trees[i] = builder.build(derive_seed(seed, i), base_weights);
            tree_importances[i] = builder.importances();
        }
    };
    if (workers == 1) {
        run(0);
    } else {
        std::vector<std::thread> pool;
        pool.reserve(static_cast<std::size_t>(workers));
        for (int t = 0; t < workers; ++t) pool.emplace_back(run, static_cast<std::size_t>(t));
        for (auto& th : pool) th.join();
    }

    ForestModel model;
    model.trees = std::move(trees);
    model.config = config;
    model.feature_names = data.feature_names;
    model.train_seed = seed;

    // mean decrease in impurity, averaged in tree order and normalized to
    // sum 1 when any split exists
    model.importances.assign(view.d, 0.0);
    for (const auto& imp : tree_importances)
        for (std::size_t f = 0; f < view.d; ++f) model.importances[f] += imp[f];
    double total = 0.0;
    for (auto& v : model.importances) {
        v /= static_cast<double>(n_trees);
        total += v;
    }
    if (total > 0.0)
        for (auto& v : model.importances) v /= total;
    return model;
}

/// Majority vote over trees; an exact tie resolves to class 0.
inline int predict(const ForestModel& model, std::span<const double> x) {
    if (x.size() != model.n_features())
        throw DimensionMismatch("expected " + std::to_string(model.n_features()) +
                                " features, got " + std::to_string(x.size()));
    std::size_t votes = 0;
    for (const auto& tree : model.trees) votes += static_cast<std::size_t>(tree.predict(x));
    return 2 * votes > model.trees.size() ? 1 : 0;
}

/// Fraction of trees voting for class 1.
inline double predict_score(const ForestModel& model, std::span<const double> x) {
    if (x.size() != model.n_features())
        throw DimensionMismatch("expected " + std::to_string(model.n_features()) +
                                " features, got " + std::to_string(x.size()));
    std::size_t votes = 0;
    for (const auto& tree : model.trees) votes += static_cast<std::size_t>(tree.predict(x));
    return static_cast<double>(votes) / static_cast<double>(model.trees.size());
}

inline std::vector<int> predict(const ForestModel& model, const Dataset& data) {
    std::vector<int> out;
    out.reserve(data.n_rows());
    for (const auto& row : data.rows) out.push_back(predict(model, row.features));
    return out;
}

// ---------------------------------------------------------------------------
// Model serialization (versioned JSON)
// ---------------------------------------------------------------------------

inline void to_json(nlohmann::json& j, const MaxFeatures& mf) {
    if (mf.kind == MaxFeatures::Kind::fixed)
        j = mf.m;
    else
        j = to_string(mf);
}

inline void from_json(const nlohmann::json& j, MaxFeatures& mf) {
    if (j.is_number_integer()) {
        mf = MaxFeatures::fixed(j.get<int>());
        return;
    }
    const auto s = j.get<std::string>();
    if (s == "sqrt")
        mf = MaxFeatures::sqrt();
    else if (s == "log2")
        mf = MaxFeatures::log2();
    else if (s == "all")
        mf = MaxFeatures::all();
    else
        throw InvalidConfig("unknown max_features: " + s);
}

inline void to_json(nlohmann::json& j, const HyperparamSet& c) {
    j = nlohmann::json{{"n_estimators", c.n_estimators},
                       {"min_samples_leaf", c.min_samples_leaf},
                       {"min_samples_split", c.min_samples_split},
                       {"criterion", to_string(c.criterion)},
                       {"class_weight", to_string(c.class_weight)},
                       {"bootstrap", c.bootstrap}};
    j["max_depth"] = c.max_depth ? nlohmann::json(*c.max_depth) : nlohmann::json(nullptr);
    j["max_features"] = c.max_features;
}

inline void from_json(const nlohmann::json& j, HyperparamSet& c) {
    c = HyperparamSet{};
    c.n_estimators = j.at("n_estimators").get<int>();
    if (j.contains("max_depth") && !j.at("max_depth").is_null())
        c.max_depth = j.at("max_depth").get<int>();
    else
        c.max_depth = std::nullopt;
    c.min_samples_leaf = j.value("min_samples_leaf", 1);
    c.min_samples_split = j.value("min_samples_split", 2);
    if (j.contains("max_features")) c.max_features = j.at("max_features").get<MaxFeatures>();
    if (j.contains("criterion")) {
        const auto s = j.at("criterion").get<std::string>();
        if (s == "gini")
            c.criterion = Criterion::gini;
        else if (s == "entropy")
            c.criterion = Criterion::entropy;
        else
            throw InvalidConfig("unknown criterion: " + s);
    }
    if (j.contains("class_weight")) {
        const auto s = j.at("class_weight").get<std::string>();
        if (s == "none")
            c.class_weight = ClassWeight::none;
        else if (s == "balanced")
            c.class_weight = ClassWeight::balanced;
        else if (s == "balanced_subsample")
            c.class_weight = ClassWeight::balanced_subsample;
        else
            throw InvalidConfig("unknown class_weight: " + s);
    }
    c.bootstrap = j.value("bootstrap", true);
}

namespace detail {

inline nlohmann::json node_to_json(const Tree& tree, std::size_t index) {
    const TreeNode& node = tree.nodes[index];
    if (node.feature < 0)
        return nlohmann::json{{"votes", node.class_votes}, {"prediction", node.prediction}};
    return nlohmann::json{{"feature", node.feature},
                          {"threshold", node.threshold},
                          {"left", node_to_json(tree, static_cast<std::size_t>(node.left))},
                          {"right", node_to_json(tree, static_cast<std::size_t>(node.right))}};
}

inline std::int32_t node_from_json(const nlohmann::json& j, Tree& tree) {
    const auto index = static_cast<std::int32_t>(tree.nodes.size());
    tree.nodes.emplace_back();
    if (j.contains("feature")) {
        const int feature = j.at("feature").get<int>();
        const double threshold = j.at("threshold").get<double>();
        const auto left = node_from_json(j.at("left"), tree);
        const auto right = node_from_json(j.at("right"), tree);
        TreeNode& node = tree.nodes[static_cast<std::size_t>(index)];
        node.feature = feature;
        node.threshold = threshold;
        node.left = left;
        node.right = right;
    } else {
        TreeNode& node = tree.nodes[static_cast<std::size_t>(index)];
        const auto votes = j.at("votes").get<std::array<double, 2>>();
        node.class_votes = votes;
        node.prediction = j.at("prediction").get<int>();
    }
    return index;
}

}  // namespace detail

inline nlohmann::json model_to_json(const ForestModel& model) {
    nlohmann::json trees = nlohmann::json::array();
    for (const auto& tree : model.trees) trees.push_back(detail::node_to_json(tree, 0));
    return nlohmann::json{{"schema_version", kModelSchemaVersion},
                          {"config", model.config},
                          {"feature_names", model.feature_names},
                          {"train_seed", model.train_seed},
                          {"importances", model.importances},
                          {"trees", std::move(trees)}};
}

inline ForestModel model_from_json(const nlohmann::json& j) {
    if (!j.contains("schema_version") || !j.at("schema_version").is_number_integer())
        throw UnsupportedVersion("model file lacks an integer schema_version");
    if (j.at("schema_version").get<int>() != kModelSchemaVersion)
        throw UnsupportedVersion("unsupported model schema_version " +
                                 j.at("schema_version").dump());
    ForestModel model;
    model.config = j.at("config").get<HyperparamSet>();
    model.feature_names = j.at("feature_names").get<std::vector<std::string>>();
    model.train_seed = j.at("train_seed").get<std::uint64_t>();
    model.importances = j.at("importances").get<std::vector<double>>();
    for (const auto& tj : j.at("trees")) {
        Tree tree;
        detail::node_from_json(tj, tree);
        model.trees.push_back(std::move(tree));
    }
    return model;
}

}  // namespace scanforest
