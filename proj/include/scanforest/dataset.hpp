#pragma once

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <limits>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "scanforest/error.hpp"
#include "scanforest/rng.hpp"

namespace scanforest {

enum class Tool : std::uint8_t { nmap, masscan, unicornscan, zmap, hping };
enum class Technique : std::uint8_t { connect, syn, fin, null, xmas, udp };

inline const char* to_string(Tool t) {
    switch (t) {
        case Tool::nmap: return "nmap";
        case Tool::masscan: return "masscan";
        case Tool::unicornscan: return "unicornscan";
        case Tool::zmap: return "zmap";
        case Tool::hping: return "hping";
    }
    return "?";
}

inline const char* to_string(Technique t) {
    switch (t) {
        case Technique::connect: return "connect";
        case Technique::syn: return "syn";
        case Technique::fin: return "fin";
        case Technique::null: return "null";
        case Technique::xmas: return "xmas";
        case Technique::udp: return "udp";
    }
    return "?";
}

inline std::optional<Tool> tool_from_string(std::string_view s) {
    static const std::pair<std::string_view, Tool> table[] = {
        {"nmap", Tool::nmap},       {"masscan", Tool::masscan},
        {"unicornscan", Tool::unicornscan}, {"zmap", Tool::zmap},
        {"hping", Tool::hping},
    };
    for (const auto& [name, value] : table)
        if (name == s) return value;
    return std::nullopt;
}

inline std::optional<Technique> technique_from_string(std::string_view s) {
    static const std::pair<std::string_view, Technique> table[] = {
        {"connect", Technique::connect}, {"syn", Technique::syn},
        {"fin", Technique::fin},         {"null", Technique::null},
        {"xmas", Technique::xmas},       {"udp", Technique::udp},
    };
    for (const auto& [name, value] : table)
        if (name == s) return value;
    return std::nullopt;
}

/// One network flow: numeric features, binary label, and (for scan rows)
/// the tool/technique that produced it.
struct FlowRecord {
    std::vector<double> features;
    int label = 0;  // 0 = benign, 1 = scan
    std::optional<Tool> tool;
    std::optional<Technique> technique;

    bool operator==(const FlowRecord&) const = default;
};

struct Dataset {
    std::vector<std::string> feature_names;
    std::vector<FlowRecord> rows;
    std::map<int, std::size_t> class_counts;

    std::size_t n_rows() const { return rows.size(); }
    std::size_t n_features() const { return feature_names.size(); }

    void recount() {
        class_counts.clear();
        for (const auto& r : rows) ++class_counts[r.label];
    }

    bool operator==(const Dataset&) const = default;
};

inline Dataset make_dataset(std::vector<std::string> feature_names,
                            std::vector<FlowRecord> rows) {
    Dataset d;
    d.feature_names = std::move(feature_names);
    d.rows = std::move(rows);
    d.recount();
    return d;
}

// ---------------------------------------------------------------------------
// CSV
//
// Dialect: UTF-8, header row, comma delimiter, '.' decimal separator, no
// quoting. Columns: features in feature_names order, then the label column,
// then the metadata columns (empty cell = absent).
// ---------------------------------------------------------------------------

struct CsvSchema {
    std::string label_column = "label";
    // When set, the columns are required to exist in the header.
    std::optional<std::string> tool_column = "tool";
    std::optional<std::string> technique_column = "technique";
    std::map<std::string, int> label_map = {{"0", 0}, {"1", 1}};
};

namespace detail {

inline std::vector<std::string_view> split_csv_line(std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (true) {
        const std::size_t pos = line.find(',', start);
        if (pos == std::string_view::npos) {
            out.push_back(line.substr(start));
            break;
        }
        out.push_back(line.substr(start, pos - start));
        start = pos + 1;
    }
    return out;
}

inline std::string format_double(double v) {
    std::array<char, 64> buf;
    const auto res = std::to_chars(buf.data(), buf.data() + buf.size(), v);
    return std::string(buf.data(), res.ptr);
}

[[noreturn]] inline void parse_fail(std::size_t row, std::size_t col, const std::string& what) {
    throw ParseFailure("row " + std::to_string(row) + ", column " +
                       std::to_string(col) + ": " + what);
}

}  // namespace detail

inline Dataset load_csv(std::istream& in, const CsvSchema& schema = {}) {
    std::string line;
    if (!std::getline(in, line)) throw EmptyDataset("input has no header row");
    if (!line.empty() && line.back() == '\r') line.pop_back();

    const std::vector<std::string_view> header = detail::split_csv_line(line);
    const std::size_t n_cols = header.size();

    auto find_col = [&](const std::string& name) -> std::optional<std::size_t> {
        for (std::size_t i = 0; i < n_cols; ++i)
            if (header[i] == name) return i;
        return std::nullopt;
    };

    const auto label_col = find_col(schema.label_column);
    if (!label_col) throw MissingColumn("label column '" + schema.label_column + "' not found");

    std::optional<std::size_t> tool_col, technique_col;
    if (schema.tool_column) {
        tool_col = find_col(*schema.tool_column);
        if (!tool_col) throw MissingColumn("tool column '" + *schema.tool_column + "' not found");
    }
    if (schema.technique_column) {
        technique_col = find_col(*schema.technique_column);
        if (!technique_col)
            throw MissingColumn("technique column '" + *schema.technique_column + "' not found");
    }

    std::vector<std::size_t> feature_cols;
    std::vector<std::string> feature_names;
    for (std::size_t i = 0; i < n_cols; ++i) {
        if (i == *label_col || (tool_col && i == *tool_col) ||
            (technique_col && i == *technique_col))
            continue;
        feature_cols.push_back(i);
        feature_names.emplace_back(header[i]);
    }

    std::vector<FlowRecord> rows;
    std::size_t row_no = 0;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        ++row_no;

        const auto cells = detail::split_csv_line(line);
        if (cells.size() != n_cols)
            detail::parse_fail(row_no, cells.size(),
                               "expected " + std::to_string(n_cols) + " cells, got " +
                                   std::to_string(cells.size()));

        FlowRecord rec;
        rec.features.reserve(feature_cols.size());
        for (std::size_t j = 0; j < feature_cols.size(); ++j) {
            const std::string_view cell = cells[feature_cols[j]];
            double v = 0.0;
            const auto res = std::from_chars(cell.data(), cell.data() + cell.size(), v);
            if (res.ec != std::errc{} || res.ptr != cell.data() + cell.size())
                detail::parse_fail(row_no, feature_cols[j] + 1,
                                   "non-numeric feature cell '" + std::string(cell) + "'");
            rec.features.push_back(v);
        }

        const std::string label_cell(cells[*label_col]);
        const auto it = schema.label_map.find(label_cell);
        if (it == schema.label_map.end())
            detail::parse_fail(row_no, *label_col + 1,
                               "label '" + label_cell + "' not in label map");
        rec.label = it->second;

        if (tool_col && !cells[*tool_col].empty()) {
            rec.tool = tool_from_string(cells[*tool_col]);
            if (!rec.tool)
                detail::parse_fail(row_no, *tool_col + 1,
                                   "unknown tool '" + std::string(cells[*tool_col]) + "'");
        }
        if (technique_col && !cells[*technique_col].empty()) {
            rec.technique = technique_from_string(cells[*technique_col]);
            if (!rec.technique)
                detail::parse_fail(row_no, *technique_col + 1,
                                   "unknown technique '" + std::string(cells[*technique_col]) + "'");
        }
        if (rec.tool.has_value() != rec.technique.has_value())
            detail::parse_fail(row_no, *label_col + 1, "tool/technique must be set together");
        if (rec.label == 0 && rec.tool)
            detail::parse_fail(row_no, *label_col + 1, "benign row carries scan metadata");

        rows.push_back(std::move(rec));
    }
    if (rows.empty()) throw EmptyDataset("no data rows");

    return make_dataset(std::move(feature_names), std::move(rows));
}

inline Dataset load_csv(const std::string& path, const CsvSchema& schema = {}) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open '" + path + "'");
    return load_csv(in, schema);
}

inline void write_csv(const Dataset& data, std::ostream& out, const CsvSchema& schema = {}) {
    for (const auto& name : data.feature_names) out << name << ',';
    out << schema.label_column << ','
        << schema.tool_column.value_or("tool") << ','
        << schema.technique_column.value_or("technique") << '\n';
    for (const auto& r : data.rows) {
        for (const double v : r.features) out << detail::format_double(v) << ',';
        out << r.label << ',';
        if (r.tool) out << to_string(*r.tool);
        out << ',';
        if (r.technique) out << to_string(*r.technique);
        out << '\n';
    }
}

inline void write_csv(const Dataset& data, const std::string& path, const CsvSchema& schema = {}) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open '" + path + "' for writing");
    write_csv(data, out, schema);
    if (!out) throw IoError("write to '" + path + "' failed");
}

// ---------------------------------------------------------------------------
// Preprocessing
// ---------------------------------------------------------------------------

struct PreprocessPolicy {
    bool binarize_labels = true;   // any nonzero label becomes 1
    bool drop_non_finite = true;   // drop rows with NaN/±inf features
    bool drop_duplicates = true;   // exact (features, label) duplicates
    bool scale_features = false;   // min-max to [0,1]; off, trees don't need it
};

struct PreprocessSummary {
    std::size_t rows_in = 0;
    std::size_t rows_out = 0;
    std::size_t dropped_non_finite = 0;
    std::size_t dropped_duplicates = 0;
    std::size_t relabeled = 0;
    // feature vectors that appear with more than one label; such rows are
    // kept (mislabeling is surfaced, not silently resolved)
    std::size_t conflicting_label_groups = 0;
};

namespace detail {

inline std::string row_key(const std::vector<double>& features) {
    std::string key;
    key.resize(features.size() * sizeof(double));
    std::memcpy(key.data(), features.data(), key.size());
    return key;
}

}  // namespace detail

inline std::pair<Dataset, PreprocessSummary> preprocess(const Dataset& raw,
                                                        const PreprocessPolicy& policy = {}) {
    if (raw.rows.empty()) throw EmptyDataset("preprocess: empty input");

    PreprocessSummary summary;
    summary.rows_in = raw.rows.size();

    std::vector<FlowRecord> kept;
    kept.reserve(raw.rows.size());
    std::unordered_map<std::string, int> seen;            // (features,label) -> count
    std::unordered_map<std::string, std::uint8_t> labels_of;  // features -> label bitmask

    for (const auto& r : raw.rows) {
        FlowRecord rec = r;
        if (policy.binarize_labels && rec.label != 0 && rec.label != 1) {
            rec.label = 1;
            ++summary.relabeled;
        }
        if (policy.drop_non_finite) {
            const bool bad = std::any_of(rec.features.begin(), rec.features.end(),
                                         [](double v) { return !std::isfinite(v); });
            if (bad) {
                ++summary.dropped_non_finite;
                continue;
            }
        }
        if (policy.drop_duplicates) {
            const std::string fkey = detail::row_key(rec.features);
            labels_of[fkey] |= static_cast<std::uint8_t>(1u << (rec.label & 1));
            const std::string key = fkey + static_cast<char>('0' + (rec.label & 1));
            if (++seen[key] > 1) {
                ++summary.dropped_duplicates;
                continue;
            }
        }
        kept.push_back(std::move(rec));
    }

    for (const auto& [fkey, mask] : labels_of)
        if (mask == 0x3) ++summary.conflicting_label_groups;

    if (kept.empty()) throw AllRowsDropped("preprocess removed every row");

    if (policy.scale_features) {
        const std::size_t d = raw.feature_names.size();
        std::vector<double> lo(d, std::numeric_limits<double>::infinity());
        std::vector<double> hi(d, -std::numeric_limits<double>::infinity());
        for (const auto& r : kept)
            for (std::size_t j = 0; j < d; ++j) {
                lo[j] = std::min(lo[j], r.features[j]);
                hi[j] = std::max(hi[j], r.features[j]);
            }
        for (auto& r : kept)
            for (std::size_t j = 0; j < d; ++j)
                r.features[j] = hi[j] > lo[j] ? (r.features[j] - lo[j]) / (hi[j] - lo[j]) : 0.0;
    }

    Dataset out = make_dataset(raw.feature_names, std::move(kept));
    summary.rows_out = out.rows.size();
    if (out.class_counts.size() < 2)
        throw SingleClassRemaining("only one class left after preprocessing");
    return {std::move(out), summary};
}

// ---------------------------------------------------------------------------
// Partitioning
// ---------------------------------------------------------------------------

struct SplitPlan {
    double test_fraction = 0.30;
    std::uint64_t seed = 0;
    int fold_count = 10;
};

namespace detail {

/// Largest-remainder apportionment of n rows between test and train;
/// the leftover row (if any) goes to the side with the larger remainder,
/// ties toward test.
inline std::size_t test_share(std::size_t n, double test_fraction) {
    const double ideal_test = test_fraction * static_cast<double>(n);
    const double ideal_train = static_cast<double>(n) - ideal_test;
    const auto base_test = static_cast<std::size_t>(ideal_test);
    const auto base_train = static_cast<std::size_t>(ideal_train);
    std::size_t test = base_test;
    if (base_test + base_train < n) {
        const double rem_test = ideal_test - static_cast<double>(base_test);
        const double rem_train = ideal_train - static_cast<double>(base_train);
        if (rem_test >= rem_train) ++test;
    }
    return test;
}

inline std::map<int, std::vector<std::size_t>> indices_by_class(const Dataset& data) {
    std::map<int, std::vector<std::size_t>> by_class;
    for (std::size_t i = 0; i < data.rows.size(); ++i)
        by_class[data.rows[i].label].push_back(i);
    return by_class;
}

inline Dataset take_rows(const Dataset& data, const std::vector<std::size_t>& idx) {
    std::vector<FlowRecord> rows;
    rows.reserve(idx.size());
    for (const std::size_t i : idx) rows.push_back(data.rows[i]);
    return make_dataset(data.feature_names, std::move(rows));
}

}  // namespace detail

inline std::pair<Dataset, Dataset> stratified_split(const Dataset& data, const SplitPlan& plan) {
    if (!(plan.test_fraction > 0.0 && plan.test_fraction < 1.0))
        throw Error("test_fraction must be in (0,1)");

    auto by_class = detail::indices_by_class(data);
    std::vector<std::size_t> test_idx, train_idx;
    for (auto& [label, idx] : by_class) {
        if (idx.size() < 2)
            throw DegenerateClass("class " + std::to_string(label) + " has fewer than 2 rows");
        const std::size_t n_test = detail::test_share(idx.size(), plan.test_fraction);
        if (n_test == 0 || n_test == idx.size())
            throw DegenerateClass("class " + std::to_string(label) +
                                  " too small to appear in both partitions");
        Rng rng(derive_seed(plan.seed, static_cast<std::uint64_t>(label)));
        rng.shuffle(idx);
        test_idx.insert(test_idx.end(), idx.begin(), idx.begin() + n_test);
        train_idx.insert(train_idx.end(), idx.begin() + n_test, idx.end());
    }
    std::sort(test_idx.begin(), test_idx.end());
    std::sort(train_idx.begin(), train_idx.end());
    return {detail::take_rows(data, train_idx), detail::take_rows(data, test_idx)};
}

struct FoldIndices {
    std::vector<std::size_t> train;
    std::vector<std::size_t> validation;
};

inline std::vector<FoldIndices> stratified_kfold(const Dataset& data, int k, std::uint64_t seed) {
    if (k < 2) throw Error("fold count must be >= 2");

    auto by_class = detail::indices_by_class(data);
    for (const auto& [label, idx] : by_class)
        if (idx.size() < static_cast<std::size_t>(k))
            throw InsufficientClassSize("class " + std::to_string(label) + " has " +
                                        std::to_string(idx.size()) + " rows, need >= " +
                                        std::to_string(k));

    std::vector<std::vector<std::size_t>> validation(static_cast<std::size_t>(k));
    for (auto& [label, idx] : by_class) {
        Rng rng(derive_seed(seed, static_cast<std::uint64_t>(label)));
        rng.shuffle(idx);
        for (std::size_t i = 0; i < idx.size(); ++i)
            validation[i % static_cast<std::size_t>(k)].push_back(idx[i]);
    }

    std::vector<FoldIndices> folds(static_cast<std::size_t>(k));
    std::vector<std::uint8_t> in_fold(data.rows.size());
    for (std::size_t f = 0; f < folds.size(); ++f) {
        std::sort(validation[f].begin(), validation[f].end());
        std::fill(in_fold.begin(), in_fold.end(), 0);
        for (const std::size_t i : validation[f]) in_fold[i] = 1;
        folds[f].validation = validation[f];
        folds[f].train.reserve(data.rows.size() - validation[f].size());
        for (std::size_t i = 0; i < data.rows.size(); ++i)
            if (!in_fold[i]) folds[f].train.push_back(i);
    }
    return folds;
}

}  // namespace scanforest
