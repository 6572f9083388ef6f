#pragma once

#include <optional>
#include <string>
#include <vector>

#include "scanforest/dataset.hpp"
#include "scanforest/scangen.hpp"

namespace test_helpers {

inline scanforest::FlowRecord flow(std::vector<double> features, int label,
                                   std::optional<scanforest::Tool> tool = std::nullopt,
                                   std::optional<scanforest::Technique> technique = std::nullopt) {
    scanforest::FlowRecord r;
    r.features = std::move(features);
    r.label = label;
    r.tool = tool;
    r.technique = technique;
    return r;
}

/// Column-labeled dataset from parallel (features, label) rows.
inline scanforest::Dataset dataset(std::vector<std::string> names,
                                   std::vector<scanforest::FlowRecord> rows) {
    return scanforest::make_dataset(std::move(names), std::move(rows));
}

/// Small generated corpus with the default profile mix.
inline scanforest::Dataset corpus(std::size_t total, std::uint64_t seed,
                                  double overlap = 0.45, double benign_fraction = 0.85) {
    scanforest::GeneratorConfig config;
    config.total_flows = total;
    config.benign_fraction = benign_fraction;
    config.seed = seed;
    config.overlap = overlap;
    return scanforest::generate_corpus(config);
}

}  // namespace test_helpers
