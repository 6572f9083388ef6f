#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "scanforest/dataset.hpp"
#include "scanforest/error.hpp"
#include "scanforest/rng.hpp"
#include "scanforest/version.hpp"

namespace scanforest {

// ---------------------------------------------------------------------------
// Profiles
// ---------------------------------------------------------------------------

enum class RateClass : std::uint8_t { slow, fast, massive };

inline const char* to_string(RateClass r) {
    switch (r) {
        case RateClass::slow: return "slow";
        case RateClass::fast: return "fast";
        case RateClass::massive: return "massive";
    }
    return "?";
}

/// How the scanned host is expected to answer probes of this kind.
enum class ResponseBehavior : std::uint8_t {
    full_handshake,    // connect(): three-way handshake, then teardown
    rst_after_synack,  // half-open: scanner resets the half-made session
    mostly_silent,     // stealth probes: only closed ports answer (RST)
    icmp_unreachable,  // udp probes: closed ports answer out-of-band
};

/// Nominal TCP flags set on each forward probe packet.
struct FlagPattern {
    int syn = 0;
    int ack = 0;
    int rst = 0;
    int fin = 0;
    int psh = 0;
};

struct ScanProfile {
    Tool tool;
    Technique technique;
    RateClass rate_class;
    bool completes_handshake;
    FlagPattern flag_pattern;
    ResponseBehavior response_behavior;
};

namespace detail {

inline bool tool_supports(Tool tool, Technique technique) {
    switch (tool) {
        case Tool::nmap:
            return technique != Technique::udp;
        case Tool::unicornscan:
            return true;
        case Tool::masscan:
        case Tool::zmap:
            return technique == Technique::connect || technique == Technique::syn;
        case Tool::hping:
            return technique != Technique::connect;
    }
    return false;
}

}  // namespace detail

/// Canonical profile for a (tool, technique) pair. masscan and zmap always
/// run in the massive rate class; unicornscan defaults to slow (callers may
/// retune rate_class on the returned value).
inline ScanProfile profile_for(Tool tool, Technique technique) {
    if (!detail::tool_supports(tool, technique))
        throw UnsupportedCombination(std::string(to_string(tool)) + " does not support " +
                                     to_string(technique) + " probes");
    ScanProfile p;
    p.tool = tool;
    p.technique = technique;
    switch (tool) {
        case Tool::masscan:
        case Tool::zmap: p.rate_class = RateClass::massive; break;
        case Tool::unicornscan: p.rate_class = RateClass::slow; break;
        default: p.rate_class = RateClass::fast; break;
    }
    p.completes_handshake = technique == Technique::connect;
    switch (technique) {
        case Technique::connect: p.flag_pattern = {1, 2, 0, 1, 0}; break;
        case Technique::syn: p.flag_pattern = {1, 0, 1, 0, 0}; break;
        case Technique::fin: p.flag_pattern = {0, 0, 0, 1, 0}; break;
        case Technique::null: p.flag_pattern = {0, 0, 0, 0, 0}; break;
        case Technique::xmas: p.flag_pattern = {0, 0, 0, 1, 1}; break;
        case Technique::udp: p.flag_pattern = {0, 0, 0, 0, 0}; break;
    }
    switch (technique) {
        case Technique::connect: p.response_behavior = ResponseBehavior::full_handshake; break;
        case Technique::syn: p.response_behavior = ResponseBehavior::rst_after_synack; break;
        case Technique::udp: p.response_behavior = ResponseBehavior::icmp_unreachable; break;
        default: p.response_behavior = ResponseBehavior::mostly_silent; break;
    }
    return p;
}

// ---------------------------------------------------------------------------
// Feature schema
// ---------------------------------------------------------------------------

/// Fixed 14-column flow feature schema shared by the generator and the
/// bundled configs.
inline const std::vector<std::string>& feature_schema() {
    static const std::vector<std::string> names = {
        "duration_s",      "fwd_packets", "bwd_packets",
        "fwd_bytes",       "bwd_bytes",   "syn_count",
        "ack_count",       "rst_count",   "fin_count",
        "psh_count",       "mean_iat_ms", "distinct_dst_ports_in_window",
        "handshake_completed", "mean_pkt_size_bytes",
    };
    return names;
}

inline constexpr std::size_t kFeatureCount = 14;
inline constexpr std::size_t kHandshakeFeature = 12;

namespace detail {

/// One benign TCP session: completed handshake, bidirectional payload,
/// at most 3 distinct destination ports in the window.
inline std::vector<double> benign_features(Rng& rng) {
    std::vector<double> f(kFeatureCount);
    const double duration = std::clamp(rng.lognormal(std::log(2.0), 1.1), 0.02, 900.0);
    const double fwd_packets = 3.0 + std::floor(rng.lognormal(std::log(9.0), 0.8));
    const double bwd_packets = std::max(2.0, std::round(fwd_packets * rng.uniform(0.7, 1.4)));
    const double pkt = rng.uniform(180.0, 1350.0);
    const double rst = rng.bernoulli(0.08) ? 1.0 : 0.0;

    f[0] = duration;
    f[1] = fwd_packets;
    f[2] = bwd_packets;
    f[3] = fwd_packets * pkt * rng.uniform(0.35, 0.8);
    f[4] = bwd_packets * pkt * rng.uniform(0.7, 1.3);
    f[5] = 2.0;  // SYN + SYN-ACK
    f[6] = std::round((fwd_packets + bwd_packets) * rng.uniform(0.75, 0.98));
    f[7] = rst;
    f[8] = rst > 0.0 ? 0.0 : 2.0;  // graceful close unless reset
    f[9] = std::round((fwd_packets + bwd_packets) * rng.uniform(0.08, 0.35));
    f[10] = duration * 1000.0 / (fwd_packets + bwd_packets);
    f[11] = 1.0 + (rng.bernoulli(0.18) ? 1.0 : 0.0) + (rng.bernoulli(0.05) ? 1.0 : 0.0);
    f[12] = 1.0;
    f[13] = pkt;
    return f;
}

inline std::vector<double> scan_features(const ScanProfile& profile, Rng& rng) {
    double probes = 0.0;
    double iat = 0.0;
    switch (profile.rate_class) {
        case RateClass::slow:
            probes = std::round(rng.uniform(8.0, 30.0));
            iat = rng.uniform(140.0, 1100.0);
            break;
        case RateClass::fast:
            probes = std::round(rng.uniform(40.0, 160.0));
            iat = rng.uniform(6.0, 55.0);
            break;
        case RateClass::massive:
            probes = std::round(rng.uniform(250.0, 900.0));
            iat = rng.uniform(0.2, 4.0);
            break;
    }
    const double open_rate = rng.uniform(0.04, 0.30);
    const double ports = std::round(probes * rng.uniform(0.85, 1.0));
    const double duration = probes * iat / 1000.0 * rng.uniform(0.92, 1.08);

    std::vector<double> f(kFeatureCount);
    f[0] = duration;
    f[10] = iat;
    f[11] = ports;
    f[12] = profile.completes_handshake ? 1.0 : 0.0;

    double pkt = 0.0;
    double fwd_packets = 0.0;
    double bwd_packets = 0.0;
    switch (profile.technique) {
        case Technique::connect: {
            fwd_packets = std::round(probes * (2.1 + 1.1 * open_rate + rng.uniform(0.0, 0.3)));
            bwd_packets = std::round(probes * (1.4 + open_rate + rng.uniform(0.0, 0.3)));
            f[5] = std::round(probes * (1.0 + open_rate * rng.uniform(0.9, 1.1)));
            f[6] = std::round(probes * (1.6 + 1.6 * open_rate) * rng.uniform(0.9, 1.1));
            f[7] = std::round(probes * (1.0 - open_rate) * rng.uniform(0.7, 1.0));
            f[8] = std::round(probes * open_rate * rng.uniform(1.6, 2.2));
            f[9] = std::round(probes * open_rate * rng.uniform(0.0, 0.6));
            pkt = rng.uniform(44.0, 72.0);
            break;
        }
        case Technique::syn: {
            fwd_packets = std::round(probes * rng.uniform(1.0, 1.35));
            bwd_packets = std::round(probes * (0.55 + 0.45 * open_rate) * rng.uniform(0.8, 1.0));
            f[5] = std::round(probes * (1.0 + open_rate * rng.uniform(0.8, 1.2)));
            f[6] = std::round(probes * open_rate * rng.uniform(0.8, 1.2));
            f[7] = std::round(probes * rng.uniform(0.75, 1.1));
            f[8] = 0.0;
            f[9] = 0.0;
            pkt = rng.uniform(40.0, 60.0);
            break;
        }
        case Technique::fin:
        case Technique::null:
        case Technique::xmas: {
            fwd_packets = std::round(probes * rng.uniform(1.0, 1.45));
            bwd_packets = std::round(probes * (1.0 - open_rate) * rng.uniform(0.55, 0.85));
            f[5] = 0.0;
            f[6] = 0.0;
            f[7] = std::round(bwd_packets * rng.uniform(0.9, 1.0));
            f[8] = profile.technique == Technique::null ? 0.0 : probes;
            f[9] = profile.technique == Technique::xmas ? probes : 0.0;
            pkt = rng.uniform(40.0, 54.0);
            break;
        }
        case Technique::udp: {
            fwd_packets = std::round(probes * rng.uniform(1.0, 1.5));
            bwd_packets = std::round(probes * rng.uniform(0.08, 0.35));
            f[5] = 0.0;
            f[6] = 0.0;
            f[7] = 0.0;
            f[8] = 0.0;
            f[9] = 0.0;
            pkt = rng.uniform(46.0, 110.0);
            break;
        }
    }
    f[1] = fwd_packets;
    f[2] = std::max(0.0, bwd_packets);
    f[3] = fwd_packets * pkt * rng.uniform(0.85, 1.05);
    f[4] = f[2] * pkt * rng.uniform(0.8, 1.15);
    f[13] = pkt;
    return f;
}

/// A narrow "gray zone" both classes visit: short small-packet sessions
/// with completed handshakes. Within the zone, benign and scan rows come
/// from this one distribution, so no classifier can tell them apart and
/// the class decision there is purely a question of vote weighting. All
/// values respect the benign invariants (handshake 1, ports <= 3).
inline std::vector<double> gray_features(Rng& rng) {
    std::vector<double> f(kFeatureCount);
    const double duration = rng.uniform(0.08, 0.9);
    const double fwd_packets = 4.0 + std::floor(rng.uniform(0.0, 6.0));
    const double bwd_packets = std::max(2.0, std::round(fwd_packets * rng.uniform(0.6, 1.1)));
    const double pkt = rng.uniform(95.0, 175.0);
    const double rst = rng.bernoulli(0.2) ? 1.0 : 0.0;

    f[0] = duration;
    f[1] = fwd_packets;
    f[2] = bwd_packets;
    f[3] = fwd_packets * pkt * rng.uniform(0.5, 0.9);
    f[4] = bwd_packets * pkt * rng.uniform(0.7, 1.2);
    f[5] = 2.0;
    f[6] = std::round((fwd_packets + bwd_packets) * rng.uniform(0.7, 0.95));
    f[7] = rst;
    f[8] = rst > 0.0 ? 0.0 : 2.0;
    f[9] = std::round((fwd_packets + bwd_packets) * rng.uniform(0.05, 0.3));
    f[10] = duration * 1000.0 / (fwd_packets + bwd_packets);
    f[11] = 2.0 + (rng.bernoulli(0.5) ? 1.0 : 0.0);
    f[12] = 1.0;
    f[13] = pkt;
    return f;
}

/// Fraction of benign rows drawn from the gray zone.
inline constexpr double kBenignGrayRate = 0.01;

/// Scan rows enter the gray zone at this rate times the overlap setting,
/// keeping the zone's scan share a strict local minority (roughly 40% at
/// the default overlap against kBenignGrayRate benign traffic).
inline constexpr double kScanGrayFactor = 0.09;

/// Masks a scan draw toward a fresh benign draw: each feature is replaced
/// by the benign value with probability `overlap`, independently. Masking
/// rather than interpolating keeps every feature inside one of the two
/// genuine distributions, so raised overlap erases evidence instead of
/// creating out-of-support values a tree could key on. At overlap 1 the
/// row is a pure benign draw (still labeled scan).
inline std::vector<double> blend_toward_benign(std::vector<double> scan, Rng& rng,
                                               double overlap) {
    if (overlap <= 0.0) return scan;
    const auto benign = benign_features(rng);
    for (std::size_t i = 0; i < kFeatureCount; ++i)
        if (rng.bernoulli(overlap)) scan[i] = benign[i];
    return scan;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Generation
// ---------------------------------------------------------------------------

/// n benign flows. Row i depends only on derive_seed(seed, i), so any
/// partition of the index range regenerates the same rows.
inline std::vector<FlowRecord> generate_benign(std::size_t n, std::uint64_t seed) {
    if (n < 1) throw EmptyInput("generate_benign: n must be >= 1");
    std::vector<FlowRecord> rows;
    rows.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        Rng rng(derive_seed(seed, i));
        FlowRecord row;
        row.features = rng.bernoulli(detail::kBenignGrayRate) ? detail::gray_features(rng)
                                                              : detail::benign_features(rng);
        row.label = 0;
        rows.push_back(std::move(row));
    }
    return rows;
}

/// n scan flows for one profile. `overlap` in [0,1] blends each draw toward
/// the benign distribution: 0 keeps the profile's native separation, 1 makes
/// the rows statistically indistinguishable from benign traffic.
inline std::vector<FlowRecord> generate_scan(const ScanProfile& profile, std::size_t n,
                                             std::uint64_t seed, double overlap = 0.0) {
    if (n < 1) throw EmptyInput("generate_scan: n must be >= 1");
    if (!detail::tool_supports(profile.tool, profile.technique))
        throw UnsupportedCombination(std::string(to_string(profile.tool)) +
                                     " does not support " + to_string(profile.technique) +
                                     " probes");
    if (!(overlap >= 0.0 && overlap <= 1.0))
        throw InvalidConfig("overlap must be in [0,1]");
    std::vector<FlowRecord> rows;
    rows.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        Rng rng(derive_seed(seed, i));
        FlowRecord row;
        if (rng.bernoulli(detail::kScanGrayFactor * overlap))
            row.features = detail::gray_features(rng);
        else
            row.features = detail::blend_toward_benign(detail::scan_features(profile, rng), rng,
                                                       overlap);
        row.label = 1;
        row.tool = profile.tool;
        row.technique = profile.technique;
        rows.push_back(std::move(row));
    }
    return rows;
}

// ---------------------------------------------------------------------------
// Corpus configuration
// ---------------------------------------------------------------------------

struct ProfileMix {
    Tool tool = Tool::nmap;
    Technique technique = Technique::syn;
    double weight = 0.0;
    std::optional<double> overlap;  // overrides GeneratorConfig::overlap
};

/// Ten-profile default mix: both mainstream techniques on every tool.
inline std::vector<ProfileMix> default_profile_mix() {
    return {
        {Tool::nmap, Technique::connect, 0.1, std::nullopt},
        {Tool::nmap, Technique::syn, 0.1, std::nullopt},
        {Tool::masscan, Technique::connect, 0.1, std::nullopt},
        {Tool::masscan, Technique::syn, 0.1, std::nullopt},
        {Tool::unicornscan, Technique::connect, 0.1, std::nullopt},
        {Tool::unicornscan, Technique::syn, 0.1, std::nullopt},
        {Tool::zmap, Technique::connect, 0.1, std::nullopt},
        {Tool::zmap, Technique::syn, 0.1, std::nullopt},
        {Tool::hping, Technique::syn, 0.1, std::nullopt},
        {Tool::hping, Technique::fin, 0.1, std::nullopt},
    };
}

struct GeneratorConfig {
    std::size_t total_flows = 1000;
    double benign_fraction = 0.85;
    std::uint64_t seed = 0;
    double overlap = 0.45;
    std::vector<ProfileMix> mix = default_profile_mix();

    void validate() const {
        if (total_flows < 1) throw InvalidConfig("total_flows must be >= 1");
        if (!(benign_fraction > 0.0 && benign_fraction < 1.0))
            throw InvalidConfig("benign_fraction must lie in (0,1)");
        if (!(overlap >= 0.0 && overlap <= 1.0))
            throw InvalidConfig("overlap must lie in [0,1]");
        if (mix.empty()) throw InvalidConfig("profile mix is empty");
        double total = 0.0;
        for (const auto& m : mix) {
            if (m.weight < 0.0) throw InvalidConfig("profile weights must be >= 0");
            if (m.overlap && !(*m.overlap >= 0.0 && *m.overlap <= 1.0))
                throw InvalidConfig("profile overlap must lie in [0,1]");
            if (!detail::tool_supports(m.tool, m.technique))
                throw UnsupportedCombination(std::string(to_string(m.tool)) +
                                             " does not support " + to_string(m.technique) +
                                             " probes");
            total += m.weight;
        }
        if (std::fabs(total - 1.0) > 1e-9)
            throw InvalidConfig("profile weights must sum to 1 (got " + std::to_string(total) +
                                ")");
    }
};

inline void to_json(nlohmann::json& j, const ProfileMix& m) {
    j = nlohmann::json{{"tool", to_string(m.tool)},
                       {"technique", to_string(m.technique)},
                       {"weight", m.weight}};
    if (m.overlap) j["overlap"] = *m.overlap;
}

inline void from_json(const nlohmann::json& j, ProfileMix& m) {
    const auto tool_name = j.at("tool").get<std::string>();
    const auto technique_name = j.at("technique").get<std::string>();
    const auto tool = tool_from_string(tool_name);
    if (!tool) throw InvalidConfig("unknown tool '" + tool_name + "'");
    const auto technique = technique_from_string(technique_name);
    if (!technique) throw InvalidConfig("unknown technique '" + technique_name + "'");
    m.tool = *tool;
    m.technique = *technique;
    m.weight = j.at("weight").get<double>();
    if (j.contains("overlap") && !j.at("overlap").is_null())
        m.overlap = j.at("overlap").get<double>();
    else
        m.overlap = std::nullopt;
}

inline void to_json(nlohmann::json& j, const GeneratorConfig& c) {
    j = nlohmann::json{{"schema_version", kGeneratorSchemaVersion},
                       {"total_flows", c.total_flows},
                       {"benign_fraction", c.benign_fraction},
                       {"seed", c.seed},
                       {"overlap", c.overlap},
                       {"profiles", c.mix}};
}

inline void from_json(const nlohmann::json& j, GeneratorConfig& c) {
    c = GeneratorConfig{};
    if (j.contains("schema_version") &&
        j.at("schema_version").get<int>() != kGeneratorSchemaVersion)
        throw UnsupportedVersion("unsupported generator schema_version " +
                                 j.at("schema_version").dump());
    c.total_flows = j.at("total_flows").get<std::size_t>();
    c.benign_fraction = j.at("benign_fraction").get<double>();
    c.seed = j.value("seed", std::uint64_t{0});
    c.overlap = j.value("overlap", 0.45);
    if (j.contains("profiles")) c.mix = j.at("profiles").get<std::vector<ProfileMix>>();
}

namespace detail {

/// Largest-remainder apportionment of `total` across nonnegative shares.
/// Remainder ties resolve to the lower index.
inline std::vector<std::size_t> apportion(std::size_t total, std::span<const double> shares) {
    double share_sum = 0.0;
    for (const double s : shares) share_sum += s;
    std::vector<std::size_t> out(shares.size(), 0);
    std::vector<std::pair<double, std::size_t>> remainders;
    std::size_t assigned = 0;
    for (std::size_t i = 0; i < shares.size(); ++i) {
        const double quota = static_cast<double>(total) * shares[i] / share_sum;
        out[i] = static_cast<std::size_t>(quota);
        assigned += out[i];
        remainders.emplace_back(quota - std::floor(quota), i);
    }
    std::sort(remainders.begin(), remainders.end(), [](const auto& a, const auto& b) {
        return a.first > b.first || (a.first == b.first && a.second < b.second);
    });
    for (std::size_t k = 0; assigned < total; ++k, ++assigned)
        ++out[remainders[k % remainders.size()].second];
    return out;
}

}  // namespace detail

/// Builds the full labeled corpus: benign and per-profile scan counts are
/// apportioned by largest remainder, generated independently, then shuffled
/// with a seed-derived stream. Identical configs give identical datasets.
inline Dataset generate_corpus(const GeneratorConfig& config) {
    config.validate();

    const std::array<double, 2> class_shares{config.benign_fraction,
                                             1.0 - config.benign_fraction};
    const auto class_counts = detail::apportion(config.total_flows, class_shares);
    const std::size_t n_benign = class_counts[0];
    const std::size_t n_scan = class_counts[1];

    std::vector<double> weights;
    weights.reserve(config.mix.size());
    for (const auto& m : config.mix) weights.push_back(m.weight);
    const auto per_profile = detail::apportion(n_scan, weights);

    std::vector<FlowRecord> rows;
    rows.reserve(config.total_flows);
    if (n_benign > 0) {
        auto benign = generate_benign(n_benign, derive_seed(config.seed, 1));
        std::move(benign.begin(), benign.end(), std::back_inserter(rows));
    }
    for (std::size_t k = 0; k < config.mix.size(); ++k) {
        if (per_profile[k] == 0) continue;
        const auto& m = config.mix[k];
        const auto profile = profile_for(m.tool, m.technique);
        auto scans = generate_scan(profile, per_profile[k], derive_seed(config.seed, 2 + k),
                                   m.overlap.value_or(config.overlap));
        std::move(scans.begin(), scans.end(), std::back_inserter(rows));
    }

    Rng shuffle_rng(derive_seed(config.seed, 0));
    shuffle_rng.shuffle(rows);
    return make_dataset(feature_schema(), std::move(rows));
}

}  // namespace scanforest
