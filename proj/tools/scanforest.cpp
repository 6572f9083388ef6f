// scanforest: command-line front end for the port-scan detection toolkit.
//
// Subcommands: generate, preprocess, trial, report, compare.
// Exit codes: 0 success, 2 usage/config, 3 I/O, 4 computation,
//             5 statistical degeneracy.

#include <charconv>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "scanforest/dataset.hpp"
#include "scanforest/error.hpp"
#include "scanforest/forest.hpp"
#include "scanforest/manifest.hpp"
#include "scanforest/metrics.hpp"
#include "scanforest/report.hpp"
#include "scanforest/scangen.hpp"
#include "scanforest/tuning.hpp"
#include "scanforest/version.hpp"

namespace {

using namespace scanforest;

void log_line(const std::string& msg) { std::cerr << "[scanforest] " << msg << "\n"; }

// Per-stage wrapper: one log line going in, one naming the stage on failure.
template <typename F>
auto stage(const std::string& name, F&& fn) -> decltype(fn()) {
    log_line(name);
    try {
        return fn();
    } catch (...) {
        log_line("failed at stage: " + name);
        throw;
    }
}

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    if (in.bad()) throw IoError("failed reading '" + path + "'");
    return std::move(ss).str();
}

std::string joined_command(int argc, char** argv) {
    std::string cmd;
    for (int i = 0; i < argc; ++i) {
        if (i) cmd += ' ';
        cmd += argv[i];
    }
    return cmd;
}

// SCANFOREST_SEED replaces the built-in default seed; an explicit --seed
// still wins over both.
std::optional<std::uint64_t> env_seed() {
    const char* s = std::getenv("SCANFOREST_SEED");
    if (!s || !*s) return std::nullopt;
    std::uint64_t value = 0;
    const char* end = s + std::char_traits<char>::length(s);
    auto [ptr, ec] = std::from_chars(s, end, value);
    if (ec != std::errc() || ptr != end)
        throw InvalidConfig("SCANFOREST_SEED is not an unsigned integer: '" + std::string(s) +
                            "'");
    return value;
}

std::uint64_t resolve_seed(const CLI::Option* seed_opt, std::uint64_t flag_value,
                           std::uint64_t fallback) {
    if (seed_opt->count() > 0) return flag_value;
    if (const auto env = env_seed()) return *env;
    return fallback;
}

nlohmann::json parse_json_config(const std::string& text, const std::string& origin) {
    try {
        return nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw InvalidConfig("malformed JSON in " + origin + ": " + e.what());
    }
}

nlohmann::json parse_json_data(const std::string& text, const std::string& origin) {
    try {
        return nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw IoError("unreadable JSON in " + origin + ": " + e.what());
    }
}

// Custom search spaces arrive as JSON: list-valued n_estimators/max_depth,
// scalar everything else.
SearchSpace parse_space_json(const nlohmann::json& j) {
    SearchSpace s;
    s.set_id = SetId::custom;
    try {
        for (const auto& v : j.at("n_estimators")) s.n_estimators.push_back(v.get<int>());
        for (const auto& v : j.at("max_depth")) s.max_depth.push_back(v.get<int>());
        nlohmann::json scalars = j;
        scalars["n_estimators"] = 1;
        scalars.erase("max_depth");
        const auto h = scalars.get<HyperparamSet>();
        s.min_samples_leaf = h.min_samples_leaf;
        s.min_samples_split = h.min_samples_split;
        s.max_features = h.max_features;
        s.criterion = h.criterion;
        s.class_weight = h.class_weight;
        s.bootstrap = h.bootstrap;
    } catch (const nlohmann::json::exception& e) {
        throw InvalidConfig(std::string("bad search space: ") + e.what());
    }
    s.validate();
    return s;
}

// Pairing spec: "0=Algaolahi,1=Baah" or "0=0,1=1"; left side indexes the
// trial rows in the order given, right side names a baseline study (case
// insensitive) or its row index.
std::vector<std::pair<std::size_t, std::size_t>> parse_pairing(
    const std::string& spec, const std::vector<BaselineEntry>& baselines) {
    auto lower = [](std::string s) {
        for (auto& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
        return s;
    };
    auto parse_index = [](std::string_view token) -> std::optional<std::size_t> {
        std::size_t value = 0;
        auto [ptr, ec] = std::from_chars(token.data(), token.data() + token.size(), value);
        if (ec != std::errc() || ptr != token.data() + token.size()) return std::nullopt;
        return value;
    };

    std::vector<std::pair<std::size_t, std::size_t>> pairing;
    std::stringstream ss(spec);
    std::string token;
    while (std::getline(ss, token, ',')) {
        if (token.empty()) continue;
        const auto eq = token.find('=');
        if (eq == std::string::npos)
            throw InvalidConfig("pairing token '" + token + "' is not of the form i=study");
        const auto left = parse_index(std::string_view(token).substr(0, eq));
        if (!left) throw InvalidConfig("pairing token '" + token + "' has a bad trial index");
        const std::string right = token.substr(eq + 1);
        std::optional<std::size_t> baseline_index = parse_index(right);
        if (!baseline_index) {
            const std::string want = lower(right);
            for (std::size_t i = 0; i < baselines.size(); ++i)
                if (lower(baselines[i].study) == want) {
                    baseline_index = i;
                    break;
                }
        }
        if (!baseline_index)
            throw InvalidConfig("pairing names unknown study '" + right + "'");
        pairing.emplace_back(*left, *baseline_index);
    }
    if (pairing.empty()) throw InvalidConfig("empty pairing spec");
    return pairing;
}

std::vector<TrialReport> load_trial_reports(const std::vector<std::string>& paths) {
    std::vector<TrialReport> trials;
    for (const auto& path : paths) {
        const auto j = parse_json_data(read_file(path), "'" + path + "'");
        for (auto& t : report_from_json(j)) trials.push_back(std::move(t));
    }
    return trials;
}

void emit(const std::string& text, const std::string& out_path, const std::string& command_line,
          const std::vector<FileDigest>& inputs, const std::string& command_name) {
    if (out_path.empty()) {
        std::cout << text;
        return;
    }
    write_file_atomic(out_path, text);
    RunManifest m;
    m.command = command_line;
    m.inputs = inputs;
    m.outputs = {out_path};
    m.timestamp = now_utc_iso8601();
    write_manifest(m, manifest_path_for(out_path, command_name));
    log_line("wrote " + out_path);
}

// ---------------------------------------------------------------------------
// Subcommand bodies
// ---------------------------------------------------------------------------

struct GenerateArgs {
    std::string config_path;
    std::string out_path;
    std::uint64_t seed = 0;
    CLI::Option* seed_opt = nullptr;
};

int cmd_generate(const GenerateArgs& a, const std::string& command_line) {
    const std::string config_text =
        stage("read config", [&] { return read_file(a.config_path); });
    GeneratorConfig config;
    stage("parse config", [&] {
        const auto j = parse_json_config(config_text, "'" + a.config_path + "'");
        config = j.get<GeneratorConfig>();
        config.validate();
    });
    config.seed = resolve_seed(a.seed_opt, a.seed, config.seed);

    const Dataset corpus = stage("generate corpus", [&] { return generate_corpus(config); });
    stage("write corpus", [&] {
        std::ostringstream csv;
        write_csv(corpus, csv);
        write_file_atomic(a.out_path, std::move(csv).str());
    });

    RunManifest m;
    m.command = command_line;
    m.config_digest = Sha256::hex(config_text);
    m.inputs = {{a.config_path, Sha256::hex(config_text)}};
    m.outputs = {a.out_path};
    m.timestamp = now_utc_iso8601();
    write_manifest(m, manifest_path_for(a.out_path, "generate"));

    std::size_t benign = corpus.class_counts.count(0) ? corpus.class_counts.at(0) : 0;
    log_line("generated " + std::to_string(corpus.n_rows()) + " flows (" +
             std::to_string(benign) + " benign, " + std::to_string(corpus.n_rows() - benign) +
             " scan) -> " + a.out_path);
    return 0;
}

struct PreprocessArgs {
    std::string data_path;
    std::string out_path;
    bool keep_duplicates = false;
    bool keep_non_finite = false;
};

int cmd_preprocess(const PreprocessArgs& a, const std::string& command_line) {
    const std::string raw_text = stage("read data", [&] { return read_file(a.data_path); });
    const Dataset raw = stage("parse data", [&] {
        std::istringstream in(raw_text);
        return load_csv(in);
    });

    PreprocessPolicy policy;
    policy.drop_duplicates = !a.keep_duplicates;
    policy.drop_non_finite = !a.keep_non_finite;
    const auto [clean, summary] = stage("preprocess", [&] { return preprocess(raw, policy); });

    stage("write data", [&] {
        std::ostringstream csv;
        write_csv(clean, csv);
        write_file_atomic(a.out_path, std::move(csv).str());
    });

    RunManifest m;
    m.command = command_line;
    m.inputs = {{a.data_path, Sha256::hex(raw_text)}};
    m.outputs = {a.out_path};
    m.timestamp = now_utc_iso8601();
    write_manifest(m, manifest_path_for(a.out_path, "preprocess"));

    log_line("rows in " + std::to_string(summary.rows_in) + ", out " +
             std::to_string(summary.rows_out) + " (dropped " +
             std::to_string(summary.dropped_non_finite) + " non-finite, " +
             std::to_string(summary.dropped_duplicates) + " duplicate; " +
             std::to_string(summary.conflicting_label_groups) +
             " conflicting-label groups kept)");
    return 0;
}

struct TrialArgs {
    std::string data_path;
    std::string set_name = "A";
    std::string method_name = "grid";
    std::string space_path;
    std::string out_path;
    std::uint64_t seed = 0;
    CLI::Option* seed_opt = nullptr;
    double test_fraction = 0.30;
    int folds = 10;
    int iterations = kDefaultRandomIterations;
};

int cmd_trial(const TrialArgs& a, const std::string& command_line) {
    const auto set_id = set_id_from_string(a.set_name);
    if (!set_id) throw InvalidConfig("unknown --set '" + a.set_name + "'");

    std::vector<SearchMethod> methods;
    if (a.method_name == "both")
        methods = {SearchMethod::random, SearchMethod::grid};
    else if (const auto m = search_method_from_string(a.method_name))
        methods = {*m};
    else
        throw InvalidConfig("unknown --method '" + a.method_name + "'");

    SearchSpace space;
    if (*set_id == SetId::custom) {
        if (a.space_path.empty())
            throw InvalidConfig("--set custom requires --space <json path>");
        const auto text = stage("read space", [&] { return read_file(a.space_path); });
        space = parse_space_json(parse_json_config(text, "'" + a.space_path + "'"));
    } else {
        space = builtin_space(*set_id);
    }

    const std::string raw_text = stage("read data", [&] { return read_file(a.data_path); });
    const Dataset raw = stage("parse data", [&] {
        std::istringstream in(raw_text);
        return load_csv(in);
    });
    const Dataset data = stage("preprocess", [&] { return preprocess(raw).first; });

    const std::uint64_t seed = resolve_seed(a.seed_opt, a.seed, 0);
    SplitPlan plan;
    plan.test_fraction = a.test_fraction;
    plan.fold_count = a.folds;

    std::vector<TrialReport> trials;
    for (const auto method : methods) {
        const std::string name =
            std::string("trial ") + to_string(*set_id) + "/" + to_string(method);
        trials.push_back(stage(
            name, [&] { return run_trial(data, space, method, plan, seed, a.iterations); }));
        const auto& t = trials.back();
        log_line(name + ": accuracy " + detail::fixed4(t.test.accuracy) + ", macro F1 " +
                 detail::fixed4(t.test.macro_f1) + ", cv mean " +
                 detail::fixed4(t.cv_mean_score));
    }

    stage("write report", [&] {
        write_file_atomic(a.out_path, report_to_json(trials).dump(2) + "\n");
    });

    RunManifest m;
    m.command = command_line;
    m.inputs = {{a.data_path, Sha256::hex(raw_text)}};
    if (!a.space_path.empty())
        m.inputs.push_back({a.space_path, Sha256::hex_of_file(a.space_path)});
    m.outputs = {a.out_path};
    m.timestamp = now_utc_iso8601();
    write_manifest(m, manifest_path_for(a.out_path, "trial"));

    std::cout << render_text(trials);
    return 0;
}

struct ReportArgs {
    std::vector<std::string> report_paths;
    std::string format = "text";
    std::string out_path;
};

int cmd_report(const ReportArgs& a, const std::string& command_line) {
    if (a.format != "text" && a.format != "markdown")
        throw InvalidConfig("unknown --format '" + a.format + "'");
    const auto trials = stage("read reports", [&] { return load_trial_reports(a.report_paths); });
    const std::string rendered =
        a.format == "markdown" ? render_markdown(trials) : render_text(trials);

    std::vector<FileDigest> inputs;
    for (const auto& p : a.report_paths) inputs.push_back({p, Sha256::hex_of_file(p)});
    emit(rendered, a.out_path, command_line, inputs, "report");
    return 0;
}

struct CompareArgs {
    std::vector<std::string> report_paths;
    std::string pairing_spec;
    std::string baselines = "builtin";
    std::string format = "text";
    std::string json_path;
    std::string out_path;
};

int cmd_compare(const CompareArgs& a, const std::string& command_line) {
    if (a.format != "text" && a.format != "markdown")
        throw InvalidConfig("unknown --format '" + a.format + "'");
    const auto trials = stage("read reports", [&] { return load_trial_reports(a.report_paths); });

    const std::vector<BaselineEntry> baselines =
        a.baselines == "builtin" ? builtin_baselines()
                                 : stage("read baselines", [&] {
                                       return load_baselines_csv(a.baselines);
                                   });

    std::vector<TrialAccuracy> accuracies;
    for (const auto& t : trials)
        accuracies.push_back({std::string(to_string(t.set_id)) + "/" + to_string(t.method),
                              t.test.accuracy});

    const auto pairing = parse_pairing(a.pairing_spec, baselines);
    const auto comparison =
        stage("compare", [&] { return compare_to_baselines(accuracies, baselines, pairing); });

    const std::string rendered = a.format == "markdown"
                                     ? render_comparison_markdown(comparison, baselines)
                                     : render_comparison_text(comparison, baselines);

    std::vector<FileDigest> inputs;
    for (const auto& p : a.report_paths) inputs.push_back({p, Sha256::hex_of_file(p)});
    if (a.baselines != "builtin")
        inputs.push_back({a.baselines, Sha256::hex_of_file(a.baselines)});

    if (!a.json_path.empty()) {
        write_file_atomic(a.json_path, comparison_to_json(comparison).dump(2) + "\n");
        RunManifest m;
        m.command = command_line;
        m.inputs = inputs;
        m.outputs = {a.json_path};
        m.timestamp = now_utc_iso8601();
        write_manifest(m, manifest_path_for(a.json_path, "compare"));
        log_line("wrote " + a.json_path);
    }
    emit(rendered, a.out_path, command_line, inputs, "compare");
    return 0;
}

int exit_code_for_current_exception() {
    try {
        throw;
    } catch (const InvalidConfig&) {
        return 2;
    } catch (const UnsupportedVersion&) {
        return 2;
    } catch (const UnsupportedCombination&) {
        return 2;
    } catch (const ZeroVariance&) {
        return 5;
    } catch (const IoError&) {
        return 3;
    } catch (const nlohmann::json::exception&) {
        return 2;
    } catch (...) {
        return 4;
    }
}

template <typename F>
int run_command(F&& body) {
    try {
        return body();
    } catch (const ZeroVariance& e) {
        std::cerr << "error: statistical degeneracy: " << e.what() << "\n";
        return 5;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return exit_code_for_current_exception();
    }
}

}  // namespace

int main(int argc, char** argv) {
    const std::string command_line = joined_command(argc, argv);

    CLI::App app{"scanforest: port-scan detection toolkit"};
    app.set_version_flag("--version", std::string(kVersion));
    app.require_subcommand(1);

    GenerateArgs gen;
    auto* generate = app.add_subcommand("generate", "Generate a synthetic flow corpus CSV");
    generate->add_option("--config", gen.config_path, "Generator config JSON")->required();
    generate->add_option("--out", gen.out_path, "Output CSV path")->required();
    gen.seed_opt = generate->add_option("--seed", gen.seed, "Override the config seed");

    PreprocessArgs pre;
    auto* preprocess_cmd =
        app.add_subcommand("preprocess", "Clean a flow CSV (drop NaN rows, deduplicate)");
    preprocess_cmd->add_option("--data", pre.data_path, "Input CSV")->required();
    preprocess_cmd->add_option("--out", pre.out_path, "Output CSV")->required();
    preprocess_cmd->add_flag("--keep-duplicates", pre.keep_duplicates,
                             "Keep exact duplicate rows");
    preprocess_cmd->add_flag("--keep-non-finite", pre.keep_non_finite,
                             "Keep rows with NaN or infinite features");

    TrialArgs trial;
    auto* trial_cmd = app.add_subcommand(
        "trial", "Run the trial protocol: split, cross-validated search, refit, evaluate");
    trial_cmd->add_option("--data", trial.data_path, "Corpus CSV")->required();
    trial_cmd->add_option("--set", trial.set_name, "Hyperparameter set: A|B|C|D|custom");
    trial_cmd->add_option("--method", trial.method_name, "Search method: grid|random|both");
    trial_cmd->add_option("--space", trial.space_path, "Search space JSON for --set custom");
    trial_cmd->add_option("--out", trial.out_path, "Output report JSON")->required();
    trial.seed_opt = trial_cmd->add_option("--seed", trial.seed, "Master seed (default 0)");
    trial_cmd->add_option("--test-fraction", trial.test_fraction, "Held-out fraction")
        ->check(CLI::Range(0.01, 0.99));
    trial_cmd->add_option("--folds", trial.folds, "Cross-validation folds")
        ->check(CLI::Range(2, 100));
    trial_cmd->add_option("--iterations", trial.iterations, "Random search candidate count")
        ->check(CLI::PositiveNumber);

    ReportArgs rep;
    auto* report_cmd = app.add_subcommand("report", "Render trial report JSONs as tables");
    report_cmd->add_option("reports", rep.report_paths, "Report JSON paths")
        ->required()
        ->expected(-1);
    report_cmd->add_option("--format", rep.format, "text|markdown");
    report_cmd->add_option("--out", rep.out_path, "Write output here instead of stdout");

    CompareArgs cmp;
    auto* compare_cmd =
        app.add_subcommand("compare", "Compare trial accuracies against published baselines");
    compare_cmd->add_option("reports", cmp.report_paths, "Report JSON paths")
        ->required()
        ->expected(-1);
    compare_cmd->add_option("--pairing", cmp.pairing_spec, "e.g. 0=Algaolahi,1=Baah")
        ->required();
    compare_cmd->add_option("--baselines", cmp.baselines, "'builtin' or a baselines CSV path");
    compare_cmd->add_option("--format", cmp.format, "text|markdown");
    compare_cmd->add_option("--json", cmp.json_path, "Write comparison JSON here");
    compare_cmd->add_option("--out", cmp.out_path, "Write rendered table here instead of stdout");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }

    if (generate->parsed()) return run_command([&] { return cmd_generate(gen, command_line); });
    if (preprocess_cmd->parsed())
        return run_command([&] { return cmd_preprocess(pre, command_line); });
    if (trial_cmd->parsed()) return run_command([&] { return cmd_trial(trial, command_line); });
    if (report_cmd->parsed()) return run_command([&] { return cmd_report(rep, command_line); });
    if (compare_cmd->parsed())
        return run_command([&] { return cmd_compare(cmp, command_line); });
    return 2;
}
