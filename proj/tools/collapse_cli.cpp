// Experiment CLI. Each subcommand loads a structured-text config, runs
// one deterministic run per seed (parallel up to --workers), and writes
// trace/metric CSVs. Exit codes: 0 success, 2 config error, 1 runtime
// failure in any seed.

#include <CLI11.hpp>
#include <cstdlib>
#include <iostream>
#include <string>
#include <vector>

#include "collapse/config.hpp"
#include "collapse/experiment.hpp"

namespace {

struct SubcommandArgs {
    std::string config_path;
    std::string out_dir;
    std::string seeds;
    std::size_t workers = 0;
};

std::optional<std::vector<std::uint64_t>> parse_seed_list(const std::string& text,
                                                          std::string& error) {
    if (text.empty()) return std::nullopt;
    std::vector<std::uint64_t> seeds;
    for (const auto& piece : collapse::SectionView::split_list(text)) {
        errno = 0;
        char* end = nullptr;
        const long long value = std::strtoll(piece.c_str(), &end, 10);
        if (end == piece.c_str() || *end != '\0' || errno == ERANGE || value < 0) {
            error = "invalid seed value: '" + piece + "'";
            return std::nullopt;
        }
        seeds.push_back(static_cast<std::uint64_t>(value));
    }
    if (seeds.empty()) {
        error = "empty seed list";
        return std::nullopt;
    }
    return seeds;
}

int run_subcommand(const std::string& name, const SubcommandArgs& args) {
    collapse::CliOverrides overrides;
    if (!args.out_dir.empty()) overrides.out_dir = args.out_dir;
    if (args.workers > 0) overrides.workers = args.workers;
    std::string seed_error;
    overrides.seeds = parse_seed_list(args.seeds, seed_error);
    if (!seed_error.empty()) {
        std::cerr << "config error:\n  - --seeds: " << seed_error << "\n";
        return 2;
    }

    collapse::ExperimentConfig config;
    try {
        const auto doc = collapse::ConfigDoc::parse_file(args.config_path);
        config = collapse::parse_experiment_config(doc, name, overrides);
    } catch (const collapse::ConfigError& err) {
        std::cerr << "config error:\n";
        for (const auto& issue : err.issues) std::cerr << "  - " << issue << "\n";
        return 2;
    }

    try {
        const collapse::RunArtifacts artifacts = collapse::run_experiment(config);
        std::size_t failed = 0;
        for (const auto& outcome : artifacts.per_seed) {
            if (!outcome.ok) {
                ++failed;
                std::cerr << "seed " << outcome.seed << " failed: " << outcome.error << "\n";
            }
        }
        std::cout << collapse::kind_name(config.kind) << ": " << artifacts.per_seed.size()
                  << " seed(s), " << failed << " failed, outputs in " << config.out_dir << "\n";
        for (const auto& row : artifacts.aggregate) {
            std::cout << "  " << row.metric << ": mean " << collapse::fmt_real(row.mean)
                      << ", stddev " << collapse::fmt_real(row.stddev) << "\n";
        }
        return failed == 0 ? 0 : 1;
    } catch (const std::exception& err) {
        std::cerr << "runtime failure: " << err.what() << "\n";
        return 1;
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"collapse — iterative-relearning and collapse-based unlearning experiments"};
    app.require_subcommand(1);

    const std::vector<std::pair<std::string, std::string>> subcommands = {
        {"categorical", "pure or retain-augmented categorical relearning"},
        {"markov", "absorbing-chain transition matrix and expected collapse times"},
        {"mixture", "analytic retain-mixture recursion"},
        {"gmm", "Gaussian-mixture relearning (collapse and retain-augmented)"},
        {"curate", "best-of-n curated density updates"},
        {"qa", "tabular question-answering unlearning loop"},
    };

    std::map<std::string, SubcommandArgs> args;
    for (const auto& [name, description] : subcommands) {
        auto* sub = app.add_subcommand(name, description);
        auto& a = args[name];
        sub->add_option("--config", a.config_path, "experiment config file")->required();
        sub->add_option("--out", a.out_dir, "output directory (overrides config)");
        sub->add_option("--seeds", a.seeds, "comma-separated seed list (overrides config)");
        sub->add_option("--workers", a.workers, "parallel seed workers (overrides config)")
            ->envname("COLLAPSE_WORKERS");
    }

    CLI11_PARSE(app, argc, argv);

    for (const auto& [name, description] : subcommands) {
        if (app.got_subcommand(name)) {
            return run_subcommand(name, args[name]);
        }
    }
    return 2;
}
