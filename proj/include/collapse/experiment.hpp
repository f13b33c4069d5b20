#pragma once
// Experiment orchestration: config parsing/validation, seeded multi-run
// execution, and trace/metric serialization.
//
// Every run is deterministic in (config, seed): each seed gets its own
// rng stream derived by hashing the seed value, seeds never share
// state, and trace/metric files carry no timestamps (wall-clock data
// goes to a separate run_meta.txt). Seeds may execute on parallel
// workers; outputs are identical to sequential execution.

#include <atomic>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <memory>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "collapse/categorical.hpp"
#include "collapse/config.hpp"
#include "collapse/csv.hpp"
#include "collapse/curation.hpp"
#include "collapse/gmm.hpp"
#include "collapse/markov.hpp"
#include "collapse/qa.hpp"
#include "collapse/relearn.hpp"
#include "collapse/rng.hpp"
#include "collapse/rouge.hpp"

namespace collapse {

inline constexpr const char* kToolVersion = "collapse 0.1.0";

enum class ExperimentKind {
    categorical_pure,
    categorical_retain,
    analytic_mixture,
    markov_analysis,
    gmm_relearn,
    curated_update,
    qa_unlearn,
};

inline const char* kind_name(ExperimentKind kind) {
    switch (kind) {
        case ExperimentKind::categorical_pure: return "categorical_pure";
        case ExperimentKind::categorical_retain: return "categorical_retain";
        case ExperimentKind::analytic_mixture: return "analytic_mixture";
        case ExperimentKind::markov_analysis: return "markov_analysis";
        case ExperimentKind::gmm_relearn: return "gmm_relearn";
        case ExperimentKind::curated_update: return "curated_update";
        case ExperimentKind::qa_unlearn: return "qa_unlearn";
    }
    return "?";
}

// File-name prefix; pure/retain categorical runs share one slug.
inline const char* kind_slug(ExperimentKind kind) {
    switch (kind) {
        case ExperimentKind::categorical_pure:
        case ExperimentKind::categorical_retain: return "categorical";
        case ExperimentKind::analytic_mixture: return "mixture";
        case ExperimentKind::markov_analysis: return "markov";
        case ExperimentKind::gmm_relearn: return "gmm";
        case ExperimentKind::curated_update: return "curate";
        case ExperimentKind::qa_unlearn: return "qa";
    }
    return "?";
}

struct CategoricalParams {
    RelearnMode mode = RelearnMode::pure;
    std::vector<double> initial;
    std::uint64_t n_generated = 0;
    std::size_t iterations = 0;
    std::optional<std::vector<std::uint64_t>> retain_counts;
    std::optional<std::vector<double>> reference_retain;
    std::optional<std::vector<double>> reference_forget;
    bool stop_on_absorption = true;
};

struct MixtureParams {
    double alpha = 0.0;
    std::size_t iterations = 0;
    std::vector<double> p0;
    std::vector<double> p_retain;
    std::optional<std::vector<double>> p_forget;
};

struct MarkovParams {
    std::uint32_t n = 0;
    std::uint32_t k = 0;
    std::size_t state_cap = kDefaultStateCap;
    std::uint64_t mc_runs = 0;
    std::uint64_t max_steps = 1000000;
};

struct GmmParams {
    GmmRelearnMode mode = GmmRelearnMode::pure;
    int dim = 1;
    std::size_t components = 2;
    std::vector<double> retain_mean{-5.0};
    std::vector<double> forget_mean{5.0};
    double cluster_variance = 1.0;
    std::size_t points_per_cluster = 500;
    // Optional explicit start instead of the fit-on-joint-clusters protocol.
    std::optional<std::vector<double>> initial_means;       // components * dim
    std::optional<std::vector<double>> initial_variances;   // per component, isotropic
    std::optional<std::vector<double>> initial_weights;     // per component
    std::size_t n_generated = 1000;
    std::size_t iterations = 100;
    double variance_floor = kDefaultVarianceFloor;
    double divergence_factor = 10.0;
    double event_weight_min = 0.01;
    std::size_t em_max_iterations = 500;
    double em_tolerance = 1e-8;
    double retain_radius = 1.0;
    bool stop_on_event = true;
};

struct CurateParams {
    std::vector<double> rewards;
    std::vector<double> base;
    std::uint64_t n = 0;
    std::size_t iterations = 0;
    bool exact = true;
    std::uint64_t m_curated = 100000;
    double tau = 1.0;
    SelectorSpec selector = SelectorSpec::bt(1.0);
    std::size_t term_cap = 10'000'000;
};

struct QaParams {
    std::string dataset_path;
    std::shared_ptr<const QaDataset> dataset;
    double noise = 0.2;
    PmcConfig pmc;
};

struct ExperimentConfig {
    ExperimentKind kind = ExperimentKind::categorical_pure;
    std::vector<std::uint64_t> seeds;
    std::string out_dir = "out";
    std::size_t workers = 1;

    CategoricalParams categorical;
    MixtureParams mixture;
    MarkovParams markov;
    GmmParams gmm;
    CurateParams curate;
    QaParams qa;
};

struct CliOverrides {
    std::optional<std::string> out_dir;
    std::optional<std::vector<std::uint64_t>> seeds;
    std::optional<std::size_t> workers;
};

namespace detail {

inline std::optional<Categorical> checked_categorical(const SectionView& view,
                                                      std::string_view key,
                                                      const std::vector<double>& probs) {
    try {
        return Categorical(probs);
    } catch (const std::invalid_argument& err) {
        view.reject(key, err.what());
        return std::nullopt;
    }
}

inline void check_known_keys(const ConfigSection* section, std::string_view label,
                             const std::vector<std::string>& known, ConfigIssues& issues) {
    if (section == nullptr) return;
    for (const auto& [key, value] : section->entries) {
        bool found = false;
        for (const auto& k : known) {
            if (k == key) {
                found = true;
                break;
            }
        }
        if (!found) {
            issues.add(std::string(label) + " " + key + ": unknown key");
        }
    }
}

}  // namespace detail

// Parses and fully validates an experiment config for the given CLI
// subcommand (categorical | markov | mixture | gmm | curate | qa).
// Throws ConfigError listing every violated field.
inline ExperimentConfig parse_experiment_config(const ConfigDoc& doc,
                                                const std::string& subcommand,
                                                const CliOverrides& overrides = {}) {
    ConfigIssues issues;
    ExperimentConfig config;

    // --- shared keys ------------------------------------------------------
    SectionView top(&doc.top_level(), "top-level", issues);
    detail::check_known_keys(&doc.top_level(), "top-level",
                             {"seeds", "out_dir", "workers"}, issues);

    if (overrides.seeds) {
        config.seeds = *overrides.seeds;
    } else if (auto seeds = top.integer_list("seeds")) {
        for (long long s : *seeds) {
            if (s < 0) {
                top.reject("seeds", "seed values must be non-negative");
                break;
            }
            config.seeds.push_back(static_cast<std::uint64_t>(s));
        }
    }
    if (config.seeds.empty()) {
        issues.add("top-level seeds: at least one seed required");
    }

    config.out_dir = overrides.out_dir ? *overrides.out_dir : top.text("out_dir", "out");
    if (config.out_dir.empty()) issues.add("top-level out_dir: empty");

    if (overrides.workers) {
        config.workers = *overrides.workers;
    } else {
        const long long w = top.integer("workers", 1);
        if (w < 1) {
            top.reject("workers", "must be >= 1");
        } else {
            config.workers = static_cast<std::size_t>(w);
        }
    }

    // --- kind-specific section --------------------------------------------
    auto section_view = [&](const char* name) {
        const ConfigSection* section = doc.find(name);
        if (section == nullptr) {
            issues.add(std::string("[") + name + "]: section required");
        }
        return SectionView(section, std::string("[") + name + "]", issues);
    };

    if (subcommand == "categorical") {
        SectionView view = section_view("categorical");
        detail::check_known_keys(doc.find("categorical"), "[categorical]",
                                 {"mode", "k", "initial", "n_generated", "iterations",
                                  "retain_counts", "reference_retain", "reference_forget",
                                  "stop_on_absorption"},
                                 issues);
        auto& p = config.categorical;
        const std::string mode = view.text("mode", "pure");
        if (mode == "pure") {
            p.mode = RelearnMode::pure;
            config.kind = ExperimentKind::categorical_pure;
        } else if (mode == "retain") {
            p.mode = RelearnMode::retain_augmented;
            config.kind = ExperimentKind::categorical_retain;
        } else {
            view.reject("mode", "expected pure or retain");
        }

        if (auto initial = view.number_list("initial")) {
            if (detail::checked_categorical(view, "initial", *initial)) p.initial = *initial;
        } else if (auto k = view.integer("k")) {
            if (*k < 1) {
                view.reject("k", "must be >= 1");
            } else {
                p.initial.assign(static_cast<std::size_t>(*k),
                                 1.0 / static_cast<double>(*k));
            }
        } else {
            issues.add("[categorical]: needs either initial or k");
        }

        if (auto n = view.required_integer("n_generated")) {
            if (*n < 1) {
                view.reject("n_generated", "must be >= 1");
            } else {
                p.n_generated = static_cast<std::uint64_t>(*n);
            }
        }
        if (auto iters = view.required_integer("iterations")) {
            if (*iters < 1) {
                view.reject("iterations", "must be >= 1");
            } else {
                p.iterations = static_cast<std::size_t>(*iters);
            }
        }
        p.stop_on_absorption = view.flag("stop_on_absorption", true);

        if (p.mode == RelearnMode::retain_augmented) {
            if (auto counts = view.integer_list("retain_counts")) {
                std::vector<std::uint64_t> retain;
                bool valid = true;
                std::uint64_t total = 0;
                for (long long c : *counts) {
                    if (c < 0) {
                        view.reject("retain_counts", "counts must be non-negative");
                        valid = false;
                        break;
                    }
                    retain.push_back(static_cast<std::uint64_t>(c));
                    total += static_cast<std::uint64_t>(c);
                }
                if (valid && total == 0) {
                    view.reject("retain_counts", "must contain at least one observation");
                    valid = false;
                }
                if (valid && !p.initial.empty() && retain.size() != p.initial.size()) {
                    view.reject("retain_counts", "length differs from the distribution");
                    valid = false;
                }
                if (valid) p.retain_counts = std::move(retain);
            } else {
                issues.add("[categorical] retain_counts: required in retain mode");
            }
        }
        for (const char* key : {"reference_retain", "reference_forget"}) {
            if (auto ref = view.number_list(key)) {
                if (detail::checked_categorical(view, key, *ref)) {
                    if (!p.initial.empty() && ref->size() != p.initial.size()) {
                        view.reject(key, "length differs from the distribution");
                    } else if (std::string(key) == "reference_retain") {
                        p.reference_retain = *ref;
                    } else {
                        p.reference_forget = *ref;
                    }
                }
            }
        }
    } else if (subcommand == "mixture") {
        config.kind = ExperimentKind::analytic_mixture;
        SectionView view = section_view("mixture");
        detail::check_known_keys(doc.find("mixture"), "[mixture]",
                                 {"alpha", "iterations", "p0", "p_retain", "p_forget"}, issues);
        auto& p = config.mixture;
        if (auto alpha = view.required_number("alpha")) {
            if (!(*alpha >= 0.0)) {
                view.reject("alpha", "must be >= 0");
            } else {
                p.alpha = *alpha;
            }
        }
        if (auto iters = view.required_integer("iterations")) {
            if (*iters < 1) {
                view.reject("iterations", "must be >= 1");
            } else {
                p.iterations = static_cast<std::size_t>(*iters);
            }
        }
        if (auto p0 = view.number_list("p0")) {
            if (detail::checked_categorical(view, "p0", *p0)) p.p0 = *p0;
        } else {
            issues.add("[mixture] p0: required");
        }
        if (auto pr = view.number_list("p_retain")) {
            if (detail::checked_categorical(view, "p_retain", *pr)) {
                if (!p.p0.empty() && pr->size() != p.p0.size()) {
                    view.reject("p_retain", "length differs from p0");
                } else {
                    p.p_retain = *pr;
                }
            }
        } else {
            issues.add("[mixture] p_retain: required");
        }
        if (auto pf = view.number_list("p_forget")) {
            if (detail::checked_categorical(view, "p_forget", *pf)) {
                if (!p.p0.empty() && pf->size() != p.p0.size()) {
                    view.reject("p_forget", "length differs from p0");
                } else {
                    p.p_forget = *pf;
                }
            }
        }
    } else if (subcommand == "markov") {
        config.kind = ExperimentKind::markov_analysis;
        SectionView view = section_view("markov");
        detail::check_known_keys(doc.find("markov"), "[markov]",
                                 {"n", "k", "state_cap", "mc_runs", "max_steps"}, issues);
        auto& p = config.markov;
        if (auto n = view.required_integer("n")) {
            if (*n < 1) {
                view.reject("n", "must be >= 1");
            } else {
                p.n = static_cast<std::uint32_t>(*n);
            }
        }
        if (auto k = view.required_integer("k")) {
            if (*k < 2) {
                view.reject("k", "must be >= 2");
            } else {
                p.k = static_cast<std::uint32_t>(*k);
            }
        }
        const long long cap = view.integer("state_cap",
                                           static_cast<long long>(kDefaultStateCap));
        if (cap < 1) {
            view.reject("state_cap", "must be >= 1");
        } else {
            p.state_cap = static_cast<std::size_t>(cap);
        }
        const long long runs = view.integer("mc_runs", 0);
        if (runs < 0) {
            view.reject("mc_runs", "must be >= 0");
        } else {
            p.mc_runs = static_cast<std::uint64_t>(runs);
        }
        const long long max_steps = view.integer("max_steps", 1000000);
        if (max_steps < 1) {
            view.reject("max_steps", "must be >= 1");
        } else {
            p.max_steps = static_cast<std::uint64_t>(max_steps);
        }
        if (p.n >= 1 && p.k >= 2 && !count_state_space(p.n, p.k, p.state_cap)) {
            issues.add("[markov]: state space exceeds state_cap of " +
                       std::to_string(p.state_cap) + " states");
        }
    } else if (subcommand == "gmm") {
        config.kind = ExperimentKind::gmm_relearn;
        SectionView view = section_view("gmm");
        detail::check_known_keys(
            doc.find("gmm"), "[gmm]",
            {"mode", "dim", "components", "retain_mean", "forget_mean", "cluster_variance",
             "points_per_cluster", "initial_means", "initial_variances", "initial_weights",
             "n_generated", "iterations", "variance_floor", "divergence_factor",
             "event_weight_min", "em_max_iterations", "em_tolerance", "retain_radius",
             "stop_on_event"},
            issues);
        auto& p = config.gmm;
        const std::string mode = view.text("mode", "pure");
        if (mode == "pure") {
            p.mode = GmmRelearnMode::pure;
        } else if (mode == "retain") {
            p.mode = GmmRelearnMode::retain_augmented;
        } else {
            view.reject("mode", "expected pure or retain");
        }
        const long long dim = view.integer("dim", 1);
        if (dim != 1 && dim != 2) {
            view.reject("dim", "must be 1 or 2");
        } else {
            p.dim = static_cast<int>(dim);
        }
        const long long components = view.integer("components", 2);
        if (components < 1) {
            view.reject("components", "must be >= 1");
        } else {
            p.components = static_cast<std::size_t>(components);
        }
        if (auto rm = view.number_list("retain_mean")) p.retain_mean = *rm;
        if (auto fm = view.number_list("forget_mean")) p.forget_mean = *fm;
        if (p.retain_mean.size() != static_cast<std::size_t>(p.dim)) {
            view.reject("retain_mean", "length must equal dim");
        }
        if (p.forget_mean.size() != static_cast<std::size_t>(p.dim)) {
            view.reject("forget_mean", "length must equal dim");
        }
        p.cluster_variance = view.number("cluster_variance", 1.0);
        if (!(p.cluster_variance > 0.0)) view.reject("cluster_variance", "must be > 0");
        const long long ppc = view.integer("points_per_cluster", 500);
        if (ppc < 2) {
            view.reject("points_per_cluster", "must be >= 2");
        } else {
            p.points_per_cluster = static_cast<std::size_t>(ppc);
        }
        if (auto means = view.number_list("initial_means")) {
            if (means->size() != p.components * static_cast<std::size_t>(p.dim)) {
                view.reject("initial_means", "length must equal components * dim");
            } else {
                p.initial_means = *means;
            }
        }
        if (auto vars = view.number_list("initial_variances")) {
            bool positive = true;
            for (double v : *vars) positive = positive && v > 0.0;
            if (vars->size() != p.components || !positive) {
                view.reject("initial_variances", "needs one positive value per component");
            } else {
                p.initial_variances = *vars;
            }
        }
        if (auto weights = view.number_list("initial_weights")) {
            if (weights->size() != p.components ||
                !detail::checked_categorical(view, "initial_weights", *weights)) {
                view.reject("initial_weights", "needs one weight per component, summing to 1");
            } else {
                p.initial_weights = *weights;
            }
        }
        if (p.initial_variances && !p.initial_means) {
            view.reject("initial_variances", "requires initial_means");
        }
        if (p.initial_weights && !p.initial_means) {
            view.reject("initial_weights", "requires initial_means");
        }
        const long long n_generated = view.integer("n_generated", 1000);
        if (n_generated < 1) {
            view.reject("n_generated", "must be >= 1");
        } else {
            p.n_generated = static_cast<std::size_t>(n_generated);
        }
        const long long iterations = view.integer("iterations", 100);
        if (iterations < 1) {
            view.reject("iterations", "must be >= 1");
        } else {
            p.iterations = static_cast<std::size_t>(iterations);
        }
        p.variance_floor = view.number("variance_floor", kDefaultVarianceFloor);
        if (!(p.variance_floor > 0.0)) view.reject("variance_floor", "must be > 0");
        p.divergence_factor = view.number("divergence_factor", 10.0);
        if (!(p.divergence_factor > 1.0)) view.reject("divergence_factor", "must be > 1");
        p.event_weight_min = view.number("event_weight_min", 0.01);
        if (!(p.event_weight_min >= 0.0 && p.event_weight_min < 1.0)) {
            view.reject("event_weight_min", "must be in [0, 1)");
        }
        const long long em_iters = view.integer("em_max_iterations", 500);
        if (em_iters < 1) {
            view.reject("em_max_iterations", "must be >= 1");
        } else {
            p.em_max_iterations = static_cast<std::size_t>(em_iters);
        }
        p.em_tolerance = view.number("em_tolerance", 1e-8);
        if (!(p.em_tolerance > 0.0)) view.reject("em_tolerance", "must be > 0");
        p.retain_radius = view.number("retain_radius", 1.0);
        if (!(p.retain_radius > 0.0)) view.reject("retain_radius", "must be > 0");
        p.stop_on_event = view.flag("stop_on_event", p.mode == GmmRelearnMode::pure);
    } else if (subcommand == "curate") {
        config.kind = ExperimentKind::curated_update;
        SectionView view = section_view("curate");
        detail::check_known_keys(doc.find("curate"), "[curate]",
                                 {"rewards", "base", "n", "iterations", "method", "m_curated",
                                  "tau", "selector", "term_cap"},
                                 issues);
        auto& p = config.curate;
        if (auto rewards = view.number_list("rewards")) {
            bool finite = true;
            for (double r : *rewards) finite = finite && std::isfinite(r);
            if (!finite) {
                view.reject("rewards", "must be finite");
            } else {
                p.rewards = *rewards;
            }
        } else {
            issues.add("[curate] rewards: required");
        }
        if (auto base = view.number_list("base")) {
            if (detail::checked_categorical(view, "base", *base)) {
                if (!p.rewards.empty() && base->size() != p.rewards.size()) {
                    view.reject("base", "length differs from rewards");
                } else {
                    p.base = *base;
                }
            }
        } else if (!p.rewards.empty()) {
            p.base.assign(p.rewards.size(), 1.0 / static_cast<double>(p.rewards.size()));
        }
        if (auto n = view.required_integer("n")) {
            if (*n < 1) {
                view.reject("n", "must be >= 1");
            } else {
                p.n = static_cast<std::uint64_t>(*n);
            }
        }
        if (auto iters = view.required_integer("iterations")) {
            if (*iters < 1) {
                view.reject("iterations", "must be >= 1");
            } else {
                p.iterations = static_cast<std::size_t>(*iters);
            }
        }
        const std::string method = view.text("method", "exact");
        if (method == "exact") {
            p.exact = true;
        } else if (method == "sampled") {
            p.exact = false;
        } else {
            view.reject("method", "expected exact or sampled");
        }
        const long long m = view.integer("m_curated", 100000);
        if (m < 1) {
            view.reject("m_curated", "must be >= 1");
        } else {
            p.m_curated = static_cast<std::uint64_t>(m);
        }
        p.tau = view.number("tau", 1.0);
        if (!(p.tau > 0.0)) view.reject("tau", "must be > 0");
        const std::string selector = view.text("selector", "bt");
        if (selector == "bt") {
            p.selector = SelectorSpec::bt(p.tau);
        } else if (selector == "argmax") {
            p.selector = SelectorSpec::argmax();
        } else {
            view.reject("selector", "expected bt or argmax");
        }
        const long long cap = view.integer("term_cap", 10'000'000);
        if (cap < 1) {
            view.reject("term_cap", "must be >= 1");
        } else {
            p.term_cap = static_cast<std::size_t>(cap);
        }
        if (p.exact && !p.rewards.empty() && p.n >= 1 &&
            !detail::hn_term_count(p.rewards.size(), p.n, p.term_cap)) {
            issues.add("[curate]: exact enumeration exceeds term_cap of " +
                       std::to_string(p.term_cap) + "; use method = sampled");
        }
    } else if (subcommand == "qa") {
        config.kind = ExperimentKind::qa_unlearn;
        SectionView view = section_view("qa");
        detail::check_known_keys(doc.find("qa"), "[qa]",
                                 {"dataset", "noise", "lambda", "n_samples", "m_curated",
                                  "selector", "tau", "iterations", "eta"},
                                 issues);
        auto& p = config.qa;
        if (auto path = view.required_text("dataset")) {
            p.dataset_path = *path;
            try {
                p.dataset = std::make_shared<const QaDataset>(load_qa_dataset(*path));
            } catch (const ConfigError& err) {
                for (const auto& issue : err.issues) issues.add(issue);
            }
        }
        p.noise = view.number("noise", 0.2);
        if (!(p.noise >= 0.0 && p.noise < 1.0)) view.reject("noise", "must be in [0, 1)");
        p.pmc.lambda = view.number("lambda", 1.0);
        if (!(p.pmc.lambda >= 0.0)) view.reject("lambda", "must be >= 0");
        const long long n_samples = view.integer("n_samples", 10);
        if (n_samples < 1) {
            view.reject("n_samples", "must be >= 1");
        } else {
            p.pmc.n_samples = static_cast<std::uint64_t>(n_samples);
        }
        const long long m_curated = view.integer("m_curated", 1000);
        if (m_curated < 1) {
            view.reject("m_curated", "must be >= 1");
        } else {
            p.pmc.m_curated = static_cast<std::uint64_t>(m_curated);
        }
        const double tau = view.number("tau", 1.0);
        if (!(tau > 0.0)) view.reject("tau", "must be > 0");
        const std::string selector = view.text("selector", "argmax");
        if (selector == "argmax") {
            p.pmc.selector = SelectorSpec::argmax();
        } else if (selector == "bt") {
            p.pmc.selector = SelectorSpec::bt(tau);
        } else {
            view.reject("selector", "expected argmax or bt");
        }
        const long long iterations = view.integer("iterations", 30);
        if (iterations < 1) {
            view.reject("iterations", "must be >= 1");
        } else {
            p.pmc.iterations = static_cast<std::size_t>(iterations);
        }
        p.pmc.eta = view.number("eta", 1.0);
        if (!(p.pmc.eta > 0.0 && p.pmc.eta <= 1.0)) view.reject("eta", "must be in (0, 1]");

        if (p.dataset) {
            if (p.dataset->forget_indices().empty()) {
                issues.add("[qa] dataset: no forget questions");
            }
            if (p.dataset->retain_indices().empty()) {
                issues.add("[qa] dataset: no retain questions");
            }
            if (p.dataset->heldout_indices().empty()) {
                issues.add("[qa] dataset: no heldout questions");
            }
            bool any_paraphrase = false;
            for (const auto idx : p.dataset->forget_indices()) {
                any_paraphrase =
                    any_paraphrase ||
                    p.dataset->entries()[idx].paraphrase_reference.has_value();
            }
            if (!any_paraphrase) {
                issues.add("[qa] dataset: no paraphrase references on forget questions");
            }
            for (const auto& entry : p.dataset->entries()) {
                if (entry.vocab.size() < 4) {
                    issues.add("[qa] dataset: question " + entry.id +
                               " needs the answer plus at least 3 distractors");
                }
            }
        }
    } else {
        issues.add("unknown experiment subcommand: " + subcommand);
    }

    issues.raise_if_any();
    return config;
}

// --- execution -------------------------------------------------------------

struct SeedOutcome {
    std::uint64_t seed = 0;
    bool ok = false;
    std::string error;
    std::vector<std::pair<std::string, double>> metrics;
};

struct AggregateRow {
    std::string metric;
    double mean = 0.0;
    double stddev = 0.0;  // population standard deviation across seeds
    std::size_t seeds = 0;
};

// Mean and population standard deviation per metric over succeeded seeds.
inline std::vector<AggregateRow> emit_aggregate(const std::vector<SeedOutcome>& outcomes) {
    if (outcomes.empty()) {
        throw std::invalid_argument("emit_aggregate: no seed outcomes");
    }
    std::vector<AggregateRow> rows;
    for (const auto& outcome : outcomes) {
        if (!outcome.ok) continue;
        if (rows.empty()) {
            for (const auto& [name, value] : outcome.metrics) {
                rows.push_back({name, 0.0, 0.0, 0});
            }
        }
        for (std::size_t m = 0; m < outcome.metrics.size() && m < rows.size(); ++m) {
            rows[m].mean += outcome.metrics[m].second;
            rows[m].seeds += 1;
        }
    }
    for (auto& row : rows) {
        if (row.seeds > 0) row.mean /= static_cast<double>(row.seeds);
    }
    for (const auto& outcome : outcomes) {
        if (!outcome.ok) continue;
        for (std::size_t m = 0; m < outcome.metrics.size() && m < rows.size(); ++m) {
            const double diff = outcome.metrics[m].second - rows[m].mean;
            rows[m].stddev += diff * diff;
        }
    }
    for (auto& row : rows) {
        row.stddev = row.seeds > 0 ? std::sqrt(row.stddev / static_cast<double>(row.seeds)) : 0.0;
    }
    return rows;
}

struct RunArtifacts {
    std::vector<std::string> trace_files;   // one per succeeded seed
    std::vector<std::string> extra_files;   // seed-independent outputs
    std::string metrics_file;
    std::string aggregate_file;
    std::string config_echo_file;
    std::string meta_file;
    std::vector<SeedOutcome> per_seed;
    std::vector<AggregateRow> aggregate;
    std::string tool_version = kToolVersion;
    double wall_seconds = 0.0;

    bool all_ok() const {
        for (const auto& outcome : per_seed) {
            if (!outcome.ok) return false;
        }
        return true;
    }
};

namespace detail {

struct SeedRun {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;
    std::vector<std::pair<std::string, double>> metrics;
};

inline void probs_row_fields(CsvRow& row, const std::vector<double>& probs) {
    for (double p : probs) row.real(p);
}

// categorical / mixture shared trace emission
inline SeedRun run_categorical_seed(const CategoricalParams& params, std::uint64_t seed) {
    Rng rng(derive_stream_seed(seed, 0));
    const Categorical initial(params.initial);
    RelearnConfig config;
    config.mode = params.mode;
    config.n_generated = params.n_generated;
    config.iterations = params.iterations;
    config.stop_on_absorption = params.stop_on_absorption;
    if (params.retain_counts) config.retain_counts = SampleCounts(*params.retain_counts);
    RelearnReferences refs;
    if (params.reference_retain) refs.retain = Categorical(*params.reference_retain);
    if (params.reference_forget) refs.forget = Categorical(*params.reference_forget);

    const RelearnTrace trace = run_relearn_loop(config, initial, refs, rng);

    SeedRun run;
    run.header = {"iteration", "mode", "seed"};
    for (std::size_t k = 0; k < initial.size(); ++k) {
        run.header.push_back("p" + std::to_string(k));
    }
    run.header.insert(run.header.end(),
                      {"non_retain_mass", "kl_to_reference", "tv_to_retain", "absorbed"});

    double min_retain_margin = std::numeric_limits<double>::quiet_NaN();
    if (params.retain_counts) {
        min_retain_margin = std::numeric_limits<double>::infinity();
    }
    const double retain_total =
        params.retain_counts
            ? static_cast<double>(SampleCounts(*params.retain_counts).total() +
                                  params.n_generated)
            : 0.0;

    for (const auto& row : trace.rows) {
        CsvRow csv;
        csv.integer(static_cast<unsigned long long>(row.iteration))
            .text(to_string(params.mode))
            .integer(static_cast<unsigned long long>(seed));
        probs_row_fields(csv, row.probs);
        csv.real(row.non_retain_mass)
            .real(row.kl_to_reference)
            .real(row.tv_to_retain)
            .boolean(row.absorbed);
        run.rows.push_back(csv.fields());

        if (params.retain_counts) {
            for (std::size_t k = 0; k < row.probs.size(); ++k) {
                if ((*params.retain_counts)[k] == 0) continue;
                const double share =
                    static_cast<double>((*params.retain_counts)[k]) / retain_total;
                min_retain_margin = std::min(min_retain_margin, row.probs[k] - share);
            }
        }
    }

    const auto& last = trace.rows.back();
    run.metrics = {
        {"absorbed", trace.absorbed ? 1.0 : 0.0},
        {"iterations_run", static_cast<double>(trace.rows.size())},
        {"absorbed_at", trace.absorbed ? static_cast<double>(trace.absorbed_at) : 0.0},
        {"final_non_retain_mass", last.non_retain_mass},
        {"final_kl_to_reference", last.kl_to_reference},
        {"final_tv_to_retain", last.tv_to_retain},
        {"min_retain_margin", min_retain_margin},
    };
    return run;
}

inline SeedRun run_mixture_seed(const MixtureParams& params, std::uint64_t seed) {
    const Categorical initial(params.p0);
    const Categorical retain(params.p_retain);
    std::optional<Categorical> forget;
    if (params.p_forget) forget = Categorical(*params.p_forget);

    SeedRun run;
    run.header = {"iteration", "mode", "seed"};
    for (std::size_t k = 0; k < initial.size(); ++k) {
        run.header.push_back("p" + std::to_string(k));
    }
    run.header.insert(run.header.end(),
                      {"non_retain_mass", "kl_to_reference", "tv_to_retain", "absorbed"});

    Categorical current = initial;
    double max_gap = 0.0;
    for (std::size_t t = 1; t <= params.iterations; ++t) {
        current = analytic_mixture_step(current, retain, params.alpha);
        const Categorical closed = closed_form_pt(initial, retain, params.alpha,
                                                  static_cast<std::uint64_t>(t));
        max_gap = std::max(max_gap, total_variation(current, closed));

        CsvRow csv;
        csv.integer(static_cast<unsigned long long>(t))
            .text("analytic_mixture")
            .integer(static_cast<unsigned long long>(seed));
        probs_row_fields(csv, current.probs());
        csv.real(std::numeric_limits<double>::quiet_NaN())
            .real(forget ? kl_divergence(current, *forget)
                         : std::numeric_limits<double>::quiet_NaN())
            .real(total_variation(current, retain))
            .boolean(false);
        run.rows.push_back(csv.fields());
    }

    run.metrics = {
        {"final_tv_to_retain", total_variation(current, retain)},
        {"final_kl_to_reference",
         forget ? kl_divergence(current, *forget) : std::numeric_limits<double>::quiet_NaN()},
        {"max_closed_form_gap", max_gap},
    };
    return run;
}

struct MarkovShared {
    AbsorbingChain chain;
    AbsorptionReport report;
    std::size_t central_index = 0;
    double expected_central = 0.0;
};

inline SeedRun run_markov_seed(const MarkovParams& params, const MarkovShared& shared,
                               std::uint64_t seed) {
    Rng rng(derive_stream_seed(seed, 0));
    SeedRun run;
    run.header = {"run", "steps", "absorbed"};

    double sum = 0.0;
    double sum_sq = 0.0;
    std::uint64_t absorbed_runs = 0;
    for (std::uint64_t r = 0; r < params.mc_runs; ++r) {
        const auto steps =
            simulate_absorption(shared.chain, shared.central_index, params.max_steps, rng);
        CsvRow csv;
        csv.integer(static_cast<unsigned long long>(r))
            .integer(static_cast<unsigned long long>(steps.value_or(0)))
            .boolean(steps.has_value());
        run.rows.push_back(csv.fields());
        if (steps) {
            const double s = static_cast<double>(*steps);
            sum += s;
            sum_sq += s * s;
            ++absorbed_runs;
        }
    }

    const double mc_mean = absorbed_runs > 0 ? sum / static_cast<double>(absorbed_runs)
                                             : std::numeric_limits<double>::quiet_NaN();
    double mc_stderr = std::numeric_limits<double>::quiet_NaN();
    if (absorbed_runs > 1) {
        const double var =
            (sum_sq - sum * sum / static_cast<double>(absorbed_runs)) /
            static_cast<double>(absorbed_runs - 1);
        mc_stderr = std::sqrt(std::max(0.0, var) / static_cast<double>(absorbed_runs));
    }
    run.metrics = {
        {"mc_runs", static_cast<double>(params.mc_runs)},
        {"mc_absorbed_runs", static_cast<double>(absorbed_runs)},
        {"mc_mean_steps", mc_mean},
        {"mc_stderr", mc_stderr},
        {"expected_steps_central", shared.expected_central},
        {"expected_steps_max", shared.report.max_expected_steps()},
        {"fundamental_matrix_condition", shared.report.fundamental_matrix_condition},
    };
    return run;
}

inline SeedRun run_gmm_seed(const GmmParams& params, std::uint64_t seed) {
    Rng rng(derive_stream_seed(seed, 0));
    const Eigen::Map<const Eigen::VectorXd> retain_mean(params.retain_mean.data(),
                                                        static_cast<Eigen::Index>(params.dim));
    const Eigen::Map<const Eigen::VectorXd> forget_mean(params.forget_mean.data(),
                                                        static_cast<Eigen::Index>(params.dim));

    EmOptions em;
    em.max_iterations = params.em_max_iterations;
    em.tolerance = params.em_tolerance;
    em.variance_floor = params.variance_floor;

    auto sample_cluster = [&](const Eigen::VectorXd& mean) {
        std::vector<Eigen::VectorXd> points;
        points.reserve(params.points_per_cluster);
        const double sigma = std::sqrt(params.cluster_variance);
        for (std::size_t i = 0; i < params.points_per_cluster; ++i) {
            Eigen::VectorXd x(params.dim);
            for (int d = 0; d < params.dim; ++d) x[d] = mean[d] + sigma * rng.normal();
            points.push_back(std::move(x));
        }
        return points;
    };

    std::vector<Eigen::VectorXd> retain_points = sample_cluster(retain_mean);

    std::optional<GmmModel> initial;
    if (params.initial_means) {
        std::vector<GmmComponent> components;
        for (std::size_t j = 0; j < params.components; ++j) {
            GmmComponent c;
            c.weight = params.initial_weights
                           ? (*params.initial_weights)[j]
                           : 1.0 / static_cast<double>(params.components);
            c.mean = Eigen::VectorXd(params.dim);
            for (int d = 0; d < params.dim; ++d) {
                c.mean[d] = (*params.initial_means)[j * static_cast<std::size_t>(params.dim) +
                                                    static_cast<std::size_t>(d)];
            }
            const double var =
                params.initial_variances ? (*params.initial_variances)[j] : 1.0;
            c.covariance = Eigen::MatrixXd::Identity(params.dim, params.dim) * var;
            components.push_back(std::move(c));
        }
        initial = GmmModel(std::move(components), params.variance_floor);
    } else {
        // fit the starting model on the joint retain + forget sample
        std::vector<Eigen::VectorXd> joint = retain_points;
        const std::vector<Eigen::VectorXd> forget_points = sample_cluster(forget_mean);
        joint.insert(joint.end(), forget_points.begin(), forget_points.end());
        initial = fit_gmm_em(joint, params.components, rng, em).model;
    }

    GmmRelearnOptions options;
    options.mode = params.mode;
    options.n_generated = params.n_generated;
    options.iterations = params.iterations;
    options.divergence_factor = params.divergence_factor;
    options.event_weight_min = params.event_weight_min;
    options.em = em;
    options.stop_on_event = params.stop_on_event;
    options.retain_center = Eigen::VectorXd(retain_mean);
    options.retain_radius = params.retain_radius;

    const GmmRelearnTrace trace = gmm_relearn_loop(*initial, options, retain_points, rng);

    SeedRun run;
    run.header = {"iteration", "mode", "seed"};
    for (std::size_t j = 0; j < params.components; ++j) {
        run.header.push_back("weight" + std::to_string(j));
    }
    for (std::size_t j = 0; j < params.components; ++j) {
        for (int d = 0; d < params.dim; ++d) {
            run.header.push_back("mean" + std::to_string(j) + "_" + std::to_string(d));
        }
    }
    run.header.insert(run.header.end(),
                      {"min_variance", "max_variance", "effective_min_variance",
                       "effective_max_variance", "retain_mass", "collapsed", "diverged",
                       "effective_collapsed", "effective_diverged", "singularity_events"});

    double min_retain_mass = std::numeric_limits<double>::infinity();
    std::size_t singularities = 0;
    for (const auto& row : trace.rows) {
        CsvRow csv;
        csv.integer(static_cast<unsigned long long>(row.iteration))
            .text(to_string(params.mode))
            .integer(static_cast<unsigned long long>(seed));
        for (double w : row.weights) csv.real(w);
        for (double m : row.means) csv.real(m);
        csv.real(row.min_variance)
            .real(row.max_variance)
            .real(row.effective_min_variance)
            .real(row.effective_max_variance)
            .real(row.retain_mass)
            .boolean(row.collapsed)
            .boolean(row.diverged)
            .boolean(row.effective_collapsed)
            .boolean(row.effective_diverged)
            .integer(static_cast<unsigned long long>(row.singularity_events));
        run.rows.push_back(csv.fields());
        min_retain_mass = std::min(min_retain_mass, row.retain_mass);
        singularities += row.singularity_events;
    }

    const auto& last = trace.rows.back();
    double max_threshold = 0.0;
    for (const double t : trace.divergence_thresholds) {
        max_threshold = std::max(max_threshold, t);
    }
    run.metrics = {
        {"collapsed", trace.collapsed ? 1.0 : 0.0},
        {"diverged", trace.diverged ? 1.0 : 0.0},
        {"effective_collapsed", trace.effective_collapsed ? 1.0 : 0.0},
        {"effective_diverged", trace.effective_diverged ? 1.0 : 0.0},
        {"first_event_iteration", static_cast<double>(trace.first_event_iteration)},
        {"iterations_run", static_cast<double>(trace.rows.size())},
        {"final_min_variance", last.min_variance},
        {"final_max_variance", last.max_variance},
        {"final_effective_min_variance", last.effective_min_variance},
        {"final_effective_max_variance", last.effective_max_variance},
        {"final_retain_mass", last.retain_mass},
        {"min_retain_mass", min_retain_mass},
        {"singularity_events", static_cast<double>(singularities)},
        {"variance_floor", trace.variance_floor},
        {"max_divergence_threshold", max_threshold},
    };
    return run;
}

inline SeedRun run_curate_seed(const CurateParams& params, std::uint64_t seed) {
    Rng rng(derive_stream_seed(seed, 0));
    Categorical current(params.base);
    std::size_t best = 0;
    for (std::size_t i = 1; i < params.rewards.size(); ++i) {
        if (params.rewards[i] > params.rewards[best]) best = i;
    }

    HnOptions hn;
    hn.exact = true;
    hn.term_cap = params.term_cap;

    SeedRun run;
    run.header = {"iteration", "seed"};
    for (std::size_t k = 0; k < current.size(); ++k) {
        run.header.push_back("p" + std::to_string(k));
    }
    run.header.insert(run.header.end(),
                      {"reward_mean", "reward_variance", "max_reward_mass"});

    for (std::size_t t = 1; t <= params.iterations; ++t) {
        if (params.exact) {
            CuratedUpdate update(current, params.rewards, params.n, params.tau);
            current = apply_hn_update(update, hn);
        } else {
            current = curated_refit_step(current, params.rewards, params.n, params.m_curated,
                                         params.selector, rng);
        }
        const RewardMoments moments = reward_moments(current, params.rewards);
        CsvRow csv;
        csv.integer(static_cast<unsigned long long>(t))
            .integer(static_cast<unsigned long long>(seed));
        probs_row_fields(csv, current.probs());
        csv.real(moments.mean).real(moments.variance).real(current[best]);
        run.rows.push_back(csv.fields());
    }

    const RewardMoments final_moments = reward_moments(current, params.rewards);
    run.metrics = {
        {"final_reward_mean", final_moments.mean},
        {"final_reward_variance", final_moments.variance},
        {"final_max_reward_mass", current[best]},
        {"reward_gap", std::exp(params.rewards[best]) - final_moments.mean},
    };
    return run;
}

inline SeedRun run_qa_seed(const QaParams& params, std::uint64_t seed) {
    Rng rng(derive_stream_seed(seed, 0));
    const QaDataset& dataset = *params.dataset;
    TabularQaModel model = init_memorized_model(dataset, params.noise, rng);

    SeedRun run;
    run.header = {"iteration", "seed", "score_forget", "score_paraphrased",
                  "score_retain", "score_heldout", "unlearn_quality", "utility",
                  "forget_gt_mass", "forget_reward_mean", "forget_reward_variance"};

    auto forget_diagnostics = [&](const TabularQaModel& m, double& gt_mass, double& r_mean,
                                  double& r_var) {
        gt_mass = 0.0;
        r_mean = 0.0;
        r_var = 0.0;
        for (const std::size_t idx : dataset.forget_indices()) {
            const QaEntry& entry = dataset.entries()[idx];
            const Categorical& cond = m.conditional(entry.id);
            gt_mass += cond[entry.answer_index()];
            const RewardMoments moments = reward_moments(cond, answer_rewards(entry));
            r_mean += moments.mean;
            r_var += moments.variance;
        }
        const double count = static_cast<double>(dataset.forget_indices().size());
        gt_mass /= count;
        r_mean /= count;
        r_var /= count;
    };

    auto emit_row = [&](std::size_t iteration, const TabularQaModel& m) {
        const MetricsReport report = evaluate_metrics(m, dataset);
        double gt_mass = 0.0;
        double r_mean = 0.0;
        double r_var = 0.0;
        forget_diagnostics(m, gt_mass, r_mean, r_var);
        CsvRow csv;
        csv.integer(static_cast<unsigned long long>(iteration))
            .integer(static_cast<unsigned long long>(seed))
            .real(report.score_forget)
            .real(report.score_paraphrased)
            .real(report.score_retain)
            .real(report.score_heldout)
            .real(report.unlearn_quality)
            .real(report.utility)
            .real(gt_mass)
            .real(r_mean)
            .real(r_var);
        run.rows.push_back(csv.fields());
        return report;
    };

    emit_row(0, model);
    MetricsReport report;
    for (std::size_t t = 1; t <= params.pmc.iterations; ++t) {
        model = pmc_unlearn_step(model, dataset, params.pmc, rng);
        report = emit_row(t, model);
    }

    double gt_mass = 0.0;
    double r_mean = 0.0;
    double r_var = 0.0;
    forget_diagnostics(model, gt_mass, r_mean, r_var);
    run.metrics = {
        {"unlearn_quality", report.unlearn_quality},
        {"utility", report.utility},
        {"score_forget", report.score_forget},
        {"score_paraphrased", report.score_paraphrased},
        {"score_retain", report.score_retain},
        {"score_heldout", report.score_heldout},
        {"forget_gt_mass", gt_mass},
        {"forget_reward_mean", r_mean},
        {"forget_reward_variance", r_var},
    };
    return run;
}

inline std::string echo_line(const std::string& key, const std::string& value) {
    return key + " = " + value + "\n";
}

inline std::string render_echo(const ExperimentConfig& config) {
    std::string out;
    out += "# resolved experiment configuration\n";
    out += echo_line("tool_version", kToolVersion);
    out += echo_line("kind", kind_name(config.kind));
    std::string seeds;
    for (std::size_t i = 0; i < config.seeds.size(); ++i) {
        if (i > 0) seeds += ", ";
        seeds += std::to_string(config.seeds[i]);
    }
    out += echo_line("seeds", seeds);

    auto list = [](const std::vector<double>& values) {
        std::string s;
        for (std::size_t i = 0; i < values.size(); ++i) {
            if (i > 0) s += ", ";
            s += fmt_real(values[i]);
        }
        return s;
    };

    switch (config.kind) {
        case ExperimentKind::categorical_pure:
        case ExperimentKind::categorical_retain: {
            const auto& p = config.categorical;
            out += "\n[categorical]\n";
            out += echo_line("mode", p.mode == RelearnMode::pure ? "pure" : "retain");
            out += echo_line("initial", list(p.initial));
            out += echo_line("n_generated", std::to_string(p.n_generated));
            out += echo_line("iterations", std::to_string(p.iterations));
            out += echo_line("stop_on_absorption", p.stop_on_absorption ? "true" : "false");
            if (p.retain_counts) {
                std::string counts;
                for (std::size_t i = 0; i < p.retain_counts->size(); ++i) {
                    if (i > 0) counts += ", ";
                    counts += std::to_string((*p.retain_counts)[i]);
                }
                out += echo_line("retain_counts", counts);
            }
            if (p.reference_retain) out += echo_line("reference_retain", list(*p.reference_retain));
            if (p.reference_forget) out += echo_line("reference_forget", list(*p.reference_forget));
            break;
        }
        case ExperimentKind::analytic_mixture: {
            const auto& p = config.mixture;
            out += "\n[mixture]\n";
            out += echo_line("alpha", fmt_real(p.alpha));
            out += echo_line("iterations", std::to_string(p.iterations));
            out += echo_line("p0", list(p.p0));
            out += echo_line("p_retain", list(p.p_retain));
            if (p.p_forget) out += echo_line("p_forget", list(*p.p_forget));
            break;
        }
        case ExperimentKind::markov_analysis: {
            const auto& p = config.markov;
            out += "\n[markov]\n";
            out += echo_line("n", std::to_string(p.n));
            out += echo_line("k", std::to_string(p.k));
            out += echo_line("state_cap", std::to_string(p.state_cap));
            out += echo_line("mc_runs", std::to_string(p.mc_runs));
            out += echo_line("max_steps", std::to_string(p.max_steps));
            break;
        }
        case ExperimentKind::gmm_relearn: {
            const auto& p = config.gmm;
            out += "\n[gmm]\n";
            out += echo_line("mode", p.mode == GmmRelearnMode::pure ? "pure" : "retain");
            out += echo_line("dim", std::to_string(p.dim));
            out += echo_line("components", std::to_string(p.components));
            out += echo_line("retain_mean", list(p.retain_mean));
            out += echo_line("forget_mean", list(p.forget_mean));
            out += echo_line("cluster_variance", fmt_real(p.cluster_variance));
            out += echo_line("points_per_cluster", std::to_string(p.points_per_cluster));
            if (p.initial_means) out += echo_line("initial_means", list(*p.initial_means));
            if (p.initial_variances) {
                out += echo_line("initial_variances", list(*p.initial_variances));
            }
            if (p.initial_weights) out += echo_line("initial_weights", list(*p.initial_weights));
            out += echo_line("n_generated", std::to_string(p.n_generated));
            out += echo_line("iterations", std::to_string(p.iterations));
            out += echo_line("variance_floor", fmt_real(p.variance_floor));
            out += echo_line("divergence_factor", fmt_real(p.divergence_factor));
            out += echo_line("event_weight_min", fmt_real(p.event_weight_min));
            out += echo_line("em_max_iterations", std::to_string(p.em_max_iterations));
            out += echo_line("em_tolerance", fmt_real(p.em_tolerance));
            out += echo_line("retain_radius", fmt_real(p.retain_radius));
            out += echo_line("stop_on_event", p.stop_on_event ? "true" : "false");
            break;
        }
        case ExperimentKind::curated_update: {
            const auto& p = config.curate;
            out += "\n[curate]\n";
            out += echo_line("rewards", list(p.rewards));
            out += echo_line("base", list(p.base));
            out += echo_line("n", std::to_string(p.n));
            out += echo_line("iterations", std::to_string(p.iterations));
            out += echo_line("method", p.exact ? "exact" : "sampled");
            out += echo_line("m_curated", std::to_string(p.m_curated));
            out += echo_line("tau", fmt_real(p.tau));
            out += echo_line("selector",
                             p.selector.kind == SelectorSpec::Kind::argmax ? "argmax" : "bt");
            break;
        }
        case ExperimentKind::qa_unlearn: {
            const auto& p = config.qa;
            out += "\n[qa]\n";
            out += echo_line("dataset", p.dataset_path);
            out += echo_line("noise", fmt_real(p.noise));
            out += echo_line("lambda", fmt_real(p.pmc.lambda));
            out += echo_line("n_samples", std::to_string(p.pmc.n_samples));
            out += echo_line("m_curated", std::to_string(p.pmc.m_curated));
            out += echo_line("selector",
                             p.pmc.selector.kind == SelectorSpec::Kind::argmax ? "argmax" : "bt");
            out += echo_line("tau", fmt_real(p.pmc.selector.tau));
            out += echo_line("iterations", std::to_string(p.pmc.iterations));
            out += echo_line("eta", fmt_real(p.pmc.eta));
            break;
        }
    }
    return out;
}

}  // namespace detail

// Executes one run per seed (deterministic per seed, parallel up to
// config.workers), writes one trace CSV per seed plus per-seed metrics,
// an aggregate CSV, and a config echo. Module errors abort only the
// offending seed.
inline RunArtifacts run_experiment(const ExperimentConfig& config) {
    namespace fs = std::filesystem;
    const auto started = std::chrono::steady_clock::now();
    fs::create_directories(config.out_dir);

    RunArtifacts artifacts;
    const std::string slug = kind_slug(config.kind);
    const fs::path out_dir(config.out_dir);

    // seed-independent precomputation + outputs
    std::optional<detail::MarkovShared> markov_shared;
    if (config.kind == ExperimentKind::markov_analysis) {
        detail::MarkovShared shared{
            build_transition_matrix(config.markov.n, config.markov.k, config.markov.state_cap),
            {},
            0,
            0.0};
        shared.report = expected_absorption_steps(shared.chain);
        shared.central_index = shared.chain.central_state_index();
        for (std::size_t t = 0; t < shared.chain.transient_indices.size(); ++t) {
            if (shared.chain.transient_indices[t] == shared.central_index) {
                shared.expected_central = shared.report.expected_steps[
                    static_cast<Eigen::Index>(t)];
            }
        }

        const fs::path transition_path = out_dir / (slug + "_transition.csv");
        {
            CsvWriter writer(transition_path.string());
            std::vector<std::string> header{"state"};
            for (std::size_t j = 0; j < shared.chain.size(); ++j) {
                header.push_back("to" + std::to_string(j));
            }
            writer.write_row(header);
            for (std::size_t i = 0; i < shared.chain.size(); ++i) {
                CsvRow row;
                std::string label;
                for (std::size_t c = 0; c < shared.chain.states[i].size(); ++c) {
                    if (c > 0) label += '|';
                    label += std::to_string(shared.chain.states[i][c]);
                }
                row.text(label);
                for (std::size_t j = 0; j < shared.chain.size(); ++j) {
                    row.real(shared.chain.transition(static_cast<Eigen::Index>(i),
                                                     static_cast<Eigen::Index>(j)));
                }
                writer.write_row(row.fields());
            }
        }
        artifacts.extra_files.push_back(transition_path.string());

        const fs::path absorption_path = out_dir / (slug + "_absorption.csv");
        {
            CsvWriter writer(absorption_path.string());
            writer.write_row({"state", "expected_steps"});
            for (std::size_t t = 0; t < shared.chain.transient_indices.size(); ++t) {
                const auto& counts = shared.chain.states[shared.chain.transient_indices[t]];
                std::string label;
                for (std::size_t c = 0; c < counts.size(); ++c) {
                    if (c > 0) label += '|';
                    label += std::to_string(counts[c]);
                }
                CsvRow row;
                row.text(label).real(shared.report.expected_steps[static_cast<Eigen::Index>(t)]);
                writer.write_row(row.fields());
            }
        }
        artifacts.extra_files.push_back(absorption_path.string());
        markov_shared = std::move(shared);
    }

    // per-seed execution
    artifacts.per_seed.resize(config.seeds.size());
    std::vector<std::string> trace_paths(config.seeds.size());
    std::atomic<std::size_t> cursor{0};

    auto worker = [&]() {
        while (true) {
            const std::size_t index = cursor.fetch_add(1);
            if (index >= config.seeds.size()) break;
            const std::uint64_t seed = config.seeds[index];
            SeedOutcome outcome;
            outcome.seed = seed;
            try {
                detail::SeedRun run;
                switch (config.kind) {
                    case ExperimentKind::categorical_pure:
                    case ExperimentKind::categorical_retain:
                        run = detail::run_categorical_seed(config.categorical, seed);
                        break;
                    case ExperimentKind::analytic_mixture:
                        run = detail::run_mixture_seed(config.mixture, seed);
                        break;
                    case ExperimentKind::markov_analysis:
                        run = detail::run_markov_seed(config.markov, *markov_shared, seed);
                        break;
                    case ExperimentKind::gmm_relearn:
                        run = detail::run_gmm_seed(config.gmm, seed);
                        break;
                    case ExperimentKind::curated_update:
                        run = detail::run_curate_seed(config.curate, seed);
                        break;
                    case ExperimentKind::qa_unlearn:
                        run = detail::run_qa_seed(config.qa, seed);
                        break;
                }
                const fs::path trace_path =
                    out_dir / (slug + "_seed" + std::to_string(seed) + ".csv");
                CsvWriter writer(trace_path.string());
                writer.write_row(run.header);
                for (const auto& row : run.rows) writer.write_row(row);
                trace_paths[index] = trace_path.string();
                outcome.ok = true;
                outcome.metrics = std::move(run.metrics);
            } catch (const std::exception& err) {
                outcome.ok = false;
                outcome.error = err.what();
            }
            artifacts.per_seed[index] = std::move(outcome);
        }
    };

    const std::size_t worker_count = std::max<std::size_t>(
        1, std::min(config.workers, config.seeds.size()));
    if (worker_count == 1) {
        worker();
    } else {
        std::vector<std::thread> threads;
        threads.reserve(worker_count);
        for (std::size_t w = 0; w < worker_count; ++w) threads.emplace_back(worker);
        for (auto& t : threads) t.join();
    }

    for (const auto& path : trace_paths) {
        if (!path.empty()) artifacts.trace_files.push_back(path);
    }

    // per-seed metrics table
    const fs::path metrics_path = out_dir / (slug + "_metrics.csv");
    {
        CsvWriter writer(metrics_path.string());
        std::vector<std::string> header{"seed", "status"};
        for (const auto& outcome : artifacts.per_seed) {
            if (outcome.ok) {
                for (const auto& [name, value] : outcome.metrics) header.push_back(name);
                break;
            }
        }
        header.push_back("error");
        writer.write_row(header);
        for (const auto& outcome : artifacts.per_seed) {
            CsvRow row;
            row.integer(static_cast<unsigned long long>(outcome.seed))
                .text(outcome.ok ? "ok" : "error");
            if (outcome.ok) {
                for (const auto& [name, value] : outcome.metrics) row.real(value);
            } else {
                for (std::size_t m = 2; m + 1 < header.size(); ++m) row.text("");
            }
            std::string message = outcome.error;
            for (char& c : message) {
                if (c == ',' || c == '\n') c = ';';
            }
            row.text(message);
            writer.write_row(row.fields());
        }
    }
    artifacts.metrics_file = metrics_path.string();

    // aggregate
    artifacts.aggregate = emit_aggregate(artifacts.per_seed);
    const fs::path aggregate_path = out_dir / (slug + "_aggregate.csv");
    {
        CsvWriter writer(aggregate_path.string());
        writer.write_row({"metric", "mean", "stddev", "seeds"});
        for (const auto& row : artifacts.aggregate) {
            CsvRow csv;
            csv.text(row.metric)
                .real(row.mean)
                .real(row.stddev)
                .integer(static_cast<unsigned long long>(row.seeds));
            writer.write_row(csv.fields());
        }
    }
    artifacts.aggregate_file = aggregate_path.string();

    // config echo (deterministic) and run metadata (timing lives here)
    const fs::path echo_path = out_dir / "config_echo.txt";
    {
        std::ofstream echo(echo_path, std::ios::binary);
        echo << detail::render_echo(config);
    }
    artifacts.config_echo_file = echo_path.string();

    artifacts.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    const fs::path meta_path = out_dir / "run_meta.txt";
    {
        std::ofstream meta(meta_path, std::ios::binary);
        meta << "tool_version = " << kToolVersion << "\n";
        meta << "workers = " << config.workers << "\n";
        meta << "wall_seconds = " << fmt_real(artifacts.wall_seconds) << "\n";
        const auto stamp =
            std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
        meta << "finished_unix = " << stamp << "\n";
        for (const auto& outcome : artifacts.per_seed) {
            if (!outcome.ok) {
                meta << "seed_error " << outcome.seed << " = " << outcome.error << "\n";
            }
        }
    }
    artifacts.meta_file = meta_path.string();
    return artifacts;
}

}  // namespace collapse
