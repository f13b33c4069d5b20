#pragma once
// Iterative relearning engines. Three categorical regimes:
//   pure              — refit on n fresh samples from the current model;
//                       an absorbing random walk that ends in a one-hot
//                       state
//   retain_augmented  — refit on fixed retain counts plus n generated
//                       samples; non-retain categories lose all mass
//   analytic_mixture  — the error-free recursion
//                       p_{t+1} = alpha/(1+alpha) p_r + 1/(1+alpha) p_t
//                       with closed form
//                       p_t = [1-(1/(1+alpha))^t] p_r + (1/(1+alpha))^t p_0
// plus the Gaussian-mixture analog driven by EM refits.

#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <stdexcept>
#include <vector>

#include "collapse/categorical.hpp"
#include "collapse/gmm.hpp"
#include "collapse/rng.hpp"

namespace collapse {

enum class RelearnMode { pure, retain_augmented, analytic_mixture };

inline const char* to_string(RelearnMode mode) {
    switch (mode) {
        case RelearnMode::pure: return "pure";
        case RelearnMode::retain_augmented: return "retain_augmented";
        case RelearnMode::analytic_mixture: return "analytic_mixture";
    }
    return "?";
}

struct RelearnConfig {
    RelearnMode mode = RelearnMode::pure;
    std::uint64_t n_generated = 0;              // sampling modes
    std::optional<SampleCounts> retain_counts;  // retain_augmented only
    double alpha = 0.0;                         // analytic_mixture only
    std::size_t iterations = 0;
    bool stop_on_absorption = true;
};

// Optional reference distributions tracked alongside a run.
struct RelearnReferences {
    std::optional<Categorical> retain;  // analytic target p_r; enables the TV column
    std::optional<Categorical> forget;  // p_f; enables the KL column
};

struct CategoricalTraceRow {
    std::size_t iteration = 0;  // 1-based
    std::vector<double> probs;
    double non_retain_mass = std::numeric_limits<double>::quiet_NaN();
    double kl_to_reference = std::numeric_limits<double>::quiet_NaN();
    double tv_to_retain = std::numeric_limits<double>::quiet_NaN();
    bool absorbed = false;
};

struct RelearnTrace {
    std::vector<CategoricalTraceRow> rows;
    bool absorbed = false;
    std::size_t absorbed_at = 0;  // iteration of first absorption, if any
};

// One pure relearning step: MLE refit on n fresh samples.
inline Categorical relearn_step_pure(const Categorical& current, std::uint64_t n, Rng& rng) {
    return fit_categorical_mle(sample_categorical(current, n, rng));
}

// One retain-augmented step: MLE refit on retain counts plus n generated
// samples, i.e. p_k = (retain_k + generated_k) / (retain_n + n).
inline Categorical relearn_step_retain(const Categorical& current, const SampleCounts& retain,
                                       std::uint64_t n, Rng& rng) {
    if (retain.size() != current.size()) {
        throw std::invalid_argument("relearn_step_retain: dimension mismatch");
    }
    SampleCounts combined = sample_categorical(current, n, rng);
    for (std::size_t k = 0; k < combined.size(); ++k) {
        combined.counts[k] += retain.counts[k];
    }
    return fit_categorical_mle(combined);
}

// One error-free mixture step.
inline Categorical analytic_mixture_step(const Categorical& p_t, const Categorical& p_r,
                                         double alpha) {
    if (p_t.size() != p_r.size()) {
        throw std::invalid_argument("analytic_mixture_step: dimension mismatch");
    }
    if (!(alpha >= 0.0)) {
        throw std::invalid_argument("analytic_mixture_step: alpha must be >= 0");
    }
    const double w_retain = alpha / (1.0 + alpha);
    const double w_current = 1.0 / (1.0 + alpha);
    std::vector<double> probs(p_t.size());
    for (std::size_t k = 0; k < p_t.size(); ++k) {
        probs[k] = w_retain * p_r[k] + w_current * p_t[k];
    }
    return Categorical(std::move(probs));
}

// Closed form of the analytic recursion after t steps.
inline Categorical closed_form_pt(const Categorical& p_0, const Categorical& p_r, double alpha,
                                  std::uint64_t t) {
    if (p_0.size() != p_r.size()) {
        throw std::invalid_argument("closed_form_pt: dimension mismatch");
    }
    if (!(alpha >= 0.0)) {
        throw std::invalid_argument("closed_form_pt: alpha must be >= 0");
    }
    const double decay = std::pow(1.0 / (1.0 + alpha), static_cast<double>(t));
    std::vector<double> probs(p_0.size());
    for (std::size_t k = 0; k < p_0.size(); ++k) {
        probs[k] = (1.0 - decay) * p_r[k] + decay * p_0[k];
    }
    return Categorical(std::move(probs));
}

namespace detail {

inline double non_retain_mass(const Categorical& dist, const SampleCounts& retain) {
    double mass = 0.0;
    for (std::size_t k = 0; k < dist.size(); ++k) {
        if (retain.counts[k] == 0) mass += dist[k];
    }
    return mass;
}

}  // namespace detail

// Runs the configured step for config.iterations iterations, recording
// one trace row per executed step. Absorption (pure: one-hot state;
// retain: non-retain mass exactly zero) stops the loop early when
// stop_on_absorption is set.
inline RelearnTrace run_relearn_loop(const RelearnConfig& config, const Categorical& initial,
                                     const RelearnReferences& references, Rng& rng) {
    if (config.iterations == 0) {
        throw std::invalid_argument("run_relearn_loop: iterations must be >= 1");
    }
    const bool sampling_mode = config.mode != RelearnMode::analytic_mixture;
    if (sampling_mode && config.n_generated == 0) {
        throw std::invalid_argument("run_relearn_loop: n_generated must be >= 1");
    }
    if (config.mode == RelearnMode::retain_augmented) {
        if (!config.retain_counts || config.retain_counts->total() == 0) {
            throw std::invalid_argument("run_relearn_loop: retain counts required");
        }
        if (config.retain_counts->size() != initial.size()) {
            throw std::invalid_argument("run_relearn_loop: retain count dimension mismatch");
        }
    }
    if (config.mode == RelearnMode::analytic_mixture) {
        if (!references.retain) {
            throw std::invalid_argument("run_relearn_loop: analytic mode needs a retain reference");
        }
        if (references.retain->size() != initial.size()) {
            throw std::invalid_argument("run_relearn_loop: retain reference dimension mismatch");
        }
    }
    if (references.forget && references.forget->size() != initial.size()) {
        throw std::invalid_argument("run_relearn_loop: forget reference dimension mismatch");
    }

    RelearnTrace trace;
    Categorical current = initial;
    for (std::size_t iter = 1; iter <= config.iterations; ++iter) {
        switch (config.mode) {
            case RelearnMode::pure:
                current = relearn_step_pure(current, config.n_generated, rng);
                break;
            case RelearnMode::retain_augmented:
                current = relearn_step_retain(current, *config.retain_counts,
                                              config.n_generated, rng);
                break;
            case RelearnMode::analytic_mixture:
                current = analytic_mixture_step(current, *references.retain, config.alpha);
                break;
        }

        CategoricalTraceRow row;
        row.iteration = iter;
        row.probs = current.probs();
        if (config.retain_counts) {
            row.non_retain_mass = detail::non_retain_mass(current, *config.retain_counts);
        }
        if (references.forget) {
            row.kl_to_reference = kl_divergence(current, *references.forget);
        }
        if (references.retain) {
            row.tv_to_retain = total_variation(current, *references.retain);
        }

        bool absorbed = false;
        if (config.mode == RelearnMode::pure) {
            absorbed = current.is_one_hot();
        } else if (config.mode == RelearnMode::retain_augmented) {
            absorbed = row.non_retain_mass == 0.0;
        }
        row.absorbed = absorbed;
        trace.rows.push_back(std::move(row));

        if (absorbed && !trace.absorbed) {
            trace.absorbed = true;
            trace.absorbed_at = iter;
        }
        if (absorbed && config.stop_on_absorption) break;
    }
    return trace;
}

// --- Gaussian-mixture relearning -----------------------------------------

enum class GmmRelearnMode { pure, retain_augmented };

inline const char* to_string(GmmRelearnMode mode) {
    return mode == GmmRelearnMode::pure ? "pure" : "retain_augmented";
}

struct GmmRelearnOptions {
    GmmRelearnMode mode = GmmRelearnMode::pure;
    std::size_t n_generated = 1000;
    std::size_t iterations = 100;
    double divergence_factor = 10.0;  // vs. the initial max component variance
    // Collapse/divergence events consider only components whose weight is
    // at least this large: a starved component parked at the variance
    // floor contributes nothing to the mixture, so it does not count as
    // distribution collapse (EM singularity events are still recorded).
    double event_weight_min = 0.01;
    EmOptions em;
    bool stop_on_event = true;  // stop once collapse or divergence is flagged
    // Optional tracking of mixture mass near a retain center.
    std::optional<Eigen::VectorXd> retain_center;
    double retain_radius = 1.0;
};

// Collapse: a component's smallest covariance eigenvalue reaches the
// variance floor. Divergence: a component's largest eigenvalue exceeds
// divergence_factor times that component's initial value. The raw flags
// consider every component; the effective flags ignore components whose
// weight has fallen below event_weight_min (a starved component parked
// at the floor no longer shapes the mixture).
struct GmmTraceRow {
    std::size_t iteration = 0;
    std::vector<double> weights;
    std::vector<double> means;  // component-major, k * d entries
    double min_variance = 0.0;  // smallest covariance eigenvalue over all components
    double max_variance = 0.0;
    // Same extremes over components with weight >= event_weight_min.
    double effective_min_variance = 0.0;
    double effective_max_variance = 0.0;
    double retain_mass = std::numeric_limits<double>::quiet_NaN();
    bool collapsed = false;
    bool diverged = false;
    bool effective_collapsed = false;
    bool effective_diverged = false;
    std::size_t singularity_events = 0;
};

struct GmmRelearnTrace {
    std::vector<GmmTraceRow> rows;
    bool collapsed = false;
    bool diverged = false;
    bool effective_collapsed = false;
    bool effective_diverged = false;
    std::size_t first_event_iteration = 0;  // first raw event, if any
    // Event thresholds, recorded for reproducibility.
    double variance_floor = 0.0;
    std::vector<double> divergence_thresholds;  // per component
};

// Mixture probability mass within `radius` of `center`. Exact (via erf)
// in 1D; in 2D this reports the summed weight of components whose mean
// lies inside the ball, a proxy adequate for well-separated clusters.
inline double mixture_mass_near(const GmmModel& model, const Eigen::VectorXd& center,
                                double radius) {
    if (center.size() != model.dim()) {
        throw std::invalid_argument("mixture_mass_near: center dimension mismatch");
    }
    double mass = 0.0;
    if (model.dim() == 1) {
        auto normal_cdf = [](double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); };
        for (const auto& c : model.components()) {
            const double sigma = std::sqrt(c.covariance(0, 0));
            const double lo = (center[0] - radius - c.mean[0]) / sigma;
            const double hi = (center[0] + radius - c.mean[0]) / sigma;
            mass += c.weight * (normal_cdf(hi) - normal_cdf(lo));
        }
    } else {
        for (const auto& c : model.components()) {
            if ((c.mean - center).norm() <= radius) mass += c.weight;
        }
    }
    return mass;
}

// Iteratively refit the model on its own samples (optionally augmented
// with fixed retain points). Collapse is flagged when the smallest
// component variance reaches the floor, divergence when the largest
// exceeds divergence_factor times the initial largest.
inline GmmRelearnTrace gmm_relearn_loop(const GmmModel& initial, const GmmRelearnOptions& options,
                                        const std::vector<Eigen::VectorXd>& retain_points,
                                        Rng& rng) {
    if (options.iterations == 0) {
        throw std::invalid_argument("gmm_relearn_loop: iterations must be >= 1");
    }
    if (options.n_generated == 0) {
        throw std::invalid_argument("gmm_relearn_loop: n_generated must be >= 1");
    }
    if (options.mode == GmmRelearnMode::retain_augmented && retain_points.empty()) {
        throw std::invalid_argument("gmm_relearn_loop: retain mode needs retain points");
    }
    for (const auto& p : retain_points) {
        if (p.size() != initial.dim()) {
            throw std::invalid_argument("gmm_relearn_loop: retain point dimension mismatch");
        }
    }

    GmmRelearnTrace trace;
    trace.variance_floor = options.em.variance_floor;
    for (const auto& c : initial.components()) {
        trace.divergence_thresholds.push_back(options.divergence_factor *
                                              detail::max_eigenvalue(c.covariance));
    }

    const double floor_cut = options.em.variance_floor * (1.0 + 1e-6);
    GmmModel current = initial;
    const std::size_t k = initial.component_count();
    for (std::size_t iter = 1; iter <= options.iterations; ++iter) {
        std::vector<Eigen::VectorXd> points = sample_gmm(current, options.n_generated, rng);
        if (options.mode == GmmRelearnMode::retain_augmented) {
            points.insert(points.end(), retain_points.begin(), retain_points.end());
        }
        EmFit fit = fit_gmm_em(points, k, rng, options.em, current);
        current = fit.model;

        GmmTraceRow row;
        row.iteration = iter;
        row.effective_min_variance = std::numeric_limits<double>::infinity();
        row.effective_max_variance = 0.0;
        for (std::size_t j = 0; j < k; ++j) {
            const auto& c = current.components()[j];
            row.weights.push_back(c.weight);
            for (Eigen::Index d = 0; d < current.dim(); ++d) row.means.push_back(c.mean[d]);
            const double low = detail::min_eigenvalue(c.covariance);
            const double high = detail::max_eigenvalue(c.covariance);
            const bool comp_collapsed = low <= floor_cut;
            const bool comp_diverged = high >= trace.divergence_thresholds[j];
            row.collapsed = row.collapsed || comp_collapsed;
            row.diverged = row.diverged || comp_diverged;
            if (c.weight >= options.event_weight_min) {
                row.effective_min_variance = std::min(row.effective_min_variance, low);
                row.effective_max_variance = std::max(row.effective_max_variance, high);
                row.effective_collapsed = row.effective_collapsed || comp_collapsed;
                row.effective_diverged = row.effective_diverged || comp_diverged;
            }
        }
        row.min_variance = current.min_component_variance();
        row.max_variance = current.max_component_variance();
        row.singularity_events = fit.singularities.size();
        if (options.retain_center) {
            row.retain_mass = mixture_mass_near(current, *options.retain_center,
                                                options.retain_radius);
        }
        const bool event = row.collapsed || row.diverged;
        if (event && trace.first_event_iteration == 0) {
            trace.first_event_iteration = iter;
        }
        trace.collapsed = trace.collapsed || row.collapsed;
        trace.diverged = trace.diverged || row.diverged;
        trace.effective_collapsed = trace.effective_collapsed || row.effective_collapsed;
        trace.effective_diverged = trace.effective_diverged || row.effective_diverged;
        trace.rows.push_back(std::move(row));

        if (event && options.stop_on_event) break;
    }
    return trace;
}

}  // namespace collapse
