#pragma once
// Iterative relearning of a categorical distribution from n of its own
// samples, viewed exactly: the empirical distributions form a finite
// absorbing Markov chain whose states are the count vectors summing to
// n. Transition rows are Multinomial PMFs; the K one-hot states are
// absorbing. Expected steps to collapse come from the fundamental
// matrix, i.e. the linear system (I - Q) t = 1 over transient states.

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "collapse/rng.hpp"

namespace collapse {

using StateCounts = std::vector<std::uint32_t>;

inline constexpr std::size_t kDefaultStateCap = 50000;

// Number of count vectors over k categories summing to n: C(n+k-1, k-1).
// Returns nullopt on overflow past `limit`.
inline std::optional<std::size_t> count_state_space(std::uint32_t n, std::uint32_t k,
                                                    std::size_t limit) {
    // binomial via incremental products, bailing out early
    long double acc = 1.0L;
    for (std::uint32_t i = 1; i < k; ++i) {
        acc = acc * static_cast<long double>(n + i) / static_cast<long double>(i);
        if (acc > 2.0L * static_cast<long double>(limit)) return std::nullopt;
    }
    const auto rounded = static_cast<std::size_t>(acc + 0.5L);
    if (rounded > limit) return std::nullopt;
    return rounded;
}

// All count vectors over k categories summing to n, lexicographically
// ascending. This ordering reproduces the textbook Bernoulli chain where
// the state index equals the count of category 0.
inline std::vector<StateCounts> enumerate_states(std::uint32_t n, std::uint32_t k) {
    std::vector<StateCounts> states;
    StateCounts current(k, 0);
    // recursive descent over positions
    auto fill = [&](auto&& self, std::uint32_t pos, std::uint32_t remaining) -> void {
        if (pos + 1 == k) {
            current[pos] = remaining;
            states.push_back(current);
            return;
        }
        for (std::uint32_t c = 0; c <= remaining; ++c) {
            current[pos] = c;
            self(self, pos + 1, remaining - c);
        }
    };
    fill(fill, 0, n);
    return states;
}

struct AbsorbingChain {
    std::uint32_t n = 0;
    std::uint32_t k = 0;
    std::vector<StateCounts> states;
    Eigen::MatrixXd transition;               // row-stochastic, S x S
    std::vector<std::size_t> absorbing_indices;
    std::vector<std::size_t> transient_indices;

    std::size_t size() const { return states.size(); }

    bool is_absorbing(std::size_t state) const {
        return transition(static_cast<Eigen::Index>(state),
                          static_cast<Eigen::Index>(state)) == 1.0;
    }

    std::size_t state_index(const StateCounts& counts) const {
        auto it = std::lower_bound(states.begin(), states.end(), counts);
        if (it == states.end() || *it != counts) {
            throw std::invalid_argument("AbsorbingChain: unknown state");
        }
        return static_cast<std::size_t>(it - states.begin());
    }

    // Most balanced count vector: n/k each, remainder spread from index 0.
    std::size_t central_state_index() const {
        StateCounts counts(k, n / k);
        for (std::uint32_t r = 0; r < n % k; ++r) counts[r] += 1;
        return state_index(counts);
    }
};

namespace detail {

// log Multinomial(target; n, probs), probs given as counts/n of the
// source state. Computed with log-gamma so rows stay finite up to
// n of several hundred.
inline double log_multinomial(const StateCounts& target, const StateCounts& source,
                              std::uint32_t n) {
    double logp = std::lgamma(static_cast<double>(n) + 1.0);
    for (std::size_t c = 0; c < target.size(); ++c) {
        const double t = static_cast<double>(target[c]);
        if (source[c] == 0) {
            if (target[c] > 0) return -std::numeric_limits<double>::infinity();
            continue;  // 0^0 = 1
        }
        const double p = static_cast<double>(source[c]) / static_cast<double>(n);
        logp += t * std::log(p) - std::lgamma(t + 1.0);
    }
    return logp;
}

}  // namespace detail

// Builds the full transition matrix for sample size n over k categories.
// Throws std::length_error naming the state count when it would exceed
// state_cap.
inline AbsorbingChain build_transition_matrix(std::uint32_t n, std::uint32_t k,
                                              std::size_t state_cap = kDefaultStateCap) {
    if (n < 1) throw std::invalid_argument("build_transition_matrix: n must be >= 1");
    if (k < 2) throw std::invalid_argument("build_transition_matrix: k must be >= 2");
    const auto space = count_state_space(n, k, state_cap);
    if (!space) {
        throw std::length_error("build_transition_matrix: state space exceeds cap of " +
                                std::to_string(state_cap) + " states");
    }

    AbsorbingChain chain;
    chain.n = n;
    chain.k = k;
    chain.states = enumerate_states(n, k);
    const auto s = static_cast<Eigen::Index>(chain.states.size());
    chain.transition.resize(s, s);

    for (Eigen::Index i = 0; i < s; ++i) {
        const StateCounts& source = chain.states[static_cast<std::size_t>(i)];
        double row_sum = 0.0;
        for (Eigen::Index j = 0; j < s; ++j) {
            const double logp =
                detail::log_multinomial(chain.states[static_cast<std::size_t>(j)], source, n);
            const double p = std::isinf(logp) ? 0.0 : std::exp(logp);
            chain.transition(i, j) = p;
            row_sum += p;
        }
        chain.transition.row(i) /= row_sum;  // remove lgamma round-off
    }

    for (std::size_t i = 0; i < chain.states.size(); ++i) {
        const auto& counts = chain.states[i];
        const bool one_hot =
            std::any_of(counts.begin(), counts.end(), [n](std::uint32_t c) { return c == n; });
        if (one_hot) {
            chain.absorbing_indices.push_back(i);
        } else {
            chain.transient_indices.push_back(i);
        }
    }
    return chain;
}

struct AbsorptionReport {
    // Expected steps to absorption, ordered like transient_indices.
    Eigen::VectorXd expected_steps;
    // 1-norm condition estimate of (I - Q).
    double fundamental_matrix_condition = 0.0;

    double max_expected_steps() const {
        return expected_steps.size() == 0 ? 0.0 : expected_steps.maxCoeff();
    }
};

// Solves (I - Q) t = 1 over the transient states. For a chain with no
// transient states the report is empty.
inline AbsorptionReport expected_absorption_steps(const AbsorbingChain& chain) {
    AbsorptionReport report;
    const auto t = static_cast<Eigen::Index>(chain.transient_indices.size());
    if (t == 0) return report;

    Eigen::MatrixXd system(t, t);  // I - Q
    for (Eigen::Index r = 0; r < t; ++r) {
        const auto row = static_cast<Eigen::Index>(chain.transient_indices[r]);
        for (Eigen::Index c = 0; c < t; ++c) {
            const auto col = static_cast<Eigen::Index>(chain.transient_indices[c]);
            system(r, c) = (r == c ? 1.0 : 0.0) - chain.transition(row, col);
        }
    }

    Eigen::PartialPivLU<Eigen::MatrixXd> lu(system);
    const double rcond = lu.rcond();
    if (!(rcond > 0.0) || !std::isfinite(rcond)) {
        throw std::runtime_error("expected_absorption_steps: (I - Q) numerically singular");
    }
    report.fundamental_matrix_condition = 1.0 / rcond;
    report.expected_steps = lu.solve(Eigen::VectorXd::Ones(t));
    if (!report.expected_steps.allFinite() || report.expected_steps.minCoeff() <= 0.0) {
        throw std::runtime_error("expected_absorption_steps: solve produced invalid steps");
    }
    return report;
}

// Random walk from `start` until an absorbing state is reached; returns
// the number of steps taken, or nullopt if max_steps ran out first.
inline std::optional<std::uint64_t> simulate_absorption(const AbsorbingChain& chain,
                                                        std::size_t start,
                                                        std::uint64_t max_steps, Rng& rng) {
    if (start >= chain.size()) {
        throw std::invalid_argument("simulate_absorption: start index out of range");
    }
    std::size_t state = start;
    for (std::uint64_t step = 0; step <= max_steps; ++step) {
        if (chain.is_absorbing(state)) return step;
        if (step == max_steps) break;
        const double u = rng.uniform();
        const auto row = static_cast<Eigen::Index>(state);
        double acc = 0.0;
        std::size_t next = chain.size() - 1;
        for (Eigen::Index j = 0; j < chain.transition.cols(); ++j) {
            acc += chain.transition(row, j);
            if (u < acc) {
                next = static_cast<std::size_t>(j);
                break;
            }
        }
        state = next;
    }
    return std::nullopt;
}

}  // namespace collapse
