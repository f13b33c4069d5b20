#pragma once
// Preference curation over sampled candidates. Selection follows the
// generalized Bradley-Terry model
//     P[pick x_i] = exp(r(x_i)/tau) / sum_j exp(r(x_j)/tau)
// with an argmax shortcut (first-drawn tie-break) equivalent to the
// tau -> 0 limit. For a finite answer space the induced best-of-n
// density update has the closed form
//     p'(x) = p(x) * H(x),
//     H(x)  = E_{x_1..x_{n-1} ~ p}[ n e^{r(x)} / (e^{r(x)} + sum_i e^{r(x_i)}) ],
// evaluated exactly by enumerating opponent multisets, or by Monte
// Carlo when the enumeration would be too large. tau is folded into the
// rewards as r/tau before the closed form is evaluated.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "collapse/categorical.hpp"
#include "collapse/rng.hpp"

namespace collapse {

// Candidates in draw order with their rewards.
struct RewardedCandidates {
    std::vector<double> rewards;

    explicit RewardedCandidates(std::vector<double> r) : rewards(std::move(r)) {
        if (rewards.empty()) {
            throw std::invalid_argument("RewardedCandidates: empty candidate list");
        }
        for (double reward : rewards) {
            if (!std::isfinite(reward)) {
                throw std::invalid_argument("RewardedCandidates: non-finite reward");
            }
        }
    }

    std::size_t size() const { return rewards.size(); }
};

// Softmax of rewards / tau, computed with max subtraction.
inline std::vector<double> bt_probabilities(const std::vector<double>& rewards, double tau) {
    if (!(tau > 0.0)) {
        throw std::invalid_argument("bt_probabilities: tau must be > 0");
    }
    double max_scaled = -std::numeric_limits<double>::infinity();
    for (double r : rewards) {
        if (!std::isfinite(r)) {
            throw std::invalid_argument("bt_probabilities: non-finite reward");
        }
        max_scaled = std::max(max_scaled, r / tau);
    }
    std::vector<double> probs(rewards.size());
    double sum = 0.0;
    for (std::size_t i = 0; i < rewards.size(); ++i) {
        probs[i] = std::exp(rewards[i] / tau - max_scaled);
        sum += probs[i];
    }
    for (double& p : probs) p /= sum;
    return probs;
}

// Sample a candidate index from the Bradley-Terry choice distribution.
inline std::size_t bt_select(const RewardedCandidates& candidates, double tau, Rng& rng) {
    const std::vector<double> probs = bt_probabilities(candidates.rewards, tau);
    double u = rng.uniform();
    double acc = 0.0;
    for (std::size_t i = 0; i + 1 < probs.size(); ++i) {
        acc += probs[i];
        if (u < acc) return i;
    }
    return probs.size() - 1;
}

// Highest-reward candidate, first-drawn on ties.
inline std::size_t argmax_select(const RewardedCandidates& candidates) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < candidates.size(); ++i) {
        if (candidates.rewards[i] > candidates.rewards[best]) best = i;
    }
    return best;
}

struct HnOptions {
    bool exact = true;
    std::size_t term_cap = 10'000'000;  // enumerated opponent multisets
    std::size_t mc_tuples = 100'000;    // Monte Carlo sample size
};

namespace detail {

// Number of opponent multisets, C(k + n - 2, n - 1), or nullopt if it
// exceeds `limit`.
inline std::optional<std::size_t> hn_term_count(std::size_t k, std::uint64_t n,
                                                std::size_t limit) {
    long double acc = 1.0L;
    for (std::uint64_t i = 1; i < n; ++i) {
        acc = acc * static_cast<long double>(k - 1 + i) / static_cast<long double>(i);
        if (acc > 2.0L * static_cast<long double>(limit)) return std::nullopt;
    }
    const auto rounded = static_cast<std::size_t>(acc + 0.5L);
    if (rounded > limit) return std::nullopt;
    return rounded;
}

// Enumerates opponent count vectors (m_1..m_K summing to n-1) and calls
// visit(log_weight, opponent_score_sum) per multiset, where the score
// sum uses exp(r_k - shift).
template <typename Visit>
inline void enumerate_opponents(const Categorical& base, const std::vector<double>& rewards,
                                std::uint64_t n, double shift, Visit&& visit) {
    const std::size_t k = base.size();
    std::vector<std::uint64_t> counts(k, 0);
    std::vector<double> log_base(k);
    std::vector<double> scores(k);
    for (std::size_t c = 0; c < k; ++c) {
        log_base[c] = base[c] > 0.0 ? std::log(base[c])
                                    : -std::numeric_limits<double>::infinity();
        scores[c] = std::exp(rewards[c] - shift);
    }
    const double log_factorial_total = std::lgamma(static_cast<double>(n));

    auto recurse = [&](auto&& self, std::size_t pos, std::uint64_t remaining, double log_weight,
                       double score_sum) -> void {
        if (pos + 1 == k) {
            if (remaining > 0 && base[pos] == 0.0) return;
            const double lw = log_weight + static_cast<double>(remaining) * log_base[pos] -
                              std::lgamma(static_cast<double>(remaining) + 1.0);
            visit(log_factorial_total + lw,
                  score_sum + static_cast<double>(remaining) * scores[pos]);
            return;
        }
        const std::uint64_t top = base[pos] == 0.0 ? 0 : remaining;
        for (std::uint64_t m = 0; m <= top; ++m) {
            self(self, pos + 1, remaining - m,
                 log_weight + static_cast<double>(m) * log_base[pos] -
                     std::lgamma(static_cast<double>(m) + 1.0),
                 score_sum + static_cast<double>(m) * scores[pos]);
        }
    };
    recurse(recurse, 0, n - 1, 0.0, 0.0);
}

}  // namespace detail

// All H(x) values at once; the opponent enumeration is shared across x.
// Rewards arrive already scaled by 1/tau when a temperature is in play.
inline std::vector<double> hn_weights(const Categorical& base, const std::vector<double>& rewards,
                                      std::uint64_t n, const HnOptions& options = {},
                                      Rng* rng = nullptr) {
    if (rewards.size() != base.size()) {
        throw std::invalid_argument("hn_weights: reward dimension mismatch");
    }
    if (n < 1) throw std::invalid_argument("hn_weights: n must be >= 1");
    for (double r : rewards) {
        if (!std::isfinite(r)) throw std::invalid_argument("hn_weights: non-finite reward");
    }
    const std::size_t k = base.size();
    const double shift = *std::max_element(rewards.begin(), rewards.end());
    std::vector<double> own_score(k);
    for (std::size_t x = 0; x < k; ++x) own_score[x] = std::exp(rewards[x] - shift);

    std::vector<double> h(k, 0.0);
    if (options.exact) {
        if (!detail::hn_term_count(k, n, options.term_cap)) {
            throw std::length_error("hn_weights: exact enumeration exceeds term cap of " +
                                    std::to_string(options.term_cap));
        }
        detail::enumerate_opponents(base, rewards, n, shift,
                                    [&](double log_weight, double score_sum) {
                                        const double weight = std::exp(log_weight);
                                        for (std::size_t x = 0; x < k; ++x) {
                                            h[x] += weight * static_cast<double>(n) *
                                                    own_score[x] / (own_score[x] + score_sum);
                                        }
                                    });
    } else {
        if (rng == nullptr) {
            throw std::invalid_argument("hn_weights: Monte Carlo mode needs an rng");
        }
        const auto cdf = cumulative_probs(base);
        for (std::size_t tuple = 0; tuple < options.mc_tuples; ++tuple) {
            double score_sum = 0.0;
            for (std::uint64_t i = 0; i + 1 < n; ++i) {
                score_sum += own_score[inverse_cdf_index(cdf, rng->uniform())];
            }
            for (std::size_t x = 0; x < k; ++x) {
                h[x] += static_cast<double>(n) * own_score[x] / (own_score[x] + score_sum);
            }
        }
        for (double& v : h) v /= static_cast<double>(options.mc_tuples);
    }
    return h;
}

// H(x) for a single answer index.
inline double hn_weight(std::size_t x, const Categorical& base, const std::vector<double>& rewards,
                        std::uint64_t n, const HnOptions& options = {}, Rng* rng = nullptr) {
    if (x >= base.size()) throw std::invalid_argument("hn_weight: index out of range");
    return hn_weights(base, rewards, n, options, rng)[x];
}

// One analytic curation update over a finite answer space.
struct CuratedUpdate {
    Categorical base;
    std::vector<double> rewards;
    std::uint64_t n = 1;
    double tau = 1.0;

    CuratedUpdate(Categorical b, std::vector<double> r, std::uint64_t comparisons,
                  double temperature = 1.0)
        : base(std::move(b)), rewards(std::move(r)), n(comparisons), tau(temperature) {
        if (rewards.size() != base.size()) {
            throw std::invalid_argument("CuratedUpdate: reward dimension mismatch");
        }
        if (n < 1) throw std::invalid_argument("CuratedUpdate: n must be >= 1");
        if (!(tau > 0.0)) throw std::invalid_argument("CuratedUpdate: tau must be > 0");
        for (double reward : rewards) {
            if (!std::isfinite(reward)) {
                throw std::invalid_argument("CuratedUpdate: non-finite reward");
            }
        }
    }
};

// p'(x) = p(x) H(x), renormalized only against floating-point drift (the
// exact-mode product already sums to 1 up to round-off).
inline Categorical apply_hn_update(const CuratedUpdate& update, const HnOptions& options = {},
                                   Rng* rng = nullptr) {
    std::vector<double> scaled = update.rewards;
    if (update.tau != 1.0) {
        for (double& r : scaled) r /= update.tau;
    }
    const std::vector<double> h = hn_weights(update.base, scaled, update.n, options, rng);
    std::vector<double> probs(update.base.size());
    double sum = 0.0;
    for (std::size_t x = 0; x < probs.size(); ++x) {
        probs[x] = update.base[x] * h[x];
        sum += probs[x];
    }
    for (double& p : probs) p /= sum;
    return Categorical(std::move(probs));
}

struct SelectorSpec {
    enum class Kind { bradley_terry, argmax };
    Kind kind = Kind::argmax;
    double tau = 1.0;

    static SelectorSpec bt(double tau) { return {Kind::bradley_terry, tau}; }
    static SelectorSpec argmax() { return {Kind::argmax, 0.0}; }
};

// Draws m_curated curated answers (each: n samples from base, one kept
// by the selector) and returns their empirical distribution.
inline Categorical curated_refit_step(const Categorical& base, const std::vector<double>& rewards,
                                      std::uint64_t n, std::uint64_t m_curated,
                                      const SelectorSpec& selector, Rng& rng) {
    if (rewards.size() != base.size()) {
        throw std::invalid_argument("curated_refit_step: reward dimension mismatch");
    }
    if (n < 1) throw std::invalid_argument("curated_refit_step: n must be >= 1");
    if (m_curated < 1) throw std::invalid_argument("curated_refit_step: m_curated must be >= 1");
    if (selector.kind == SelectorSpec::Kind::bradley_terry && !(selector.tau > 0.0)) {
        throw std::invalid_argument("curated_refit_step: tau must be > 0");
    }
    for (double r : rewards) {
        if (!std::isfinite(r)) {
            throw std::invalid_argument("curated_refit_step: non-finite reward");
        }
    }

    const auto cdf = cumulative_probs(base);
    std::vector<std::size_t> drawn(n);
    std::vector<double> drawn_rewards(n);
    std::vector<std::uint64_t> counts(base.size(), 0);
    for (std::uint64_t m = 0; m < m_curated; ++m) {
        for (std::uint64_t i = 0; i < n; ++i) {
            drawn[i] = inverse_cdf_index(cdf, rng.uniform());
            drawn_rewards[i] = rewards[drawn[i]];
        }
        std::size_t pick;
        if (selector.kind == SelectorSpec::Kind::argmax) {
            pick = 0;
            for (std::uint64_t i = 1; i < n; ++i) {
                if (drawn_rewards[i] > drawn_rewards[pick]) pick = i;
            }
        } else {
            const auto probs = bt_probabilities(drawn_rewards, selector.tau);
            const double u = rng.uniform();
            double acc = 0.0;
            pick = n - 1;
            for (std::uint64_t i = 0; i + 1 < n; ++i) {
                acc += probs[i];
                if (u < acc) {
                    pick = i;
                    break;
                }
            }
        }
        counts[drawn[pick]] += 1;
    }
    return fit_categorical_mle(SampleCounts(std::move(counts)));
}

struct RewardMoments {
    double mean = 0.0;      // E[e^r]
    double variance = 0.0;  // Var[e^r]
};

// Exact moments of e^r under a finite distribution.
inline RewardMoments reward_moments(const Categorical& dist, const std::vector<double>& rewards) {
    if (rewards.size() != dist.size()) {
        throw std::invalid_argument("reward_moments: dimension mismatch");
    }
    double mean = 0.0;
    double second = 0.0;
    for (std::size_t k = 0; k < dist.size(); ++k) {
        const double score = std::exp(rewards[k]);
        mean += dist[k] * score;
        second += dist[k] * score * score;
    }
    return {mean, std::max(0.0, second - mean * mean)};
}

}  // namespace collapse
