#pragma once
// Categorical distributions over K categories: validation, maximum
// likelihood fitting from counts, seeded sampling, and discrete
// divergences.

#include <algorithm>
#include <cstdint>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include "collapse/rng.hpp"

namespace collapse {

inline constexpr double kProbSumTolerance = 1e-12;

// Probability vector over K >= 1 categories. Entries are non-negative and
// sum to 1 within kProbSumTolerance; both are checked at construction.
class Categorical {
public:
    explicit Categorical(std::vector<double> probs) : probs_(std::move(probs)) {
        if (probs_.empty()) {
            throw std::invalid_argument("Categorical: need at least one category");
        }
        double sum = 0.0;
        for (double p : probs_) {
            if (!(p >= 0.0)) {
                throw std::invalid_argument("Categorical: negative or NaN probability");
            }
            sum += p;
        }
        if (std::abs(sum - 1.0) > kProbSumTolerance) {
            throw std::invalid_argument("Categorical: probabilities sum to " +
                                        std::to_string(sum) + ", expected 1");
        }
    }

    static Categorical uniform(std::size_t k) {
        return Categorical(std::vector<double>(k, 1.0 / static_cast<double>(k)));
    }

    static Categorical one_hot(std::size_t k, std::size_t index) {
        if (index >= k) throw std::invalid_argument("Categorical::one_hot: index out of range");
        std::vector<double> p(k, 0.0);
        p[index] = 1.0;
        return Categorical(std::move(p));
    }

    const std::vector<double>& probs() const { return probs_; }
    double operator[](std::size_t k) const { return probs_[k]; }
    std::size_t size() const { return probs_.size(); }

    bool is_one_hot() const {
        for (double p : probs_) {
            if (p != 0.0 && p != 1.0) return false;
        }
        return true;
    }

private:
    std::vector<double> probs_;
};

// Observation counts per category; total() is the sample size.
struct SampleCounts {
    std::vector<std::uint64_t> counts;

    SampleCounts() = default;
    explicit SampleCounts(std::vector<std::uint64_t> c) : counts(std::move(c)) {}

    std::uint64_t total() const {
        return std::accumulate(counts.begin(), counts.end(), std::uint64_t{0});
    }
    std::size_t size() const { return counts.size(); }
};

// MLE of a categorical from counts: p_k = n_k / n.
inline Categorical fit_categorical_mle(const SampleCounts& counts) {
    const std::uint64_t n = counts.total();
    if (n == 0) {
        throw std::invalid_argument("fit_categorical_mle: zero total count");
    }
    std::vector<double> probs(counts.size());
    for (std::size_t k = 0; k < counts.size(); ++k) {
        probs[k] = static_cast<double>(counts.counts[k]) / static_cast<double>(n);
    }
    return Categorical(std::move(probs));
}

// Cumulative probability vector with the last entry pinned to 1, so a
// uniform draw always lands inside the table.
inline std::vector<double> cumulative_probs(const Categorical& dist) {
    std::vector<double> cdf(dist.size());
    double acc = 0.0;
    for (std::size_t k = 0; k < dist.size(); ++k) {
        acc += dist[k];
        cdf[k] = acc;
    }
    cdf.back() = 1.0;
    return cdf;
}

// Index of the category selected by uniform draw u via inverse CDF.
// Ties at a CDF boundary resolve to the lower index, which also
// guarantees zero-probability categories are never selected.
inline std::size_t inverse_cdf_index(const std::vector<double>& cdf, double u) {
    auto it = std::lower_bound(cdf.begin(), cdf.end(), u);
    if (it == cdf.end()) --it;
    return static_cast<std::size_t>(it - cdf.begin());
}

// Draw n i.i.d. samples and return per-category counts.
inline SampleCounts sample_categorical(const Categorical& dist, std::uint64_t n, Rng& rng) {
    if (n == 0) {
        throw std::invalid_argument("sample_categorical: n must be >= 1");
    }
    const std::vector<double> cdf = cumulative_probs(dist);
    std::vector<std::uint64_t> counts(dist.size(), 0);
    for (std::uint64_t i = 0; i < n; ++i) {
        counts[inverse_cdf_index(cdf, rng.uniform())] += 1;
    }
    return SampleCounts(std::move(counts));
}

// Draw a single category index.
inline std::size_t sample_categorical_index(const std::vector<double>& cdf, Rng& rng) {
    return inverse_cdf_index(cdf, rng.uniform());
}

// KL(p || q) in nats. Conventions: 0 log(0/q) = 0; p > 0 with q = 0
// gives +infinity.
inline double kl_divergence(const Categorical& p, const Categorical& q) {
    if (p.size() != q.size()) {
        throw std::invalid_argument("kl_divergence: dimension mismatch");
    }
    double sum = 0.0;
    for (std::size_t k = 0; k < p.size(); ++k) {
        if (p[k] == 0.0) continue;
        if (q[k] == 0.0) return std::numeric_limits<double>::infinity();
        sum += p[k] * std::log(p[k] / q[k]);
    }
    return std::max(sum, 0.0);
}

// Total variation distance, (1/2) sum |p_k - q_k|.
inline double total_variation(const Categorical& p, const Categorical& q) {
    if (p.size() != q.size()) {
        throw std::invalid_argument("total_variation: dimension mismatch");
    }
    double sum = 0.0;
    for (std::size_t k = 0; k < p.size(); ++k) {
        sum += std::abs(p[k] - q[k]);
    }
    return 0.5 * sum;
}

}  // namespace collapse
