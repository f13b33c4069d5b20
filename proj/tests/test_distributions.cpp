#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <numeric>

#include "collapse/categorical.hpp"
#include "collapse/rng.hpp"
#include "support/stats.hpp"

using namespace collapse;

TEST_CASE("categorical validation") {
    CHECK_THROWS_AS(Categorical(std::vector<double>{}), std::invalid_argument);
    CHECK_THROWS_AS(Categorical({0.5, 0.6}), std::invalid_argument);
    CHECK_THROWS_AS(Categorical({-0.1, 1.1}), std::invalid_argument);
    CHECK_NOTHROW(Categorical({1.0}));
    CHECK_NOTHROW(Categorical({0.25, 0.75}));
    CHECK(Categorical::one_hot(3, 1).is_one_hot());
    CHECK_FALSE(Categorical::uniform(3).is_one_hot());
}

TEST_CASE("fit_categorical_mle matches count ratios exactly") {
    const Categorical fitted = fit_categorical_mle(SampleCounts({3, 1}));
    CHECK(fitted[0] == 0.75);
    CHECK(fitted[1] == 0.25);

    const Categorical degenerate = fit_categorical_mle(SampleCounts({5, 0, 0}));
    CHECK(degenerate[0] == 1.0);
    CHECK(degenerate[1] == 0.0);
    CHECK(degenerate[2] == 0.0);

    CHECK_THROWS_AS(fit_categorical_mle(SampleCounts({0, 0})), std::invalid_argument);
}

TEST_CASE("sample_categorical basics") {
    Rng rng(42);
    const Categorical one_hot({1.0, 0.0});
    const SampleCounts counts = sample_categorical(one_hot, 10, rng);
    CHECK(counts.counts[0] == 10);
    CHECK(counts.counts[1] == 0);

    Rng a(7), b(7);
    const Categorical dist({0.3, 0.2, 0.5});
    const SampleCounts first = sample_categorical(dist, 1000, a);
    const SampleCounts second = sample_categorical(dist, 1000, b);
    CHECK(first.counts == second.counts);
    CHECK(first.total() == 1000);

    CHECK_THROWS_AS(sample_categorical(dist, 0, a), std::invalid_argument);
}

TEST_CASE("sample_categorical frequencies pass a chi-square test") {
    const Categorical dist({0.5, 0.5});
    const std::uint64_t n = 1000000;
    Rng rng(2024);
    const SampleCounts counts = sample_categorical(dist, n, rng);
    for (std::size_t k = 0; k < 2; ++k) {
        const double freq = static_cast<double>(counts.counts[k]) / static_cast<double>(n);
        CHECK(std::abs(freq - 0.5) < 0.002);
    }
    const double stat = testsupport::chi_square_statistic(counts.counts, dist.probs(), n);
    CHECK(testsupport::chi_square_sf(stat, 1.0) > 0.001);
}

TEST_CASE("zero-probability categories never receive samples") {
    Rng rng(5);
    const Categorical dist({0.5, 0.0, 0.5});
    for (int rep = 0; rep < 50; ++rep) {
        const SampleCounts counts = sample_categorical(dist, 100, rng);
        CHECK(counts.counts[1] == 0);
    }
}

TEST_CASE("kl_divergence hand values") {
    const Categorical p({1.0, 0.0});
    const Categorical q({0.5, 0.5});
    CHECK(kl_divergence(p, p) == 0.0);
    CHECK(kl_divergence(p, q) == Catch::Approx(std::log(2.0)).epsilon(1e-12));
    CHECK(std::isinf(kl_divergence(p, Categorical({0.0, 1.0}))));
    CHECK_THROWS_AS(kl_divergence(p, Categorical({1.0})), std::invalid_argument);
}

TEST_CASE("kl_divergence is non-negative and zero on identical pairs") {
    Rng rng(99);
    for (int rep = 0; rep < 1000; ++rep) {
        const std::size_t k = 2 + rng.uniform_below(6);
        std::vector<double> raw_p(k), raw_q(k);
        double sp = 0.0, sq = 0.0;
        for (std::size_t i = 0; i < k; ++i) {
            raw_p[i] = rng.uniform_positive();
            raw_q[i] = rng.uniform_positive();
            sp += raw_p[i];
            sq += raw_q[i];
        }
        for (std::size_t i = 0; i < k; ++i) {
            raw_p[i] /= sp;
            raw_q[i] /= sq;
        }
        raw_p[k - 1] = 1.0 - std::accumulate(raw_p.begin(), raw_p.end() - 1, 0.0);
        raw_q[k - 1] = 1.0 - std::accumulate(raw_q.begin(), raw_q.end() - 1, 0.0);
        const Categorical p(raw_p), q(raw_q);
        CHECK(kl_divergence(p, q) >= 0.0);
        CHECK(kl_divergence(p, p) == 0.0);
    }
}

TEST_CASE("mle of samples converges to the sampled distribution") {
    const Categorical source({0.1, 0.25, 0.65});
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        Rng rng(derive_stream_seed(seed, 0));
        const Categorical fitted =
            fit_categorical_mle(sample_categorical(source, 1000000, rng));
        CHECK(total_variation(fitted, source) <= 0.01);
    }
}

TEST_CASE("inverse cdf tie-break prefers the lower index") {
    // cdf boundaries hit exactly: u equal to a boundary selects the
    // earlier category
    const std::vector<double> cdf{0.5, 0.5, 1.0};
    CHECK(inverse_cdf_index(cdf, 0.25) == 0);
    CHECK(inverse_cdf_index(cdf, 0.5) == 0);
    CHECK(inverse_cdf_index(cdf, 0.7) == 2);
    CHECK(inverse_cdf_index(cdf, 0.0) == 0);
}
