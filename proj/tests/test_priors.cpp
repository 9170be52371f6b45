#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "flowcert/priors.hpp"
#include "flowcert/rng.hpp"
#include "support/oracles.hpp"

#include <cmath>
#include <numbers>

using namespace flowcert;

TEST_CASE("standard prior has variance 1/N") {
    const PriorSpec p = PriorSpec::standard(250);
    CHECK(p.N == 250);
    CHECK(p.variance == 1.0 / 250);
    CHECK_THROWS(PriorSpec({3, 0.0}).validate());
    CHECK_THROWS(PriorSpec({0, 1.0}).validate());
}

TEST_CASE("sampling is deterministic per seed") {
    const PriorSpec p{40, 0.5};
    CHECK(sample(p, 7) == sample(p, 7));
    CHECK(sample(p, 7) != sample(p, 8));
    CHECK(sample(p, 7).size() == 40);
}

TEST_CASE("sample moments match the spec") {
    const PriorSpec p{1000000, 2.5};
    const Vector h = sample(p, 3);
    const double mean = h.mean();
    const double var = (h.array() - mean).square().sum() / static_cast<double>(h.size() - 1);
    CHECK(std::abs(var - 2.5) < 0.01 * 2.5);
    CHECK(std::abs(mean) < 4 * std::sqrt(2.5) / 1000.0);
}

TEST_CASE("log density at the mode") {
    CHECK(log_density({1, 1.0}, Vector::Zero(1)) ==
          doctest::Approx(-0.5 * std::log(2 * std::numbers::pi)).epsilon(1e-15));
}

TEST_CASE("log density ratio under variance 1/N") {
    const std::size_t N = 30;
    const PriorSpec p = PriorSpec::standard(N);
    const Vector a = oracle::random_vector(N, 1), b = oracle::random_vector(N, 2);
    const double expected = 0.5 * N * (b.squaredNorm() - a.squaredNorm());
    CHECK(log_density_ratio(p, a, b) == doctest::Approx(expected).epsilon(1e-13));
    CHECK(log_density_ratio(p, a, b) == -log_density_ratio(p, b, a));
    CHECK(log_density_ratio(p, a, a) == 0.0);
}

TEST_CASE("one-dimensional density integrates to one") {
    // Composite Simpson on [-12 sigma, 12 sigma].
    for (double var : {0.01, 1.0, 7.0}) {
        const PriorSpec p{1, var};
        const double s = std::sqrt(var), lo = -12 * s, hi = 12 * s;
        const int n = 20000;
        const double dx = (hi - lo) / n;
        double total = 0.0;
        for (int i = 0; i <= n; ++i) {
            const double w = (i == 0 || i == n) ? 1 : (i % 2 ? 4 : 2);
            total += w * std::exp(log_density(p, Vector::Constant(1, lo + i * dx)));
        }
        CHECK(std::abs(total * dx / 3 - 1.0) < 1e-9);
    }
}

TEST_CASE("log density depends only on the norm") {
    NormalStream rng(5);
    const PriorSpec p{6, 0.3};
    for (int trial = 0; trial < 50; ++trial) {
        Vector h = oracle::random_vector(6, 100 + trial);
        // Rotate a random coordinate pair.
        const auto i = static_cast<Eigen::Index>(rng.below(6));
        const auto j = static_cast<Eigen::Index>((i + 1 + rng.below(5)) % 6);
        const double th = 6.28 * rng.uniform();
        Vector r = h;
        r[i] = std::cos(th) * h[i] - std::sin(th) * h[j];
        r[j] = std::sin(th) * h[i] + std::cos(th) * h[j];
        CHECK(log_density(p, r) == doctest::Approx(log_density(p, h)).epsilon(1e-13));
    }
}

TEST_CASE("dimension mismatch is rejected") {
    CHECK_THROWS(log_density({3, 1.0}, Vector::Zero(2)));
}
