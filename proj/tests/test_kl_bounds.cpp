#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "flowcert/kl_bounds.hpp"
#include "flowcert/rng.hpp"

#include <cmath>
#include <stdexcept>

using namespace flowcert;

namespace {

// Reference values from a 50-digit evaluation of the closed forms.
constexpr double kKl01_03 = 0.1163217565860045;
constexpr double kMcAllesterExample = 0.17308183826022853;  // sqrt(log 400 / 200)
constexpr double kKlExample = 0.05815507911697227;          // 1 - exp(-log 400 / 100)

BoundInputs example_inputs() {
    BoundInputs b;
    b.empirical_loss = 0.0;
    b.complexity = 0.0;
    b.K = 1;
    b.m = 100;
    b.delta = 0.05;
    b.xi_log = std::log(20.0);
    return b;
}

}  // namespace

TEST_CASE("binary_kl reference values") {
    CHECK(binary_kl(0.3, 0.3) == 0.0);
    CHECK(binary_kl(0.0, 0.5) == doctest::Approx(std::log(2.0)).epsilon(1e-15));
    CHECK(std::abs(binary_kl(0.1, 0.3) - kKl01_03) < 1e-15);
    CHECK(binary_kl(0.0, 0.0) == 0.0);
    CHECK(binary_kl(1.0, 1.0) == 0.0);
}

TEST_CASE("binary_kl rejects arguments outside the domain") {
    CHECK_THROWS_AS(binary_kl(0.2, 0.0), std::domain_error);
    CHECK_THROWS_AS(binary_kl(0.2, 1.0), std::domain_error);
    CHECK_THROWS_AS(binary_kl(-0.1, 0.5), std::domain_error);
    CHECK_THROWS_AS(binary_kl(1.1, 0.5), std::domain_error);
    CHECK_THROWS_AS(binary_kl(0.5, std::nan("")), std::domain_error);
}

TEST_CASE("binary_kl dominates the Pinsker quadratic on a grid") {
    for (int i = 1; i < 10; ++i) {
        for (int j = 1; j < 10; ++j) {
            const double u = i / 10.0, v = j / 10.0;
            CHECK(binary_kl(u, v) >= 2 * (u - v) * (u - v) - 1e-15);
            if (i != j) {
                CHECK(binary_kl(u, v) > 0.0);
            }
        }
    }
}

TEST_CASE("kl_inverse closed form at zero loss") {
    for (double c : {0.001, 0.01, 0.1, 1.0, 5.0}) {
        CHECK(std::abs(kl_inverse(0.0, c) - (-std::expm1(-c))) < 1e-12);
    }
}

TEST_CASE("kl_inverse boundary cases") {
    for (double u : {0.0, 0.13, 0.5, 0.99, 1.0}) {
        CHECK(kl_inverse(u, 0.0) == u);
        CHECK(kl_inverse(u, -3.0) == u);
    }
    CHECK(kl_inverse(0.2, 1000.0) == 1.0);
    CHECK(kl_inverse(1.0, 2.0) == 1.0);
}

TEST_CASE("kl_inverse solves kl(u, v) = c on random inputs") {
    NormalStream rng(11);
    for (int trial = 0; trial < 500; ++trial) {
        const double u = rng.uniform() * 0.95;
        const double c = std::exp(-8 + 9 * rng.uniform());
        const double v = kl_inverse(u, c);
        CHECK(v >= u);
        CHECK(v <= 1.0);
        if (v < 1.0) {
            // v is the last double inside the sublevel set.
            CHECK(binary_kl(u, v) <= c);
            const double next = std::nextafter(v, 2.0);
            CHECK((next == 1.0 || binary_kl(u, next) > c));
            if (1.0 - v > 1e-6) {
                CHECK(std::abs(binary_kl(u, v) - c) < 1e-9);
            }
        }
    }
}

TEST_CASE("kl_inverse is monotone in both arguments") {
    NormalStream rng(12);
    for (int trial = 0; trial < 300; ++trial) {
        const double u1 = rng.uniform(), u2 = rng.uniform();
        const double c1 = 3 * rng.uniform(), c2 = 3 * rng.uniform();
        CHECK(kl_inverse(std::min(u1, u2), c1) <= kl_inverse(std::max(u1, u2), c1));
        CHECK(kl_inverse(u1, std::min(c1, c2)) <= kl_inverse(u1, std::max(c1, c2)));
    }
}

TEST_CASE("default xi is log(2 sqrt m)") {
    CHECK(default_xi_log(100) == doctest::Approx(std::log(20.0)).epsilon(1e-15));
    BoundInputs b;
    b.m = 400;
    CHECK(b.effective_xi_log() == doctest::Approx(std::log(40.0)).epsilon(1e-15));
    b.xi_log = 1.5;
    CHECK(b.effective_xi_log() == 1.5);
}

TEST_CASE("mcallester bound reference values") {
    BoundInputs b = example_inputs();
    CHECK(std::abs(mcallester_bound(b) - kMcAllesterExample) < 1e-15);

    b.complexity = 1e6;
    CHECK(mcallester_bound(b) == 1.0);

    b.empirical_loss = 0.25;
    b.complexity = -*b.xi_log - std::log(1 / b.delta);
    CHECK(mcallester_bound(b) == doctest::Approx(0.25).epsilon(1e-12));
    b.complexity -= 10.0;  // negative bracket is clamped
    CHECK(mcallester_bound(b) == 0.25);
}

TEST_CASE("kl bound reference values") {
    BoundInputs b = example_inputs();
    CHECK(std::abs(kl_bound(b) - kKlExample) < 1e-12);
    CHECK(kl_bound(b) <= mcallester_bound(b));

    b.empirical_loss = 0.3;
    b.complexity = -100.0;
    CHECK(kl_bound(b) == 0.3);
}

TEST_CASE("penalty adds log K to the confidence term") {
    BoundInputs b = example_inputs();
    b.K = 50;
    CHECK(confidence_penalty(b) ==
          doctest::Approx(std::log(50.0) + std::log(20.0) + std::log(20.0)).epsilon(1e-14));
}

TEST_CASE("bounds are monotone in complexity, K, m and delta") {
    NormalStream rng(13);
    for (int trial = 0; trial < 200; ++trial) {
        BoundInputs b;
        b.empirical_loss = 0.5 * rng.uniform();
        b.complexity = 20 * rng.uniform() - 5;
        b.m = 10 + rng.below(2000);
        b.delta = 0.001 + 0.2 * rng.uniform();
        b.K = 1 + rng.below(100);
        auto both = [](const BoundInputs& x) {
            return std::pair{mcallester_bound(x), kl_bound(x)};
        };
        const auto base = both(b);

        BoundInputs more = b;
        more.complexity += 3 * rng.uniform();
        CHECK(both(more).first >= base.first);
        CHECK(both(more).second >= base.second);

        more = b;
        more.K += 1 + rng.below(10);
        CHECK(both(more).first >= base.first);
        CHECK(both(more).second >= base.second);

        more = b;
        more.m += 1 + rng.below(500);
        CHECK(both(more).first <= base.first);
        CHECK(both(more).second <= base.second);

        more = b;
        more.delta = std::min(0.99, b.delta * (1 + rng.uniform()));
        CHECK(both(more).first <= base.first);
        CHECK(both(more).second <= base.second);

        if (base.first < 1 && base.second < 1) {
            CHECK(base.second <= base.first);
        }
        CHECK(base.second >= b.empirical_loss);
    }
}

TEST_CASE("invalid inputs are rejected") {
    BoundInputs b = example_inputs();
    b.delta = 0.0;
    CHECK_THROWS(mcallester_bound(b));
    b = example_inputs();
    b.m = 0;
    CHECK_THROWS(kl_bound(b));
    b = example_inputs();
    b.K = 0;
    CHECK_THROWS(kl_bound(b));
    b = example_inputs();
    b.empirical_loss = 1.5;
    CHECK_THROWS(kl_bound(b));
}

TEST_CASE("certificate itemises its components") {
    const BoundCertificate c = make_certificate(0.1, 2.0, 3.0, 500, 5e-3, 50);
    CHECK(c.inputs.complexity == 5.0);
    CHECK(c.log_density_ratio == 2.0);
    CHECK(c.laplacian_integral == 3.0);
    CHECK(c.penalty == confidence_penalty(c.inputs));
    CHECK(c.mcallester == mcallester_bound(c.inputs));
    CHECK(c.kl_inv == kl_bound(c.inputs));
}
