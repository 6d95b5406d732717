#include <doctest.h>

#include <cmath>
#include <vector>

#include <dialscm/error.hpp>
#include <dialscm/independence.hpp>
#include <dialscm/rng.hpp>

using namespace dialscm;

TEST_CASE("distance correlation basics") {
    Rng rng(1);
    std::vector<double> u(200), lin(200), noise(200);
    for (int i = 0; i < 200; ++i) {
        u[i] = rng.uniform(-1.0, 1.0);
        lin[i] = 3.0 * u[i] - 2.0;
        noise[i] = rng.uniform(-1.0, 1.0);
    }
    CHECK(distance_correlation(u, lin) == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(distance_correlation(u, noise) < 0.2);
    CHECK(distance_correlation(u, u) == doctest::Approx(1.0).epsilon(1e-9));

    const std::vector<double> constant(200, 4.2);
    CHECK(distance_correlation(u, constant) == 0.0);

    CHECK_THROWS_AS(distance_correlation(u, std::vector<double>(3, 0.0)), ValidationError);
}

TEST_CASE("quadratic dependence is detected") {
    Rng rng(2);
    std::vector<double> u(2000), v(2000);
    for (int i = 0; i < 2000; ++i) {
        u[i] = rng.uniform(-1.0, 1.0);
        v[i] = u[i] * u[i];
    }
    // Pearson correlation is ~0 here; the distance test must still reject.
    const auto report = independence_test(u, v, IndependenceConfig{}, 7);
    CHECK(report.reject_independence);
    CHECK(report.p_value < 0.01);
    CHECK(report.statistic > 0.3);
}

TEST_CASE("null rejection rate tracks significance") {
    IndependenceConfig config;
    config.max_samples = 64; // keep the O(n^2) permutation loop cheap
    int rejections = 0;
    const int trials = 500;
    Rng seeder(3);
    for (int trial = 0; trial < trials; ++trial) {
        Rng rng(seeder.next_u64());
        std::vector<double> u(200), v(200);
        for (int i = 0; i < 200; ++i) {
            u[i] = rng.uniform(0.0, 1.0);
            v[i] = rng.uniform(0.0, 1.0);
        }
        if (independence_test(u, v, config, rng.next_u64()).reject_independence)
            ++rejections;
    }
    const double rate = static_cast<double>(rejections) / trials;
    CHECK(rate <= config.significance + 0.01);
}

TEST_CASE("constant inputs short-circuit") {
    std::vector<double> u(100, 1.5);
    Rng rng(4);
    std::vector<double> v(100);
    for (auto& x : v) x = rng.uniform(0.0, 1.0);
    const auto report = independence_test(u, v, IndependenceConfig{}, 1);
    CHECK(report.statistic == 0.0);
    CHECK(report.p_value == 1.0);
    CHECK_FALSE(report.reject_independence);
}

TEST_CASE("input validation") {
    std::vector<double> u(100, 0.0), v(50, 0.0);
    CHECK_THROWS_AS(independence_test(u, v, IndependenceConfig{}, 1), ValidationError);
    CHECK_THROWS_AS(independence_test(std::vector<double>(10, 0.0),
                                      std::vector<double>(10, 0.0),
                                      IndependenceConfig{}, 1),
                    ValidationError);
    std::vector<double> bad(100, 0.0);
    bad[3] = std::nan("");
    CHECK_THROWS_AS(independence_test(bad, std::vector<double>(100, 0.0),
                                      IndependenceConfig{}, 1),
                    ValidationError);
}

TEST_CASE("deterministic per seed") {
    Rng rng(5);
    std::vector<double> u(600), v(600);
    for (int i = 0; i < 600; ++i) {
        u[i] = rng.uniform(0.0, 1.0);
        v[i] = 0.5 * u[i] + rng.uniform(0.0, 1.0);
    }
    IndependenceConfig config;
    config.max_samples = 384;
    const auto a = independence_test(u, v, config, 12);
    const auto b = independence_test(u, v, config, 12);
    CHECK(a.statistic == b.statistic);
    CHECK(a.p_value == b.p_value);
    CHECK(a.n_samples_used == 384); // subsample cap engaged
}

namespace {

// Reference double-centering implementation, quadratic cost.
double brute_dcor(const std::vector<double>& x, const std::vector<double>& y) {
    const std::size_t n = x.size();
    auto centered = [n](const std::vector<double>& v) {
        std::vector<double> m(n * n);
        std::vector<double> row(n, 0.0);
        double grand = 0.0;
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j) {
                m[i * n + j] = std::abs(v[i] - v[j]);
                row[i] += m[i * n + j];
                grand += m[i * n + j];
            }
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j)
                m[i * n + j] += grand / (n * n) - row[i] / n - row[j] / n;
        return m;
    };
    const auto a = centered(x);
    const auto b = centered(y);
    double cov = 0.0, va = 0.0, vb = 0.0;
    for (std::size_t k = 0; k < n * n; ++k) {
        cov += a[k] * b[k];
        va += a[k] * a[k];
        vb += b[k] * b[k];
    }
    if (va * vb <= 0.0) return 0.0;
    return std::sqrt(std::max(cov / std::sqrt(va * vb), 0.0));
}

} // namespace

TEST_CASE("sorted-pass statistic matches the double-centering form") {
    Rng rng(9);
    for (int trial = 0; trial < 8; ++trial) {
        const int n = 20 + static_cast<int>(rng.below(180));
        std::vector<double> u(n), v(n);
        for (int i = 0; i < n; ++i) {
            u[i] = rng.gaussian();
            // Mix in dependence and exact ties.
            v[i] = (trial % 2 == 0) ? std::abs(u[i]) + rng.uniform(0.0, 0.5)
                                    : std::round(rng.uniform(-2.0, 2.0));
        }
        CHECK(distance_correlation(u, v) ==
              doctest::Approx(brute_dcor(u, v)).epsilon(1e-10));
    }
}

TEST_CASE("report invariants") {
    Rng rng(6);
    std::vector<double> u(100), v(100);
    for (int i = 0; i < 100; ++i) {
        u[i] = rng.gaussian();
        v[i] = rng.gaussian();
    }
    const auto report = independence_test(u, v, 99, 0.05, 8);
    CHECK(report.statistic >= 0.0);
    CHECK(report.statistic <= 1.0);
    CHECK(report.p_value >= 1.0 / 100.0);
    CHECK(report.p_value <= 1.0);
    CHECK(report.n_permutations >= 1);
    CHECK(report.n_permutations <= 99);
    CHECK(report.reject_independence == (report.p_value < 0.05));

    // On clearly dependent input the full budget runs and p bottoms out.
    std::vector<double> w(100);
    for (int i = 0; i < 100; ++i) w[i] = 2.0 * u[i];
    const auto dep = independence_test(u, w, 99, 0.05, 8);
    CHECK(dep.n_permutations == 99);
    CHECK(dep.p_value == doctest::Approx(0.01));
    CHECK(dep.reject_independence);
}
