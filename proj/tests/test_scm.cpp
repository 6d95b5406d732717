#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>
#include <vector>

#include <dialscm/rng.hpp>
#include <dialscm/scm.hpp>

using namespace dialscm;

namespace {

NoiseSpec unit_uniform(int dim = 1) {
    const double half = std::sqrt(3.0); // width 2*sqrt(3) gives variance 1
    return NoiseSpec::uniform(-half, half, dim);
}

// Fork at node 0 feeding 1 and 2, with 2 feeding 3.
LinearScm fork_scm(double a, double b, double c, NoiseSpec noise) {
    const int n = 4;
    std::vector<double> w(n * n, 0.0);
    w[0 * n + 1] = a;
    w[0 * n + 2] = b;
    w[2 * n + 3] = c;
    return LinearScm(n, w, std::vector<NoiseSpec>(n, noise));
}

double sample_mean(const SampleMatrix& m, int node) {
    double s = 0.0;
    for (int i = 0; i < m.n_samples; ++i) s += m.at(i, node);
    return s / m.n_samples;
}

double sample_cov(const SampleMatrix& m, int a, int b) {
    const double ma = sample_mean(m, a);
    const double mb = sample_mean(m, b);
    double s = 0.0;
    for (int i = 0; i < m.n_samples; ++i) s += (m.at(i, a) - ma) * (m.at(i, b) - mb);
    return s / (m.n_samples - 1);
}

double correlation(const std::vector<double>& x, const std::vector<double>& y) {
    const std::size_t n = x.size();
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        mx += x[i];
        my += y[i];
    }
    mx /= n;
    my /= n;
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        sxy += (x[i] - mx) * (y[i] - my);
        sxx += (x[i] - mx) * (x[i] - mx);
        syy += (y[i] - my) * (y[i] - my);
    }
    return sxy / std::sqrt(sxx * syy);
}

LinearScm random_dag(int n, Rng& rng) {
    std::vector<double> w(n * n, 0.0);
    for (int s = 0; s < n; ++s)
        for (int t = s + 1; t < n; ++t)
            if (rng.next_unit() < 0.5) w[s * n + t] = rng.uniform(0.7, 1.0);
    return LinearScm(n, w, std::vector<NoiseSpec>(n, unit_uniform()));
}

} // namespace

TEST_CASE("noise spec validation") {
    CHECK_THROWS_AS(NoiseSpec::gaussian(0.0, 0.0), ValidationError);
    CHECK_THROWS_AS(NoiseSpec::gaussian(0.0, -1.0), ValidationError);
    CHECK_THROWS_AS(NoiseSpec::uniform(1.0, 1.0), ValidationError);
    CHECK_THROWS_AS(NoiseSpec::uniform(2.0, 1.0), ValidationError);
    CHECK_THROWS_AS(NoiseSpec::gaussian(0.0, 1.0, 0), ValidationError);
    CHECK(NoiseSpec::gaussian(0.0, 2.0).variance() == doctest::Approx(4.0));
    CHECK(NoiseSpec::uniform(-1.0, 1.0).variance() == doctest::Approx(1.0 / 3.0));
    CHECK(unit_uniform().variance() == doctest::Approx(1.0));
}

TEST_CASE("structural validation") {
    std::vector<double> w(4, 0.0);
    w[0 * 2 + 0] = 0.5; // self-loop
    CHECK_THROWS_AS(LinearScm(2, w, {unit_uniform(), unit_uniform()}), StructuralError);

    std::vector<double> cyc(4, 0.0);
    cyc[0 * 2 + 1] = 0.5;
    cyc[1 * 2 + 0] = 0.5;
    CHECK_THROWS_AS(LinearScm(2, cyc, {unit_uniform(), unit_uniform()}), StructuralError);

    std::vector<double> bad(4, 0.0);
    bad[0 * 2 + 1] = std::nan("");
    CHECK_THROWS_AS(LinearScm(2, bad, {unit_uniform(), unit_uniform()}), ValidationError);
}

TEST_CASE("zero-weight scm gives iid noise columns") {
    const auto scm = LinearScm::zero(3, NoiseSpec::gaussian(0.0, 1.0));
    const auto data = simulate(scm, 20000, 11);
    const double tol = 3.0 / std::sqrt(20000.0);
    for (int t = 0; t < 3; ++t) CHECK(std::abs(sample_mean(data, t)) < tol);
    CHECK(std::abs(sample_cov(data, 0, 1)) < 0.03);
    CHECK(std::abs(sample_cov(data, 1, 2)) < 0.03);
    CHECK(sample_cov(data, 0, 0) == doctest::Approx(1.0).epsilon(0.05));
}

TEST_CASE("two-node chain variance adds") {
    std::vector<double> w(4, 0.0);
    w[0 * 2 + 1] = 1.0;
    const LinearScm scm(2, w, std::vector<NoiseSpec>(2, NoiseSpec::uniform(-1.0, 1.0)));
    const auto data = simulate(scm, 100000, 5);
    CHECK(sample_cov(data, 1, 1) == doctest::Approx(2.0 / 3.0).epsilon(0.03));
}

TEST_CASE("fork scm reproduces the closed-form slope") {
    const auto scm = fork_scm(0.8, 0.6, 0.5, unit_uniform());
    const auto data = simulate(scm, 100000, 42);
    const double slope = sample_cov(data, 3, 2) / sample_cov(data, 2, 2);
    CHECK(slope == doctest::Approx(0.5).epsilon(0.04));
}

TEST_CASE("ols fit recovers fork coefficients") {
    const auto scm = fork_scm(0.8, 0.6, 0.5, unit_uniform());
    const auto data = simulate(scm, 100000, 7);

    const auto fit4 = fit_ols(data, 3, {1, 2});
    CHECK(std::abs(fit4.coefficients[0] - 0.0) < 0.02);
    CHECK(std::abs(fit4.coefficients[1] - 0.5) < 0.02);

    // Regressing the first child on the other two nodes: the indirect path
    // contributes ab/(b^2+1) on node 2 and exactly zero on node 3.
    const auto fit2 = fit_ols(data, 1, {2, 3});
    CHECK(std::abs(fit2.coefficients[0] - 0.48 / 1.36) < 0.02);
    CHECK(std::abs(fit2.coefficients[1] - 0.0) < 0.02);
}

TEST_CASE("ols residuals are orthogonal to regressors") {
    const auto scm = fork_scm(0.8, 0.6, 0.5, unit_uniform());
    const auto data = simulate(scm, 5000, 9);
    const auto fit = fit_ols(data, 3, {0, 1, 2});
    for (int r : fit.regressors)
        CHECK(std::abs(correlation(fit.residuals, data.column(r))) < 1e-8);
}

TEST_CASE("ols exact fit on duplicated column") {
    SampleMatrix data;
    data.n_samples = 12;
    data.n_nodes = 2;
    data.dim = 1;
    data.values.resize(24);
    Rng rng(3);
    for (int s = 0; s < 12; ++s) {
        const double v = rng.uniform(-2.0, 2.0);
        data.at(s, 0) = v;
        data.at(s, 1) = v;
    }
    const auto fit = fit_ols(data, 1, {0});
    CHECK(fit.coefficients[0] == doctest::Approx(1.0).epsilon(1e-10));
    CHECK(std::abs(fit.intercept) < 1e-10);
    for (double r : fit.residuals) CHECK(std::abs(r) < 1e-10);
}

TEST_CASE("ols reports rank deficiency with offending columns") {
    SampleMatrix data;
    data.n_samples = 20;
    data.n_nodes = 3;
    data.dim = 1;
    data.values.resize(60);
    Rng rng(4);
    for (int s = 0; s < 20; ++s) {
        const double v = rng.gaussian();
        data.at(s, 0) = v;
        data.at(s, 1) = v; // exact duplicate of column 0
        data.at(s, 2) = rng.gaussian();
    }
    CHECK_THROWS_AS(fit_ols(data, 2, {0, 1}), NumericError);
    CHECK_THROWS_WITH_AS(fit_ols(data, 2, {0, 1}),
                         doctest::Contains("rank-deficient"), NumericError);
}

TEST_CASE("ols input validation") {
    SampleMatrix data;
    data.n_samples = 10;
    data.n_nodes = 2;
    data.dim = 1;
    data.values.assign(20, 0.0);
    CHECK_THROWS_AS(fit_ols(data, 0, {}), ValidationError);
    CHECK_THROWS_AS(fit_ols(data, 0, {0}), ValidationError);
    CHECK_THROWS_AS(fit_ols(data, 0, {1, 1}), ValidationError);
    CHECK_THROWS_AS(fit_ols(data, 5, {1}), ValidationError);
}

TEST_CASE("population fit matches hand algebra exactly") {
    const auto scm = fork_scm(0.8, 0.6, 0.5, unit_uniform());

    const auto beta4 = population_fit(scm, 3, {1, 2});
    CHECK(std::abs(beta4[0] - 0.0) < 1e-12);
    CHECK(std::abs(beta4[1] - 0.5) < 1e-12);

    const auto beta2 = population_fit(scm, 1, {2, 3});
    CHECK(std::abs(beta2[0] - 0.48 / 1.36) < 1e-12);
    CHECK(std::abs(beta2[1] - 0.0) < 1e-12);
}

TEST_CASE("population fit on disconnected target is zero") {
    const auto scm = LinearScm::zero(3, unit_uniform());
    const auto beta = population_fit(scm, 2, {0, 1});
    CHECK(std::abs(beta[0]) < 1e-12);
    CHECK(std::abs(beta[1]) < 1e-12);
}

TEST_CASE("population fit recovers a bivariate chain weight") {
    std::vector<double> w(4, 0.0);
    w[0 * 2 + 1] = 0.7;
    const LinearScm scm(2, w, std::vector<NoiseSpec>(2, unit_uniform()));
    const auto beta = population_fit(scm, 1, {0});
    CHECK(beta[0] == doctest::Approx(0.7).epsilon(1e-12));
}

TEST_CASE("ols converges to population coefficients") {
    Rng rng(21);
    const auto scm = random_dag(4, rng);
    const auto data = simulate(scm, 100000, 22);
    const auto fit = fit_ols(data, 3, {0, 1, 2});
    const auto pop = population_fit(scm, 3, {0, 1, 2});
    for (int k = 0; k < 3; ++k) CHECK(std::abs(fit.coefficients[k] - pop[k]) < 0.02);
}

TEST_CASE("structural round trip reproduces samples") {
    Rng rng(31);
    for (int trial = 0; trial < 5; ++trial) {
        const auto scm = random_dag(5, rng);
        const auto data = simulate(scm, 50, 100 + trial);
        const int n = scm.n_nodes();
        for (int s = 0; s < data.n_samples; ++s) {
            // Recover the noise, then push it forward again.
            std::vector<double> e(n), u(n);
            for (int t = 0; t < n; ++t) {
                e[t] = data.at(s, t);
                for (int i = 0; i < n; ++i) e[t] -= scm.weight(i, t) * data.at(s, i);
            }
            for (int t : scm.topo_order()) {
                u[t] = e[t];
                for (int i = 0; i < n; ++i) u[t] += scm.weight(i, t) * u[i];
            }
            for (int t = 0; t < n; ++t) CHECK(std::abs(u[t] - data.at(s, t)) < 1e-10);
        }
    }
}

TEST_CASE("identity minus transposed adjacency has unit determinant") {
    Rng rng(41);
    for (int trial = 0; trial < 10; ++trial) {
        const auto scm = random_dag(6, rng);
        const int n = scm.n_nodes();
        Eigen::MatrixXd m = Eigen::MatrixXd::Identity(n, n);
        for (int t = 0; t < n; ++t)
            for (int i = 0; i < n; ++i) m(t, i) -= scm.weight(i, t);
        CHECK(m.determinant() == doctest::Approx(1.0).epsilon(1e-9));

        // Triangularity under the topological permutation.
        std::vector<int> pos(n);
        for (int k = 0; k < n; ++k) pos[scm.topo_order()[k]] = k;
        for (int i = 0; i < n; ++i)
            for (int t = 0; t < n; ++t)
                if (scm.weight(i, t) != 0.0) CHECK(pos[i] < pos[t]);
    }
}

TEST_CASE("intervention removes incoming edges only") {
    const auto scm = fork_scm(0.8, 0.6, 0.5, unit_uniform());

    const auto on_root = scm.intervene({0});
    CHECK(on_root.weights() == scm.weights());

    const auto cut = scm.intervene({3});
    CHECK(cut.weight(2, 3) == 0.0);
    CHECK(cut.weight(0, 1) == 0.8);
    const auto data = simulate(cut, 100000, 17);
    CHECK(std::abs(sample_cov(data, 3, 2)) < 3.0 / std::sqrt(100000.0) * 2.0);

    const auto all = scm.intervene({0, 1, 2, 3});
    for (double w : all.weights()) CHECK(w == 0.0);

    const auto twice = scm.intervene({3}).intervene({3});
    CHECK(twice.weights() == cut.weights());
}

TEST_CASE("json round trip preserves the model") {
    const auto scm = fork_scm(0.8, 0.6, 0.5, NoiseSpec::uniform(-0.25, 0.25, 3));
    const auto back = LinearScm::from_json(scm.to_json());
    CHECK(back.n_nodes() == scm.n_nodes());
    CHECK(back.weights() == scm.weights());
    CHECK(back.dimension() == 3);
    CHECK(back.topo_order() == scm.topo_order());
    for (int i = 0; i < 4; ++i) {
        CHECK(back.noise(i).family == scm.noise(i).family);
        CHECK(back.noise(i).param_a == scm.noise(i).param_a);
        CHECK(back.noise(i).param_b == scm.noise(i).param_b);
    }
    CHECK_THROWS_AS(LinearScm::from_json("{not json"), ValidationError);
}

TEST_CASE("simulation is deterministic and seed sensitive") {
    const auto scm = fork_scm(0.8, 0.6, 0.5, unit_uniform());
    const auto a = simulate(scm, 100, 99);
    const auto b = simulate(scm, 100, 99);
    const auto c = simulate(scm, 100, 98);
    CHECK(a.values == b.values);
    CHECK(a.values != c.values);

    // Prefix stability: the first samples do not depend on the total count.
    const auto longer = simulate(scm, 150, 99);
    for (int s = 0; s < 100; ++s)
        for (int t = 0; t < 4; ++t) CHECK(longer.at(s, t) == a.at(s, t));
}

TEST_CASE("multidimensional simulation shares scalar weights") {
    const auto scm = fork_scm(0.8, 0.6, 0.5, NoiseSpec::gaussian(0.0, 1.0, 8));
    const auto data = simulate(scm, 500, 55);
    CHECK(data.dim == 8);
    // Node 3 minus 0.5 * node 2 must be independent noise, dimension-wise.
    for (int d = 0; d < 8; ++d) {
        double acc = 0.0;
        for (int s = 0; s < data.n_samples; ++s)
            acc += (data.at(s, 3, d) - 0.5 * data.at(s, 2, d));
        CHECK(std::abs(acc / data.n_samples) < 0.2);
    }
}
