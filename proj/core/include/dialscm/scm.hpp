#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "dialscm/error.hpp"

namespace dialscm {

// Exogenous noise attached to one node. Draws are i.i.d. across nodes,
// samples and dimensions.
struct NoiseSpec {
    enum class Family { Gaussian, Uniform };

    Family family = Family::Gaussian;
    // Gaussian: {mu, sigma}. Uniform: {lo, hi}.
    double param_a = 0.0;
    double param_b = 1.0;
    int dimension = 1;

    static NoiseSpec gaussian(double mu, double sigma, int dim = 1);
    static NoiseSpec uniform(double lo, double hi, int dim = 1);

    double variance() const;
    double mean() const;
    void validate() const;
};

// Linear SCM over n nodes: node t = sum_i weights[i][t] * node i + noise t.
// weights[i][t] is the strength of the directed edge i -> t; the nonzero
// pattern must form a DAG and the diagonal is identically zero.
class LinearScm {
public:
    LinearScm(int n_nodes, std::vector<double> weights, std::vector<NoiseSpec> noise);

    static LinearScm zero(int n_nodes, NoiseSpec noise);

    int n_nodes() const { return n_; }
    int dimension() const { return noise_.empty() ? 1 : noise_[0].dimension; }
    double weight(int source, int target) const { return weights_[idx(source, target)]; }
    const std::vector<double>& weights() const { return weights_; }
    const NoiseSpec& noise(int node) const { return noise_.at(node); }
    const std::vector<NoiseSpec>& noise_specs() const { return noise_; }
    const std::vector<int>& topo_order() const { return topo_; }

    // Parent set of `target` (nonzero incoming weights), ascending.
    std::vector<int> parents(int target) const;

    // do(node) := Pa(node) = {}: zero every incoming weight of each node.
    LinearScm intervene(const std::vector<int>& nodes) const;

    std::string to_json() const;
    static LinearScm from_json(const std::string& text);

private:
    int idx(int source, int target) const { return source * n_ + target; }
    void validate_and_sort();

    int n_;
    std::vector<double> weights_; // row-major n x n, [source][target]
    std::vector<NoiseSpec> noise_;
    std::vector<int> topo_; // topo_[k] = node simulated at step k
};

// Realized node values. values[(s * n_nodes + node) * dim + d].
struct SampleMatrix {
    int n_samples = 0;
    int n_nodes = 0;
    int dim = 1;
    std::vector<double> values;
    std::string provenance;

    double at(int sample, int node, int d = 0) const {
        return values[(static_cast<std::size_t>(sample) * n_nodes + node) * dim + d];
    }
    double& at(int sample, int node, int d = 0) {
        return values[(static_cast<std::size_t>(sample) * n_nodes + node) * dim + d];
    }
    // Column of one node, dimensions stacked sample-major: length n_samples*dim.
    std::vector<double> column(int node) const;
};

// One multivariate OLS fit of `target` on `regressors`, intercept included.
struct FitResult {
    int target = -1;
    std::vector<int> regressors;
    std::vector<double> coefficients;
    double intercept = 0.0;
    std::vector<double> residuals; // length n_samples * dim, sample-major
};

// Draws noise per NoiseSpec and propagates through the structural equations
// in topological order.
SampleMatrix simulate(const LinearScm& scm, int n_samples, std::uint64_t seed);

// Least-squares fit with intercept. Multidimensional columns are stacked as
// extra rows, so one coefficient vector serves all dimensions.
FitResult fit_ols(const SampleMatrix& data, int target, const std::vector<int>& regressors);

// Closed-form regression coefficients from the model covariance
// Cov(U) = (I-A^T)^-1 D (I-A^T)^-T; the oracle that fit_ols converges to.
std::vector<double> population_fit(const LinearScm& scm, int target,
                                   const std::vector<int>& regressors);

// Model covariance matrix of the node values (row-major n x n).
std::vector<double> population_covariance(const LinearScm& scm);

// Rows of (I - A^T)^{-1}: entry [node*n + source] is the coefficient of the
// source node's noise term in the node's value.
std::vector<double> mixing_matrix(const LinearScm& scm);

struct ConfoundingConfig {
    int min_samples = 100;
    int n_permutations = 500;
    double significance = 0.01;
    int max_test_samples = 5000;
    double slope_se_multiplier = 5.0;
    std::uint64_t seed = 0;
};

// Latent-confounder witness for non-adjacent i, j. `data` must come from the
// SCM after intervening on the union of the known parents of i and j; any
// remaining dependence between the two columns flags a hidden common cause.
bool confounding_test_nonadjacent(const SampleMatrix& data, int i, int j,
                                  const ConfoundingConfig& config);

// Latent-confounder witness for an edge i -> j: the observational slope of
// j on i is compared with the slope after do(i). Agreement within
// slope_se_multiplier pooled standard errors means no confounding.
bool confounding_test_adjacent(const LinearScm& scm, const SampleMatrix& data_obs,
                               int i, int j, int n_samples, std::uint64_t seed,
                               const ConfoundingConfig& config);

} // namespace dialscm
