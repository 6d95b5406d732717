#include "dialscm/scm.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <deque>
#include <sstream>

#include <json.hpp>

#include "dialscm/independence.hpp"
#include "dialscm/rng.hpp"

namespace dialscm {

using nlohmann::json;

NoiseSpec NoiseSpec::gaussian(double mu, double sigma, int dim) {
    NoiseSpec s;
    s.family = Family::Gaussian;
    s.param_a = mu;
    s.param_b = sigma;
    s.dimension = dim;
    s.validate();
    return s;
}

NoiseSpec NoiseSpec::uniform(double lo, double hi, int dim) {
    NoiseSpec s;
    s.family = Family::Uniform;
    s.param_a = lo;
    s.param_b = hi;
    s.dimension = dim;
    s.validate();
    return s;
}

double NoiseSpec::variance() const {
    if (family == Family::Gaussian) return param_b * param_b;
    const double w = param_b - param_a;
    return w * w / 12.0;
}

double NoiseSpec::mean() const {
    if (family == Family::Gaussian) return param_a;
    return 0.5 * (param_a + param_b);
}

void NoiseSpec::validate() const {
    if (!std::isfinite(param_a) || !std::isfinite(param_b))
        throw ValidationError("noise parameters must be finite");
    if (family == Family::Gaussian && param_b <= 0.0)
        throw ValidationError("gaussian noise requires sigma > 0");
    if (family == Family::Uniform && param_a >= param_b)
        throw ValidationError("uniform noise requires lo < hi");
    if (dimension < 1) throw ValidationError("noise dimension must be >= 1");
}

LinearScm::LinearScm(int n_nodes, std::vector<double> weights, std::vector<NoiseSpec> noise)
    : n_(n_nodes), weights_(std::move(weights)), noise_(std::move(noise)) {
    if (n_ < 1) throw ValidationError("SCM needs at least one node");
    if (weights_.size() != static_cast<std::size_t>(n_) * n_)
        throw ValidationError("weight matrix must be n_nodes x n_nodes");
    if (noise_.size() != static_cast<std::size_t>(n_))
        throw ValidationError("one NoiseSpec per node required");
    for (const auto& s : noise_) {
        s.validate();
        if (s.dimension != noise_[0].dimension)
            throw ValidationError("all nodes must share one noise dimension");
    }
    validate_and_sort();
}

LinearScm LinearScm::zero(int n_nodes, NoiseSpec noise) {
    return LinearScm(n_nodes,
                     std::vector<double>(static_cast<std::size_t>(n_nodes) * n_nodes, 0.0),
                     std::vector<NoiseSpec>(static_cast<std::size_t>(n_nodes), noise));
}

void LinearScm::validate_and_sort() {
    for (double w : weights_)
        if (!std::isfinite(w)) throw ValidationError("non-finite weight in SCM");
    for (int i = 0; i < n_; ++i)
        if (weights_[idx(i, i)] != 0.0)
            throw StructuralError("self-loop: diagonal weights must be zero");

    // Kahn's algorithm over the nonzero edge pattern.
    std::vector<int> in_degree(n_, 0);
    for (int s = 0; s < n_; ++s)
        for (int t = 0; t < n_; ++t)
            if (weights_[idx(s, t)] != 0.0) ++in_degree[t];

    std::deque<int> ready;
    for (int t = 0; t < n_; ++t)
        if (in_degree[t] == 0) ready.push_back(t);

    topo_.clear();
    topo_.reserve(n_);
    while (!ready.empty()) {
        const int s = ready.front();
        ready.pop_front();
        topo_.push_back(s);
        for (int t = 0; t < n_; ++t) {
            if (weights_[idx(s, t)] != 0.0 && --in_degree[t] == 0) ready.push_back(t);
        }
    }
    if (static_cast<int>(topo_.size()) != n_)
        throw StructuralError("cycle detected in SCM weights");
}

std::vector<int> LinearScm::parents(int target) const {
    if (target < 0 || target >= n_) throw ValidationError("node index out of range");
    std::vector<int> out;
    for (int s = 0; s < n_; ++s)
        if (weights_[idx(s, target)] != 0.0) out.push_back(s);
    return out;
}

LinearScm LinearScm::intervene(const std::vector<int>& nodes) const {
    std::vector<double> w = weights_;
    for (int t : nodes) {
        if (t < 0 || t >= n_) throw ValidationError("intervention node index out of range");
        for (int s = 0; s < n_; ++s) w[idx(s, t)] = 0.0;
    }
    return LinearScm(n_, std::move(w), noise_);
}

namespace {

const char* family_name(NoiseSpec::Family f) {
    return f == NoiseSpec::Family::Gaussian ? "gaussian" : "uniform";
}

NoiseSpec::Family family_from(const std::string& name) {
    if (name == "gaussian") return NoiseSpec::Family::Gaussian;
    if (name == "uniform") return NoiseSpec::Family::Uniform;
    throw ValidationError("unknown noise family: " + name);
}

} // namespace

std::string LinearScm::to_json() const {
    json j;
    j["n_nodes"] = n_;
    j["weights"] = weights_;
    json noise = json::array();
    for (const auto& s : noise_) {
        noise.push_back({{"family", family_name(s.family)},
                         {"params", {s.param_a, s.param_b}},
                         {"dim", s.dimension}});
    }
    j["noise"] = noise;
    j["topo_order"] = topo_;
    return j.dump(2);
}

LinearScm LinearScm::from_json(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ValidationError(std::string("SCM JSON parse error: ") + e.what());
    }
    const int n = j.at("n_nodes").get<int>();
    auto weights = j.at("weights").get<std::vector<double>>();
    std::vector<NoiseSpec> noise;
    for (const auto& item : j.at("noise")) {
        NoiseSpec s;
        s.family = family_from(item.at("family").get<std::string>());
        const auto params = item.at("params").get<std::vector<double>>();
        if (params.size() != 2) throw ValidationError("noise params must have two entries");
        s.param_a = params[0];
        s.param_b = params[1];
        s.dimension = item.value("dim", 1);
        noise.push_back(s);
    }
    return LinearScm(n, std::move(weights), std::move(noise));
}

std::vector<double> SampleMatrix::column(int node) const {
    std::vector<double> out(static_cast<std::size_t>(n_samples) * dim);
    for (int s = 0; s < n_samples; ++s)
        for (int d = 0; d < dim; ++d)
            out[static_cast<std::size_t>(s) * dim + d] = at(s, node, d);
    return out;
}

SampleMatrix simulate(const LinearScm& scm, int n_samples, std::uint64_t seed) {
    if (n_samples < 1) throw ValidationError("n_samples must be >= 1");
    const int n = scm.n_nodes();
    const int dim = scm.dimension();

    SampleMatrix out;
    out.n_samples = n_samples;
    out.n_nodes = n;
    out.dim = dim;
    out.values.assign(static_cast<std::size_t>(n_samples) * n * dim, 0.0);
    out.provenance = "simulate(seed=" + std::to_string(seed) + ")";

    Rng root(seed);
    std::vector<double> noise(static_cast<std::size_t>(n) * dim);
    for (int s = 0; s < n_samples; ++s) {
        Rng rng = root.derive(static_cast<std::uint64_t>(s));
        for (int t = 0; t < n; ++t) {
            const NoiseSpec& spec = scm.noise(t);
            for (int d = 0; d < dim; ++d) {
                noise[static_cast<std::size_t>(t) * dim + d] =
                    spec.family == NoiseSpec::Family::Gaussian
                        ? rng.gaussian(spec.param_a, spec.param_b)
                        : rng.uniform(spec.param_a, spec.param_b);
            }
        }
        // Forward substitution along the topological order.
        for (int t : scm.topo_order()) {
            for (int d = 0; d < dim; ++d) {
                double acc = noise[static_cast<std::size_t>(t) * dim + d];
                for (int i = 0; i < n; ++i) {
                    const double w = scm.weight(i, t);
                    if (w != 0.0) acc += w * out.at(s, i, d);
                }
                out.at(s, t, d) = acc;
            }
        }
    }
    return out;
}

namespace {

void check_fit_inputs(const SampleMatrix& data, int target, const std::vector<int>& regressors) {
    if (regressors.empty()) throw ValidationError("fit needs at least one regressor");
    if (target < 0 || target >= data.n_nodes) throw ValidationError("fit target out of range");
    std::vector<int> seen;
    for (int r : regressors) {
        if (r < 0 || r >= data.n_nodes) throw ValidationError("regressor index out of range");
        if (r == target) throw ValidationError("target cannot be its own regressor");
        if (std::find(seen.begin(), seen.end(), r) != seen.end())
            throw ValidationError("duplicate regressor index");
        seen.push_back(r);
    }
    if (data.n_samples <= static_cast<int>(regressors.size()) + 1)
        throw ValidationError("need n_samples > |regressors| + 1");
}

} // namespace

FitResult fit_ols(const SampleMatrix& data, int target, const std::vector<int>& regressors) {
    check_fit_inputs(data, target, regressors);
    const int p = static_cast<int>(regressors.size());
    const Eigen::Index rows = static_cast<Eigen::Index>(data.n_samples) * data.dim;

    Eigen::MatrixXd X(rows, p + 1);
    Eigen::VectorXd y(rows);
    for (int s = 0; s < data.n_samples; ++s) {
        for (int d = 0; d < data.dim; ++d) {
            const Eigen::Index r = static_cast<Eigen::Index>(s) * data.dim + d;
            X(r, 0) = 1.0;
            for (int c = 0; c < p; ++c) X(r, c + 1) = data.at(s, regressors[c], d);
            y(r) = data.at(s, target, d);
        }
    }

    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(X);
    qr.setThreshold(1e-10);
    if (qr.rank() < p + 1) {
        // Pivot columns past the numerical rank are the dependent ones.
        const auto& perm = qr.colsPermutation().indices();
        std::ostringstream msg;
        msg << "rank-deficient regressor set; offending columns:";
        for (Eigen::Index k = qr.rank(); k < perm.size(); ++k) {
            const int col = perm(k);
            if (col == 0)
                msg << " intercept";
            else
                msg << " " << regressors[col - 1];
        }
        throw NumericError(msg.str());
    }

    const Eigen::VectorXd beta = qr.solve(y);
    const Eigen::VectorXd resid = y - X * beta;

    FitResult fit;
    fit.target = target;
    fit.regressors = regressors;
    fit.intercept = beta(0);
    fit.coefficients.assign(beta.data() + 1, beta.data() + 1 + p);
    fit.residuals.assign(resid.data(), resid.data() + resid.size());
    return fit;
}

namespace {

Eigen::MatrixXd mixing_eigen(const LinearScm& scm) {
    const int n = scm.n_nodes();
    Eigen::MatrixXd a_t(n, n); // (A^T)_{t,i} = weight(i, t)
    for (int t = 0; t < n; ++t)
        for (int i = 0; i < n; ++i) a_t(t, i) = scm.weight(i, t);
    return (Eigen::MatrixXd::Identity(n, n) - a_t).inverse();
}

} // namespace

std::vector<double> mixing_matrix(const LinearScm& scm) {
    const int n = scm.n_nodes();
    const Eigen::MatrixXd m = mixing_eigen(scm);
    std::vector<double> out(static_cast<std::size_t>(n) * n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) out[static_cast<std::size_t>(i) * n + j] = m(i, j);
    return out;
}

std::vector<double> population_covariance(const LinearScm& scm) {
    const int n = scm.n_nodes();
    const Eigen::MatrixXd m = mixing_eigen(scm);
    Eigen::VectorXd d(n);
    for (int i = 0; i < n; ++i) d(i) = scm.noise(i).variance();
    const Eigen::MatrixXd cov = m * d.asDiagonal() * m.transpose();

    std::vector<double> out(static_cast<std::size_t>(n) * n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) out[static_cast<std::size_t>(i) * n + j] = cov(i, j);
    return out;
}

std::vector<double> population_fit(const LinearScm& scm, int target,
                                   const std::vector<int>& regressors) {
    if (regressors.empty()) throw ValidationError("fit needs at least one regressor");
    for (int r : regressors)
        if (r == target) throw ValidationError("target cannot be its own regressor");

    const int n = scm.n_nodes();
    const int p = static_cast<int>(regressors.size());
    const std::vector<double> cov = population_covariance(scm);
    auto c = [&](int i, int j) { return cov[static_cast<std::size_t>(i) * n + j]; };

    Eigen::MatrixXd rr(p, p);
    Eigen::VectorXd rt(p);
    for (int a = 0; a < p; ++a) {
        rt(a) = c(regressors[a], target);
        for (int b = 0; b < p; ++b) rr(a, b) = c(regressors[a], regressors[b]);
    }

    Eigen::FullPivLU<Eigen::MatrixXd> lu(rr);
    lu.setThreshold(1e-12);
    if (!lu.isInvertible())
        throw NumericError("degenerate regressor covariance in population fit");
    const Eigen::VectorXd beta = lu.solve(rt);
    return std::vector<double>(beta.data(), beta.data() + p);
}

bool confounding_test_nonadjacent(const SampleMatrix& data, int i, int j,
                                  const ConfoundingConfig& config) {
    if (i < 0 || i >= data.n_nodes || j < 0 || j >= data.n_nodes || i == j)
        throw ValidationError("invalid node pair for confounding test");
    if (data.n_samples < config.min_samples)
        throw ValidationError("insufficient samples for confounding test: have " +
                              std::to_string(data.n_samples) + ", need " +
                              std::to_string(config.min_samples));

    IndependenceConfig ind;
    ind.n_permutations = config.n_permutations;
    ind.significance = config.significance;
    ind.max_samples = config.max_test_samples;
    const IndependenceReport report =
        independence_test(data.column(i), data.column(j), ind, config.seed);
    return report.reject_independence;
}

namespace {

struct SlopeEstimate {
    double slope = 0.0;
    double stderr_ = 0.0;
};

SlopeEstimate bivariate_slope(const SampleMatrix& data, int x, int y) {
    const std::vector<double> xs = data.column(x);
    const std::vector<double> ys = data.column(y);
    const std::size_t n = xs.size();
    double mx = 0.0, my = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
        mx += xs[k];
        my += ys[k];
    }
    mx /= static_cast<double>(n);
    my /= static_cast<double>(n);
    double sxx = 0.0, sxy = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
        sxx += (xs[k] - mx) * (xs[k] - mx);
        sxy += (xs[k] - mx) * (ys[k] - my);
    }
    if (sxx <= 0.0) throw NumericError("degenerate regressor in slope estimate");
    SlopeEstimate est;
    est.slope = sxy / sxx;
    double rss = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
        const double r = ys[k] - my - est.slope * (xs[k] - mx);
        rss += r * r;
    }
    est.stderr_ = std::sqrt(rss / (static_cast<double>(n) - 2.0) / sxx);
    return est;
}

} // namespace

bool confounding_test_adjacent(const LinearScm& scm, const SampleMatrix& data_obs,
                               int i, int j, int n_samples, std::uint64_t seed,
                               const ConfoundingConfig& config) {
    if (scm.weight(i, j) == 0.0)
        throw ValidationError("confounding_test_adjacent requires an edge i -> j");
    if (data_obs.n_samples < config.min_samples || n_samples < config.min_samples)
        throw ValidationError("insufficient samples for confounding test");

    const SlopeEstimate obs = bivariate_slope(data_obs, i, j);
    const SampleMatrix data_int = simulate(scm.intervene({i}), n_samples, seed);
    const SlopeEstimate intv = bivariate_slope(data_int, i, j);

    const double pooled =
        std::sqrt(obs.stderr_ * obs.stderr_ + intv.stderr_ * intv.stderr_);
    return std::abs(obs.slope - intv.slope) > config.slope_se_multiplier * pooled;
}

} // namespace dialscm
