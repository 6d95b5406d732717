#include "dialscm/discrimination.hpp"

#include <cmath>

#include <json.hpp>

#include "dialscm/error.hpp"
#include "dialscm/rng.hpp"

namespace dialscm {

using nlohmann::json;

std::string verdict_name(VerdictKind kind) {
    switch (kind) {
        case VerdictKind::YCausesX: return "YCausesX";
        case VerdictKind::XCausesY: return "XCausesY";
        case VerdictKind::LatentCommonCause: return "LatentCommonCause";
        case VerdictKind::IndependentOrCommonEffect: return "IndependentOrCommonEffect";
    }
    throw ValidationError("unreachable verdict kind");
}

VerdictKind verdict_from_name(const std::string& name) {
    if (name == "YCausesX") return VerdictKind::YCausesX;
    if (name == "XCausesY") return VerdictKind::XCausesY;
    if (name == "LatentCommonCause") return VerdictKind::LatentCommonCause;
    if (name == "IndependentOrCommonEffect") return VerdictKind::IndependentOrCommonEffect;
    throw ValidationError("unknown verdict kind: " + name);
}

std::string verdict_to_json(const CausalVerdict& verdict) {
    json j;
    j["x"] = verdict.x;
    j["y"] = verdict.y;
    j["kind"] = verdict_name(verdict.kind);
    j["dcor_xy"] = verdict.sigma_x_vs_y.statistic;
    j["dcor_yx"] = verdict.sigma_y_vs_x.statistic;
    j["p_xy"] = verdict.sigma_x_vs_y.p_value;
    j["p_yx"] = verdict.sigma_y_vs_x.p_value;
    return j.dump();
}

VerdictKind classify_residual_independence(bool sigma_x_indep, bool sigma_y_indep) {
    if (sigma_x_indep && !sigma_y_indep) return VerdictKind::YCausesX;
    if (!sigma_x_indep && sigma_y_indep) return VerdictKind::XCausesY;
    if (!sigma_x_indep && !sigma_y_indep) return VerdictKind::LatentCommonCause;
    return VerdictKind::IndependentOrCommonEffect;
}

namespace {

// One residual test gets one seed, keyed by the unordered pair plus the node
// acting as regressor. Both argument orders of discriminate_pair therefore
// run identical tests.
std::uint64_t pair_test_seed(std::uint64_t seed, int a, int b, int regressor) {
    const int lo = a < b ? a : b;
    const int hi = a < b ? b : a;
    const std::uint64_t pair =
        (static_cast<std::uint64_t>(lo) << 32) | static_cast<std::uint64_t>(hi);
    return mix_seed(mix_seed(seed, pair), static_cast<std::uint64_t>(regressor));
}

} // namespace

CausalVerdict discriminate_pair(const SampleMatrix& data, int x, int y,
                                const DiscriminationConfig& config) {
    if (x == y) throw ValidationError("discriminate_pair needs two distinct nodes");

    const FitResult fit_x = fit_ols(data, x, {y});
    const FitResult fit_y = fit_ols(data, y, {x});

    CausalVerdict verdict;
    verdict.x = x;
    verdict.y = y;
    verdict.sigma_x_vs_y = independence_test(fit_x.residuals, data.column(y),
                                             config.independence,
                                             pair_test_seed(config.seed, x, y, y));
    verdict.sigma_y_vs_x = independence_test(fit_y.residuals, data.column(x),
                                             config.independence,
                                             pair_test_seed(config.seed, x, y, x));

    verdict.kind =
        classify_residual_independence(!verdict.sigma_x_vs_y.reject_independence,
                                       !verdict.sigma_y_vs_x.reject_independence);
    return verdict;
}

namespace {

std::vector<double> centered_column(const SampleMatrix& data, int node) {
    std::vector<double> col = data.column(node);
    double mean = 0.0;
    for (double v : col) mean += v;
    mean /= static_cast<double>(col.size());
    for (double& v : col) v -= mean;
    return col;
}

} // namespace

MultivariateReport discriminate_multivariate(const SampleMatrix& data, int target,
                                             const std::vector<int>& regressors,
                                             const DiscriminationConfig& config) {
    MultivariateReport report;
    report.target = target;
    report.fit = fit_ols(data, target, regressors);

    for (std::size_t k = 0; k < regressors.size(); ++k) {
        EdgeJudgment edge;
        edge.regressor = regressors[k];
        edge.coefficient = report.fit.coefficients[k];
        if (std::abs(edge.coefficient) >= config.zero_threshold) {
            edge.present = true;
            report.edges.push_back(edge);
            continue;
        }

        std::vector<int> rest;
        for (int r : regressors)
            if (r != regressors[k]) rest.push_back(r);
        const std::vector<double> residual =
            rest.empty() ? centered_column(data, target)
                         : fit_ols(data, target, rest).residuals;

        edge.tested = true;
        edge.refit_test = independence_test(
            residual, data.column(regressors[k]), config.independence,
            mix_seed(mix_seed(config.seed, static_cast<std::uint64_t>(target)),
                     static_cast<std::uint64_t>(regressors[k])));
        edge.present = edge.refit_test.reject_independence;
        report.edges.push_back(edge);
    }
    return report;
}

} // namespace dialscm
