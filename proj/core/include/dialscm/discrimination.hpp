#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dialscm/independence.hpp"
#include "dialscm/scm.hpp"

namespace dialscm {

enum class VerdictKind {
    YCausesX,
    XCausesY,
    LatentCommonCause,
    IndependentOrCommonEffect,
};

std::string verdict_name(VerdictKind kind);
VerdictKind verdict_from_name(const std::string& name);

// Pure mapping from the two residual-independence outcomes to a verdict.
// Argument order: does the residual of x-on-y stay independent of y, and
// does the residual of y-on-x stay independent of x.
VerdictKind classify_residual_independence(bool sigma_x_indep, bool sigma_y_indep);

struct CausalVerdict {
    int x = 0;
    int y = 0;
    VerdictKind kind = VerdictKind::IndependentOrCommonEffect;
    // Evidence: residual of x fitted on y, tested against y; and vice versa.
    IndependenceReport sigma_x_vs_y;
    IndependenceReport sigma_y_vs_x;
};

std::string verdict_to_json(const CausalVerdict& verdict);

struct DiscriminationConfig {
    IndependenceConfig independence;
    double zero_threshold = 0.1;
    std::uint64_t seed = 0;
};

// Definition-2 pair classification over fitted residuals. Permutation seeds
// derive from the unordered pair, so swapping x and y mirrors the verdict
// exactly (YCausesX <-> XCausesY) on the same data and seed.
CausalVerdict discriminate_pair(const SampleMatrix& data, int x, int y,
                                const DiscriminationConfig& config);

struct EdgeJudgment {
    int regressor = 0;
    double coefficient = 0.0; // from the full fit
    bool present = true;
    // Refit residual test, run only when |coefficient| < zero_threshold.
    bool tested = false;
    IndependenceReport refit_test;
};

struct MultivariateReport {
    int target = 0;
    FitResult fit;
    std::vector<EdgeJudgment> edges;
};

// Multivariate screening: a regressor is absent only when its coefficient is
// below zero_threshold AND the residual of a refit without it stays
// independent of it.
MultivariateReport discriminate_multivariate(const SampleMatrix& data, int target,
                                             const std::vector<int>& regressors,
                                             const DiscriminationConfig& config);

} // namespace dialscm
