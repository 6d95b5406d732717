#pragma once

#include <array>
#include <cstddef>
#include <vector>

namespace dialscm {

// Binary logistic-regression probe over frozen feature rows. Deterministic:
// zero-initialized, full-batch adaptive-moment updates, no data-dependent
// stopping.
class LinearProbe {
public:
    void fit(const std::vector<std::vector<double>>& features, const std::vector<int>& labels,
             int iterations = 300, double learning_rate = 0.1, double l2 = 1e-4);

    bool trained() const { return !weights_.empty(); }
    int predict(const std::vector<double>& row) const;
    double accuracy(const std::vector<std::vector<double>>& features,
                    const std::vector<int>& labels) const;

private:
    std::vector<double> weights_; // bias stored last
};

// First two principal components of the centered rows; coordinates are
// returned in row order for plotting exports.
std::vector<std::array<double, 2>> project_2d(const std::vector<std::vector<double>>& rows);

} // namespace dialscm
