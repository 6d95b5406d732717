#include "dialscm/probe.hpp"

#include "dialscm/error.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <cstddef>

namespace dialscm {

namespace {

double stable_sigmoid(double z) {
    if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
    const double e = std::exp(z);
    return e / (1.0 + e);
}

void check_rows(const std::vector<std::vector<double>>& features,
                const std::vector<int>& labels) {
    if (features.empty()) throw ValidationError("probe: no feature rows");
    if (features.size() != labels.size()) {
        throw ValidationError("probe: feature/label count mismatch");
    }
    const std::size_t d = features.front().size();
    for (const auto& row : features) {
        if (row.size() != d) throw ValidationError("probe: ragged feature rows");
    }
    for (int y : labels) {
        if (y != 0 && y != 1) throw ValidationError("probe: labels must be 0 or 1");
    }
}

} // namespace

void LinearProbe::fit(const std::vector<std::vector<double>>& features,
                      const std::vector<int>& labels, int iterations, double learning_rate,
                      double l2) {
    check_rows(features, labels);
    if (iterations < 1) throw ValidationError("probe: iterations must be >= 1");
    const std::size_t m = features.size();
    const std::size_t d = features.front().size();
    weights_.assign(d + 1, 0.0);

    std::vector<double> grad(d + 1), mom(d + 1, 0.0), sq(d + 1, 0.0);
    for (int it = 1; it <= iterations; ++it) {
        std::fill(grad.begin(), grad.end(), 0.0);
        for (std::size_t r = 0; r < m; ++r) {
            double z = weights_[d];
            for (std::size_t j = 0; j < d; ++j) z += weights_[j] * features[r][j];
            const double err = stable_sigmoid(z) - static_cast<double>(labels[r]);
            for (std::size_t j = 0; j < d; ++j) grad[j] += err * features[r][j];
            grad[d] += err;
        }
        for (std::size_t j = 0; j <= d; ++j) {
            double g = grad[j] / static_cast<double>(m);
            if (j < d) g += l2 * weights_[j];
            mom[j] = 0.9 * mom[j] + 0.1 * g;
            sq[j] = 0.999 * sq[j] + 0.001 * g * g;
            const double mhat = mom[j] / (1.0 - std::pow(0.9, it));
            const double vhat = sq[j] / (1.0 - std::pow(0.999, it));
            weights_[j] -= learning_rate * mhat / (std::sqrt(vhat) + 1e-8);
        }
    }
}

int LinearProbe::predict(const std::vector<double>& row) const {
    if (!trained()) throw ValidationError("probe: predict before fit");
    if (row.size() + 1 != weights_.size()) throw ValidationError("probe: feature width mismatch");
    double z = weights_.back();
    for (std::size_t j = 0; j < row.size(); ++j) z += weights_[j] * row[j];
    return z > 0.0 ? 1 : 0;
}

double LinearProbe::accuracy(const std::vector<std::vector<double>>& features,
                             const std::vector<int>& labels) const {
    check_rows(features, labels);
    std::size_t hits = 0;
    for (std::size_t r = 0; r < features.size(); ++r) {
        if (predict(features[r]) == labels[r]) ++hits;
    }
    return static_cast<double>(hits) / static_cast<double>(features.size());
}

std::vector<std::array<double, 2>> project_2d(const std::vector<std::vector<double>>& rows) {
    if (rows.empty()) return {};
    const std::size_t m = rows.size();
    const std::size_t d = rows.front().size();
    for (const auto& row : rows) {
        if (row.size() != d) throw ValidationError("project_2d: ragged rows");
    }
    Eigen::MatrixXd x(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(d));
    for (std::size_t r = 0; r < m; ++r) {
        for (std::size_t j = 0; j < d; ++j) {
            x(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(j)) = rows[r][j];
        }
    }
    x.rowwise() -= x.colwise().mean();
    const Eigen::MatrixXd cov = x.transpose() * x / std::max<double>(1.0, double(m) - 1.0);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(cov);
    // Eigenvalues ascend; the last two columns are the leading components.
    const Eigen::Index last = cov.cols() - 1;
    Eigen::MatrixXd basis = Eigen::MatrixXd::Zero(cov.cols(), 2);
    basis.col(0) = solver.eigenvectors().col(last);
    if (cov.cols() >= 2) basis.col(1) = solver.eigenvectors().col(last - 1);
    const Eigen::MatrixXd proj = x * basis;
    std::vector<std::array<double, 2>> out(m);
    for (std::size_t r = 0; r < m; ++r) {
        out[r] = {proj(static_cast<Eigen::Index>(r), 0), proj(static_cast<Eigen::Index>(r), 1)};
    }
    return out;
}

} // namespace dialscm
