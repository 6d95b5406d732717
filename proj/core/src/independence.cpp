#include "dialscm/independence.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>

#include "dialscm/error.hpp"
#include "dialscm/rng.hpp"

namespace dialscm {

namespace {

// Distance covariance over scalar pairs decomposes as
//   dCov^2 = S1/n^2 - 2*S2/n^3 + Sa*Sb/n^4
// with S1 = sum_ij a_ij b_ij, S2 = sum_i a_i. b_i., Sa = sum_ij a_ij,
// where a_ij = |x_i - x_j|. Row sums and Sa are permutation invariant;
// only S1 and the row-sum pairing in S2 change per permutation, and both
// are O(n log n) for scalars. That lets the permutation test run on the
// full sample instead of a power-sapping subsample.
struct MarginalStats {
    std::vector<int> order;      // original index by ascending value
    std::vector<double> row_sum; // indexed by original position
    std::vector<int> rank;       // 1-based tie-aware rank by original position
    double total = 0.0;          // sum_ij |x_i - x_j|
    double dvar2 = 0.0;          // distance variance (V-statistic)
    bool constant = false;
};

MarginalStats marginal_stats(const std::vector<double>& x) {
    const std::size_t n = x.size();
    MarginalStats st;
    st.order.resize(n);
    std::iota(st.order.begin(), st.order.end(), 0);
    std::sort(st.order.begin(), st.order.end(),
              [&](int a, int b) { return x[a] < x[b]; });
    st.constant = x[st.order.front()] == x[st.order.back()];

    st.rank.assign(n, 0);
    int next_rank = 0;
    for (std::size_t k = 0; k < n; ++k) {
        if (k == 0 || x[st.order[k]] != x[st.order[k - 1]]) ++next_rank;
        st.rank[st.order[k]] = next_rank;
    }

    // Row sums via prefix sums over the sorted values.
    st.row_sum.assign(n, 0.0);
    double prefix = 0.0, sum = 0.0, sum_sq = 0.0;
    for (double v : x) {
        sum += v;
        sum_sq += v * v;
    }
    double seen = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
        const double v = x[st.order[k]];
        const double before = static_cast<double>(k);
        const double after = static_cast<double>(n - 1 - k);
        st.row_sum[st.order[k]] =
            (v * before - prefix) + ((sum - seen - v) - v * after);
        prefix += v;
        seen += v;
    }
    for (double r : st.row_sum) st.total += r;

    const double nn = static_cast<double>(n);
    const double s1 = 2.0 * (nn * sum_sq - sum * sum); // sum_ij (x_i-x_j)^2
    double s2 = 0.0;
    for (double r : st.row_sum) s2 += r * r;
    st.dvar2 = s1 / (nn * nn) - 2.0 * s2 / (nn * nn * nn) +
               (st.total / (nn * nn)) * (st.total / (nn * nn));
    return st;
}

// Fenwick tree holding four running aggregates per value rank:
// count, sum y, sum x, sum x*y.
class PairTree {
public:
    explicit PairTree(int ranks) : size_(ranks), nodes_(4 * (ranks + 1), 0.0) {}

    void reset() { std::fill(nodes_.begin(), nodes_.end(), 0.0); }

    void add(int rank, double x, double y) {
        for (int i = rank; i <= size_; i += i & -i) {
            double* node = &nodes_[4 * i];
            node[0] += 1.0;
            node[1] += y;
            node[2] += x;
            node[3] += x * y;
        }
    }

    void prefix(int rank, double out[4]) const {
        out[0] = out[1] = out[2] = out[3] = 0.0;
        for (int i = rank; i > 0; i -= i & -i) {
            const double* node = &nodes_[4 * i];
            out[0] += node[0];
            out[1] += node[1];
            out[2] += node[2];
            out[3] += node[3];
        }
    }

private:
    int size_;
    std::vector<double> nodes_;
};

// S1 = sum_ij |x_i-x_j||y_i-y_j| for the pairing (x sorted position k,
// y[pair[k]]), in one pass over x-ascending order.
double paired_s1(const std::vector<double>& xs_sorted, const std::vector<double>& y,
                 const MarginalStats& ystats, const std::vector<int>& pair,
                 PairTree& tree) {
    tree.reset();
    const std::size_t n = xs_sorted.size();
    double cnt_t = 0.0, sy_t = 0.0, sx_t = 0.0, sxy_t = 0.0;
    double half = 0.0;
    double below[4];
    for (std::size_t k = 0; k < n; ++k) {
        const double xv = xs_sorted[k];
        const double yv = y[pair[k]];
        const int yr = ystats.rank[pair[k]];
        tree.prefix(yr, below);
        const double c_gt = cnt_t - below[0];
        const double sy_gt = sy_t - below[1];
        const double sx_gt = sx_t - below[2];
        const double sxy_gt = sxy_t - below[3];
        // earlier points with y_i <= yv contribute (xv-x_i)(yv-y_i),
        // the rest contribute (xv-x_i)(y_i-yv)
        half += xv * yv * below[0] - xv * below[1] - yv * below[2] + below[3];
        half += xv * sy_gt - xv * yv * c_gt - sxy_gt + yv * sx_gt;
        tree.add(yr, xv, yv);
        cnt_t += 1.0;
        sy_t += yv;
        sx_t += xv;
        sxy_t += xv * yv;
    }
    return 2.0 * half;
}

// Signed power of the z-scored values, in place. Strictly monotone, so it
// preserves both independence and ties; applied per margin it commutes with
// pairing permutations, keeping the permutation test exact.
void emphasize_tails(std::vector<double>& v, double power) {
    if (power == 1.0) return;
    if (power <= 0.0) throw ValidationError("tail_emphasis must be positive");
    double mean = 0.0;
    for (double x : v) mean += x;
    mean /= static_cast<double>(v.size());
    double var = 0.0;
    for (double x : v) var += (x - mean) * (x - mean);
    var /= static_cast<double>(v.size());
    if (var <= 0.0) return; // constant input, short-circuited later
    const double sd = std::sqrt(var);
    for (double& x : v) {
        const double z = (x - mean) / sd;
        x = z < 0.0 ? -std::pow(-z, power) : std::pow(z, power);
    }
}

struct PairedCov {
    const std::vector<double>* y = nullptr;
    const MarginalStats* xs = nullptr;
    const MarginalStats* ys = nullptr;
    std::vector<double> x_sorted;
    std::vector<double> x_rowsum_sorted; // x row sums by sorted position

    double dcov2(const std::vector<int>& pair, PairTree& tree) const {
        const double n = static_cast<double>(x_sorted.size());
        const double s1 = paired_s1(x_sorted, *y, *ys, pair, tree);
        double s2 = 0.0;
        for (std::size_t k = 0; k < x_sorted.size(); ++k)
            s2 += x_rowsum_sorted[k] * ys->row_sum[pair[k]];
        return s1 / (n * n) - 2.0 * s2 / (n * n * n) +
               (xs->total / (n * n)) * (ys->total / (n * n));
    }
};

} // namespace

double distance_correlation(const std::vector<double>& u, const std::vector<double>& v) {
    if (u.size() != v.size()) throw ValidationError("distance_correlation: length mismatch");
    if (u.size() < 2) throw ValidationError("distance_correlation: need at least 2 samples");
    const std::size_t n = u.size();

    const MarginalStats us = marginal_stats(u);
    const MarginalStats vs = marginal_stats(v);
    if (us.constant || vs.constant) return 0.0;

    PairedCov cov;
    cov.y = &v;
    cov.xs = &us;
    cov.ys = &vs;
    cov.x_sorted.resize(n);
    cov.x_rowsum_sorted.resize(n);
    for (std::size_t k = 0; k < n; ++k) {
        cov.x_sorted[k] = u[us.order[k]];
        cov.x_rowsum_sorted[k] = us.row_sum[us.order[k]];
    }
    PairTree tree(static_cast<int>(n));
    std::vector<int> identity_pair(us.order.begin(), us.order.end());
    const double dcov2 = cov.dcov2(identity_pair, tree);

    const double denom = us.dvar2 * vs.dvar2;
    if (denom <= 0.0) return 0.0;
    const double r2 = dcov2 / std::sqrt(denom);
    return r2 > 0.0 ? std::sqrt(r2) : 0.0;
}

IndependenceReport independence_test(const std::vector<double>& u, const std::vector<double>& v,
                                     const IndependenceConfig& config, std::uint64_t seed) {
    if (u.size() != v.size()) throw ValidationError("independence_test: length mismatch");
    if (u.size() < 30) throw ValidationError("independence_test: need at least 30 samples");
    if (config.n_permutations < 1) throw ValidationError("need at least one permutation");
    for (double x : u)
        if (!std::isfinite(x)) throw ValidationError("independence_test: non-finite input");
    for (double x : v)
        if (!std::isfinite(x)) throw ValidationError("independence_test: non-finite input");

    Rng rng(seed);
    std::vector<double> us = u, vs = v;
    if (config.max_samples > 0 && static_cast<int>(u.size()) > config.max_samples) {
        const std::vector<int> order = rng.permutation(static_cast<int>(u.size()));
        us.resize(config.max_samples);
        vs.resize(config.max_samples);
        for (int k = 0; k < config.max_samples; ++k) {
            us[k] = u[static_cast<std::size_t>(order[k])];
            vs[k] = v[static_cast<std::size_t>(order[k])];
        }
    }
    emphasize_tails(us, config.tail_emphasis);
    emphasize_tails(vs, config.tail_emphasis);
    const std::size_t n = us.size();

    IndependenceReport report;
    report.n_samples_used = static_cast<int>(n);

    const MarginalStats ustats = marginal_stats(us);
    const MarginalStats vstats = marginal_stats(vs);
    if (ustats.constant || vstats.constant || ustats.dvar2 * vstats.dvar2 <= 0.0) {
        report.statistic = 0.0;
        report.p_value = 1.0;
        return report;
    }

    PairedCov cov;
    cov.y = &vs;
    cov.xs = &ustats;
    cov.ys = &vstats;
    cov.x_sorted.resize(n);
    cov.x_rowsum_sorted.resize(n);
    for (std::size_t k = 0; k < n; ++k) {
        cov.x_sorted[k] = us[ustats.order[k]];
        cov.x_rowsum_sorted[k] = ustats.row_sum[ustats.order[k]];
    }

    PairTree tree(static_cast<int>(n));
    const std::vector<int> observed_pair(ustats.order.begin(), ustats.order.end());
    const double observed = cov.dcov2(observed_pair, tree);
    const double r2 = observed / std::sqrt(ustats.dvar2 * vstats.dvar2);
    report.statistic = r2 > 0.0 ? std::sqrt(r2) : 0.0;

    // Permutations stop as soon as failing to reject is already certain:
    // the final p-value can only grow past (1 + hits)/(1 + B).
    const int budget = config.n_permutations;
    int hits = 0;
    int done = 0;
    while (done < budget) {
        if ((1.0 + hits) / (1.0 + budget) >= config.significance) break;
        const std::vector<int> pi = rng.permutation(static_cast<int>(n));
        if (cov.dcov2(pi, tree) >= observed) ++hits;
        ++done;
    }
    report.n_permutations = done;
    report.p_value = (1.0 + hits) / (1.0 + done);
    report.reject_independence = report.p_value < config.significance;
    return report;
}

IndependenceReport independence_test(const std::vector<double>& u, const std::vector<double>& v,
                                     int n_permutations, double significance,
                                     std::uint64_t seed) {
    IndependenceConfig config;
    config.n_permutations = n_permutations;
    config.significance = significance;
    return independence_test(u, v, config, seed);
}

} // namespace dialscm
