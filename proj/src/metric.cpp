#include "topomix/metric.hpp"

#include <algorithm>
#include <cmath>

#include "topomix/errors.hpp"
#include "topomix/parallel.hpp"

namespace topomix {

namespace {

void check_nonempty(const Eigen::VectorXd& c, const char* who) {
    if (c.size() == 0) throw InputError(std::string(who) + ": empty sequence");
    if (!c.allFinite()) throw InputError(std::string(who) + ": non-finite values");
}

} // namespace

Eigen::VectorXd t_m(const Eigen::VectorXd& c) {
    check_nonempty(c, "t_m");
    const Eigen::Index n = c.size();
    Eigen::VectorXd out(n);
    out[0] = c[0];
    for (Eigen::Index i = 0; i + 1 < n; ++i) {
        double k = -std::ceil(c[i + 1] - out[i] - 0.5);
        double v = c[i + 1] + k;
        // rounding can land the difference a hair outside the window
        while (v - out[i] > 0.5) v = c[i + 1] + (k -= 1.0);
        while (v - out[i] <= -0.5) v = c[i + 1] + (k += 1.0);
        out[i + 1] = v;
    }
    return out;
}

Eigen::VectorXd t_i(const Eigen::VectorXd& c) {
    check_nonempty(c, "t_i");
    const Eigen::Index n = c.size();
    if (c[n - 1] >= c[0]) return c;
    Eigen::VectorXd out(n);
    out[0] = c[0];
    for (Eigen::Index i = 0; i + 1 < n; ++i) out[i + 1] = out[i] + c[i] - c[i + 1];
    return out;
}

double base_distance(BaseMetric d, const Eigen::VectorXd& x, const Eigen::VectorXd& y) {
    if (x.size() != y.size()) throw InputError("base_distance: length mismatch");
    check_nonempty(x, "base_distance");
    switch (d) {
    case BaseMetric::L2:
        return std::sqrt((x - y).squaredNorm() / static_cast<double>(x.size()));
    }
    throw ConfigError("base_distance: unknown metric tag");
}

double t_l(BaseMetric d, const Eigen::VectorXd& c, const Eigen::VectorXd& c_tilde) {
    if (c.size() != c_tilde.size()) throw InputError("t_l: length mismatch");
    check_nonempty(c, "t_l");
    check_nonempty(c_tilde, "t_l");
    double lo = c.minCoeff() - c_tilde.minCoeff();
    double hi = c.maxCoeff() - c_tilde.maxCoeff();
    if (lo > hi) std::swap(lo, hi);
    // L2 in a is convex with unconstrained optimum at the mean gap,
    // so the interval minimum is its clamp
    double a = std::clamp(c.mean() - c_tilde.mean(), lo, hi);
    return base_distance(d, c, c_tilde.array() + a);
}

Eigen::VectorXd resample(const Eigen::VectorXd& values, int n_grid) {
    check_nonempty(values, "resample");
    if (n_grid < 2) throw InputError("resample: n_grid must be at least 2");
    const Eigen::Index n = values.size();
    if (n == 1) return Eigen::VectorXd::Constant(n_grid, values[0]);
    if (n_grid == n) return values;
    Eigen::VectorXd out(n_grid);
    for (int i = 0; i < n_grid; ++i) {
        double pos = static_cast<double>(i) / (n_grid - 1) * static_cast<double>(n - 1);
        auto lo = static_cast<Eigen::Index>(std::floor(pos));
        if (lo >= n - 1) {
            out[i] = values[n - 1];
            continue;
        }
        double frac = pos - static_cast<double>(lo);
        out[i] = values[lo] + frac * (values[lo + 1] - values[lo]);
    }
    return out;
}

double phi(BaseMetric d, const Eigen::VectorXd& c, const Eigen::VectorXd& c_tilde, int n_grid) {
    Eigen::VectorXd u = t_m(c);
    Eigen::VectorXd v = t_m(c_tilde);
    if (u.size() != v.size()) {
        u = resample(u, n_grid);
        v = resample(v, n_grid);
    }
    return t_l(d, t_i(u), t_i(v));
}

double phi(BaseMetric d, const CircularCoordinate& c, const CircularCoordinate& c_tilde,
           int n_grid) {
    return phi(d, c.values, c_tilde.values, n_grid);
}

double curve_distance(const CurveDescriptor& a, const CurveDescriptor& b,
                      const MetricWeights& w) {
    if (w.w_lin < 0.0 || w.w_circ < 0.0 || w.missing_penalty < 0.0)
        throw InputError("curve_distance: negative weight");
    if (w.w_lin == 0.0 && w.w_circ == 0.0)
        throw InputError("curve_distance: both weights zero");
    if (w.n_grid < 2) throw InputError("curve_distance: n_grid must be at least 2");

    double ss = 0.0;
    for (int i = 0; i < w.n_grid; ++i) {
        double u = static_cast<double>(i) / (w.n_grid - 1);
        double diff = (a.trend.slope - b.trend.slope) * u + a.trend.intercept - b.trend.intercept;
        ss += diff * diff;
    }
    double d_lin = std::sqrt(ss / w.n_grid);

    double d_circ = 0.0;
    if (a.circular.has_value() && b.circular.has_value())
        d_circ = phi(BaseMetric::L2, *a.circular, *b.circular, w.n_grid);
    else if (a.circular.has_value() != b.circular.has_value())
        d_circ = w.missing_penalty;

    return std::sqrt(w.w_lin * d_lin * d_lin + w.w_circ * d_circ * d_circ);
}

DistanceMatrix distance_matrix(const std::vector<CurveDescriptor>& descriptors,
                               const MetricWeights& w) {
    const int m = static_cast<int>(descriptors.size());
    if (m < 2) throw InputError("distance_matrix: need at least two curves");
    DistanceMatrix out;
    out.entries = Eigen::MatrixXd::Zero(m, m);
    std::vector<std::pair<int, int>> pairs;
    pairs.reserve(static_cast<size_t>(m) * (m - 1) / 2);
    for (int i = 0; i < m; ++i)
        for (int j = i + 1; j < m; ++j) pairs.emplace_back(i, j);
    parallel_for(pairs.size(), [&](size_t k) {
        auto [i, j] = pairs[k];
        double d = curve_distance(descriptors[i], descriptors[j], w);
        out.entries(i, j) = d;
        out.entries(j, i) = d;
    });
    return out;
}

} // namespace topomix
