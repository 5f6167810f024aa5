#include "topomix/decompose.hpp"

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>

#include "topomix/errors.hpp"

namespace topomix {

PrincipalComponents pca(const ResidualSet& res, int n_keep, bool standardize) {
    const int N = static_cast<int>(res.values.rows());
    const int n = static_cast<int>(res.values.cols());
    if (N < 1 || n < 2) throw InputError("pca: need at least one channel and two samples");

    PrincipalComponents out;
    out.warn_underdetermined = n < N;

    Eigen::MatrixXd X = res.values;
    out.channel_means = X.rowwise().mean();
    X.colwise() -= out.channel_means;

    if (standardize) {
        for (int i = 0; i < N; ++i) {
            double sd = std::sqrt(X.row(i).squaredNorm() / (n - 1));
            if (sd > 0.0) X.row(i) /= sd;
        }
    }

    Eigen::MatrixXd cov = (X * X.transpose()) / double(n - 1);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
    if (eig.info() != Eigen::Success) throw NumericalError("pca: eigendecomposition failed");

    // ascending from Eigen; walk from the back for descending variance
    const Eigen::VectorXd& evals = eig.eigenvalues();
    const Eigen::MatrixXd& evecs = eig.eigenvectors();

    double vmax = std::max(evals.maxCoeff(), 0.0);
    double tol = vmax * N * 1e-12;
    out.zero_variance = vmax <= 0.0;

    int rank = 0;
    for (int i = 0; i < N; ++i)
        if (evals(N - 1 - i) > tol) ++rank;
    int keep = (n_keep < 0) ? rank : std::min(n_keep, rank);

    out.loadings.resize(N, keep);
    out.explained_variance.resize(keep);
    for (int i = 0; i < keep; ++i) {
        Eigen::VectorXd v = evecs.col(N - 1 - i);
        // fix the sign so results don't flip between runs: largest |entry| positive
        int arg = 0;
        for (int r = 1; r < N; ++r)
            if (std::abs(v(r)) > std::abs(v(arg))) arg = r;
        if (v(arg) < 0.0) v = -v;
        out.loadings.col(i) = v;
        out.explained_variance(i) = evals(N - 1 - i);
    }
    out.scores = out.loadings.transpose() * X;
    return out;
}

namespace {

// merge sort counting pairs (i<j) with a[i] > a[j]
std::uint64_t count_inversions(std::vector<double>& a, std::vector<double>& buf, std::size_t lo,
                               std::size_t hi) {
    if (hi - lo < 2) return 0;
    std::size_t mid = lo + (hi - lo) / 2;
    std::uint64_t inv = count_inversions(a, buf, lo, mid) + count_inversions(a, buf, mid, hi);
    std::size_t i = lo, j = mid, k = lo;
    while (i < mid && j < hi) {
        if (a[j] < a[i]) {
            inv += mid - i;
            buf[k++] = a[j++];
        } else {
            buf[k++] = a[i++];
        }
    }
    while (i < mid) buf[k++] = a[i++];
    while (j < hi) buf[k++] = a[j++];
    std::copy(buf.begin() + lo, buf.begin() + hi, a.begin() + lo);
    return inv;
}

std::uint64_t tie_pairs(const std::vector<double>& sorted) {
    std::uint64_t total = 0;
    std::size_t i = 0;
    while (i < sorted.size()) {
        std::size_t j = i;
        while (j < sorted.size() && sorted[j] == sorted[i]) ++j;
        std::uint64_t run = j - i;
        total += run * (run - 1) / 2;
        i = j;
    }
    return total;
}

} // namespace

KendallResult kendall_tau_full(const Eigen::VectorXd& t, const Eigen::VectorXd& x) {
    if (t.size() != x.size()) throw InputError("kendall_tau: length mismatch");
    const std::size_t n = static_cast<std::size_t>(t.size());
    if (n < 2) throw InputError("kendall_tau: need at least two observations");

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (t(a) != t(b)) return t(a) < t(b);
        return x(a) < x(b);
    });

    std::vector<double> xs(n);
    for (std::size_t i = 0; i < n; ++i) xs[i] = x(order[i]);

    // joint ties and first-argument ties, scanned in (t, x) order
    std::uint64_t n1 = 0, n3 = 0;
    {
        std::size_t i = 0;
        while (i < n) {
            std::size_t j = i;
            while (j < n && t(order[j]) == t(order[i])) ++j;
            std::uint64_t run = j - i;
            n1 += run * (run - 1) / 2;
            std::size_t a = i;
            while (a < j) {
                std::size_t b = a;
                while (b < j && xs[b] == xs[a]) ++b;
                std::uint64_t jr = b - a;
                n3 += jr * (jr - 1) / 2;
                a = b;
            }
            i = j;
        }
    }

    std::vector<double> work = xs, buf(n);
    std::uint64_t discordant = count_inversions(work, buf, 0, n);

    std::sort(xs.begin(), xs.end());
    std::uint64_t n2 = tie_pairs(xs);

    std::uint64_t n0 = std::uint64_t(n) * (n - 1) / 2;

    KendallResult r;
    if (n0 == n1 || n0 == n2) {
        r.degenerate = true;
        return r;
    }
    std::int64_t num = std::int64_t(n0) - std::int64_t(n1) - std::int64_t(n2) + std::int64_t(n3) -
                       2 * std::int64_t(discordant);
    r.tau = double(num) / std::sqrt(double(n0 - n1) * double(n0 - n2));
    return r;
}

double kendall_tau(const Eigen::VectorXd& t, const Eigen::VectorXd& x) {
    return kendall_tau_full(t, x).tau;
}

SeparatedComponents classify_linear(const PrincipalComponents& pc, const Eigen::VectorXd& times,
                                    double tau_threshold) {
    SeparatedComponents out;
    const int k = pc.count();
    std::vector<double> taus(k);
    std::vector<bool> is_lin(k);
    for (int i = 0; i < k; ++i) {
        taus[i] = kendall_tau(times, pc.scores.row(i).transpose());
        is_lin[i] = std::abs(taus[i]) >= tau_threshold;
    }
    for (int pass = 0; pass < 2; ++pass) {
        for (int i = 0; i < k; ++i) {
            if (is_lin[i] != (pass == 0)) continue;
            ComponentRef ref;
            ref.index = i;
            ref.scores = pc.scores.row(i).transpose();
            (pass == 0 ? out.linear : out.rest).push_back(std::move(ref));
            out.tau_values.push_back(taus[i]);
            out.explained_variance.push_back(pc.explained_variance(i));
        }
    }
    out.n_ell = static_cast<int>(out.linear.size());
    return out;
}

} // namespace topomix
