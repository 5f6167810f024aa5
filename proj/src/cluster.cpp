#include "topomix/cluster.hpp"

#include <limits>

#include "topomix/errors.hpp"

namespace topomix {

Clustering hcluster(const DistanceMatrix& D, int r) {
    const int m = D.size();
    if (m < 2) throw InputError("hcluster: need at least two curves");
    if (r < 1) throw InputError("hcluster: r must be positive");
    if (r > m) throw InputError("hcluster: more clusters than curves");
    if (D.entries.rows() != D.entries.cols())
        throw InputError("hcluster: distance matrix not square");

    // Slots stay sorted by smallest member: a merge lands in the left
    // slot, so slot order never changes and the lexicographic tie-break
    // is just the slot pair.
    std::vector<std::vector<int>> members(m);
    for (int i = 0; i < m; ++i) members[i] = {i};
    Eigen::MatrixXd dist = D.entries;

    while (static_cast<int>(members.size()) > r) {
        const int k = static_cast<int>(members.size());
        int bi = -1, bj = -1;
        double best = std::numeric_limits<double>::infinity();
        for (int i = 0; i < k; ++i)
            for (int j = i + 1; j < k; ++j)
                if (dist(i, j) < best) {
                    best = dist(i, j);
                    bi = i;
                    bj = j;
                }
        const double na = static_cast<double>(members[bi].size());
        const double nb = static_cast<double>(members[bj].size());
        for (int t = 0; t < k; ++t) {
            if (t == bi || t == bj) continue;
            double d = (na * dist(bi, t) + nb * dist(bj, t)) / (na + nb);
            dist(bi, t) = d;
            dist(t, bi) = d;
        }
        members[bi].insert(members[bi].end(), members[bj].begin(), members[bj].end());
        members.erase(members.begin() + bj);

        // drop row/col bj from the working matrix
        const int kk = k - 1;
        Eigen::MatrixXd next(kk, kk);
        for (int i = 0, ii = 0; i < k; ++i) {
            if (i == bj) continue;
            for (int j = 0, jj = 0; j < k; ++j) {
                if (j == bj) continue;
                next(ii, jj) = dist(i, j);
                ++jj;
            }
            ++ii;
        }
        dist.swap(next);
    }

    Clustering out;
    out.r = r;
    out.assignments.assign(m, -1);
    out.sizes.assign(r, 0);
    for (int c = 0; c < r; ++c) {
        out.sizes[c] = static_cast<int>(members[c].size());
        for (int idx : members[c]) out.assignments[idx] = c;
    }
    return out;
}

Eigen::VectorXd centroid_series(const TimeSeriesSet& ts, const Clustering& clustering, int c) {
    if (c < 0 || c >= clustering.r) throw InputError("centroid_series: bad cluster id");
    if (ts.channels() != clustering.curves())
        throw InputError("centroid_series: clustering does not match the series set");
    Eigen::VectorXd sum = Eigen::VectorXd::Zero(ts.length());
    int count = 0;
    for (int i = 0; i < ts.channels(); ++i) {
        if (clustering.assignments[i] != c) continue;
        sum += ts.values.row(i).transpose();
        ++count;
    }
    return sum / static_cast<double>(count);
}

} // namespace topomix
