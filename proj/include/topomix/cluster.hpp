#pragma once

#include <Eigen/Dense>
#include <vector>

#include "topomix/metric.hpp"
#include "topomix/series.hpp"

namespace topomix {

struct Clustering {
    std::vector<int> assignments; // one id in {0..r-1} per curve
    int r = 0;
    std::vector<int> sizes; // member count per cluster, all positive

    int curves() const { return static_cast<int>(assignments.size()); }
};

// Average-linkage agglomerative clustering of the distance matrix, cut at
// r clusters. Merges pick the smallest pairwise average; ties fall to the
// pair whose clusters hold the lowest original indices. Final ids are
// numbered by each cluster's smallest member.
Clustering hcluster(const DistanceMatrix& D, int r);

// Pointwise mean of the member channels of cluster c.
Eigen::VectorXd centroid_series(const TimeSeriesSet& ts, const Clustering& clustering, int c);

} // namespace topomix
