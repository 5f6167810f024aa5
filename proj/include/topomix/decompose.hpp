#pragma once

#include <Eigen/Dense>
#include <vector>

#include "topomix/series.hpp"

namespace topomix {

struct PrincipalComponents {
    Eigen::MatrixXd scores;             // N' x n component time-courses
    Eigen::MatrixXd loadings;           // N x N', orthonormal columns
    Eigen::VectorXd explained_variance; // length N', non-increasing
    bool warn_underdetermined = false;  // n < N
    bool zero_variance = false;         // input had no variance at all
    Eigen::VectorXd channel_means;      // per-channel centering offsets

    int count() const { return static_cast<int>(scores.rows()); }
};

// PCA on the (centered) channel matrix. n_keep < 0 keeps everything up to
// numerical rank. standardize additionally scales channels to unit
// variance before the eigendecomposition.
PrincipalComponents pca(const ResidualSet& res, int n_keep = -1, bool standardize = false);

struct KendallResult {
    double tau = 0.0;
    bool degenerate = false; // an argument was constant; tau defined as 0
};

// Tie-corrected (tau-b) rank correlation via O(n log n) merge counting.
KendallResult kendall_tau_full(const Eigen::VectorXd& t, const Eigen::VectorXd& x);
double kendall_tau(const Eigen::VectorXd& t, const Eigen::VectorXd& x);

struct ComponentRef {
    int index = 0; // position in the PCA variance ordering
    Eigen::VectorXd scores;
};

/// Principal components split into linear vs periodic-or-noise groups,
/// renumbered so the linear ones come first.
struct SeparatedComponents {
    std::vector<ComponentRef> linear;
    std::vector<ComponentRef> rest;
    std::vector<double> tau_values;  // renumbered order: linear first
    std::vector<double> explained_variance; // renumbered order
    int n_ell = 0;

    int total() const { return static_cast<int>(linear.size() + rest.size()); }
};

// Components whose |tau(t, score)| clears the threshold are linear.
SeparatedComponents classify_linear(const PrincipalComponents& pc, const Eigen::VectorXd& times,
                                    double tau_threshold);

} // namespace topomix
