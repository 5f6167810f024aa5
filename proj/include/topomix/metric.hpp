#pragma once

#include <Eigen/Dense>
#include <optional>
#include <vector>

#include "topomix/persistence.hpp"
#include "topomix/series.hpp"

namespace topomix {

// Unwrap mod-1 values so every successive difference lands in (-0.5, 0.5].
// First entry passes through; the rest shift by whole turns only.
Eigen::VectorXd t_m(const Eigen::VectorXd& c);

// Orient a sequence so the last value is not below the first, reflecting
// the increments when needed. Equal endpoints count as already oriented.
Eigen::VectorXd t_i(const Eigen::VectorXd& c);

enum class BaseMetric { L2 };

// length-normalized distance, ||x - y||_2 / sqrt(n) for L2
double base_distance(BaseMetric d, const Eigen::VectorXd& x, const Eigen::VectorXd& y);

// Translation-minimized distance: min over offsets a of d(c, c_tilde + a),
// a confined to the interval spanned by the min- and max-gaps of the two
// sequences (endpoints sorted). For L2 the minimizer is the clamped mean gap.
double t_l(BaseMetric d, const Eigen::VectorXd& c, const Eigen::VectorXd& c_tilde);

// Linear interpolation onto n_grid points over the normalized index.
Eigen::VectorXd resample(const Eigen::VectorXd& values, int n_grid);

inline constexpr int kDefaultMetricGrid = 256;

// The full invariance-respecting comparison: unwrap both, put unequal
// lengths on a common grid, orient, then minimize over translations.
double phi(BaseMetric d, const Eigen::VectorXd& c, const Eigen::VectorXd& c_tilde,
           int n_grid = kDefaultMetricGrid);
double phi(BaseMetric d, const CircularCoordinate& c, const CircularCoordinate& c_tilde,
           int n_grid = kDefaultMetricGrid);

struct CurveDescriptor {
    LinearTrend trend;
    std::optional<CircularCoordinate> circular;
    int length = 0;
};

struct MetricWeights {
    double w_lin = 1.0;
    double w_circ = 1.0;
    double missing_penalty = 1.0;
    int n_grid = kDefaultMetricGrid;
};

// sqrt(w_lin * d_lin^2 + w_circ * d_circ^2): trend lines compared on the
// unit grid, circular parts through phi; a one-sided circular part costs
// the missing penalty.
double curve_distance(const CurveDescriptor& a, const CurveDescriptor& b,
                      const MetricWeights& w = {});

struct DistanceMatrix {
    Eigen::MatrixXd entries; // symmetric, zero diagonal

    int size() const { return static_cast<int>(entries.rows()); }
};

DistanceMatrix distance_matrix(const std::vector<CurveDescriptor>& descriptors,
                               const MetricWeights& w = {});

} // namespace topomix
