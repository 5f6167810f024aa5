#pragma once

#include <Eigen/Dense>
#include <functional>
#include <vector>

#include "topomix/cluster.hpp"
#include "topomix/series.hpp"

namespace topomix {

// Inter-curve covariance dual to the cluster penalty: deviations from the
// cluster mean carry weight 1/lambda1, the shared mean carries 1/lambda2.
// Curves in different clusters never couple.
struct TaskMatrix {
    Eigen::MatrixXd B; // M x M symmetric positive definite
    double lambda1 = 1.0;
    double lambda2 = 1.0;
    Clustering clustering;

    int tasks() const { return static_cast<int>(B.rows()); }
};

TaskMatrix task_matrix(const Clustering& clustering, double lambda1, double lambda2);

struct TimeKernel {
    double variance = 1.0;     // signal variance
    double length_scale = 1.0; // squared-exponential width
};

struct HyperPoint {
    double variance = 1.0;
    double length_scale = 1.0;
    double noise_variance = 0.1;
};

// Cartesian product in (variance, length_scale, noise) major-to-minor
// order; grid order is the fit's tie-break order.
std::vector<HyperPoint> make_grid(const std::vector<double>& variances,
                                  const std::vector<double>& length_scales,
                                  const std::vector<double>& noise_variances);

// Task-major stacking of M copies of a time axis: entry l*n + j holds
// (task l, times[j]).
struct StackedAxes {
    std::vector<int> tasks;
    Eigen::VectorXd times;
};
StackedAxes stacked_axes(int n_tasks, const Eigen::VectorXd& times);

// Separable covariance between two stacked axes: entry (p, q) is
// B(task_p, task_q) * variance * exp(-(t_p - t_q)^2 / (2 len^2)), plus
// diagonal_noise on the diagonal (square blocks only).
Eigen::MatrixXd build_gram(const Eigen::MatrixXd& B, const TimeKernel& kern,
                           const StackedAxes& a, const StackedAxes& b,
                           double diagonal_noise = 0.0);

struct MOGPModel {
    TaskMatrix task;
    TimeKernel time_kernel;
    double noise_variance = 0.1;
    Eigen::VectorXd train_times;  // length n
    Eigen::MatrixXd train_values; // M x n, row per curve
    double log_marginal = 0.0;    // at the chosen grid point
    double jitter_used = 0.0;     // relative jitter the training solve needed
    int grid_index = -1;
};

// Gaussian log marginal likelihood of the stacked data under the
// separable covariance. Escalates a relative diagonal jitter from 1e-10
// to 1e-4 when the Cholesky factorization balks.
double log_marginal(const TaskMatrix& task, const TimeKernel& kern, double noise_variance,
                    const Eigen::VectorXd& times, const Eigen::MatrixXd& values,
                    double* jitter_out = nullptr);

// Grid-search fit: returns the candidate maximizing the log marginal
// likelihood, first grid point winning ties.
MOGPModel gp_fit(const TimeSeriesSet& ts, const Clustering& clustering, double lambda1,
                 double lambda2, const std::vector<HyperPoint>& grid);

struct Prediction {
    Eigen::VectorXd mean;
    Eigen::VectorXd variance; // pointwise, never negative
};

Prediction gp_predict(const MOGPModel& model, const Eigen::VectorXd& query_times, int task);

using CurveDist = std::function<double(const Eigen::VectorXd&, const Eigen::VectorXd&)>;
using CurveNorm = std::function<double(const Eigen::VectorXd&)>;

// Two-term cluster penalty: lambda1 * sum of member deviations from their
// cluster mean + lambda2 * size-weighted cluster-mean magnitudes. The
// defaults are squared L2 divided by the grid length, keeping the value
// stable under resampling; both hooks are replaceable for diagnostics.
double regularizer(const Eigen::MatrixXd& values, const Clustering& clustering, double lambda1,
                   double lambda2, const CurveDist& dist = {}, const CurveNorm& norm = {});

} // namespace topomix
