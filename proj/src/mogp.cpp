#include "topomix/mogp.hpp"

#include <cmath>
#include <limits>

#include "topomix/errors.hpp"
#include "topomix/parallel.hpp"

namespace topomix {

namespace {

constexpr double kJitterStart = 1e-10;
constexpr double kJitterCeil = 1e-4;

void check_lambdas(double lambda1, double lambda2) {
    if (!(lambda1 > 0.0) || !(lambda2 > 0.0))
        throw InputError("task_matrix: lambda1 and lambda2 must be positive");
}

void check_hyper(const HyperPoint& h) {
    if (!(h.variance > 0.0) || !(h.length_scale > 0.0) || !(h.noise_variance > 0.0))
        throw ConfigError("gp hyperparameters must be positive");
}

// Cholesky with escalating relative jitter; throws past the ceiling.
Eigen::LLT<Eigen::MatrixXd> robust_llt(const Eigen::MatrixXd& G, double* jitter_out) {
    const double scale = G.diagonal().maxCoeff();
    double jitter = 0.0;
    for (;;) {
        Eigen::MatrixXd work = G;
        if (jitter > 0.0)
            work.diagonal().array() += jitter * scale;
        Eigen::LLT<Eigen::MatrixXd> llt(work);
        if (llt.info() == Eigen::Success) {
            if (jitter_out) *jitter_out = jitter;
            return llt;
        }
        if (jitter == 0.0)
            jitter = kJitterStart;
        else if (jitter >= kJitterCeil)
            throw NumericalError(
                "gram matrix is not positive definite even with relative jitter 1e-4");
        else
            jitter *= 10.0;
    }
}

double lml_from_llt(const Eigen::LLT<Eigen::MatrixXd>& llt, const Eigen::VectorXd& y) {
    const Eigen::VectorXd alpha = llt.solve(y);
    double logdet = 0.0;
    const auto& L = llt.matrixLLT();
    for (Eigen::Index i = 0; i < L.rows(); ++i) logdet += std::log(L(i, i));
    logdet *= 2.0;
    const double n = static_cast<double>(y.size());
    return -0.5 * y.dot(alpha) - 0.5 * logdet - 0.5 * n * std::log(2.0 * M_PI);
}

Eigen::VectorXd stack_values(const Eigen::MatrixXd& values) {
    const Eigen::Index m = values.rows(), n = values.cols();
    Eigen::VectorXd y(m * n);
    for (Eigen::Index l = 0; l < m; ++l) y.segment(l * n, n) = values.row(l).transpose();
    return y;
}

} // namespace

TaskMatrix task_matrix(const Clustering& clustering, double lambda1, double lambda2) {
    check_lambdas(lambda1, lambda2);
    const int m = clustering.curves();
    if (m < 1) throw InputError("task_matrix: empty clustering");
    TaskMatrix out;
    out.lambda1 = lambda1;
    out.lambda2 = lambda2;
    out.clustering = clustering;
    out.B = Eigen::MatrixXd::Zero(m, m);
    for (int i = 0; i < m; ++i) {
        for (int j = 0; j < m; ++j) {
            if (clustering.assignments[i] != clustering.assignments[j]) continue;
            const double u = 1.0 / clustering.sizes[clustering.assignments[i]];
            const double eye = i == j ? 1.0 : 0.0;
            out.B(i, j) = (eye - u) / lambda1 + u / lambda2;
        }
    }
    return out;
}

std::vector<HyperPoint> make_grid(const std::vector<double>& variances,
                                  const std::vector<double>& length_scales,
                                  const std::vector<double>& noise_variances) {
    std::vector<HyperPoint> grid;
    grid.reserve(variances.size() * length_scales.size() * noise_variances.size());
    for (double v : variances)
        for (double l : length_scales)
            for (double s : noise_variances) grid.push_back({v, l, s});
    if (grid.empty()) throw InputError("make_grid: empty hyperparameter grid");
    return grid;
}

StackedAxes stacked_axes(int n_tasks, const Eigen::VectorXd& times) {
    if (n_tasks < 1) throw InputError("stacked_axes: need at least one task");
    if (times.size() == 0) throw InputError("stacked_axes: empty time axis");
    StackedAxes out;
    const Eigen::Index n = times.size();
    out.tasks.resize(static_cast<size_t>(n_tasks) * n);
    out.times.resize(static_cast<Eigen::Index>(n_tasks) * n);
    for (int l = 0; l < n_tasks; ++l) {
        for (Eigen::Index j = 0; j < n; ++j) {
            out.tasks[l * n + j] = l;
            out.times[l * n + j] = times[j];
        }
    }
    return out;
}

Eigen::MatrixXd build_gram(const Eigen::MatrixXd& B, const TimeKernel& kern,
                           const StackedAxes& a, const StackedAxes& b, double diagonal_noise) {
    if (!(kern.variance > 0.0) || !(kern.length_scale > 0.0))
        throw ConfigError("build_gram: kernel parameters must be positive");
    if (a.tasks.size() != static_cast<size_t>(a.times.size()) ||
        b.tasks.size() != static_cast<size_t>(b.times.size()))
        throw InputError("build_gram: task/time axis length mismatch");
    const Eigen::Index ra = a.times.size(), cb = b.times.size();
    if (diagonal_noise > 0.0 && ra != cb)
        throw InputError("build_gram: diagonal noise on a non-square block");
    const double inv2l2 = 1.0 / (2.0 * kern.length_scale * kern.length_scale);
    Eigen::MatrixXd G(ra, cb);
    for (Eigen::Index i = 0; i < ra; ++i) {
        for (Eigen::Index j = 0; j < cb; ++j) {
            const double dt = a.times[i] - b.times[j];
            G(i, j) = B(a.tasks[i], b.tasks[j]) * kern.variance * std::exp(-dt * dt * inv2l2);
        }
    }
    if (diagonal_noise > 0.0) G.diagonal().array() += diagonal_noise;
    return G;
}

double log_marginal(const TaskMatrix& task, const TimeKernel& kern, double noise_variance,
                    const Eigen::VectorXd& times, const Eigen::MatrixXd& values,
                    double* jitter_out) {
    if (values.rows() != task.tasks())
        throw InputError("log_marginal: task matrix does not match the curve count");
    if (values.cols() != times.size())
        throw InputError("log_marginal: time axis does not match the value grid");
    if (!(noise_variance > 0.0)) throw ConfigError("log_marginal: noise variance must be positive");
    const StackedAxes ax = stacked_axes(task.tasks(), times);
    const Eigen::MatrixXd G = build_gram(task.B, kern, ax, ax, noise_variance);
    const Eigen::LLT<Eigen::MatrixXd> llt = robust_llt(G, jitter_out);
    return lml_from_llt(llt, stack_values(values));
}

MOGPModel gp_fit(const TimeSeriesSet& ts, const Clustering& clustering, double lambda1,
                 double lambda2, const std::vector<HyperPoint>& grid) {
    if (grid.empty()) throw InputError("gp_fit: empty hyperparameter grid");
    if (ts.channels() != clustering.curves())
        throw InputError("gp_fit: clustering does not match the series set");
    for (const HyperPoint& h : grid) check_hyper(h);

    const TaskMatrix task = task_matrix(clustering, lambda1, lambda2);
    std::vector<double> scores(grid.size());
    std::vector<double> jitters(grid.size(), 0.0);
    parallel_for(grid.size(), [&](size_t g) {
        TimeKernel kern{grid[g].variance, grid[g].length_scale};
        scores[g] = log_marginal(task, kern, grid[g].noise_variance, ts.times, ts.values,
                                 &jitters[g]);
    });

    size_t best = 0;
    for (size_t g = 1; g < grid.size(); ++g)
        if (scores[g] > scores[best]) best = g; // strict: ties keep the earlier point

    MOGPModel model;
    model.task = task;
    model.time_kernel = {grid[best].variance, grid[best].length_scale};
    model.noise_variance = grid[best].noise_variance;
    model.train_times = ts.times;
    model.train_values = ts.values;
    model.log_marginal = scores[best];
    model.jitter_used = jitters[best];
    model.grid_index = static_cast<int>(best);
    return model;
}

Prediction gp_predict(const MOGPModel& model, const Eigen::VectorXd& query_times, int task) {
    if (task < 0 || task >= model.task.tasks()) throw InputError("gp_predict: bad task index");
    if (query_times.size() == 0) throw InputError("gp_predict: empty query");
    if (!query_times.allFinite()) throw InputError("gp_predict: non-finite query time");

    const StackedAxes train = stacked_axes(model.task.tasks(), model.train_times);
    StackedAxes query;
    query.tasks.assign(static_cast<size_t>(query_times.size()), task);
    query.times = query_times;

    const Eigen::MatrixXd G =
        build_gram(model.task.B, model.time_kernel, train, train, model.noise_variance);
    const Eigen::LLT<Eigen::MatrixXd> llt = robust_llt(G, nullptr);
    const Eigen::VectorXd alpha = llt.solve(stack_values(model.train_values));
    const Eigen::MatrixXd k_star = build_gram(model.task.B, model.time_kernel, train, query);

    Prediction out;
    out.mean = k_star.transpose() * alpha;

    const Eigen::MatrixXd solved = llt.solve(k_star);
    const double prior = model.task.B(task, task) * model.time_kernel.variance;
    out.variance.resize(query_times.size());
    const double tol = 1e-10 * std::max(1.0, prior);
    for (Eigen::Index j = 0; j < query_times.size(); ++j) {
        double v = prior - k_star.col(j).dot(solved.col(j));
        if (v < -tol)
            throw NumericalError("gp_predict: posterior variance fell below the clamp window");
        out.variance[j] = v < 0.0 ? 0.0 : v;
    }
    return out;
}

double regularizer(const Eigen::MatrixXd& values, const Clustering& clustering, double lambda1,
                   double lambda2, const CurveDist& dist, const CurveNorm& norm) {
    check_lambdas(lambda1, lambda2);
    if (values.rows() != clustering.curves())
        throw InputError("regularizer: clustering does not match the value rows");
    const double n = static_cast<double>(values.cols());
    const CurveDist d = dist ? dist : CurveDist([n](const Eigen::VectorXd& a,
                                                    const Eigen::VectorXd& b) {
        return (a - b).squaredNorm() / n;
    });
    const CurveNorm nm = norm ? norm : CurveNorm([n](const Eigen::VectorXd& g) {
        return g.squaredNorm() / n;
    });

    double within = 0.0, magnitude = 0.0;
    for (int c = 0; c < clustering.r; ++c) {
        Eigen::VectorXd mean = Eigen::VectorXd::Zero(values.cols());
        for (int l = 0; l < clustering.curves(); ++l)
            if (clustering.assignments[l] == c) mean += values.row(l).transpose();
        mean /= static_cast<double>(clustering.sizes[c]);
        for (int l = 0; l < clustering.curves(); ++l)
            if (clustering.assignments[l] == c) within += d(values.row(l).transpose(), mean);
        magnitude += static_cast<double>(clustering.sizes[c]) * nm(mean);
    }
    return lambda1 * within + lambda2 * magnitude;
}

} // namespace topomix
