#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <cmath>
#include <limits>
#include <optional>

#include "topomix/cluster.hpp"
#include "topomix/decompose.hpp"
#include "topomix/errors.hpp"
#include "topomix/metric.hpp"
#include "topomix/mogp.hpp"
#include "topomix/persistence.hpp"
#include "topomix/pipeline.hpp"
#include "topomix/series.hpp"

namespace py = pybind11;
using namespace topomix;

namespace {

TimeSeriesSet make_series(const Eigen::VectorXd& times, const Eigen::MatrixXd& values) {
    TimeSeriesSet ts;
    ts.times = times;
    ts.values = values;
    for (int i = 0; i < ts.channels(); ++i) ts.channel_names.push_back("ch" + std::to_string(i));
    validate(ts);
    return ts;
}

py::list diagram_to_list(const PersistenceDiagram& diag) {
    py::list out;
    for (const PersistencePair& p : diag.pairs)
        out.append(py::make_tuple(p.birth,
                                  std::isinf(p.death)
                                      ? std::numeric_limits<double>::infinity()
                                      : p.death,
                                  p.dimension));
    return out;
}

py::dict provenance_to_dict(const ComponentProvenance& prov) {
    py::dict d;
    d["component"] = prov.component;
    d["tau"] = prov.tau;
    d["best_persistence"] = prov.best_persistence;
    d["significant_persistences"] = prov.significant_persistences;
    d["periodic"] = prov.periodic;
    d["disconnected_warning"] = prov.disconnected_warning;
    return d;
}

Clustering make_clustering(const std::vector<int>& assignments, int r) {
    Clustering cl;
    cl.assignments = assignments;
    cl.r = r;
    cl.sizes.assign(r, 0);
    for (int a : assignments) {
        if (a < 0 || a >= r) throw InputError("assignment out of range");
        ++cl.sizes[a];
    }
    for (int s : cl.sizes)
        if (s == 0) throw InputError("empty cluster in assignments");
    return cl;
}

PointCloud make_cloud(const Eigen::MatrixXd& points) {
    PointCloud cloud;
    cloud.points = points;
    cloud.source_time_index.resize(cloud.size());
    for (int i = 0; i < cloud.size(); ++i) cloud.source_time_index[i] = i;
    return cloud;
}

CurveDescriptor make_descriptor(double slope, double intercept,
                                const std::optional<Eigen::VectorXd>& circular) {
    CurveDescriptor d;
    d.trend.slope = slope;
    d.trend.intercept = intercept;
    if (circular) {
        CircularCoordinate cc;
        cc.values = *circular;
        d.circular = std::move(cc);
        d.length = static_cast<int>(circular->size());
    }
    return d;
}

MetricWeights make_weights(double w_lin, double w_circ, double missing_penalty, int n_grid) {
    MetricWeights w;
    w.w_lin = w_lin;
    w.w_circ = w_circ;
    w.missing_penalty = missing_penalty;
    w.n_grid = n_grid;
    return w;
}

} // namespace

PYBIND11_MODULE(_topomix, m) {
    m.doc() = "mixed linear/circular coordinates for multichannel motion series";

    py::register_exception<InputError>(m, "InputError", PyExc_ValueError);
    py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
    py::register_exception<NumericalError>(m, "NumericalError", PyExc_ArithmeticError);
    py::register_exception<ComplexityError>(m, "ComplexityError", PyExc_RuntimeError);
    py::register_exception<StageError>(m, "StageError", PyExc_RuntimeError);

    m.def(
        "synth_mixed",
        [](int n, double t_max, double noise_std, std::uint64_t seed) {
            TimeSeriesSet ts = synth_mixed(n, t_max, noise_std, seed);
            return py::make_tuple(ts.times, ts.values, ts.channel_names);
        },
        py::arg("n"), py::arg("t_max"), py::arg("noise_std"), py::arg("seed") = 0,
        "three channels over [0, t_max]: noise, trend plus noise, sine plus noise");

    m.def("kendall_tau", &kendall_tau, py::arg("t"), py::arg("x"),
          "tie-corrected rank correlation in O(n log n)");

    m.def(
        "mixed_coordinates",
        [](const Eigen::VectorXd& times, const Eigen::MatrixXd& values, bool detrend_flag,
           double tau_threshold, bool standardize, int pca_keep, int delay_r, int delay_eps,
           int field_prime, double rho, double alpha, int landmarks, int point_cap,
           double max_scale, std::uint64_t seed) {
            TimeSeriesSet ts = make_series(times, values);
            ResidualSet res = detrend_flag ? detrend(ts) : without_detrend(ts);
            PrincipalComponents pc = pca(res, pca_keep, standardize);
            SeparatedComponents sep = classify_linear(pc, ts.times, tau_threshold);
            TopologyConfig cfg;
            cfg.delay_r = delay_r;
            cfg.delay_eps = delay_eps;
            cfg.field_prime = field_prime;
            cfg.rule.rho = rho;
            cfg.rule.alpha = alpha;
            cfg.landmark_cap = landmarks;
            cfg.point_cap = point_cap;
            cfg.max_scale = max_scale;
            cfg.seed = seed;
            MixedCoordinates mixed = extract_mixed_coordinates(sep, cfg);

            py::dict out;
            out["n_ell"] = static_cast<int>(mixed.linear_parts.size());
            out["n_c"] = static_cast<int>(mixed.circular_parts.size());
            out["n_n"] = mixed.n_noise;
            out["tau"] = mixed.tau_values;
            py::list linear;
            for (const Eigen::VectorXd& v : mixed.linear_parts) linear.append(v);
            out["linear"] = linear;
            py::list circular;
            for (const CircularCoordinate& c : mixed.circular_parts) circular.append(c.values);
            out["circular"] = circular;
            py::list prov;
            for (const ComponentProvenance& p : mixed.provenance)
                prov.append(provenance_to_dict(p));
            out["provenance"] = prov;
            py::list diagrams;
            for (const PersistenceDiagram& d : mixed.diagrams) diagrams.append(diagram_to_list(d));
            out["diagrams"] = diagrams;
            return out;
        },
        py::arg("times"), py::arg("values"), py::arg("detrend") = true,
        py::arg("tau_threshold") = 0.5, py::arg("standardize") = false, py::arg("pca_keep") = -1,
        py::arg("delay_r") = 20, py::arg("delay_eps") = 1, py::arg("field_prime") = 47,
        py::arg("rho") = 0.5, py::arg("alpha") = 0.2, py::arg("landmarks") = 256,
        py::arg("point_cap") = kDefaultPointCap, py::arg("max_scale") = -1.0, py::arg("seed") = 0,
        "split channels into linear courses, circular coordinates, and noise");

    m.def(
        "rips_diagram",
        [](const Eigen::MatrixXd& points, double max_scale, int prime, int point_cap) {
            PointCloud cloud = make_cloud(points);
            const double scale = max_scale > 0.0 ? max_scale : enclosing_radius(cloud);
            RipsResult res = rips_persistence(cloud, scale, prime, point_cap);
            return diagram_to_list(res.diagram);
        },
        py::arg("points"), py::arg("max_scale") = -1.0, py::arg("prime") = 47,
        py::arg("point_cap") = kDefaultPointCap,
        "degree-0/1 persistence pairs (birth, death, dim); death is inf for essentials");

    m.def(
        "circle_map",
        [](const Eigen::MatrixXd& points, int prime, double rho, double alpha,
           int point_cap) -> py::object {
            PointCloud cloud = make_cloud(points);
            RipsResult res = rips_persistence(cloud, enclosing_radius(cloud), prime, point_cap);
            std::vector<Cocycle> sig = significant_cocycles(res.diagram, res.cocycles,
                                                            ThresholdRule{rho, alpha});
            if (sig.empty()) return py::none();
            CircularCoordinate cc = circular_coordinate(cloud, sig.front(), cloud.size());
            return py::make_tuple(cc.values, sig.front().persistence());
        },
        py::arg("points"), py::arg("prime") = 47, py::arg("rho") = 0.5, py::arg("alpha") = 0.2,
        py::arg("point_cap") = kDefaultPointCap,
        "circle-valued coordinate from the most persistent significant class, or None");

    m.def(
        "phi",
        [](const Eigen::VectorXd& a, const Eigen::VectorXd& b, int n_grid) {
            return phi(BaseMetric::L2, a, b, n_grid);
        },
        py::arg("a"), py::arg("b"), py::arg("n_grid") = kDefaultMetricGrid,
        "invariance-respecting distance between circle-valued curves");

    m.def(
        "curve_distance",
        [](double slope_a, double intercept_a, const std::optional<Eigen::VectorXd>& circ_a,
           double slope_b, double intercept_b, const std::optional<Eigen::VectorXd>& circ_b,
           double w_lin, double w_circ, double missing_penalty, int n_grid) {
            return curve_distance(make_descriptor(slope_a, intercept_a, circ_a),
                                  make_descriptor(slope_b, intercept_b, circ_b),
                                  make_weights(w_lin, w_circ, missing_penalty, n_grid));
        },
        py::arg("slope_a"), py::arg("intercept_a"), py::arg("circular_a"), py::arg("slope_b"),
        py::arg("intercept_b"), py::arg("circular_b"), py::arg("w_lin") = 1.0,
        py::arg("w_circ") = 1.0, py::arg("missing_penalty") = 1.0,
        py::arg("n_grid") = kDefaultMetricGrid,
        "weighted trend plus circular distance between two curve descriptors");

    m.def(
        "distance_matrix",
        [](const Eigen::MatrixXd& trends,
           const std::vector<std::optional<Eigen::VectorXd>>& circulars, double w_lin,
           double w_circ, double missing_penalty, int n_grid) {
            if (trends.cols() != 2) throw InputError("trends wants one (slope, intercept) row per curve");
            if (static_cast<size_t>(trends.rows()) != circulars.size())
                throw InputError("trends and circulars disagree on the curve count");
            std::vector<CurveDescriptor> descriptors;
            for (Eigen::Index i = 0; i < trends.rows(); ++i)
                descriptors.push_back(
                    make_descriptor(trends(i, 0), trends(i, 1), circulars[i]));
            return distance_matrix(descriptors,
                                   make_weights(w_lin, w_circ, missing_penalty, n_grid))
                .entries;
        },
        py::arg("trends"), py::arg("circulars"), py::arg("w_lin") = 1.0, py::arg("w_circ") = 1.0,
        py::arg("missing_penalty") = 1.0, py::arg("n_grid") = kDefaultMetricGrid,
        "pairwise curve distances; row i pairs with circulars[i] (None for trend-only)");

    m.def(
        "hcluster",
        [](const Eigen::MatrixXd& distances, int r) {
            DistanceMatrix dm;
            dm.entries = distances;
            Clustering cl = hcluster(dm, r);
            return py::make_tuple(cl.assignments, cl.sizes);
        },
        py::arg("distances"), py::arg("r"),
        "average-linkage agglomeration cut at r clusters; (assignments, sizes)");

    m.def(
        "task_matrix",
        [](const std::vector<int>& assignments, int r, double lambda1, double lambda2) {
            return task_matrix(make_clustering(assignments, r), lambda1, lambda2).B;
        },
        py::arg("assignments"), py::arg("r"), py::arg("lambda1"), py::arg("lambda2"),
        "block task covariance from a clustering and the two penalty weights");

    py::class_<MOGPModel>(m, "Model", "fitted cluster-coupled multi-output GP")
        .def_property_readonly("log_marginal",
                               [](const MOGPModel& mdl) { return mdl.log_marginal; })
        .def_property_readonly("variance",
                               [](const MOGPModel& mdl) { return mdl.time_kernel.variance; })
        .def_property_readonly("length_scale",
                               [](const MOGPModel& mdl) { return mdl.time_kernel.length_scale; })
        .def_property_readonly("noise_variance",
                               [](const MOGPModel& mdl) { return mdl.noise_variance; })
        .def_property_readonly("jitter", [](const MOGPModel& mdl) { return mdl.jitter_used; })
        .def_property_readonly("grid_index", [](const MOGPModel& mdl) { return mdl.grid_index; })
        .def_property_readonly("B", [](const MOGPModel& mdl) { return mdl.task.B; })
        .def(
            "predict",
            [](const MOGPModel& mdl, const Eigen::VectorXd& times, int task) {
                Prediction p = gp_predict(mdl, times, task);
                return py::make_tuple(p.mean, p.variance);
            },
            py::arg("times"), py::arg("task"), "(posterior mean, pointwise variance)");

    m.def(
        "gp_fit",
        [](const Eigen::VectorXd& times, const Eigen::MatrixXd& values,
           const std::vector<int>& assignments, int r, double lambda1, double lambda2,
           const std::vector<double>& variances, const std::vector<double>& length_scales,
           const std::vector<double>& noise_variances) {
            TimeSeriesSet ts = make_series(times, values);
            if (static_cast<int>(assignments.size()) != ts.channels())
                throw InputError("one assignment per channel, please");
            return gp_fit(ts, make_clustering(assignments, r), lambda1, lambda2,
                          make_grid(variances, length_scales, noise_variances));
        },
        py::arg("times"), py::arg("values"), py::arg("assignments"), py::arg("r"),
        py::arg("lambda1") = 1.0, py::arg("lambda2") = 1.0,
        py::arg("variances") = std::vector<double>{0.25, 1.0, 4.0},
        py::arg("length_scales") = std::vector<double>{0.5, 1.0, 2.0},
        py::arg("noise_variances") = std::vector<double>{0.01, 0.1},
        "grid-search fit of the separable task/time kernel");

    m.def(
        "regularizer",
        [](const Eigen::MatrixXd& values, const std::vector<int>& assignments, int r,
           double lambda1, double lambda2) {
            return regularizer(values, make_clustering(assignments, r), lambda1, lambda2);
        },
        py::arg("values"), py::arg("assignments"), py::arg("r"), py::arg("lambda1"),
        py::arg("lambda2"),
        "within-cluster deviation plus centroid magnitude penalty");

    m.def(
        "run",
        [](const std::string& config_path, const std::optional<std::string>& out_dir,
           std::optional<std::uint64_t> seed) {
            PipelineConfig cfg = load_config(config_path);
            if (out_dir) cfg.out_dir = *out_dir;
            if (seed) {
                cfg.seed = *seed;
                cfg.topology.seed = *seed;
            }
            RunReport report = run_pipeline(cfg);
            py::dict out;
            out["n_ell"] = report.n_ell;
            out["n_c"] = report.n_c;
            out["n_n"] = report.n_n;
            out["tau"] = report.tau_values;
            out["curve_names"] = report.curve_names;
            out["assignments"] = report.assignments;
            py::dict fit;
            fit["variance"] = report.chosen.variance;
            fit["length_scale"] = report.chosen.length_scale;
            fit["noise_variance"] = report.chosen.noise_variance;
            fit["log_marginal"] = report.log_marginal;
            fit["jitter"] = report.jitter_used;
            fit["grid_index"] = report.grid_index;
            out["fit"] = fit;
            out["out_dir"] = cfg.out_dir;
            return out;
        },
        py::arg("config_path"), py::arg("out_dir") = py::none(), py::arg("seed") = py::none(),
        "full pipeline from a config file; artifacts land in out_dir");
}
