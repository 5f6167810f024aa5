#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "topomix/errors.hpp"
#include "topomix/pipeline.hpp"

using namespace topomix;

namespace {

std::vector<double> split_doubles(const std::string& text, const std::string& what) {
    std::vector<double> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        try {
            out.push_back(std::stod(item));
        } catch (const std::exception&) {
            throw ConfigError(what + ": bad number '" + item + "'");
        }
    }
    if (out.empty()) throw ConfigError(what + ": empty list");
    return out;
}

// every flag the subcommands share; only the ones the user actually set
// override the config file
struct Flags {
    std::string config_path;
    std::optional<std::string> out, input, synth_spec, delimiter, grid_file, times;
    std::optional<std::int64_t> seed;
    bool no_header = false, no_detrend = false, standardize = false;
    std::optional<double> tau_threshold, rho, alpha, max_scale;
    std::optional<double> w_lin, w_circ, missing_penalty, lambda1, lambda2;
    std::optional<int> pca_keep, delay_r, delay_eps, field_prime, landmarks, point_cap;
    std::optional<int> metric_grid, clusters, task;
};

void add_common(CLI::App* sub, Flags& f) {
    sub->add_option("--config", f.config_path, "sectioned key=value config file");
    sub->add_option("--out", f.out, "artifact directory (default out)");
    sub->add_option("--seed", f.seed, "root seed for every random substream");
}

void add_input(CLI::App* sub, Flags& f) {
    sub->add_option("--input", f.input, "input CSV: time column then one column per channel");
    sub->add_option("--delimiter", f.delimiter, "field separator, one character or 'tab'");
    sub->add_flag("--no-header", f.no_header, "input CSV has no header row");
    sub->add_flag("--no-detrend", f.no_detrend, "keep per-channel linear trends in the values");
    sub->add_option("--synth-mixed", f.synth_spec,
                    "n,tmax,std,seed: synthesize the trend/periodic/noise test series");
}

void add_decompose(CLI::App* sub, Flags& f) {
    sub->add_option("--tau-threshold", f.tau_threshold, "|tau| at or above which a component is linear");
    sub->add_flag("--standardize", f.standardize, "scale channels to unit variance before PCA");
    sub->add_option("--pca-keep", f.pca_keep, "components to keep, -1 for all");
}

void add_topology(CLI::App* sub, Flags& f) {
    sub->add_option("--delay-r", f.delay_r, "delay embedding window size");
    sub->add_option("--delay-eps", f.delay_eps, "delay embedding stride");
    sub->add_option("--field-prime", f.field_prime, "coefficient field characteristic");
    sub->add_option("--persistence-rho", f.rho, "bar cutoff as a fraction of the longest bar");
    sub->add_option("--persistence-alpha", f.alpha, "bar cutoff as a fraction of the diameter");
    sub->add_option("--landmarks", f.landmarks, "landmark cap for large embeddings");
    sub->add_option("--point-cap", f.point_cap, "hard limit on Rips input size");
    sub->add_option("--max-scale", f.max_scale, "filtration cutoff, <=0 picks per component");
}

void add_metric(CLI::App* sub, Flags& f) {
    sub->add_option("--w-lin", f.w_lin, "weight of the trend part");
    sub->add_option("--w-circ", f.w_circ, "weight of the circular part");
    sub->add_option("--missing-penalty", f.missing_penalty,
                    "circular distance when one curve lacks a coordinate");
    sub->add_option("--metric-grid", f.metric_grid, "resample length for the comparisons");
}

void add_cluster(CLI::App* sub, Flags& f) {
    sub->add_option("--clusters", f.clusters, "number of clusters to cut at");
}

void add_gp(CLI::App* sub, Flags& f) {
    sub->add_option("--lambda1", f.lambda1, "within-cluster deviation weight");
    sub->add_option("--lambda2", f.lambda2, "centroid magnitude weight");
    sub->add_option("--grid-file", f.grid_file,
                    "file with variances=/length_scales=/noise_variances= lines");
}

void add_predict(CLI::App* sub, Flags& f) {
    sub->add_option("--times", f.times, "comma list of query times (default: training grid)");
    sub->add_option("--task", f.task, "curve index to predict");
}

void apply_grid_file(const std::string& path, GPConfig& gp) {
    std::ifstream f(path);
    if (!f) throw ConfigError("grid file not found: " + path);
    std::string line;
    int lineno = 0;
    while (std::getline(f, line)) {
        ++lineno;
        if (size_t hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        size_t a = line.find_first_not_of(" \t\r");
        if (a == std::string::npos) continue;
        size_t b = line.find_last_not_of(" \t\r");
        line = line.substr(a, b - a + 1);
        size_t eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError("grid file line " + std::to_string(lineno) + ": expected key = value");
        std::string key = line.substr(0, eq);
        key.erase(key.find_last_not_of(" \t") + 1);
        const std::string val = line.substr(eq + 1);
        if (key == "variances") gp.variances = split_doubles(val, key);
        else if (key == "length_scales") gp.length_scales = split_doubles(val, key);
        else if (key == "noise_variances") gp.noise_variances = split_doubles(val, key);
        else throw ConfigError("grid file: unknown key '" + key + "'");
    }
}

PipelineConfig build_config(const Flags& f) {
    PipelineConfig cfg;
    if (!f.config_path.empty()) cfg = load_config(f.config_path);
    if (f.out) cfg.out_dir = *f.out;
    if (f.seed) cfg.seed = static_cast<std::uint64_t>(*f.seed);
    if (f.input) cfg.input.path = *f.input;
    if (f.delimiter) {
        if (*f.delimiter == "tab") cfg.input.delimiter = '\t';
        else if (f.delimiter->size() == 1) cfg.input.delimiter = (*f.delimiter)[0];
        else throw ConfigError("--delimiter wants one character or 'tab'");
    }
    if (f.no_header) cfg.input.header = false;
    if (f.no_detrend) cfg.input.detrend = false;
    if (f.synth_spec) {
        auto parts = split_doubles(*f.synth_spec, "--synth-mixed");
        if (parts.size() != 4) throw ConfigError("--synth-mixed wants n,tmax,std,seed");
        cfg.input.use_synth = true;
        cfg.input.synth_n = static_cast<int>(parts[0]);
        cfg.input.synth_tmax = parts[1];
        cfg.input.synth_std = parts[2];
        cfg.input.synth_seed = static_cast<std::uint64_t>(parts[3]);
    }
    if (f.tau_threshold) cfg.decompose.tau_threshold = *f.tau_threshold;
    if (f.standardize) cfg.decompose.standardize = true;
    if (f.pca_keep) cfg.decompose.pca_keep = *f.pca_keep;
    if (f.delay_r) cfg.topology.delay_r = *f.delay_r;
    if (f.delay_eps) cfg.topology.delay_eps = *f.delay_eps;
    if (f.field_prime) cfg.topology.field_prime = *f.field_prime;
    if (f.rho) cfg.topology.rule.rho = *f.rho;
    if (f.alpha) cfg.topology.rule.alpha = *f.alpha;
    if (f.landmarks) cfg.topology.landmark_cap = *f.landmarks;
    if (f.point_cap) cfg.topology.point_cap = *f.point_cap;
    if (f.max_scale) cfg.topology.max_scale = *f.max_scale;
    if (f.w_lin) cfg.metric.w_lin = *f.w_lin;
    if (f.w_circ) cfg.metric.w_circ = *f.w_circ;
    if (f.missing_penalty) cfg.metric.missing_penalty = *f.missing_penalty;
    if (f.metric_grid) cfg.metric.n_grid = *f.metric_grid;
    if (f.clusters) cfg.cluster.r = *f.clusters;
    if (f.lambda1) cfg.gp.lambda1 = *f.lambda1;
    if (f.lambda2) cfg.gp.lambda2 = *f.lambda2;
    if (f.grid_file) apply_grid_file(*f.grid_file, cfg.gp);
    if (f.times) {
        cfg.gp.query_train = false;
        cfg.gp.query_times = split_doubles(*f.times, "--times");
    }
    if (f.task) cfg.gp.task = *f.task;
    cfg.topology.seed = cfg.seed;
    return cfg;
}

void note(const PipelineConfig& cfg, const char* artifact) {
    std::printf("wrote %s\n", (std::filesystem::path(cfg.out_dir) / artifact).string().c_str());
}

void print_report(const PipelineConfig& cfg, const RunReport& r) {
    std::printf("components: %d linear, %d circular, %d noise\n", r.n_ell, r.n_c, r.n_n);
    std::string asg;
    for (size_t i = 0; i < r.curve_names.size(); ++i) {
        if (i) asg += ' ';
        asg += r.curve_names[i] + "=" + std::to_string(r.assignments[i]);
    }
    std::printf("clusters: %s\n", asg.c_str());
    std::printf("fit: variance=%g length_scale=%g noise=%g log_marginal=%.6g\n",
                r.chosen.variance, r.chosen.length_scale, r.chosen.noise_variance,
                r.log_marginal);
    note(cfg, "report.json");
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"mixed linear/circular coordinates for multichannel motion series"};
    app.require_subcommand(1);
    Flags f;

    CLI::App* synth = app.add_subcommand("synth", "write the synthetic test series as input.csv");
    add_common(synth, f);
    add_input(synth, f);

    CLI::App* decompose = app.add_subcommand("decompose", "PCA plus linear/rest classification");
    add_common(decompose, f);
    add_input(decompose, f);
    add_decompose(decompose, f);

    CLI::App* coords = app.add_subcommand("coords", "circular coordinates from the decomposition");
    add_common(coords, f);
    add_topology(coords, f);

    CLI::App* dist = app.add_subcommand("dist", "pairwise curve distances");
    add_common(dist, f);
    add_metric(dist, f);

    CLI::App* cluster = app.add_subcommand("cluster", "average-linkage clustering of the curves");
    add_common(cluster, f);
    add_cluster(cluster, f);

    CLI::App* gp_fit = app.add_subcommand("gp-fit", "fit the cluster-coupled multi-output GP");
    add_common(gp_fit, f);
    add_input(gp_fit, f);
    add_gp(gp_fit, f);

    CLI::App* gp_predict = app.add_subcommand("gp-predict", "posterior mean and variance");
    add_common(gp_predict, f);
    add_predict(gp_predict, f);

    CLI::App* run = app.add_subcommand("run", "the whole chain plus report.json");
    add_common(run, f);
    add_input(run, f);
    add_decompose(run, f);
    add_topology(run, f);
    add_metric(run, f);
    add_cluster(run, f);
    add_gp(run, f);
    add_predict(run, f);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e); // 0 for --help
        return code == 0 ? 0 : 2;
    }

    try {
        PipelineConfig cfg = build_config(f);
        if (*synth && !cfg.input.use_synth) cfg.input.use_synth = true;
        validate(cfg);

        if (*synth) {
            stage_synth(cfg);
            std::printf("wrote %s\n", resolved_input_path(cfg).c_str());
        } else if (*decompose) {
            stage_decompose(cfg);
            note(cfg, "decomposition.json");
        } else if (*coords) {
            stage_coords(cfg);
            note(cfg, "coords.csv");
        } else if (*dist) {
            stage_dist(cfg);
            note(cfg, "distmatrix.csv");
        } else if (*cluster) {
            stage_cluster(cfg);
            note(cfg, "clusters.json");
        } else if (*gp_fit) {
            stage_gp_fit(cfg);
            note(cfg, "model.json");
        } else if (*gp_predict) {
            stage_gp_predict(cfg);
            note(cfg, "predictions.csv");
        } else if (*run) {
            print_report(cfg, run_pipeline(cfg));
        }
        return 0;
    } catch (const ConfigError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    } catch (const InputError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
}
