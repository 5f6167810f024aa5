#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "topomix/cluster.hpp"
#include "topomix/metric.hpp"
#include "topomix/mogp.hpp"
#include "topomix/persistence.hpp"
#include "topomix/series.hpp"

namespace topomix {

struct InputConfig {
    std::string path;       // CSV to load; defaults to <out_dir>/input.csv when synthesizing
    char delimiter = ',';
    bool header = true;
    bool detrend = true;
    bool use_synth = false; // generate the three-channel test series instead of loading
    int synth_n = 200;
    double synth_tmax = 12.566370614359172; // two turns of the slow phase
    double synth_std = 0.2;
    std::uint64_t synth_seed = 0;
};

struct DecomposeConfig {
    double tau_threshold = 0.5;
    bool standardize = false;
    int pca_keep = -1; // all
};

struct ClusterConfig {
    int r = 2;
};

struct GPConfig {
    double lambda1 = 1.0;
    double lambda2 = 1.0;
    std::vector<double> variances = {0.25, 1.0, 4.0};
    std::vector<double> length_scales = {0.5, 1.0, 2.0};
    std::vector<double> noise_variances = {0.01, 0.1};
    int task = 0;
    bool query_train = true;         // predict on the training grid
    std::vector<double> query_times; // used when query_train is false
};

struct PipelineConfig {
    InputConfig input;
    DecomposeConfig decompose;
    TopologyConfig topology;
    MetricWeights metric;
    ClusterConfig cluster;
    GPConfig gp;
    std::string out_dir = "out";
    std::uint64_t seed = 0;
};

// Flat sectioned key=value file; '#' comments. Unknown sections or keys
// are rejected rather than ignored.
PipelineConfig load_config(const std::string& path);

// Range-checks every knob; throws ConfigError naming the offender.
void validate(const PipelineConfig& cfg);

// Input series as the stages see it: loaded from CSV, or synthesized when
// the config says so and the file is absent.
std::string resolved_input_path(const PipelineConfig& cfg);

struct StageTiming {
    std::string stage;
    double seconds = 0.0;
};

struct RunReport {
    int n_ell = 0;
    int n_c = 0;
    int n_n = 0;
    std::vector<double> tau_values;
    std::vector<ComponentProvenance> components; // one per non-linear component
    std::vector<std::string> curve_names;
    std::vector<int> assignments;
    HyperPoint chosen;
    double log_marginal = 0.0;
    double jitter_used = 0.0;
    int grid_index = -1;
    std::vector<StageTiming> timings;
    std::string failed_stage; // empty on success
    std::string error;
};

// Each stage reads its inputs from the artifact directory and atomically
// writes its own outputs, so any stage can be rerun in isolation.
void stage_synth(const PipelineConfig& cfg);
void stage_decompose(const PipelineConfig& cfg);
void stage_coords(const PipelineConfig& cfg);
void stage_dist(const PipelineConfig& cfg);
void stage_cluster(const PipelineConfig& cfg);
void stage_gp_fit(const PipelineConfig& cfg);
void stage_gp_predict(const PipelineConfig& cfg);

// The whole chain in stage order plus report.json. A stage failure leaves
// a <stage>.failed marker and a report naming the stage, then rethrows.
RunReport run_pipeline(const PipelineConfig& cfg);

} // namespace topomix
