#include "topomix/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "topomix/decompose.hpp"
#include "topomix/errors.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace topomix {

namespace {

std::string fmt17(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::string trim(const std::string& s) {
    size_t a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    size_t b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

double parse_double(const std::string& v, const std::string& key) {
    try {
        size_t used = 0;
        double d = std::stod(v, &used);
        if (used != v.size()) throw std::invalid_argument("trailing");
        return d;
    } catch (const std::exception&) {
        throw ConfigError("config: bad number for " + key + ": '" + v + "'");
    }
}

long long parse_int(const std::string& v, const std::string& key) {
    try {
        size_t used = 0;
        long long i = std::stoll(v, &used);
        if (used != v.size()) throw std::invalid_argument("trailing");
        return i;
    } catch (const std::exception&) {
        throw ConfigError("config: bad integer for " + key + ": '" + v + "'");
    }
}

bool parse_bool(const std::string& v, const std::string& key) {
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    throw ConfigError("config: bad boolean for " + key + ": '" + v + "'");
}

std::vector<double> parse_list(const std::string& v, const std::string& key) {
    std::vector<double> out;
    std::stringstream ss(v);
    std::string item;
    while (std::getline(ss, item, ',')) out.push_back(parse_double(trim(item), key));
    if (out.empty()) throw ConfigError("config: empty list for " + key);
    return out;
}

void write_atomic(const fs::path& path, const std::string& content) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    fs::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
        f << content;
        f.flush();
        if (!f) throw StageError("could not write " + tmp.string());
    }
    fs::rename(tmp, path);
}

void write_json(const fs::path& path, const json& j) { write_atomic(path, j.dump(2) + "\n"); }

json read_json(const fs::path& path, const std::string& producer) {
    std::ifstream f(path);
    if (!f)
        throw StageError("missing artifact " + path.string() + "; run the '" + producer +
                         "' stage first");
    json j;
    try {
        f >> j;
    } catch (const json::exception& e) {
        throw StageError("corrupt artifact " + path.string() + ": " + e.what());
    }
    return j;
}

std::vector<std::vector<std::string>> read_csv_rows(const fs::path& path,
                                                    const std::string& producer) {
    std::ifstream f(path);
    if (!f)
        throw StageError("missing artifact " + path.string() + "; run the '" + producer +
                         "' stage first");
    std::vector<std::vector<std::string>> rows;
    std::string line;
    while (std::getline(f, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::vector<std::string> cells;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) cells.push_back(cell);
        if (!line.empty() && line.back() == ',') cells.push_back("");
        rows.push_back(std::move(cells));
    }
    return rows;
}

fs::path artifact(const PipelineConfig& cfg, const char* name) {
    return fs::path(cfg.out_dir) / name;
}

// null encodes an endless bar
json pair_to_json(const PersistencePair& p) {
    json j;
    j["birth"] = p.birth;
    j["death"] = std::isinf(p.death) ? json() : json(p.death);
    j["dim"] = p.dimension;
    return j;
}

json provenance_to_json(const ComponentProvenance& prov) {
    json j;
    j["component"] = prov.component;
    j["tau"] = prov.tau;
    j["best_persistence"] = prov.best_persistence;
    j["significant_persistences"] = prov.significant_persistences;
    j["periodic"] = prov.periodic;
    j["disconnected_warning"] = prov.disconnected_warning;
    return j;
}

ComponentProvenance provenance_from_json(const json& j) {
    ComponentProvenance prov;
    prov.component = j.at("component").get<int>();
    prov.tau = j.at("tau").get<double>();
    prov.best_persistence = j.at("best_persistence").get<double>();
    prov.significant_persistences = j.at("significant_persistences").get<std::vector<double>>();
    prov.periodic = j.at("periodic").get<bool>();
    prov.disconnected_warning = j.at("disconnected_warning").get<bool>();
    return prov;
}

TimeSeriesSet load_input(const PipelineConfig& cfg) {
    const std::string path = resolved_input_path(cfg);
    if (cfg.input.use_synth && !fs::exists(path))
        throw StageError("missing artifact " + path + "; run the 'synth' stage first");
    CsvOptions opt;
    opt.delimiter = cfg.input.delimiter;
    opt.has_header = cfg.input.header;
    TimeSeriesSet ts = load_csv(path, opt);
    validate(ts);
    return ts;
}

void check_channel_names(const TimeSeriesSet& ts) {
    for (size_t i = 0; i < ts.channel_names.size(); ++i) {
        const std::string& name = ts.channel_names[i];
        if (name.empty() || name.find(',') != std::string::npos ||
            name.find('"') != std::string::npos || name.find('\n') != std::string::npos)
            throw InputError("channel name unusable in artifacts: '" + name + "'");
        for (size_t j = i + 1; j < ts.channel_names.size(); ++j)
            if (ts.channel_names[j] == name)
                throw InputError("duplicate channel name '" + name + "'");
    }
}

struct DecompositionArtifact {
    bool detrended = true;
    std::vector<std::string> channel_names;
    Eigen::VectorXd times;
    std::vector<LinearTrend> trends;
    SeparatedComponents sep;
    std::vector<Eigen::VectorXd> loadings; // per component, renumbered order
};

DecompositionArtifact read_decomposition(const PipelineConfig& cfg) {
    json j = read_json(artifact(cfg, "decomposition.json"), "decompose");
    DecompositionArtifact out;
    out.detrended = j.at("detrend").get<bool>();
    out.channel_names = j.at("channel_names").get<std::vector<std::string>>();
    auto times = j.at("times").get<std::vector<double>>();
    out.times = Eigen::Map<Eigen::VectorXd>(times.data(), static_cast<Eigen::Index>(times.size()));
    for (const json& t : j.at("trends")) {
        LinearTrend tr;
        tr.channel_index = t.at("channel").get<int>();
        tr.slope = t.at("slope").get<double>();
        tr.intercept = t.at("intercept").get<double>();
        out.trends.push_back(tr);
    }
    out.sep.n_ell = j.at("n_ell").get<int>();
    for (const json& c : j.at("components")) {
        ComponentRef ref;
        ref.index = c.at("pca_index").get<int>();
        auto scores = c.at("scores").get<std::vector<double>>();
        ref.scores =
            Eigen::Map<Eigen::VectorXd>(scores.data(), static_cast<Eigen::Index>(scores.size()));
        const std::string cls = c.at("class").get<std::string>();
        if (cls == "linear")
            out.sep.linear.push_back(std::move(ref));
        else if (cls == "rest")
            out.sep.rest.push_back(std::move(ref));
        else
            throw StageError("decomposition.json: unknown component class '" + cls + "'");
        out.sep.tau_values.push_back(c.at("tau").get<double>());
        out.sep.explained_variance.push_back(c.at("explained_variance").get<double>());
        auto load = c.at("loadings").get<std::vector<double>>();
        out.loadings.push_back(
            Eigen::Map<Eigen::VectorXd>(load.data(), static_cast<Eigen::Index>(load.size())));
    }
    if (static_cast<int>(out.sep.linear.size()) != out.sep.n_ell)
        throw StageError("decomposition.json: n_ell does not match the linear components");
    return out;
}

struct CoordsArtifact {
    Eigen::VectorXd times;
    Eigen::MatrixXd columns; // n x n_c
};

CoordsArtifact read_coords(const PipelineConfig& cfg) {
    auto rows = read_csv_rows(artifact(cfg, "coords.csv"), "coords");
    if (rows.empty()) throw StageError("coords.csv is empty");
    const size_t cols = rows[0].size();
    if (cols < 1 || rows[0][0] != "time") throw StageError("coords.csv: bad header");
    CoordsArtifact out;
    const size_t n = rows.size() - 1;
    out.times.resize(static_cast<Eigen::Index>(n));
    out.columns.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(cols - 1));
    for (size_t r = 1; r < rows.size(); ++r) {
        if (rows[r].size() != cols) throw StageError("coords.csv: ragged row");
        out.times[static_cast<Eigen::Index>(r - 1)] = std::stod(rows[r][0]);
        for (size_t c = 1; c < cols; ++c)
            out.columns(static_cast<Eigen::Index>(r - 1), static_cast<Eigen::Index>(c - 1)) =
                std::stod(rows[r][c]);
    }
    return out;
}

// rest components in renumbered order, read back from the diagram files
std::vector<ComponentProvenance> read_provenance(const PipelineConfig& cfg,
                                                 const DecompositionArtifact& dec) {
    std::vector<ComponentProvenance> out;
    for (size_t i = 0; i < dec.sep.rest.size(); ++i) {
        const int pos = dec.sep.n_ell + static_cast<int>(i);
        fs::path p = fs::path(cfg.out_dir) / "diagrams" /
                     ("component_" + std::to_string(pos) + ".json");
        out.push_back(provenance_from_json(read_json(p, "coords")));
    }
    return out;
}

struct DistArtifact {
    std::vector<std::string> names;
    DistanceMatrix dm;
};

DistArtifact read_distmatrix(const PipelineConfig& cfg) {
    auto rows = read_csv_rows(artifact(cfg, "distmatrix.csv"), "dist");
    if (rows.size() < 2 || rows[0].size() < 2 || rows[0][0] != "curve")
        throw StageError("distmatrix.csv: bad header");
    DistArtifact out;
    const size_t m = rows[0].size() - 1;
    if (rows.size() != m + 1) throw StageError("distmatrix.csv: not square");
    out.names.assign(rows[0].begin() + 1, rows[0].end());
    out.dm.entries.resize(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(m));
    for (size_t r = 0; r < m; ++r) {
        if (rows[r + 1].size() != m + 1 || rows[r + 1][0] != out.names[r])
            throw StageError("distmatrix.csv: row/header mismatch");
        for (size_t c = 0; c < m; ++c)
            out.dm.entries(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) =
                std::stod(rows[r + 1][c + 1]);
    }
    return out;
}

Clustering read_clusters(const PipelineConfig& cfg, const std::vector<std::string>& names) {
    json j = read_json(artifact(cfg, "clusters.json"), "cluster");
    Clustering cl;
    cl.r = j.at("r").get<int>();
    const json& asg = j.at("assignments");
    cl.assignments.reserve(names.size());
    for (const std::string& name : names) {
        if (!asg.contains(name))
            throw StageError("clusters.json has no assignment for curve '" + name + "'");
        cl.assignments.push_back(asg.at(name).get<int>());
    }
    cl.sizes.assign(cl.r, 0);
    for (int a : cl.assignments) {
        if (a < 0 || a >= cl.r) throw StageError("clusters.json: assignment out of range");
        ++cl.sizes[a];
    }
    for (int s : cl.sizes)
        if (s == 0) throw StageError("clusters.json: empty cluster after matching curves");
    return cl;
}

} // namespace

std::string resolved_input_path(const PipelineConfig& cfg) {
    if (!cfg.input.path.empty()) return cfg.input.path;
    const fs::path artifact = fs::path(cfg.out_dir) / "input.csv";
    // no explicit path: the synth stage owns out/input.csv, and a stage may
    // also pick up that artifact from an earlier invocation
    if (cfg.input.use_synth || fs::exists(artifact)) return artifact.string();
    throw ConfigError("config: no input path and synthesis not requested");
}

PipelineConfig load_config(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw ConfigError("config file not found: " + path);
    PipelineConfig cfg;
    std::string line, section;
    int lineno = 0;
    while (std::getline(f, line)) {
        ++lineno;
        if (size_t hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']')
                throw ConfigError("config line " + std::to_string(lineno) + ": bad section");
            section = line.substr(1, line.size() - 2);
            if (section != "input" && section != "decompose" && section != "topology" &&
                section != "metric" && section != "cluster" && section != "gp" &&
                section != "run")
                throw ConfigError("config: unknown section [" + section + "]");
            continue;
        }
        size_t eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError("config line " + std::to_string(lineno) + ": expected key = value");
        const std::string key = trim(line.substr(0, eq));
        const std::string val = trim(line.substr(eq + 1));
        const std::string qual = section + "." + key;

        if (qual == "input.path") cfg.input.path = val;
        else if (qual == "input.delimiter") {
            if (val == "tab") cfg.input.delimiter = '\t';
            else if (val.size() == 1) cfg.input.delimiter = val[0];
            else throw ConfigError("config: delimiter must be one character or 'tab'");
        } else if (qual == "input.header") cfg.input.header = parse_bool(val, qual);
        else if (qual == "input.detrend") cfg.input.detrend = parse_bool(val, qual);
        else if (qual == "input.synth") {
            auto parts = parse_list(val, qual);
            if (parts.size() != 4)
                throw ConfigError("config: input.synth wants n,tmax,std,seed");
            cfg.input.use_synth = true;
            cfg.input.synth_n = static_cast<int>(parts[0]);
            cfg.input.synth_tmax = parts[1];
            cfg.input.synth_std = parts[2];
            cfg.input.synth_seed = static_cast<std::uint64_t>(parts[3]);
        } else if (qual == "decompose.tau_threshold")
            cfg.decompose.tau_threshold = parse_double(val, qual);
        else if (qual == "decompose.standardize") cfg.decompose.standardize = parse_bool(val, qual);
        else if (qual == "decompose.pca_keep")
            cfg.decompose.pca_keep = static_cast<int>(parse_int(val, qual));
        else if (qual == "topology.delay_r")
            cfg.topology.delay_r = static_cast<int>(parse_int(val, qual));
        else if (qual == "topology.delay_eps")
            cfg.topology.delay_eps = static_cast<int>(parse_int(val, qual));
        else if (qual == "topology.field_prime")
            cfg.topology.field_prime = static_cast<int>(parse_int(val, qual));
        else if (qual == "topology.rho") cfg.topology.rule.rho = parse_double(val, qual);
        else if (qual == "topology.alpha") cfg.topology.rule.alpha = parse_double(val, qual);
        else if (qual == "topology.landmarks")
            cfg.topology.landmark_cap = static_cast<int>(parse_int(val, qual));
        else if (qual == "topology.point_cap")
            cfg.topology.point_cap = static_cast<int>(parse_int(val, qual));
        else if (qual == "topology.max_scale") cfg.topology.max_scale = parse_double(val, qual);
        else if (qual == "metric.w_lin") cfg.metric.w_lin = parse_double(val, qual);
        else if (qual == "metric.w_circ") cfg.metric.w_circ = parse_double(val, qual);
        else if (qual == "metric.missing_penalty")
            cfg.metric.missing_penalty = parse_double(val, qual);
        else if (qual == "metric.grid") cfg.metric.n_grid = static_cast<int>(parse_int(val, qual));
        else if (qual == "cluster.r") cfg.cluster.r = static_cast<int>(parse_int(val, qual));
        else if (qual == "gp.lambda1") cfg.gp.lambda1 = parse_double(val, qual);
        else if (qual == "gp.lambda2") cfg.gp.lambda2 = parse_double(val, qual);
        else if (qual == "gp.variances") cfg.gp.variances = parse_list(val, qual);
        else if (qual == "gp.length_scales") cfg.gp.length_scales = parse_list(val, qual);
        else if (qual == "gp.noise_variances") cfg.gp.noise_variances = parse_list(val, qual);
        else if (qual == "gp.task") cfg.gp.task = static_cast<int>(parse_int(val, qual));
        else if (qual == "gp.query") {
            if (val == "train") cfg.gp.query_train = true;
            else {
                cfg.gp.query_train = false;
                cfg.gp.query_times = parse_list(val, qual);
            }
        } else if (qual == "run.out_dir") cfg.out_dir = val;
        else if (qual == "run.seed")
            cfg.seed = static_cast<std::uint64_t>(parse_int(val, qual));
        else throw ConfigError("config: unknown key '" + qual + "'");
    }
    cfg.topology.seed = cfg.seed;
    return cfg;
}

void validate(const PipelineConfig& cfg) {
    auto bad = [](const std::string& what) { throw ConfigError("config: " + what); };
    if (cfg.out_dir.empty()) bad("run.out_dir is empty");
    if (cfg.input.use_synth) {
        if (cfg.input.synth_n < 3) bad("input.synth n must be at least 3");
        if (!(cfg.input.synth_tmax > 0.0)) bad("input.synth tmax must be positive");
        if (cfg.input.synth_std < 0.0) bad("input.synth std must be nonnegative");
    }
    if (cfg.decompose.tau_threshold < 0.0 || cfg.decompose.tau_threshold > 1.0)
        bad("decompose.tau_threshold must lie in [0, 1]");
    if (cfg.decompose.pca_keep == 0 || cfg.decompose.pca_keep < -1)
        bad("decompose.pca_keep must be -1 (all) or positive");
    if (cfg.topology.delay_r < 1) bad("topology.delay_r must be at least 1");
    if (cfg.topology.delay_eps < 1) bad("topology.delay_eps must be at least 1");
    if (cfg.topology.field_prime < 2) bad("topology.field_prime must be at least 2");
    if (!(cfg.topology.rule.rho > 0.0) || cfg.topology.rule.rho > 1.0)
        bad("topology.rho must lie in (0, 1]");
    if (cfg.topology.rule.alpha < 0.0) bad("topology.alpha must be nonnegative");
    if (cfg.topology.landmark_cap < 2) bad("topology.landmarks must be at least 2");
    if (cfg.topology.point_cap < 2) bad("topology.point_cap must be at least 2");
    if (cfg.metric.w_lin < 0.0 || cfg.metric.w_circ < 0.0)
        bad("metric weights must be nonnegative");
    if (cfg.metric.w_lin == 0.0 && cfg.metric.w_circ == 0.0)
        bad("metric weights cannot both be zero");
    if (cfg.metric.missing_penalty < 0.0) bad("metric.missing_penalty must be nonnegative");
    if (cfg.metric.n_grid < 2) bad("metric.grid must be at least 2");
    if (cfg.cluster.r < 1) bad("cluster.r must be positive");
    if (!(cfg.gp.lambda1 > 0.0) || !(cfg.gp.lambda2 > 0.0)) bad("gp lambdas must be positive");
    for (const auto* list : {&cfg.gp.variances, &cfg.gp.length_scales, &cfg.gp.noise_variances}) {
        if (list->empty()) bad("gp grid lists must be nonempty");
        for (double v : *list)
            if (!(v > 0.0) || !std::isfinite(v)) bad("gp grid values must be positive");
    }
    if (cfg.gp.task < 0) bad("gp.task must be nonnegative");
    if (!cfg.gp.query_train) {
        if (cfg.gp.query_times.empty()) bad("gp.query list is empty");
        for (double t : cfg.gp.query_times)
            if (!std::isfinite(t)) bad("gp.query times must be finite");
    }
}

void stage_synth(const PipelineConfig& cfg) {
    if (!cfg.input.use_synth) throw ConfigError("synth stage needs input.synth in the config");
    TimeSeriesSet ts = synth_mixed(cfg.input.synth_n, cfg.input.synth_tmax, cfg.input.synth_std,
                                   cfg.input.synth_seed);
    const fs::path path = resolved_input_path(cfg);
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    fs::path tmp = path;
    tmp += ".tmp";
    write_csv(ts, tmp.string(), cfg.input.delimiter);
    fs::rename(tmp, path);
}

void stage_decompose(const PipelineConfig& cfg) {
    TimeSeriesSet ts = load_input(cfg);
    check_channel_names(ts);
    ResidualSet res = cfg.input.detrend ? detrend(ts) : without_detrend(ts);
    PrincipalComponents pc = pca(res, cfg.decompose.pca_keep, cfg.decompose.standardize);
    SeparatedComponents sep = classify_linear(pc, ts.times, cfg.decompose.tau_threshold);

    json j;
    j["schema_version"] = 1;
    j["detrend"] = cfg.input.detrend;
    j["channel_names"] = ts.channel_names;
    j["times"] = std::vector<double>(ts.times.data(), ts.times.data() + ts.times.size());
    json trends = json::array();
    for (const LinearTrend& t : res.trends) {
        json tr;
        tr["channel"] = t.channel_index;
        tr["slope"] = t.slope;
        tr["intercept"] = t.intercept;
        trends.push_back(tr);
    }
    j["trends"] = trends;
    j["n_ell"] = sep.n_ell;
    j["warn_underdetermined"] = pc.warn_underdetermined;

    json comps = json::array();
    for (int pos = 0; pos < sep.total(); ++pos) {
        const bool is_linear = pos < sep.n_ell;
        const ComponentRef& ref = is_linear ? sep.linear[pos] : sep.rest[pos - sep.n_ell];
        json c;
        c["index"] = pos;
        c["pca_index"] = ref.index;
        c["class"] = is_linear ? "linear" : "rest";
        c["tau"] = sep.tau_values[pos];
        c["explained_variance"] = sep.explained_variance[pos];
        Eigen::VectorXd load = pc.loadings.col(ref.index);
        c["loadings"] = std::vector<double>(load.data(), load.data() + load.size());
        c["scores"] =
            std::vector<double>(ref.scores.data(), ref.scores.data() + ref.scores.size());
        comps.push_back(c);
    }
    j["components"] = comps;
    write_json(artifact(cfg, "decomposition.json"), j);
}

void stage_coords(const PipelineConfig& cfg) {
    DecompositionArtifact dec = read_decomposition(cfg);
    TopologyConfig top = cfg.topology;
    top.seed = cfg.seed;
    MixedCoordinates mixed = extract_mixed_coordinates(dec.sep, top);

    std::string csv = "time";
    for (size_t k = 0; k < mixed.circular_parts.size(); ++k)
        csv += ",c_" + std::to_string(k + 1);
    csv += "\n";
    for (Eigen::Index t = 0; t < dec.times.size(); ++t) {
        csv += fmt17(dec.times[t]);
        for (const CircularCoordinate& cc : mixed.circular_parts)
            csv += "," + fmt17(cc.values[t]);
        csv += "\n";
    }
    write_atomic(artifact(cfg, "coords.csv"), csv);

    for (size_t i = 0; i < mixed.provenance.size(); ++i) {
        const ComponentProvenance& prov = mixed.provenance[i];
        const PersistenceDiagram& diag = mixed.diagrams[i];
        json j = provenance_to_json(prov);
        j["schema_version"] = 1;
        j["field_characteristic"] = diag.field_char;
        j["diameter"] = diag.diameter;
        j["max_scale"] = diag.max_scale;
        json pairs = json::array();
        for (const PersistencePair& p : diag.pairs) pairs.push_back(pair_to_json(p));
        j["pairs"] = pairs;
        fs::path p = fs::path(cfg.out_dir) / "diagrams" /
                     ("component_" + std::to_string(prov.component) + ".json");
        write_json(p, j);
    }
}

void stage_dist(const PipelineConfig& cfg) {
    DecompositionArtifact dec = read_decomposition(cfg);
    CoordsArtifact coords = read_coords(cfg);
    std::vector<ComponentProvenance> prov = read_provenance(cfg, dec);

    std::vector<int> periodic_pos;
    for (const ComponentProvenance& p : prov)
        if (p.periodic) periodic_pos.push_back(p.component);
    if (static_cast<int>(periodic_pos.size()) != coords.columns.cols())
        throw StageError("coords.csv and diagram files disagree on the periodic count");

    const int n_channels = static_cast<int>(dec.channel_names.size());
    std::vector<CurveDescriptor> descriptors(n_channels);
    for (int ch = 0; ch < n_channels; ++ch) {
        descriptors[ch].trend = dec.trends[ch];
        descriptors[ch].length = static_cast<int>(dec.times.size());
    }

    // each circular coordinate goes to the free channel its component
    // loads most heavily on
    std::vector<bool> taken(n_channels, false);
    for (size_t k = 0; k < periodic_pos.size(); ++k) {
        const Eigen::VectorXd& load = dec.loadings[periodic_pos[k]];
        int best = -1;
        double best_mag = -1.0;
        for (int ch = 0; ch < n_channels; ++ch) {
            if (taken[ch]) continue;
            const double mag = std::abs(load[ch]);
            if (mag > best_mag) {
                best_mag = mag;
                best = ch;
            }
        }
        if (best < 0) break; // more periodic components than channels
        taken[best] = true;
        CircularCoordinate cc;
        cc.values = coords.columns.col(static_cast<Eigen::Index>(k));
        cc.source_component = periodic_pos[k];
        const ComponentProvenance& p = prov[periodic_pos[k] - dec.sep.n_ell];
        cc.persistence =
            p.significant_persistences.empty() ? p.best_persistence
                                               : p.significant_persistences.front();
        cc.disconnected_warning = p.disconnected_warning;
        descriptors[best].circular = std::move(cc);
    }

    DistanceMatrix dm = distance_matrix(descriptors, cfg.metric);
    std::string csv = "curve";
    for (const std::string& name : dec.channel_names) csv += "," + name;
    csv += "\n";
    for (int i = 0; i < n_channels; ++i) {
        csv += dec.channel_names[i];
        for (int j = 0; j < n_channels; ++j) csv += "," + fmt17(dm.entries(i, j));
        csv += "\n";
    }
    write_atomic(artifact(cfg, "distmatrix.csv"), csv);
}

void stage_cluster(const PipelineConfig& cfg) {
    DistArtifact dist = read_distmatrix(cfg);
    Clustering cl = hcluster(dist.dm, cfg.cluster.r);
    json j;
    j["schema_version"] = 1;
    j["r"] = cl.r;
    json asg = json::object();
    for (size_t i = 0; i < dist.names.size(); ++i) asg[dist.names[i]] = cl.assignments[i];
    j["assignments"] = asg;
    write_json(artifact(cfg, "clusters.json"), j);
}

void stage_gp_fit(const PipelineConfig& cfg) {
    TimeSeriesSet ts = load_input(cfg);
    check_channel_names(ts);
    Clustering cl = read_clusters(cfg, ts.channel_names);
    std::vector<HyperPoint> grid =
        make_grid(cfg.gp.variances, cfg.gp.length_scales, cfg.gp.noise_variances);
    MOGPModel model = gp_fit(ts, cl, cfg.gp.lambda1, cfg.gp.lambda2, grid);

    json j;
    j["schema_version"] = 1;
    j["lambda1"] = model.task.lambda1;
    j["lambda2"] = model.task.lambda2;
    json B = json::array();
    for (int i = 0; i < model.task.tasks(); ++i) {
        json row = json::array();
        for (int k = 0; k < model.task.tasks(); ++k) row.push_back(model.task.B(i, k));
        B.push_back(row);
    }
    j["B"] = B;
    json clj;
    clj["r"] = cl.r;
    clj["assignments"] = cl.assignments;
    clj["sizes"] = cl.sizes;
    j["clustering"] = clj;
    j["kernel"] = {{"variance", model.time_kernel.variance},
                   {"length_scale", model.time_kernel.length_scale}};
    j["noise_variance"] = model.noise_variance;
    j["log_marginal"] = model.log_marginal;
    j["jitter"] = model.jitter_used;
    j["grid_index"] = model.grid_index;
    j["curve_names"] = ts.channel_names;
    j["train_times"] =
        std::vector<double>(ts.times.data(), ts.times.data() + ts.times.size());
    json vals = json::array();
    for (int i = 0; i < ts.channels(); ++i) {
        Eigen::VectorXd row = ts.values.row(i).transpose();
        vals.push_back(std::vector<double>(row.data(), row.data() + row.size()));
    }
    j["train_values"] = vals;
    write_json(artifact(cfg, "model.json"), j);
}

void stage_gp_predict(const PipelineConfig& cfg) {
    json j = read_json(artifact(cfg, "model.json"), "gp-fit");
    MOGPModel model;
    model.task.lambda1 = j.at("lambda1").get<double>();
    model.task.lambda2 = j.at("lambda2").get<double>();
    const json& B = j.at("B");
    const int m = static_cast<int>(B.size());
    model.task.B.resize(m, m);
    for (int i = 0; i < m; ++i)
        for (int k = 0; k < m; ++k) model.task.B(i, k) = B[i][k].get<double>();
    const json& clj = j.at("clustering");
    model.task.clustering.r = clj.at("r").get<int>();
    model.task.clustering.assignments = clj.at("assignments").get<std::vector<int>>();
    model.task.clustering.sizes = clj.at("sizes").get<std::vector<int>>();
    model.time_kernel.variance = j.at("kernel").at("variance").get<double>();
    model.time_kernel.length_scale = j.at("kernel").at("length_scale").get<double>();
    model.noise_variance = j.at("noise_variance").get<double>();
    auto times = j.at("train_times").get<std::vector<double>>();
    model.train_times =
        Eigen::Map<Eigen::VectorXd>(times.data(), static_cast<Eigen::Index>(times.size()));
    const json& vals = j.at("train_values");
    model.train_values.resize(m, static_cast<Eigen::Index>(times.size()));
    for (int i = 0; i < m; ++i) {
        auto row = vals[i].get<std::vector<double>>();
        if (row.size() != times.size()) throw StageError("model.json: ragged train_values");
        model.train_values.row(i) =
            Eigen::Map<Eigen::VectorXd>(row.data(), static_cast<Eigen::Index>(row.size()))
                .transpose();
    }

    if (cfg.gp.task >= m)
        throw InputError("gp.task " + std::to_string(cfg.gp.task) + " but only " +
                         std::to_string(m) + " curves");
    Eigen::VectorXd query;
    if (cfg.gp.query_train)
        query = model.train_times;
    else
        query = Eigen::Map<const Eigen::VectorXd>(cfg.gp.query_times.data(),
                                                  static_cast<Eigen::Index>(
                                                      cfg.gp.query_times.size()));
    Prediction pred = gp_predict(model, query, cfg.gp.task);

    std::string csv = "time,mean,variance\n";
    for (Eigen::Index t = 0; t < query.size(); ++t)
        csv += fmt17(query[t]) + "," + fmt17(pred.mean[t]) + "," + fmt17(pred.variance[t]) + "\n";
    write_atomic(artifact(cfg, "predictions.csv"), csv);
}

RunReport run_pipeline(const PipelineConfig& cfg) {
    validate(cfg);
    resolved_input_path(cfg); // a run with no input at all is a config error, not a stage failure
    fs::create_directories(cfg.out_dir);

    struct Step {
        const char* name;
        void (*fn)(const PipelineConfig&);
        bool enabled;
    };
    const Step steps[] = {
        {"synth", &stage_synth, cfg.input.use_synth},
        {"decompose", &stage_decompose, true},
        {"coords", &stage_coords, true},
        {"dist", &stage_dist, true},
        {"cluster", &stage_cluster, true},
        {"gp-fit", &stage_gp_fit, true},
        {"gp-predict", &stage_gp_predict, true},
    };
    for (const Step& s : steps)
        fs::remove(fs::path(cfg.out_dir) / (std::string(s.name) + ".failed"));

    RunReport report;
    auto finalize = [&](const RunReport& r) {
        json j;
        j["schema_version"] = 1;
        j["counts"] = {{"n_ell", r.n_ell}, {"n_c", r.n_c}, {"n_n", r.n_n},
                       {"total", r.n_ell + r.n_c + r.n_n}};
        j["tau_values"] = r.tau_values;
        json comps = json::array();
        for (const ComponentProvenance& p : r.components) comps.push_back(provenance_to_json(p));
        j["components"] = comps;
        j["clusters"] = {{"names", r.curve_names}, {"assignments", r.assignments}};
        j["fit"] = {{"variance", r.chosen.variance},
                    {"length_scale", r.chosen.length_scale},
                    {"noise_variance", r.chosen.noise_variance},
                    {"log_marginal", r.log_marginal},
                    {"jitter", r.jitter_used},
                    {"grid_index", r.grid_index}};
        j["failed_stage"] = r.failed_stage;
        j["error"] = r.error;
        json timings = json::object();
        for (const StageTiming& t : r.timings) timings[t.stage] = t.seconds;
        j["timings"] = timings; // the one section determinism checks must skip
        write_json(artifact(cfg, "report.json"), j);
    };

    for (const Step& s : steps) {
        if (!s.enabled) continue;
        const auto t0 = std::chrono::steady_clock::now();
        try {
            s.fn(cfg);
        } catch (const std::exception& e) {
            write_atomic(fs::path(cfg.out_dir) / (std::string(s.name) + ".failed"), e.what());
            report.failed_stage = s.name;
            report.error = e.what();
            finalize(report);
            throw;
        }
        const auto t1 = std::chrono::steady_clock::now();
        report.timings.push_back({s.name, std::chrono::duration<double>(t1 - t0).count()});
    }

    // the report reads back what the stages wrote, not in-memory state
    DecompositionArtifact dec = read_decomposition(cfg);
    report.n_ell = dec.sep.n_ell;
    report.tau_values = dec.sep.tau_values;
    report.curve_names = dec.channel_names;
    report.components = read_provenance(cfg, dec);
    for (const ComponentProvenance& p : report.components)
        if (p.periodic) ++report.n_c;
    report.n_n = static_cast<int>(report.components.size()) - report.n_c;
    Clustering cl = read_clusters(cfg, dec.channel_names);
    report.assignments = cl.assignments;
    json mj = read_json(artifact(cfg, "model.json"), "gp-fit");
    report.chosen.variance = mj.at("kernel").at("variance").get<double>();
    report.chosen.length_scale = mj.at("kernel").at("length_scale").get<double>();
    report.chosen.noise_variance = mj.at("noise_variance").get<double>();
    report.log_marginal = mj.at("log_marginal").get<double>();
    report.jitter_used = mj.at("jitter").get<double>();
    report.grid_index = mj.at("grid_index").get<int>();
    finalize(report);
    return report;
}

} // namespace topomix
