#include "topomix/series.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "topomix/errors.hpp"
#include "topomix/rng.hpp"

namespace topomix {

void validate(const TimeSeriesSet& ts) {
    const int n = ts.length();
    const int N = ts.channels();
    if (n < 3) throw InputError("time series needs at least 3 points, got " + std::to_string(n));
    if (N < 1) throw InputError("time series needs at least one channel");
    if (ts.times.size() != n) throw InputError("time axis length does not match value columns");
    if (static_cast<int>(ts.channel_names.size()) != N)
        throw InputError("channel name count does not match channel count");
    for (int i = 0; i < n; ++i) {
        if (!std::isfinite(ts.times[i])) throw InputError("non-finite time stamp at index " + std::to_string(i));
        if (i > 0 && !(ts.times[i] > ts.times[i - 1]))
            throw InputError("time stamps must be strictly increasing (violated at index " + std::to_string(i) + ")");
    }
    if (!ts.values.allFinite()) throw InputError("non-finite channel value");
}

namespace {

std::vector<std::string> split_line(const std::string& line, char delimiter) {
    std::vector<std::string> cells;
    std::string cur;
    for (char c : line) {
        if (c == delimiter) {
            cells.push_back(cur);
            cur.clear();
        } else if (c != '\r') {
            cur.push_back(c);
        }
    }
    cells.push_back(cur);
    return cells;
}

double parse_cell(const std::string& cell, int row, int col) {
    const char* begin = cell.data();
    const char* end = begin + cell.size();
    while (begin < end && (*begin == ' ' || *begin == '\t')) ++begin;
    while (end > begin && (*(end - 1) == ' ' || *(end - 1) == '\t')) --end;
    double value = 0.0;
    const auto [ptr, ec] = std::from_chars(begin, end, value);
    if (ec != std::errc() || ptr != end || begin == end)
        throw InputError("non-numeric cell at row " + std::to_string(row) + ", column " + std::to_string(col) +
                         ": '" + cell + "'");
    return value;
}

} // namespace

TimeSeriesSet load_csv(const std::string& path, const CsvOptions& options) {
    std::ifstream in(path);
    if (!in) throw InputError("cannot open input file: " + path);

    std::vector<std::string> lines;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.find_first_not_of(" \t\r") != std::string::npos) lines.push_back(line);
    }
    if (lines.empty()) throw InputError("empty input file: " + path);

    std::size_t first_row = 0;
    std::vector<std::string> names;
    if (options.has_header) {
        auto cells = split_line(lines[0], options.delimiter);
        if (cells.size() < 2) throw InputError("header row needs a time column and at least one channel");
        names.assign(cells.begin() + 1, cells.end());
        first_row = 1;
    }
    if (first_row >= lines.size()) throw InputError("no data rows in input file: " + path);

    const auto first_cells = split_line(lines[first_row], options.delimiter);
    const std::size_t width = first_cells.size();
    if (width < 2) throw InputError("rows need a time column and at least one channel");
    const int N = static_cast<int>(width) - 1;
    const int n = static_cast<int>(lines.size() - first_row);

    TimeSeriesSet ts;
    ts.times.resize(n);
    ts.values.resize(N, n);
    for (int r = 0; r < n; ++r) {
        const int file_row = static_cast<int>(first_row) + r + 1; // 1-based for messages
        auto cells = split_line(lines[first_row + r], options.delimiter);
        if (cells.size() != width)
            throw InputError("ragged row " + std::to_string(file_row) + ": expected " + std::to_string(width) +
                             " cells, got " + std::to_string(cells.size()));
        ts.times[r] = parse_cell(cells[0], file_row, 1);
        for (int c = 0; c < N; ++c) ts.values(c, r) = parse_cell(cells[c + 1], file_row, c + 2);
    }

    if (options.has_header) {
        if (static_cast<int>(names.size()) != N) throw InputError("header width does not match data width");
        ts.channel_names = std::move(names);
    } else {
        for (int c = 0; c < N; ++c) ts.channel_names.push_back("ch" + std::to_string(c));
    }
    validate(ts);
    return ts;
}

void write_csv(const TimeSeriesSet& ts, const std::string& path, char delimiter) {
    std::ofstream out(path);
    if (!out) throw InputError("cannot open output file: " + path);
    out << "time";
    for (const auto& name : ts.channel_names) out << delimiter << name;
    out << "\n";
    char buf[64];
    for (int r = 0; r < ts.length(); ++r) {
        std::snprintf(buf, sizeof(buf), "%.17g", ts.times[r]);
        out << buf;
        for (int c = 0; c < ts.channels(); ++c) {
            std::snprintf(buf, sizeof(buf), "%.17g", ts.values(c, r));
            out << delimiter << buf;
        }
        out << "\n";
    }
}

TimeSeriesSet synth_mixed(int n_points, double t_max, double noise_std, std::uint64_t seed) {
    if (n_points < 3) throw InputError("synth_mixed needs n_points >= 3");
    if (!(t_max > 0.0)) throw InputError("synth_mixed needs t_max > 0");
    if (noise_std < 0.0) throw InputError("synth_mixed needs noise_std >= 0");

    TimeSeriesSet ts;
    ts.times.resize(n_points);
    ts.values.resize(3, n_points);
    ts.channel_names = {"f1", "f2", "f3"};
    for (int i = 0; i < n_points; ++i) ts.times[i] = t_max * static_cast<double>(i) / (n_points - 1);

    for (int c = 0; c < 3; ++c) {
        SeedStream stream(seed, "synth_mixed", static_cast<std::uint64_t>(c));
        for (int i = 0; i < n_points; ++i) {
            const double t = ts.times[i];
            double base = 0.0;
            if (c == 1) base = -5.0 * t;
            if (c == 2) base = std::sin(7.0 * t);
            const double eps = noise_std > 0.0 ? noise_std * stream.normal() : 0.0;
            ts.values(c, i) = base + eps;
        }
    }
    return ts;
}

LinearTrend fit_trend(const Eigen::VectorXd& times, const Eigen::VectorXd& channel, int channel_index) {
    const int n = static_cast<int>(times.size());
    const double t_mean = times.mean();
    const double y_mean = channel.mean();
    double sxx = 0.0;
    double sxy = 0.0;
    for (int i = 0; i < n; ++i) {
        const double dt = times[i] - t_mean;
        sxx += dt * dt;
        sxy += dt * (channel[i] - y_mean);
    }
    LinearTrend trend;
    trend.channel_index = channel_index;
    trend.slope = sxx > 0.0 ? sxy / sxx : 0.0;
    trend.intercept = y_mean - trend.slope * t_mean;
    return trend;
}

std::vector<LinearTrend> fit_trends(const TimeSeriesSet& ts) {
    std::vector<LinearTrend> trends;
    trends.reserve(ts.channels());
    for (int c = 0; c < ts.channels(); ++c) trends.push_back(fit_trend(ts.times, ts.values.row(c), c));
    return trends;
}

ResidualSet detrend(const TimeSeriesSet& ts) {
    validate(ts);
    ResidualSet res;
    res.times = ts.times;
    res.channel_names = ts.channel_names;
    res.values.resize(ts.channels(), ts.length());
    res.trends = fit_trends(ts);
    for (int c = 0; c < ts.channels(); ++c) {
        const auto& tr = res.trends[c];
        for (int i = 0; i < ts.length(); ++i)
            res.values(c, i) = ts.values(c, i) - (tr.slope * ts.times[i] + tr.intercept);
    }
    return res;
}

ResidualSet without_detrend(const TimeSeriesSet& ts) {
    validate(ts);
    ResidualSet res;
    res.times = ts.times;
    res.values = ts.values;
    res.channel_names = ts.channel_names;
    res.trends = fit_trends(ts);
    return res;
}

} // namespace topomix
