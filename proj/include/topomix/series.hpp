#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

namespace topomix {

/// N channels sampled on one shared, strictly increasing time axis.
struct TimeSeriesSet {
    Eigen::VectorXd times;          // length n
    Eigen::MatrixXd values;         // N x n, row per channel
    std::vector<std::string> channel_names;

    int channels() const { return static_cast<int>(values.rows()); }
    int length() const { return static_cast<int>(values.cols()); }
};

// Throws InputError when an invariant is broken (n < 3, non-monotone
// times, non-finite values, name/shape mismatch).
void validate(const TimeSeriesSet& ts);

struct LinearTrend {
    double slope = 0.0;
    double intercept = 0.0;
    int channel_index = 0;
};

/// Detrended copy of a series set; trends[i] is the OLS line removed from
/// channel i.
struct ResidualSet {
    Eigen::VectorXd times;
    Eigen::MatrixXd values;
    std::vector<std::string> channel_names;
    std::vector<LinearTrend> trends;

    int channels() const { return static_cast<int>(values.rows()); }
    int length() const { return static_cast<int>(values.cols()); }
};

struct CsvOptions {
    char delimiter = ',';
    bool has_header = true;
};

// Column 0 is time, columns 1..N are channels. Channel names come from the
// header row when present, otherwise ch0..ch{N-1}.
TimeSeriesSet load_csv(const std::string& path, const CsvOptions& options = {});

void write_csv(const TimeSeriesSet& ts, const std::string& path, char delimiter = ',');

// Three channels on an equispaced grid over [0, t_max]: pure noise,
// -5t + noise, sin(7t) + noise. Per-channel noise streams are derived from
// (seed, channel index) so the draws of one channel never depend on the
// others.
TimeSeriesSet synth_mixed(int n_points, double t_max, double noise_std, std::uint64_t seed);

// Per-channel OLS fit against time; closed-form two-parameter normal
// equations.
LinearTrend fit_trend(const Eigen::VectorXd& times, const Eigen::VectorXd& channel, int channel_index);
std::vector<LinearTrend> fit_trends(const TimeSeriesSet& ts);

ResidualSet detrend(const TimeSeriesSet& ts);

// Residual set that keeps the original values but still records the OLS
// trends (the pipeline's --no-detrend path).
ResidualSet without_detrend(const TimeSeriesSet& ts);

} // namespace topomix
