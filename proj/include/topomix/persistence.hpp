#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <limits>
#include <map>
#include <utility>
#include <vector>

#include "topomix/decompose.hpp"

namespace topomix {

struct PointCloud {
    Eigen::MatrixXd points; // m x d, row per point
    std::vector<int> source_time_index;

    int size() const { return static_cast<int>(points.rows()); }
    int dim() const { return static_cast<int>(points.cols()); }
};

// Sliding window of width r+1 with stride-eps taps. Point k collects
// (x_k, x_{k+eps}, ..., x_{k+r*eps}) and remembers k as its time index.
PointCloud delay_embed(const Eigen::VectorXd& x, int r, int eps);

// Greedy farthest-point subsample of size k (identity when the cloud is
// already small enough). Selection starts from seed % m and the result
// keeps the original point order.
PointCloud maxmin_landmarks(const PointCloud& cloud, int k, std::uint64_t seed);

double cloud_diameter(const PointCloud& cloud);
// min over points of the farthest distance from it; past this scale the
// complex is a cone and nothing in degree 1 survives
double enclosing_radius(const PointCloud& cloud);

struct PersistencePair {
    double birth = 0.0;
    double death = 0.0; // +inf for classes alive at max_scale
    int dimension = 0;
};

struct PersistenceDiagram {
    std::vector<PersistencePair> pairs; // sorted by (dimension, birth, death)
    int field_char = 47;
    double diameter = 0.0; // of the input cloud
    double max_scale = 0.0;
};

// Degree-1 representative, already restricted to the 1-skeleton at
// scale_used and lifted from Z_p to integers in (-p/2, p/2]. Absent edges
// carry value 0.
struct Cocycle {
    std::map<std::pair<int, int>, int> edge_values; // key (i, j) with i < j
    double birth = 0.0;
    double death = 0.0;
    double scale_used = 0.0;

    double persistence() const { return death - birth; }
};

struct RipsResult {
    PersistenceDiagram diagram;
    std::vector<Cocycle> cocycles; // one per degree-1 pair, same order
};

inline constexpr int kDefaultPointCap = 2048;

// Vietoris-Rips persistence in degrees 0 and 1 over Z_p. A simplex enters
// at its diameter; the complex stops at dimension 2 and scale max_scale.
// Pairs with death == birth are not reported.
RipsResult rips_persistence(const PointCloud& cloud, double max_scale, int p,
                            int point_cap = kDefaultPointCap);

struct ThresholdRule {
    double rho = 0.5;   // fraction of the diagram's largest degree-1 lifetime
    double alpha = 0.2; // fraction of the cloud diameter; noise embeddings
                        // measure below ~0.12, real cycles above ~0.45
};

// Degree-1 bars clearing both thresholds, most persistent first.
std::vector<Cocycle> significant_cocycles(const PersistenceDiagram& diag,
                                          const std::vector<Cocycle>& cocycles,
                                          const ThresholdRule& rule);

struct CircularCoordinate {
    Eigen::VectorXd values; // length n_total, each in [0, 1)
    double persistence = 0.0;
    int source_component = -1;
    bool disconnected_warning = false;
};

// Smooths the integer lift into an S^1-valued map: least squares
// min ||lift - d0 phi|| on the 1-skeleton at scale_used, then phi mod 1,
// pushed back onto time indices. When the cocycle lives on a landmark
// subset, pass the full embedding as full_cloud so every time index picks
// up the value of its nearest landmark. Trailing indices with no embedding
// point repeat the last covered value.
CircularCoordinate circular_coordinate(const PointCloud& cloud, const Cocycle& cocycle,
                                       int n_total, const PointCloud* full_cloud = nullptr);

struct TopologyConfig {
    int delay_r = 20;
    int delay_eps = 1;
    int field_prime = 47;
    ThresholdRule rule;
    int landmark_cap = 256;
    int point_cap = kDefaultPointCap;
    double max_scale = -1.0; // <= 0 picks the enclosing radius per component
    std::uint64_t seed = 0;
};

struct ComponentProvenance {
    int component = -1; // index in the reordered component numbering
    double tau = 0.0;
    double best_persistence = 0.0; // 0 when the diagram had no degree-1 bar
    std::vector<double> significant_persistences;
    bool periodic = false;
    bool disconnected_warning = false;
};

struct MixedCoordinates {
    std::vector<Eigen::VectorXd> linear_parts; // score courses of linear components
    std::vector<CircularCoordinate> circular_parts;
    int n_noise = 0;
    std::vector<double> tau_values; // every kept component, reordered
    std::vector<ComponentProvenance> provenance; // one per non-linear component
    std::vector<PersistenceDiagram> diagrams;    // parallel to provenance

    int total() const {
        return static_cast<int>(linear_parts.size() + circular_parts.size()) + n_noise;
    }
};

// For each non-linear component: embed, landmark if large, run persistence,
// keep the most persistent significant class as a circular coordinate or
// count the component as noise.
MixedCoordinates extract_mixed_coordinates(const SeparatedComponents& sep,
                                           const TopologyConfig& cfg);

} // namespace topomix
