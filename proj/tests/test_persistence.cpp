#include <cmath>
#include <limits>
#include <vector>

#include "doctest.h"
#include "oracle_reduction.hpp"
#include "topomix/errors.hpp"
#include "topomix/persistence.hpp"
#include "topomix/rng.hpp"
#include "topomix/series.hpp"

using namespace topomix;

namespace {

const double kInf = std::numeric_limits<double>::infinity();

double wrap_half(double v) { return v - std::round(v); } // to [-0.5, 0.5)

PointCloud circle_cloud(int n, double radius = 1.0) {
    PointCloud c;
    c.points.resize(n, 2);
    c.source_time_index.resize(n);
    for (int i = 0; i < n; ++i) {
        double th = 2.0 * M_PI * i / n;
        c.points(i, 0) = radius * std::cos(th);
        c.points(i, 1) = radius * std::sin(th);
        c.source_time_index[i] = i;
    }
    return c;
}

PointCloud random_cloud(SeedStream& rs, int m, int d) {
    PointCloud c;
    c.points.resize(m, d);
    c.source_time_index.resize(m);
    for (int i = 0; i < m; ++i) {
        for (int k = 0; k < d; ++k) c.points(i, k) = rs.normal();
        c.source_time_index[i] = i;
    }
    return c;
}

int count_dim(const PersistenceDiagram& dg, int dim) {
    int n = 0;
    for (const auto& p : dg.pairs) n += (p.dimension == dim);
    return n;
}

// Z_p cocycle condition on every triangle of the skeleton at scale_used
bool cocycle_condition_holds(const PointCloud& cloud, const Cocycle& co, int p) {
    const int m = cloud.size();
    Eigen::MatrixXd D(m, m);
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < m; ++j)
            D(i, j) = (cloud.points.row(i) - cloud.points.row(j)).norm();
    auto val = [&](int i, int j) {
        auto it = co.edge_values.find({i, j});
        return it == co.edge_values.end() ? 0 : it->second;
    };
    for (int i = 0; i < m; ++i)
        for (int j = i + 1; j < m; ++j)
            for (int k = j + 1; k < m; ++k) {
                if (D(i, j) > co.scale_used || D(i, k) > co.scale_used ||
                    D(j, k) > co.scale_used)
                    continue;
                long long s = val(j, k) - val(i, k) + val(i, j);
                if (((s % p) + p) % p != 0) return false;
            }
    return true;
}

} // namespace

TEST_CASE("delay embedding worked example and projection property") {
    Eigen::VectorXd x(3);
    x << 1, 2, 3;
    auto c = delay_embed(x, 1, 1);
    REQUIRE(c.size() == 2);
    REQUIRE(c.dim() == 2);
    CHECK(c.points(0, 0) == 1);
    CHECK(c.points(0, 1) == 2);
    CHECK(c.points(1, 0) == 2);
    CHECK(c.points(1, 1) == 3);
    CHECK(c.source_time_index == std::vector<int>{0, 1});

    SeedStream rs(3, "embed");
    Eigen::VectorXd y(60);
    for (int i = 0; i < 60; ++i) y(i) = rs.normal();
    auto e = delay_embed(y, 7, 2);
    REQUIRE(e.size() == 60 - 14);
    for (int k = 0; k < e.size(); ++k) CHECK(e.points(k, 0) == y(k));

    CHECK_THROWS_AS(delay_embed(x, 3, 1), InputError);
    CHECK_THROWS_AS(delay_embed(x, 1, 3), InputError);
    CHECK_THROWS_AS(delay_embed(x, 0, 1), InputError);
}

TEST_CASE("delay embedding of two sine periods closes into a loop") {
    const int n = 200;
    Eigen::VectorXd x(n);
    for (int i = 0; i < n; ++i) x(i) = std::sin(4.0 * M_PI * i / (n - 1));
    auto c = delay_embed(x, 1, 1);
    for (int i = 0; i < c.size(); ++i) {
        double nn = kInf;
        for (int j = 0; j < c.size(); ++j)
            if (j != i) nn = std::min(nn, (c.points.row(i) - c.points.row(j)).norm());
        CHECK(nn < 0.1);
    }
}

TEST_CASE("maxmin landmarks") {
    PointCloud seg;
    seg.points.resize(3, 1);
    seg.points << 0.0, 0.5, 1.0;
    seg.source_time_index = {0, 1, 2};

    auto same = maxmin_landmarks(seg, 5, 7);
    CHECK(same.size() == 3);

    auto two = maxmin_landmarks(seg, 2, 0); // seeded at the left endpoint
    REQUIRE(two.size() == 2);
    CHECK(two.points(0, 0) == 0.0);
    CHECK(two.points(1, 0) == 1.0);
    CHECK(two.source_time_index == std::vector<int>{0, 2});

    SeedStream rs(12, "lm");
    auto cloud = random_cloud(rs, 120, 3);
    auto a = maxmin_landmarks(cloud, 30, 99);
    auto b = maxmin_landmarks(cloud, 30, 99);
    CHECK(a.source_time_index == b.source_time_index);
    CHECK((a.points - b.points).cwiseAbs().maxCoeff() == 0.0);

    // subsample spreads: its min pairwise gap cannot collapse
    double mingap = kInf;
    for (int i = 0; i < a.size(); ++i)
        for (int j = i + 1; j < a.size(); ++j)
            mingap = std::min(mingap, (a.points.row(i) - a.points.row(j)).norm());
    CHECK(mingap > 0.0);

    CHECK_THROWS_AS(maxmin_landmarks(seg, 1, 0), InputError);
}

TEST_CASE("single point has no degree-1 classes") {
    PointCloud one;
    one.points = Eigen::MatrixXd::Zero(1, 2);
    one.source_time_index = {0};
    auto res = rips_persistence(one, 1.0, 47);
    CHECK(count_dim(res.diagram, 1) == 0);
    REQUIRE(count_dim(res.diagram, 0) == 1);
    CHECK(res.diagram.pairs[0].death == kInf);
    CHECK(res.cocycles.empty());
}

TEST_CASE("unit square carries exactly one loop from 1 to sqrt(2)") {
    PointCloud sq;
    sq.points.resize(4, 2);
    sq.points << 0, 0, 1, 0, 1, 1, 0, 1;
    sq.source_time_index = {0, 1, 2, 3};
    auto res = rips_persistence(sq, 2.0, 47);

    REQUIRE(count_dim(res.diagram, 1) == 1);
    const auto& bar = res.diagram.pairs.back();
    CHECK(bar.birth == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(bar.death == doctest::Approx(std::sqrt(2.0)).epsilon(1e-15));

    REQUIRE(res.cocycles.size() == 1);
    const Cocycle& co = res.cocycles[0];
    CHECK(co.birth == bar.birth);
    CHECK(co.death == bar.death);
    CHECK(co.scale_used == doctest::Approx(1.0 + 0.99 * (std::sqrt(2.0) - 1.0)));
    CHECK_FALSE(co.edge_values.empty());
    for (const auto& [e, v] : co.edge_values) {
        CHECK(v != 0);
        CHECK(2 * v <= 47);
        CHECK(2 * v > -47);
    }
    CHECK(cocycle_condition_holds(sq, co, 47));

    // degree 0: three merges at 1 plus the essential class
    REQUIRE(count_dim(res.diagram, 0) == 4);
    for (int i = 0; i < 3; ++i) {
        CHECK(res.diagram.pairs[i].birth == 0.0);
        CHECK(res.diagram.pairs[i].death == 1.0);
    }
    CHECK(res.diagram.pairs[3].death == kInf);
}

TEST_CASE("forty circle points produce one dominant loop") {
    auto c = circle_cloud(40);
    double ms = enclosing_radius(c);
    auto res = rips_persistence(c, ms, 47);
    int big = 0;
    for (const auto& p : res.diagram.pairs) {
        if (p.dimension != 1) continue;
        double pers = p.death - p.birth;
        if (pers > 1.0)
            ++big;
        else
            CHECK(pers < 0.1);
    }
    CHECK(big == 1);
}

TEST_CASE("oversized clouds are rejected with advice") {
    SeedStream rs(44, "cap");
    auto cloud = random_cloud(rs, 30, 2);
    try {
        rips_persistence(cloud, 1.0, 47, 25);
        FAIL("expected ComplexityError");
    } catch (const ComplexityError& e) {
        CHECK(std::string(e.what()).find("maxmin_landmarks") != std::string::npos);
    }
}

TEST_CASE("field characteristic must be prime") {
    auto c = circle_cloud(5);
    CHECK_THROWS_AS(rips_persistence(c, 1.0, 46), ConfigError);
    CHECK_THROWS_AS(rips_persistence(c, 1.0, 1), ConfigError);
    CHECK_NOTHROW(rips_persistence(c, 1.0, 2));
}

TEST_CASE("diagrams match the reduction oracle exactly on random clouds") {
    SeedStream rs(2024, "oracle-fuzz");
    const int primes[3] = {2, 3, 47};
    for (int trial = 0; trial < 100; ++trial) {
        int m = 2 + int(rs.next_u64() % 24);
        int d = 2 + int(rs.next_u64() % 2);
        auto cloud = random_cloud(rs, m, d);
        double diam = cloud_diameter(cloud);
        double ms = (trial % 2 == 0) ? enclosing_radius(cloud) : 0.75 * diam;
        if (!(ms > 0.0)) continue;
        int p = primes[trial % 3];

        auto res = rips_persistence(cloud, ms, p);
        auto ref = oracle::reduction_diagram(cloud, ms, p);

        REQUIRE(res.diagram.pairs.size() == ref.size());
        for (std::size_t i = 0; i < ref.size(); ++i) {
            CHECK(res.diagram.pairs[i].dimension == ref[i].dimension);
            CHECK(res.diagram.pairs[i].birth == ref[i].birth);
            CHECK(res.diagram.pairs[i].death == ref[i].death);
        }
    }
}

TEST_CASE("every returned representative is a cocycle at its scale") {
    SeedStream rs(31, "cocycle-fuzz");
    for (int trial = 0; trial < 25; ++trial) {
        int m = 8 + int(rs.next_u64() % 14);
        auto cloud = random_cloud(rs, m, 2);
        double ms = enclosing_radius(cloud);
        if (!(ms > 0.0)) continue;
        auto res = rips_persistence(cloud, ms, 47);
        for (const auto& pr : res.diagram.pairs) CHECK(pr.death >= pr.birth);
        for (const auto& co : res.cocycles) {
            CHECK(co.death > co.birth);
            CHECK(cocycle_condition_holds(cloud, co, 47));
        }
    }
}

TEST_CASE("scaling the cloud scales the diagram exactly") {
    SeedStream rs(55, "scale");
    auto cloud = random_cloud(rs, 18, 2);
    double ms = enclosing_radius(cloud);
    auto base = rips_persistence(cloud, ms, 47);

    PointCloud scaled = cloud;
    scaled.points *= 4.0; // power of two keeps the arithmetic exact
    auto big = rips_persistence(scaled, 4.0 * ms, 47);

    REQUIRE(big.diagram.pairs.size() == base.diagram.pairs.size());
    for (std::size_t i = 0; i < base.diagram.pairs.size(); ++i) {
        CHECK(big.diagram.pairs[i].dimension == base.diagram.pairs[i].dimension);
        CHECK(big.diagram.pairs[i].birth == 4.0 * base.diagram.pairs[i].birth);
        CHECK(big.diagram.pairs[i].death == 4.0 * base.diagram.pairs[i].death);
    }
}

TEST_CASE("repeated runs are bit-identical") {
    SeedStream rs(71, "det");
    auto cloud = random_cloud(rs, 20, 3);
    double ms = enclosing_radius(cloud);
    auto a = rips_persistence(cloud, ms, 47);
    auto b = rips_persistence(cloud, ms, 47);
    REQUIRE(a.diagram.pairs.size() == b.diagram.pairs.size());
    for (std::size_t i = 0; i < a.diagram.pairs.size(); ++i) {
        CHECK(a.diagram.pairs[i].birth == b.diagram.pairs[i].birth);
        CHECK(a.diagram.pairs[i].death == b.diagram.pairs[i].death);
    }
    REQUIRE(a.cocycles.size() == b.cocycles.size());
    for (std::size_t i = 0; i < a.cocycles.size(); ++i)
        CHECK(a.cocycles[i].edge_values == b.cocycles[i].edge_values);
}

namespace {

PersistenceDiagram fake_diagram(const std::vector<std::pair<double, double>>& bars,
                                double diameter) {
    PersistenceDiagram dg;
    dg.field_char = 47;
    dg.diameter = diameter;
    dg.max_scale = diameter;
    for (auto [b, d] : bars) dg.pairs.push_back({b, d, 1});
    return dg;
}

std::vector<Cocycle> fake_cocycles(const PersistenceDiagram& dg) {
    std::vector<Cocycle> out;
    for (const auto& p : dg.pairs)
        if (p.dimension == 1) {
            Cocycle c;
            c.birth = p.birth;
            c.death = p.death;
            c.scale_used = p.birth;
            out.push_back(c);
        }
    return out;
}

} // namespace

TEST_CASE("threshold rule keeps only dominant bars") {
    auto dg = fake_diagram({{0.0, 2.0}, {0.3, 0.4}, {1.0, 1.1}}, 2.0);
    auto cos = fake_cocycles(dg);

    ThresholdRule quarter{0.25, 0.05};
    auto sig = significant_cocycles(dg, cos, quarter);
    REQUIRE(sig.size() == 1);
    CHECK(sig[0].birth == 0.0);
    CHECK(sig[0].death == 2.0);

    // alpha knob alone can reject everything
    ThresholdRule harsh{0.0, 2.0};
    CHECK(significant_cocycles(dg, cos, harsh).empty());

    PersistenceDiagram empty;
    CHECK(significant_cocycles(empty, {}, quarter).empty());

    // result comes back most persistent first
    auto dg2 = fake_diagram({{0.0, 1.0}, {0.0, 3.0}, {0.5, 2.6}}, 1.0);
    auto cos2 = fake_cocycles(dg2);
    auto sig2 = significant_cocycles(dg2, cos2, ThresholdRule{0.3, 0.0});
    REQUIRE(sig2.size() == 3);
    CHECK(sig2[0].persistence() >= sig2[1].persistence());
    CHECK(sig2[1].persistence() >= sig2[2].persistence());

    CHECK_THROWS_AS(significant_cocycles(dg, {}, quarter), InputError);
}

TEST_CASE("circle coordinate tracks the angle up to offset and flip") {
    auto c = circle_cloud(40);
    double ms = enclosing_radius(c);
    auto res = rips_persistence(c, ms, 47);
    auto sig = significant_cocycles(res.diagram, res.cocycles, ThresholdRule{});
    REQUIRE_FALSE(sig.empty());

    auto cc = circular_coordinate(c, sig[0], 40);
    REQUIRE(cc.values.size() == 40);
    CHECK_FALSE(cc.disconnected_warning);
    for (int i = 0; i < 40; ++i) {
        CHECK(cc.values(i) >= 0.0);
        CHECK(cc.values(i) < 1.0);
    }

    // winding over the closed loop is a single turn either way
    double wind = 0.0;
    for (int i = 0; i < 40; ++i) wind += wrap_half(cc.values((i + 1) % 40) - cc.values(i));
    CHECK(std::abs(std::abs(wind) - 1.0) < 1e-6);

    // against analytic angles, allowing global offset and inversion
    double best = kInf;
    for (int sign : {+1, -1}) {
        double base = wrap_half(cc.values(0) - sign * 0.0);
        double worst = 0.0;
        for (int i = 0; i < 40; ++i) {
            double target = sign * (double(i) / 40.0);
            worst = std::max(worst, std::abs(wrap_half(cc.values(i) - target - base)));
        }
        best = std::min(best, worst);
    }
    CHECK(best <= 0.05);
}

TEST_CASE("zero cocycle smooths to a constant") {
    PointCloud sq;
    sq.points.resize(4, 2);
    sq.points << 0, 0, 1, 0, 1, 1, 0, 1;
    sq.source_time_index = {0, 1, 2, 3};
    Cocycle zero;
    zero.birth = 0.0;
    zero.death = 2.0;
    zero.scale_used = 1.5;
    auto cc = circular_coordinate(sq, zero, 4);
    for (int i = 0; i < 4; ++i) CHECK(cc.values(i) == 0.0);
}

TEST_CASE("adding an integer coboundary shifts the coordinate by a constant") {
    auto c = circle_cloud(30);
    double ms = enclosing_radius(c);
    auto res = rips_persistence(c, ms, 47);
    auto sig = significant_cocycles(res.diagram, res.cocycles, ThresholdRule{});
    REQUIRE_FALSE(sig.empty());
    const Cocycle& co = sig[0];
    auto base = circular_coordinate(c, co, 30);

    SeedStream rs(13, "cobound");
    std::vector<int> psi(30);
    for (auto& v : psi) v = int(rs.next_u64() % 7) - 3;

    Cocycle bumped;
    bumped.birth = co.birth;
    bumped.death = co.death;
    bumped.scale_used = co.scale_used;
    for (int i = 0; i < 30; ++i)
        for (int j = i + 1; j < 30; ++j) {
            if ((c.points.row(i) - c.points.row(j)).norm() > co.scale_used) continue;
            auto it = co.edge_values.find({i, j});
            int v = (it == co.edge_values.end() ? 0 : it->second) + psi[j] - psi[i];
            if (v != 0) bumped.edge_values[{i, j}] = v;
        }
    auto shifted = circular_coordinate(c, bumped, 30);

    double delta0 = wrap_half(shifted.values(0) - base.values(0));
    for (int i = 0; i < 30; ++i) {
        double di = wrap_half(shifted.values(i) - base.values(i));
        CHECK(std::abs(wrap_half(di - delta0)) < 1e-6);
    }
}

TEST_CASE("disconnected skeletons are solved per part and flagged") {
    PointCloud two;
    two.points.resize(8, 2);
    two.points << 0, 0, 1, 0, 1, 1, 0, 1, 100, 0, 101, 0, 101, 1, 100, 1;
    two.source_time_index = {0, 1, 2, 3, 4, 5, 6, 7};
    Cocycle zero;
    zero.birth = 0.0;
    zero.death = 3.0;
    zero.scale_used = 1.5;
    auto cc = circular_coordinate(two, zero, 8);
    CHECK(cc.disconnected_warning);
    for (int i = 0; i < 8; ++i) CHECK(cc.values(i) == 0.0);
}

TEST_CASE("mixed extraction separates drift, cycle, and noise") {
    auto ts = synth_mixed(200, 4.0 * M_PI, 0.2, 1);
    auto res = without_detrend(ts);
    auto pc = pca(res);
    auto sep = classify_linear(pc, res.times, 0.5);

    TopologyConfig cfg;
    auto mixed = extract_mixed_coordinates(sep, cfg);

    CHECK(mixed.linear_parts.size() == 1);
    CHECK(mixed.circular_parts.size() == 1);
    CHECK(mixed.n_noise == 1);
    CHECK(mixed.total() == sep.total());

    const auto& cc = mixed.circular_parts[0];
    REQUIRE(cc.values.size() == 200);
    for (int i = 0; i < 200; ++i) {
        CHECK(cc.values(i) >= 0.0);
        CHECK(cc.values(i) < 1.0);
    }
    CHECK(cc.persistence > 0.0);
    CHECK(cc.source_component >= 1);

    REQUIRE(mixed.provenance.size() == 2);
    REQUIRE(mixed.diagrams.size() == 2);
    int periodic = 0;
    for (const auto& pv : mixed.provenance) periodic += pv.periodic;
    CHECK(periodic == 1);
}

TEST_CASE("noiseless input yields a cleaner cycle than the noisy one") {
    auto noisy_ts = synth_mixed(200, 4.0 * M_PI, 0.2, 1);
    auto clean_ts = synth_mixed(200, 4.0 * M_PI, 0.0, 1);

    TopologyConfig cfg;
    auto run = [&](const TimeSeriesSet& ts) {
        auto res = without_detrend(ts);
        auto sep = classify_linear(pca(res), res.times, 0.5);
        return extract_mixed_coordinates(sep, cfg);
    };
    auto noisy = run(noisy_ts);
    auto clean = run(clean_ts);

    REQUIRE(clean.circular_parts.size() == 1);
    REQUIRE(noisy.circular_parts.size() == 1);
    CHECK(clean.n_noise == 0); // the flat channel has no variance left
    CHECK(clean.circular_parts[0].persistence > noisy.circular_parts[0].persistence);
}

TEST_CASE("pure noise rarely fakes a cycle") {
    TopologyConfig cfg;
    int clean_runs = 0;
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        TimeSeriesSet ts;
        const int n = 200;
        ts.times.resize(n);
        ts.values.resize(3, n);
        SeedStream rs(seed, "pure-noise");
        for (int i = 0; i < n; ++i) ts.times(i) = double(i);
        for (int c = 0; c < 3; ++c)
            for (int i = 0; i < n; ++i) ts.values(c, i) = rs.normal();
        ts.channel_names = {"a", "b", "c"};

        auto res = without_detrend(ts);
        auto sep = classify_linear(pca(res), res.times, 0.5);
        auto mixed = extract_mixed_coordinates(sep, cfg);
        if (mixed.circular_parts.empty()) ++clean_runs;
    }
    CHECK(clean_runs >= 9);
}

TEST_CASE("large embeddings go through landmarks and still wind") {
    auto ts = synth_mixed(400, 4.0 * M_PI, 0.0, 2);
    auto res = without_detrend(ts);
    auto sep = classify_linear(pca(res), res.times, 0.5);

    TopologyConfig cfg; // landmark_cap 256 < 380 embedded points
    auto mixed = extract_mixed_coordinates(sep, cfg);
    REQUIRE(mixed.circular_parts.size() == 1);
    const auto& cc = mixed.circular_parts[0];
    REQUIRE(cc.values.size() == 400);

    // sin(7t) over [0, 4pi] completes 14 revolutions
    double wind = 0.0;
    for (int i = 0; i + 1 < 400; ++i) wind += wrap_half(cc.values(i + 1) - cc.values(i));
    CHECK(std::abs(wind) > 12.0);
    CHECK(std::abs(wind) < 16.0);
}
