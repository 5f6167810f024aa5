#include "topomix/persistence.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <string>
#include <unordered_map>

#include "topomix/errors.hpp"
#include "topomix/rng.hpp"

namespace topomix {

namespace {

std::uint64_t ekey(int i, int j) {
    return (std::uint64_t(std::uint32_t(i)) << 32) | std::uint32_t(j);
}

long long powmod(long long a, long long e, long long m) {
    long long r = 1 % m;
    a %= m;
    while (e > 0) {
        if (e & 1) r = r * a % m;
        a = a * a % m;
        e >>= 1;
    }
    return r;
}

bool is_prime(int p) {
    if (p < 2) return false;
    for (long long d = 2; d * d <= p; ++d)
        if (p % d == 0) return false;
    return true;
}

// representative in (-p/2, p/2] of v in [0, p)
int lift_sym(int v, int p) { return 2 * v > p ? v - p : v; }

struct UnionFind {
    std::vector<int> parent;
    explicit UnionFind(int n) : parent(n) { std::iota(parent.begin(), parent.end(), 0); }
    int find(int x) {
        while (parent[x] != x) {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        return x;
    }
    bool unite(int a, int b) {
        a = find(a);
        b = find(b);
        if (a == b) return false;
        parent[a] = b;
        return true;
    }
};

Eigen::MatrixXd pairwise(const PointCloud& cloud) {
    const int m = cloud.size();
    Eigen::MatrixXd D = Eigen::MatrixXd::Zero(m, m);
    for (int i = 0; i < m; ++i)
        for (int j = i + 1; j < m; ++j) {
            double d = (cloud.points.row(i) - cloud.points.row(j)).norm();
            D(i, j) = d;
            D(j, i) = d;
        }
    return D;
}

} // namespace

PointCloud delay_embed(const Eigen::VectorXd& x, int r, int eps) {
    if (r < 1 || eps < 1) throw InputError("delay_embed: r and eps must both be at least 1");
    const int n = static_cast<int>(x.size());
    if (n <= r * eps)
        throw InputError("delay_embed: series length " + std::to_string(n) +
                         " must exceed r*eps = " + std::to_string(r * eps));
    const int m = n - r * eps;
    PointCloud cloud;
    cloud.points.resize(m, r + 1);
    cloud.source_time_index.resize(m);
    for (int k = 0; k < m; ++k) {
        for (int a = 0; a <= r; ++a) cloud.points(k, a) = x(k + a * eps);
        cloud.source_time_index[k] = k;
    }
    if (!cloud.points.allFinite()) throw InputError("delay_embed: non-finite input values");
    return cloud;
}

PointCloud maxmin_landmarks(const PointCloud& cloud, int k, std::uint64_t seed) {
    if (k < 2) throw InputError("maxmin_landmarks: k must be at least 2");
    const int m = cloud.size();
    if (m <= k) return cloud;

    int first = static_cast<int>(seed % std::uint64_t(m));
    std::vector<double> mind(m);
    for (int i = 0; i < m; ++i) mind[i] = (cloud.points.row(i) - cloud.points.row(first)).norm();

    std::vector<int> chosen{first};
    while (static_cast<int>(chosen.size()) < k) {
        int best = 0;
        for (int i = 1; i < m; ++i)
            if (mind[i] > mind[best]) best = i;
        chosen.push_back(best);
        for (int i = 0; i < m; ++i)
            mind[i] = std::min(mind[i], (cloud.points.row(i) - cloud.points.row(best)).norm());
    }
    std::sort(chosen.begin(), chosen.end());

    PointCloud out;
    out.points.resize(k, cloud.dim());
    out.source_time_index.resize(k);
    for (int i = 0; i < k; ++i) {
        out.points.row(i) = cloud.points.row(chosen[i]);
        out.source_time_index[i] = cloud.source_time_index[chosen[i]];
    }
    return out;
}

double cloud_diameter(const PointCloud& cloud) {
    const int m = cloud.size();
    double d = 0.0;
    for (int i = 0; i < m; ++i)
        for (int j = i + 1; j < m; ++j)
            d = std::max(d, (cloud.points.row(i) - cloud.points.row(j)).norm());
    return d;
}

double enclosing_radius(const PointCloud& cloud) {
    const int m = cloud.size();
    if (m < 2) return 0.0;
    double best = std::numeric_limits<double>::infinity();
    for (int i = 0; i < m; ++i) {
        double far = 0.0;
        for (int j = 0; j < m; ++j)
            far = std::max(far, (cloud.points.row(i) - cloud.points.row(j)).norm());
        best = std::min(best, far);
    }
    return best;
}

namespace {

struct LiveCocycle {
    std::unordered_map<std::uint64_t, int> support; // edge -> value in [1, p)
    double birth = 0.0;
    std::int64_t seq = 0;
    bool alive = true;
};

struct Reducer {
    int p;
    double max_scale;
    const Eigen::MatrixXd& D;
    std::vector<LiveCocycle> lives;
    std::unordered_map<std::uint64_t, std::vector<int>> buckets;
    std::int64_t next_seq = 0;

    std::vector<PersistencePair> dim1_pairs;
    std::vector<Cocycle> dim1_reps;

    Reducer(int p_, double ms, const Eigen::MatrixXd& D_) : p(p_), max_scale(ms), D(D_) {}

    void bucket_add(std::uint64_t e, int id) { buckets[e].push_back(id); }

    void bucket_remove(std::uint64_t e, int id) {
        auto it = buckets.find(e);
        if (it == buckets.end()) return;
        auto& v = it->second;
        v.erase(std::find(v.begin(), v.end(), id));
        if (v.empty()) buckets.erase(it);
    }

    void create(int i, int j, double diam) {
        LiveCocycle lc;
        lc.support.emplace(ekey(i, j), 1);
        lc.birth = diam;
        lc.seq = next_seq++;
        int id = static_cast<int>(lives.size());
        lives.push_back(std::move(lc));
        bucket_add(ekey(i, j), id);
    }

    int value_on(const LiveCocycle& lc, std::uint64_t e) const {
        auto it = lc.support.find(e);
        return it == lc.support.end() ? 0 : it->second;
    }

    Cocycle materialize(const LiveCocycle& lc, double death) const {
        Cocycle co;
        co.birth = lc.birth;
        co.death = death;
        co.scale_used = std::isinf(death)
                            ? max_scale
                            : std::min(lc.birth + 0.99 * (death - lc.birth), max_scale);
        for (const auto& [e, v] : lc.support) {
            int i = static_cast<int>(e >> 32);
            int j = static_cast<int>(e & 0xffffffffu);
            if (D(i, j) <= co.scale_used) co.edge_values[{i, j}] = lift_sym(v, p);
        }
        return co;
    }

    // triangle on sorted vertices a<b<c entering at diam
    void triangle(int a, int b, int c, double diam) {
        const std::uint64_t e_bc = ekey(b, c), e_ac = ekey(a, c), e_ab = ekey(a, b);

        std::vector<int> cand;
        for (std::uint64_t e : {e_bc, e_ac, e_ab}) {
            auto it = buckets.find(e);
            if (it != buckets.end()) cand.insert(cand.end(), it->second.begin(), it->second.end());
        }
        if (cand.empty()) return;
        std::sort(cand.begin(), cand.end());
        cand.erase(std::unique(cand.begin(), cand.end()), cand.end());

        // evaluate the coboundary pairing on each candidate
        std::vector<std::pair<int, long long>> nz;
        for (int id : cand) {
            const LiveCocycle& lc = lives[id];
            long long v = value_on(lc, e_bc) - value_on(lc, e_ac) + value_on(lc, e_ab);
            v %= p;
            if (v < 0) v += p;
            if (v != 0) nz.emplace_back(id, v);
        }
        if (nz.empty()) return;

        // youngest nonzero dies
        int star = nz[0].first;
        long long cstar = nz[0].second;
        for (const auto& [id, v] : nz)
            if (lives[id].seq > lives[star].seq) {
                star = id;
                cstar = v;
            }

        LiveCocycle& dying = lives[star];
        if (diam > dying.birth) {
            dim1_pairs.push_back({dying.birth, diam, 1});
            dim1_reps.push_back(materialize(dying, diam));
        }

        long long inv_c = powmod(cstar, p - 2, p);
        for (const auto& [id, v] : nz) {
            if (id == star) continue;
            long long q = v * inv_c % p;
            LiveCocycle& lc = lives[id];
            for (const auto& [e, sv] : dying.support) {
                auto it = lc.support.find(e);
                long long cur = (it == lc.support.end()) ? 0 : it->second;
                long long nv = ((cur - q * sv) % p + p) % p;
                if (nv == 0) {
                    if (it != lc.support.end()) {
                        lc.support.erase(it);
                        bucket_remove(e, id);
                    }
                } else if (it == lc.support.end()) {
                    lc.support.emplace(e, static_cast<int>(nv));
                    bucket_add(e, id);
                } else {
                    it->second = static_cast<int>(nv);
                }
            }
        }

        for (const auto& [e, sv] : dying.support) bucket_remove(e, star);
        dying.alive = false;
        dying.support.clear();
    }
};

} // namespace

RipsResult rips_persistence(const PointCloud& cloud, double max_scale, int p, int point_cap) {
    const int m = cloud.size();
    if (m < 1) throw InputError("rips_persistence: empty point cloud");
    if (!(max_scale > 0.0)) throw InputError("rips_persistence: max_scale must be positive");
    if (!is_prime(p)) throw ConfigError("rips_persistence: field characteristic must be prime");
    if (m > point_cap)
        throw ComplexityError("rips_persistence: " + std::to_string(m) + " points exceed the cap of " +
                              std::to_string(point_cap) +
                              "; subsample first with maxmin_landmarks");

    Eigen::MatrixXd D = pairwise(cloud);

    struct Edge {
        double d;
        int i, j;
    };
    std::vector<Edge> edges;
    double diam = 0.0;
    for (int i = 0; i < m; ++i)
        for (int j = i + 1; j < m; ++j) {
            diam = std::max(diam, D(i, j));
            if (D(i, j) <= max_scale) edges.push_back({D(i, j), i, j});
        }
    std::sort(edges.begin(), edges.end(), [](const Edge& a, const Edge& b) {
        if (a.d != b.d) return a.d < b.d;
        if (a.i != b.i) return a.i < b.i;
        return a.j < b.j;
    });

    UnionFind uf(m);
    Reducer red(p, max_scale, D);
    std::vector<PersistencePair> dim0;
    std::vector<std::vector<int>> adj(m); // neighbors over already processed edges, sorted

    std::vector<int> common;
    for (const Edge& e : edges) {
        if (uf.unite(e.i, e.j)) {
            if (e.d > 0.0) dim0.push_back({0.0, e.d, 0});
        } else {
            red.create(e.i, e.j, e.d);
        }

        // triangles closed by this edge: earlier-edge neighbors of both ends
        common.clear();
        const auto& A = adj[e.i];
        const auto& B = adj[e.j];
        std::set_intersection(A.begin(), A.end(), B.begin(), B.end(), std::back_inserter(common));
        for (int v : common) {
            int a = e.i, b = e.j, c = v;
            if (c < a) std::swap(a, c);
            if (c < b) std::swap(b, c);
            if (b < a) std::swap(a, b);
            red.triangle(a, b, c, e.d);
        }

        adj[e.i].insert(std::upper_bound(adj[e.i].begin(), adj[e.i].end(), e.j), e.j);
        adj[e.j].insert(std::upper_bound(adj[e.j].begin(), adj[e.j].end(), e.i), e.i);
    }

    const double inf = std::numeric_limits<double>::infinity();
    for (int i = 0; i < m; ++i)
        if (uf.find(i) == i) dim0.push_back({0.0, inf, 0});
    for (const LiveCocycle& lc : red.lives)
        if (lc.alive) {
            red.dim1_pairs.push_back({lc.birth, inf, 1});
            red.dim1_reps.push_back(red.materialize(lc, inf));
        }

    std::sort(dim0.begin(), dim0.end(),
              [](const PersistencePair& a, const PersistencePair& b) { return a.death < b.death; });
    std::vector<int> order(red.dim1_pairs.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
        const auto& pa = red.dim1_pairs[a];
        const auto& pb = red.dim1_pairs[b];
        if (pa.birth != pb.birth) return pa.birth < pb.birth;
        return pa.death < pb.death;
    });

    RipsResult out;
    out.diagram.field_char = p;
    out.diagram.diameter = diam;
    out.diagram.max_scale = max_scale;
    out.diagram.pairs = std::move(dim0);
    for (int idx : order) {
        out.diagram.pairs.push_back(red.dim1_pairs[idx]);
        out.cocycles.push_back(std::move(red.dim1_reps[idx]));
    }
    return out;
}

std::vector<Cocycle> significant_cocycles(const PersistenceDiagram& diag,
                                          const std::vector<Cocycle>& cocycles,
                                          const ThresholdRule& rule) {
    std::vector<const PersistencePair*> dim1;
    for (const auto& pr : diag.pairs)
        if (pr.dimension == 1) dim1.push_back(&pr);
    if (dim1.size() != cocycles.size())
        throw InputError("significant_cocycles: diagram and cocycle list disagree");
    if (dim1.empty()) return {};

    double best = 0.0;
    for (const auto* pr : dim1) best = std::max(best, pr->death - pr->birth);

    std::vector<int> keep;
    for (int i = 0; i < static_cast<int>(dim1.size()); ++i) {
        double pers = dim1[i]->death - dim1[i]->birth;
        if (pers >= rule.rho * best && pers >= rule.alpha * diag.diameter) keep.push_back(i);
    }
    std::stable_sort(keep.begin(), keep.end(), [&](int a, int b) {
        double pa = dim1[a]->death - dim1[a]->birth;
        double pb = dim1[b]->death - dim1[b]->birth;
        if (pa != pb) return pa > pb;
        return dim1[a]->birth < dim1[b]->birth;
    });

    std::vector<Cocycle> out;
    out.reserve(keep.size());
    for (int i : keep) out.push_back(cocycles[i]);
    return out;
}

CircularCoordinate circular_coordinate(const PointCloud& cloud, const Cocycle& cocycle,
                                       int n_total, const PointCloud* full_cloud) {
    const int m = cloud.size();
    if (m < 1) throw InputError("circular_coordinate: empty cloud");
    if (n_total < 1) throw InputError("circular_coordinate: n_total must be positive");

    // 1-skeleton at the smoothing scale
    struct SkelEdge {
        int i, j;
        double lift;
    };
    std::vector<SkelEdge> skel;
    for (int i = 0; i < m; ++i)
        for (int j = i + 1; j < m; ++j) {
            double d = (cloud.points.row(i) - cloud.points.row(j)).norm();
            if (d <= cocycle.scale_used) {
                auto it = cocycle.edge_values.find({i, j});
                skel.push_back({i, j, it == cocycle.edge_values.end() ? 0.0 : double(it->second)});
            }
        }

    UnionFind uf(m);
    Eigen::VectorXd deg = Eigen::VectorXd::Zero(m);
    Eigen::VectorXd b = Eigen::VectorXd::Zero(m);
    for (const auto& e : skel) {
        uf.unite(e.i, e.j);
        deg(e.i) += 1.0;
        deg(e.j) += 1.0;
        b(e.j) += e.lift;
        b(e.i) -= e.lift;
    }
    int n_comp = 0;
    for (int i = 0; i < m; ++i)
        if (uf.find(i) == i) ++n_comp;

    // graph-Laplacian normal equations solved by conjugate gradients
    auto matvec = [&](const Eigen::VectorXd& x) {
        Eigen::VectorXd y = deg.cwiseProduct(x);
        for (const auto& e : skel) {
            y(e.i) -= x(e.j);
            y(e.j) -= x(e.i);
        }
        return y;
    };

    Eigen::VectorXd phi = Eigen::VectorXd::Zero(m);
    Eigen::VectorXd r = b;
    double tol = 1e-10 * std::max(1.0, b.norm());
    if (r.norm() > tol) {
        Eigen::VectorXd pdir = r;
        double rs = r.squaredNorm();
        const int max_iter = 10 * m;
        for (int it = 0; it < max_iter; ++it) {
            Eigen::VectorXd Ap = matvec(pdir);
            double denom = pdir.dot(Ap);
            if (denom <= 0.0) break;
            double alpha = rs / denom;
            phi += alpha * pdir;
            r -= alpha * Ap;
            double rs_new = r.squaredNorm();
            if (std::sqrt(rs_new) <= tol) break;
            pdir = r + (rs_new / rs) * pdir;
            rs = rs_new;
        }
    }

    auto wrap01 = [](double v) {
        double w = v - std::floor(v);
        return w >= 1.0 ? 0.0 : w;
    };

    CircularCoordinate out;
    out.persistence = cocycle.persistence();
    out.disconnected_warning = n_comp > 1;
    out.values.resize(n_total);

    std::vector<char> covered(n_total, 0);
    auto place = [&](int t, double v) {
        if (t < 0 || t >= n_total) throw InputError("circular_coordinate: time index out of range");
        out.values(t) = v;
        covered[t] = 1;
    };

    if (full_cloud) {
        for (int q = 0; q < full_cloud->size(); ++q) {
            int nearest = 0;
            double bestd = (full_cloud->points.row(q) - cloud.points.row(0)).norm();
            for (int k = 1; k < m; ++k) {
                double d = (full_cloud->points.row(q) - cloud.points.row(k)).norm();
                if (d < bestd) {
                    bestd = d;
                    nearest = k;
                }
            }
            place(full_cloud->source_time_index[q], wrap01(phi(nearest)));
        }
    } else {
        for (int k = 0; k < m; ++k) place(cloud.source_time_index[k], wrap01(phi(k)));
    }

    int first = 0;
    while (first < n_total && !covered[first]) ++first;
    if (first == n_total) throw InputError("circular_coordinate: no time index covered");
    for (int t = 0; t < first; ++t) out.values(t) = out.values(first);
    for (int t = first + 1; t < n_total; ++t)
        if (!covered[t]) out.values(t) = out.values(t - 1);
    return out;
}

MixedCoordinates extract_mixed_coordinates(const SeparatedComponents& sep,
                                           const TopologyConfig& cfg) {
    MixedCoordinates out;
    out.tau_values = sep.tau_values;
    for (const auto& lin : sep.linear) out.linear_parts.push_back(lin.scores);

    for (int idx = 0; idx < static_cast<int>(sep.rest.size()); ++idx) {
        const ComponentRef& comp = sep.rest[idx];
        const int renumbered = sep.n_ell + idx;

        ComponentProvenance prov;
        prov.component = renumbered;
        prov.tau = sep.tau_values[renumbered];

        const int n_total = static_cast<int>(comp.scores.size());
        PointCloud cloud = delay_embed(comp.scores, cfg.delay_r, cfg.delay_eps);

        PointCloud full;
        bool landmarked = false;
        if (cloud.size() > cfg.landmark_cap) {
            std::uint64_t lm_seed = SeedStream(cfg.seed, "landmarks", renumbered).next_u64();
            full = cloud;
            cloud = maxmin_landmarks(cloud, cfg.landmark_cap, lm_seed);
            landmarked = true;
        }

        double max_scale = cfg.max_scale > 0.0 ? cfg.max_scale : enclosing_radius(cloud);
        if (!(max_scale > 0.0)) {
            // all embedding points coincide; nothing periodic to find
            ++out.n_noise;
            out.provenance.push_back(prov);
            PersistenceDiagram empty;
            empty.field_char = cfg.field_prime;
            out.diagrams.push_back(empty);
            continue;
        }

        RipsResult res = rips_persistence(cloud, max_scale, cfg.field_prime, cfg.point_cap);
        for (const auto& pr : res.diagram.pairs)
            if (pr.dimension == 1)
                prov.best_persistence = std::max(prov.best_persistence, pr.death - pr.birth);

        std::vector<Cocycle> sig = significant_cocycles(res.diagram, res.cocycles, cfg.rule);
        for (const auto& co : sig) prov.significant_persistences.push_back(co.persistence());

        if (!sig.empty()) {
            CircularCoordinate cc =
                circular_coordinate(cloud, sig[0], n_total, landmarked ? &full : nullptr);
            cc.source_component = renumbered;
            prov.periodic = true;
            prov.disconnected_warning = cc.disconnected_warning;
            out.circular_parts.push_back(std::move(cc));
        } else {
            ++out.n_noise;
        }
        out.provenance.push_back(std::move(prov));
        out.diagrams.push_back(std::move(res.diagram));
    }
    return out;
}

} // namespace topomix
