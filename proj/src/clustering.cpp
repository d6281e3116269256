#include "icai/clustering.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <iostream>
#include <limits>
#include <set>

#include "icai/error.hpp"
#include "icai/rng.hpp"

namespace icai {

double cosine_similarity(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
    if (a.size() != b.size())
        throw ValidationError("cosine_similarity: dimension mismatch");
    double na = a.norm(), nb = b.norm();
    if (na == 0.0 || nb == 0.0)
        throw ValidationError("cosine_similarity: zero vector");
    return a.dot(b) / (na * nb);
}

double cosine_similarity(const EmbeddingVector& a, const EmbeddingVector& b) {
    return cosine_similarity(a.values, b.values);
}

namespace {

struct LloydResult {
    std::vector<int> labels;
    Eigen::MatrixXd centroids;  // k x d
    double inertia = 0.0;
    int iterations = 0;
    std::vector<double> trace;
};

double sq_dist(const Eigen::MatrixXd& points, Eigen::Index i, const Eigen::MatrixXd& c,
               int j) {
    return (points.row(i) - c.row(j)).squaredNorm();
}

Eigen::MatrixXd kmeanspp_init(const Eigen::MatrixXd& points, int k, Rng& rng) {
    const Eigen::Index n = points.rows();
    Eigen::MatrixXd centroids(k, points.cols());
    centroids.row(0) = points.row(static_cast<Eigen::Index>(rng.uniform_index(
        static_cast<std::size_t>(n))));
    Eigen::VectorXd d2(n);
    for (Eigen::Index i = 0; i < n; ++i)
        d2(i) = (points.row(i) - centroids.row(0)).squaredNorm();
    for (int c = 1; c < k; ++c) {
        double total = d2.sum();
        Eigen::Index pick = 0;
        if (total > 0.0) {
            double target = rng.next_unit() * total;
            double acc = 0.0;
            pick = n - 1;
            for (Eigen::Index i = 0; i < n; ++i) {
                acc += d2(i);
                if (target < acc) {
                    pick = i;
                    break;
                }
            }
        } else {
            pick = static_cast<Eigen::Index>(
                rng.uniform_index(static_cast<std::size_t>(n)));
        }
        centroids.row(c) = points.row(pick);
        for (Eigen::Index i = 0; i < n; ++i)
            d2(i) = std::min(d2(i), (points.row(i) - centroids.row(c)).squaredNorm());
    }
    return centroids;
}

// Nearest-centroid assignment, ties to the lowest index. Empty clusters are
// repaired by moving their centroid onto the point farthest from its own
// centroid, then relabeling that point.
void assign_with_repair(const Eigen::MatrixXd& points, Eigen::MatrixXd& centroids,
                        std::vector<int>& labels) {
    const Eigen::Index n = points.rows();
    const int k = static_cast<int>(centroids.rows());
    labels.assign(static_cast<std::size_t>(n), 0);
    for (Eigen::Index i = 0; i < n; ++i) {
        double best = std::numeric_limits<double>::infinity();
        int arg = 0;
        for (int j = 0; j < k; ++j) {
            double d = sq_dist(points, i, centroids, j);
            if (d < best) {
                best = d;
                arg = j;
            }
        }
        labels[static_cast<std::size_t>(i)] = arg;
    }
    for (;;) {
        std::vector<int> counts(static_cast<std::size_t>(k), 0);
        for (int l : labels) ++counts[static_cast<std::size_t>(l)];
        int empty = -1;
        for (int j = 0; j < k; ++j)
            if (counts[static_cast<std::size_t>(j)] == 0) {
                empty = j;
                break;
            }
        if (empty < 0) break;
        double worst = -1.0;
        Eigen::Index worst_i = 0;
        for (Eigen::Index i = 0; i < n; ++i) {
            int l = labels[static_cast<std::size_t>(i)];
            if (counts[static_cast<std::size_t>(l)] <= 1) continue;
            double d = sq_dist(points, i, centroids, l);
            if (d > worst) {
                worst = d;
                worst_i = i;
            }
        }
        centroids.row(empty) = points.row(worst_i);
        labels[static_cast<std::size_t>(worst_i)] = empty;
    }
}

double compute_inertia(const Eigen::MatrixXd& points, const Eigen::MatrixXd& centroids,
                       const std::vector<int>& labels) {
    double s = 0.0;
    for (Eigen::Index i = 0; i < points.rows(); ++i)
        s += sq_dist(points, i, centroids, labels[static_cast<std::size_t>(i)]);
    return s;
}

LloydResult lloyd(const Eigen::MatrixXd& points, int k, std::uint64_t seed,
                  const KMeansOptions& opt) {
    Rng rng(seed);
    LloydResult r;
    r.centroids = kmeanspp_init(points, k, rng);
    std::vector<int> prev_labels;
    for (int it = 0; it < opt.max_iter; ++it) {
        assign_with_repair(points, r.centroids, r.labels);
        Eigen::MatrixXd updated = Eigen::MatrixXd::Zero(k, points.cols());
        std::vector<int> counts(static_cast<std::size_t>(k), 0);
        for (Eigen::Index i = 0; i < points.rows(); ++i) {
            int l = r.labels[static_cast<std::size_t>(i)];
            updated.row(l) += points.row(i);
            ++counts[static_cast<std::size_t>(l)];
        }
        for (int j = 0; j < k; ++j) updated.row(j) /= counts[static_cast<std::size_t>(j)];
        double shift = (updated - r.centroids).rowwise().norm().maxCoeff();
        r.centroids = updated;
        r.inertia = compute_inertia(points, r.centroids, r.labels);
        r.trace.push_back(r.inertia);
        r.iterations = it + 1;
        // Run until the labeling itself is stable; the shift tolerance alone
        // can stop one step short of the Lloyd fixed point.
        if (r.labels == prev_labels || shift < opt.tol) break;
        prev_labels = r.labels;
    }
    // Final assignment so labels are a fixed point of the final centroids.
    assign_with_repair(points, r.centroids, r.labels);
    r.inertia = compute_inertia(points, r.centroids, r.labels);
    if (r.trace.empty() || r.inertia < r.trace.back()) r.trace.push_back(r.inertia);
    return r;
}

}  // namespace

ClusterAssignment kmeans(const std::vector<EmbeddingVector>& items,
                         const std::vector<std::string>& ids, int k, std::uint64_t seed,
                         const KMeansOptions& options) {
    if (items.empty()) throw ValidationError("kmeans: no input vectors");
    if (items.size() != ids.size())
        throw ValidationError("kmeans: ids and vectors differ in length");
    if (k < 1 || k > static_cast<int>(items.size()))
        throw ValidationError("kmeans: k must be in [1, n], got k=" + std::to_string(k) +
                              " for n=" + std::to_string(items.size()));
    const Eigen::Index d = items.front().values.size();
    Eigen::MatrixXd points(static_cast<Eigen::Index>(items.size()), d);
    for (std::size_t i = 0; i < items.size(); ++i) {
        if (items[i].values.size() != d)
            throw ValidationError("kmeans: inconsistent vector dimensions");
        if (!items[i].values.allFinite())
            throw ValidationError("kmeans: non-finite vector for item " + ids[i]);
        points.row(static_cast<Eigen::Index>(i)) = items[i].values;
    }

    LloydResult best;
    bool have = false;
    for (int r = 0; r < std::max(1, options.restarts); ++r) {
        auto res = lloyd(points, k, derive_seed(seed, "restart-" + std::to_string(r)),
                         options);
        if (!have || res.inertia < best.inertia) {
            best = std::move(res);
            have = true;
        }
    }

    ClusterAssignment out;
    out.k = k;
    out.seed = seed;
    out.inertia = best.inertia;
    out.iterations = best.iterations;
    out.inertia_trace = best.trace;
    out.centroids.reserve(static_cast<std::size_t>(k));
    for (int j = 0; j < k; ++j) out.centroids.push_back(best.centroids.row(j));
    for (std::size_t i = 0; i < ids.size(); ++i) out.labels[ids[i]] = best.labels[i];
    return out;
}

std::string subsample_random(const std::vector<std::string>& cluster_members,
                             std::uint64_t seed) {
    if (cluster_members.empty())
        throw ValidationError("subsample_random: empty cluster");
    Rng rng(seed);
    return cluster_members[rng.uniform_index(cluster_members.size())];
}

std::string subsample_centroid(const std::vector<std::string>& cluster_members,
                               const std::map<std::string, Eigen::VectorXd>& embeddings,
                               const Eigen::VectorXd& centroid) {
    if (cluster_members.empty())
        throw ValidationError("subsample_centroid: empty cluster");
    std::string best_id;
    double best_sim = -std::numeric_limits<double>::infinity();
    for (const auto& id : cluster_members) {
        auto it = embeddings.find(id);
        if (it == embeddings.end())
            throw ValidationError("subsample_centroid: missing embedding for " + id);
        if (it->second.norm() == 0.0) {
            std::cerr << "warning: skipping zero-vector member " << id << "\n";
            continue;
        }
        double sim = cosine_similarity(it->second, centroid);
        if (sim > best_sim || (sim == best_sim && id < best_id)) {
            best_sim = sim;
            best_id = id;
        }
    }
    if (best_id.empty())
        throw ValidationError("subsample_centroid: all members are zero vectors");
    return best_id;
}

std::vector<DiffNode> build_difference_map(const std::vector<PreferencePair>& pairs,
                                           EmbeddingProvider& embedder, Dimension map_id) {
    if (pairs.empty()) throw ValidationError("build_difference_map: no pairs");
    std::vector<std::string> chosen, rejected;
    chosen.reserve(pairs.size());
    rejected.reserve(pairs.size());
    for (const auto& p : pairs) {
        chosen.push_back(p.chosen);
        rejected.push_back(p.rejected);
    }
    std::vector<EmbeddingVector> ec, er;
    try {
        ec = embedder.embed(chosen);
        er = embedder.embed(rejected);
    } catch (const Error& e) {
        throw ProviderError(std::string("difference map ") + to_string(map_id) +
                            " embedding failed: " + e.what());
    }
    std::vector<DiffNode> nodes;
    nodes.reserve(pairs.size());
    for (std::size_t i = 0; i < pairs.size(); ++i) {
        DiffNode n;
        n.pair_id = pairs[i].id;
        n.map_id = map_id;
        n.vector = EmbeddingVector{embedder.model_id(), ec[i].values - er[i].values};
        nodes.push_back(std::move(n));
    }
    return nodes;
}

std::vector<ScoredCluster> score_clusters(const ClusterAssignment& assignment,
                                          const std::vector<DiffNode>& nodes) {
    constexpr double kEps = 1e-9;
    if (assignment.k < 2)
        throw ValidationError("score_clusters: inter-cluster distance needs k >= 2");
    if (nodes.empty()) throw ValidationError("score_clusters: no nodes");
    const Dimension map_id = nodes.front().map_id;
    std::vector<std::vector<const DiffNode*>> members(
        static_cast<std::size_t>(assignment.k));
    for (const auto& n : nodes) {
        auto it = assignment.labels.find(n.pair_id);
        if (it == assignment.labels.end())
            throw ValidationError("score_clusters: assignment missing node " + n.pair_id);
        members[static_cast<std::size_t>(it->second)].push_back(&n);
    }
    std::vector<ScoredCluster> out;
    std::vector<double> raw(static_cast<std::size_t>(assignment.k));
    for (int c = 0; c < assignment.k; ++c) {
        const auto& mem = members[static_cast<std::size_t>(c)];
        if (mem.empty())
            throw ValidationError("score_clusters: empty cluster " + std::to_string(c));
        ScoredCluster sc;
        sc.map_id = map_id;
        sc.cluster_index = c;
        double intra = 0.0;
        for (const DiffNode* n : mem) {
            sc.member_pair_ids.push_back(n->pair_id);
            intra += (n->vector.values -
                      assignment.centroids[static_cast<std::size_t>(c)]).norm();
        }
        sc.intra = intra / static_cast<double>(mem.size());
        double inter = 0.0;
        for (int o = 0; o < assignment.k; ++o) {
            if (o == c) continue;
            inter += (assignment.centroids[static_cast<std::size_t>(c)] -
                      assignment.centroids[static_cast<std::size_t>(o)]).norm();
        }
        sc.inter = inter / static_cast<double>(assignment.k - 1);
        raw[static_cast<std::size_t>(c)] = sc.inter / (sc.intra + kEps);
        std::sort(sc.member_pair_ids.begin(), sc.member_pair_ids.end());
        out.push_back(std::move(sc));
    }
    double mean = 0.0;
    for (double r : raw) mean += r;
    mean /= static_cast<double>(raw.size());
    double var = 0.0;
    for (double r : raw) var += (r - mean) * (r - mean);
    double sd = std::sqrt(var / static_cast<double>(raw.size()));
    for (std::size_t c = 0; c < out.size(); ++c)
        out[c].combined_score = sd > 0.0 ? (raw[c] - mean) / sd : 0.0;
    std::sort(out.begin(), out.end(), [](const ScoredCluster& a, const ScoredCluster& b) {
        if (a.combined_score != b.combined_score) return a.combined_score > b.combined_score;
        return a.cluster_index < b.cluster_index;
    });
    return out;
}

std::vector<ScoredCluster> select_top_clusters(
    const std::vector<std::vector<ScoredCluster>>& scored_per_map, int k_top) {
    if (k_top < 1) throw ValidationError("select_top_clusters: k_top must be >= 1");
    std::vector<const ScoredCluster*> all;
    for (const auto& map_list : scored_per_map)
        for (const auto& sc : map_list) all.push_back(&sc);
    std::sort(all.begin(), all.end(), [](const ScoredCluster* a, const ScoredCluster* b) {
        if (a->combined_score != b->combined_score)
            return a->combined_score > b->combined_score;
        if (a->map_id != b->map_id) return a->map_id < b->map_id;
        return a->cluster_index < b->cluster_index;
    });
    std::vector<ScoredCluster> picked;
    std::set<std::string> covered;
    for (const ScoredCluster* sc : all) {
        if (static_cast<int>(picked.size()) >= k_top) break;
        bool overlap = false;
        for (const auto& id : sc->member_pair_ids)
            if (covered.count(id)) {
                overlap = true;
                break;
            }
        if (overlap) continue;
        for (const auto& id : sc->member_pair_ids) covered.insert(id);
        picked.push_back(*sc);
    }
    if (static_cast<int>(picked.size()) < k_top)
        std::cerr << "note: select_top_clusters returned " << picked.size() << " of "
                  << k_top << " requested clusters\n";
    return picked;
}

namespace {

double triplet_compactness(const Eigen::VectorXd& a, const Eigen::VectorXd& b,
                           const Eigen::VectorXd& c) {
    return (a - b).norm() + (a - c).norm() + (b - c).norm();
}

struct TripletKey {
    double compactness;
    std::array<std::string, 3> ids;  // sorted
    bool operator<(const TripletKey& o) const {
        if (compactness != o.compactness) return compactness < o.compactness;
        return ids < o.ids;
    }
    bool operator==(const TripletKey& o) const { return ids == o.ids; }
};

}  // namespace

std::vector<Triplet> extract_triplets(const ScoredCluster& cluster,
                                      const std::map<std::string, Eigen::VectorXd>& nodes,
                                      int n_triplets, std::uint64_t seed) {
    const auto& ids = cluster.member_pair_ids;
    const std::size_t m = ids.size();
    if (m < 3) throw ValidationError("extract_triplets: cluster has fewer than 3 members");
    std::vector<const Eigen::VectorXd*> vecs(m);
    for (std::size_t i = 0; i < m; ++i) {
        auto it = nodes.find(ids[i]);
        if (it == nodes.end())
            throw ValidationError("extract_triplets: missing node vector for " + ids[i]);
        vecs[i] = &it->second;
    }

    auto make_key = [&](std::size_t a, std::size_t b, std::size_t c) {
        TripletKey k;
        k.compactness = triplet_compactness(*vecs[a], *vecs[b], *vecs[c]);
        k.ids = {ids[a], ids[b], ids[c]};
        std::sort(k.ids.begin(), k.ids.end());
        return k;
    };

    std::vector<TripletKey> found;
    const std::size_t combos = m * (m - 1) * (m - 2) / 6;
    if (combos <= 20000) {
        found.reserve(combos);
        for (std::size_t a = 0; a < m; ++a)
            for (std::size_t b = a + 1; b < m; ++b)
                for (std::size_t c = b + 1; c < m; ++c) found.push_back(make_key(a, b, c));
    } else {
        // Swap-improvement local search from seeded random starts.
        Rng rng(derive_seed(seed, "triplet-search"));
        std::set<std::array<std::string, 3>> seen;
        for (int restart = 0; restart < 200; ++restart) {
            auto start = sample_without_replacement(rng, m, 3);
            std::array<std::size_t, 3> cur{start[0], start[1], start[2]};
            double cur_cost =
                triplet_compactness(*vecs[cur[0]], *vecs[cur[1]], *vecs[cur[2]]);
            bool improved = true;
            while (improved) {
                improved = false;
                for (int slot = 0; slot < 3 && !improved; ++slot) {
                    for (std::size_t cand = 0; cand < m; ++cand) {
                        if (cand == cur[0] || cand == cur[1] || cand == cur[2]) continue;
                        std::array<std::size_t, 3> next = cur;
                        next[static_cast<std::size_t>(slot)] = cand;
                        double cost = triplet_compactness(*vecs[next[0]], *vecs[next[1]],
                                                          *vecs[next[2]]);
                        if (cost < cur_cost) {
                            cur = next;
                            cur_cost = cost;
                            improved = true;
                            break;
                        }
                    }
                }
            }
            auto key = make_key(cur[0], cur[1], cur[2]);
            if (seen.insert(key.ids).second) found.push_back(key);
        }
    }
    std::sort(found.begin(), found.end());
    std::vector<Triplet> out;
    for (const auto& k : found) {
        if (static_cast<int>(out.size()) >= n_triplets) break;
        Triplet t;
        t.pair_ids = k.ids;
        t.map_id = cluster.map_id;
        t.cluster_index = cluster.cluster_index;
        t.compactness = k.compactness;
        out.push_back(std::move(t));
    }
    return out;
}

double triplet_purity(const Triplet& triplet,
                      const std::map<std::string, std::string>& labels) {
    std::map<std::string, int> counts;
    for (const auto& id : triplet.pair_ids) {
        auto it = labels.find(id);
        if (it == labels.end())
            throw ValidationError("triplet_purity: missing planted rule for pair " + id);
        ++counts[it->second];
    }
    int best = 0;
    for (const auto& [_, c] : counts) best = std::max(best, c);
    return static_cast<double>(best) / 3.0;
}

}  // namespace icai
