#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "icai/providers.hpp"
#include "icai/types.hpp"

namespace icai {

// dot(a,b) / (|a||b|). Throws ValidationError on dimension mismatch or a
// zero vector.
double cosine_similarity(const Eigen::VectorXd& a, const Eigen::VectorXd& b);
double cosine_similarity(const EmbeddingVector& a, const EmbeddingVector& b);

struct KMeansOptions {
    int max_iter = 100;
    double tol = 1e-6;
    int restarts = 4;  // k-means++ restarts, lowest inertia wins, ties by restart index
};

// Lloyd's algorithm with k-means++ seeding over Euclidean distance. An empty
// cluster is repaired by teleporting its centroid onto the point currently
// farthest from its assigned centroid, which keeps the inertia trace
// non-increasing. Deterministic given (items, ids, k, seed, options).
ClusterAssignment kmeans(const std::vector<EmbeddingVector>& items,
                         const std::vector<std::string>& ids, int k, std::uint64_t seed,
                         const KMeansOptions& options = {});

std::string subsample_random(const std::vector<std::string>& cluster_members,
                             std::uint64_t seed);

// Member with the highest cosine similarity to the centroid; ties broken by
// lexicographically smallest id. Zero-vector members are skipped with a
// warning.
std::string subsample_centroid(const std::vector<std::string>& cluster_members,
                               const std::map<std::string, Eigen::VectorXd>& embeddings,
                               const Eigen::VectorXd& centroid);

// One node per pair: embed(chosen) - embed(rejected) under the given model.
std::vector<DiffNode> build_difference_map(const std::vector<PreferencePair>& pairs,
                                           EmbeddingProvider& embedder, Dimension map_id);

// intra = mean member distance to own centroid, inter = mean centroid
// distance to the other centroids, raw = inter/(intra+1e-9); combined_score
// is the z-score of raw within this map so scores are comparable across
// embedding models. Result sorted by combined_score descending.
std::vector<ScoredCluster> score_clusters(const ClusterAssignment& assignment,
                                          const std::vector<DiffNode>& nodes);

// Greedy pick by combined_score across all maps, skipping any cluster that
// shares a pair with an already accepted one. May return fewer than k_top.
std::vector<ScoredCluster> select_top_clusters(
    const std::vector<std::vector<ScoredCluster>>& scored_per_map, int k_top);

// The n most compact triplets (compactness = sum of the three pairwise
// Euclidean distances). Exhaustive when C(m,3) <= 20000, otherwise seeded
// swap-improvement local search; ties broken by sorted id tuple.
std::vector<Triplet> extract_triplets(const ScoredCluster& cluster,
                                      const std::map<std::string, Eigen::VectorXd>& nodes,
                                      int n_triplets, std::uint64_t seed = 0);

// Fraction of the three members sharing the most common planted rule.
double triplet_purity(const Triplet& triplet,
                      const std::map<std::string, std::string>& labels);

}  // namespace icai
