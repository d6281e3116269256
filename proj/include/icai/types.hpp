#pragma once

#include <Eigen/Dense>
#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace icai {

// One instruction with a preferred and a dispreferred response. Scores, when
// present, are annotator ratings in [1, 5]. planted_rule_id carries the
// ground-truth principle for synthetic data.
struct PreferencePair {
    std::string id;
    std::string instruction;
    std::string chosen;
    std::string rejected;
    std::optional<double> chosen_score;
    std::optional<double> rejected_score;
    std::optional<std::string> planted_rule_id;
};

// A known principle with the rewrite instruction used to synthesize data.
struct GroundTruthPrinciple {
    std::string id;
    std::string statement;     // "choose the response that ..." form
    std::string rewrite_prompt;
};

struct DatasetSplit {
    std::vector<PreferencePair> train;
    std::vector<PreferencePair> test;
};

enum class GenerationMode { baseline, generalizing, triplet, scored };
enum class Dimension { content, style, sentiment };

std::string to_string(GenerationMode m);
std::string to_string(Dimension d);
GenerationMode generation_mode_from_string(const std::string& s);
Dimension dimension_from_string(const std::string& s);

// A candidate principle with provenance back to the pairs it came from.
struct PrincipleCandidate {
    std::string id;
    std::string text;
    std::vector<std::string> source_pair_ids;
    GenerationMode mode = GenerationMode::baseline;
    std::optional<Dimension> dimension;
};

struct EmbeddingVector {
    std::string model_id;
    Eigen::VectorXd values;
};

enum class Vote { favor, against, not_applicable };

std::string to_string(Vote v);
Vote vote_from_string(const std::string& s);

struct VoteRecord {
    std::string principle_id;
    std::string pair_id;
    Vote vote = Vote::not_applicable;
};

struct PrincipleStats {
    std::string principle_id;
    int n_favor = 0;
    int n_against = 0;
    int n_na = 0;
    double relevance = 0.0;  // (favor+against)/total
    double agreement = 0.0;  // favor/(favor+against), 0 when undefined
};

struct Constitution {
    std::vector<std::string> principles;
    std::string run_id;
    std::string dataset_id;
    std::string variant;
    std::vector<PrincipleStats> stats;  // parallel to principles
};

enum class PresentationOrder { forward, flipped };
enum class JudgeChoice { first, second, none };

struct JudgeDecision {
    std::string pair_id;
    PresentationOrder order = PresentationOrder::forward;
    JudgeChoice choice = JudgeChoice::none;
    double score = 0.5;  // 1 iff the truly-chosen response was picked, 0.5 on abstention
};

struct SimilarityMatrix {
    std::vector<std::string> row_ids;  // candidate principles
    std::vector<std::string> col_ids;  // ground truth principles
    Eigen::MatrixXd cells;             // scores in [1, 10]
};

struct WinRateReport {
    int n_total = 0;
    int n_excluded = 0;
    double win_rate = 0.0;
    double std_error = 0.0;
    double token_diff_median = 0.0;
};

// One per-pair difference vector embed(chosen) - embed(rejected).
struct DiffNode {
    std::string pair_id;
    EmbeddingVector vector;
    Dimension map_id = Dimension::content;
};

struct ClusterAssignment {
    int k = 0;
    std::map<std::string, int> labels;   // item id -> cluster index
    std::vector<Eigen::VectorXd> centroids;
    double inertia = 0.0;
    std::uint64_t seed = 0;
    int iterations = 0;
    std::vector<double> inertia_trace;  // one entry per Lloyd iteration of the winning restart
};

struct ScoredCluster {
    Dimension map_id = Dimension::content;
    int cluster_index = 0;
    std::vector<std::string> member_pair_ids;
    double intra = 0.0;
    double inter = 0.0;
    double combined_score = 0.0;  // z-normalized inter/(intra+eps) within its map
};

struct Triplet {
    std::array<std::string, 3> pair_ids;
    Dimension map_id = Dimension::content;
    int cluster_index = 0;
    double compactness = 0.0;  // sum of the 3 pairwise distances
    std::optional<double> purity;
};

}  // namespace icai
