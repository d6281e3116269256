#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "icai/providers.hpp"
#include "icai/selection.hpp"
#include "icai/types.hpp"

namespace icai {

enum class Variant { baseline, improved1, improved2, scored };

std::string to_string(Variant v);
Variant variant_from_string(const std::string& s);

struct RunConfig {
    Variant variant = Variant::baseline;

    std::string train_path;
    std::string test_path;
    std::string dataset_id;

    std::string providers_path;        // provider registry (JSON array)
    std::string generation_provider;
    std::string judge_provider;
    std::string embedding_provider;    // principle-clustering embeddings
    // Difference-map embeddings for improved2, keyed content/style/sentiment.
    std::map<std::string, std::string> diff_embedding_providers;

    std::string prompt_dir = "prompts";
    std::string run_dir = "runs";
    std::string run_id;                // derived from the config hash when empty

    int n_per_pair = 3;
    int n_per_triplet = 5;
    int principle_k = 0;               // 0 = filter.max_size * 3
    int diff_k = 8;
    int k_top = 5;
    int n_triplets_per_cluster = 1;

    FilterConfig filter;
    std::uint64_t seed = 0;
    CacheMode cache_mode = CacheMode::off;
    std::string cassette_path;
    int max_inflight = 4;

    // Evaluation-only inputs.
    std::string constitution_path;
    std::string ground_truth_path;
    std::string instructions_path;
    std::string base_provider;
    std::string con_provider;

    static RunConfig from_json_file(const std::string& path,
                                    const std::vector<std::string>& overrides = {});
    // Hash over the semantically relevant fields; cache mode, paths of the
    // cassette/run tree and parallelism do not affect it.
    std::string config_hash() const;
    std::string effective_run_id() const;
    void validate_for_extract() const;
};

// Instantiates providers named in the registry file, wrapping them in the
// cassette when caching is on. kind "mock" entries name a fixture_path.
class ProviderFactory {
public:
    ProviderFactory(const RunConfig& cfg);

    std::shared_ptr<CompletionProvider> completion(const std::string& provider_id);
    std::shared_ptr<EmbeddingProvider> embedding(const std::string& provider_id);
    std::shared_ptr<Cassette> cassette() const { return cassette_; }

private:
    const RunConfig cfg_;
    std::shared_ptr<Cassette> cassette_;
};

// Artifact (de)serialization.
void save_candidates(const std::string& path, const std::vector<PrincipleCandidate>& cs);
std::vector<PrincipleCandidate> load_candidates(const std::string& path);
void save_votes(const std::string& path, const std::vector<VoteRecord>& votes);
std::vector<VoteRecord> load_votes(const std::string& path);
void save_constitution(const std::string& path, const Constitution& c,
                       const std::string& config_hash);
Constitution load_constitution(const std::string& path);

// Five-step extraction in the requested variant. Writes manifest.json,
// candidates.jsonl, clusters.json, votes.jsonl and constitution.json under
// <run_dir>/<run_id>/ and returns the constitution.
Constitution run_pipeline(const RunConfig& cfg);

// Evaluation harness entry points; each writes its report under the run dir
// and returns the path written.
std::string run_eval_regen(const RunConfig& cfg);
std::string run_eval_similarity(const RunConfig& cfg);
std::string run_eval_winrate(const RunConfig& cfg);

}  // namespace icai
