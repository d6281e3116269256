#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "icai/types.hpp"

namespace icai {

class CompletionProvider;

enum class PairSchema { plain, rated, synthetic };

PairSchema pair_schema_from_string(const std::string& s);

// Reads one JSON record per line, validating against the schema:
//   plain     — scores optional but paired
//   rated     — both scores required
//   synthetic — planted_rule_id required
// Throws ParseError with the offending line number, ValidationError on
// duplicate ids or score problems.
std::vector<PreferencePair> load_pairs(const std::string& path, PairSchema schema);

void save_pairs(const std::string& path, const std::vector<PreferencePair>& pairs);

std::vector<GroundTruthPrinciple> load_principles(const std::string& path);
void save_principles(const std::string& path, const std::vector<GroundTruthPrinciple>& ps);

// Synthetic setting: keep each source pair's rejected text, replace chosen
// with an LLM rewrite under one assigned principle, and record that principle
// as the planted rule. Principles are represented equally within each split;
// counts that do not divide evenly are rejected.
DatasetSplit build_synthetic(const std::vector<PreferencePair>& source_pairs,
                             const std::vector<GroundTruthPrinciple>& principles,
                             CompletionProvider& llm, int n_train, int n_test,
                             std::uint64_t seed, int max_inflight = 4,
                             const std::string& progress_dir = "");

// Semi-synthetic setting: keep only pairs whose rating delta
// (chosen_score - rejected_score) is at least min_delta, then sample without
// replacement with probability weights proportional to the delta.
DatasetSplit filter_and_sample_semisynthetic(const std::vector<PreferencePair>& rated,
                                             double min_delta, int n_train, int n_test,
                                             std::uint64_t seed);

// Original setting: uniform seeded sample without replacement.
DatasetSplit split_original(const std::vector<PreferencePair>& pairs, int n_train,
                            int n_test, std::uint64_t seed);

// Writes <name>.train.jsonl, <name>.test.jsonl and <name>.manifest.json
// (seed, counts, source hash) under dir.
void save_split(const DatasetSplit& split, const std::string& dir, const std::string& name,
                std::uint64_t seed, const std::string& source_hash);

}  // namespace icai
