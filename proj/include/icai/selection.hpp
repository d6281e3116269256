#pragma once

#include <map>
#include <string>
#include <vector>

#include "icai/generation.hpp"
#include "icai/providers.hpp"
#include "icai/types.hpp"

namespace icai {

// One LLM verdict for (principle, pair). Unparseable replies get one
// reprompt, then fall back to not_applicable with a warning.
VoteRecord vote(const PrincipleCandidate& principle, const PreferencePair& pair,
                CompletionProvider& judge, const TemplateStore& templates);

// Exact counting per principle; duplicate (principle, pair) records are an
// error. Output sorted by principle_id.
std::vector<PrincipleStats> aggregate_votes(const std::vector<VoteRecord>& records);

struct FilterConfig {
    double min_relevance = 0.05;
    double min_agreement = 0.65;
    int max_size = 10;
};

// Threshold on relevance and agreement, rank by (favor - against) then
// agreement then id, deduplicate near-identical texts, truncate to max_size.
// An empty result is an error suggesting threshold relaxation.
Constitution filter_constitution(const std::vector<PrincipleStats>& stats,
                                 const std::map<std::string, std::string>& candidates,
                                 const FilterConfig& cfg);

}  // namespace icai
