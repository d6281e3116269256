#pragma once

#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "icai/providers.hpp"
#include "icai/types.hpp"

namespace icai {

// Token-level Jaccard similarity over lowercased alphanumeric tokens.
double jaccard_similarity(const std::string& a, const std::string& b);

// Describes a synthetic dataset well enough to stand in for every external
// model: which rule generated each pair, what the rule statements are, and
// how texts map into a toy embedding space. Only valid on synthetic data.
struct SyntheticFixture {
    struct Rule {
        std::string id;
        std::string statement;
        int axis = 0;  // basis direction in the toy embedding space
    };
    struct Pair {
        std::string id;
        std::string rule_id;
        std::string chosen;
        std::string rejected;
    };

    std::vector<Rule> rules;
    std::vector<Pair> pairs;
    int dim = 16;
    double sigma = 0.05;
    double scale = 1.0;
    std::uint64_t seed = 42;
    double tau = 0.35;  // Jaccard threshold for the mock judge
    int salt = 0;       // decides the pseudo-random side when no principle matches

    const Rule* rule_by_id(const std::string& id) const;
    const Pair* pair_by_chosen_text(const std::string& chosen) const;
    const Pair* pair_by_id(const std::string& id) const;

    static SyntheticFixture from_json_file(const std::string& path);
    void to_json_file(const std::string& path) const;
};

// Deterministic toy embedding: texts carrying a planted rule map to that
// rule's basis direction (times scale) plus seeded Gaussian noise; rejected
// texts map to noise around the origin; unknown texts map to a hash-derived
// unit vector. model_id participates in the noise seed so the three
// dimension models disagree like distinct real models would.
EmbeddingVector mock_embed(const std::string& text, const SyntheticFixture& fixture,
                           const std::string& model_id);

// Stands in for the regeneration judge: if any constitution principle is
// Jaccard-similar (>= tau) to the pair's planted rule statement, the truly
// chosen side is returned; otherwise a pseudo-random side from
// hash(pair id, salt).
enum class PairSide { chosen, rejected };
PairSide mock_judge(const PreferencePair& pair,
                    const std::vector<std::string>& constitution_text, int salt,
                    const SyntheticFixture& fixture);

class MockEmbeddingProvider : public EmbeddingProvider {
public:
    MockEmbeddingProvider(SyntheticFixture fixture, std::string model_id)
        : fixture_(std::move(fixture)), model_id_(std::move(model_id)) {}
    std::vector<EmbeddingVector> embed(const std::vector<std::string>& texts) override;
    std::string model_id() const override { return model_id_; }

private:
    SyntheticFixture fixture_;
    std::string model_id_;
};

// A completion provider that recognizes the pipeline's prompt shapes (by the
// instruction sentences the shipped templates end with) and answers from the
// fixture's ground truth. Covers principle generation, voting, regeneration
// judging, and similarity scoring, so a whole run works offline.
class MockOracleProvider : public CompletionProvider {
public:
    MockOracleProvider(SyntheticFixture fixture, std::string provider_id = "mock",
                       std::string model = "oracle")
        : fixture_(std::move(fixture)),
          provider_id_(std::move(provider_id)),
          model_(std::move(model)) {}

    std::string complete(const CompletionRequest& req) override;
    std::string provider_id() const override { return provider_id_; }
    std::string model() const override { return model_; }

private:
    std::string answer_generation(const std::string& prompt) const;
    std::string answer_vote(const std::string& prompt) const;
    std::string answer_regen(const std::string& prompt) const;
    std::string answer_similarity(const std::string& prompt) const;

    SyntheticFixture fixture_;
    std::string provider_id_;
    std::string model_;
};

// Replies with a fixed script keyed by exact prompt, or a constant fallback.
// Used to pin regression numbers and to build slot-biased judges.
class ScriptedProvider : public CompletionProvider {
public:
    explicit ScriptedProvider(std::string fallback, std::string provider_id = "scripted",
                              std::string model = "script")
        : fallback_(std::move(fallback)),
          provider_id_(std::move(provider_id)),
          model_(std::move(model)) {}

    void add_reply(const std::string& prompt, const std::string& reply) {
        replies_[prompt] = reply;
    }
    // Replies matched by substring of the prompt, checked after exact hits.
    void add_contains_reply(const std::string& needle, const std::string& reply) {
        contains_.emplace_back(needle, reply);
    }

    std::string complete(const CompletionRequest& req) override;
    std::string provider_id() const override { return provider_id_; }
    std::string model() const override { return model_; }
    int calls() const { return calls_; }

private:
    std::map<std::string, std::string> replies_;
    std::vector<std::pair<std::string, std::string>> contains_;
    std::string fallback_;
    std::string provider_id_;
    std::string model_;
    int calls_ = 0;
};

}  // namespace icai
