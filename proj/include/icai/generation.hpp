#pragma once

#include <map>
#include <string>
#include <vector>

#include "icai/providers.hpp"
#include "icai/types.hpp"

namespace icai {

struct PromptTemplate {
    std::string template_id;
    std::string body;
    std::vector<std::string> required_placeholders;
};

// Validates that every required placeholder occurs in the body exactly once
// as {name}. Throws TemplateError otherwise.
void validate(const PromptTemplate& tpl);

// Pure placeholder substitution. Bindings must cover the required
// placeholders exactly; a binding's value is inserted literally, braces and
// all, with no recursive expansion. Missing or extra bindings raise a
// TemplateError naming them.
std::string render_prompt(const PromptTemplate& tpl,
                          const std::map<std::string, std::string>& bindings);

// Loads prompts/<template_id>.txt files listed in prompts/manifest.json.
class TemplateStore {
public:
    static TemplateStore load(const std::string& dir);

    const PromptTemplate& get(const std::string& template_id) const;

private:
    std::map<std::string, PromptTemplate> templates_;
};

// Parses an LLM reply under the numbered-list contract ("1. <principle>").
// Lines that violate the candidate invariants (empty, multi-line, over 300
// characters) are dropped with a reason on stderr, never repaired.
std::vector<std::string> parse_numbered_principles(const std::string& reply,
                                                   int max_items);

std::vector<PrincipleCandidate> generate_candidates_single(
    const PreferencePair& pair, GenerationMode mode, CompletionProvider& llm,
    int n_per_pair, const TemplateStore& templates);

std::vector<PrincipleCandidate> generate_candidates_triplet(
    const std::array<PreferencePair, 3>& pairs, Dimension dimension,
    CompletionProvider& llm, int n_per_triplet, const TemplateStore& templates);

}  // namespace icai
