#include "icai/selection.hpp"

#include <algorithm>
#include <cctype>
#include <iostream>
#include <set>

#include "icai/error.hpp"

namespace icai {

namespace {

std::string normalize_verdict(const std::string& reply) {
    std::string u;
    for (char c : reply) u.push_back(static_cast<char>(std::toupper(static_cast<unsigned char>(c))));
    // Accept the verdict token anywhere in the reply, longest token first so
    // NOT_APPLICABLE is not misread as a bare FAVOR/AGAINST hit.
    if (u.find("NOT_APPLICABLE") != std::string::npos ||
        u.find("NOT APPLICABLE") != std::string::npos)
        return "not_applicable";
    if (u.find("FAVOR") != std::string::npos) return "favor";
    if (u.find("AGAINST") != std::string::npos) return "against";
    return "";
}

// Case-insensitive comparison after collapsing all whitespace.
std::string normalize_text(const std::string& s) {
    std::string out;
    bool pending_space = false;
    for (char c : s) {
        if (std::isspace(static_cast<unsigned char>(c))) {
            pending_space = !out.empty();
            continue;
        }
        if (pending_space) {
            out.push_back(' ');
            pending_space = false;
        }
        out.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    }
    return out;
}

}  // namespace

VoteRecord vote(const PrincipleCandidate& principle, const PreferencePair& pair,
                CompletionProvider& judge, const TemplateStore& templates) {
    std::map<std::string, std::string> bindings{
        {"principle", principle.text},
        {"instruction", pair.instruction},
        {"chosen", pair.chosen},
        {"rejected", pair.rejected},
    };
    std::string prompt = render_prompt(templates.get("vote"), bindings);
    CompletionRequest req;
    req.provider_id = judge.provider_id();
    req.model = judge.model();
    req.prompt = prompt;
    req.temperature = 0.0;
    req.max_tokens = 8;

    VoteRecord rec;
    rec.principle_id = principle.id;
    rec.pair_id = pair.id;
    try {
        std::string verdict = normalize_verdict(judge.complete(req));
        if (verdict.empty()) {
            req.seed = 1;
            verdict = normalize_verdict(judge.complete(req));
        }
        if (verdict.empty()) {
            std::cerr << "warning: unparseable vote for (" << principle.id << ", "
                      << pair.id << "), recording not_applicable\n";
            verdict = "not_applicable";
        }
        rec.vote = vote_from_string(verdict);
    } catch (const Error& e) {
        throw ProviderError("vote failed for (" + principle.id + ", " + pair.id +
                            "): " + e.what());
    }
    return rec;
}

std::vector<PrincipleStats> aggregate_votes(const std::vector<VoteRecord>& records) {
    if (records.empty()) throw ValidationError("aggregate_votes: no records");
    std::set<std::pair<std::string, std::string>> seen;
    std::map<std::string, PrincipleStats> by_principle;
    for (const auto& r : records) {
        if (!seen.insert({r.principle_id, r.pair_id}).second)
            throw ValidationError("duplicate vote record for (" + r.principle_id + ", " +
                                  r.pair_id + ")");
        auto& s = by_principle[r.principle_id];
        s.principle_id = r.principle_id;
        switch (r.vote) {
            case Vote::favor: ++s.n_favor; break;
            case Vote::against: ++s.n_against; break;
            case Vote::not_applicable: ++s.n_na; break;
        }
    }
    std::vector<PrincipleStats> out;
    out.reserve(by_principle.size());
    for (auto& [_, s] : by_principle) {
        const int total = s.n_favor + s.n_against + s.n_na;
        const int decisive = s.n_favor + s.n_against;
        s.relevance = total > 0 ? static_cast<double>(decisive) / total : 0.0;
        s.agreement = decisive > 0 ? static_cast<double>(s.n_favor) / decisive : 0.0;
        out.push_back(s);
    }
    return out;
}

Constitution filter_constitution(const std::vector<PrincipleStats>& stats,
                                 const std::map<std::string, std::string>& candidates,
                                 const FilterConfig& cfg) {
    if (cfg.max_size < 1)
        throw ValidationError("filter_constitution: max_size must be >= 1");
    std::vector<PrincipleStats> kept;
    for (const auto& s : stats) {
        if (s.relevance < cfg.min_relevance || s.agreement < cfg.min_agreement) continue;
        if (!candidates.count(s.principle_id))
            throw ValidationError("filter_constitution: no text for principle " +
                                  s.principle_id);
        kept.push_back(s);
    }
    std::sort(kept.begin(), kept.end(), [](const PrincipleStats& a, const PrincipleStats& b) {
        const int na = a.n_favor - a.n_against;
        const int nb = b.n_favor - b.n_against;
        if (na != nb) return na > nb;
        if (a.agreement != b.agreement) return a.agreement > b.agreement;
        return a.principle_id < b.principle_id;
    });

    Constitution c;
    std::set<std::string> seen_texts;
    for (const auto& s : kept) {
        if (static_cast<int>(c.principles.size()) >= cfg.max_size) break;
        const std::string& text = candidates.at(s.principle_id);
        if (!seen_texts.insert(normalize_text(text)).second) continue;  // keep higher-ranked
        c.principles.push_back(text);
        c.stats.push_back(s);
    }
    if (c.principles.empty())
        throw ValidationError(
            "filter_constitution: no principles survived; relax min_relevance/"
            "min_agreement or check the vote stage");
    return c;
}

}  // namespace icai
