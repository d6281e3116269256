#include "icai/mock.hpp"

#include <algorithm>
#include <atomic>
#include <cctype>
#include <fstream>
#include <sstream>

#include "icai/error.hpp"
#include "icai/hash.hpp"
#include "icai/rng.hpp"
#include "json.hpp"

using nlohmann::json;

namespace icai {

namespace {

std::set<std::string> token_set(const std::string& s) {
    std::set<std::string> tokens;
    std::string cur;
    for (char c : s) {
        if (std::isalnum(static_cast<unsigned char>(c))) {
            cur.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
        } else if (!cur.empty()) {
            tokens.insert(cur);
            cur.clear();
        }
    }
    if (!cur.empty()) tokens.insert(cur);
    return tokens;
}

}  // namespace

double jaccard_similarity(const std::string& a, const std::string& b) {
    auto ta = token_set(a), tb = token_set(b);
    if (ta.empty() && tb.empty()) return 1.0;
    std::size_t inter = 0;
    for (const auto& t : ta) inter += tb.count(t);
    std::size_t uni = ta.size() + tb.size() - inter;
    return uni == 0 ? 0.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

const SyntheticFixture::Rule* SyntheticFixture::rule_by_id(const std::string& id) const {
    for (const auto& r : rules)
        if (r.id == id) return &r;
    return nullptr;
}

const SyntheticFixture::Pair* SyntheticFixture::pair_by_chosen_text(
    const std::string& chosen) const {
    for (const auto& p : pairs)
        if (p.chosen == chosen) return &p;
    return nullptr;
}

const SyntheticFixture::Pair* SyntheticFixture::pair_by_id(const std::string& id) const {
    for (const auto& p : pairs)
        if (p.id == id) return &p;
    return nullptr;
}

SyntheticFixture SyntheticFixture::from_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open fixture file: " + path);
    json j = json::parse(in, nullptr, false);
    if (j.is_discarded()) throw ParseError("fixture file is not valid JSON: " + path);
    SyntheticFixture f;
    f.dim = j.value("dim", 16);
    f.sigma = j.value("sigma", 0.05);
    f.scale = j.value("scale", 1.0);
    f.seed = j.value("seed", 42ULL);
    f.tau = j.value("tau", 0.35);
    f.salt = j.value("salt", 0);
    for (const auto& r : j.at("rules"))
        f.rules.push_back(Rule{r.at("id"), r.at("statement"), r.value("axis", 0)});
    for (const auto& p : j.at("pairs"))
        f.pairs.push_back(Pair{p.at("id"), p.at("rule_id"), p.at("chosen"),
                               p.at("rejected")});
    return f;
}

void SyntheticFixture::to_json_file(const std::string& path) const {
    json j;
    j["dim"] = dim;
    j["sigma"] = sigma;
    j["scale"] = scale;
    j["seed"] = seed;
    j["tau"] = tau;
    j["salt"] = salt;
    j["rules"] = json::array();
    for (const auto& r : rules)
        j["rules"].push_back(json{{"id", r.id}, {"statement", r.statement}, {"axis", r.axis}});
    j["pairs"] = json::array();
    for (const auto& p : pairs)
        j["pairs"].push_back(json{{"id", p.id}, {"rule_id", p.rule_id},
                                  {"chosen", p.chosen}, {"rejected", p.rejected}});
    std::ofstream out(path);
    if (!out) throw ValidationError("cannot write fixture file: " + path);
    out << j.dump(2) << "\n";
}

EmbeddingVector mock_embed(const std::string& text, const SyntheticFixture& fixture,
                           const std::string& model_id) {
    Eigen::VectorXd v = Eigen::VectorXd::Zero(fixture.dim);

    const SyntheticFixture::Rule* rule = nullptr;
    bool known = false;
    if (const auto* p = fixture.pair_by_chosen_text(text)) {
        rule = fixture.rule_by_id(p->rule_id);
        known = true;
    } else {
        for (const auto& r : fixture.rules)
            if (r.statement == text) {
                rule = &r;
                known = true;
                break;
            }
        if (!known) {
            for (const auto& p : fixture.pairs)
                if (p.rejected == text) {
                    known = true;  // neutral text, noise around the origin
                    break;
                }
        }
    }

    if (!known) {
        // Hash-derived unit vector for texts outside the fixture.
        Rng rng(sha256_u64(model_id + "|unknown|" + text));
        for (int i = 0; i < fixture.dim; ++i) v(i) = rng.gaussian();
        double n = v.norm();
        return EmbeddingVector{model_id, n > 0 ? Eigen::VectorXd(v / n) : v};
    }

    if (rule) {
        if (rule->axis < 0 || rule->axis >= fixture.dim)
            throw ValidationError("fixture rule axis out of range for dim");
        v(rule->axis) = fixture.scale;
    }
    if (fixture.sigma > 0.0) {
        Rng rng(sha256_u64(model_id + "|" + std::to_string(fixture.seed) + "|" + text));
        for (int i = 0; i < fixture.dim; ++i) v(i) += fixture.sigma * rng.gaussian();
    }
    return EmbeddingVector{model_id, std::move(v)};
}

PairSide mock_judge(const PreferencePair& pair,
                    const std::vector<std::string>& constitution_text, int salt,
                    const SyntheticFixture& fixture) {
    if (!pair.planted_rule_id)
        throw ValidationError("mock_judge: pair " + pair.id + " has no planted rule");
    const auto* rule = fixture.rule_by_id(*pair.planted_rule_id);
    if (!rule)
        throw ValidationError("mock_judge: unknown planted rule " + *pair.planted_rule_id);
    for (const auto& principle : constitution_text)
        if (jaccard_similarity(principle, rule->statement) >= fixture.tau)
            return PairSide::chosen;
    std::uint64_t h = sha256_u64(pair.id + "#" + std::to_string(salt));
    return h % 2 == 0 ? PairSide::chosen : PairSide::rejected;
}

std::vector<EmbeddingVector> MockEmbeddingProvider::embed(
    const std::vector<std::string>& texts) {
    if (texts.empty()) throw ValidationError("embed: empty text list");
    std::vector<EmbeddingVector> out;
    out.reserve(texts.size());
    for (const auto& t : texts) {
        if (t.empty()) throw ValidationError("embed: empty string input");
        out.push_back(mock_embed(t, fixture_, model_id_));
    }
    return out;
}

namespace {

// Extracts the text between two section markers of the shipped templates.
std::string section(const std::string& prompt, const std::string& begin,
                    const std::string& end) {
    std::size_t b = prompt.find(begin);
    if (b == std::string::npos) return "";
    b += begin.size();
    std::size_t e = prompt.find(end, b);
    if (e == std::string::npos) return "";
    std::string s = prompt.substr(b, e - b);
    while (!s.empty() && (s.back() == '\n' || s.back() == ' ')) s.pop_back();
    while (!s.empty() && (s.front() == '\n' || s.front() == ' ')) s.erase(s.begin());
    return s;
}

std::vector<std::string> numbered_lines(const std::string& block) {
    std::vector<std::string> out;
    std::istringstream in(block);
    std::string line;
    while (std::getline(in, line)) {
        std::size_t i = 0;
        while (i < line.size() && std::isdigit(static_cast<unsigned char>(line[i]))) ++i;
        if (i == 0 || i >= line.size() || (line[i] != '.' && line[i] != ')')) continue;
        std::string text = line.substr(i + 1);
        while (!text.empty() && text.front() == ' ') text.erase(text.begin());
        if (!text.empty()) out.push_back(text);
    }
    return out;
}

}  // namespace

std::string MockOracleProvider::complete(const CompletionRequest& req) {
    validate(req);
    const std::string& p = req.prompt;
    if (p.find("Reply with exactly one of FAVOR") != std::string::npos)
        return answer_vote(p);
    if (p.find("Reply with exactly one of FIRST") != std::string::npos)
        return answer_regen(p);
    if (p.find("single integer from 1 to 10") != std::string::npos)
        return answer_similarity(p);
    if (p.find("Reply with a numbered list of principles") != std::string::npos)
        return answer_generation(p);
    throw ProviderError("mock oracle: unrecognized prompt shape");
}

std::string MockOracleProvider::answer_generation(const std::string& prompt) const {
    std::ostringstream os;
    int n = 0;
    for (const auto& r : fixture_.rules)
        if (prompt.find(r.statement) != std::string::npos)
            os << ++n << ". " << r.statement << "\n";
    if (n == 0)
        return "1. Select the response that is more appropriate for the instruction.\n";
    return os.str();
}

std::string MockOracleProvider::answer_vote(const std::string& prompt) const {
    std::string principle =
        section(prompt, "Principle under test:\n", "\n\nInstruction:");
    std::string chosen = section(prompt, "Preferred response:\n", "\n\nRejected response:");
    const auto* pair = fixture_.pair_by_chosen_text(chosen);
    if (!pair) return "NOT_APPLICABLE";
    const auto* rule = fixture_.rule_by_id(pair->rule_id);
    if (rule && jaccard_similarity(principle, rule->statement) >= fixture_.tau)
        return "FAVOR";
    return "NOT_APPLICABLE";
}

std::string MockOracleProvider::answer_regen(const std::string& prompt) const {
    std::string constitution_block = section(prompt, "Constitution:\n", "\n\nInstruction:");
    std::string first = section(prompt, "Response A:\n", "\n\nResponse B:");
    std::string second = section(prompt, "Response B:\n", "\n\nWhich response");
    auto principles = numbered_lines(constitution_block);

    const auto* pair = fixture_.pair_by_chosen_text(first);
    bool chosen_is_first = pair != nullptr;
    if (!pair) {
        pair = fixture_.pair_by_chosen_text(second);
        if (!pair) return "NONE";
    }
    PreferencePair pp;
    pp.id = pair->id;
    pp.chosen = pair->chosen;
    pp.rejected = pair->rejected;
    pp.planted_rule_id = pair->rule_id;
    PairSide side = mock_judge(pp, principles, fixture_.salt, fixture_);
    bool pick_first = (side == PairSide::chosen) == chosen_is_first;
    return pick_first ? "FIRST" : "SECOND";
}

std::string MockOracleProvider::answer_similarity(const std::string& prompt) const {
    std::string candidate = section(prompt, "Candidate principle:\n", "\n\nReference");
    std::string reference = section(prompt, "Reference principle:\n", "\n\nReply with");
    int score = 1 + static_cast<int>(std::lround(9.0 * jaccard_similarity(candidate, reference)));
    score = std::clamp(score, 1, 10);
    return std::to_string(score);
}

std::string ScriptedProvider::complete(const CompletionRequest& req) {
    validate(req);
    ++calls_;
    auto it = replies_.find(req.prompt);
    if (it != replies_.end()) return it->second;
    for (const auto& [needle, reply] : contains_)
        if (req.prompt.find(needle) != std::string::npos) return reply;
    return fallback_;
}

}  // namespace icai
