#include "icai/generation.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>

#include "icai/error.hpp"
#include "json.hpp"

using nlohmann::json;

namespace icai {

namespace {

// Positions of "{name}" occurrences in body.
std::vector<std::size_t> find_placeholder(const std::string& body, const std::string& name) {
    std::vector<std::size_t> positions;
    const std::string token = "{" + name + "}";
    std::size_t pos = 0;
    while ((pos = body.find(token, pos)) != std::string::npos) {
        positions.push_back(pos);
        pos += token.size();
    }
    return positions;
}

std::string trim(const std::string& s) {
    std::size_t b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    std::size_t e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

std::string format_score(double v) {
    if (v == static_cast<long long>(v)) return std::to_string(static_cast<long long>(v));
    std::ostringstream os;
    os << v;
    return os.str();
}

constexpr std::size_t kMaxPrincipleLength = 300;

}  // namespace

void validate(const PromptTemplate& tpl) {
    for (const auto& name : tpl.required_placeholders) {
        auto pos = find_placeholder(tpl.body, name);
        if (pos.size() != 1)
            throw TemplateError("template " + tpl.template_id + ": placeholder {" + name +
                                "} occurs " + std::to_string(pos.size()) +
                                " times, expected exactly once");
    }
}

std::string render_prompt(const PromptTemplate& tpl,
                          const std::map<std::string, std::string>& bindings) {
    std::set<std::string> required(tpl.required_placeholders.begin(),
                                   tpl.required_placeholders.end());
    std::vector<std::string> missing, extra;
    for (const auto& name : required)
        if (!bindings.count(name)) missing.push_back(name);
    for (const auto& [name, _] : bindings)
        if (!required.count(name)) extra.push_back(name);
    if (!missing.empty() || !extra.empty()) {
        std::string msg = "template " + tpl.template_id + ": binding mismatch;";
        for (const auto& n : missing) msg += " missing " + n;
        for (const auto& n : extra) msg += " extra " + n;
        throw TemplateError(msg);
    }

    // Substitute at positions computed from the original body, back to front,
    // so inserted values are never rescanned for placeholders.
    struct Site {
        std::size_t pos;
        std::size_t len;
        const std::string* value;
    };
    std::vector<Site> sites;
    for (const auto& name : tpl.required_placeholders) {
        auto positions = find_placeholder(tpl.body, name);
        if (positions.size() != 1)
            throw TemplateError("template " + tpl.template_id + ": placeholder {" + name +
                                "} not unique");
        sites.push_back(Site{positions[0], name.size() + 2, &bindings.at(name)});
    }
    std::sort(sites.begin(), sites.end(),
              [](const Site& a, const Site& b) { return a.pos > b.pos; });
    std::string out = tpl.body;
    for (const auto& s : sites) out.replace(s.pos, s.len, *s.value);
    return out;
}

TemplateStore TemplateStore::load(const std::string& dir) {
    std::ifstream mf(dir + "/manifest.json");
    if (!mf) throw ValidationError("cannot open prompt manifest: " + dir + "/manifest.json");
    json j = json::parse(mf, nullptr, false);
    if (j.is_discarded() || !j.is_object())
        throw ParseError("prompt manifest is not a JSON object: " + dir);
    TemplateStore store;
    for (const auto& [id, placeholders] : j.items()) {
        PromptTemplate tpl;
        tpl.template_id = id;
        for (const auto& p : placeholders) tpl.required_placeholders.push_back(p);
        std::ifstream body(dir + "/" + id + ".txt");
        if (!body) throw ValidationError("missing prompt file: " + dir + "/" + id + ".txt");
        std::ostringstream buf;
        buf << body.rdbuf();
        tpl.body = buf.str();
        validate(tpl);
        store.templates_[id] = std::move(tpl);
    }
    return store;
}

const PromptTemplate& TemplateStore::get(const std::string& template_id) const {
    auto it = templates_.find(template_id);
    if (it == templates_.end())
        throw TemplateError("unknown prompt template: " + template_id);
    return it->second;
}

std::vector<std::string> parse_numbered_principles(const std::string& reply,
                                                   int max_items) {
    std::vector<std::string> out;
    std::istringstream in(reply);
    std::string line;
    while (std::getline(in, line) && static_cast<int>(out.size()) < max_items) {
        std::string t = trim(line);
        if (t.empty()) continue;
        // Expect "N." or "N)" prefix.
        std::size_t i = 0;
        while (i < t.size() && std::isdigit(static_cast<unsigned char>(t[i]))) ++i;
        if (i == 0 || i >= t.size() || (t[i] != '.' && t[i] != ')')) {
            std::cerr << "warning: dropping non-numbered line: " << t.substr(0, 60) << "\n";
            continue;
        }
        std::string text = trim(t.substr(i + 1));
        if (text.empty()) {
            std::cerr << "warning: dropping empty principle line\n";
            continue;
        }
        if (text.size() > kMaxPrincipleLength) {
            std::cerr << "warning: dropping over-long principle ("
                      << text.size() << " chars)\n";
            continue;
        }
        out.push_back(std::move(text));
    }
    return out;
}

namespace {

std::vector<std::string> generate_with_reprompt(CompletionProvider& llm,
                                                const std::string& prompt, int n,
                                                const std::string& context) {
    CompletionRequest req;
    req.provider_id = llm.provider_id();
    req.model = llm.model();
    req.prompt = prompt;
    req.temperature = 0.7;
    req.max_tokens = 512;
    auto parsed = parse_numbered_principles(llm.complete(req), n);
    if (!parsed.empty()) return parsed;
    req.seed = 1;  // distinct cache key for the reprompt
    parsed = parse_numbered_principles(llm.complete(req), n);
    if (parsed.empty())
        throw ProviderError("no parseable principle candidates for " + context);
    return parsed;
}

}  // namespace

std::vector<PrincipleCandidate> generate_candidates_single(
    const PreferencePair& pair, GenerationMode mode, CompletionProvider& llm,
    int n_per_pair, const TemplateStore& templates) {
    if (mode == GenerationMode::triplet)
        throw ValidationError("triplet mode requires generate_candidates_triplet");
    std::map<std::string, std::string> bindings{
        {"instruction", pair.instruction},
        {"chosen", pair.chosen},
        {"rejected", pair.rejected},
        {"n", std::to_string(n_per_pair)},
    };
    std::string template_id = "gen_baseline";
    if (mode == GenerationMode::generalizing) template_id = "gen_generalizing";
    if (mode == GenerationMode::scored) {
        if (!pair.chosen_score || !pair.rejected_score)
            throw ValidationError("scored generation requires both scores (pair " +
                                  pair.id + ")");
        template_id = "gen_scored";
        bindings["chosen_score"] = format_score(*pair.chosen_score);
        bindings["rejected_score"] = format_score(*pair.rejected_score);
    }
    std::string prompt = render_prompt(templates.get(template_id), bindings);
    auto texts = generate_with_reprompt(llm, prompt, n_per_pair, "pair " + pair.id);
    std::vector<PrincipleCandidate> out;
    for (std::size_t i = 0; i < texts.size(); ++i) {
        PrincipleCandidate c;
        c.id = pair.id + ":" + to_string(mode) + ":" + std::to_string(i);
        c.text = texts[i];
        c.source_pair_ids = {pair.id};
        c.mode = mode;
        out.push_back(std::move(c));
    }
    return out;
}

std::vector<PrincipleCandidate> generate_candidates_triplet(
    const std::array<PreferencePair, 3>& pairs, Dimension dimension,
    CompletionProvider& llm, int n_per_triplet, const TemplateStore& templates) {
    std::set<std::string> ids{pairs[0].id, pairs[1].id, pairs[2].id};
    if (ids.size() != 3)
        throw ValidationError("triplet generation requires three distinct pair ids");
    std::map<std::string, std::string> bindings{
        {"dimension", to_string(dimension)},
        {"n", std::to_string(n_per_triplet)},
    };
    for (int p = 0; p < 3; ++p) {
        const auto& pair = pairs[static_cast<std::size_t>(p)];
        std::string sfx = "_" + std::to_string(p + 1);
        bindings["instruction" + sfx] = pair.instruction;
        bindings["chosen" + sfx] = pair.chosen;
        bindings["rejected" + sfx] = pair.rejected;
    }
    std::string prompt = render_prompt(templates.get("gen_triplet"), bindings);
    std::string context =
        "triplet (" + pairs[0].id + ", " + pairs[1].id + ", " + pairs[2].id + ")";
    auto texts = generate_with_reprompt(llm, prompt, n_per_triplet, context);
    std::vector<PrincipleCandidate> out;
    for (std::size_t i = 0; i < texts.size(); ++i) {
        PrincipleCandidate c;
        c.id = pairs[0].id + "+" + pairs[1].id + "+" + pairs[2].id + ":" +
               to_string(dimension) + ":" + std::to_string(i);
        c.text = texts[i];
        c.source_pair_ids = {pairs[0].id, pairs[1].id, pairs[2].id};
        c.mode = GenerationMode::triplet;
        c.dimension = dimension;
        out.push_back(std::move(c));
    }
    return out;
}

}  // namespace icai
