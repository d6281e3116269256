#include "icai/dataset.hpp"

#include <algorithm>
#include <fstream>
#include <iostream>
#include <mutex>
#include <set>

#include "icai/error.hpp"
#include "icai/hash.hpp"
#include "icai/providers.hpp"
#include "icai/rng.hpp"
#include "json.hpp"

using nlohmann::json;

namespace icai {

PairSchema pair_schema_from_string(const std::string& s) {
    if (s == "plain") return PairSchema::plain;
    if (s == "rated") return PairSchema::rated;
    if (s == "synthetic") return PairSchema::synthetic;
    throw ValidationError("unknown pair schema: " + s);
}

namespace {

json pair_to_json(const PreferencePair& p) {
    json j;
    j["id"] = p.id;
    j["instruction"] = p.instruction;
    j["chosen"] = p.chosen;
    j["rejected"] = p.rejected;
    if (p.chosen_score) j["chosen_score"] = *p.chosen_score;
    if (p.rejected_score) j["rejected_score"] = *p.rejected_score;
    if (p.planted_rule_id) j["planted_rule_id"] = *p.planted_rule_id;
    return j;
}

PreferencePair pair_from_json(const json& j, std::size_t lineno) {
    auto where = [lineno] { return " at line " + std::to_string(lineno); };
    PreferencePair p;
    try {
        p.id = j.at("id").get<std::string>();
        p.instruction = j.at("instruction").get<std::string>();
        p.chosen = j.at("chosen").get<std::string>();
        p.rejected = j.at("rejected").get<std::string>();
    } catch (const json::exception& e) {
        throw ParseError("missing or mistyped field" + where() + ": " + e.what());
    }
    if (j.contains("chosen_score")) p.chosen_score = j["chosen_score"].get<double>();
    if (j.contains("rejected_score")) p.rejected_score = j["rejected_score"].get<double>();
    if (j.contains("planted_rule_id"))
        p.planted_rule_id = j["planted_rule_id"].get<std::string>();
    if (p.chosen == p.rejected)
        throw ValidationError("chosen equals rejected" + where() + " (id " + p.id + ")");
    if (p.chosen_score.has_value() != p.rejected_score.has_value())
        throw ValidationError("one score present without the other" + where() + " (id " +
                              p.id + ")");
    for (auto s : {p.chosen_score, p.rejected_score})
        if (s && (*s < 1.0 || *s > 5.0))
            throw ValidationError("score out of [1,5]" + where() + " (id " + p.id + ")");
    return p;
}

double score_delta(const PreferencePair& p) {
    return *p.chosen_score - *p.rejected_score;
}

}  // namespace

std::vector<PreferencePair> load_pairs(const std::string& path, PairSchema schema) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open dataset file: " + path);
    std::vector<PreferencePair> pairs;
    std::set<std::string> seen;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        json j = json::parse(line, nullptr, false);
        if (j.is_discarded())
            throw ParseError(path + " line " + std::to_string(lineno) + ": not valid JSON");
        PreferencePair p = pair_from_json(j, lineno);
        if (!seen.insert(p.id).second)
            throw ValidationError(path + " line " + std::to_string(lineno) +
                                  ": duplicate id " + p.id);
        if (schema == PairSchema::rated && !p.chosen_score)
            throw ValidationError(path + " line " + std::to_string(lineno) +
                                  ": rated schema requires both scores (id " + p.id + ")");
        if (schema == PairSchema::synthetic && !p.planted_rule_id)
            throw ValidationError(path + " line " + std::to_string(lineno) +
                                  ": synthetic schema requires planted_rule_id (id " +
                                  p.id + ")");
        pairs.push_back(std::move(p));
    }
    return pairs;
}

void save_pairs(const std::string& path, const std::vector<PreferencePair>& pairs) {
    std::ofstream out(path);
    if (!out) throw ValidationError("cannot write dataset file: " + path);
    for (const auto& p : pairs) out << pair_to_json(p).dump() << "\n";
}

std::vector<GroundTruthPrinciple> load_principles(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open principles file: " + path);
    json j = json::parse(in, nullptr, false);
    if (j.is_discarded() || !j.is_array())
        throw ParseError("principles file must be a JSON array: " + path);
    std::vector<GroundTruthPrinciple> out;
    std::set<std::string> seen;
    for (const auto& e : j) {
        GroundTruthPrinciple p;
        p.id = e.at("id").get<std::string>();
        p.statement = e.at("statement").get<std::string>();
        p.rewrite_prompt = e.value("rewrite_prompt", "");
        if (p.rewrite_prompt.empty())
            throw ValidationError("principle " + p.id + " has an empty rewrite_prompt");
        if (!seen.insert(p.id).second)
            throw ValidationError("duplicate principle id: " + p.id);
        out.push_back(std::move(p));
    }
    return out;
}

void save_principles(const std::string& path,
                     const std::vector<GroundTruthPrinciple>& ps) {
    json arr = json::array();
    for (const auto& p : ps)
        arr.push_back(json{{"id", p.id}, {"statement", p.statement},
                           {"rewrite_prompt", p.rewrite_prompt}});
    std::ofstream out(path);
    if (!out) throw ValidationError("cannot write principles file: " + path);
    out << arr.dump(2) << "\n";
}

DatasetSplit build_synthetic(const std::vector<PreferencePair>& source_pairs,
                             const std::vector<GroundTruthPrinciple>& principles,
                             CompletionProvider& llm, int n_train, int n_test,
                             std::uint64_t seed, int max_inflight,
                             const std::string& progress_dir) {
    const int total = n_train + n_test;
    const int np = static_cast<int>(principles.size());
    if (np < 1) throw ValidationError("build_synthetic: need at least one principle");
    if (total > static_cast<int>(source_pairs.size()))
        throw ValidationError("build_synthetic: not enough source pairs");
    if (n_train % np != 0 || n_test % np != 0)
        throw ValidationError(
            "build_synthetic: train and test sizes must each be divisible by the number "
            "of principles for equal representation");

    Rng rng(derive_seed(seed, "synthetic-assignment"));
    auto order = shuffled_indices(rng, source_pairs.size());

    // Principle assignment: per split, each principle covers an equal share of
    // the shuffled source pairs.
    struct Job {
        const PreferencePair* src;
        const GroundTruthPrinciple* principle;
        bool is_train;
    };
    std::vector<Job> jobs;
    jobs.reserve(static_cast<std::size_t>(total));
    for (int i = 0; i < total; ++i) {
        bool is_train = i < n_train;
        int within = is_train ? i : i - n_train;
        int per = is_train ? n_train / np : n_test / np;
        const auto& principle = principles[static_cast<std::size_t>(within / per)];
        jobs.push_back(Job{&source_pairs[order[static_cast<std::size_t>(i)]], &principle,
                           is_train});
    }

    std::vector<PreferencePair> results(jobs.size());
    std::vector<char> excluded(jobs.size(), 0);
    std::mutex progress_mu;
    std::vector<std::string> completed_ids;

    auto rewrite_once = [&](const Job& job, std::optional<std::int64_t> retry_seed) {
        CompletionRequest req;
        req.provider_id = llm.provider_id();
        req.model = llm.model();
        req.prompt = job.principle->rewrite_prompt + "\n\nInstruction:\n" +
                     job.src->instruction + "\n\nReply to rewrite:\n" + job.src->rejected;
        req.temperature = 0.7;
        req.max_tokens = 1024;
        req.seed = retry_seed;
        return llm.complete(req);
    };

    try {
        bounded_parallel_for(jobs.size(), max_inflight, [&](std::size_t i) {
            const Job& job = jobs[i];
            std::string rewrite = rewrite_once(job, std::nullopt);
            if (rewrite == job.src->rejected) rewrite = rewrite_once(job, 1);
            if (rewrite == job.src->rejected) {
                std::cerr << "warning: rewrite degenerate for pair " << job.src->id
                          << ", excluding\n";
                excluded[i] = 1;
                return;
            }
            PreferencePair out;
            out.id = job.src->id;
            out.instruction = job.src->instruction;
            out.chosen = rewrite;
            out.rejected = job.src->rejected;
            out.planted_rule_id = job.principle->id;
            results[i] = std::move(out);
            std::lock_guard lock(progress_mu);
            completed_ids.push_back(job.src->id);
        });
    } catch (...) {
        if (!progress_dir.empty()) {
            std::sort(completed_ids.begin(), completed_ids.end());
            json manifest;
            manifest["completed_ids"] = completed_ids;
            manifest["total"] = total;
            std::ofstream out(progress_dir + "/synthetic.partial.json");
            if (out) out << manifest.dump(2) << "\n";
        }
        throw;
    }

    DatasetSplit split;
    for (std::size_t i = 0; i < jobs.size(); ++i) {
        if (excluded[i]) continue;
        (jobs[i].is_train ? split.train : split.test).push_back(std::move(results[i]));
    }
    auto by_id = [](const PreferencePair& a, const PreferencePair& b) { return a.id < b.id; };
    std::sort(split.train.begin(), split.train.end(), by_id);
    std::sort(split.test.begin(), split.test.end(), by_id);
    return split;
}

DatasetSplit filter_and_sample_semisynthetic(const std::vector<PreferencePair>& rated,
                                             double min_delta, int n_train, int n_test,
                                             std::uint64_t seed) {
    std::vector<std::size_t> eligible;
    for (std::size_t i = 0; i < rated.size(); ++i) {
        const auto& p = rated[i];
        if (!p.chosen_score || !p.rejected_score)
            throw ValidationError("semisynthetic sampling requires rated pairs (id " +
                                  p.id + ")");
        if (score_delta(p) >= min_delta) eligible.push_back(i);
    }
    const std::size_t want = static_cast<std::size_t>(n_train + n_test);
    if (want > eligible.size())
        throw ValidationError("semisynthetic sampling: only " +
                              std::to_string(eligible.size()) +
                              " eligible pairs for a request of " + std::to_string(want));
    std::vector<double> weights;
    weights.reserve(eligible.size());
    for (std::size_t i : eligible) {
        double d = score_delta(rated[i]);
        if (!(d > 0.0))
            throw ValidationError("semisynthetic sampling: non-positive delta weight (id " +
                                  rated[i].id + "); use min_delta > 0");
        weights.push_back(d);
    }
    Rng rng(derive_seed(seed, "semisynthetic-sample"));
    auto picks = weighted_sample_without_replacement(rng, weights, want);
    DatasetSplit split;
    for (std::size_t j = 0; j < picks.size(); ++j) {
        const auto& p = rated[eligible[picks[j]]];
        (j < static_cast<std::size_t>(n_train) ? split.train : split.test).push_back(p);
    }
    return split;
}

DatasetSplit split_original(const std::vector<PreferencePair>& pairs, int n_train,
                            int n_test, std::uint64_t seed) {
    const std::size_t want = static_cast<std::size_t>(n_train + n_test);
    if (want > pairs.size())
        throw ValidationError("split_original: requested " + std::to_string(want) +
                              " pairs from " + std::to_string(pairs.size()));
    Rng rng(derive_seed(seed, "original-split"));
    auto order = shuffled_indices(rng, pairs.size());
    DatasetSplit split;
    for (std::size_t j = 0; j < want; ++j) {
        const auto& p = pairs[order[j]];
        (j < static_cast<std::size_t>(n_train) ? split.train : split.test).push_back(p);
    }
    return split;
}

void save_split(const DatasetSplit& split, const std::string& dir, const std::string& name,
                std::uint64_t seed, const std::string& source_hash) {
    save_pairs(dir + "/" + name + ".train.jsonl", split.train);
    save_pairs(dir + "/" + name + ".test.jsonl", split.test);
    json manifest;
    manifest["name"] = name;
    manifest["seed"] = seed;
    manifest["n_train"] = split.train.size();
    manifest["n_test"] = split.test.size();
    manifest["source_hash"] = source_hash;
    std::ofstream out(dir + "/" + name + ".manifest.json");
    if (!out) throw ValidationError("cannot write split manifest in " + dir);
    out << manifest.dump(2) << "\n";
}

}  // namespace icai
