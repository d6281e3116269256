#include "icai/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <set>
#include <iostream>

#include "icai/clustering.hpp"
#include "icai/dataset.hpp"
#include "icai/error.hpp"
#include "icai/evaluation.hpp"
#include "icai/generation.hpp"
#include "icai/hash.hpp"
#include "icai/mock.hpp"
#include "icai/rng.hpp"
#include "json.hpp"

using nlohmann::json;
namespace fs = std::filesystem;

namespace icai {

namespace {
constexpr const char* kToolVersion = "0.1.0";
}

std::string to_string(Variant v) {
    switch (v) {
        case Variant::baseline: return "baseline";
        case Variant::improved1: return "improved1";
        case Variant::improved2: return "improved2";
        case Variant::scored: return "scored";
    }
    return "baseline";
}

Variant variant_from_string(const std::string& s) {
    if (s == "baseline") return Variant::baseline;
    if (s == "improved1") return Variant::improved1;
    if (s == "improved2") return Variant::improved2;
    if (s == "scored") return Variant::scored;
    throw ValidationError("unknown variant: " + s);
}

RunConfig RunConfig::from_json_file(const std::string& path,
                                    const std::vector<std::string>& overrides) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open config file: " + path);
    json j = json::parse(in, nullptr, false);
    if (j.is_discarded() || !j.is_object())
        throw ParseError("config file is not a JSON object: " + path);

    for (const auto& ov : overrides) {
        auto eq = ov.find('=');
        if (eq == std::string::npos)
            throw ValidationError("--set expects key=value, got: " + ov);
        std::string key = ov.substr(0, eq);
        std::string val = ov.substr(eq + 1);
        json parsed = json::parse(val, nullptr, false);
        if (parsed.is_discarded()) parsed = val;  // plain string
        j[key] = parsed;
    }

    RunConfig cfg;
    cfg.variant = variant_from_string(j.value("variant", "baseline"));
    cfg.train_path = j.value("train_path", "");
    cfg.test_path = j.value("test_path", "");
    cfg.dataset_id = j.value("dataset_id", "");
    cfg.providers_path = j.value("providers_path", "");
    cfg.generation_provider = j.value("generation_provider", "");
    cfg.judge_provider = j.value("judge_provider", "");
    cfg.embedding_provider = j.value("embedding_provider", "");
    if (j.contains("diff_embedding_providers"))
        for (const auto& [k, v] : j["diff_embedding_providers"].items())
            cfg.diff_embedding_providers[k] = v.get<std::string>();
    cfg.prompt_dir = j.value("prompt_dir", "prompts");
    cfg.run_dir = j.value("run_dir", "runs");
    cfg.run_id = j.value("run_id", "");
    cfg.n_per_pair = j.value("n_per_pair", 3);
    cfg.n_per_triplet = j.value("n_per_triplet", 5);
    cfg.principle_k = j.value("principle_k", 0);
    cfg.diff_k = j.value("diff_k", 8);
    cfg.k_top = j.value("k_top", 5);
    cfg.n_triplets_per_cluster = j.value("n_triplets_per_cluster", 1);
    cfg.filter.min_relevance = j.value("min_relevance", 0.05);
    cfg.filter.min_agreement = j.value("min_agreement", 0.65);
    cfg.filter.max_size = j.value("max_size", 10);
    cfg.seed = j.value("seed", static_cast<std::uint64_t>(0));
    cfg.cache_mode = cache_mode_from_string(j.value("cache_mode", "off"));
    cfg.cassette_path = j.value("cassette_path", "");
    cfg.max_inflight = j.value("max_inflight", 4);
    cfg.constitution_path = j.value("constitution_path", "");
    cfg.ground_truth_path = j.value("ground_truth_path", "");
    cfg.instructions_path = j.value("instructions_path", "");
    cfg.base_provider = j.value("base_provider", "");
    cfg.con_provider = j.value("con_provider", "");
    return cfg;
}

std::string RunConfig::config_hash() const {
    json j;
    j["variant"] = to_string(variant);
    j["train_path"] = train_path;
    j["test_path"] = test_path;
    j["dataset_id"] = dataset_id;
    j["providers_path"] = providers_path;
    j["generation_provider"] = generation_provider;
    j["judge_provider"] = judge_provider;
    j["embedding_provider"] = embedding_provider;
    j["diff_embedding_providers"] = diff_embedding_providers;
    j["prompt_dir"] = prompt_dir;
    j["n_per_pair"] = n_per_pair;
    j["n_per_triplet"] = n_per_triplet;
    j["principle_k"] = principle_k;
    j["diff_k"] = diff_k;
    j["k_top"] = k_top;
    j["n_triplets_per_cluster"] = n_triplets_per_cluster;
    j["min_relevance"] = filter.min_relevance;
    j["min_agreement"] = filter.min_agreement;
    j["max_size"] = filter.max_size;
    j["seed"] = seed;
    j["constitution_path"] = constitution_path;
    j["ground_truth_path"] = ground_truth_path;
    j["instructions_path"] = instructions_path;
    j["base_provider"] = base_provider;
    j["con_provider"] = con_provider;
    return sha256_hex(j.dump());
}

std::string RunConfig::effective_run_id() const {
    if (!run_id.empty()) return run_id;
    return "run-" + config_hash().substr(0, 12);
}

void RunConfig::validate_for_extract() const {
    if (train_path.empty()) throw ValidationError("config: train_path is required");
    if (providers_path.empty()) throw ValidationError("config: providers_path is required");
    if (generation_provider.empty())
        throw ValidationError("config: generation_provider is required");
    if (judge_provider.empty()) throw ValidationError("config: judge_provider is required");
    if (embedding_provider.empty())
        throw ValidationError("config: embedding_provider is required");
    if (variant == Variant::improved2) {
        for (const char* dim : {"content", "style", "sentiment"})
            if (!diff_embedding_providers.count(dim))
                throw ValidationError(
                    std::string("config: improved2 requires diff_embedding_providers.") +
                    dim);
    }
}

ProviderFactory::ProviderFactory(const RunConfig& cfg) : cfg_(cfg) {
    if (cfg_.cache_mode != CacheMode::off) {
        std::string path = cfg_.cassette_path;
        if (path.empty()) {
            fs::create_directories("cassettes");
            path = "cassettes/" + cfg_.effective_run_id() + ".jsonl";
        }
        cassette_ = std::make_shared<Cassette>(path, cfg_.cache_mode);
    }
}

namespace {

// Replay runs never reach the transport: the cassette answers every request
// or raises a ReplayMissError first. These stand-ins carry only the identity
// needed to compute cache keys, so no fixture or HTTP client is built.
class ReplayOnlyCompletion : public CompletionProvider {
public:
    ReplayOnlyCompletion(std::string provider_id, std::string model)
        : provider_id_(std::move(provider_id)), model_(std::move(model)) {}
    std::string complete(const CompletionRequest&) override {
        throw ReplayMissError("transport invoked during replay");
    }
    std::string provider_id() const override { return provider_id_; }
    std::string model() const override { return model_; }

private:
    std::string provider_id_, model_;
};

class ReplayOnlyEmbedding : public EmbeddingProvider {
public:
    explicit ReplayOnlyEmbedding(std::string model_id) : model_id_(std::move(model_id)) {}
    std::vector<EmbeddingVector> embed(const std::vector<std::string>&) override {
        throw ReplayMissError("transport invoked during replay");
    }
    std::string model_id() const override { return model_id_; }

private:
    std::string model_id_;
};

}  // namespace

std::shared_ptr<CompletionProvider> ProviderFactory::completion(
    const std::string& provider_id) {
    auto pc = provider_config_from_json_file(cfg_.providers_path, provider_id);
    std::shared_ptr<CompletionProvider> inner;
    if (cassette_ && cassette_->mode() == CacheMode::replay) {
        inner = std::make_shared<ReplayOnlyCompletion>(
            pc.provider_id,
            pc.kind == "mock" && pc.model.empty() ? "oracle" : pc.model);
    } else if (pc.kind == "mock") {
        if (pc.fixture_path.empty())
            throw ValidationError("mock provider " + provider_id + " needs fixture_path");
        inner = std::make_shared<MockOracleProvider>(
            SyntheticFixture::from_json_file(pc.fixture_path), provider_id,
            pc.model.empty() ? "oracle" : pc.model);
    } else if (pc.kind == "openai-compatible") {
        inner = std::make_shared<HttpCompletionProvider>(pc);
    } else {
        throw ValidationError("unknown provider kind: " + pc.kind);
    }
    if (cassette_) return std::make_shared<CachedCompletionProvider>(inner, cassette_);
    return inner;
}

std::shared_ptr<EmbeddingProvider> ProviderFactory::embedding(
    const std::string& provider_id) {
    auto pc = provider_config_from_json_file(cfg_.providers_path, provider_id);
    std::shared_ptr<EmbeddingProvider> inner;
    if (cassette_ && cassette_->mode() == CacheMode::replay) {
        inner = std::make_shared<ReplayOnlyEmbedding>(
            pc.model.empty() && pc.kind == "mock" ? pc.provider_id : pc.model);
    } else if (pc.kind == "mock") {
        if (pc.fixture_path.empty())
            throw ValidationError("mock provider " + provider_id + " needs fixture_path");
        inner = std::make_shared<MockEmbeddingProvider>(
            SyntheticFixture::from_json_file(pc.fixture_path),
            pc.model.empty() ? provider_id : pc.model);
    } else if (pc.kind == "openai-compatible") {
        inner = std::make_shared<HttpEmbeddingProvider>(pc);
    } else {
        throw ValidationError("unknown provider kind: " + pc.kind);
    }
    if (cassette_) return std::make_shared<CachedEmbeddingProvider>(inner, cassette_);
    return inner;
}

void save_candidates(const std::string& path, const std::vector<PrincipleCandidate>& cs) {
    std::ofstream out(path);
    if (!out) throw ValidationError("cannot write " + path);
    for (const auto& c : cs) {
        json j;
        j["id"] = c.id;
        j["text"] = c.text;
        j["source_pair_ids"] = c.source_pair_ids;
        j["mode"] = to_string(c.mode);
        if (c.dimension) j["dimension"] = to_string(*c.dimension);
        out << j.dump() << "\n";
    }
}

std::vector<PrincipleCandidate> load_candidates(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open " + path);
    std::vector<PrincipleCandidate> out;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        json j = json::parse(line);
        PrincipleCandidate c;
        c.id = j.at("id");
        c.text = j.at("text");
        c.source_pair_ids = j.at("source_pair_ids").get<std::vector<std::string>>();
        c.mode = generation_mode_from_string(j.at("mode"));
        if (j.contains("dimension")) c.dimension = dimension_from_string(j["dimension"]);
        out.push_back(std::move(c));
    }
    return out;
}

void save_votes(const std::string& path, const std::vector<VoteRecord>& votes) {
    std::ofstream out(path);
    if (!out) throw ValidationError("cannot write " + path);
    for (const auto& v : votes) {
        json j;
        j["principle_id"] = v.principle_id;
        j["pair_id"] = v.pair_id;
        j["vote"] = to_string(v.vote);
        out << j.dump() << "\n";
    }
}

std::vector<VoteRecord> load_votes(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open " + path);
    std::vector<VoteRecord> out;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        json j = json::parse(line);
        out.push_back(VoteRecord{j.at("principle_id"), j.at("pair_id"),
                                 vote_from_string(j.at("vote"))});
    }
    return out;
}

namespace {

json stats_to_json(const PrincipleStats& s) {
    return json{{"principle_id", s.principle_id}, {"n_favor", s.n_favor},
                {"n_against", s.n_against},       {"n_na", s.n_na},
                {"relevance", s.relevance},       {"agreement", s.agreement}};
}

}  // namespace

void save_constitution(const std::string& path, const Constitution& c,
                       const std::string& config_hash) {
    json j;
    j["variant"] = c.variant;
    j["principles"] = c.principles;
    j["stats"] = json::array();
    for (const auto& s : c.stats) j["stats"].push_back(stats_to_json(s));
    j["provenance"] = json{{"run_id", c.run_id},
                           {"dataset_id", c.dataset_id},
                           {"config_hash", config_hash},
                           {"tool_version", kToolVersion}};
    std::ofstream out(path);
    if (!out) throw ValidationError("cannot write " + path);
    out << j.dump(2) << "\n";
}

Constitution load_constitution(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open constitution: " + path);
    json j = json::parse(in, nullptr, false);
    if (j.is_discarded()) throw ParseError("constitution is not valid JSON: " + path);
    Constitution c;
    c.variant = j.value("variant", "");
    for (const auto& p : j.at("principles")) c.principles.push_back(p);
    if (j.contains("provenance")) {
        c.run_id = j["provenance"].value("run_id", "");
        c.dataset_id = j["provenance"].value("dataset_id", "");
    }
    if (c.principles.empty())
        throw ValidationError("constitution has no principles: " + path);
    return c;
}

namespace {

struct StageClock {
    std::chrono::steady_clock::time_point t0 = std::chrono::steady_clock::now();
    long long ms() const {
        return std::chrono::duration_cast<std::chrono::milliseconds>(
                   std::chrono::steady_clock::now() - t0)
            .count();
    }
};

// Manifest writer invoked at every stage boundary; writes atomically via a
// temp file so a crash cannot leave a torn manifest.
class ManifestWriter {
public:
    ManifestWriter(std::string dir, const RunConfig& cfg) : dir_(std::move(dir)) {
        doc_["run_id"] = cfg.effective_run_id();
        doc_["config_hash"] = cfg.config_hash();
        doc_["tool_version"] = kToolVersion;
        doc_["input_hashes"] = json::object();
        if (!cfg.train_path.empty())
            doc_["input_hashes"]["train"] = sha256_file_hex(cfg.train_path);
        if (!cfg.test_path.empty() && fs::exists(cfg.test_path))
            doc_["input_hashes"]["test"] = sha256_file_hex(cfg.test_path);
        doc_["stages"] = json::array();
        doc_["artifacts"] = json::object();
    }

    void stage_done(const std::string& name, long long ms) {
        doc_["stages"].push_back(json{{"name", name}, {"ms", ms}});
        doc_["last_completed_stage"] = name;
        flush();
    }

    void artifact(const std::string& name, const std::string& path) {
        doc_["artifacts"][name] =
            json{{"path", path}, {"sha256", sha256_file_hex(path)}};
        flush();
    }

private:
    void flush() {
        std::string tmp = dir_ + "/manifest.json.tmp";
        {
            std::ofstream out(tmp);
            out << doc_.dump(2) << "\n";
        }
        fs::rename(tmp, dir_ + "/manifest.json");
    }

    std::string dir_;
    json doc_;
};

std::string choice_to_string(JudgeChoice c) {
    switch (c) {
        case JudgeChoice::first: return "first";
        case JudgeChoice::second: return "second";
        case JudgeChoice::none: return "none";
    }
    return "none";
}

}  // namespace

Constitution run_pipeline(const RunConfig& cfg) {
    cfg.validate_for_extract();
    const std::string run_id = cfg.effective_run_id();
    const std::string dir = cfg.run_dir + "/" + run_id;
    fs::create_directories(dir);
    ManifestWriter manifest(dir, cfg);
    TemplateStore templates = TemplateStore::load(cfg.prompt_dir);
    ProviderFactory factory(cfg);

    const PairSchema schema =
        cfg.variant == Variant::scored ? PairSchema::rated : PairSchema::plain;
    auto train = load_pairs(cfg.train_path, schema);
    if (train.empty()) throw ValidationError("train set is empty: " + cfg.train_path);

    auto generator = factory.completion(cfg.generation_provider);

    // Stage 1: candidate generation.
    StageClock gen_clock;
    std::vector<PrincipleCandidate> candidates;
    json clusters_doc;  // audit trail for clusters.json
    if (cfg.variant == Variant::improved2) {
        const std::vector<std::pair<std::string, Dimension>> maps = {
            {"content", Dimension::content},
            {"style", Dimension::style},
            {"sentiment", Dimension::sentiment}};
        std::vector<std::vector<ScoredCluster>> scored_per_map;
        std::map<Dimension, std::map<std::string, Eigen::VectorXd>> node_vectors;
        clusters_doc["difference_maps"] = json::object();
        for (const auto& [name, dim] : maps) {
            auto embedder = factory.embedding(cfg.diff_embedding_providers.at(name));
            auto nodes = build_difference_map(train, *embedder, dim);
            std::vector<EmbeddingVector> vecs;
            std::vector<std::string> ids;
            for (const auto& n : nodes) {
                vecs.push_back(n.vector);
                ids.push_back(n.pair_id);
                node_vectors[dim][n.pair_id] = n.vector.values;
            }
            int k = std::min<int>(cfg.diff_k, static_cast<int>(vecs.size()));
            auto assignment =
                kmeans(vecs, ids, k, derive_seed(cfg.seed, "diffmap-" + name));
            auto scored = score_clusters(assignment, nodes);
            json mj;
            mj["k"] = k;
            mj["inertia"] = assignment.inertia;
            mj["clusters"] = json::array();
            for (const auto& sc : scored)
                mj["clusters"].push_back(json{{"cluster_index", sc.cluster_index},
                                              {"members", sc.member_pair_ids},
                                              {"intra", sc.intra},
                                              {"inter", sc.inter},
                                              {"combined_score", sc.combined_score}});
            clusters_doc["difference_maps"][name] = std::move(mj);
            scored_per_map.push_back(std::move(scored));
        }
        auto selected = select_top_clusters(scored_per_map, cfg.k_top);
        std::map<std::string, const PreferencePair*> by_id;
        for (const auto& p : train) by_id[p.id] = &p;
        clusters_doc["selected_clusters"] = json::array();
        for (const auto& sc : selected) {
            auto triplets =
                extract_triplets(sc, node_vectors.at(sc.map_id),
                                 cfg.n_triplets_per_cluster,
                                 derive_seed(cfg.seed, "triplets"));
            json sel;
            sel["map"] = to_string(sc.map_id);
            sel["cluster_index"] = sc.cluster_index;
            sel["combined_score"] = sc.combined_score;
            sel["triplets"] = json::array();
            for (const auto& t : triplets) {
                sel["triplets"].push_back(
                    json{{"pair_ids", t.pair_ids}, {"compactness", t.compactness}});
                std::array<PreferencePair, 3> triple;
                for (int i = 0; i < 3; ++i) {
                    auto it = by_id.find(t.pair_ids[static_cast<std::size_t>(i)]);
                    if (it == by_id.end())
                        throw ValidationError("triplet references unknown pair " +
                                              t.pair_ids[static_cast<std::size_t>(i)]);
                    triple[static_cast<std::size_t>(i)] = *it->second;
                }
                try {
                    auto cs = generate_candidates_triplet(triple, sc.map_id, *generator,
                                                          cfg.n_per_triplet, templates);
                    candidates.insert(candidates.end(), cs.begin(), cs.end());
                } catch (const ProviderError& e) {
                    std::cerr << "warning: triplet generation failed, continuing: "
                              << e.what() << "\n";
                }
            }
            clusters_doc["selected_clusters"].push_back(std::move(sel));
        }
    } else {
        GenerationMode mode = GenerationMode::baseline;
        if (cfg.variant == Variant::improved1) mode = GenerationMode::generalizing;
        if (cfg.variant == Variant::scored) mode = GenerationMode::scored;
        std::vector<std::vector<PrincipleCandidate>> per_pair(train.size());
        bounded_parallel_for(train.size(), cfg.max_inflight, [&](std::size_t i) {
            try {
                per_pair[i] = generate_candidates_single(train[i], mode, *generator,
                                                         cfg.n_per_pair, templates);
            } catch (const ProviderError& e) {
                std::cerr << "warning: generation failed for pair " << train[i].id
                          << ", continuing: " << e.what() << "\n";
            }
        });
        for (auto& cs : per_pair)
            candidates.insert(candidates.end(), cs.begin(), cs.end());
    }
    if (candidates.empty())
        throw ValidationError("generation produced no candidates");
    save_candidates(dir + "/candidates.jsonl", candidates);
    manifest.artifact("candidates", dir + "/candidates.jsonl");
    manifest.stage_done("generation", gen_clock.ms());

    // Stage 2 + 3: principle clustering and subsampling.
    StageClock cluster_clock;
    auto embedder = factory.embedding(cfg.embedding_provider);
    std::vector<std::string> texts;
    for (const auto& c : candidates) texts.push_back(c.text);
    auto embedded = embedder->embed(texts);
    std::vector<EmbeddingVector> vecs = embedded;
    std::vector<std::string> cand_ids;
    std::map<std::string, Eigen::VectorXd> cand_vectors;
    for (std::size_t i = 0; i < candidates.size(); ++i) {
        cand_ids.push_back(candidates[i].id);
        cand_vectors[candidates[i].id] = embedded[i].values;
    }
    int k = cfg.principle_k > 0 ? cfg.principle_k : cfg.filter.max_size * 3;
    k = std::min<int>(k, static_cast<int>(candidates.size()));
    auto assignment =
        kmeans(vecs, cand_ids, k, derive_seed(cfg.seed, "principle-clustering"));
    std::vector<std::vector<std::string>> members(static_cast<std::size_t>(k));
    for (const auto& [id, label] : assignment.labels)
        members[static_cast<std::size_t>(label)].push_back(id);
    for (auto& m : members) std::sort(m.begin(), m.end());

    std::vector<std::string> selected_ids;
    clusters_doc["principle_clusters"] = json::array();
    for (int c = 0; c < k; ++c) {
        const auto& mem = members[static_cast<std::size_t>(c)];
        std::string pick;
        if (cfg.variant == Variant::baseline) {
            pick = subsample_random(
                mem, derive_seed(cfg.seed, "subsample-" + std::to_string(c)));
        } else {
            pick = subsample_centroid(mem, cand_vectors,
                                      assignment.centroids[static_cast<std::size_t>(c)]);
        }
        selected_ids.push_back(pick);
        clusters_doc["principle_clusters"].push_back(
            json{{"cluster_index", c}, {"members", mem}, {"selected", pick}});
    }
    {
        std::ofstream out(dir + "/clusters.json");
        out << clusters_doc.dump(2) << "\n";
    }
    manifest.artifact("clusters", dir + "/clusters.json");
    manifest.stage_done("clustering", cluster_clock.ms());

    // Stage 4: voting over the train split.
    StageClock vote_clock;
    std::map<std::string, const PrincipleCandidate*> cand_by_id;
    for (const auto& c : candidates) cand_by_id[c.id] = &c;
    std::vector<const PrincipleCandidate*> kept;
    {
        std::set<std::string> seen;
        for (const auto& id : selected_ids)
            if (seen.insert(id).second) kept.push_back(cand_by_id.at(id));
    }
    auto judge = factory.completion(cfg.judge_provider);
    std::vector<VoteRecord> votes(kept.size() * train.size());
    bounded_parallel_for(votes.size(), cfg.max_inflight, [&](std::size_t flat) {
        const auto& cand = *kept[flat / train.size()];
        const auto& pair = train[flat % train.size()];
        votes[flat] = vote(cand, pair, *judge, templates);
    });
    std::sort(votes.begin(), votes.end(), [](const VoteRecord& a, const VoteRecord& b) {
        if (a.principle_id != b.principle_id) return a.principle_id < b.principle_id;
        return a.pair_id < b.pair_id;
    });
    save_votes(dir + "/votes.jsonl", votes);
    manifest.artifact("votes", dir + "/votes.jsonl");
    manifest.stage_done("voting", vote_clock.ms());

    // Stage 5: aggregation and filtering.
    StageClock filter_clock;
    auto stats = aggregate_votes(votes);
    std::map<std::string, std::string> kept_texts;
    for (const auto* c : kept) kept_texts[c->id] = c->text;
    Constitution constitution = filter_constitution(stats, kept_texts, cfg.filter);
    constitution.run_id = run_id;
    constitution.dataset_id = cfg.dataset_id;
    constitution.variant = to_string(cfg.variant);
    save_constitution(dir + "/constitution.json", constitution, cfg.config_hash());
    manifest.artifact("constitution", dir + "/constitution.json");
    manifest.stage_done("filtering", filter_clock.ms());
    return constitution;
}

namespace {

std::string report_cassette_id(const RunConfig& cfg) {
    if (cfg.cache_mode == CacheMode::off) return "";
    if (!cfg.cassette_path.empty()) return cfg.cassette_path;
    return "cassettes/" + cfg.effective_run_id() + ".jsonl";
}

Constitution load_eval_constitution(const RunConfig& cfg) {
    std::string path = cfg.constitution_path;
    if (path.empty())
        path = cfg.run_dir + "/" + cfg.effective_run_id() + "/constitution.json";
    return load_constitution(path);
}

}  // namespace

std::string run_eval_regen(const RunConfig& cfg) {
    if (cfg.test_path.empty()) throw ValidationError("eval regen: test_path is required");
    if (cfg.judge_provider.empty())
        throw ValidationError("eval regen: judge_provider is required");
    const std::string dir = cfg.run_dir + "/" + cfg.effective_run_id();
    fs::create_directories(dir);
    TemplateStore templates = TemplateStore::load(cfg.prompt_dir);
    ProviderFactory factory(cfg);
    auto judge = factory.completion(cfg.judge_provider);
    auto constitution = load_eval_constitution(cfg);
    auto test = load_pairs(cfg.test_path, PairSchema::plain);
    auto report = debiased_accuracy(test, constitution, *judge, templates,
                                    cfg.max_inflight);

    json j;
    j["accuracy"] = report.accuracy;
    j["n_pairs"] = test.size();
    j["config_hash"] = cfg.config_hash();
    j["cassette"] = report_cassette_id(cfg);
    j["per_pair"] = json::array();
    for (std::size_t i = 0; i < report.decisions.size(); ++i) {
        const auto& [fwd, flp] = report.decisions[i];
        j["per_pair"].push_back(json{
            {"pair_id", fwd.pair_id},
            {"forward", json{{"choice", choice_to_string(fwd.choice)}, {"score", fwd.score}}},
            {"flipped", json{{"choice", choice_to_string(flp.choice)}, {"score", flp.score}}},
            {"mean", 0.5 * (fwd.score + flp.score)},
            {"note", report.notes[i]}});
    }
    std::string path = dir + "/eval_regen.json";
    std::ofstream out(path);
    out << j.dump(2) << "\n";
    return path;
}

std::string run_eval_similarity(const RunConfig& cfg) {
    if (cfg.ground_truth_path.empty())
        throw ValidationError("eval similarity: ground_truth_path is required");
    if (cfg.judge_provider.empty())
        throw ValidationError("eval similarity: judge_provider is required");
    const std::string dir = cfg.run_dir + "/" + cfg.effective_run_id();
    fs::create_directories(dir);
    TemplateStore templates = TemplateStore::load(cfg.prompt_dir);
    ProviderFactory factory(cfg);
    auto judge = factory.completion(cfg.judge_provider);
    auto constitution = load_eval_constitution(cfg);
    auto truth = load_principles(cfg.ground_truth_path);
    std::vector<std::string> truth_texts;
    for (const auto& t : truth) truth_texts.push_back(t.statement);

    auto matrix = similarity_matrix(constitution.principles, truth_texts, *judge,
                                    templates, cfg.max_inflight);
    auto match = optimal_match(matrix);

    json j;
    j["mean_score"] = match.mean_score;
    j["total_score"] = match.total_score;
    j["config_hash"] = cfg.config_hash();
    j["cassette"] = report_cassette_id(cfg);
    j["matrix"] = json::array();
    for (Eigen::Index r = 0; r < matrix.cells.rows(); ++r) {
        json row = json::array();
        for (Eigen::Index c = 0; c < matrix.cells.cols(); ++c)
            row.push_back(matrix.cells(r, c));
        j["matrix"].push_back(row);
    }
    j["matching"] = json::array();
    for (const auto& [r, c] : match.matching)
        j["matching"].push_back(json{{"candidate", r}, {"ground_truth", c}});
    std::string path = dir + "/eval_similarity.json";
    std::ofstream out(path);
    out << j.dump(2) << "\n";
    return path;
}

std::string run_eval_winrate(const RunConfig& cfg) {
    if (cfg.instructions_path.empty())
        throw ValidationError("eval winrate: instructions_path is required");
    if (cfg.base_provider.empty() || cfg.con_provider.empty())
        throw ValidationError("eval winrate: base_provider and con_provider are required");
    if (cfg.judge_provider.empty())
        throw ValidationError("eval winrate: judge_provider is required");
    const std::string dir = cfg.run_dir + "/" + cfg.effective_run_id();
    fs::create_directories(dir);
    TemplateStore templates = TemplateStore::load(cfg.prompt_dir);
    ProviderFactory factory(cfg);
    auto base = factory.completion(cfg.base_provider);
    auto con = factory.completion(cfg.con_provider);
    auto judge = factory.completion(cfg.judge_provider);
    auto constitution = load_eval_constitution(cfg);

    std::vector<std::string> instructions;
    {
        std::ifstream in(cfg.instructions_path);
        if (!in)
            throw ValidationError("cannot open instructions: " + cfg.instructions_path);
        std::string line;
        while (std::getline(in, line))
            if (!line.empty()) instructions.push_back(line);
    }

    auto result = win_rate_eval(instructions, *base, *con, *judge, constitution,
                                templates, cfg.max_inflight);
    json j;
    j["n_total"] = result.report.n_total;
    j["n_excluded"] = result.report.n_excluded;
    j["win_rate"] = result.report.win_rate;
    j["std_error"] = result.report.std_error;
    j["token_diff_median"] = result.report.token_diff_median;
    j["config_hash"] = cfg.config_hash();
    j["cassette"] = report_cassette_id(cfg);
    j["per_instruction"] = json::array();
    for (const auto& d : result.details)
        j["per_instruction"].push_back(json{{"instruction", d.instruction},
                                            {"excluded", d.excluded},
                                            {"reason", d.exclusion_reason},
                                            {"con_wins", d.con_wins},
                                            {"token_diff", d.token_diff}});
    std::string path = dir + "/eval_winrate.json";
    std::ofstream out(path);
    out << j.dump(2) << "\n";
    return path;
}

}  // namespace icai
