// Acceptance gate: one pass/fail line per criterion, nonzero exit on any
// failure. Everything runs offline; the only sockets involved belong to a
// loopback stub server used to record regression cassettes when they are
// missing from tests/cassettes/. With the cassettes present (they ship with
// the repository) every criterion replays hermetically.

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <limits>
#include <numeric>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "icai/clustering.hpp"
#include "icai/dataset.hpp"
#include "icai/error.hpp"
#include "icai/evaluation.hpp"
#include "icai/generation.hpp"
#include "icai/mock.hpp"
#include "icai/pipeline.hpp"
#include "icai/rng.hpp"
#include "icai/selection.hpp"
#include "testutil.hpp"

// After the Eigen-including headers: httplib's macros clash with Eigen.
#include "httplib.h"

namespace fs = std::filesystem;
using namespace icai;
using nlohmann::json;

namespace {

// ---------------------------------------------------------------------------
// Reporting

struct Gate {
    int failures = 0;

    void criterion(int index, const std::string& name,
                   const std::function<void(std::vector<std::string>&)>& body) {
        std::vector<std::string> problems;
        try {
            body(problems);
        } catch (const std::exception& e) {
            problems.push_back(std::string("exception: ") + e.what());
        }
        if (problems.empty()) {
            std::cout << "[PASS] criterion " << index << ": " << name << "\n";
        } else {
            ++failures;
            std::cout << "[FAIL] criterion " << index << ": " << name << " — "
                      << problems.front();
            if (problems.size() > 1)
                std::cout << " (+" << problems.size() - 1 << " more)";
            std::cout << "\n";
        }
        std::cout.flush();
    }
};

void expect(std::vector<std::string>& problems, bool ok, const std::string& msg) {
    if (!ok) problems.push_back(msg);
}

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

// ---------------------------------------------------------------------------
// Regression corpus: fixed texts whose judged scores are shipped as cassettes.

const std::string kSourceDir = ICAI_SOURCE_DIR;
const std::string kCassetteDir = kSourceDir + "/tests/cassettes";
const std::string kPromptDir = kSourceDir + "/prompts";

std::vector<std::string> ground_truth_statements() {
    return {
        "Choose the response that answers the question completely.",
        "Choose the response that is factually accurate.",
        "Choose the response that is concise and avoids filler.",
        "Choose the response that maintains a respectful tone.",
        "Choose the response that follows the requested format.",
    };
}

std::vector<std::string> baseline_constitution() {
    return {
        "Select the response that covers every part of the question.",
        "Select the response that states correct facts.",
        "Select the response that gets to the point quickly.",
        "Select the response that stays polite throughout.",
        "Select the response that respects the requested format.",
    };
}

std::vector<std::string> improved1_constitution() {
    return {
        "Select the response that addresses the whole question.",
        "Select the response that avoids factual errors.",
        "Select the response that is succinct.",
        "Select the response that remains courteous.",
        "Select the response that follows the specified format.",
    };
}

std::vector<std::string> improved2_constitution() {
    return {
        "Select the response that fully resolves the user's question.",
        "Select the response whose claims are accurate.",
        "Select the response that is brief and free of padding.",
        "Select the response that keeps a courteous tone.",
        "Select the response that matches the format the user asked for.",
    };
}

std::vector<std::string> orthogonal_constitution() {
    auto c = load_constitution(kSourceDir + "/constitutions/orthogonal.json");
    return c.principles;
}

// Diagonal similarity scores per run; off-diagonal cells score 1, so the
// optimal matching is the diagonal and the mean is sum/5.
struct SimilarityRun {
    std::string name;
    std::vector<std::string> candidates;
    std::vector<int> diagonal;
    double expected_mean;
};

std::vector<SimilarityRun> similarity_runs() {
    return {
        {"ground_truth", ground_truth_statements(), {7, 6, 6, 5, 5}, 5.8},
        {"baseline", baseline_constitution(), {5, 5, 5, 5, 5}, 5.0},
        {"orthogonal", orthogonal_constitution(), {3, 2, 2, 2, 2}, 2.2},
        {"improved2", improved2_constitution(), {6, 6, 5, 5, 5}, 5.4},
    };
}

// Regeneration schedules: (pairs judged right in both orders, pairs judged
// FIRST in both orders). Remaining pairs are judged wrong in both orders.
struct RegenRun {
    std::string name;
    std::vector<std::string> constitution;
    int n_correct;
    int n_half;
    double expected_accuracy;
};

std::vector<RegenRun> regen_runs() {
    return {
        {"baseline", baseline_constitution(), 44, 4, 0.92},
        {"improved1", improved1_constitution(), 47, 0, 0.94},
        {"improved2", improved2_constitution(), 46, 1, 0.93},
    };
}

constexpr int kRegenPairs = 50;
constexpr int kWinrateInstructions = 100;
constexpr int kWinrateConWins = 43;
const std::set<int> kWinrateDisagree{7, 29, 53, 76};
const std::set<int> kWinrateAbstain{11, 37, 61, 89};

enum class WrVerdict { con, base, disagree, abstain };

WrVerdict winrate_verdict(int i) {
    if (kWinrateDisagree.count(i)) return WrVerdict::disagree;
    if (kWinrateAbstain.count(i)) return WrVerdict::abstain;
    int kept = 0;
    for (int j = 0; j < i; ++j)
        if (!kWinrateDisagree.count(j) && !kWinrateAbstain.count(j)) ++kept;
    return kept < kWinrateConWins ? WrVerdict::con : WrVerdict::base;
}

std::string wr_id(int i) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "wr-%03d", i);
    return buf;
}

std::string rp_id(int i) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "rp-%02d", i);
    return buf;
}

std::string winrate_con_response(int i) {
    return "Constitution reply " + wr_id(i) + " extra pad.";  // 5 tokens
}

std::string winrate_base_response(int i) {
    std::string s = wr_id(i) + " base";  // 2 + i tokens -> diff 3 - i, median -46.5
    for (int k = 0; k < i; ++k) s += " pad";
    return s;
}

// ---------------------------------------------------------------------------
// Loopback stub: scripted judgments and generations behind an
// OpenAI-compatible endpoint, used only to record cassettes.

std::string between(const std::string& text, const std::string& begin,
                    const std::string& end) {
    std::size_t b = text.find(begin);
    if (b == std::string::npos) return "";
    b += begin.size();
    std::size_t e = text.find(end, b);
    if (e == std::string::npos) e = text.size();
    std::string s = text.substr(b, e - b);
    while (!s.empty() && (s.back() == '\n' || s.back() == ' ')) s.pop_back();
    return s;
}

std::optional<int> parse_wr_index(const std::string& text) {
    std::size_t p = text.find("wr-");
    if (p == std::string::npos || p + 6 > text.size()) return std::nullopt;
    return std::stoi(text.substr(p + 3, 3));
}

std::string stub_similarity(const std::string& prompt) {
    std::string candidate =
        between(prompt, "Candidate principle:\n", "\n\nReference principle:");
    std::string reference = between(prompt, "Reference principle:\n", "\n\nReply with");
    auto truth = ground_truth_statements();
    int ref = -1;
    for (std::size_t j = 0; j < truth.size(); ++j)
        if (truth[j] == reference) ref = static_cast<int>(j);
    for (const auto& run : similarity_runs())
        for (std::size_t i = 0; i < run.candidates.size(); ++i)
            if (run.candidates[i] == candidate)
                return static_cast<int>(i) == ref
                           ? std::to_string(run.diagonal[i])
                           : "1";
    return "1";
}

std::string stub_regen_judge(const std::string& prompt) {
    std::string instruction = between(prompt, "Instruction:\n", "\n\nResponse A:");
    std::size_t p = instruction.find("rp-");
    int pair = std::stoi(instruction.substr(p + 3, 2));
    std::string first = between(prompt, "Response A:\n", "\n\nResponse B:");
    bool chosen_is_first = first.rfind("Good response", 0) == 0;
    for (const auto& run : regen_runs()) {
        if (prompt.find(run.constitution[0]) == std::string::npos) continue;
        if (pair < run.n_correct) return chosen_is_first ? "FIRST" : "SECOND";
        if (pair < run.n_correct + run.n_half) return "FIRST";
        return chosen_is_first ? "SECOND" : "FIRST";
    }
    return "NONE";
}

std::string stub_winrate_judge(const std::string& prompt) {
    std::string first = between(prompt, "Response A:\n", "\n\nResponse B:");
    bool con_is_first = first.rfind("Constitution reply", 0) == 0;
    std::string instruction = between(prompt, "Instruction:\n", "\n\nResponse A:");
    auto idx = parse_wr_index(instruction);
    if (!idx)  // non-regression harness runs: the constitution response wins
        return con_is_first ? "FIRST" : "SECOND";
    switch (winrate_verdict(*idx)) {
        case WrVerdict::abstain:
            return "NONE";
        case WrVerdict::disagree:
            return "FIRST";  // a purely positional judge disagrees with itself
        case WrVerdict::con:
            return con_is_first ? "FIRST" : "SECOND";
        case WrVerdict::base:
            return con_is_first ? "SECOND" : "FIRST";
    }
    return "NONE";
}

std::string stub_generation(const std::string& prompt) {
    const bool con =
        prompt.rfind("Consider that your reply will be evaluated", 0) == 0;
    std::string instruction =
        con ? prompt.substr(prompt.rfind("Instruction:\n") + 13) : prompt;
    auto idx = parse_wr_index(instruction);
    if (idx) return con ? winrate_con_response(*idx) : winrate_base_response(*idx);
    return (con ? "Constitution reply for: " : "Base reply for: ") + instruction;
}

std::string stub_reply(const std::string& prompt) {
    if (prompt.find("single integer from 1 to 10") != std::string::npos)
        return stub_similarity(prompt);
    if (prompt.find("aligns better with the constitution") != std::string::npos)
        return stub_regen_judge(prompt);
    if (prompt.find("Which response is better?") != std::string::npos)
        return stub_winrate_judge(prompt);
    return stub_generation(prompt);
}

class StubServer {
public:
    StubServer() {
        server_.Post("/v1/chat/completions",
                     [](const httplib::Request& req, httplib::Response& res) {
                         auto body = json::parse(req.body);
                         std::string prompt = body["messages"][0]["content"];
                         json out{{"choices",
                                   json::array({json{
                                       {"message", json{{"content", stub_reply(prompt)}}}}})}};
                         res.set_content(out.dump(), "application/json");
                     });
        port_ = server_.bind_to_any_port("127.0.0.1");
        thread_ = std::thread([this] { server_.listen_after_bind(); });
        server_.wait_until_ready();
    }
    ~StubServer() {
        server_.stop();
        thread_.join();
    }
    int port() const { return port_; }

private:
    httplib::Server server_;
    std::thread thread_;
    int port_ = 0;
};

// ---------------------------------------------------------------------------
// Regression harness: inputs are rebuilt from the constants above on every
// run; judged responses come from the shipped cassettes (recorded via the
// stub on first use).

struct RegressionReports {
    json winrate;
    std::map<std::string, json> regen;       // by run name
    std::map<std::string, json> similarity;  // by run name
};

struct RegressionHarness {
    std::string dir = testutil::fresh_dir("acc-regression");
    std::string registry_path = dir + "/providers.json";
    std::string pairs_path = dir + "/regen_pairs.jsonl";
    std::string truth_path = dir + "/ground_truth.json";
    std::string instructions_path = dir + "/instructions.txt";
    std::optional<RegressionReports> reports;
    std::string error;

    void write_registry(int port) {
        json registry = json::array();
        auto entry = [&](const std::string& id, const std::string& model) {
            registry.push_back(json{{"provider_id", id},
                                    {"kind", "openai-compatible"},
                                    {"base_url", "http://127.0.0.1:" + std::to_string(port)},
                                    {"model", model}});
        };
        entry("judge", "judge-v1");
        entry("base-gen", "llama-base");
        entry("con-gen", "llama-con");
        std::ofstream(registry_path) << registry.dump(2) << "\n";
    }

    std::string constitution_file(const std::string& name,
                                  const std::vector<std::string>& principles) {
        Constitution c;
        c.principles = principles;
        c.variant = name;
        c.dataset_id = "regression";
        std::string path = dir + "/constitution_" + name + ".json";
        save_constitution(path, c, "regression");
        return path;
    }

    void write_inputs() {
        std::vector<PreferencePair> pairs;
        for (int i = 0; i < kRegenPairs; ++i) {
            PreferencePair p;
            p.id = rp_id(i);
            p.instruction = "Evaluate reply quality for case " + rp_id(i) + ".";
            p.chosen = "Good response " + rp_id(i) + " with helpful detail.";
            p.rejected = "Poor response " + rp_id(i) + " missing the point.";
            pairs.push_back(p);
        }
        save_pairs(pairs_path, pairs);

        std::vector<GroundTruthPrinciple> truth;
        auto statements = ground_truth_statements();
        for (std::size_t i = 0; i < statements.size(); ++i)
            truth.push_back({"gt-" + std::to_string(i), statements[i],
                             "Rewrite the response so that it satisfies: " + statements[i]});
        save_principles(truth_path, truth);

        std::ofstream ins(instructions_path);
        for (int i = 0; i < kWinrateInstructions; ++i)
            ins << "Answer support ticket " << wr_id(i) << "." << "\n";
    }

    RunConfig base_config(const std::string& run_id, const std::string& cassette) {
        RunConfig cfg;
        cfg.providers_path = registry_path;
        cfg.judge_provider = "judge";
        cfg.prompt_dir = kPromptDir;
        cfg.run_dir = dir + "/runs";
        cfg.run_id = run_id;
        cfg.cassette_path = kCassetteDir + "/" + cassette + ".jsonl";
        cfg.max_inflight = 4;
        return cfg;
    }

    // Runs fn in record mode if the cassette is absent, then in replay mode;
    // returns the parsed replayed report.
    json run_with_cassette(RunConfig cfg,
                           const std::function<std::string(const RunConfig&)>& fn) {
        if (!fs::exists(cfg.cassette_path)) {
            cfg.cache_mode = CacheMode::record;
            fn(cfg);
        }
        cfg.cache_mode = CacheMode::replay;
        std::ifstream in(fn(cfg));
        return json::parse(in);
    }

    const RegressionReports& ensure(const StubServer& stub) {
        if (reports) return *reports;
        if (!error.empty()) throw ValidationError(error);
        try {
            fs::create_directories(kCassetteDir);
            write_registry(stub.port());
            write_inputs();
            RegressionReports out;

            for (const auto& run : regen_runs()) {
                auto cfg = base_config("reg-regen-" + run.name, "regen_" + run.name);
                cfg.test_path = pairs_path;
                cfg.constitution_path = constitution_file(run.name, run.constitution);
                out.regen[run.name] = run_with_cassette(cfg, run_eval_regen);
            }
            for (const auto& run : similarity_runs()) {
                auto cfg =
                    base_config("reg-sim-" + run.name, "similarity_" + run.name);
                cfg.ground_truth_path = truth_path;
                cfg.constitution_path =
                    constitution_file("sim_" + run.name, run.candidates);
                out.similarity[run.name] = run_with_cassette(cfg, run_eval_similarity);
            }
            {
                auto cfg = base_config("reg-winrate", "winrate_base_con");
                cfg.instructions_path = instructions_path;
                cfg.base_provider = "base-gen";
                cfg.con_provider = "con-gen";
                cfg.constitution_path =
                    constitution_file("winrate", baseline_constitution());
                out.winrate = run_with_cassette(cfg, run_eval_winrate);
            }
            reports = std::move(out);
        } catch (const std::exception& e) {
            error = e.what();
            throw;
        }
        return *reports;
    }
};

// ---------------------------------------------------------------------------
// KMeans oracle helpers (criterion 5).

EmbeddingVector vec2(double x, double y) {
    EmbeddingVector v;
    v.model_id = "acc-2d";
    v.values = Eigen::Vector2d(x, y);
    return v;
}

double labeling_inertia(const std::vector<EmbeddingVector>& items,
                        const std::vector<int>& labels, int k) {
    std::vector<Eigen::VectorXd> sums(static_cast<std::size_t>(k),
                                      Eigen::VectorXd::Zero(2));
    std::vector<int> counts(static_cast<std::size_t>(k), 0);
    for (std::size_t i = 0; i < items.size(); ++i) {
        sums[static_cast<std::size_t>(labels[i])] += items[i].values;
        ++counts[static_cast<std::size_t>(labels[i])];
    }
    for (int c = 0; c < k; ++c)
        if (counts[static_cast<std::size_t>(c)] == 0) return -1.0;
    double s = 0.0;
    for (std::size_t i = 0; i < items.size(); ++i) {
        Eigen::VectorXd centroid = sums[static_cast<std::size_t>(labels[i])] /
                                   counts[static_cast<std::size_t>(labels[i])];
        s += (items[i].values - centroid).squaredNorm();
    }
    return s;
}

}  // namespace

int main() {
    Gate gate;
    StubServer stub;
    RegressionHarness regression;
    auto world = testutil::build_world("acc-world", 30, 10);
    TemplateStore templates = TemplateStore::load(kPromptDir);

    // 1. Synthetic fixture end to end: improved variants recover a
    //    five-principle constitution the mock judge scores >= 0.90; an
    //    irrelevant constitution scores chance.
    gate.criterion(1, "synthetic end-to-end constitution recovery", [&](auto& p) {
        auto t0 = std::chrono::steady_clock::now();
        MockOracleProvider judge(world.fixture);
        for (const std::string variant : {"improved1", "improved2"}) {
            auto cfg_path = testutil::write_run_config(
                world, variant,
                json{{"cache_mode", "record"},
                     {"cassette_path", world.dir + "/e2e-" + variant + ".jsonl"}});
            auto con = run_pipeline(RunConfig::from_json_file(cfg_path));
            expect(p, con.principles.size() == 5,
                   variant + ": expected 5 principles, got " +
                       std::to_string(con.principles.size()));
            auto rep = debiased_accuracy(world.test, con, judge, templates);
            expect(p, rep.accuracy >= 0.90,
                   variant + ": regeneration accuracy " + std::to_string(rep.accuracy));
        }
        Constitution orthogonal;
        orthogonal.principles = orthogonal_constitution();
        auto rep = debiased_accuracy(world.test, orthogonal, judge, templates);
        expect(p, std::abs(rep.accuracy - 0.5) <= 0.05,
               "orthogonal accuracy " + std::to_string(rep.accuracy));
        double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
                          .count();
        expect(p, secs < 60.0, "runtime " + std::to_string(secs) + "s");
    });

    // 2. Difference-map clusters and their triplets are label-pure.
    gate.criterion(2, "cluster and triplet purity on the fixture", [&](auto& p) {
        std::map<std::string, std::string> planted;
        for (const auto& pair : world.fixture.pairs) planted[pair.id] = pair.rule_id;

        std::vector<std::vector<ScoredCluster>> scored_per_map;
        std::map<Dimension, std::map<std::string, Eigen::VectorXd>> vectors_per_map;
        const std::map<Dimension, std::string> models{
            {Dimension::content, "emb-content"},
            {Dimension::style, "emb-style"},
            {Dimension::sentiment, "emb-sentiment"}};
        for (const auto& [dim, model] : models) {
            MockEmbeddingProvider embedder(world.fixture, model);
            auto nodes = build_difference_map(world.train, embedder, dim);
            std::vector<EmbeddingVector> items;
            std::vector<std::string> ids;
            for (const auto& n : nodes) {
                items.push_back(n.vector);
                ids.push_back(n.pair_id);
                vectors_per_map[dim][n.pair_id] = n.vector.values;
            }
            auto asg = kmeans(items, ids, 5, derive_seed(7, "diffmap-" + to_string(dim)));
            scored_per_map.push_back(score_clusters(asg, nodes));
        }
        auto top = select_top_clusters(scored_per_map, 5);
        expect(p, top.size() == 5, "expected 5 selected clusters, got " +
                                       std::to_string(top.size()));
        for (const auto& cluster : top) {
            std::map<std::string, int> counts;
            for (const auto& id : cluster.member_pair_ids) ++counts[planted.at(id)];
            int majority = 0;
            for (const auto& [rule, n] : counts) majority = std::max(majority, n);
            double purity = static_cast<double>(majority) /
                            static_cast<double>(cluster.member_pair_ids.size());
            expect(p, purity >= 0.95,
                   "cluster label purity " + std::to_string(purity));
            auto triplets = extract_triplets(cluster, vectors_per_map[cluster.map_id], 2,
                                             derive_seed(7, "triplets"));
            expect(p, !triplets.empty(), "cluster produced no triplets");
            for (const auto& t : triplets)
                expect(p, triplet_purity(t, planted) >= 2.0 / 3.0 - 1e-12,
                       "triplet purity below 2/3");
        }
    });

    // 3. Order debiasing makes a purely positional judge score exactly 0.5.
    gate.criterion(3, "debiased accuracy of a slot-biased judge is 0.5000", [&](auto& p) {
        Constitution con;
        con.principles = {"Select the response that is better."};
        for (int n : {1, 2, 17}) {
            std::vector<PreferencePair> pairs;
            for (int i = 0; i < n; ++i) {
                PreferencePair pr;
                pr.id = "b" + std::to_string(i);
                pr.instruction = "instruction " + std::to_string(i);
                pr.chosen = "good " + std::to_string(i);
                pr.rejected = "bad " + std::to_string(i);
                pairs.push_back(pr);
            }
            ScriptedProvider always_first("FIRST");
            expect(p, debiased_accuracy(pairs, con, always_first, templates).accuracy == 0.5,
                   "always-FIRST judge, n=" + std::to_string(n));
            ScriptedProvider always_second("SECOND");
            expect(p,
                   debiased_accuracy(pairs, con, always_second, templates).accuracy == 0.5,
                   "always-SECOND judge, n=" + std::to_string(n));
        }
    });

    // 4. Hungarian matching equals brute force on 1,000 random matrices.
    gate.criterion(4, "optimal_match equals brute-force permutation maximum",
                   [&](auto& p) {
        int mismatches = 0;
        for (std::uint64_t inst = 0; inst < 1000; ++inst) {
            Rng rng(derive_seed(4400, "match-" + std::to_string(inst)));
            const int m = 1 + static_cast<int>(rng.uniform_index(6));
            const int n = 1 + static_cast<int>(rng.uniform_index(6));
            SimilarityMatrix mat;
            mat.cells.resize(m, n);
            for (int r = 0; r < m; ++r)
                for (int c = 0; c < n; ++c)
                    mat.cells(r, c) = 1.0 + static_cast<double>(rng.uniform_index(10));

            const int N = std::max(m, n);
            std::vector<int> perm(static_cast<std::size_t>(N));
            std::iota(perm.begin(), perm.end(), 0);
            double best = -1.0;
            do {
                double total = 0.0;
                for (int r = 0; r < m; ++r)
                    if (perm[static_cast<std::size_t>(r)] < n)
                        total += mat.cells(r, perm[static_cast<std::size_t>(r)]);
                best = std::max(best, total);
            } while (std::next_permutation(perm.begin(), perm.end()));

            if (std::abs(optimal_match(mat).total_score - best) > 1e-9) ++mismatches;
        }
        expect(p, mismatches == 0, std::to_string(mismatches) + " mismatches of 1000");
    });

    // 5. KMeans dominates random labelings on structured 2-D instances, with
    //    a non-increasing trace and deterministic output.
    gate.criterion(5, "kmeans quality, monotone trace, determinism", [&](auto& p) {
        for (std::uint64_t inst = 0; inst < 200; ++inst) {
            Rng rng(derive_seed(5500, "inst-" + std::to_string(inst)));
            const int k = 2 + static_cast<int>(rng.uniform_index(3));
            const std::size_t n = 3 * static_cast<std::size_t>(k) + rng.uniform_index(12);
            std::vector<EmbeddingVector> centers;
            for (int c = 0; c < k; ++c)
                centers.push_back(
                    vec2(8.0 * static_cast<double>(c), 3.0 * rng.gaussian()));
            std::vector<EmbeddingVector> items;
            std::vector<std::string> ids;
            for (std::size_t i = 0; i < n; ++i) {
                const auto& c = centers[i % static_cast<std::size_t>(k)];
                items.push_back(vec2(c.values(0) + 0.5 * rng.gaussian(),
                                     c.values(1) + 0.5 * rng.gaussian()));
                ids.push_back("n" + std::to_string(i));
            }

            auto got = kmeans(items, ids, k, derive_seed(5501, std::to_string(inst)));
            double best_random = std::numeric_limits<double>::infinity();
            Rng lrng(derive_seed(5502, std::to_string(inst)));
            for (int trial = 0; trial < 1000; ++trial) {
                std::vector<int> labels(n);
                for (auto& l : labels)
                    l = static_cast<int>(lrng.uniform_index(static_cast<std::size_t>(k)));
                double s = labeling_inertia(items, labels, k);
                if (s >= 0.0) best_random = std::min(best_random, s);
            }
            if (got.inertia > best_random + 1e-9) {
                expect(p, false,
                       "instance " + std::to_string(inst) + ": inertia " +
                           std::to_string(got.inertia) + " > best random " +
                           std::to_string(best_random));
                break;
            }
            for (std::size_t t = 1; t < got.inertia_trace.size(); ++t)
                if (got.inertia_trace[t] > got.inertia_trace[t - 1] + 1e-9) {
                    expect(p, false, "inertia trace increased");
                    break;
                }
            auto again = kmeans(items, ids, k, derive_seed(5501, std::to_string(inst)));
            if (again.labels != got.labels || again.inertia != got.inertia) {
                expect(p, false, "nondeterministic under a fixed seed");
                break;
            }
        }
    });

    // 6. Reported statistics: binomial standard error and exclusion counts.
    gate.criterion(6, "win-rate statistics: std error and exclusions", [&](auto& p) {
        double se = binomial_std_error(0.4674, 92);
        expect(p, std::abs(se - 0.0520) <= 0.0005,
               "binomial SE(0.4674, 92) = " + std::to_string(se));
        const auto& reports = regression.ensure(stub);
        expect(p, reports.winrate.at("n_total") == 100,
               "n_total != 100 in the win-rate report");
        expect(p, reports.winrate.at("n_excluded") == 8,
               "n_excluded != 8 in the win-rate report");
        double reported = reports.winrate.at("std_error");
        expect(p, std::abs(reported - 0.0520) <= 0.0005,
               "reported std_error " + std::to_string(reported));
    });

    // 7. Semi-synthetic sampling: delta filter and delta-proportional weights.
    gate.criterion(7, "semi-synthetic delta filter and sampling weights", [&](auto& p) {
        std::vector<PreferencePair> rated;
        auto add = [&](int i, double hi, double lo) {
            PreferencePair pr;
            pr.id = "r" + std::to_string(i);
            pr.instruction = "i" + std::to_string(i);
            pr.chosen = "c" + std::to_string(i);
            pr.rejected = "j" + std::to_string(i);
            pr.chosen_score = hi;
            pr.rejected_score = lo;
            rated.push_back(pr);
        };
        int idx = 0;
        for (int i = 0; i < 4500; ++i) add(idx++, 5, 1);  // delta 4
        for (int i = 0; i < 4500; ++i) add(idx++, 3, 1);  // delta 2
        for (int i = 0; i < 1000; ++i) add(idx++, 2, 1);  // delta 1: ineligible
        std::set<std::string> delta4, delta2;
        for (const auto& pr : rated) {
            double d = *pr.chosen_score - *pr.rejected_score;
            if (d == 4) delta4.insert(pr.id);
            if (d == 2) delta2.insert(pr.id);
        }

        int violations = 0;
        for (std::uint64_t seed = 0; seed < 20; ++seed) {
            auto s = filter_and_sample_semisynthetic(rated, 2.0, 400, 100, seed);
            for (const auto& split : {s.train, s.test})
                for (const auto& pr : split)
                    if (*pr.chosen_score - *pr.rejected_score < 2.0) ++violations;
        }
        expect(p, violations == 0,
               std::to_string(violations) + " sampled pairs with delta < 2");

        int picked4 = 0, picked2 = 0;
        for (std::uint64_t seed = 0; seed < 10000; ++seed) {
            auto one = filter_and_sample_semisynthetic(rated, 2.0, 1, 0, seed);
            if (delta4.count(one.train[0].id)) ++picked4;
            if (delta2.count(one.train[0].id)) ++picked2;
        }
        double ratio = static_cast<double>(picked4) / static_cast<double>(picked2);
        expect(p, ratio >= 1.9 && ratio <= 2.1,
               "delta-4 : delta-2 frequency ratio " + std::to_string(ratio));
    });

    // 8. A recorded improved2 run replays to byte-identical artifacts.
    gate.criterion(8, "record/replay determinism of constitution and reports",
                   [&](auto& p) {
        auto w = testutil::build_world("acc-replay", 6, 2);
        // Registry: mock providers for the pipeline plus the stub for the
        // win-rate generators and judge.
        json registry = json::parse(read_file(w.providers_path));
        auto entry = [&](const std::string& id, const std::string& model) {
            registry.push_back(
                json{{"provider_id", id},
                     {"kind", "openai-compatible"},
                     {"base_url", "http://127.0.0.1:" + std::to_string(stub.port())},
                     {"model", model}});
        };
        entry("judge", "judge-v1");
        entry("base-gen", "llama-base");
        entry("con-gen", "llama-con");
        std::string merged = w.dir + "/providers-merged.json";
        std::ofstream(merged) << registry.dump(2) << "\n";
        std::string instructions = w.dir + "/instructions.txt";
        {
            std::ofstream out(instructions);
            for (int i = 0; i < 6; ++i)
                out << "Summarize maintenance note " << i << " for the archive.\n";
        }

        const std::string cassette = w.dir + "/full-run.jsonl";
        auto cfg_path = testutil::write_run_config(
            w, "improved2",
            json{{"providers_path", merged},
                 {"cache_mode", "record"},
                 {"cassette_path", cassette}});
        RunConfig extract = RunConfig::from_json_file(cfg_path);

        auto eval_cfgs = [&](RunConfig base) {
            RunConfig regen = base;
            regen.run_id = "c8-regen";
            RunConfig sim = base;
            sim.run_id = "c8-similarity";
            sim.ground_truth_path = w.truth_path;
            RunConfig wr = base;
            wr.run_id = "c8-winrate";
            wr.instructions_path = instructions;
            wr.base_provider = "base-gen";
            wr.con_provider = "con-gen";
            wr.judge_provider = "judge";
            return std::tuple{regen, sim, wr};
        };

        run_pipeline(extract);
        const std::string con_path =
            extract.run_dir + "/" + extract.effective_run_id() + "/constitution.json";
        RunConfig eval_base = extract;
        eval_base.constitution_path = con_path;
        auto [regen, sim, wr] = eval_cfgs(eval_base);
        std::vector<std::string> recorded{read_file(con_path),
                                          read_file(run_eval_regen(regen)),
                                          read_file(run_eval_similarity(sim)),
                                          read_file(run_eval_winrate(wr))};

        RunConfig replay = extract;
        replay.cache_mode = CacheMode::replay;
        replay.run_dir = w.dir + "/runs-replay";
        run_pipeline(replay);
        const std::string replay_con_path =
            replay.run_dir + "/" + replay.effective_run_id() + "/constitution.json";
        // Evals read the recorded constitution in both passes so the two
        // report sets share one config; the replayed copy is compared below.
        RunConfig replay_base = replay;
        replay_base.constitution_path = con_path;
        auto [regen2, sim2, wr2] = eval_cfgs(replay_base);
        std::vector<std::string> replayed{read_file(replay_con_path),
                                          read_file(run_eval_regen(regen2)),
                                          read_file(run_eval_similarity(sim2)),
                                          read_file(run_eval_winrate(wr2))};

        const char* names[] = {"constitution.json", "eval_regen.json",
                               "eval_similarity.json", "eval_winrate.json"};
        for (std::size_t i = 0; i < recorded.size(); ++i) {
            expect(p, !recorded[i].empty(), std::string(names[i]) + " is empty");
            expect(p, recorded[i] == replayed[i],
                   std::string(names[i]) + " differs between record and replay");
        }
    });

    // 9. The shipped regression cassettes reproduce the reference numbers.
    gate.criterion(9, "regression cassettes reproduce the reference numbers",
                   [&](auto& p) {
        const auto& reports = regression.ensure(stub);
        for (const auto& run : regen_runs()) {
            double acc = reports.regen.at(run.name).at("accuracy");
            expect(p, std::abs(acc - run.expected_accuracy) < 5e-5,
                   "regen " + run.name + ": accuracy " + std::to_string(acc) +
                       ", expected " + std::to_string(run.expected_accuracy));
        }
        for (const auto& run : similarity_runs()) {
            double mean = reports.similarity.at(run.name).at("mean_score");
            expect(p, std::abs(mean - run.expected_mean) < 5e-3,
                   "similarity " + run.name + ": mean " + std::to_string(mean) +
                       ", expected " + std::to_string(run.expected_mean));
        }
        double wr = reports.winrate.at("win_rate");
        expect(p, std::abs(wr * 100.0 - 46.74) < 5e-3,
               "win rate " + std::to_string(wr * 100.0) + "%, expected 46.74%");
        double median = reports.winrate.at("token_diff_median");
        expect(p, median == -46.5,
               "token diff median " + std::to_string(median) + ", expected -46.5");
    });

    if (gate.failures == 0) {
        std::cout << "acceptance: all 9 criteria passed\n";
        return 0;
    }
    std::cout << "acceptance: " << gate.failures << " criteria failed\n";
    return 1;
}
