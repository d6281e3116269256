#include <cstdint>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "icai/dataset.hpp"
#include "icai/error.hpp"
#include "icai/hash.hpp"
#include "icai/pipeline.hpp"
#include "json.hpp"

using nlohmann::json;

namespace {

struct DatasetArgs {
    std::string source;
    std::string principles;
    std::string providers_path;
    std::string provider;
    std::string out_dir = ".";
    std::string name = "dataset";
    int n_train = 0;
    int n_test = 0;
    std::uint64_t seed = 0;
    double min_delta = 2.0;
    int max_inflight = 4;
    std::string cache_mode = "off";
    std::string cassette_path;
};

icai::RunConfig provider_only_config(const DatasetArgs& a) {
    icai::RunConfig cfg;
    cfg.providers_path = a.providers_path;
    cfg.cache_mode = icai::cache_mode_from_string(a.cache_mode);
    cfg.cassette_path = a.cassette_path;
    cfg.run_id = a.name;
    return cfg;
}

void add_common_dataset_opts(CLI::App* cmd, DatasetArgs& a) {
    cmd->add_option("--source", a.source, "source pairs (JSONL)")->required();
    cmd->add_option("--out-dir", a.out_dir, "output directory");
    cmd->add_option("--name", a.name, "split name prefix");
    cmd->add_option("--n-train", a.n_train, "train pairs")->required();
    cmd->add_option("--n-test", a.n_test, "test pairs")->required();
    cmd->add_option("--seed", a.seed, "sampling seed");
}

int run(int argc, char** argv) {
    CLI::App app{"constitution extraction toolkit"};
    app.require_subcommand(1);

    // dataset
    auto* dataset = app.add_subcommand("dataset", "build or split preference datasets");
    dataset->require_subcommand(1);
    DatasetArgs da;

    auto* syn = dataset->add_subcommand("build-synthetic",
                                        "rewrite chosen responses under planted principles");
    add_common_dataset_opts(syn, da);
    syn->add_option("--principles", da.principles, "ground truth principles (JSON)")
        ->required();
    syn->add_option("--providers", da.providers_path, "provider registry (JSON)")
        ->required();
    syn->add_option("--provider", da.provider, "rewrite provider id")->required();
    syn->add_option("--max-inflight", da.max_inflight, "parallel requests");
    syn->add_option("--cache-mode", da.cache_mode, "record|replay|off");
    syn->add_option("--cassette", da.cassette_path, "cassette path");

    auto* semi = dataset->add_subcommand("build-semisynthetic",
                                         "filter rated pairs by rating delta and sample");
    add_common_dataset_opts(semi, da);
    semi->add_option("--min-delta", da.min_delta, "minimum chosen-rejected rating delta");

    auto* split = dataset->add_subcommand("split", "uniform seeded train/test split");
    add_common_dataset_opts(split, da);

    // extract
    auto* extract = app.add_subcommand("extract", "run the five-step extraction");
    std::string config_path;
    std::vector<std::string> overrides;
    extract->add_option("--config", config_path, "run config (JSON)")->required();
    extract->add_option("--set", overrides, "override config keys (key=value)");

    // eval
    auto* eval = app.add_subcommand("eval", "evaluation harnesses");
    eval->require_subcommand(1);
    std::string eval_config;
    std::vector<std::string> eval_overrides;
    auto add_eval_opts = [&](CLI::App* cmd) {
        cmd->add_option("--config", eval_config, "run config (JSON)")->required();
        cmd->add_option("--set", eval_overrides, "override config keys (key=value)");
    };
    auto* regen = eval->add_subcommand("regen", "debiased regeneration accuracy");
    add_eval_opts(regen);
    auto* similarity = eval->add_subcommand("similarity",
                                            "constitution similarity to ground truth");
    add_eval_opts(similarity);
    auto* winrate = eval->add_subcommand("winrate", "head-to-head win rate");
    add_eval_opts(winrate);

    // cassette
    auto* cassette = app.add_subcommand("cassette", "inspect request cassettes");
    auto* ls = cassette->add_subcommand("ls", "list cassette entries");
    std::string cassette_file;
    ls->add_option("--path", cassette_file, "cassette file (JSONL)")->required();

    CLI11_PARSE(app, argc, argv);

    if (syn->parsed()) {
        auto source = icai::load_pairs(da.source, icai::PairSchema::plain);
        auto principles = icai::load_principles(da.principles);
        icai::ProviderFactory factory(provider_only_config(da));
        auto llm = factory.completion(da.provider);
        auto out = icai::build_synthetic(source, principles, *llm, da.n_train, da.n_test,
                                         da.seed, da.max_inflight, da.out_dir);
        icai::save_split(out, da.out_dir, da.name, da.seed, icai::sha256_file_hex(da.source));
        std::cout << da.out_dir << "/" << da.name << ".train.jsonl\n";
        return 0;
    }
    if (semi->parsed()) {
        auto rated = icai::load_pairs(da.source, icai::PairSchema::rated);
        auto out = icai::filter_and_sample_semisynthetic(rated, da.min_delta, da.n_train,
                                                         da.n_test, da.seed);
        icai::save_split(out, da.out_dir, da.name, da.seed, icai::sha256_file_hex(da.source));
        std::cout << da.out_dir << "/" << da.name << ".train.jsonl\n";
        return 0;
    }
    if (split->parsed()) {
        auto pairs = icai::load_pairs(da.source, icai::PairSchema::plain);
        auto out = icai::split_original(pairs, da.n_train, da.n_test, da.seed);
        icai::save_split(out, da.out_dir, da.name, da.seed, icai::sha256_file_hex(da.source));
        std::cout << da.out_dir << "/" << da.name << ".train.jsonl\n";
        return 0;
    }
    if (extract->parsed()) {
        auto cfg = icai::RunConfig::from_json_file(config_path, overrides);
        auto constitution = icai::run_pipeline(cfg);
        std::cout << cfg.run_dir << "/" << cfg.effective_run_id()
                  << "/constitution.json\n";
        std::cerr << "extracted " << constitution.principles.size() << " principles\n";
        return 0;
    }
    if (regen->parsed() || similarity->parsed() || winrate->parsed()) {
        auto cfg = icai::RunConfig::from_json_file(eval_config, eval_overrides);
        std::string path;
        if (regen->parsed()) path = icai::run_eval_regen(cfg);
        else if (similarity->parsed()) path = icai::run_eval_similarity(cfg);
        else path = icai::run_eval_winrate(cfg);
        std::cout << path << "\n";
        return 0;
    }
    if (ls->parsed()) {
        std::ifstream in(cassette_file);
        if (!in) throw icai::ValidationError("cannot open cassette: " + cassette_file);
        std::string line;
        std::size_t n = 0;
        while (std::getline(in, line)) {
            if (line.empty()) continue;
            json j = json::parse(line, nullptr, false);
            if (j.is_discarded()) continue;
            std::cout << j.value("digest", "?").substr(0, 16) << "  "
                      << j.value("request", "") << "\n";
            ++n;
        }
        std::cerr << n << " entries\n";
        return 0;
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    try {
        return run(argc, argv);
    } catch (const icai::ValidationError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const icai::ParseError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const icai::TemplateError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
}
