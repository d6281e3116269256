#include "icai/providers.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <thread>

#include "httplib.h"
#include "icai/error.hpp"
#include "icai/hash.hpp"
#include "json.hpp"

using nlohmann::json;

namespace icai {

void validate(const CompletionRequest& req) {
    if (req.prompt.empty()) throw ValidationError("completion request: prompt is empty");
    if (req.temperature < 0.0 || req.temperature > 2.0)
        throw ValidationError("completion request: temperature out of [0,2]");
    if (req.max_tokens <= 0)
        throw ValidationError("completion request: max_tokens must be positive");
}

std::string cache_key(const CompletionRequest& req) {
    json j;
    j["provider_id"] = req.provider_id;
    j["model"] = req.model;
    j["prompt"] = req.prompt;
    j["temperature"] = req.temperature;
    j["max_tokens"] = req.max_tokens;
    if (req.seed) j["seed"] = *req.seed;
    return sha256_hex(j.dump());
}

std::string embed_cache_key(const std::string& model_id, const std::string& text) {
    json j;
    j["kind"] = "embedding";
    j["model_id"] = model_id;
    j["text"] = text;
    return sha256_hex(j.dump());
}

std::string CompletionProvider::complete_prompt(const std::string& prompt,
                                                double temperature, int max_tokens) {
    CompletionRequest req;
    req.provider_id = provider_id();
    req.model = model();
    req.prompt = prompt;
    req.temperature = temperature;
    req.max_tokens = max_tokens;
    return complete(req);
}

CacheMode cache_mode_from_string(const std::string& s) {
    if (s == "record") return CacheMode::record;
    if (s == "replay") return CacheMode::replay;
    if (s == "off") return CacheMode::off;
    throw ValidationError("unknown cache mode: " + s);
}

Cassette::Cassette(std::string path, CacheMode mode)
    : path_(std::move(path)), mode_(mode) {
    if (mode_ == CacheMode::off) return;
    std::ifstream in(path_);
    if (!in) {
        if (mode_ == CacheMode::replay)
            throw ReplayMissError("replay mode but cassette not found: " + path_);
        return;  // record mode starts a fresh cassette
    }
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        json j = json::parse(line, nullptr, false);
        if (j.is_discarded() || !j.contains("digest") || !j.contains("response"))
            throw ParseError("cassette " + path_ + " line " + std::to_string(lineno) +
                             ": malformed entry");
        entries_[j["digest"].get<std::string>()] = j["response"].get<std::string>();
    }
}

std::optional<std::string> Cassette::lookup(const std::string& digest) const {
    std::lock_guard lock(mu_);
    auto it = entries_.find(digest);
    if (it == entries_.end()) return std::nullopt;
    return it->second;
}

void Cassette::store(const std::string& digest, const std::string& request_summary,
                     const std::string& response) {
    std::lock_guard lock(mu_);
    if (entries_.count(digest)) return;
    entries_[digest] = response;
    if (mode_ != CacheMode::record) return;
    json j;
    j["digest"] = digest;
    j["request"] = request_summary;
    j["response"] = response;
    std::ofstream out(path_, std::ios::app);
    if (!out) throw ValidationError("cannot append to cassette: " + path_);
    out << j.dump() << "\n";
}

std::size_t Cassette::size() const {
    std::lock_guard lock(mu_);
    return entries_.size();
}

CachedCompletionProvider::CachedCompletionProvider(
    std::shared_ptr<CompletionProvider> inner, std::shared_ptr<Cassette> cassette)
    : inner_(std::move(inner)), cassette_(std::move(cassette)) {}

std::string CachedCompletionProvider::complete(const CompletionRequest& req) {
    validate(req);
    const std::string digest = cache_key(req);
    if (auto hit = cassette_->lookup(digest)) return *hit;
    if (cassette_->mode() == CacheMode::replay)
        throw ReplayMissError("replay cache miss for request digest " + digest);
    std::string response = inner_->complete(req);
    std::string summary =
        req.model + " " + req.prompt.substr(0, std::min<std::size_t>(80, req.prompt.size()));
    cassette_->store(digest, summary, response);
    return response;
}

CachedEmbeddingProvider::CachedEmbeddingProvider(std::shared_ptr<EmbeddingProvider> inner,
                                                 std::shared_ptr<Cassette> cassette)
    : inner_(std::move(inner)), cassette_(std::move(cassette)) {}

std::vector<EmbeddingVector> CachedEmbeddingProvider::embed(
    const std::vector<std::string>& texts) {
    if (texts.empty()) throw ValidationError("embed: empty text list");
    std::vector<EmbeddingVector> out(texts.size());
    std::vector<std::string> missing;
    std::vector<std::size_t> missing_idx;
    for (std::size_t i = 0; i < texts.size(); ++i) {
        if (texts[i].empty()) throw ValidationError("embed: empty string input");
        auto hit = cassette_->lookup(embed_cache_key(model_id(), texts[i]));
        if (hit) {
            json j = json::parse(*hit);
            Eigen::VectorXd v(j.size());
            for (std::size_t k = 0; k < j.size(); ++k) v(static_cast<int>(k)) = j[k];
            out[i] = EmbeddingVector{model_id(), std::move(v)};
        } else {
            missing.push_back(texts[i]);
            missing_idx.push_back(i);
        }
    }
    if (!missing.empty()) {
        if (cassette_->mode() == CacheMode::replay)
            throw ReplayMissError("replay cache miss for " +
                                  std::to_string(missing.size()) + " embedding(s)");
        auto fresh = inner_->embed(missing);
        for (std::size_t m = 0; m < missing.size(); ++m) {
            json arr = json::array();
            for (int k = 0; k < fresh[m].values.size(); ++k) arr.push_back(fresh[m].values(k));
            cassette_->store(embed_cache_key(model_id(), missing[m]),
                             "embed " + missing[m].substr(0, 60), arr.dump());
            out[missing_idx[m]] = std::move(fresh[m]);
        }
    }
    Eigen::Index d = out.front().values.size();
    for (const auto& v : out)
        if (v.values.size() != d)
            throw ProviderError("embedding dimension mismatch within batch");
    return out;
}

ProviderConfig provider_config_from_json_file(const std::string& path,
                                              const std::string& provider_id) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open provider config: " + path);
    json j = json::parse(in, nullptr, false);
    if (j.is_discarded()) throw ParseError("provider config is not valid JSON: " + path);
    if (!j.is_array()) throw ParseError("provider config must be a JSON array: " + path);
    for (const auto& e : j) {
        if (e.value("provider_id", "") != provider_id) continue;
        ProviderConfig cfg;
        cfg.provider_id = provider_id;
        cfg.kind = e.value("kind", "openai-compatible");
        cfg.base_url = e.value("base_url", "");
        cfg.model = e.value("model", "");
        cfg.api_key_env = e.value("api_key_env", "");
        cfg.max_inflight = e.value("max_inflight", 4);
        cfg.max_retries = e.value("max_retries", 3);
        cfg.batch_size = e.value("batch_size", 64);
        cfg.requests_per_second = e.value("requests_per_second", 0.0);
        cfg.fixture_path = e.value("fixture_path", "");
        return cfg;
    }
    throw ValidationError("provider_id not found in config: " + provider_id);
}

namespace {

std::string read_api_key(const ProviderConfig& cfg) {
    if (cfg.api_key_env.empty()) return "";
    const char* v = std::getenv(cfg.api_key_env.c_str());
    return v ? v : "";
}

int retry_base_delay_ms() {
    // Overridable so tests do not sleep for real seconds.
    const char* v = std::getenv("ICAI_RETRY_BASE_MS");
    return v ? std::atoi(v) : 1000;
}

bool retryable_status(int status) { return status == 429 || status >= 500; }

// Exponential backoff with +-20% jitter derived from the request digest, so
// replayed failures back off identically.
void backoff_sleep(int attempt, const std::string& digest) {
    double base = retry_base_delay_ms() * static_cast<double>(1 << attempt);
    std::uint64_t h = sha256_u64(digest + "#" + std::to_string(attempt));
    double jitter = 0.8 + 0.4 * (static_cast<double>(h % 10000) / 10000.0);
    std::this_thread::sleep_for(
        std::chrono::milliseconds(static_cast<int>(base * jitter)));
}

json post_json(const ProviderConfig& cfg, const std::string& api_key,
               const std::string& path, const json& body, const std::string& digest) {
    httplib::Client cli(cfg.base_url);
    cli.set_read_timeout(120, 0);
    httplib::Headers headers;
    if (!api_key.empty()) headers.emplace("Authorization", "Bearer " + api_key);
    std::string last_error;
    for (int attempt = 0; attempt <= cfg.max_retries; ++attempt) {
        if (attempt > 0) backoff_sleep(attempt - 1, digest);
        auto res = cli.Post(path, headers, body.dump(), "application/json");
        if (!res) {
            last_error = "connect error: " + httplib::to_string(res.error());
            continue;
        }
        if (res->status >= 200 && res->status < 300) {
            json j = json::parse(res->body, nullptr, false);
            if (j.is_discarded())
                throw ProviderError(cfg.provider_id + ": non-JSON response body");
            return j;
        }
        if (!retryable_status(res->status))
            throw ProviderError(cfg.provider_id + ": HTTP " + std::to_string(res->status) +
                                " " + res->body.substr(0, 200));
        last_error = "HTTP " + std::to_string(res->status);
    }
    throw TransportError(cfg.provider_id + ": retries exhausted (" + last_error + ")");
}

}  // namespace

HttpCompletionProvider::HttpCompletionProvider(ProviderConfig cfg)
    : cfg_(std::move(cfg)), api_key_(read_api_key(cfg_)) {}

std::string HttpCompletionProvider::complete(const CompletionRequest& req) {
    validate(req);
    json body;
    body["model"] = req.model.empty() ? cfg_.model : req.model;
    body["messages"] = json::array({json{{"role", "user"}, {"content", req.prompt}}});
    body["temperature"] = req.temperature;
    body["max_tokens"] = req.max_tokens;
    if (req.seed) body["seed"] = *req.seed;
    json j = post_json(cfg_, api_key_, "/v1/chat/completions", body, cache_key(req));
    try {
        return j.at("choices").at(0).at("message").at("content").get<std::string>();
    } catch (const json::exception&) {
        throw ProviderError(cfg_.provider_id + ": unexpected completion response shape");
    }
}

HttpEmbeddingProvider::HttpEmbeddingProvider(ProviderConfig cfg)
    : cfg_(std::move(cfg)), api_key_(read_api_key(cfg_)) {}

std::vector<EmbeddingVector> HttpEmbeddingProvider::embed(
    const std::vector<std::string>& texts) {
    if (texts.empty()) throw ValidationError("embed: empty text list");
    for (const auto& t : texts)
        if (t.empty()) throw ValidationError("embed: empty string input");
    std::vector<EmbeddingVector> out;
    out.reserve(texts.size());
    for (std::size_t start = 0; start < texts.size();
         start += static_cast<std::size_t>(cfg_.batch_size)) {
        std::size_t end =
            std::min(texts.size(), start + static_cast<std::size_t>(cfg_.batch_size));
        json body;
        body["model"] = cfg_.model;
        body["input"] = json::array();
        for (std::size_t i = start; i < end; ++i) body["input"].push_back(texts[i]);
        json j = post_json(cfg_, api_key_, "/v1/embeddings", body,
                           sha256_hex(body.dump()));
        try {
            const auto& data = j.at("data");
            if (data.size() != end - start)
                throw ProviderError(cfg_.provider_id + ": embedding count mismatch");
            for (const auto& item : data) {
                const auto& emb = item.at("embedding");
                Eigen::VectorXd v(static_cast<Eigen::Index>(emb.size()));
                for (std::size_t k = 0; k < emb.size(); ++k)
                    v(static_cast<Eigen::Index>(k)) = emb[k].get<double>();
                out.push_back(EmbeddingVector{cfg_.model, std::move(v)});
            }
        } catch (const json::exception&) {
            throw ProviderError(cfg_.provider_id + ": unexpected embedding response shape");
        }
    }
    Eigen::Index d = out.front().values.size();
    for (const auto& v : out)
        if (v.values.size() != d)
            throw ProviderError(cfg_.provider_id + ": embedding dimension mismatch");
    return out;
}

void bounded_parallel_for(std::size_t n, int max_inflight,
                          const std::function<void(std::size_t)>& fn) {
    if (n == 0) return;
    int workers = std::max(1, std::min<int>(max_inflight, static_cast<int>(n)));
    if (workers == 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::mutex err_mu;
    std::exception_ptr first_error;
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(workers));
    for (int w = 0; w < workers; ++w) {
        pool.emplace_back([&] {
            for (;;) {
                std::size_t i = next.fetch_add(1);
                if (i >= n) return;
                try {
                    fn(i);
                } catch (...) {
                    std::lock_guard lock(err_mu);
                    if (!first_error) first_error = std::current_exception();
                }
            }
        });
    }
    for (auto& t : pool) t.join();
    if (first_error) std::rethrow_exception(first_error);
}

}  // namespace icai
