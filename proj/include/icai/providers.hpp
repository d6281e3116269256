#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "icai/types.hpp"

namespace icai {

struct CompletionRequest {
    std::string provider_id;
    std::string model;
    std::string prompt;
    double temperature = 0.0;
    int max_tokens = 1024;
    std::optional<std::int64_t> seed;
};

void validate(const CompletionRequest& req);

// 256-bit digest identifying a request; equal requests hash equally.
std::string cache_key(const CompletionRequest& req);
std::string embed_cache_key(const std::string& model_id, const std::string& text);

class CompletionProvider {
public:
    virtual ~CompletionProvider() = default;
    virtual std::string complete(const CompletionRequest& req) = 0;
    virtual std::string provider_id() const = 0;
    virtual std::string model() const = 0;

    // Fills provider identity into the request before dispatch.
    std::string complete_prompt(const std::string& prompt, double temperature,
                                int max_tokens);
};

class EmbeddingProvider {
public:
    virtual ~EmbeddingProvider() = default;
    // One vector per input text, order preserved, shared dimension.
    // Rejects empty inputs and empty strings before any transport.
    virtual std::vector<EmbeddingVector> embed(const std::vector<std::string>& texts) = 0;
    virtual std::string model_id() const = 0;
};

enum class CacheMode { record, replay, off };

CacheMode cache_mode_from_string(const std::string& s);

// Append-only JSONL cassette of (digest, request summary, response). In
// record mode, misses go to the transport and the response is appended; in
// replay mode a miss is an error so tests stay hermetic.
class Cassette {
public:
    Cassette(std::string path, CacheMode mode);

    std::optional<std::string> lookup(const std::string& digest) const;
    void store(const std::string& digest, const std::string& request_summary,
               const std::string& response);
    CacheMode mode() const { return mode_; }
    const std::string& path() const { return path_; }
    std::size_t size() const;

private:
    std::string path_;
    CacheMode mode_;
    std::map<std::string, std::string> entries_;
    mutable std::mutex mu_;
};

// Wraps a transport provider with the cassette. Identical requests hit the
// transport at most once per cassette.
class CachedCompletionProvider : public CompletionProvider {
public:
    CachedCompletionProvider(std::shared_ptr<CompletionProvider> inner,
                             std::shared_ptr<Cassette> cassette);
    std::string complete(const CompletionRequest& req) override;
    std::string provider_id() const override { return inner_->provider_id(); }
    std::string model() const override { return inner_->model(); }

private:
    std::shared_ptr<CompletionProvider> inner_;
    std::shared_ptr<Cassette> cassette_;
};

class CachedEmbeddingProvider : public EmbeddingProvider {
public:
    CachedEmbeddingProvider(std::shared_ptr<EmbeddingProvider> inner,
                            std::shared_ptr<Cassette> cassette);
    std::vector<EmbeddingVector> embed(const std::vector<std::string>& texts) override;
    std::string model_id() const override { return inner_->model_id(); }

private:
    std::shared_ptr<EmbeddingProvider> inner_;
    std::shared_ptr<Cassette> cassette_;
};

struct ProviderConfig {
    std::string provider_id;
    std::string kind;  // "openai-compatible" | "mock"
    std::string base_url;
    std::string model;
    std::string api_key_env;
    int max_inflight = 4;
    int max_retries = 3;
    int batch_size = 64;       // embedding batch limit
    double requests_per_second = 0.0;  // 0 = unlimited
    std::string fixture_path;  // kind "mock": synthetic fixture backing the double
};

ProviderConfig provider_config_from_json_file(const std::string& path,
                                              const std::string& provider_id);

// OpenAI-compatible chat completion endpoint. Retries transient failures
// (HTTP 5xx, 429, connect errors) with exponential backoff and seeded
// jitter; 4xx other than 429 is a ProviderError.
class HttpCompletionProvider : public CompletionProvider {
public:
    explicit HttpCompletionProvider(ProviderConfig cfg);
    std::string complete(const CompletionRequest& req) override;
    std::string provider_id() const override { return cfg_.provider_id; }
    std::string model() const override { return cfg_.model; }

private:
    ProviderConfig cfg_;
    std::string api_key_;
};

class HttpEmbeddingProvider : public EmbeddingProvider {
public:
    explicit HttpEmbeddingProvider(ProviderConfig cfg);
    std::vector<EmbeddingVector> embed(const std::vector<std::string>& texts) override;
    std::string model_id() const override { return cfg_.model; }

private:
    ProviderConfig cfg_;
    std::string api_key_;
};

// Runs fn(i) for i in [0, n) with at most max_inflight worker threads.
// The first exception thrown by any worker is rethrown after join.
void bounded_parallel_for(std::size_t n, int max_inflight,
                          const std::function<void(std::size_t)>& fn);

}  // namespace icai
