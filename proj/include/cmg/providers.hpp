#pragma once

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <mutex>
#include <shared_mutex>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include <cmg/errors.hpp>
#include <cmg/example_pair.hpp>

namespace cmg {

struct EmbeddingVector {
    std::vector<float> values;

    std::size_t dimension() const { return values.size(); }
};

/// Scales `values` to unit Euclidean norm; throws cmg::Error for a zero vector.
EmbeddingVector normalize(std::vector<float> values);

struct RetryPolicy {
    int max_attempts = 3;
    std::chrono::milliseconds initial_backoff{1000};
    double multiplier = 2.0;
};

using Sleeper = std::function<void(std::chrono::milliseconds)>;
Sleeper default_sleeper();

/// Calls `fn` until it succeeds, retrying TransientProviderError with exponential backoff.
/// Throws ProviderUnavailable once the attempts are exhausted.
template <typename Fn>
auto with_retry(const RetryPolicy& policy, const Sleeper& sleep, Fn&& fn) -> decltype(fn());

/// Bounds the number of concurrent requests against a provider.
class InflightLimiter {
public:
    explicit InflightLimiter(std::size_t limit = 4);

    void acquire();
    void release();
    std::size_t limit() const { return m_limit; }

private:
    std::mutex m_mutex;
    std::condition_variable m_cv;
    std::size_t m_limit;
    std::size_t m_active = 0;
};

/// Number of HTTP requests issued by provider clients in this process.
std::size_t network_request_count();

/// Backend producing raw (not necessarily normalised) embeddings.
class Embedder {
public:
    virtual ~Embedder() = default;
    virtual std::vector<float> embed_raw(std::string_view text) = 0;
    virtual std::string model_id() const = 0;
    virtual std::size_t dimension() const = 0;
};

/// Offline embedder: signed feature hashing of enhanced-tokenizer tokens. Deterministic.
class HashingEmbedder : public Embedder {
public:
    explicit HashingEmbedder(std::size_t dimension = 256);

    std::vector<float> embed_raw(std::string_view text) override;
    std::string model_id() const override;
    std::size_t dimension() const override { return m_dimension; }

private:
    std::size_t m_dimension;
};

struct HttpEndpoint {
    std::string url; // scheme://host[:port]/path
    std::string api_key;
    std::chrono::seconds timeout{60};
};

/// JSON embedding API: POST {"model", "input": [text]} -> {"data": [{"embedding": [...]}]}.
class HttpEmbedder : public Embedder {
public:
    HttpEmbedder(HttpEndpoint endpoint, std::string model, std::size_t dimension);

    std::vector<float> embed_raw(std::string_view text) override;
    std::string model_id() const override { return m_model; }
    std::size_t dimension() const override { return m_dimension; }

private:
    HttpEndpoint m_endpoint;
    std::string m_model;
    std::size_t m_dimension;
};

/// Content-addressed store of normalised embeddings. Concurrent readers, serialised writers.
class EmbeddingCache {
public:
    static std::string key(std::string_view model_id, std::string_view text);

    bool lookup(const std::string& key, EmbeddingVector& out) const;
    void insert(const std::string& key, const EmbeddingVector& value);
    std::size_t size() const;

    /// JSON Lines of {"key", "vector"}; a missing file loads as empty.
    void load(const std::filesystem::path& path);
    void save(const std::filesystem::path& path) const;

private:
    mutable std::shared_mutex m_mutex;
    std::unordered_map<std::string, std::vector<float>> m_entries;
};

/// Embedding front end: cache, retries, in-flight cap and normalisation around a backend.
class EmbeddingService {
public:
    EmbeddingService(std::shared_ptr<Embedder> backend, std::shared_ptr<EmbeddingCache> cache = nullptr, RetryPolicy retry = {},
                     std::size_t inflight = 4, Sleeper sleeper = default_sleeper());

    /// Throws cmg::Error for empty text, DimensionMismatch for a wrong-sized provider vector,
    /// ProviderUnavailable once retries are exhausted.
    EmbeddingVector embed(std::string_view text);

    std::size_t backend_calls() const { return m_backend_calls.load(); }
    std::size_t dimension() const { return m_backend->dimension(); }
    std::string model_id() const { return m_backend->model_id(); }
    EmbeddingCache& cache() { return *m_cache; }

private:
    std::shared_ptr<Embedder> m_backend;
    std::shared_ptr<EmbeddingCache> m_cache;
    RetryPolicy m_retry;
    InflightLimiter m_limiter;
    Sleeper m_sleeper;
    std::atomic<std::size_t> m_backend_calls{0};
};

struct GenerationConfig {
    std::string endpoint;
    std::string model;
    double temperature = 0.0;
    int max_tokens = 128;
    RetryPolicy retry;
    bool experiment_mode = true;
};

/// Throws ConfigError when the config breaks its invariants.
void validate(const GenerationConfig& config);

struct GenerationRequest {
    std::string prompt;
    // Retrieved pairs behind the prompt, most relevant first. Only offline generators read them.
    std::vector<ExamplePair> examples;
};

class Generator {
public:
    virtual ~Generator() = default;
    /// Raw model output. Backends throw TransientProviderError for retryable failures.
    virtual std::string complete(const GenerationRequest& request, const GenerationConfig& config) = 0;
    virtual std::string id() const = 0;
};

/// Chat-completions style API: POST {"model", "messages", "temperature", "max_tokens"}.
class HttpGenerator : public Generator {
public:
    explicit HttpGenerator(HttpEndpoint endpoint);

    std::string complete(const GenerationRequest& request, const GenerationConfig& config) override;
    std::string id() const override { return "http:" + m_endpoint.url; }

private:
    HttpEndpoint m_endpoint;
    InflightLimiter m_limiter;
};

/// Returns the message of the most relevant example pair, or `fallback` when there is none.
class EchoGenerator : public Generator {
public:
    explicit EchoGenerator(std::string fallback = "Update code");

    std::string complete(const GenerationRequest& request, const GenerationConfig& config) override;
    std::string id() const override { return "echo-mock"; }

private:
    std::string m_fallback;
};

class ConstantGenerator : public Generator {
public:
    explicit ConstantGenerator(std::string text);

    std::string complete(const GenerationRequest& request, const GenerationConfig& config) override;
    std::string id() const override { return "constant-mock"; }

private:
    std::string m_text;
};

/// Strips surrounding code fences and quotes and keeps the first non-empty line.
/// Throws EmptyGeneration when nothing is left.
std::string postprocess_generation(std::string_view raw);

/// complete() with retries, followed by post-processing.
std::string generate(Generator& generator, const GenerationRequest& request, const GenerationConfig& config,
                     const Sleeper& sleeper = default_sleeper());

/// Builds an embedder from an endpoint string; "mock://<dim>" selects HashingEmbedder.
std::shared_ptr<Embedder> make_embedder(const std::string& endpoint, std::size_t dimension, const std::string& model);

template <typename Fn>
auto with_retry(const RetryPolicy& policy, const Sleeper& sleep, Fn&& fn) -> decltype(fn())
{
    auto backoff = policy.initial_backoff;
    std::string last_error;
    for (int attempt = 1; attempt <= policy.max_attempts; ++attempt) {
        try {
            return fn();
        } catch (const TransientProviderError& e) {
            last_error = e.what();
        }
        if (attempt < policy.max_attempts) {
            sleep(backoff);
            backoff = std::chrono::milliseconds(static_cast<long long>(static_cast<double>(backoff.count()) * policy.multiplier));
        }
    }
    throw ProviderUnavailable("provider unavailable after " + std::to_string(policy.max_attempts) + " attempts: " + last_error);
}

} // namespace cmg
