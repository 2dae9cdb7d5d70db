#include <cmg/commit.hpp>
#include <cmg/errors.hpp>
#include <cmg/providers.hpp>
#include <cmg/tokenizer.hpp>

#include <httplib.h>

#include <cmath>
#include <cstdlib>
#include <fstream>
#include <thread>

namespace cmg {

namespace {

std::atomic<std::size_t> g_network_requests{0};

struct SplitUrl {
    std::string origin; // scheme://host[:port]
    std::string path;
};

SplitUrl split_url(const std::string& url)
{
    auto scheme_end = url.find("://");
    if (scheme_end == std::string::npos)
        throw ConfigError("endpoint is not an absolute URL: " + url);
    auto path_start = url.find('/', scheme_end + 3);
    if (path_start == std::string::npos)
        return {url, "/"};
    return {url.substr(0, path_start), url.substr(path_start)};
}

nlohmann::json post_json(const HttpEndpoint& endpoint, const nlohmann::json& body)
{
    auto [origin, path] = split_url(endpoint.url);
    httplib::Client client(origin);
    client.set_connection_timeout(endpoint.timeout);
    client.set_read_timeout(endpoint.timeout);
    client.set_write_timeout(endpoint.timeout);
    httplib::Headers headers;
    if (!endpoint.api_key.empty())
        headers.emplace("Authorization", "Bearer " + endpoint.api_key);

    ++g_network_requests;
    auto res = client.Post(path, headers, body.dump(-1, ' ', false, nlohmann::json::error_handler_t::replace), "application/json");
    if (!res)
        throw TransientProviderError("request to " + endpoint.url + " failed: " + httplib::to_string(res.error()));
    if (res->status == 429 || res->status >= 500)
        throw TransientProviderError("HTTP " + std::to_string(res->status) + " from " + endpoint.url);
    if (res->status < 200 || res->status >= 300)
        throw ProviderUnavailable("HTTP " + std::to_string(res->status) + " from " + endpoint.url + ": " + res->body.substr(0, 200));
    try {
        return nlohmann::json::parse(res->body);
    } catch (const nlohmann::json::exception& e) {
        throw ProviderUnavailable("invalid JSON from " + endpoint.url + ": " + e.what());
    }
}

std::string env_or_empty(const char* name)
{
    const char* v = std::getenv(name);
    return v ? v : "";
}

std::string trim(std::string_view s)
{
    auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string_view::npos)
        return {};
    auto e = s.find_last_not_of(" \t\r\n");
    return std::string(s.substr(b, e - b + 1));
}

} // namespace

EmbeddingVector normalize(std::vector<float> values)
{
    double sq = 0;
    for (float v : values)
        sq += static_cast<double>(v) * static_cast<double>(v);
    if (sq == 0.0 || !std::isfinite(sq))
        throw Error("cannot normalise a zero or non-finite embedding");
    double inv = 1.0 / std::sqrt(sq);
    for (auto& v : values)
        v = static_cast<float>(static_cast<double>(v) * inv);
    return EmbeddingVector{std::move(values)};
}

Sleeper default_sleeper()
{
    return [](std::chrono::milliseconds d) { std::this_thread::sleep_for(d); };
}

InflightLimiter::InflightLimiter(std::size_t limit)
    : m_limit(limit == 0 ? 1 : limit)
{
}

void InflightLimiter::acquire()
{
    std::unique_lock lock(m_mutex);
    m_cv.wait(lock, [&] { return m_active < m_limit; });
    ++m_active;
}

void InflightLimiter::release()
{
    {
        std::lock_guard lock(m_mutex);
        --m_active;
    }
    m_cv.notify_one();
}

std::size_t network_request_count()
{
    return g_network_requests.load();
}

HashingEmbedder::HashingEmbedder(std::size_t dimension)
    : m_dimension(dimension)
{
    if (dimension == 0)
        throw ConfigError("embedding dimension must be positive");
}

std::string HashingEmbedder::model_id() const
{
    return "hashing-v1-" + std::to_string(m_dimension);
}

std::vector<float> HashingEmbedder::embed_raw(std::string_view text)
{
    std::vector<float> v(m_dimension, 0.0f);
    auto tokens = tokenize(text);
    auto bump = [&](std::uint64_t h, float weight) {
        auto bucket = static_cast<std::size_t>(h % m_dimension);
        v[bucket] += (h >> 63) ? -weight : weight;
    };
    for (std::size_t i = 0; i < tokens.size(); ++i) {
        bump(fnv1a64(tokens[i]), 1.0f);
        if (i + 1 < tokens.size())
            bump(fnv1a64(tokens[i + 1], fnv1a64(tokens[i])), 0.5f);
    }
    bool all_zero = std::all_of(v.begin(), v.end(), [](float f) { return f == 0.0f; });
    if (all_zero)
        v[static_cast<std::size_t>(fnv1a64(text) % m_dimension)] = 1.0f;
    return v;
}

HttpEmbedder::HttpEmbedder(HttpEndpoint endpoint, std::string model, std::size_t dimension)
    : m_endpoint(std::move(endpoint)), m_model(std::move(model)), m_dimension(dimension)
{
}

std::vector<float> HttpEmbedder::embed_raw(std::string_view text)
{
    nlohmann::json body = {{"model", m_model}, {"input", nlohmann::json::array({std::string(text)})}};
    auto response = post_json(m_endpoint, body);
    try {
        return response.at("data").at(0).at("embedding").get<std::vector<float>>();
    } catch (const nlohmann::json::exception& e) {
        throw ProviderUnavailable(std::string("unexpected embedding response: ") + e.what());
    }
}

std::string EmbeddingCache::key(std::string_view model_id, std::string_view text)
{
    return std::string(model_id) + ":" + hex64(fnv1a64(text)) + hex64(fnv1a64(text, 0x84222325cbf29ce4ULL)) + ":" + std::to_string(text.size());
}

bool EmbeddingCache::lookup(const std::string& key, EmbeddingVector& out) const
{
    std::shared_lock lock(m_mutex);
    auto it = m_entries.find(key);
    if (it == m_entries.end())
        return false;
    out.values = it->second;
    return true;
}

void EmbeddingCache::insert(const std::string& key, const EmbeddingVector& value)
{
    std::unique_lock lock(m_mutex);
    m_entries.emplace(key, value.values);
}

std::size_t EmbeddingCache::size() const
{
    std::shared_lock lock(m_mutex);
    return m_entries.size();
}

void EmbeddingCache::load(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in)
        return;
    std::unique_lock lock(m_mutex);
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty())
            continue;
        auto j = nlohmann::json::parse(line);
        m_entries[j.at("key").get<std::string>()] = j.at("vector").get<std::vector<float>>();
    }
}

void EmbeddingCache::save(const std::filesystem::path& path) const
{
    std::shared_lock lock(m_mutex);
    std::vector<const std::pair<const std::string, std::vector<float>>*> entries;
    for (const auto& e : m_entries)
        entries.push_back(&e);
    std::sort(entries.begin(), entries.end(), [](auto* a, auto* b) { return a->first < b->first; });
    if (path.has_parent_path())
        std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path);
    if (!out)
        throw Error("cannot write " + path.string());
    for (const auto* e : entries)
        out << nlohmann::json{{"key", e->first}, {"vector", e->second}}.dump() << '\n';
}

EmbeddingService::EmbeddingService(std::shared_ptr<Embedder> backend, std::shared_ptr<EmbeddingCache> cache, RetryPolicy retry,
                                   std::size_t inflight, Sleeper sleeper)
    : m_backend(std::move(backend)), m_cache(cache ? std::move(cache) : std::make_shared<EmbeddingCache>()), m_retry(retry),
      m_limiter(inflight), m_sleeper(std::move(sleeper))
{
    if (!m_backend)
        throw ConfigError("embedding service needs a backend");
    if (m_retry.max_attempts < 1)
        throw ConfigError("retry max_attempts must be at least 1");
}

EmbeddingVector EmbeddingService::embed(std::string_view text)
{
    if (text.empty())
        throw Error("cannot embed empty text");
    auto key = EmbeddingCache::key(m_backend->model_id(), text);
    EmbeddingVector cached;
    if (m_cache->lookup(key, cached))
        return cached;

    auto raw = with_retry(m_retry, m_sleeper, [&] {
        m_limiter.acquire();
        ++m_backend_calls;
        try {
            auto v = m_backend->embed_raw(text);
            m_limiter.release();
            return v;
        } catch (...) {
            m_limiter.release();
            throw;
        }
    });
    if (raw.size() != m_backend->dimension())
        throw DimensionMismatch("provider returned dimension " + std::to_string(raw.size()) + ", expected " + std::to_string(m_backend->dimension()));
    auto vec = normalize(std::move(raw));
    m_cache->insert(key, vec);
    return vec;
}

void validate(const GenerationConfig& config)
{
    if (config.retry.max_attempts < 1)
        throw ConfigError("gen retry max_attempts must be at least 1");
    if (config.max_tokens < 1)
        throw ConfigError("gen.max_tokens must be positive");
    if (config.experiment_mode && config.temperature != 0.0)
        throw ConfigError("gen.temperature must be 0.0 in experiment mode");
}

HttpGenerator::HttpGenerator(HttpEndpoint endpoint)
    : m_endpoint(std::move(endpoint))
{
}

std::string HttpGenerator::complete(const GenerationRequest& request, const GenerationConfig& config)
{
    nlohmann::json body = {
        {"model", config.model},
        {"messages", nlohmann::json::array({{{"role", "user"}, {"content", request.prompt}}})},
        {"temperature", config.temperature},
        {"max_tokens", config.max_tokens},
    };
    m_limiter.acquire();
    nlohmann::json response;
    try {
        response = post_json(m_endpoint, body);
    } catch (...) {
        m_limiter.release();
        throw;
    }
    m_limiter.release();
    try {
        const auto& content = response.at("choices").at(0).at("message").at("content");
        return content.is_null() ? std::string{} : content.get<std::string>();
    } catch (const nlohmann::json::exception& e) {
        throw ProviderUnavailable(std::string("unexpected completion response: ") + e.what());
    }
}

EchoGenerator::EchoGenerator(std::string fallback)
    : m_fallback(std::move(fallback))
{
}

std::string EchoGenerator::complete(const GenerationRequest& request, const GenerationConfig&)
{
    if (request.examples.empty())
        return m_fallback;
    return request.examples.front().message;
}

ConstantGenerator::ConstantGenerator(std::string text)
    : m_text(std::move(text))
{
}

std::string ConstantGenerator::complete(const GenerationRequest&, const GenerationConfig&)
{
    return m_text;
}

std::string postprocess_generation(std::string_view raw)
{
    std::string chosen;
    std::size_t pos = 0;
    while (pos <= raw.size()) {
        auto eol = raw.find('\n', pos);
        auto line = trim(raw.substr(pos, eol == std::string_view::npos ? std::string_view::npos : eol - pos));
        pos = eol == std::string_view::npos ? raw.size() + 1 : eol + 1;
        if (line.rfind("```", 0) == 0)
            continue;
        if (!line.empty()) {
            chosen = std::move(line);
            break;
        }
    }

    for (auto at = chosen.find("```"); at != std::string::npos; at = chosen.find("```"))
        chosen.erase(at, 3);
    chosen = trim(chosen);
    while (chosen.size() >= 2) {
        char f = chosen.front();
        if ((f == '"' || f == '\'' || f == '`') && chosen.back() == f) {
            chosen = trim(std::string_view(chosen).substr(1, chosen.size() - 2));
            continue;
        }
        break;
    }
    if (chosen.empty())
        throw EmptyGeneration("generation is empty after post-processing");
    return chosen;
}

std::string generate(Generator& generator, const GenerationRequest& request, const GenerationConfig& config, const Sleeper& sleeper)
{
    validate(config);
    if (request.prompt.empty())
        throw EmptyQuery("prompt is empty");
    auto raw = with_retry(config.retry, sleeper, [&] { return generator.complete(request, config); });
    return postprocess_generation(raw);
}

std::shared_ptr<Embedder> make_embedder(const std::string& endpoint, std::size_t dimension, const std::string& model)
{
    if (endpoint == "mock" || endpoint.rfind("mock://", 0) == 0) {
        std::size_t dim = dimension;
        if (endpoint.size() > 7)
            dim = std::stoul(endpoint.substr(7));
        return std::make_shared<HashingEmbedder>(dim == 0 ? 256 : dim);
    }
    if (endpoint.rfind("http://", 0) != 0 && endpoint.rfind("https://", 0) != 0)
        throw ConfigError("unsupported embedding endpoint: " + endpoint);
    if (dimension == 0)
        throw ConfigError("embed.dimension is required for HTTP embedding endpoints");
    return std::make_shared<HttpEmbedder>(HttpEndpoint{endpoint, env_or_empty("CORACMG_EMBED_KEY")}, model, dimension);
}

} // namespace cmg
