#include <cmg/errors.hpp>
#include <cmg/harness.hpp>

#include <algorithm>
#include <chrono>
#include <exception>
#include <fstream>
#include <map>
#include <mutex>
#include <random>
#include <set>
#include <sstream>

#include <omp.h>

namespace cmg {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start)
{
    return std::chrono::duration<double>(Clock::now() - start).count();
}

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p)
{
    std::filesystem::path path(p);
    if (path.is_relative() && !base.empty())
        return base / path;
    return path;
}

std::string file_hash(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw Error("cannot read " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return hex64(fnv1a64(ss.str()));
}

void check_keys(const nlohmann::json& j, std::initializer_list<std::string_view> allowed, std::string_view where)
{
    if (!j.is_object())
        throw ConfigError(std::string(where) + " must be an object");
    for (const auto& [key, _] : j.items())
        if (std::find(allowed.begin(), allowed.end(), key) == allowed.end())
            throw ConfigError("unknown key '" + key + "' in " + std::string(where));
}

Method parse_method(const std::string& s)
{
    if (s == "direct")
        return Method::direct;
    if (s == "rag")
        return Method::rag;
    throw ConfigError("method must be direct or rag, got " + s);
}

GeneratorKind parse_generator(const std::string& s)
{
    if (s == "provider")
        return GeneratorKind::provider;
    if (s == "echo-mock")
        return GeneratorKind::echo_mock;
    if (s == "constant-mock")
        return GeneratorKind::constant_mock;
    if (s == "retrieval-copy")
        return GeneratorKind::retrieval_copy;
    throw ConfigError("unknown generator " + s);
}

std::shared_ptr<Generator> make_generator(const ExperimentConfig& config)
{
    switch (config.generator) {
    case GeneratorKind::provider: {
        const char* key = std::getenv("CORACMG_GEN_KEY");
        return std::make_shared<HttpGenerator>(HttpEndpoint{config.gen.endpoint, key ? key : ""});
    }
    case GeneratorKind::echo_mock:
        return std::make_shared<EchoGenerator>();
    case GeneratorKind::constant_mock:
        return std::make_shared<ConstantGenerator>(config.constant_text);
    case GeneratorKind::retrieval_copy:
        return nullptr;
    }
    return nullptr;
}

std::string subset_hash(const std::vector<CommitRecord>& subset)
{
    std::vector<std::string> keys;
    keys.reserve(subset.size());
    for (const auto& r : subset)
        keys.push_back(r.repo_full_name + '/' + r.sha);
    std::sort(keys.begin(), keys.end());
    std::string joined;
    for (const auto& k : keys)
        joined += k + '\n';
    return hex64(fnv1a64(joined));
}

} // namespace

std::string_view method_name(Method m)
{
    return m == Method::direct ? "direct" : "rag";
}

std::string_view generator_name(GeneratorKind g)
{
    switch (g) {
    case GeneratorKind::provider:
        return "provider";
    case GeneratorKind::echo_mock:
        return "echo-mock";
    case GeneratorKind::constant_mock:
        return "constant-mock";
    case GeneratorKind::retrieval_copy:
        return "retrieval-copy";
    }
    return "?";
}

ExperimentConfig ExperimentConfig::from_json(const nlohmann::json& j, const std::filesystem::path& base_dir)
{
    check_keys(j,
               {"corpus", "index", "subset", "method", "k", "k_sweep", "generator", "constant_text", "output", "template",
                "max_prompt_chars", "embed", "gen", "concurrency", "metrics"},
               "experiment config");
    ExperimentConfig c;
    try {
        c.corpus = resolve(base_dir, j.at("corpus").get<std::string>());
        c.output = resolve(base_dir, j.at("output").get<std::string>());
        if (j.contains("index"))
            c.index = resolve(base_dir, j["index"].get<std::string>());
        if (j.contains("subset")) {
            const auto& s = j["subset"];
            check_keys(s, {"size", "seed"}, "subset");
            c.subset_size = s.value("size", std::size_t{0});
            c.seed = s.value("seed", c.seed);
        }
        c.method = parse_method(j.value("method", std::string("direct")));
        if (j.contains("k"))
            c.k = j["k"].get<std::size_t>();
        if (j.contains("k_sweep"))
            c.k_sweep = j["k_sweep"].get<std::vector<std::size_t>>();
        c.generator = parse_generator(j.value("generator", std::string("echo-mock")));
        c.constant_text = j.value("constant_text", c.constant_text);
        if (j.contains("template"))
            c.template_path = resolve(base_dir, j["template"].get<std::string>());
        c.max_prompt_chars = j.value("max_prompt_chars", c.max_prompt_chars);
        if (j.contains("embed")) {
            const auto& e = j["embed"];
            check_keys(e, {"endpoint", "dimension", "model", "cache"}, "embed");
            c.embed.endpoint = e.value("endpoint", c.embed.endpoint);
            c.embed.dimension = e.value("dimension", c.embed.dimension);
            c.embed.model = e.value("model", c.embed.model);
            if (e.contains("cache"))
                c.embed.cache = resolve(base_dir, e["cache"].get<std::string>());
        }
        if (j.contains("gen")) {
            const auto& g = j["gen"];
            check_keys(g, {"endpoint", "model", "temperature", "max_tokens", "max_attempts", "initial_backoff_ms", "experiment_mode"}, "gen");
            c.gen.endpoint = g.value("endpoint", c.gen.endpoint);
            c.gen.model = g.value("model", c.gen.model);
            c.gen.temperature = g.value("temperature", c.gen.temperature);
            c.gen.max_tokens = g.value("max_tokens", c.gen.max_tokens);
            c.gen.retry.max_attempts = g.value("max_attempts", c.gen.retry.max_attempts);
            c.gen.retry.initial_backoff = std::chrono::milliseconds(g.value("initial_backoff_ms", c.gen.retry.initial_backoff.count()));
            c.gen.experiment_mode = g.value("experiment_mode", c.gen.experiment_mode);
        }
        if (j.contains("concurrency")) {
            const auto& cc = j["concurrency"];
            check_keys(cc, {"inflight", "workers"}, "concurrency");
            c.inflight = cc.value("inflight", c.inflight);
            c.workers = cc.value("workers", c.workers);
        }
        if (j.contains("metrics")) {
            check_keys(j["metrics"], {"cider_scale"}, "metrics");
            c.cider_scale = j["metrics"].value("cider_scale", c.cider_scale);
        }
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("experiment config: ") + e.what());
    }
    c.validate();
    return c;
}

ExperimentConfig ExperimentConfig::load(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in)
        throw ConfigError("cannot read " + path.string());
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(path.string() + ": " + e.what());
    }
    return from_json(j, path.parent_path());
}

void ExperimentConfig::validate() const
{
    auto check_k = [](std::size_t k) {
        if (k < 1 || k > max_prompt_examples)
            throw ConfigError("k must be between 1 and " + std::to_string(max_prompt_examples));
    };
    if (method == Method::rag) {
        if (k.has_value() == !k_sweep.empty())
            throw ConfigError("method rag needs exactly one of k and k_sweep");
        if (k)
            check_k(*k);
        for (auto kk : k_sweep)
            check_k(kk);
    } else {
        if (k || !k_sweep.empty())
            throw ConfigError("k is only valid with method rag");
        if (generator == GeneratorKind::retrieval_copy)
            throw ConfigError("the retrieval-copy generator needs method rag");
    }
    if (generator == GeneratorKind::provider) {
        if (gen.endpoint.empty())
            throw ConfigError("gen.endpoint is required for the provider generator");
        cmg::validate(gen);
    }
    if (workers < 1 || inflight < 1)
        throw ConfigError("concurrency.workers and concurrency.inflight must be positive");
    if (cider_scale <= 0)
        throw ConfigError("metrics.cider_scale must be positive");
    if (output.empty())
        throw ConfigError("output is required");
}

nlohmann::json ExperimentConfig::to_json() const
{
    nlohmann::json j = {
        {"corpus", corpus.filename().string()},
        {"subset", {{"size", subset_size}, {"seed", seed}}},
        {"method", method_name(method)},
        {"generator", generator_name(generator)},
        {"max_prompt_chars", max_prompt_chars},
        {"embed", {{"endpoint", embed.endpoint}, {"dimension", embed.dimension}, {"model", embed.model}}},
        {"concurrency", {{"inflight", inflight}, {"workers", workers}}},
        {"metrics", {{"cider_scale", cider_scale}}},
    };
    j["k"] = k ? nlohmann::json(*k) : nlohmann::json(nullptr);
    if (!k_sweep.empty())
        j["k_sweep"] = k_sweep;
    if (generator == GeneratorKind::constant_mock)
        j["constant_text"] = constant_text;
    if (generator == GeneratorKind::provider)
        j["gen"] = {{"endpoint", gen.endpoint},
                    {"model", gen.model},
                    {"temperature", gen.temperature},
                    {"max_tokens", gen.max_tokens},
                    {"max_attempts", gen.retry.max_attempts}};
    return j;
}

Language commit_language(const CommitRecord& record)
{
    std::array<std::size_t, mainstream_language_count> counts{};
    for (const auto& f : record.files) {
        auto lang = language_for_path(f);
        if (lang != Language::other)
            ++counts[static_cast<std::size_t>(lang)];
    }
    auto best = std::max_element(counts.begin(), counts.end());
    if (*best == 0)
        return Language::other;
    return static_cast<Language>(best - counts.begin());
}

std::vector<CommitRecord> sample_subset(const std::vector<CommitRecord>& corpus, std::size_t n, std::uint64_t seed)
{
    if (n > corpus.size())
        throw CorpusTooSmall("requested " + std::to_string(n) + " commits from a corpus of " + std::to_string(corpus.size()));
    std::mt19937_64 rng(seed);
    auto below = [&](std::size_t bound) { return static_cast<std::size_t>(rng() % bound); };

    std::map<Language, std::vector<std::size_t>> strata;
    for (std::size_t i = 0; i < corpus.size(); ++i)
        strata[commit_language(corpus[i])].push_back(i);

    std::vector<std::size_t> chosen;
    for (const auto& [lang, members] : strata)
        chosen.push_back(members[below(members.size())]);
    if (chosen.size() > n) {
        for (std::size_t i = 0; i < n; ++i)
            std::swap(chosen[i], chosen[i + below(chosen.size() - i)]);
        chosen.resize(n);
    }

    std::vector<char> taken(corpus.size(), 0);
    for (auto i : chosen)
        taken[i] = 1;
    std::vector<std::size_t> pool;
    pool.reserve(corpus.size());
    for (std::size_t i = 0; i < corpus.size(); ++i)
        if (!taken[i])
            pool.push_back(i);
    std::size_t extra = n - chosen.size();
    for (std::size_t i = 0; i < extra; ++i) {
        std::swap(pool[i], pool[i + below(pool.size() - i)]);
        chosen.push_back(pool[i]);
    }

    std::sort(chosen.begin(), chosen.end());
    std::vector<CommitRecord> out;
    out.reserve(n);
    for (auto i : chosen)
        out.push_back(corpus[i]);
    return out;
}

RetrievalIndex build_index(const std::vector<CommitRecord>& records, EmbeddingService& embedder, std::size_t workers, Bm25Params bm25,
                           TokenizerOptions tokenizer)
{
    IndexBuilder builder(embedder.dimension(), bm25, tokenizer, embedder.model_id());
    std::exception_ptr failure;
    std::mutex failure_mutex;
    const auto count = static_cast<std::ptrdiff_t>(records.size());
#pragma omp parallel for schedule(dynamic) num_threads(static_cast<int>(std::max<std::size_t>(workers, 1)))
    for (std::ptrdiff_t i = 0; i < count; ++i) {
        try {
            const auto& r = records[static_cast<std::size_t>(i)];
            builder.add(r, embedder.embed(r.diff).values);
        } catch (...) {
            std::lock_guard lock(failure_mutex);
            if (!failure)
                failure = std::current_exception();
        }
    }
    if (failure)
        std::rethrow_exception(failure);
    return std::move(builder).finish();
}

std::string retrieval_copy_generate(std::string_view query_diff, const std::string& repo, const RetrievalIndex& index,
                                    EmbeddingService& embedder, const std::optional<std::string>& exclude_sha)
{
    RetrievalRequest req{std::string(query_diff), 1, repo, exclude_sha};
    auto result = retrieve(req, index, embedder, Execution::serial);
    if (result.pairs.empty())
        throw EmptyScope("no admissible example pair in " + repo);
    return result.pairs.front().message;
}

nlohmann::json to_json(const ResultRow& row)
{
    nlohmann::json retrieved = nlohmann::json::array();
    for (const auto& r : row.retrieved)
        retrieved.push_back({{"sha", r.handle.sha}, {"repo", r.handle.repo_full_name}, {"hybrid_score", r.hybrid_score}});
    nlohmann::json j = {
        {"sha", row.sha},
        {"repo_full_name", row.repo_full_name},
        {"language", row.language},
        {"reference", row.reference},
        {"generated", row.generated},
        {"status", row.status},
        {"retrieved", retrieved},
        {"prompt_chars", row.prompt_chars},
        {"examples_dropped", row.examples_dropped},
    };
    j["scores"] = row.scores ? to_json(*row.scores) : nlohmann::json(nullptr);
    if (!row.error.empty())
        j["error"] = row.error;
    if (!row.retrieval_warning.empty())
        j["warning"] = row.retrieval_warning;
    return j;
}

ExperimentContext::ExperimentContext(const ExperimentConfig& config)
    : ExperimentContext(config, make_generator(config))
{
}

ExperimentContext::ExperimentContext(const ExperimentConfig& config, std::shared_ptr<Generator> generator)
    : m_config(config), m_generator(std::move(generator))
{
    m_config.validate();
    m_corpus = read_jsonl(m_config.corpus);
    if (m_corpus.empty())
        throw EmptyCorpus("corpus " + m_config.corpus.string() + " is empty");
    m_corpus_hash = file_hash(m_config.corpus);
    m_template = m_config.template_path ? PromptTemplate::load(*m_config.template_path) : PromptTemplate::builtin();

    m_cache = std::make_shared<EmbeddingCache>();
    if (m_config.embed.cache)
        m_cache->load(*m_config.embed.cache);
    auto backend = make_embedder(m_config.embed.endpoint, m_config.embed.dimension, m_config.embed.model);
    m_embedder = std::make_unique<EmbeddingService>(backend, m_cache, RetryPolicy{}, m_config.inflight);

    if (m_config.method == Method::rag) {
        auto start = Clock::now();
        if (m_config.index) {
            m_index = load_index(*m_config.index);
            if (m_index->dimension() != m_embedder->dimension())
                throw DimensionMismatch("index dimension " + std::to_string(m_index->dimension()) + " differs from the embedder's " +
                                        std::to_string(m_embedder->dimension()));
        } else {
            m_index = build_index(m_corpus, *m_embedder, m_config.workers);
        }
        m_index_seconds = seconds_since(start);
    }
    if (m_config.generator != GeneratorKind::retrieval_copy && !m_generator)
        throw ConfigError("no generator configured");
}

void ExperimentContext::save_cache() const
{
    if (m_config.embed.cache)
        m_cache->save(*m_config.embed.cache);
}

ExperimentResult run_experiment(const ExperimentConfig& config, ExperimentContext& context)
{
    config.validate();
    if (config.method == Method::rag && !config.k)
        throw ConfigError("run_experiment needs a single k; use run_configured for sweeps");
    auto start = Clock::now();
    auto network_before = network_request_count();
    auto embed_calls_before = context.embedder().backend_calls();

    const auto& corpus = context.corpus();
    auto n = config.subset_size == 0 ? corpus.size() : config.subset_size;
    auto subset = sample_subset(corpus, n, config.seed);

    PromptOptions prompt_options;
    prompt_options.max_chars = config.max_prompt_chars;

    std::vector<ResultRow> rows(subset.size());
    const auto count = static_cast<std::ptrdiff_t>(subset.size());
#pragma omp parallel for schedule(dynamic) num_threads(static_cast<int>(config.workers))
    for (std::ptrdiff_t si = 0; si < count; ++si) {
        const auto& rec = subset[static_cast<std::size_t>(si)];
        auto& row = rows[static_cast<std::size_t>(si)];
        row.sha = rec.sha;
        row.repo_full_name = rec.repo_full_name;
        row.language = std::string(language_name(commit_language(rec)));
        row.reference = rec.message;
        try {
            GenerationRequest request;
            if (config.method == Method::rag) {
                RetrievalRequest rq{rec.diff, *config.k, rec.repo_full_name, rec.sha};
                auto retrieved = retrieve(rq, context.index(), context.embedder(), Execution::serial);
                row.retrieval_warning = retrieved.warning;
                for (const auto& p : retrieved.pairs)
                    row.retrieved.push_back({p.handle, p.hybrid_score});
                auto prompt = build_rag_prompt(rec.diff, retrieved.pairs, context.prompt_template(), prompt_options);
                row.prompt_chars = prompt.text.size();
                row.examples_dropped = prompt.examples_dropped;
                request.prompt = std::move(prompt.text);
                request.examples.assign(retrieved.pairs.begin(),
                                        retrieved.pairs.begin() + static_cast<std::ptrdiff_t>(retrieved.pairs.size() - row.examples_dropped));
                if (config.generator == GeneratorKind::retrieval_copy) {
                    if (retrieved.pairs.empty())
                        throw EmptyScope("no admissible example pair in " + rec.repo_full_name);
                    row.generated = retrieved.pairs.front().message;
                }
            } else {
                request.prompt = build_direct_prompt(rec.diff, context.prompt_template());
                row.prompt_chars = request.prompt.size();
            }
            if (config.generator != GeneratorKind::retrieval_copy)
                row.generated = generate(context.generator(), request, config.gen);
        } catch (const std::exception& e) {
            row.status = "error";
            row.error = e.what();
            row.generated.clear();
        }
    }
    std::sort(rows.begin(), rows.end(), [](const ResultRow& a, const ResultRow& b) {
        return std::tie(a.sha, a.repo_full_name) < std::tie(b.sha, b.repo_full_name);
    });

    ExperimentResult result;
    std::vector<std::pair<std::string, std::string>> pairs;
    std::vector<std::size_t> ok_rows;
    for (std::size_t i = 0; i < rows.size(); ++i) {
        if (rows[i].status == "ok") {
            pairs.emplace_back(rows[i].generated, rows[i].reference);
            ok_rows.push_back(i);
        }
    }
    if (!pairs.empty()) {
        EvalOptions eval;
        eval.cider_scale = config.cider_scale;
        result.report = evaluate_corpus(pairs, eval);
        for (std::size_t i = 0; i < ok_rows.size(); ++i)
            rows[ok_rows[i]].scores = result.report.per_sample[i];
    }
    result.rows = std::move(rows);

    const std::size_t failed = result.rows.size() - ok_rows.size();
    result.manifest = {
        {"corpus_hash", context.corpus_hash()},
        {"corpus_size", corpus.size()},
        {"seed", config.seed},
        {"subset_size", subset.size()},
        {"subset_hash", subset_hash(subset)},
        {"method", method_name(config.method)},
        {"generator", generator_name(config.generator)},
        {"generator_id", config.generator == GeneratorKind::retrieval_copy ? std::string("retrieval-copy") : context.generator().id()},
        {"embed_model", context.embedder().model_id()},
        {"template_hash", context.prompt_template().hash()},
        {"metrics", to_json(result.report.mean)},
        {"counts", {{"rows", result.rows.size()}, {"ok", ok_rows.size()}, {"failed", failed}}},
        {"config", config.to_json()},
    };
    result.manifest["k"] = config.k ? nlohmann::json(*config.k) : nlohmann::json(nullptr);

    result.runtime = {
        {"wall_seconds", seconds_since(start)},
        {"index_seconds", context.index_seconds()},
        {"workers", config.workers},
        {"omp_max_threads", omp_get_max_threads()},
        {"network_requests", network_request_count() - network_before},
        {"embedding_backend_calls", context.embedder().backend_calls() - embed_calls_before},
    };
    return result;
}

void write_result(const ExperimentResult& result, const std::filesystem::path& dir)
{
    std::filesystem::create_directories(dir);
    {
        std::ofstream out(dir / "results.jsonl", std::ios::binary);
        if (!out)
            throw Error("cannot write " + (dir / "results.jsonl").string());
        for (const auto& row : result.rows)
            out << to_json(row).dump(-1, ' ', false, nlohmann::json::error_handler_t::replace) << '\n';
    }
    std::ofstream(dir / "manifest.json", std::ios::binary) << result.manifest.dump(2, ' ', false, nlohmann::json::error_handler_t::replace) << '\n';
    std::ofstream(dir / "runtime.json", std::ios::binary) << result.runtime.dump(2) << '\n';
}

std::vector<ExperimentResult> run_configured(const ExperimentConfig& config)
{
    ExperimentContext context(config);
    std::vector<ExperimentResult> results;
    std::vector<nlohmann::json> manifests;
    if (config.k_sweep.empty()) {
        results.push_back(run_experiment(config, context));
        write_result(results.back(), config.output);
    } else {
        for (auto k : config.k_sweep) {
            ExperimentConfig single = config;
            single.k = k;
            single.k_sweep.clear();
            results.push_back(run_experiment(single, context));
            write_result(results.back(), config.output / ("k" + std::to_string(k)));
        }
    }
    for (const auto& r : results)
        manifests.push_back(r.manifest);
    std::ofstream(config.output / "report.md", std::ios::binary) << render_report(manifests);
    context.save_cache();
    return results;
}

std::vector<nlohmann::json> load_manifests(const std::filesystem::path& dir)
{
    std::vector<std::filesystem::path> paths;
    if (std::filesystem::is_regular_file(dir)) {
        paths.push_back(dir);
    } else {
        if (!std::filesystem::is_directory(dir))
            throw Error("no such results directory: " + dir.string());
        for (const auto& entry : std::filesystem::recursive_directory_iterator(dir))
            if (entry.is_regular_file() && entry.path().filename() == "manifest.json")
                paths.push_back(entry.path());
    }
    std::sort(paths.begin(), paths.end());
    std::vector<nlohmann::json> manifests;
    for (const auto& p : paths) {
        std::ifstream in(p);
        auto j = nlohmann::json::parse(in);
        // Index manifests share the file name; only experiment manifests carry a subset hash.
        if (j.contains("subset_hash"))
            manifests.push_back(std::move(j));
    }
    return manifests;
}

} // namespace cmg
