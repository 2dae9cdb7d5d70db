#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include <cmg/augmenter.hpp>
#include <cmg/commit.hpp>
#include <cmg/diff.hpp>
#include <cmg/execution.hpp>
#include <cmg/metrics.hpp>
#include <cmg/providers.hpp>
#include <cmg/retriever.hpp>

namespace cmg {

enum class Method { direct, rag };
enum class GeneratorKind { provider, echo_mock, constant_mock, retrieval_copy };

std::string_view method_name(Method m);
std::string_view generator_name(GeneratorKind g);

struct EmbedSettings {
    std::string endpoint = "mock://256";
    std::size_t dimension = 256;
    std::string model = "jina-embeddings-v2-base-code";
    std::optional<std::filesystem::path> cache;
};

struct ExperimentConfig {
    std::filesystem::path corpus;
    std::optional<std::filesystem::path> index; // built from the corpus when absent
    std::size_t subset_size = 0;                // 0 = whole corpus
    std::uint64_t seed = 42;
    Method method = Method::direct;
    std::optional<std::size_t> k;               // present iff method = rag
    std::vector<std::size_t> k_sweep;           // rag only; runs each k into <output>/k<k>
    GeneratorKind generator = GeneratorKind::echo_mock;
    std::string constant_text = "Update code";
    std::filesystem::path output;
    std::optional<std::filesystem::path> template_path;
    std::size_t max_prompt_chars = 48000;
    EmbedSettings embed;
    GenerationConfig gen;
    std::size_t inflight = 4;
    std::size_t workers = 4;
    double cider_scale = 100.0;

    /// Relative paths resolve against `base_dir`. Throws ConfigError.
    static ExperimentConfig from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = {});
    static ExperimentConfig load(const std::filesystem::path& path);

    /// Throws ConfigError when the invariants do not hold.
    void validate() const;
    nlohmann::json to_json() const;
};

/// Most frequent mainstream language among the commit's files (ties: declaration order); `other` if none.
Language commit_language(const CommitRecord& record);

/// Seeded sample of n records: one guaranteed draw per language present, the rest uniform without
/// replacement. Returned in corpus order. Throws CorpusTooSmall.
std::vector<CommitRecord> sample_subset(const std::vector<CommitRecord>& corpus, std::size_t n, std::uint64_t seed);

/// Embeds every diff through `embedder` and indexes the records.
RetrievalIndex build_index(const std::vector<CommitRecord>& records, EmbeddingService& embedder, std::size_t workers = 4,
                           Bm25Params bm25 = {}, TokenizerOptions tokenizer = {});

/// Message of the top-1 hybrid-retrieved pair in `repo`, skipping `exclude_sha` and byte-identical
/// diffs. Throws EmptyScope when nothing is left.
std::string retrieval_copy_generate(std::string_view query_diff, const std::string& repo, const RetrievalIndex& index,
                                    EmbeddingService& embedder, const std::optional<std::string>& exclude_sha = std::nullopt);

struct RetrievedRef {
    DocHandle handle;
    double hybrid_score = 0;
};

struct ResultRow {
    std::string sha;
    std::string repo_full_name;
    std::string language;
    std::string reference;
    std::string generated;
    std::string status = "ok"; // "ok" or "error"
    std::string error;
    std::optional<SampleScores> scores;
    std::vector<RetrievedRef> retrieved;
    std::size_t prompt_chars = 0;
    std::size_t examples_dropped = 0;
    std::string retrieval_warning;
};

nlohmann::json to_json(const ResultRow& row);

struct ExperimentResult {
    std::vector<ResultRow> rows;  // sorted by sha
    MetricReport report;          // over the successful rows, in row order
    nlohmann::json manifest;
    nlohmann::json runtime;
};

/// Shared state for one or more runs over the same corpus (index, services, generator).
class ExperimentContext {
public:
    explicit ExperimentContext(const ExperimentConfig& config);
    ExperimentContext(const ExperimentConfig& config, std::shared_ptr<Generator> generator);

    const std::vector<CommitRecord>& corpus() const { return m_corpus; }
    const RetrievalIndex& index() const { return *m_index; }
    EmbeddingService& embedder() { return *m_embedder; }
    Generator& generator() { return *m_generator; }
    const PromptTemplate& prompt_template() const { return m_template; }
    const std::string& corpus_hash() const { return m_corpus_hash; }
    double index_seconds() const { return m_index_seconds; }

    /// Persists the embedding cache when one is configured.
    void save_cache() const;

private:
    ExperimentConfig m_config;
    std::vector<CommitRecord> m_corpus;
    std::string m_corpus_hash;
    std::shared_ptr<EmbeddingCache> m_cache;
    std::unique_ptr<EmbeddingService> m_embedder;
    std::optional<RetrievalIndex> m_index;
    std::shared_ptr<Generator> m_generator;
    PromptTemplate m_template;
    double m_index_seconds = 0;
};

/// One run at a single k (or direct). Per-commit failures are recorded in the row.
ExperimentResult run_experiment(const ExperimentConfig& config, ExperimentContext& context);

/// Writes results.jsonl, manifest.json and runtime.json into `dir`.
void write_result(const ExperimentResult& result, const std::filesystem::path& dir);

/// Runs the configured experiment (every k of a sweep) and writes the outputs plus report.md.
/// Returns the results in run order.
std::vector<ExperimentResult> run_configured(const ExperimentConfig& config);

/// Every manifest.json below `dir` (recursive), sorted by path.
std::vector<nlohmann::json> load_manifests(const std::filesystem::path& dir);

/// "↑x%" / "↓x%" with x = round(100 * (value - baseline) / baseline); empty when baseline is 0.
std::string relative_change(double value, double baseline);

/// Methods x metrics table with changes against the direct run, then the rag k series.
/// Throws ManifestMismatch when the runs were made on different subsets.
std::string render_report(std::span<const nlohmann::json> manifests);

} // namespace cmg
