#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include <cmg/commit.hpp>
#include <cmg/example_pair.hpp>
#include <cmg/execution.hpp>
#include <cmg/tokenizer.hpp>

namespace cmg {

class EmbeddingService;

struct Bm25Params {
    double k1 = 1.2;
    double b = 0.75;
};

struct IndexedDoc {
    std::string sha;
    std::string repo_full_name;
    std::string diff;
    std::string message;
    Timestamp date = 0;
};

struct TermCount {
    std::uint32_t term = 0;
    std::uint32_t count = 0;
};

/// All indexed commits of one project, with their lexical statistics and unit vectors.
class Partition {
public:
    const std::string& repo() const { return m_repo; }
    std::size_t size() const { return m_docs.size(); }
    std::size_t dimension() const { return m_dimension; }

    const IndexedDoc& doc(std::size_t row) const { return m_docs[row]; }
    std::span<const float> vector(std::size_t row) const;
    std::optional<std::size_t> find(std::string_view sha) const;

    /// Term counts of a document, sorted by term id.
    std::span<const TermCount> terms(std::size_t row) const { return m_doc_terms[row]; }
    std::size_t doc_length(std::size_t row) const { return m_doc_lengths[row]; }
    double average_length() const { return m_average_length; }
    std::optional<std::uint32_t> term_id(std::string_view term) const;
    const std::string& term(std::uint32_t id) const { return m_terms[id]; }
    std::size_t vocabulary_size() const { return m_terms.size(); }
    std::size_t document_frequency(std::uint32_t id) const { return m_df[id]; }

private:
    friend class IndexBuilder;
    friend class IndexReader;

    void finalize_statistics();

    std::string m_repo;
    std::size_t m_dimension = 0;
    std::vector<IndexedDoc> m_docs;
    std::vector<float> m_vectors; // row-major, size() * dimension()
    std::vector<std::vector<TermCount>> m_doc_terms;
    std::vector<std::size_t> m_doc_lengths;
    std::vector<std::string> m_terms;
    std::unordered_map<std::string, std::uint32_t> m_term_ids;
    std::vector<std::size_t> m_df;
    std::unordered_map<std::string, std::size_t> m_rows_by_sha;
    double m_average_length = 0;
};

/// Immutable, project-partitioned retrieval index.
class RetrievalIndex {
public:
    const Partition* partition(std::string_view repo) const;
    std::vector<std::string> repos() const;
    std::size_t size() const;
    std::size_t dimension() const { return m_dimension; }
    const Bm25Params& bm25() const { return m_bm25; }
    const TokenizerOptions& tokenizer() const { return m_tokenizer; }
    const std::string& embed_model() const { return m_embed_model; }

    /// Throws UnknownDocument.
    std::pair<const Partition*, std::size_t> locate(const DocHandle& handle) const;

private:
    friend class IndexBuilder;
    friend class IndexReader;

    std::map<std::string, Partition, std::less<>> m_partitions;
    std::size_t m_dimension = 0;
    Bm25Params m_bm25;
    TokenizerOptions m_tokenizer;
    std::string m_embed_model;
};

/// Collects documents (safe to call `add` from several threads) and freezes them into an index.
/// Rows are ordered by sha inside each partition so the result does not depend on insertion order.
class IndexBuilder {
public:
    explicit IndexBuilder(std::size_t dimension, Bm25Params bm25 = {}, TokenizerOptions tokenizer = {}, std::string embed_model = {});

    /// `unit_vector` must have the builder's dimension and unit norm (within 1e-6).
    void add(const CommitRecord& record, std::vector<float> unit_vector);

    RetrievalIndex finish() &&;

private:
    struct Staged {
        IndexedDoc doc;
        std::vector<std::pair<std::string, std::uint32_t>> terms;
        std::size_t length = 0;
        std::vector<float> vector;
    };

    std::size_t m_dimension;
    Bm25Params m_bm25;
    TokenizerOptions m_tokenizer;
    std::string m_embed_model;
    std::mutex m_mutex;
    std::vector<Staged> m_staged;
};

/// Query terms resolved against one partition's vocabulary, with query term frequencies.
struct LexicalQuery {
    std::vector<TermCount> terms; // sorted by term id; unknown terms are dropped
};

LexicalQuery make_lexical_query(const Partition& partition, const TokenSequence& query);

double bm25_idf(std::size_t document_count, std::size_t document_frequency);

/// Okapi BM25 of one document; query terms count with their multiplicity.
double bm25_score(const Partition& partition, const LexicalQuery& query, std::size_t row, const Bm25Params& params);
/// Throws UnknownDocument.
double bm25_score(const TokenSequence& query, const DocHandle& doc, const RetrievalIndex& index);

double dot(std::span<const float> a, std::span<const float> b);
/// Dot product with the stored unit vector. Throws UnknownDocument, DimensionMismatch.
double semantic_score(std::span<const float> query_vector, const DocHandle& doc, const RetrievalIndex& index);

struct PartitionScores {
    std::vector<double> lexical;
    std::vector<double> semantic;
};

/// Scores every document of a partition. The parallel and serial paths produce identical values.
PartitionScores score_partition(const Partition& partition, const LexicalQuery& query, std::span<const float> query_vector,
                                const Bm25Params& params, Execution exec = Execution::parallel);

struct RawScore {
    double lexical = 0;
    double semantic = 0;
};

/// Min-max normalises each family over the list (a constant family maps to 0.5) and averages them.
std::vector<double> fuse(std::span<const RawScore> candidates);

struct ScoredCandidate {
    DocHandle handle;
    std::size_t row = 0;
    Timestamp date = 0;
    double lexical_score = 0;
    double semantic_score = 0;
    double hybrid_score = 0;
};

/// Ordering used for ranking: hybrid desc, date desc, sha asc.
bool ranks_before(const ScoredCandidate& a, const ScoredCandidate& b);

struct RetrievalRequest {
    std::string query_diff;
    std::size_t k = 1;
    std::string scope_repo;
    std::optional<std::string> exclude_sha;
};

struct RetrievalResult {
    std::vector<ExamplePair> pairs; // descending hybrid score
    std::vector<ScoredCandidate> candidates; // every admissible candidate, ranked
    bool complete = true; // false when fewer than k admissible candidates existed
    std::string warning;
};

/// Hybrid retrieval inside `scope_repo`. The query's own sha is excluded before fusion; candidates
/// whose diff is byte-identical to the query are then skipped in favour of the next-ranked ones.
RetrievalResult retrieve(const RetrievalRequest& request, const RetrievalIndex& index, std::span<const float> query_vector,
                         Execution exec = Execution::parallel);

/// Same, embedding the query diff through `embedder` first.
RetrievalResult retrieve(const RetrievalRequest& request, const RetrievalIndex& index, EmbeddingService& embedder,
                         Execution exec = Execution::parallel);

/// Writes lexical.bin, vectors.bin and manifest.json into `dir`.
void save_index(const RetrievalIndex& index, const std::filesystem::path& dir, const nlohmann::json& extra_manifest = {});
RetrievalIndex load_index(const std::filesystem::path& dir);

} // namespace cmg
