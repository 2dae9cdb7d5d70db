#include <cmg/errors.hpp>
#include <cmg/providers.hpp>
#include <cmg/retriever.hpp>

#include <algorithm>
#include <cmath>
#include <set>

namespace cmg {

std::span<const float> Partition::vector(std::size_t row) const
{
    return std::span<const float>(m_vectors).subspan(row * m_dimension, m_dimension);
}

std::optional<std::size_t> Partition::find(std::string_view sha) const
{
    auto it = m_rows_by_sha.find(std::string(sha));
    if (it == m_rows_by_sha.end())
        return std::nullopt;
    return it->second;
}

std::optional<std::uint32_t> Partition::term_id(std::string_view term) const
{
    auto it = m_term_ids.find(std::string(term));
    if (it == m_term_ids.end())
        return std::nullopt;
    return it->second;
}

void Partition::finalize_statistics()
{
    m_term_ids.clear();
    for (std::uint32_t id = 0; id < m_terms.size(); ++id)
        m_term_ids.emplace(m_terms[id], id);
    m_df.assign(m_terms.size(), 0);
    m_doc_lengths.assign(m_docs.size(), 0);
    double total = 0;
    for (std::size_t row = 0; row < m_docs.size(); ++row) {
        std::size_t len = 0;
        for (const auto& tc : m_doc_terms[row]) {
            ++m_df[tc.term];
            len += tc.count;
        }
        m_doc_lengths[row] = len;
        total += static_cast<double>(len);
    }
    m_average_length = m_docs.empty() ? 0.0 : total / static_cast<double>(m_docs.size());
    m_rows_by_sha.clear();
    for (std::size_t row = 0; row < m_docs.size(); ++row)
        m_rows_by_sha.emplace(m_docs[row].sha, row);
}

const Partition* RetrievalIndex::partition(std::string_view repo) const
{
    auto it = m_partitions.find(repo);
    return it == m_partitions.end() ? nullptr : &it->second;
}

std::vector<std::string> RetrievalIndex::repos() const
{
    std::vector<std::string> out;
    for (const auto& [name, _] : m_partitions)
        out.push_back(name);
    return out;
}

std::size_t RetrievalIndex::size() const
{
    std::size_t n = 0;
    for (const auto& [_, p] : m_partitions)
        n += p.size();
    return n;
}

std::pair<const Partition*, std::size_t> RetrievalIndex::locate(const DocHandle& handle) const
{
    const auto* p = partition(handle.repo_full_name);
    if (p) {
        if (auto row = p->find(handle.sha))
            return {p, *row};
    }
    throw UnknownDocument("document not indexed: " + handle.repo_full_name + "@" + handle.sha);
}

IndexBuilder::IndexBuilder(std::size_t dimension, Bm25Params bm25, TokenizerOptions tokenizer, std::string embed_model)
    : m_dimension(dimension), m_bm25(bm25), m_tokenizer(tokenizer), m_embed_model(std::move(embed_model))
{
}

void IndexBuilder::add(const CommitRecord& record, std::vector<float> unit_vector)
{
    if (unit_vector.size() != m_dimension)
        throw DimensionMismatch("vector has dimension " + std::to_string(unit_vector.size()) + ", index expects " + std::to_string(m_dimension));
    double norm = std::sqrt(dot(unit_vector, unit_vector));
    if (std::abs(norm - 1.0) > 1e-6)
        throw Error("index vectors must have unit norm (got " + std::to_string(norm) + ")");

    Staged staged;
    staged.doc = IndexedDoc{record.sha, record.repo_full_name, record.diff, record.message, record.date};
    std::map<std::string, std::uint32_t> counts;
    auto tokens = tokenize(record.diff, m_tokenizer);
    for (auto& t : tokens.tokens)
        ++counts[std::move(t)];
    staged.terms.assign(counts.begin(), counts.end());
    staged.length = tokens.size();
    staged.vector = std::move(unit_vector);

    std::lock_guard lock(m_mutex);
    m_staged.push_back(std::move(staged));
}

RetrievalIndex IndexBuilder::finish() &&
{
    RetrievalIndex index;
    index.m_dimension = m_dimension;
    index.m_bm25 = m_bm25;
    index.m_tokenizer = m_tokenizer;
    index.m_embed_model = m_embed_model;

    std::sort(m_staged.begin(), m_staged.end(), [](const Staged& a, const Staged& b) {
        if (a.doc.repo_full_name != b.doc.repo_full_name)
            return a.doc.repo_full_name < b.doc.repo_full_name;
        return a.doc.sha < b.doc.sha;
    });
    for (std::size_t k = 1; k < m_staged.size(); ++k)
        if (m_staged[k].doc.sha == m_staged[k - 1].doc.sha && m_staged[k].doc.repo_full_name == m_staged[k - 1].doc.repo_full_name)
            throw Error("commit " + m_staged[k].doc.sha + " added twice to " + m_staged[k].doc.repo_full_name);

    std::size_t i = 0;
    while (i < m_staged.size()) {
        std::size_t j = i;
        while (j < m_staged.size() && m_staged[j].doc.repo_full_name == m_staged[i].doc.repo_full_name)
            ++j;

        Partition part;
        part.m_repo = m_staged[i].doc.repo_full_name;
        part.m_dimension = m_dimension;

        std::set<std::string> vocabulary;
        for (std::size_t r = i; r < j; ++r)
            for (const auto& [term, _] : m_staged[r].terms)
                vocabulary.insert(term);
        part.m_terms.assign(vocabulary.begin(), vocabulary.end());
        std::unordered_map<std::string, std::uint32_t> ids;
        for (std::uint32_t id = 0; id < part.m_terms.size(); ++id)
            ids.emplace(part.m_terms[id], id);

        for (std::size_t r = i; r < j; ++r) {
            if (r > i && m_staged[r].doc.sha == m_staged[r - 1].doc.sha)
                throw Error("duplicate sha in partition " + part.m_repo + ": " + m_staged[r].doc.sha);
            auto& staged = m_staged[r];
            std::vector<TermCount> terms;
            terms.reserve(staged.terms.size());
            for (const auto& [term, count] : staged.terms)
                terms.push_back({ids.at(term), count});
            // Terms arrive sorted by string and ids are assigned in string order.
            part.m_doc_terms.push_back(std::move(terms));
            part.m_vectors.insert(part.m_vectors.end(), staged.vector.begin(), staged.vector.end());
            part.m_docs.push_back(std::move(staged.doc));
        }
        part.finalize_statistics();
        index.m_partitions.emplace(part.m_repo, std::move(part));
        i = j;
    }
    m_staged.clear();
    return index;
}

LexicalQuery make_lexical_query(const Partition& partition, const TokenSequence& query)
{
    std::map<std::uint32_t, std::uint32_t> counts;
    for (const auto& t : query) {
        if (auto id = partition.term_id(t))
            ++counts[*id];
    }
    LexicalQuery q;
    for (const auto& [id, c] : counts)
        q.terms.push_back({id, c});
    return q;
}

double bm25_idf(std::size_t document_count, std::size_t document_frequency)
{
    auto n = static_cast<double>(document_count);
    auto df = static_cast<double>(document_frequency);
    return std::log((n - df + 0.5) / (df + 0.5) + 1.0);
}

double bm25_score(const Partition& partition, const LexicalQuery& query, std::size_t row, const Bm25Params& params)
{
    auto doc_terms = partition.terms(row);
    double avgdl = partition.average_length();
    double length_ratio = avgdl > 0 ? static_cast<double>(partition.doc_length(row)) / avgdl : 0.0;
    double norm = params.k1 * (1.0 - params.b + params.b * length_ratio);

    double score = 0;
    auto d = doc_terms.begin();
    for (const auto& q : query.terms) {
        while (d != doc_terms.end() && d->term < q.term)
            ++d;
        if (d == doc_terms.end())
            break;
        if (d->term != q.term)
            continue;
        double f = d->count;
        double idf = bm25_idf(partition.size(), partition.document_frequency(q.term));
        score += static_cast<double>(q.count) * idf * f * (params.k1 + 1.0) / (f + norm);
    }
    return score;
}

double bm25_score(const TokenSequence& query, const DocHandle& doc, const RetrievalIndex& index)
{
    auto [partition, row] = index.locate(doc);
    return bm25_score(*partition, make_lexical_query(*partition, query), row, index.bm25());
}

double dot(std::span<const float> a, std::span<const float> b)
{
    double sum = 0;
    for (std::size_t i = 0; i < a.size(); ++i)
        sum += static_cast<double>(a[i]) * static_cast<double>(b[i]);
    return sum;
}

double semantic_score(std::span<const float> query_vector, const DocHandle& doc, const RetrievalIndex& index)
{
    auto [partition, row] = index.locate(doc);
    if (query_vector.size() != partition->dimension())
        throw DimensionMismatch("query vector has dimension " + std::to_string(query_vector.size()) + ", index has " + std::to_string(partition->dimension()));
    return dot(query_vector, partition->vector(row));
}

PartitionScores score_partition(const Partition& partition, const LexicalQuery& query, std::span<const float> query_vector,
                                const Bm25Params& params, Execution exec)
{
    if (query_vector.size() != partition.dimension())
        throw DimensionMismatch("query vector has dimension " + std::to_string(query_vector.size()) + ", index has " + std::to_string(partition.dimension()));
    PartitionScores scores;
    scores.lexical.resize(partition.size());
    scores.semantic.resize(partition.size());
    auto n = static_cast<std::ptrdiff_t>(partition.size());
    if (exec == Execution::parallel) {
#pragma omp parallel for schedule(static)
        for (std::ptrdiff_t i = 0; i < n; ++i) {
            auto row = static_cast<std::size_t>(i);
            scores.lexical[row] = bm25_score(partition, query, row, params);
            scores.semantic[row] = dot(query_vector, partition.vector(row));
        }
    } else {
        for (std::size_t row = 0; row < partition.size(); ++row) {
            scores.lexical[row] = bm25_score(partition, query, row, params);
            scores.semantic[row] = dot(query_vector, partition.vector(row));
        }
    }
    return scores;
}

std::vector<double> fuse(std::span<const RawScore> candidates)
{
    std::vector<double> hybrid(candidates.size());
    if (candidates.empty())
        return hybrid;
    auto [lex_min, lex_max] = std::minmax_element(candidates.begin(), candidates.end(), [](const RawScore& a, const RawScore& b) { return a.lexical < b.lexical; });
    auto [sem_min, sem_max] = std::minmax_element(candidates.begin(), candidates.end(), [](const RawScore& a, const RawScore& b) { return a.semantic < b.semantic; });
    double lo_l = lex_min->lexical, hi_l = lex_max->lexical;
    double lo_s = sem_min->semantic, hi_s = sem_max->semantic;
    auto normalize = [](double v, double lo, double hi) { return hi > lo ? (v - lo) / (hi - lo) : 0.5; };
    for (std::size_t i = 0; i < candidates.size(); ++i)
        hybrid[i] = 0.5 * normalize(candidates[i].lexical, lo_l, hi_l) + 0.5 * normalize(candidates[i].semantic, lo_s, hi_s);
    return hybrid;
}

bool ranks_before(const ScoredCandidate& a, const ScoredCandidate& b)
{
    if (a.hybrid_score != b.hybrid_score)
        return a.hybrid_score > b.hybrid_score;
    if (a.date != b.date)
        return a.date > b.date;
    return a.handle.sha < b.handle.sha;
}

RetrievalResult retrieve(const RetrievalRequest& request, const RetrievalIndex& index, std::span<const float> query_vector, Execution exec)
{
    if (request.k < 1)
        throw Error("k must be at least 1");
    RetrievalResult result;
    const auto* partition = index.partition(request.scope_repo);
    if (!partition) {
        result.complete = false;
        result.warning = "no indexed commits for " + request.scope_repo;
        return result;
    }

    auto query_tokens = tokenize(request.query_diff, index.tokenizer());
    auto query = make_lexical_query(*partition, query_tokens);
    auto scores = score_partition(*partition, query, query_vector, index.bm25(), exec);

    std::vector<std::size_t> rows;
    std::vector<RawScore> raw;
    for (std::size_t row = 0; row < partition->size(); ++row) {
        if (request.exclude_sha && partition->doc(row).sha == *request.exclude_sha)
            continue;
        rows.push_back(row);
        raw.push_back({scores.lexical[row], scores.semantic[row]});
    }
    auto hybrid = fuse(raw);

    for (std::size_t i = 0; i < rows.size(); ++i) {
        const auto& doc = partition->doc(rows[i]);
        if (doc.diff == request.query_diff)
            continue;
        result.candidates.push_back({DocHandle{doc.sha, doc.repo_full_name}, rows[i], doc.date, raw[i].lexical, raw[i].semantic, hybrid[i]});
    }
    std::sort(result.candidates.begin(), result.candidates.end(), ranks_before);

    auto take = std::min(request.k, result.candidates.size());
    for (std::size_t i = 0; i < take; ++i) {
        const auto& c = result.candidates[i];
        const auto& doc = partition->doc(c.row);
        result.pairs.push_back({doc.diff, doc.message, c.handle, doc.date, c.hybrid_score});
    }
    if (take < request.k) {
        result.complete = false;
        result.warning = "only " + std::to_string(take) + " admissible candidates in " + request.scope_repo + " (k = " + std::to_string(request.k) + ")";
    }
    return result;
}

RetrievalResult retrieve(const RetrievalRequest& request, const RetrievalIndex& index, EmbeddingService& embedder, Execution exec)
{
    auto vec = embedder.embed(request.query_diff);
    return retrieve(request, index, vec.values, exec);
}

} // namespace cmg
