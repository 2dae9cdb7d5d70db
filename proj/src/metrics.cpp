#include <cmg/errors.hpp>
#include <cmg/metrics.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <limits>
#include <map>
#include <unordered_set>

namespace cmg {

namespace {

std::size_t ngram_total(std::size_t len, std::size_t n)
{
    return len >= n ? len - n + 1 : 0;
}

// Exhaustive alignment search with memoisation. The chunk-minimisation problem is hard in
// general, so the search gives up after `state_budget` memo entries and keeps the best
// alignment found by then (only reachable with long runs of repeated tokens).
class AlignmentSearch {
public:
    AlignmentSearch(const TokenSequence& hyp, const TokenSequence& ref)
        : m_hyp_len(hyp.size())
    {
        std::unordered_map<std::string, int> ids;
        auto id_of = [&](const std::string& t) {
            auto [it, inserted] = ids.try_emplace(t, static_cast<int>(ids.size()));
            return it->second;
        };
        m_hyp_ids.reserve(hyp.size());
        for (const auto& t : hyp)
            m_hyp_ids.push_back(id_of(t));
        std::vector<int> ref_ids;
        for (const auto& t : ref)
            ref_ids.push_back(id_of(t));

        std::vector<std::size_t> hyp_count(ids.size()), ref_count(ids.size());
        for (int id : m_hyp_ids)
            ++hyp_count[static_cast<std::size_t>(id)];
        for (int id : ref_ids)
            ++ref_count[static_cast<std::size_t>(id)];

        m_skip_budget.resize(ids.size());
        for (std::size_t w = 0; w < ids.size(); ++w) {
            m_matches += std::min(hyp_count[w], ref_count[w]);
            m_skip_budget[w] = hyp_count[w] > ref_count[w] ? hyp_count[w] - ref_count[w] : 0;
        }

        m_candidates.resize(hyp.size());
        for (std::size_t i = 0; i < hyp.size(); ++i) {
            for (std::size_t j = 0; j < ref.size(); ++j) {
                if (ref_ids[j] == m_hyp_ids[i])
                    m_candidates[i].push_back(j);
            }
        }
        m_used.assign((ref.size() + 63) / 64, 0);
        m_skipped.assign(ids.size(), 0);
    }

    MeteorAlignment run()
    {
        if (m_matches == 0)
            return {0, 0};
        int best = search(0, -1);
        return {m_matches, m_matches - static_cast<std::size_t>(best)};
    }

private:
    static constexpr int infeasible = std::numeric_limits<int>::min() / 2;
    static constexpr std::size_t state_budget = 1u << 20;

    bool used(std::size_t j) const { return (m_used[j / 64] >> (j % 64)) & 1u; }
    void flip(std::size_t j) { m_used[j / 64] ^= (std::uint64_t{1} << (j % 64)); }

    std::string key(std::size_t i, long prev) const
    {
        std::string k;
        k.resize(sizeof(std::size_t) + sizeof(long) + m_used.size() * sizeof(std::uint64_t));
        auto* p = k.data();
        std::memcpy(p, &i, sizeof i);
        std::memcpy(p + sizeof i, &prev, sizeof prev);
        std::memcpy(p + sizeof i + sizeof prev, m_used.data(), m_used.size() * sizeof(std::uint64_t));
        return k;
    }

    // Maximum number of continuation links (hyp i-1 -> i mapped to ref j -> j+1) from position i.
    int search(std::size_t i, long prev)
    {
        if (i == m_hyp_len)
            return 0;
        bool memoize = m_memo.size() < state_budget;
        std::string k;
        if (memoize || !m_memo.empty()) {
            k = key(i, prev);
            auto it = m_memo.find(k);
            if (it != m_memo.end())
                return it->second;
        }

        auto w = static_cast<std::size_t>(m_hyp_ids[i]);
        int best = infeasible;

        // Continuation first so the first complete alignment is already a good one.
        std::vector<std::size_t> order;
        order.reserve(m_candidates[i].size());
        if (prev >= 0) {
            auto want = static_cast<std::size_t>(prev + 1);
            for (auto j : m_candidates[i])
                if (j == want && !used(j))
                    order.push_back(j);
        }
        for (auto j : m_candidates[i])
            if (!used(j) && (order.empty() || j != order.front()))
                order.push_back(j);

        for (auto j : order) {
            flip(j);
            int bonus = (prev >= 0 && static_cast<long>(j) == prev + 1) ? 1 : 0;
            int sub = search(i + 1, static_cast<long>(j));
            flip(j);
            if (sub != infeasible)
                best = std::max(best, bonus + sub);
            if (!memoize && best != infeasible)
                break;
        }
        if (m_skipped[w] < m_skip_budget[w] && (memoize || best == infeasible)) {
            ++m_skipped[w];
            int sub = search(i + 1, -1);
            --m_skipped[w];
            if (sub != infeasible)
                best = std::max(best, sub);
        }

        if (memoize)
            m_memo.emplace(std::move(k), best);
        return best;
    }

    std::size_t m_hyp_len;
    std::vector<int> m_hyp_ids;
    std::vector<std::vector<std::size_t>> m_candidates;
    std::vector<std::size_t> m_skip_budget;
    std::vector<std::size_t> m_skipped;
    std::vector<std::uint64_t> m_used;
    std::size_t m_matches = 0;
    std::unordered_map<std::string, int> m_memo;
};

double cosine_at_order(const TokenSequence& hyp, const TokenSequence& ref, const IdfTable& idf, std::size_t n)
{
    auto hyp_total = ngram_total(hyp.size(), n);
    auto ref_total = ngram_total(ref.size(), n);
    if (hyp_total == 0 || ref_total == 0)
        return 0.0;
    auto hyp_counts = count_ngrams(hyp, n);
    auto ref_counts = count_ngrams(ref, n);

    auto weight = [&](const std::string& g, std::size_t count, std::size_t total) {
        return static_cast<double>(count) / static_cast<double>(total) * idf.idf(g);
    };

    double dot = 0, hyp_norm = 0, ref_norm = 0;
    for (const auto& [g, c] : hyp_counts) {
        double wh = weight(g, c, hyp_total);
        hyp_norm += wh * wh;
        auto it = ref_counts.find(g);
        if (it != ref_counts.end())
            dot += wh * weight(g, it->second, ref_total);
    }
    for (const auto& [g, c] : ref_counts) {
        double wr = weight(g, c, ref_total);
        ref_norm += wr * wr;
    }
    if (hyp_norm == 0.0 || ref_norm == 0.0)
        return 0.0;
    return dot / (std::sqrt(hyp_norm) * std::sqrt(ref_norm));
}

} // namespace

std::string ngram_key(const TokenSequence& seq, std::size_t start, std::size_t n)
{
    std::string key = seq[start];
    for (std::size_t k = 1; k < n; ++k) {
        key += '\n';
        key += seq[start + k];
    }
    return key;
}

NgramCounts count_ngrams(const TokenSequence& seq, std::size_t n)
{
    NgramCounts counts;
    for (std::size_t i = 0; i + n <= seq.size(); ++i)
        ++counts[ngram_key(seq, i, n)];
    return counts;
}

double gleu(const TokenSequence& hyp, const TokenSequence& ref, int max_n)
{
    if (hyp.empty() && ref.empty())
        return 1.0;
    if (hyp.empty() || ref.empty())
        return 0.0;
    std::size_t matched = 0, hyp_total = 0, ref_total = 0;
    for (std::size_t n = 1; n <= static_cast<std::size_t>(std::max(max_n, 1)); ++n) {
        hyp_total += ngram_total(hyp.size(), n);
        ref_total += ngram_total(ref.size(), n);
        if (hyp.size() < n || ref.size() < n)
            continue;
        auto hyp_counts = count_ngrams(hyp, n);
        auto ref_counts = count_ngrams(ref, n);
        for (const auto& [g, c] : hyp_counts) {
            auto it = ref_counts.find(g);
            if (it != ref_counts.end())
                matched += std::min(c, it->second);
        }
    }
    double precision = static_cast<double>(matched) / static_cast<double>(hyp_total);
    double recall = static_cast<double>(matched) / static_cast<double>(ref_total);
    return std::min(precision, recall);
}

std::size_t lcs_length(const TokenSequence& a, const TokenSequence& b)
{
    std::vector<std::size_t> row(b.size() + 1, 0), prev(b.size() + 1, 0);
    for (std::size_t i = 1; i <= a.size(); ++i) {
        std::swap(row, prev);
        row[0] = 0;
        for (std::size_t j = 1; j <= b.size(); ++j)
            row[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], row[j - 1]);
    }
    return row[b.size()];
}

double rouge_l(const TokenSequence& hyp, const TokenSequence& ref)
{
    if (hyp.empty() && ref.empty())
        return 1.0;
    if (hyp.empty() || ref.empty())
        return 0.0;
    auto l = static_cast<double>(lcs_length(hyp, ref));
    if (l == 0.0)
        return 0.0;
    double p = l / static_cast<double>(hyp.size());
    double r = l / static_cast<double>(ref.size());
    return 2 * p * r / (p + r);
}

MeteorAlignment meteor_align(const TokenSequence& hyp, const TokenSequence& ref)
{
    return AlignmentSearch(hyp, ref).run();
}

double meteor(const TokenSequence& hyp, const TokenSequence& ref, const MeteorParams& params)
{
    if (hyp.empty() || ref.empty())
        return 0.0;
    auto [m, chunks] = meteor_align(hyp, ref);
    if (m == 0)
        return 0.0;
    double md = static_cast<double>(m);
    double p = md / static_cast<double>(hyp.size());
    double r = md / static_cast<double>(ref.size());
    double f_mean = p * r / (params.alpha * p + (1 - params.alpha) * r);
    double penalty = params.gamma * std::pow(static_cast<double>(chunks) / md, params.beta);
    return f_mean * (1 - penalty);
}

IdfTable IdfTable::build(std::span<const TokenSequence> references, int max_n)
{
    if (references.empty())
        throw EmptyCorpus("IDF table needs at least one reference");
    IdfTable table;
    table.m_documents = references.size();
    table.m_max_n = max_n;
    for (const auto& ref : references) {
        std::unordered_set<std::string> seen;
        for (std::size_t n = 1; n <= static_cast<std::size_t>(max_n); ++n) {
            for (std::size_t i = 0; i + n <= ref.size(); ++i)
                seen.insert(ngram_key(ref, i, n));
        }
        for (const auto& g : seen)
            ++table.m_df[g];
    }
    return table;
}

std::size_t IdfTable::document_frequency(const std::string& key) const
{
    auto it = m_df.find(key);
    return it == m_df.end() ? 0 : it->second;
}

double IdfTable::idf(const std::string& key) const
{
    auto df = std::max<std::size_t>(document_frequency(key), 1);
    return m_scale * std::log(static_cast<double>(m_documents) / static_cast<double>(df));
}

IdfTable IdfTable::scaled(double factor) const
{
    IdfTable copy = *this;
    copy.m_scale *= factor;
    return copy;
}

double cider(const TokenSequence& hyp, const TokenSequence& ref, const IdfTable& idf, int max_n, double scale)
{
    double sum = 0;
    for (std::size_t n = 1; n <= static_cast<std::size_t>(max_n); ++n)
        sum += cosine_at_order(hyp, ref, idf, n);
    return scale / static_cast<double>(max_n) * sum;
}

nlohmann::json to_json(const SampleScores& s)
{
    return nlohmann::json{{"bleu", s.bleu}, {"rouge_l", s.rouge_l}, {"meteor", s.meteor}, {"cider", s.cider}};
}

nlohmann::json to_json(const MetricReport& report)
{
    auto j = to_json(report.mean);
    auto rows = nlohmann::json::array();
    for (const auto& s : report.per_sample)
        rows.push_back(to_json(s));
    j["per_sample"] = std::move(rows);
    return j;
}

std::vector<SampleScores> score_samples(std::span<const TokenSequence> hyps, std::span<const TokenSequence> refs,
                                        const IdfTable& idf, const EvalOptions& options, Execution exec)
{
    if (hyps.size() != refs.size())
        throw Error("hypothesis and reference counts differ");
    std::vector<SampleScores> out(hyps.size());
    auto score_one = [&](std::ptrdiff_t si) {
        auto i = static_cast<std::size_t>(si);
        auto& s = out[i];
        s.bleu = 100.0 * gleu(hyps[i], refs[i], options.max_n);
        s.rouge_l = 100.0 * rouge_l(hyps[i], refs[i]);
        s.meteor = 100.0 * meteor(hyps[i], refs[i]);
        s.cider = cider(hyps[i], refs[i], idf, options.max_n, options.cider_scale);
    };
    auto n = static_cast<std::ptrdiff_t>(hyps.size());
    if (exec == Execution::parallel) {
#pragma omp parallel for schedule(dynamic, 8)
        for (std::ptrdiff_t i = 0; i < n; ++i)
            score_one(i);
    } else {
        for (std::ptrdiff_t i = 0; i < n; ++i)
            score_one(i);
    }
    return out;
}

SampleScores mean_scores(std::span<const SampleScores> samples)
{
    SampleScores mean;
    if (samples.empty())
        return mean;
    for (const auto& s : samples) {
        mean.bleu += s.bleu;
        mean.rouge_l += s.rouge_l;
        mean.meteor += s.meteor;
        mean.cider += s.cider;
    }
    auto n = static_cast<double>(samples.size());
    mean.bleu /= n;
    mean.rouge_l /= n;
    mean.meteor /= n;
    mean.cider /= n;
    return mean;
}

MetricReport evaluate_corpus(std::span<const std::pair<std::string, std::string>> pairs, const EvalOptions& options, Execution exec)
{
    if (pairs.empty())
        throw EmptyCorpus("nothing to evaluate");
    std::vector<TokenSequence> hyps(pairs.size()), refs(pairs.size());
    auto n = static_cast<std::ptrdiff_t>(pairs.size());
    auto tok = [&](std::ptrdiff_t si) {
        auto i = static_cast<std::size_t>(si);
        hyps[i] = tokenize(pairs[i].first, options.tokenizer);
        refs[i] = tokenize(pairs[i].second, options.tokenizer);
    };
    if (exec == Execution::parallel) {
#pragma omp parallel for schedule(dynamic, 16)
        for (std::ptrdiff_t i = 0; i < n; ++i)
            tok(i);
    } else {
        for (std::ptrdiff_t i = 0; i < n; ++i)
            tok(i);
    }
    auto idf = IdfTable::build(refs, options.max_n);
    MetricReport report;
    report.per_sample = score_samples(hyps, refs, idf, options, exec);
    report.mean = mean_scores(report.per_sample);
    return report;
}

} // namespace cmg
