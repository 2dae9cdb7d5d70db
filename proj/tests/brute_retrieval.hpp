#pragma once

// Exhaustive hybrid ranking over one project, rebuilt from raw records and vectors.

#include <cmg/commit.hpp>
#include <cmg/tokenizer.hpp>

#include <oracles.hpp>

#include <algorithm>
#include <optional>
#include <string>
#include <vector>

namespace oracle {

struct Ranked {
    std::string sha;
    double lexical = 0;
    double semantic = 0;
    double hybrid = 0;
};

inline std::vector<double> min_max(const std::vector<double>& v)
{
    double lo = *std::min_element(v.begin(), v.end());
    double hi = *std::max_element(v.begin(), v.end());
    std::vector<double> out;
    for (double x : v)
        out.push_back(hi == lo ? 0.5 : (x - lo) / (hi - lo));
    return out;
}

/// Top-k of `docs` (all from one project) for the query; `exclude` is dropped before normalisation,
/// byte-identical diffs after ranking (unless `guard` is false).
inline std::vector<Ranked> brute_force_topk(const std::vector<cmg::CommitRecord>& docs, const std::vector<std::vector<float>>& vectors,
                                            const std::string& query_diff, const std::vector<float>& query_vector, std::size_t k,
                                            const std::optional<std::string>& exclude = std::nullopt, bool guard = true)
{
    std::vector<Tokens> tokenized;
    for (const auto& d : docs)
        tokenized.push_back(cmg::tokenize(d.diff).tokens);
    Bm25 bm25(tokenized);
    auto query = cmg::tokenize(query_diff).tokens;

    std::vector<std::size_t> kept;
    std::vector<double> lex, sem;
    for (std::size_t i = 0; i < docs.size(); ++i) {
        if (exclude && docs[i].sha == *exclude)
            continue;
        kept.push_back(i);
        lex.push_back(bm25.score(query, i));
        double dot = 0;
        for (std::size_t d = 0; d < query_vector.size(); ++d)
            dot += static_cast<double>(query_vector[d]) * static_cast<double>(vectors[i][d]);
        sem.push_back(dot);
    }
    if (kept.empty())
        return {};
    auto nl = min_max(lex), ns = min_max(sem);
    std::vector<std::pair<Ranked, std::size_t>> all;
    for (std::size_t j = 0; j < kept.size(); ++j)
        all.push_back({{docs[kept[j]].sha, lex[j], sem[j], 0.5 * nl[j] + 0.5 * ns[j]}, kept[j]});
    std::sort(all.begin(), all.end(), [&](const auto& a, const auto& b) {
        if (a.first.hybrid != b.first.hybrid)
            return a.first.hybrid > b.first.hybrid;
        if (docs[a.second].date != docs[b.second].date)
            return docs[a.second].date > docs[b.second].date;
        return a.first.sha < b.first.sha;
    });
    std::vector<Ranked> out;
    for (const auto& [r, idx] : all) {
        if (guard && docs[idx].diff == query_diff)
            continue;
        if (out.size() == k)
            break;
        out.push_back(r);
    }
    return out;
}

} // namespace oracle
