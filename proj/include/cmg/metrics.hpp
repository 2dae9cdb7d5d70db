#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include <json.hpp>

#include <cmg/execution.hpp>
#include <cmg/tokenizer.hpp>

namespace cmg {

/// Google-BLEU in [0, 1]: min of n-gram precision and recall pooled over n = 1..max_n.
double gleu(const TokenSequence& hyp, const TokenSequence& ref, int max_n = 4);

/// ROUGE-L F1 in [0, 1].
double rouge_l(const TokenSequence& hyp, const TokenSequence& ref);

std::size_t lcs_length(const TokenSequence& a, const TokenSequence& b);

struct MeteorParams {
    double alpha = 0.9;
    double beta = 3.0;
    double gamma = 0.5;
};

struct MeteorAlignment {
    std::size_t matches = 0;
    std::size_t chunks = 0;
};

/// Exact-match unigram alignment with the most matches and, among those, the fewest chunks.
MeteorAlignment meteor_align(const TokenSequence& hyp, const TokenSequence& ref);

/// METEOR in [0, 1] over exact unigram matches.
double meteor(const TokenSequence& hyp, const TokenSequence& ref, const MeteorParams& params = {});

/// Key for an n-gram: tokens joined by '\n' (tokens never contain whitespace).
std::string ngram_key(const TokenSequence& seq, std::size_t start, std::size_t n);

using NgramCounts = std::unordered_map<std::string, std::size_t>;
NgramCounts count_ngrams(const TokenSequence& seq, std::size_t n);

/// Document frequencies of n-grams (orders 1..max_n) over a reference set.
class IdfTable {
public:
    /// Throws EmptyCorpus on an empty reference list.
    static IdfTable build(std::span<const TokenSequence> references, int max_n = 4);

    /// log(N / df); n-grams never seen in the references use df = 1.
    double idf(const std::string& key) const;

    std::size_t document_count() const { return m_documents; }
    std::size_t document_frequency(const std::string& key) const;
    int max_n() const { return m_max_n; }

    /// Copy with every weight multiplied by `factor` (> 0).
    IdfTable scaled(double factor) const;

private:
    std::unordered_map<std::string, std::size_t> m_df;
    std::size_t m_documents = 0;
    int m_max_n = 4;
    double m_scale = 1.0;
};

/// CIDEr against a single reference: (scale / max_n) * sum over n of the cosine between
/// TF-IDF vectors. scale = 100 gives a 0..100 range, 10 the canonical one.
double cider(const TokenSequence& hyp, const TokenSequence& ref, const IdfTable& idf, int max_n = 4, double scale = 100.0);

/// Scores on a 0..100 scale.
struct SampleScores {
    double bleu = 0;
    double rouge_l = 0;
    double meteor = 0;
    double cider = 0;

    bool operator==(const SampleScores&) const = default;
};

nlohmann::json to_json(const SampleScores& s);

struct MetricReport {
    std::vector<SampleScores> per_sample;
    SampleScores mean;
};

nlohmann::json to_json(const MetricReport& report);

struct EvalOptions {
    int max_n = 4;
    double cider_scale = 100.0;
    TokenizerOptions tokenizer;
};

/// Per-sample scoring of already-tokenized pairs against a shared IDF table.
std::vector<SampleScores> score_samples(std::span<const TokenSequence> hyps, std::span<const TokenSequence> refs,
                                        const IdfTable& idf, const EvalOptions& options, Execution exec = Execution::parallel);

SampleScores mean_scores(std::span<const SampleScores> samples);

/// Tokenizes (hypothesis, reference) pairs, builds IDF over the references and scores every pair.
/// Throws EmptyCorpus.
MetricReport evaluate_corpus(std::span<const std::pair<std::string, std::string>> pairs, const EvalOptions& options = {},
                             Execution exec = Execution::parallel);

} // namespace cmg
