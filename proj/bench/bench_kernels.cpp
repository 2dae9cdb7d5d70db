// Serial reference paths against their OpenMP kernels.

#include <benchmark/benchmark.h>

#include <cmg/corpus.hpp>
#include <cmg/metrics.hpp>
#include <cmg/providers.hpp>
#include <cmg/retriever.hpp>

#include <synth.hpp>

namespace {

cmg::Execution mode(const benchmark::State& state)
{
    return state.range(0) == 0 ? cmg::Execution::serial : cmg::Execution::parallel;
}

struct PartitionFixture {
    cmg::RetrievalIndex index;
    std::string query;
    std::vector<float> query_vector;

    PartitionFixture()
    {
        auto records = synth::random_corpus(4000, 1, 5);
        cmg::HashingEmbedder embedder(256);
        cmg::IndexBuilder builder(256, {}, {}, embedder.model_id());
        for (const auto& r : records)
            builder.add(r, cmg::normalize(embedder.embed_raw(r.diff)).values);
        index = std::move(builder).finish();
        query = records[17].diff;
        query_vector = cmg::normalize(embedder.embed_raw(query)).values;
    }
};

void BM_ScorePartition(benchmark::State& state)
{
    static PartitionFixture fx;
    const auto* partition = fx.index.partition("org0/proj0");
    auto query = cmg::make_lexical_query(*partition, cmg::tokenize(fx.query));
    for (auto _ : state)
        benchmark::DoNotOptimize(cmg::score_partition(*partition, query, fx.query_vector, fx.index.bm25(), mode(state)));
}
BENCHMARK(BM_ScorePartition)->Arg(0)->Arg(1)->Unit(benchmark::kMicrosecond);

void BM_ScoreSamples(benchmark::State& state)
{
    static auto corpus = synth::random_corpus(5000, 10, 6);
    static std::vector<cmg::TokenSequence> hyps, refs;
    if (hyps.empty())
        for (std::size_t i = 0; i < corpus.size(); ++i) {
            hyps.push_back(cmg::tokenize(corpus[i].message));
            refs.push_back(cmg::tokenize(corpus[(i * 7 + 1) % corpus.size()].message));
        }
    static auto idf = cmg::IdfTable::build(refs);
    for (auto _ : state)
        benchmark::DoNotOptimize(cmg::score_samples(hyps, refs, idf, {}, mode(state)));
}
BENCHMARK(BM_ScoreSamples)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

void BM_EvaluateCorpus(benchmark::State& state)
{
    static auto corpus = synth::random_corpus(5000, 10, 7);
    static std::vector<std::pair<std::string, std::string>> pairs;
    if (pairs.empty())
        for (std::size_t i = 0; i < corpus.size(); ++i)
            pairs.emplace_back(corpus[i].message, corpus[(i * 3 + 2) % corpus.size()].message);
    for (auto _ : state)
        benchmark::DoNotOptimize(cmg::evaluate_corpus(pairs, {}, mode(state)));
}
BENCHMARK(BM_EvaluateCorpus)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

void BM_ApplyFilters(benchmark::State& state)
{
    static auto corpus = synth::random_corpus(20000, 50, 8);
    for (auto _ : state)
        benchmark::DoNotOptimize(cmg::apply_filters(corpus, {}, mode(state)));
}
BENCHMARK(BM_ApplyFilters)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

} // namespace

BENCHMARK_MAIN();
