#include <doctest.h>

#include <cmg/errors.hpp>
#include <cmg/metrics.hpp>

#include <oracles.hpp>

#include <random>

namespace {

cmg::TokenSequence seq(std::initializer_list<const char*> t)
{
    cmg::TokenSequence s;
    for (auto* x : t)
        s.tokens.emplace_back(x);
    return s;
}

cmg::TokenSequence random_seq(std::mt19937_64& rng, std::size_t max_len, std::size_t vocab)
{
    cmg::TokenSequence s;
    auto len = rng() % (max_len + 1);
    for (std::size_t i = 0; i < len; ++i)
        s.tokens.push_back("t" + std::to_string(rng() % vocab));
    return s;
}

} // namespace

TEST_CASE("hand-computed values")
{
    auto hyp = seq({"the", "cat"});
    auto ref = seq({"the", "cat", "sat"});
    CHECK(cmg::gleu(hyp, ref) == doctest::Approx(0.5));
    CHECK(cmg::rouge_l(hyp, ref) == doctest::Approx(0.8));
    CHECK(cmg::meteor(ref, ref) == doctest::Approx(1.0 - 0.5 / 27.0));

    // hyp "a b x c" vs ref "a b c": 3 matches, chunks {a b}, {c}
    auto a = cmg::meteor_align(seq({"a", "b", "x", "c"}), seq({"a", "b", "c"}));
    CHECK(a.matches == 3);
    CHECK(a.chunks == 2);
}

TEST_CASE("empty and disjoint inputs")
{
    cmg::TokenSequence empty;
    auto x = seq({"a", "b"});
    auto y = seq({"c", "d"});
    CHECK(cmg::gleu(empty, empty) == 1.0);
    CHECK(cmg::gleu(empty, x) == 0.0);
    CHECK(cmg::gleu(x, y) == 0.0);
    CHECK(cmg::rouge_l(x, y) == 0.0);
    CHECK(cmg::meteor(x, y) == 0.0);
    std::vector<cmg::TokenSequence> refs{y, seq({"e"})};
    auto idf = cmg::IdfTable::build(refs);
    CHECK(cmg::cider(x, y, idf) == 0.0);
}

TEST_CASE("CIDEr scale and IDF")
{
    std::vector<cmg::TokenSequence> refs{seq({"fix", "the", "parser", "bug", "now"}), seq({"add", "a", "cache", "layer", "here"}),
                                         seq({"fix", "the", "cache"})};
    auto idf = cmg::IdfTable::build(refs);
    CHECK(idf.document_count() == 3);
    CHECK(idf.document_frequency("fix") == 2);
    CHECK(idf.idf("fix") == doctest::Approx(std::log(1.5)));
    CHECK(idf.idf("never-seen") == doctest::Approx(std::log(3.0)));
    CHECK(idf.scaled(2.0).idf("fix") == doctest::Approx(2 * std::log(1.5)));
    CHECK(cmg::cider(refs[0], refs[0], idf) == doctest::Approx(100.0));
    CHECK(cmg::cider(refs[0], refs[0], idf, 4, 10.0) == doctest::Approx(10.0));
    CHECK_THROWS_AS(cmg::IdfTable::build({}), cmg::EmptyCorpus);
}

TEST_CASE("oracle agreement on random pairs")
{
    std::mt19937_64 rng(2024);
    std::vector<std::pair<cmg::TokenSequence, cmg::TokenSequence>> pairs;
    for (int i = 0; i < 120; ++i)
        pairs.emplace_back(random_seq(rng, 10, 6), random_seq(rng, 10, 6));
    std::vector<cmg::TokenSequence> refs;
    std::vector<oracle::Tokens> raw_refs;
    for (auto& [h, r] : pairs) {
        refs.push_back(r);
        raw_refs.push_back(r.tokens);
    }
    auto idf = cmg::IdfTable::build(refs);
    oracle::Cider cider_oracle(raw_refs);
    for (const auto& [h, r] : pairs) {
        CAPTURE(h.join());
        CAPTURE(r.join());
        CHECK(cmg::gleu(h, r) == doctest::Approx(oracle::gleu(h.tokens, r.tokens)).epsilon(1e-12));
        CHECK(cmg::lcs_length(h, r) == oracle::lcs(h.tokens, r.tokens));
        CHECK(cmg::rouge_l(h, r) == doctest::Approx(oracle::rouge_l(h.tokens, r.tokens)).epsilon(1e-12));
        auto a = cmg::meteor_align(h, r);
        auto o = oracle::meteor_align(h.tokens, r.tokens);
        CHECK(a.matches == o.matches);
        CHECK(a.chunks == o.chunks);
        CHECK(cmg::cider(h, r, idf) == doctest::Approx(cider_oracle.score(h.tokens, r.tokens)).epsilon(1e-12));
    }
}

TEST_CASE("METEOR chooses the fewest chunks among maximal alignments")
{
    // Greedy left-to-right matching would pair the first "a" and produce three chunks.
    auto a = cmg::meteor_align(seq({"a", "b", "c", "a"}), seq({"b", "c", "a", "a"}));
    auto o = oracle::meteor_align({"a", "b", "c", "a"}, {"b", "c", "a", "a"});
    CHECK(a.matches == 4);
    CHECK(a.chunks == o.chunks);

    cmg::TokenSequence longer;
    for (int i = 0; i < 40; ++i)
        longer.tokens.push_back(i % 2 ? "x" : "y");
    auto self = cmg::meteor_align(longer, longer);
    CHECK(self.matches == 40);
    CHECK(self.chunks == 1);
}

TEST_CASE("corpus evaluation")
{
    std::vector<std::pair<std::string, std::string>> pairs{
        {"Fix NPE in parser", "Fix NPE in parser"},
        {"add cache", "Add a cache layer for queries"},
        {"", "Update docs"},
    };
    auto serial = cmg::evaluate_corpus(pairs, {}, cmg::Execution::serial);
    auto parallel = cmg::evaluate_corpus(pairs, {}, cmg::Execution::parallel);
    REQUIRE(serial.per_sample.size() == 3);
    CHECK(serial.per_sample == parallel.per_sample);
    CHECK(serial.per_sample[0].bleu == doctest::Approx(100.0));
    CHECK(serial.per_sample[0].rouge_l == doctest::Approx(100.0));
    CHECK(serial.per_sample[2].bleu == 0.0);
    CHECK(serial.mean.bleu == doctest::Approx((serial.per_sample[0].bleu + serial.per_sample[1].bleu) / 3));
    CHECK_THROWS_AS(cmg::evaluate_corpus({}, {}), cmg::EmptyCorpus);

    auto j = cmg::to_json(serial);
    CHECK(j.contains("bleu"));
    CHECK(j["per_sample"].size() == 3);
}
