#include <doctest.h>

#include <cmg/tokenizer.hpp>

#include <fstream>

namespace {

std::string joined(std::string_view text, bool drop = false)
{
    cmg::TokenizerOptions opts;
    opts.drop_symbol_tokens = drop;
    return cmg::tokenize(text, opts).join();
}

} // namespace

TEST_CASE("identifier splitting")
{
    CHECK(joined("bug-fix") == "bug - fix");
    CHECK(joined("HttpClient") == "http client");
    CHECK(joined("test_case") == "test _ case");
    CHECK(joined("handleRequest") == "handle request");
    CHECK(joined("FIX") == joined("fix"));
}

TEST_CASE("symbol tokens can be dropped")
{
    CHECK(joined("bug-fix", true) == "bug fix");
    CHECK(joined("foo.bar(baz)", true) == "foo bar baz");
    CHECK(joined("---", true).empty());
}

TEST_CASE("base tokenizer keeps numbers together")
{
    CHECK(cmg::base_tokenize("pi is 3.14, roughly").join() == "pi is 3.14 , roughly");
    CHECK(cmg::base_tokenize("1,000 items.").join() == "1,000 items .");
    CHECK(cmg::base_tokenize("x86-64").join() == "x86 - 64");
    CHECK(cmg::base_tokenize("well-known").join() == "well-known");
    CHECK(cmg::base_tokenize("a(b)").join() == "a ( b )");
}

TEST_CASE("whitespace only")
{
    CHECK(cmg::tokenize("").empty());
    CHECK(cmg::tokenize(" \t\n ").empty());
}

TEST_CASE("golden file")
{
    std::ifstream in(CMG_FIXTURES_DIR "/tokenizer_golden.tsv");
    REQUIRE(in);
    std::string line;
    int cases = 0;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#')
            continue;
        auto tab = line.rfind('\t');
        REQUIRE(tab != std::string::npos);
        auto input = line.substr(0, tab);
        auto expected = line.substr(tab + 1);
        CAPTURE(input);
        CHECK(joined(input) == expected);
        ++cases;
    }
    CHECK(cases >= 30);
}
