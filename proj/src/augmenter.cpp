#include <cmg/augmenter.hpp>
#include <cmg/commit.hpp>
#include <cmg/errors.hpp>

#include <algorithm>
#include <fstream>
#include <numeric>
#include <sstream>
#include <vector>

namespace cmg {

namespace {

constexpr std::string_view builtin_text = R"(%% instruction
You are an experienced software developer. Write a concise, one-line commit message for the code change shown as the query diff. Follow the wording, style and level of detail of the example commits from the same project when they are given.

%% example
### Example diff
```diff
{{retrieved_diff}}
```
### Example commit message
{{retrieved_msg}}

%% query
### Query diff
```diff
{{query_diff}}
```
### Commit message
)";

constexpr std::string_view slot_query = "{{query_diff}}";
constexpr std::string_view slot_diff = "{{retrieved_diff}}";
constexpr std::string_view slot_msg = "{{retrieved_msg}}";

std::size_t occurrences(std::string_view text, std::string_view needle)
{
    std::size_t n = 0;
    for (auto pos = text.find(needle); pos != std::string_view::npos; pos = text.find(needle, pos + needle.size()))
        ++n;
    return n;
}

void expect_slots(std::string_view block, std::string_view name, std::size_t query, std::size_t diff, std::size_t msg)
{
    if (occurrences(block, slot_query) != query || occurrences(block, slot_diff) != diff || occurrences(block, slot_msg) != msg)
        throw ConfigError("prompt template: wrong placeholders in the " + std::string(name) + " section");
}

// The template supplies the line break before the closing fence.
std::string_view chomp(std::string_view diff)
{
    if (!diff.empty() && diff.back() == '\n')
        diff.remove_suffix(1);
    return diff;
}

} // namespace

void PromptTemplate::validate() const
{
    expect_slots(instruction, "instruction", 0, 0, 0);
    expect_slots(example_block, "example", 0, 1, 1);
    expect_slots(query_block, "query", 1, 0, 0);
}

std::string PromptTemplate::hash() const
{
    std::string all = instruction + '\0' + example_block + '\0' + query_block;
    return hex64(fnv1a64(all));
}

PromptTemplate PromptTemplate::parse(std::string_view text)
{
    PromptTemplate tpl;
    std::string* current = nullptr;
    bool seen[3] = {false, false, false};
    std::size_t pos = 0;
    while (pos < text.size()) {
        auto eol = text.find('\n', pos);
        auto end = eol == std::string_view::npos ? text.size() : eol + 1;
        auto line = text.substr(pos, end - pos);
        auto bare = line;
        while (!bare.empty() && (bare.back() == '\n' || bare.back() == '\r'))
            bare.remove_suffix(1);
        pos = end;

        int section = -1;
        if (bare == "%% instruction")
            section = 0;
        else if (bare == "%% example")
            section = 1;
        else if (bare == "%% query")
            section = 2;
        if (section >= 0) {
            if (seen[section])
                throw ConfigError("prompt template: duplicate section " + std::string(bare));
            seen[section] = true;
            current = section == 0 ? &tpl.instruction : section == 1 ? &tpl.example_block : &tpl.query_block;
            continue;
        }
        if (!current) {
            if (bare.empty())
                continue;
            throw ConfigError("prompt template: text before the first section marker");
        }
        current->append(line);
    }
    if (!seen[0] || !seen[1] || !seen[2])
        throw ConfigError("prompt template: needs instruction, example and query sections");
    tpl.validate();
    return tpl;
}

PromptTemplate PromptTemplate::load(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw ConfigError("cannot read prompt template " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse(ss.str());
}

const PromptTemplate& PromptTemplate::builtin()
{
    static const PromptTemplate tpl = parse(builtin_text);
    return tpl;
}

std::string substitute(std::string_view text, std::string_view query_diff, std::string_view retrieved_diff,
                       std::string_view retrieved_msg)
{
    std::string out;
    out.reserve(text.size() + query_diff.size() + retrieved_diff.size() + retrieved_msg.size());
    std::size_t pos = 0;
    while (pos < text.size()) {
        auto open = text.find("{{", pos);
        if (open == std::string_view::npos) {
            out.append(text.substr(pos));
            break;
        }
        out.append(text.substr(pos, open - pos));
        auto rest = text.substr(open);
        if (rest.rfind(slot_query, 0) == 0) {
            out.append(query_diff);
            pos = open + slot_query.size();
        } else if (rest.rfind(slot_diff, 0) == 0) {
            out.append(retrieved_diff);
            pos = open + slot_diff.size();
        } else if (rest.rfind(slot_msg, 0) == 0) {
            out.append(retrieved_msg);
            pos = open + slot_msg.size();
        } else {
            out.append("{{");
            pos = open + 2;
        }
    }
    return out;
}

std::string build_direct_prompt(std::string_view query_diff, const PromptTemplate& tpl)
{
    if (query_diff.empty())
        throw EmptyQuery("query diff is empty");
    return tpl.instruction + substitute(tpl.query_block, chomp(query_diff), {}, {});
}

RenderedPrompt build_rag_prompt(std::string_view query_diff, std::span<const ExamplePair> examples, const PromptTemplate& tpl,
                                const PromptOptions& options)
{
    if (query_diff.empty())
        throw EmptyQuery("query diff is empty");
    if (examples.size() > max_prompt_examples)
        throw TooManyExamples("at most " + std::to_string(max_prompt_examples) + " example pairs, got " +
                              std::to_string(examples.size()));

    // Relevance order: higher score first; on equal scores the earlier input position wins.
    std::vector<std::size_t> by_relevance(examples.size());
    std::iota(by_relevance.begin(), by_relevance.end(), 0);
    std::stable_sort(by_relevance.begin(), by_relevance.end(),
                     [&](std::size_t a, std::size_t b) { return examples[a].hybrid_score > examples[b].hybrid_score; });

    std::vector<std::string> blocks;
    blocks.reserve(examples.size());
    for (auto i : by_relevance)
        blocks.push_back(substitute(tpl.example_block, {}, chomp(examples[i].diff), examples[i].message));
    const std::string query = substitute(tpl.query_block, chomp(query_diff), {}, {});

    std::size_t keep = blocks.size();
    auto total = [&](std::size_t n) {
        std::size_t len = tpl.instruction.size() + query.size();
        for (std::size_t i = 0; i < n; ++i)
            len += blocks[i].size();
        return len;
    };
    while (keep > 0 && total(keep) > options.max_chars)
        --keep;

    RenderedPrompt out;
    out.examples_used = keep;
    out.examples_dropped = blocks.size() - keep;
    out.text.reserve(total(keep));
    out.text += tpl.instruction;
    if (options.order == ExampleOrder::ascending_relevance) {
        for (std::size_t i = keep; i-- > 0;)
            out.text += blocks[i];
    } else {
        for (std::size_t i = 0; i < keep; ++i)
            out.text += blocks[i];
    }
    out.text += query;
    return out;
}

} // namespace cmg
