#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>

#include <cmg/example_pair.hpp>

namespace cmg {

inline constexpr std::size_t max_prompt_examples = 5;

/// Prompt template with three sections. Placeholders: {{retrieved_diff}} and {{retrieved_msg}}
/// in the example block, {{query_diff}} in the query block.
///
/// File format: a line "%% instruction", "%% example" or "%% query" starts a section; each
/// section runs to the next marker. Trailing newlines of a section are kept as written.
struct PromptTemplate {
    std::string instruction;
    std::string example_block;
    std::string query_block;

    /// Throws ConfigError unless each slot appears exactly once in its own block and nowhere else.
    void validate() const;

    /// Stable identifier of the template text.
    std::string hash() const;

    static PromptTemplate parse(std::string_view text);
    static PromptTemplate load(const std::filesystem::path& path);
    static const PromptTemplate& builtin();
};

enum class ExampleOrder {
    ascending_relevance,  // most relevant example last, next to the query
    descending_relevance,
};

struct PromptOptions {
    std::size_t max_chars = 48000;
    ExampleOrder order = ExampleOrder::ascending_relevance;
};

struct RenderedPrompt {
    std::string text;
    std::size_t examples_used = 0;
    std::size_t examples_dropped = 0; // evicted to fit max_chars
};

/// Instruction followed by the query block. Throws EmptyQuery.
std::string build_direct_prompt(std::string_view query_diff, const PromptTemplate& tpl = PromptTemplate::builtin());

/// Instruction, example blocks, query block. While the text exceeds max_chars the lowest-scored
/// example is dropped; the query itself is never shortened. With no examples this equals the
/// direct prompt. Throws EmptyQuery, TooManyExamples.
RenderedPrompt build_rag_prompt(std::string_view query_diff, std::span<const ExamplePair> examples,
                                const PromptTemplate& tpl = PromptTemplate::builtin(), const PromptOptions& options = {});

/// Replaces {{name}} placeholders in one left-to-right pass; substituted text is not rescanned.
std::string substitute(std::string_view text, std::string_view query_diff, std::string_view retrieved_diff,
                       std::string_view retrieved_msg);

} // namespace cmg
