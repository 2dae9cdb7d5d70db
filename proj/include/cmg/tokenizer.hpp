#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

namespace cmg {

/// Ordered tokens; after `enhance` every token is non-empty, lowercase and whitespace-free.
struct TokenSequence {
    std::vector<std::string> tokens;

    std::size_t size() const { return tokens.size(); }
    bool empty() const { return tokens.empty(); }
    const std::string& operator[](std::size_t i) const { return tokens[i]; }
    auto begin() const { return tokens.begin(); }
    auto end() const { return tokens.end(); }

    /// Space-joined form.
    std::string join() const;

    bool operator==(const TokenSequence&) const = default;
};

struct TokenizerOptions {
    // Drop symbol tokens instead of keeping them ("bug-fix" -> [bug, fix]).
    bool drop_symbol_tokens = false;
};

/// 13a-style splitting: isolates punctuation that is not intra-word, then splits on whitespace.
/// Case is preserved.
TokenSequence base_tokenize(std::string_view text);

/// Symbol segmentation, camelCase decomposition and lowercasing, in that order.
TokenSequence enhance(const TokenSequence& tokens, const TokenizerOptions& options = {});

TokenSequence tokenize(std::string_view text, const TokenizerOptions& options = {});

} // namespace cmg
