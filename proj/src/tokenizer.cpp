#include <cmg/tokenizer.hpp>

namespace cmg {

namespace {

bool is_space(char c)
{
    return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\v' || c == '\f';
}

bool is_digit(char c) { return c >= '0' && c <= '9'; }
bool is_upper(char c) { return c >= 'A' && c <= 'Z'; }
bool is_lower(char c) { return c >= 'a' && c <= 'z'; }

// Bytes >= 0x80 belong to multi-byte UTF-8 sequences and pass through as word characters.
bool is_word_char(char c)
{
    return is_digit(c) || is_upper(c) || is_lower(c) || static_cast<unsigned char>(c) >= 0x80;
}

// The first 13a substitution class: {|}~ [\]^_` !"#$%& ()*+ :;<=>?@ /
bool always_isolated(char c)
{
    auto u = static_cast<unsigned char>(c);
    return (u >= '{' && u <= '~') || (u >= '[' && u <= '`') || (u >= '!' && u <= '&') || (u >= '(' && u <= '+') || (u >= ':' && u <= '@') || u == '/';
}

char to_lower(char c)
{
    return is_upper(c) ? static_cast<char>(c - 'A' + 'a') : c;
}

void split_camel(std::string_view word, std::vector<std::string>& out)
{
    std::size_t start = 0;
    for (std::size_t i = 1; i < word.size(); ++i) {
        bool lower_to_upper = is_lower(word[i - 1]) && is_upper(word[i]);
        bool acronym_end = is_upper(word[i - 1]) && is_upper(word[i]) && i + 1 < word.size() && is_lower(word[i + 1]);
        if (lower_to_upper || acronym_end) {
            out.emplace_back(word.substr(start, i - start));
            start = i;
        }
    }
    out.emplace_back(word.substr(start));
}

} // namespace

std::string TokenSequence::join() const
{
    std::string out;
    for (const auto& t : tokens) {
        if (!out.empty())
            out += ' ';
        out += t;
    }
    return out;
}

TokenSequence base_tokenize(std::string_view text)
{
    std::string spaced;
    spaced.reserve(text.size() * 2);
    for (std::size_t i = 0; i < text.size(); ++i) {
        char c = text[i];
        bool prev_digit = i > 0 && is_digit(text[i - 1]);
        bool next_digit = i + 1 < text.size() && is_digit(text[i + 1]);
        bool isolate = always_isolated(c)
            || ((c == '.' || c == ',') && !(prev_digit && next_digit))
            || (c == '-' && prev_digit);
        if (isolate) {
            spaced += ' ';
            spaced += c;
            spaced += ' ';
        } else {
            spaced += c;
        }
    }

    TokenSequence out;
    std::size_t i = 0;
    while (i < spaced.size()) {
        while (i < spaced.size() && is_space(spaced[i]))
            ++i;
        std::size_t start = i;
        while (i < spaced.size() && !is_space(spaced[i]))
            ++i;
        if (i > start)
            out.tokens.emplace_back(spaced.substr(start, i - start));
    }
    return out;
}

TokenSequence enhance(const TokenSequence& tokens, const TokenizerOptions& options)
{
    std::vector<std::string> pieces;
    for (const auto& token : tokens) {
        std::size_t i = 0;
        while (i < token.size()) {
            if (is_space(token[i])) {
                ++i;
                continue;
            }
            if (!is_word_char(token[i])) {
                if (!options.drop_symbol_tokens)
                    pieces.emplace_back(1, token[i]);
                ++i;
                continue;
            }
            std::size_t start = i;
            while (i < token.size() && is_word_char(token[i]))
                ++i;
            split_camel(std::string_view(token).substr(start, i - start), pieces);
        }
    }
    for (auto& p : pieces) {
        for (auto& c : p)
            c = to_lower(c);
    }
    return TokenSequence{std::move(pieces)};
}

TokenSequence tokenize(std::string_view text, const TokenizerOptions& options)
{
    return enhance(base_tokenize(text), options);
}

} // namespace cmg
