#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

namespace cmg {

enum class LineKind : char {
    context = ' ',
    added = '+',
    deleted = '-',
};

struct DiffLine {
    LineKind kind = LineKind::context;
    std::string text; // without the leading tag character and the trailing newline
    // Raw "\ No newline at end of file" marker that followed this line, if any.
    std::string eof_marker;
};

struct Hunk {
    std::size_t old_start = 0;
    std::size_t old_len = 0;
    std::size_t new_start = 0;
    std::size_t new_len = 0;
    std::string heading; // text after the closing "@@", e.g. a function signature
    std::vector<DiffLine> lines;

    std::size_t added() const;
    std::size_t deleted() const;

    /// Re-serializes the tagged lines into hunk body text (everything after the header line).
    std::string render_body() const;
};

/// Languages recognised by the corpus filters; everything else is `other`.
enum class Language {
    java,
    cpp,
    scala,
    typescript,
    python,
    lua,
    go,
    rust,
    erlang,
    other,
};

inline constexpr std::size_t mainstream_language_count = 9;

std::string_view language_name(Language lang);
Language language_for_path(std::string_view path);

struct FileChange {
    std::string old_path; // "/dev/null" for added files
    std::string new_path; // "/dev/null" for deleted files
    std::vector<Hunk> hunks;
    bool binary = false;
    Language language = Language::other;

    /// The path the change is reported under: the new path, or the old one for deletions.
    const std::string& path() const;
    std::size_t added() const;
    std::size_t deleted() const;
};

struct ParsedDiff {
    std::vector<FileChange> file_changes;

    std::size_t added() const;
    std::size_t deleted() const;
};

/// Parses git-style unified diffs, including multi-file `diff --git` output.
/// Throws MalformedDiff when a hunk header or hunk body cannot be parsed.
ParsedDiff parse_diff(std::string_view raw);

/// Added plus deleted lines over all files.
std::size_t count_loc(const ParsedDiff& diff);

/// Newline-delimited line count of the raw payload; a trailing unterminated line counts as one.
std::size_t diff_line_count(std::string_view raw);

/// Distinct paths touched by the diff, in first-seen order.
std::vector<std::string> changed_files(const ParsedDiff& diff);

} // namespace cmg
