#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <functional>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include <cmg/commit.hpp>
#include <cmg/execution.hpp>

namespace cmg {

struct IngestOptions {
    std::string branch = "HEAD";
    Timestamp since = 0;
    // Overrides the name derived from the origin remote (or directory name).
    std::optional<std::string> repo_full_name;
};

/// Runs `git log` on a local clone and calls `sink` once per non-merge commit committed at or
/// after `since`, newest first. Messages are raw (full text); loc and files come from the diff.
/// Throws RepoNotFound / BranchNotFound.
void ingest_repo(const std::filesystem::path& git_dir, const IngestOptions& options,
                 const std::function<void(CommitRecord&&)>& sink);

std::vector<CommitRecord> ingest_repo(const std::filesystem::path& git_dir, const IngestOptions& options);

/// "owner/name" from the origin remote URL, falling back to the directory name.
std::string derive_repo_name(const std::filesystem::path& git_dir);

/// First line of the message with PR references ("(#123)", "#123") removed and whitespace collapsed.
std::string preprocess_message(std::string_view raw);

enum class FilterRule { r1_message_length = 0, r2_diff_length, r3_file_type, r4_bot_author, r5_merge_revert };
inline constexpr std::size_t filter_rule_count = 5;

enum class DiffLengthMode {
    raw_lines,     // every line of the payload, headers included
    changed_lines, // added + deleted only
};

struct FilterConfig {
    std::size_t min_words = 5;
    std::size_t max_words = 50;
    std::size_t max_diff_lines = 300;
    DiffLengthMode diff_length_mode = DiffLengthMode::raw_lines;
    // Empty means: the nine mainstream languages recognised by language_for_path.
    std::set<std::string> source_extensions;
    std::string bot_marker = "[bot]";
    std::vector<std::string> rejected_keywords{"merge", "revert"};
};

struct FilterReport {
    std::size_t input_count = 0;
    std::array<std::size_t, filter_rule_count> rejected{};
    std::size_t retained_count = 0;

    std::size_t total_rejected() const;
    bool reconciles() const { return retained_count + total_rejected() == input_count; }

    FilterReport& operator+=(const FilterReport& other);
    bool operator==(const FilterReport&) const = default;
};

nlohmann::json to_json(const FilterReport& report);

std::size_t word_count(std::string_view message);

/// The first rule the record violates, or nullopt when it passes all of them.
std::optional<FilterRule> first_failing_rule(const CommitRecord& record, const FilterConfig& config = {});

struct FilterResult {
    std::vector<CommitRecord> retained;
    FilterReport report;
};

FilterResult apply_filters(std::vector<CommitRecord> records, const FilterConfig& config = {},
                           Execution exec = Execution::parallel);

struct LengthSummary {
    double mean = 0;
    std::size_t max = 0;
    std::size_t median = 0;
};

struct CorpusStats {
    LengthSummary diff_tokens;
    LengthSummary message_tokens;
    std::size_t median_files = 0;
    std::size_t median_changed_lines = 0;
};

nlohmann::json to_json(const CorpusStats& stats);

/// Lower-middle median; throws EmptyCorpus on an empty input.
std::size_t lower_median(std::vector<std::size_t> values);

/// Throws EmptyCorpus.
CorpusStats compute_stats(const std::vector<CommitRecord>& records, Execution exec = Execution::parallel);

} // namespace cmg
