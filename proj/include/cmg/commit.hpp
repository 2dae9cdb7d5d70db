#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace cmg {

/// Seconds since the Unix epoch, UTC.
using Timestamp = std::int64_t;

/// One mined commit.
struct CommitRecord {
    std::string diff;
    std::string message;
    std::string repo_full_name;
    std::string sha;
    std::string author_name;
    std::vector<std::string> files;
    Timestamp date = 0;
    std::size_t loc = 0;

    bool operator==(const CommitRecord&) const = default;
};

bool is_valid_sha(std::string_view sha);

/// "2021-03-04T05:06:07Z"
std::string format_iso8601(Timestamp t);

/// Accepts "YYYY-MM-DD", "YYYY-MM-DDThh:mm:ss" with optional "Z" or "+hh:mm"/"-hh:mm" offset.
/// Throws cmg::Error on anything else.
Timestamp parse_iso8601(std::string_view text);

/// Lists every violated record invariant (empty when the record is well formed).
std::vector<std::string> check_record(const CommitRecord& record);

void to_json(nlohmann::json& j, const CommitRecord& r);
void from_json(const nlohmann::json& j, CommitRecord& r);

std::vector<CommitRecord> read_jsonl(const std::filesystem::path& path);
void write_jsonl(const std::filesystem::path& path, const std::vector<CommitRecord>& records);

/// Stable 64-bit FNV-1a content hash, used for cache keys and manifests.
std::uint64_t fnv1a64(std::string_view data, std::uint64_t seed = 0xcbf29ce484222325ULL);
std::string hex64(std::uint64_t value);

} // namespace cmg
