#pragma once

// Synthetic commits and corpora for tests.

#include <cmg/commit.hpp>
#include <cmg/diff.hpp>

#include <array>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

namespace synth {

inline const std::array<const char*, 9> extensions{".java", ".cpp", ".scala", ".ts", ".py", ".lua", ".go", ".rs", ".erl"};

inline const std::vector<std::string>& words()
{
    static const std::vector<std::string> w{
        "fix",    "add",     "remove", "update", "refactor", "parser",  "cache",   "client", "server", "config",
        "test",   "handler", "query",  "index",  "buffer",   "stream",  "thread",  "lock",   "timeout", "retry",
        "null",   "check",   "error",  "message", "logging", "metrics", "schema",  "table",  "column", "row",
        "bump",   "version", "docs",   "build",  "support",  "option",  "default", "value",  "path",   "file",
    };
    return w;
}

inline std::string pick(std::mt19937_64& rng, const std::vector<std::string>& from)
{
    return from[rng() % from.size()];
}

inline std::string sha_for(std::uint64_t a, std::uint64_t b)
{
    return cmg::hex64(cmg::fnv1a64(std::to_string(a) + ':' + std::to_string(b))) +
           cmg::hex64(cmg::fnv1a64(std::to_string(b) + ';' + std::to_string(a))) +
           cmg::hex64(cmg::fnv1a64(std::to_string(a * 31 + b))).substr(0, 8);
}

struct FileEdit {
    std::string path;
    std::vector<std::string> context;
    std::vector<std::string> removed;
    std::vector<std::string> added;
};

/// One-hunk-per-file unified diff in git's layout.
inline std::string render_diff(const std::vector<FileEdit>& edits)
{
    std::string out;
    for (const auto& e : edits) {
        out += "diff --git a/" + e.path + " b/" + e.path + "\n";
        out += "index 1111111..2222222 100644\n";
        out += "--- a/" + e.path + "\n+++ b/" + e.path + "\n";
        auto old_len = e.context.size() + e.removed.size();
        auto new_len = e.context.size() + e.added.size();
        out += "@@ -1," + std::to_string(old_len) + " +1," + std::to_string(new_len) + " @@\n";
        for (const auto& l : e.context)
            out += " " + l + "\n";
        for (const auto& l : e.removed)
            out += "-" + l + "\n";
        for (const auto& l : e.added)
            out += "+" + l + "\n";
    }
    return out;
}

inline std::string sentence(std::mt19937_64& rng, std::size_t n)
{
    std::string s;
    for (std::size_t i = 0; i < n; ++i) {
        if (i)
            s += ' ';
        s += pick(rng, words());
    }
    return s;
}

inline cmg::CommitRecord make_record(std::string repo, std::string sha, std::string message, std::vector<FileEdit> edits,
                                     cmg::Timestamp date, std::string author = "dev")
{
    cmg::CommitRecord r;
    r.diff = render_diff(edits);
    r.message = std::move(message);
    r.repo_full_name = std::move(repo);
    r.sha = std::move(sha);
    r.author_name = std::move(author);
    r.date = date;
    auto parsed = cmg::parse_diff(r.diff);
    r.loc = cmg::count_loc(parsed);
    r.files = cmg::changed_files(parsed);
    return r;
}

/// Random commits spread over `repos` projects and all nine languages.
inline std::vector<cmg::CommitRecord> random_corpus(std::size_t count, std::size_t repos, std::uint64_t seed)
{
    std::mt19937_64 rng(seed);
    std::vector<cmg::CommitRecord> out;
    for (std::size_t i = 0; i < count; ++i) {
        auto repo = "org" + std::to_string(i % repos) + "/proj" + std::to_string(i % repos);
        std::string ext = extensions[i % extensions.size()];
        std::vector<FileEdit> edits;
        auto files = 1 + rng() % 3;
        for (std::size_t f = 0; f < files; ++f) {
            FileEdit e;
            e.path = "src/" + pick(rng, words()) + std::to_string(f) + ext;
            for (std::size_t l = 0, n = 1 + rng() % 4; l < n; ++l)
                e.context.push_back(sentence(rng, 3 + rng() % 5));
            for (std::size_t l = 0, n = rng() % 3; l < n; ++l)
                e.removed.push_back(sentence(rng, 2 + rng() % 6));
            for (std::size_t l = 0, n = 1 + rng() % 4; l < n; ++l)
                e.added.push_back(sentence(rng, 2 + rng() % 6));
            edits.push_back(std::move(e));
        }
        out.push_back(make_record(repo, sha_for(seed, i), sentence(rng, 5 + rng() % 8), std::move(edits),
                                  1600000000 + static_cast<cmg::Timestamp>(rng() % 100000000)));
    }
    return out;
}

/// Pairs of commits with identical messages whose diffs differ in a single context line. Each pair
/// uses tokens no other pair shares, so a pair member's nearest neighbour is its twin.
inline std::vector<cmg::CommitRecord> twin_corpus(std::size_t pairs, std::size_t repos, std::uint64_t seed)
{
    std::mt19937_64 rng(seed);
    std::vector<cmg::CommitRecord> out;
    for (std::size_t p = 0; p < pairs; ++p) {
        auto repo = "twins" + std::to_string(p % repos) + "/proj";
        auto tag = "zq" + std::to_string(p) + "w";
        std::string ext = extensions[p % extensions.size()];
        std::string message = "fix " + tag + "0 handling in " + tag + "1 " + pick(rng, words());
        for (int twin = 0; twin < 2; ++twin) {
            FileEdit e;
            e.path = "src/" + tag + ext;
            e.context = {"shared " + tag + "2 " + tag + "3", twin == 0 ? "first " + tag + "4" : "second " + tag + "4", pick(rng, words())};
            e.removed = {"old " + tag + "5 " + tag + "6"};
            e.added = {"new " + tag + "7 " + tag + "8", "call " + tag + "9"};
            out.push_back(make_record(repo, sha_for(seed + 7, p * 2 + static_cast<std::size_t>(twin)), message, {e},
                                      1600000000 + static_cast<cmg::Timestamp>(p * 10 + static_cast<std::size_t>(twin))));
        }
    }
    return out;
}

struct FilterFixture {
    std::vector<cmg::CommitRecord> records;
    std::array<std::size_t, 5> expected_rejected{};
    std::size_t expected_retained = 0;
};

inline std::string words_message(std::size_t n)
{
    std::string s;
    for (std::size_t i = 0; i < n; ++i)
        s += (i ? " w" : "w") + std::to_string(i);
    return s;
}

/// Diff whose raw line count (headers included) is exactly `lines` (>= 6).
inline std::string diff_with_raw_lines(const std::string& path, std::size_t lines)
{
    FileEdit e;
    e.path = path;
    for (std::size_t i = 0; i + 5 < lines; ++i)
        e.added.push_back("line " + std::to_string(i));
    return render_diff({e});
}

/// 50 records: 30 that pass every rule (several on a boundary) and 20 known violators.
inline FilterFixture filter_corpus()
{
    FilterFixture fx;
    std::mt19937_64 rng(50);
    std::size_t serial = 0;
    auto add = [&](std::string message, std::string author, std::vector<FileEdit> edits) -> cmg::CommitRecord& {
        fx.records.push_back(make_record("acme/widgets", sha_for(50, serial), std::move(message), std::move(edits),
                                         1700000000 + static_cast<cmg::Timestamp>(serial), std::move(author)));
        ++serial;
        return fx.records.back();
    };
    auto code_edit = [&](const std::string& ext) {
        FileEdit e;
        e.path = "src/" + pick(rng, words()) + ext;
        e.context = {sentence(rng, 4)};
        e.added = {sentence(rng, 3)};
        e.removed = {sentence(rng, 3)};
        return e;
    };

    // Passing records, including boundary values.
    for (std::size_t i = 0; i < 24; ++i)
        add(sentence(rng, 5 + i % 20), "dev" + std::to_string(i), {code_edit(extensions[i % extensions.size()])});
    add(words_message(5), "alice", {code_edit(".go")});
    add(words_message(50), "bob", {code_edit(".rs")});
    add("merged-cell rendering fix in table view", "carol", {code_edit(".ts")});
    add("improve the robot arm controller loop", "botanist", {code_edit(".py")});
    {
        auto& r = add("add a generated lookup table here", "dave", {});
        r.diff = diff_with_raw_lines("gen/table.cpp", 300);
    }
    {
        FileEdit docs;
        docs.path = "README.md";
        docs.added = {"docs"};
        add("update readme and add the parser", "erin", {docs, code_edit(".lua")});
    }

    // R1: message length
    add(words_message(4), "frank", {code_edit(".java")});
    add(words_message(4), "grace", {code_edit(".java")});
    add(words_message(51), "heidi", {code_edit(".java")});
    add(words_message(51), "ivan", {code_edit(".java")});
    add("", "judy", {code_edit(".java")});
    add(words_message(4), "dependabot[bot]", {code_edit(".java")}); // also R4, first rule wins
    fx.expected_rejected[0] = 6;

    // R2: diff length
    for (int i = 0; i < 3; ++i) {
        auto& r = add("regenerate the protocol buffer bindings", "ken", {});
        r.diff = diff_with_raw_lines("gen/proto" + std::to_string(i) + ".java", 301);
    }
    fx.expected_rejected[1] = 3;

    // R3: no source file
    for (const char* path : {"README.md", "docs/guide.txt", "CHANGELOG", "site/index.html"}) {
        FileEdit e;
        e.path = path;
        e.added = {"text"};
        add("document the new configuration options", "lee", {e});
    }
    fx.expected_rejected[2] = 4;

    // R4: bot authors
    add("bump the jackson dependency to latest", "dependabot[bot]", {code_edit(".java")});
    add("bump the jackson dependency to latest", "renovate[bot]", {code_edit(".java")});
    add("update all the lockfile dependency pins", "Renovate[BOT]", {code_edit(".ts")});
    fx.expected_rejected[3] = 3;

    // R5: merge / revert
    add("Merge branch 'main' into feature x", "mallory", {code_edit(".scala")});
    add("merge pull request from fork branch", "mallory", {code_edit(".scala")});
    add("Revert \"add the cache layer\" again", "niaj", {code_edit(".erl")});
    add("revert: the cache layer was wrong", "niaj", {code_edit(".erl")});
    fx.expected_rejected[4] = 4;

    fx.expected_retained = 30;
    for (auto& r : fx.records) {
        auto parsed = cmg::parse_diff(r.diff);
        r.loc = cmg::count_loc(parsed);
        r.files = cmg::changed_files(parsed);
    }
    return fx;
}

} // namespace synth
