#pragma once

#include <string>

#include <cmg/commit.hpp>

namespace cmg {

/// Identifies an indexed commit.
struct DocHandle {
    std::string sha;
    std::string repo_full_name;

    bool operator==(const DocHandle&) const = default;
};

/// A retrieved (diff, message) pair used to augment a prompt.
struct ExamplePair {
    std::string diff;
    std::string message;
    DocHandle handle;
    Timestamp date = 0;
    double hybrid_score = 0;
};

} // namespace cmg
