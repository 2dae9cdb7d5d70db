#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace cmg {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class MalformedDiff : public Error {
public:
    MalformedDiff(std::size_t offset, const std::string& reason);

    /// Byte offset into the raw diff of the line that failed to parse.
    std::size_t offset() const { return m_offset; }

private:
    std::size_t m_offset;
};

class RepoNotFound : public Error { using Error::Error; };
class BranchNotFound : public Error { using Error::Error; };
class EmptyCorpus : public Error { using Error::Error; };
class CorpusTooSmall : public Error { using Error::Error; };
class UnknownDocument : public Error { using Error::Error; };
class DimensionMismatch : public Error { using Error::Error; };
class EmptyScope : public Error { using Error::Error; };
class ProviderUnavailable : public Error { using Error::Error; };
class EmptyGeneration : public Error { using Error::Error; };
class EmptyQuery : public Error { using Error::Error; };
class TooManyExamples : public Error { using Error::Error; };
class ManifestMismatch : public Error { using Error::Error; };
class ConfigError : public Error { using Error::Error; };

// Thrown by provider backends for failures worth retrying (timeouts, 5xx, 429).
class TransientProviderError : public Error { using Error::Error; };

} // namespace cmg
