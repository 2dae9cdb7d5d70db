#include <cmg/errors.hpp>

namespace cmg {

MalformedDiff::MalformedDiff(std::size_t offset, const std::string& reason)
    : Error("malformed diff at byte " + std::to_string(offset) + ": " + reason), m_offset(offset)
{
}

} // namespace cmg
