#pragma once

namespace cmg {

/// Selects between the OpenMP kernel and its serial reference.
enum class Execution {
    serial,
    parallel,
};

} // namespace cmg
