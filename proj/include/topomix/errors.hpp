#pragma once

#include <stdexcept>
#include <string>

namespace topomix {

// Invalid data fed to an operation (bad CSV cell, non-monotone times, ...).
struct InputError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Configuration value out of its documented range, or an unknown key.
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Problem size exceeds a hard cap (e.g. Rips point count); the message
// says how to shrink the input.
struct ComplexityError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Linear algebra gave up (non-PD Gram after jitter escalation, ...).
struct NumericalError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// A pipeline stage could not find the artifact a previous stage should
// have written.
struct StageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

} // namespace topomix
