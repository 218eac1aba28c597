#pragma once

#include <stdexcept>
#include <string>

namespace spn {

// Invalid configuration value (bad option, inconsistent layer stack, ...).
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Invalid runtime input (shape mismatch, non-finite values, ...).
struct InputError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Malformed or inconsistent external data (dataset, checkpoint, image file).
struct DataError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Filesystem-level failure.
struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

} // namespace spn
