#pragma once

#include <stdexcept>

namespace pf {

// Error taxonomy shared by all modules. The CLI maps these onto exit codes.
struct ShapeError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct FormatError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct NumericError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

}  // namespace pf
