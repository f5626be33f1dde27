#pragma once

#include <stdexcept>
#include <string>

namespace ccam {

// Error categories map onto CLI exit codes (config 2, numeric 3, io 4).
// Shape and precondition violations raised by library code are
// std::invalid_argument.

class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class NumericError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace ccam
