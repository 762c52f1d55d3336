#pragma once

#include <stdexcept>
#include <string>

namespace aar {

// Base of every error raised by the library. The CLI maps subclasses onto
// process exit codes (validation -> 3, divergence -> 4).
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class IoError : public Error {
public:
    using Error::Error;
};

class FormatError : public Error {
public:
    using Error::Error;
};

// Precondition / consistency violations on user-provided data or models.
class ValidationError : public Error {
public:
    using Error::Error;
};

// Non-finite losses or activations during training or inference.
class DivergenceError : public Error {
public:
    using Error::Error;
};

inline void require(bool cond, const std::string & what) {
    if (!cond) {
        throw ValidationError(what);
    }
}

} // namespace aar
