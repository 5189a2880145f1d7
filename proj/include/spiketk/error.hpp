#pragma once

#include <stdexcept>
#include <string>

namespace spiketk {

// Error categories map one-to-one onto CLI exit codes:
//   PreconditionError -> 2, IoError -> 3, InvariantError -> 4.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Caller supplied an argument outside the operation's contract
/// (bad shape, too-short stream, out-of-range index, ...).
class PreconditionError : public Error {
public:
    using Error::Error;
};

/// File could not be opened, read, written, or was truncated.
class IoError : public Error {
public:
    using Error::Error;
};

/// An internal invariant was violated. Indicates a bug, not bad input.
class InvariantError : public Error {
public:
    using Error::Error;
};

inline void require(bool condition, const std::string& message) {
    if (!condition) throw PreconditionError(message);
}

inline void ensure(bool condition, const std::string& message) {
    if (!condition) throw InvariantError(message);
}

}  // namespace spiketk
