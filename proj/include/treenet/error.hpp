#ifndef TREENET_ERROR_HPP
#define TREENET_ERROR_HPP

#include <stdexcept>
#include <string>

namespace treenet {

/// Failure categories. The CLI prints them as the first field of its
/// one-line error message, so keep the names stable.
enum class ErrorKind {
    shape,      // tensor or layer shape contract broken
    config,     // invalid configuration or precondition
    io,         // unreadable / unwritable file, missing data
    stale,      // upstream artifact missing or hash mismatch
    numeric,    // non-finite loss or out-of-range values
    locked,     // run directory in use
    usage
};

inline const char* to_string(ErrorKind kind)
{
    switch (kind) {
    case ErrorKind::shape: return "shape";
    case ErrorKind::config: return "config";
    case ErrorKind::io: return "io";
    case ErrorKind::stale: return "stale";
    case ErrorKind::numeric: return "numeric";
    case ErrorKind::locked: return "locked";
    case ErrorKind::usage: return "usage";
    }
    return "unknown";
}

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& message)
        : std::runtime_error(message), kind_(kind)
    {
    }

    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& message)
{
    throw Error(kind, message);
}

inline void require(bool condition, ErrorKind kind, const std::string& message)
{
    if (!condition)
        fail(kind, message);
}

} // namespace treenet

#endif // TREENET_ERROR_HPP
