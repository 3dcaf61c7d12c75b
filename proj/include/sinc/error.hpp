#pragma once

#include <stdexcept>
#include <string>

namespace sinc {

enum class ErrorKind {
    invalid_input,
    invalid_config,
    invalid_shape,
    numeric_failure,
    checksum,
    incompatible_version,
    io,
};

inline const char* to_string(ErrorKind kind) noexcept {
    switch (kind) {
        case ErrorKind::invalid_input: return "invalid-input";
        case ErrorKind::invalid_config: return "invalid-config";
        case ErrorKind::invalid_shape: return "invalid-shape";
        case ErrorKind::numeric_failure: return "numeric-failure";
        case ErrorKind::checksum: return "checksum";
        case ErrorKind::incompatible_version: return "incompatible-version";
        case ErrorKind::io: return "io";
    }
    return "unknown";
}

/// Every failure raised by the library carries a kind so callers (the CLI in
/// particular) can map it onto an exit code without parsing messages.
class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& what)
        : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) {
    throw Error(kind, what);
}

inline void require(bool cond, ErrorKind kind, const std::string& what) {
    if (!cond) fail(kind, what);
}

}  // namespace sinc
