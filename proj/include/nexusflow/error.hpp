#pragma once

#include <stdexcept>
#include <string>

namespace nexusflow {

enum class ErrorKind {
    ShapeMismatch,
    InvalidArgument,
    NotSymmetric,
    StaleCache,
    NonFinite,
    Divergence,
    Io,
    Schema,
    Version,
};

const char* to_string(ErrorKind kind);

// Every failure surfaced by the library carries a kind so callers (the CLI in
// particular) can map it onto an exit code without parsing messages.
class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& what)
        : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

}  // namespace nexusflow
