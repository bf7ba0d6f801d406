#pragma once

#include <stdexcept>
#include <string>

namespace fusion {

enum class ErrorKind {
    Config,     // malformed or incomplete run configuration
    Schema,     // column absent, wrong role or kind
    Data,       // values violate a precondition (empty source, single arm, ...)
    Numerical,  // rank deficiency, degenerate fits
};

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}

    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

const char* to_string(ErrorKind kind) noexcept;

/// Process exit code for the CLI: 2 config/schema, 3 data, 4 numerical.
int exit_code(ErrorKind kind) noexcept;

}  // namespace fusion
