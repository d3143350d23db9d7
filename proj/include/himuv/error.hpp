#pragma once

#include <stdexcept>
#include <string>

namespace himuv {

// Each kind maps to a distinct CLI exit code.
enum class ErrorKind : int {
    usage = 2,
    io = 3,
    parse = 4,
    config = 5,
    consistency = 6,
    input = 7,
    numeric = 8,
    version = 9,
    degenerate = 10,
};

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& message) : std::runtime_error(message), kind_(kind) {}

    ErrorKind kind() const noexcept { return kind_; }
    int exit_code() const noexcept { return static_cast<int>(kind_); }

private:
    ErrorKind kind_;
};

const char* to_string(ErrorKind kind) noexcept;

}  // namespace himuv
