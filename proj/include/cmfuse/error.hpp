#pragma once

#include <stdexcept>
#include <string>

namespace cmfuse {

// Error categories map 1:1 onto CLI exit codes.
enum class ErrorKind : int {
    Usage = 2,
    Io = 3,
    Invariant = 4,
    Numeric = 5,
};

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& message)
        : std::runtime_error(message), kind_(kind) {}

    ErrorKind kind() const { return kind_; }
    int exit_code() const { return static_cast<int>(kind_); }

private:
    ErrorKind kind_;
};

inline Error usage_error(const std::string& msg) { return Error(ErrorKind::Usage, msg); }
inline Error io_error(const std::string& msg) { return Error(ErrorKind::Io, msg); }
inline Error invariant_error(const std::string& msg) { return Error(ErrorKind::Invariant, msg); }
inline Error numeric_error(const std::string& msg) { return Error(ErrorKind::Numeric, msg); }

}  // namespace cmfuse
