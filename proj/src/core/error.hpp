#pragma once

#include <stdexcept>
#include <string>

namespace masknet {

enum class ErrorCode {
    invalid_argument,
    shape_mismatch,
    io,
    parse,
    bad_magic,
    bad_version,
    truncated,
    data,
    divergence,
    out_of_order,
    unsupported,
};

class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& message)
        : std::runtime_error(message), code_(code) {}

    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& message) {
    throw Error(code, message);
}

} // namespace masknet
