#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace iprop {

enum class ErrorKind {
    argument,      // bad caller input (ranges, shapes, flags)
    dimension,     // image or map dimensions violate an invariant
    decode,        // malformed image payload
    format,        // unknown or malformed attribution file
    validation,    // payload parsed but values are not acceptable
    io,            // filesystem failure
    structural,    // graph cannot be normalized (isolated node)
    numerical,     // non-finite values, singular factorization
    divergence,    // infinite KL divergence
    refused,       // oracle size cap exceeded
    spawn,         // predictor process could not be started
    timeout,       // predictor did not answer in time
    protocol,      // predictor sent something unparseable or mismatched
    session_dead,  // predictor exited or the session was killed
};

std::string_view to_string(ErrorKind kind);

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& message);

    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

[[noreturn]] void fail(ErrorKind kind, const std::string& message);

}  // namespace iprop
