#include "iprop/error.hpp"

namespace iprop {

std::string_view to_string(ErrorKind kind) {
    switch (kind) {
        case ErrorKind::argument: return "argument error";
        case ErrorKind::dimension: return "dimension error";
        case ErrorKind::decode: return "decode error";
        case ErrorKind::format: return "format error";
        case ErrorKind::validation: return "validation error";
        case ErrorKind::io: return "I/O error";
        case ErrorKind::structural: return "structural error";
        case ErrorKind::numerical: return "numerical error";
        case ErrorKind::divergence: return "divergence error";
        case ErrorKind::refused: return "refused";
        case ErrorKind::spawn: return "spawn error";
        case ErrorKind::timeout: return "timeout";
        case ErrorKind::protocol: return "protocol error";
        case ErrorKind::session_dead: return "session dead";
    }
    return "error";
}

Error::Error(ErrorKind kind, const std::string& message)
    : std::runtime_error(std::string(to_string(kind)) + ": " + message), kind_(kind) {}

void fail(ErrorKind kind, const std::string& message) { throw Error(kind, message); }

}  // namespace iprop
