#include "sqm/error.hpp"

namespace sqm {

namespace {

std::string locate(const std::string& source, std::size_t line, const std::string& m) {
    std::string out = source;
    if (line > 0) {
        out += ":" + std::to_string(line);
    }
    return out + ": " + m;
}

}  // namespace

FormatError::FormatError(const std::string& source, std::size_t line, const std::string& m)
    : Error(ErrorKind::format, locate(source, line, m)), line_(line) {}

const char* to_string(ErrorKind kind) noexcept {
    switch (kind) {
        case ErrorKind::argument: return "argument";
        case ErrorKind::dimension: return "dimension";
        case ErrorKind::format: return "format";
        case ErrorKind::data: return "data";
        case ErrorKind::config: return "config";
        case ErrorKind::contract: return "contract";
        case ErrorKind::training: return "training";
        case ErrorKind::usage: return "usage";
    }
    return "unknown";
}

int exit_code_for(ErrorKind kind) noexcept {
    switch (kind) {
        case ErrorKind::usage:
        case ErrorKind::argument:
        case ErrorKind::config:
        case ErrorKind::contract:
            return 2;
        case ErrorKind::format:
        case ErrorKind::data:
        case ErrorKind::dimension:
            return 3;
        case ErrorKind::training:
            return 4;
    }
    return 1;
}

}  // namespace sqm
