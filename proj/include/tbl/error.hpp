#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace tbl {

/// Machine-readable error classes. The CLI prints `error_class_name(kind)`
/// on stderr so scripts can branch on it.
enum class ErrorKind {
    precondition,       // argument outside the documented domain
    numerical,          // non-finite result, blow-up
    rank_deficient,     // regression without enough excitation
    non_uniform,        // sampling period not constant
    empty_profile,      // nothing to emit
    out_of_range,       // crop / lookup outside the extent
    misaligned,         // corner profiles disagree on grid
    no_match,           // GPS point too far from every segment
    io,                 // file cannot be read or written
    format,             // malformed file contents
    version,            // file version not supported
    checksum,           // file integrity check failed
    config,             // invalid scenario configuration
};

inline std::string_view error_class_name(ErrorKind kind) {
    switch (kind) {
        case ErrorKind::precondition: return "precondition_error";
        case ErrorKind::numerical: return "numerical_error";
        case ErrorKind::rank_deficient: return "rank_deficient_error";
        case ErrorKind::non_uniform: return "non_uniform_sampling_error";
        case ErrorKind::empty_profile: return "empty_profile_error";
        case ErrorKind::out_of_range: return "out_of_range_error";
        case ErrorKind::misaligned: return "misaligned_error";
        case ErrorKind::no_match: return "no_match_error";
        case ErrorKind::io: return "io_error";
        case ErrorKind::format: return "format_error";
        case ErrorKind::version: return "version_error";
        case ErrorKind::checksum: return "checksum_error";
        case ErrorKind::config: return "config_error";
    }
    return "unknown_error";
}

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}

    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

inline void require(bool condition, ErrorKind kind, const std::string& what) {
    if (!condition) {
        throw Error(kind, what);
    }
}

}  // namespace tbl
