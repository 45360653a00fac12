#pragma once

#include <stdexcept>
#include <string>

namespace ea3d {

enum class ErrorCode {
    insufficient_points,
    degenerate_input,
    invalid_weights,
    empty_mesh,
    shape_mismatch,
    degenerate_covariance,
    render_abort,
    stale_state,
    empty_input,
    not_found,
    unsupported_model,
    parse_error,
    bad_magic,
    bad_version,
    bad_flags,
    length_mismatch,
    index_out_of_range,
    checksum_mismatch,
    no_data,
    config_error,
    stage_dependency,
    io_error,
    non_finite,
};

/// Library-wide error type. Every failure path throws one of these with a
/// stable code so callers (CLI, fuzz harness) can dispatch without parsing
/// the message.
class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& what)
        : std::runtime_error(what), code_(code) {}

    ErrorCode code() const noexcept { return code_; }

    const char* code_name() const noexcept {
        switch (code_) {
        case ErrorCode::insufficient_points: return "insufficient_points";
        case ErrorCode::degenerate_input: return "degenerate_input";
        case ErrorCode::invalid_weights: return "invalid_weights";
        case ErrorCode::empty_mesh: return "empty_mesh";
        case ErrorCode::shape_mismatch: return "shape_mismatch";
        case ErrorCode::degenerate_covariance: return "degenerate_covariance";
        case ErrorCode::render_abort: return "render_abort";
        case ErrorCode::stale_state: return "stale_state";
        case ErrorCode::empty_input: return "empty_input";
        case ErrorCode::not_found: return "not_found";
        case ErrorCode::unsupported_model: return "unsupported_model";
        case ErrorCode::parse_error: return "parse_error";
        case ErrorCode::bad_magic: return "bad_magic";
        case ErrorCode::bad_version: return "bad_version";
        case ErrorCode::bad_flags: return "bad_flags";
        case ErrorCode::length_mismatch: return "length_mismatch";
        case ErrorCode::index_out_of_range: return "index_out_of_range";
        case ErrorCode::checksum_mismatch: return "checksum_mismatch";
        case ErrorCode::no_data: return "no_data";
        case ErrorCode::config_error: return "config_error";
        case ErrorCode::stage_dependency: return "stage_dependency";
        case ErrorCode::io_error: return "io_error";
        case ErrorCode::non_finite: return "non_finite";
        }
        return "unknown";
    }

private:
    ErrorCode code_;
};

}  // namespace ea3d
