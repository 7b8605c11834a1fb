#ifndef GRIDFLEX_ERROR_HPP
#define GRIDFLEX_ERROR_HPP

#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace gridflex {

enum class ErrorCode {
    invalid_parameter,
    dimension_mismatch,
    under_determined_graph,
    singular_conditioning,
    unknown_variable,
    duplicate_assignment,
    unknown_series,
    unknown_signal,
    unknown_entity,
    parent_cycle,
    misaligned_timestamp,
    not_found,
    insufficient_samples,
    degenerate_parent,
    insufficient_history,
    gap_too_large,
    missing_forecast,
    not_controllable,
    invalid_config,
    storage_failure,
};

std::string_view to_string(ErrorCode code);

/// Exception carrying a machine-readable code and the identifiers it concerns.
class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& message, std::vector<std::string> subjects = {})
        : std::runtime_error(message), code_(code), subjects_(std::move(subjects)) {}

    ErrorCode code() const noexcept { return code_; }
    const std::vector<std::string>& subjects() const noexcept { return subjects_; }

private:
    ErrorCode code_;
    std::vector<std::string> subjects_;
};

} // namespace gridflex

#endif // GRIDFLEX_ERROR_HPP
