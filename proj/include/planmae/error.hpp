#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace planmae {

enum class ErrorCode {
    NonDivisiblePatchSize,
    InconsistentSequence,
    BadDim,
    BadRatio,
    BadConfig,
    GeometryMismatch,
    CorruptCheckpoint,
    ShapeMismatch,
    EmptyCorpus,
    ConstraintUnsatisfiable,
    IoError,
    TooSmall,
    EmptySplit,
    BadImage,
    BadMask,
};

std::string_view to_string(ErrorCode code);

/// Every failure raised by the library carries one of the codes above so
/// callers (CLI exit codes, HTTP status mapping, tests) can branch on it.
class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& detail)
        : std::runtime_error(std::string(to_string(code)) + ": " + detail), code_(code) {}

    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

}  // namespace planmae
