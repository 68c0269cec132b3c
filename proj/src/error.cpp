#include "planmae/error.hpp"

namespace planmae {

std::string_view to_string(ErrorCode code) {
    switch (code) {
        case ErrorCode::NonDivisiblePatchSize: return "NonDivisiblePatchSize";
        case ErrorCode::InconsistentSequence: return "InconsistentSequence";
        case ErrorCode::BadDim: return "BadDim";
        case ErrorCode::BadRatio: return "BadRatio";
        case ErrorCode::BadConfig: return "BadConfig";
        case ErrorCode::GeometryMismatch: return "GeometryMismatch";
        case ErrorCode::CorruptCheckpoint: return "CorruptCheckpoint";
        case ErrorCode::ShapeMismatch: return "ShapeMismatch";
        case ErrorCode::EmptyCorpus: return "EmptyCorpus";
        case ErrorCode::ConstraintUnsatisfiable: return "ConstraintUnsatisfiable";
        case ErrorCode::IoError: return "IoError";
        case ErrorCode::TooSmall: return "TooSmall";
        case ErrorCode::EmptySplit: return "EmptySplit";
        case ErrorCode::BadImage: return "BadImage";
        case ErrorCode::BadMask: return "BadMask";
    }
    return "Unknown";
}

}  // namespace planmae
