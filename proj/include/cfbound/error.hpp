#pragma once

#include <stdexcept>
#include <string>

namespace cfbound {

enum class ErrorCode {
    // configuration
    BadConfig,
    BadFoldCount,
    OutOfRange,
    UnsupportedTarget,
    MixedTargets,
    // data
    MissingColumn,
    NonFiniteValue,
    HeterogeneousSchema,
    EmptyTable,
    ArmMissing,
    MissingInstrument,
    EmptyEvaluationSet,
    LengthMismatch,
    IoFailure,
    // numeric
    DegenerateDesign,
    ZeroVariance,
    AllPointsIdentical,
    ShapeMismatch,
    NonFiniteLoss,
    ZeroKernelMass,
    WeakInstrument,
};

/// One exception type for the whole library; the code selects the CLI exit
/// category (2 config, 3 data, 4 numeric).
class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& what)
        : std::runtime_error(what), code_(code) {}

    ErrorCode code() const noexcept { return code_; }

    int exit_code() const noexcept {
        switch (code_) {
            case ErrorCode::BadConfig:
            case ErrorCode::BadFoldCount:
            case ErrorCode::OutOfRange:
            case ErrorCode::UnsupportedTarget:
            case ErrorCode::MixedTargets:
                return 2;
            case ErrorCode::MissingColumn:
            case ErrorCode::NonFiniteValue:
            case ErrorCode::HeterogeneousSchema:
            case ErrorCode::EmptyTable:
            case ErrorCode::ArmMissing:
            case ErrorCode::MissingInstrument:
            case ErrorCode::EmptyEvaluationSet:
            case ErrorCode::LengthMismatch:
            case ErrorCode::IoFailure:
                return 3;
            default:
                return 4;
        }
    }

private:
    ErrorCode code_;
};

const char* error_code_name(ErrorCode code);

}  // namespace cfbound
