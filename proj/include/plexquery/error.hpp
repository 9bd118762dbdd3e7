#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace plexquery {

enum class ErrorCode {
    MissingFile,
    SchemaError,
    SizeMismatch,
    ParseError,
    DuplicateId,
    OutOfBounds,
    EmptyResult,
    SpecError,
    ShapeMismatch,
    UnlabeledSample,
    NoValidTriplet,
    DegenerateGraph,
    NodeSetMismatch,
    EmptyGraph,
    IsolatedOnlyGraph,
    TooLarge,
    NonFinite,
    DegenerateData,
    UnknownCell,
    OutlierQuery,
    UnknownPanelSet,
    NoUsableFeatures,
    EmptySet,
    UnknownCommunity,
    MissingLabels,
    NoLabeledCells,
    CapabilityMissing,
    InvalidArgument,
    IoError,
};

std::string_view to_string(ErrorCode code);

/// Exception carrying a machine-readable code; every failure in the library is
/// reported through this type.
class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& message)
        : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

}  // namespace plexquery
