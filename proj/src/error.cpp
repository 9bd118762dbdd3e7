#include "plexquery/error.hpp"

namespace plexquery {

std::string_view to_string(ErrorCode code) {
    switch (code) {
        case ErrorCode::MissingFile: return "MissingFile";
        case ErrorCode::SchemaError: return "SchemaError";
        case ErrorCode::SizeMismatch: return "SizeMismatch";
        case ErrorCode::ParseError: return "ParseError";
        case ErrorCode::DuplicateId: return "DuplicateId";
        case ErrorCode::OutOfBounds: return "OutOfBounds";
        case ErrorCode::EmptyResult: return "EmptyResult";
        case ErrorCode::SpecError: return "SpecError";
        case ErrorCode::ShapeMismatch: return "ShapeMismatch";
        case ErrorCode::UnlabeledSample: return "UnlabeledSample";
        case ErrorCode::NoValidTriplet: return "NoValidTriplet";
        case ErrorCode::DegenerateGraph: return "DegenerateGraph";
        case ErrorCode::NodeSetMismatch: return "NodeSetMismatch";
        case ErrorCode::EmptyGraph: return "EmptyGraph";
        case ErrorCode::IsolatedOnlyGraph: return "IsolatedOnlyGraph";
        case ErrorCode::TooLarge: return "TooLarge";
        case ErrorCode::NonFinite: return "NonFinite";
        case ErrorCode::DegenerateData: return "DegenerateData";
        case ErrorCode::UnknownCell: return "UnknownCell";
        case ErrorCode::OutlierQuery: return "OutlierQuery";
        case ErrorCode::UnknownPanelSet: return "UnknownPanelSet";
        case ErrorCode::NoUsableFeatures: return "NoUsableFeatures";
        case ErrorCode::EmptySet: return "EmptySet";
        case ErrorCode::UnknownCommunity: return "UnknownCommunity";
        case ErrorCode::MissingLabels: return "MissingLabels";
        case ErrorCode::NoLabeledCells: return "NoLabeledCells";
        case ErrorCode::CapabilityMissing: return "CapabilityMissing";
        case ErrorCode::InvalidArgument: return "InvalidArgument";
        case ErrorCode::IoError: return "IoError";
    }
    return "Unknown";
}

}  // namespace plexquery
