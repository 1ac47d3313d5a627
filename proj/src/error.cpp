#include "cffe/error.hpp"

namespace cffe {

std::string_view to_string(ErrorKind kind)
{
    switch (kind) {
    case ErrorKind::InvalidArgument: return "InvalidArgument";
    case ErrorKind::Io: return "Io";
    case ErrorKind::EmptyFile: return "EmptyFile";
    case ErrorKind::MissingColumn: return "MissingColumn";
    case ErrorKind::NonNumericCell: return "NonNumericCell";
    case ErrorKind::TreatmentNotBinary: return "TreatmentNotBinary";
    case ErrorKind::InvalidPanel: return "InvalidPanel";
    case ErrorKind::TooFewUnits: return "TooFewUnits";
    case ErrorKind::NoTreatmentVariation: return "NoTreatmentVariation";
    case ErrorKind::DegenerateChild: return "DegenerateChild";
    case ErrorKind::UntrainableTree: return "UntrainableTree";
    case ErrorKind::AllTreesUntrainable: return "AllTreesUntrainable";
    case ErrorKind::DimensionMismatch: return "DimensionMismatch";
    case ErrorKind::LengthMismatch: return "LengthMismatch";
    case ErrorKind::InvalidAlpha: return "InvalidAlpha";
    case ErrorKind::TooFewTrees: return "TooFewTrees";
    case ErrorKind::CorruptModelFile: return "CorruptModelFile";
    case ErrorKind::VersionMismatch: return "VersionMismatch";
    case ErrorKind::NoTreatedUnits: return "NoTreatedUnits";
    }
    return "Unknown";
}

} // namespace cffe
