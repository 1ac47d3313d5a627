#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace cffe {

enum class ErrorKind {
    InvalidArgument,
    Io,
    EmptyFile,
    MissingColumn,
    NonNumericCell,
    TreatmentNotBinary,
    InvalidPanel,
    TooFewUnits,
    NoTreatmentVariation,
    DegenerateChild,
    UntrainableTree,
    AllTreesUntrainable,
    DimensionMismatch,
    LengthMismatch,
    InvalidAlpha,
    TooFewTrees,
    CorruptModelFile,
    VersionMismatch,
    NoTreatedUnits,
};

std::string_view to_string(ErrorKind kind);

/// Every failure raised by the library carries a kind so callers can branch
/// without parsing messages.
class Error : public std::runtime_error {
  public:
    Error(ErrorKind kind, const std::string& message)
        : std::runtime_error(std::string(to_string(kind)) + ": " + message), kind_{kind}, detail_{message}
    {
    }

    ErrorKind kind() const noexcept { return kind_; }
    /// Message without the kind prefix.
    const std::string& detail() const noexcept { return detail_; }

  private:
    ErrorKind kind_;
    std::string detail_;
};

} // namespace cffe
