#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <string_view>

namespace mvpress {

enum class Errc {
    DimensionMismatch,
    NonFinite,
    Empty,
    IndexOutOfRange,
    BadMagic,
    UnsupportedVersion,
    Truncated,
    ParseError,
    DuplicateJudgment,
    MissingImportance,
    MissingEos,
    MissingGrid,
    ZeroVector,
    InvalidClusterCount,
    NotPerfectSquare,
    GridMismatch,
    MethodConfigMismatch,
    EmptyIndex,
    EmptyQueries,
    UnknownQuery,
    InvalidArgument,
    Io,
};

constexpr std::string_view errc_name(Errc code) noexcept {
    switch (code) {
        case Errc::DimensionMismatch: return "DimensionMismatch";
        case Errc::NonFinite: return "NonFinite";
        case Errc::Empty: return "Empty";
        case Errc::IndexOutOfRange: return "IndexOutOfRange";
        case Errc::BadMagic: return "BadMagic";
        case Errc::UnsupportedVersion: return "UnsupportedVersion";
        case Errc::Truncated: return "Truncated";
        case Errc::ParseError: return "ParseError";
        case Errc::DuplicateJudgment: return "DuplicateJudgment";
        case Errc::MissingImportance: return "MissingImportance";
        case Errc::MissingEos: return "MissingEos";
        case Errc::MissingGrid: return "MissingGrid";
        case Errc::ZeroVector: return "ZeroVector";
        case Errc::InvalidClusterCount: return "InvalidClusterCount";
        case Errc::NotPerfectSquare: return "NotPerfectSquare";
        case Errc::GridMismatch: return "GridMismatch";
        case Errc::MethodConfigMismatch: return "MethodConfigMismatch";
        case Errc::EmptyIndex: return "EmptyIndex";
        case Errc::EmptyQueries: return "EmptyQueries";
        case Errc::UnknownQuery: return "UnknownQuery";
        case Errc::InvalidArgument: return "InvalidArgument";
        case Errc::Io: return "Io";
    }
    return "Unknown";
}

/// Every failure raised by the library. `line()` is non-zero only for text-format parse errors.
class Error : public std::runtime_error {
public:
    Error(Errc code, const std::string& what, std::size_t line = 0)
        : std::runtime_error(std::string(errc_name(code)) + ": " + what), code_(code), line_(line), message_(what) {}

    Errc code() const noexcept { return code_; }
    /// what() without the error-code prefix.
    const std::string& message() const noexcept { return message_; }
    std::size_t line() const noexcept { return line_; }

private:
    Errc code_;
    std::size_t line_;
    std::string message_;
};

}  // namespace mvpress
