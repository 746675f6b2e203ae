#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace ssafx {

enum class ErrorKind {
    EmptyInput,
    MalformedLine,
    UnknownPair,
    NoOverlap,
    TooShort,
    BadWindow,
    BadConfig,
    NotSymmetric,
    DidNotConverge,
    BadK,
    BadL,
    BadParams,
    InsufficientHistory,
    DimensionMismatch,
    TooFewSamples,
    DegenerateDesign,
    NonFiniteLoss,
    MissingForecast,
    InsufficientData,
    TooFewTrades,
    ZeroVariance,
    EmptyCurve,
    NotFound,
    BadFormat,
};

constexpr std::string_view to_string(ErrorKind kind) noexcept
{
    switch (kind) {
    case ErrorKind::EmptyInput: return "EmptyInput";
    case ErrorKind::MalformedLine: return "MalformedLine";
    case ErrorKind::UnknownPair: return "UnknownPair";
    case ErrorKind::NoOverlap: return "NoOverlap";
    case ErrorKind::TooShort: return "TooShort";
    case ErrorKind::BadWindow: return "BadWindow";
    case ErrorKind::BadConfig: return "BadConfig";
    case ErrorKind::NotSymmetric: return "NotSymmetric";
    case ErrorKind::DidNotConverge: return "DidNotConverge";
    case ErrorKind::BadK: return "BadK";
    case ErrorKind::BadL: return "BadL";
    case ErrorKind::BadParams: return "BadParams";
    case ErrorKind::InsufficientHistory: return "InsufficientHistory";
    case ErrorKind::DimensionMismatch: return "DimensionMismatch";
    case ErrorKind::TooFewSamples: return "TooFewSamples";
    case ErrorKind::DegenerateDesign: return "DegenerateDesign";
    case ErrorKind::NonFiniteLoss: return "NonFiniteLoss";
    case ErrorKind::MissingForecast: return "MissingForecast";
    case ErrorKind::InsufficientData: return "InsufficientData";
    case ErrorKind::TooFewTrades: return "TooFewTrades";
    case ErrorKind::ZeroVariance: return "ZeroVariance";
    case ErrorKind::EmptyCurve: return "EmptyCurve";
    case ErrorKind::NotFound: return "NotFound";
    case ErrorKind::BadFormat: return "BadFormat";
    }
    return "Unknown";
}

/// Every failure raised by the library. `kind()` is the stable, testable part;
/// the message carries human-readable context.
class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& detail, long where = -1)
        : std::runtime_error(std::string(to_string(kind)) + (detail.empty() ? "" : ": " + detail)),
          kind_(kind),
          where_(where)
    {
    }

    ErrorKind kind() const noexcept { return kind_; }

    /// Line number, time index or similar locator; -1 when not applicable.
    long where() const noexcept { return where_; }

private:
    ErrorKind kind_;
    long where_;
};

} // namespace ssafx
