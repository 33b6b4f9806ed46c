#pragma once

#include <stdexcept>
#include <string>

namespace kfwer {

enum class ErrorKind {
    ZeroColumn,
    RankDeficient,
    DimensionError,
    NotPositiveDefinite,
    InfeasibleS,
    NoConvergence,
    DegenerateFit,
    InsufficientDraws,
    MissingConstants,
    UnknownLabel,
    EmptyDataset,
    RankDeficientAfterCleaning,
    ParseError,
    IoError,
    ConfigError,
};

inline const char* to_string(ErrorKind kind) {
    switch (kind) {
        case ErrorKind::ZeroColumn: return "ZeroColumn";
        case ErrorKind::RankDeficient: return "RankDeficient";
        case ErrorKind::DimensionError: return "DimensionError";
        case ErrorKind::NotPositiveDefinite: return "NotPositiveDefinite";
        case ErrorKind::InfeasibleS: return "InfeasibleS";
        case ErrorKind::NoConvergence: return "NoConvergence";
        case ErrorKind::DegenerateFit: return "DegenerateFit";
        case ErrorKind::InsufficientDraws: return "InsufficientDraws";
        case ErrorKind::MissingConstants: return "MissingConstants";
        case ErrorKind::UnknownLabel: return "UnknownLabel";
        case ErrorKind::EmptyDataset: return "EmptyDataset";
        case ErrorKind::RankDeficientAfterCleaning: return "RankDeficientAfterCleaning";
        case ErrorKind::ParseError: return "ParseError";
        case ErrorKind::IoError: return "IoError";
        case ErrorKind::ConfigError: return "ConfigError";
    }
    return "Unknown";
}

/// Every failure raised by the library. `module()` names the component that
/// raised it so the CLI can print module-tagged messages.
class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, std::string module, const std::string& what)
        : std::runtime_error(what), kind_(kind), module_(std::move(module)) {}

    ErrorKind kind() const noexcept { return kind_; }
    const std::string& module() const noexcept { return module_; }

private:
    ErrorKind kind_;
    std::string module_;
};

// CLI exit codes: 2 input error, 3 numerical failure, 4 config error.
inline int exit_code_for(ErrorKind kind) {
    switch (kind) {
        case ErrorKind::ParseError:
        case ErrorKind::IoError:
        case ErrorKind::EmptyDataset:
        case ErrorKind::UnknownLabel:
        case ErrorKind::ZeroColumn:
        case ErrorKind::DimensionError:
            return 2;
        case ErrorKind::RankDeficient:
        case ErrorKind::NotPositiveDefinite:
        case ErrorKind::InfeasibleS:
        case ErrorKind::NoConvergence:
        case ErrorKind::DegenerateFit:
        case ErrorKind::RankDeficientAfterCleaning:
            return 3;
        case ErrorKind::InsufficientDraws:
        case ErrorKind::MissingConstants:
        case ErrorKind::ConfigError:
            return 4;
    }
    return 1;
}

}  // namespace kfwer
