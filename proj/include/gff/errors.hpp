#pragma once

#include <stdexcept>
#include <string>

namespace gff {

/// Shape or dimensionality violation in a tensor operation.
struct DimError : std::runtime_error {
    explicit DimError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Caller broke an operation contract (e.g. backward on a non-scalar loss).
struct ContractError : std::runtime_error {
    explicit ContractError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Malformed or inconsistent file content (weight files, images, manifests).
struct FormatError : std::runtime_error {
    explicit FormatError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Bad run configuration (unknown key, unparsable value, invalid combination).
struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Missing or unusable input data (dataset dirs, manifests, weight files).
struct DataError : std::runtime_error {
    explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Numerical failure during training (non-finite loss).
struct NumericError : std::runtime_error {
    explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

/// A metric is undefined for the given inputs (e.g. AP with no positives).
struct MetricError : std::runtime_error {
    explicit MetricError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace gff
