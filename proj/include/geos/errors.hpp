#pragma once

#include <stdexcept>
#include <string>

namespace geos {

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Bad user-facing configuration: unknown keys, invalid ranges, unknown profiles.
struct ConfigError : Error {
    using Error::Error;
};

// Malformed file contents; message names the offending location.
struct ParseError : Error {
    using Error::Error;
};

// Image geometry that cannot support the requested transform.
struct GeometryError : Error {
    using Error::Error;
};

struct ShapeError : Error {
    using Error::Error;
};

struct InfeasibleSetError : Error {
    using Error::Error;
};

struct InvalidGridError : Error {
    using Error::Error;
};

struct InvalidPairError : Error {
    using Error::Error;
};

struct UnknownPermutationError : Error {
    using Error::Error;
};

struct CheckpointError : Error {
    using Error::Error;
};

struct SnapshotError : Error {
    using Error::Error;
};

// Non-finite loss; carries the offending batch id in the message.
struct DivergenceError : Error {
    explicit DivergenceError(const std::string& msg, std::string batch)
        : Error(msg), batch_id(std::move(batch)) {}
    std::string batch_id;
};

// Non-finite loss during one-sample adaptation; the auxiliary block has
// already been restored when this reaches the caller.
struct AdaptationDivergenceError : DivergenceError {
    using DivergenceError::DivergenceError;
};

struct ProtocolError : Error {
    using Error::Error;
};

struct EmptyInputError : Error {
    using Error::Error;
};

struct IngestionError : Error {
    using Error::Error;
};

}  // namespace geos
