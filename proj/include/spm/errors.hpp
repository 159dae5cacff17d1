#pragma once

#include <stdexcept>
#include <string>

namespace spm {

/// Base class for all library errors.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Invalid configuration (bad flag combination, malformed option value).
struct ConfigError : Error {
    using Error::Error;
};

/// Syntax error in a model document, with 1-based source position.
struct ParseError : Error {
    int line = 0;
    int col = 0;
    ParseError(const std::string& msg, int line_, int col_)
        : Error(msg + " (line " + std::to_string(line_) + ", col " + std::to_string(col_) + ")"),
          line(line_), col(col_) {}
};

struct UnknownIdentifier : ParseError {
    using ParseError::ParseError;
};

struct DuplicateDeclaration : ParseError {
    using ParseError::ParseError;
};

/// Runtime failure while evaluating a rate expression (e.g. division by zero).
struct EvaluationError : Error {
    using Error::Error;
};

/// A transition update would drive some population below zero.
struct NegativePopulation : Error {
    using Error::Error;
};

/// Rate expression outside the class supported by moment closure.
struct UnsupportedRate : Error {
    using Error::Error;
};

/// Steady-state analysis did not converge and no fallback applies.
struct NotConverged : Error {
    using Error::Error;
};

/// ODE trajectory left the configured bounding box.
struct Divergence : Error {
    using Error::Error;
};

struct MissingCoordinates : Error {
    using Error::Error;
};

/// Similarity graph has a vertex with ~zero degree.
struct IsolatedVertex : Error {
    int index = -1;
    explicit IsolatedVertex(int idx)
        : Error("isolated vertex in similarity graph: index " + std::to_string(idx)),
          index(idx) {}
};

struct AllZeroDistances : Error {
    using Error::Error;
};

struct EmptyCluster : Error {
    using Error::Error;
};

struct GridMismatch : Error {
    using Error::Error;
};

struct MissingArtifact : Error {
    using Error::Error;
};

} // namespace spm
