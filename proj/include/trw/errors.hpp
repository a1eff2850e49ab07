// errors.hpp — exception types shared across the library.
//
// The CLI maps these onto its exit-code contract:
//   ConfigError/SchemaError -> 2, IoError -> 3, DivergedRunError -> 4.
#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace trw {

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ConfigError : Error {
    using Error::Error;
};

struct IoError : Error {
    using Error::Error;
};

// CSV / checkpoint schema violations; carries the offending column or key.
struct SchemaError : ConfigError {
    SchemaError(const std::string& what, std::string column)
        : ConfigError(what + " (column: " + column + ")"), column(std::move(column)) {}
    std::string column;
};

struct ShapeError : Error {
    using Error::Error;
};

struct UnboundSymbolError : Error {
    using Error::Error;
};

struct NumericError : Error {
    using Error::Error;
};

struct DetachedGradientError : Error {
    using Error::Error;
};

struct InsufficientClassesError : Error {
    using Error::Error;
};

// Training aborted: non-finite parameter/loss or loss blow-up.
struct DivergedRunError : NumericError {
    DivergedRunError(const std::string& what, std::int64_t iteration)
        : NumericError(what + " (iteration " + std::to_string(iteration) + ")"),
          iteration(iteration) {}
    std::int64_t iteration;
};

}  // namespace trw
