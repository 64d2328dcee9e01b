#pragma once

#include <stdexcept>
#include <string>

namespace fedmkg {

// Base for all library errors; the CLI maps ConfigError to exit code 1 and
// everything else to 2.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct DimensionError : Error {
    using Error::Error;
};

struct IndexError : Error {
    using Error::Error;
};

struct ConfigError : Error {
    using Error::Error;
};

struct ParseError : Error {
    using Error::Error;
};

struct FormatError : Error {
    using Error::Error;
};

struct NumericError : Error {
    using Error::Error;
};

struct ContractError : Error {
    using Error::Error;
};

}  // namespace fedmkg
