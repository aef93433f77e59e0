#pragma once

#include <stdexcept>
#include <string>

namespace hmf {

// Base of all errors raised by the pipeline.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Bad configuration, bad CLI arguments, missing input paths.
// Maps to exit code 1.
class ConfigError : public Error {
public:
    using Error::Error;
};

// Malformed or inconsistent data encountered while running.
// Maps to exit code 2.
class DataError : public Error {
public:
    using Error::Error;
};

} // namespace hmf
