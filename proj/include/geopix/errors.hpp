#pragma once

#include <stdexcept>
#include <string>

namespace geopix {

// Invalid configuration value or inconsistent model/template settings.
class ConfigError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

// A dataset record could not be resolved (missing file, undecodable image).
class IngestionError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// A file decoded but its content violates the expected format.
class FormatError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class CheckpointError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Training produced a non-finite loss.
class DivergenceError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace geopix
