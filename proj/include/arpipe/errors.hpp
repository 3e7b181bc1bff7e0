#pragma once

#include <stdexcept>
#include <string>

namespace arpipe {

// Bad user input: malformed config files, unknown keys, out-of-range
// parameter values. Maps to exit code 1 in the CLI.
class ConfigError : public std::runtime_error {
public:
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

// Filesystem or codec failure. Maps to exit code 2 in the CLI.
class IoError : public std::runtime_error {
public:
    explicit IoError(const std::string& msg) : std::runtime_error(msg) {}
};

// Data that breaks a documented invariant: gapped stacks, overlapping
// regions, label overflow. Maps to exit code 3 in the CLI.
class ValidationError : public std::runtime_error {
public:
    explicit ValidationError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace arpipe
