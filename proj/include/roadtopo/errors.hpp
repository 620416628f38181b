// Error taxonomy shared by the library and the CLI exit codes.
#pragma once

#include <stdexcept>
#include <string>

namespace roadtopo {

// Caller broke a contract: bad arguments, mismatched dimensions, invalid config.
struct UsageError : std::runtime_error {
    explicit UsageError(const std::string& what) : std::runtime_error(what) {}
};

// A file exists but its bytes do not conform to the declared format.
struct FormatError : std::runtime_error {
    explicit FormatError(const std::string& what) : std::runtime_error(what) {}
};

// Missing or unreadable/unwritable files.
struct IoError : std::runtime_error {
    explicit IoError(const std::string& what) : std::runtime_error(what) {}
};

// Non-finite values surfaced from numerical code.
struct NumericalError : std::runtime_error {
    explicit NumericalError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace roadtopo
