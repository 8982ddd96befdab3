#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace fedsa {

// Precondition violated by the caller (shapes, ranges, infeasible budgets).
class InvalidInput : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

// Experiment description is unusable: missing keys, bad values, impossible setups.
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Binary file does not follow its declared layout.
class FormatError : public std::runtime_error {
public:
    FormatError(const std::string& path, std::uint64_t offset, const std::string& what)
        : std::runtime_error(path + " @ byte " + std::to_string(offset) + ": " + what),
          offset_(offset) {}

    std::uint64_t offset() const noexcept { return offset_; }

private:
    std::uint64_t offset_;
};

// The controller produced a non-finite actuation; the round cannot proceed.
class ControllerFault : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace fedsa
