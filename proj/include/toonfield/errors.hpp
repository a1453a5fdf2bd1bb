#pragma once

#include <stdexcept>
#include <string>

namespace toonfield {

// Process exit codes used by the command-line front end.
enum class ExitCode : int { ok = 0, usage = 2, data = 3, runtime = 4 };

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
    virtual ExitCode exit_code() const noexcept { return ExitCode::runtime; }
};

// Inconsistent configuration or tensor shapes that disagree with it.
class ConfigError : public Error {
public:
    using Error::Error;
    ExitCode exit_code() const noexcept override { return ExitCode::usage; }
};

// A caller passed an out-of-range or otherwise invalid argument.
class ArgumentError : public Error {
public:
    using Error::Error;
    ExitCode exit_code() const noexcept override { return ExitCode::usage; }
};

class UsageError : public Error {
public:
    using Error::Error;
    ExitCode exit_code() const noexcept override { return ExitCode::usage; }
};

// A documented precondition on numeric input was violated (e.g. negative density).
class PreconditionError : public Error {
public:
    using Error::Error;
};

// A NaN or Inf appeared inside a forward pass.
class NumericError : public Error {
public:
    NumericError(const std::string& what, int layer)
        : Error(what + " (layer " + std::to_string(layer) + ")"), layer_(layer) {}
    int layer() const noexcept { return layer_; }

private:
    int layer_;
};

// Corrupt or truncated persisted data. `section()` names the offending part.
class IntegrityError : public Error {
public:
    IntegrityError(std::string section, const std::string& what)
        : Error("integrity error in section '" + section + "': " + what), section_(std::move(section)) {}
    const std::string& section() const noexcept { return section_; }
    ExitCode exit_code() const noexcept override { return ExitCode::data; }

private:
    std::string section_;
};

class UnsupportedVersionError : public Error {
public:
    explicit UnsupportedVersionError(unsigned version)
        : Error("unsupported checkpoint format version " + std::to_string(version)), version_(version) {}
    unsigned version() const noexcept { return version_; }
    ExitCode exit_code() const noexcept override { return ExitCode::data; }

private:
    unsigned version_;
};

}  // namespace toonfield
