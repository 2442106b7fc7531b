// errors.hpp - exception types shared across the library.
#pragma once

#include <stdexcept>
#include <string>

namespace spheredyn {

// Base for all recoverable numerical failures. Harness code maps these to
// exit code 3; config problems use ConfigError (exit code 2).
struct Error : std::runtime_error {
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

struct DegenerateVector : Error {
    explicit DegenerateVector(const std::string& msg) : Error(msg) {}
};

struct QuadratureUnstable : Error {
    explicit QuadratureUnstable(const std::string& msg) : Error(msg) {}
};

struct MissingDerivative : Error {
    explicit MissingDerivative(const std::string& msg) : Error(msg) {}
};

struct NotDissipative : Error {
    explicit NotDissipative(const std::string& msg) : Error(msg) {}
};

struct NonPositiveF : Error {
    explicit NonPositiveF(const std::string& msg) : Error(msg) {}
};

struct GramNotPSD : Error {
    explicit GramNotPSD(const std::string& msg) : Error(msg) {}
};

struct DegenerateCovariance : Error {
    explicit DegenerateCovariance(const std::string& msg) : Error(msg) {}
};

struct PointMismatch : Error {
    explicit PointMismatch(const std::string& msg) : Error(msg) {}
};

struct OutOfDomain : Error {
    explicit OutOfDomain(const std::string& msg) : Error(msg) {}
};

struct SizeMismatch : Error {
    explicit SizeMismatch(const std::string& msg) : Error(msg) {}
};

struct WindowCollapse : Error {
    explicit WindowCollapse(const std::string& msg) : Error(msg) {}
};

struct NonPositiveEnergy : Error {
    explicit NonPositiveEnergy(const std::string& msg) : Error(msg) {}
};

struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace spheredyn
