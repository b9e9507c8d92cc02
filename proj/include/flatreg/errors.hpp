#ifndef FLATREG_ERRORS_HPP
#define FLATREG_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace flatreg {

struct NonSymmetricError : std::runtime_error {
    explicit NonSymmetricError(const std::string& what) : std::runtime_error(what) {}
};

struct DomainError : std::runtime_error {
    explicit DomainError(const std::string& what) : std::runtime_error(what) {}
};

struct StepTooLargeError : std::runtime_error {
    explicit StepTooLargeError(const std::string& what) : std::runtime_error(what) {}
};

// Signals eta >= 2(1+beta)/lambda_max: the spectral penalty diverges there,
// so this is an error rather than a clamp.
struct EdgeOfStabilityError : std::runtime_error {
    explicit EdgeOfStabilityError(const std::string& what) : std::runtime_error(what) {}
};

struct NotPSDError : std::runtime_error {
    explicit NotPSDError(const std::string& what) : std::runtime_error(what) {}
};

struct TooLargeError : std::runtime_error {
    explicit TooLargeError(const std::string& what) : std::runtime_error(what) {}
};

struct InvalidPError : std::runtime_error {
    explicit InvalidPError(const std::string& what) : std::runtime_error(what) {}
};

struct InsufficientSamplesError : std::runtime_error {
    explicit InsufficientSamplesError(const std::string& what) : std::runtime_error(what) {}
};

struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace flatreg

#endif
