#pragma once

#include <stdexcept>
#include <string>

namespace strata {

// Process exit codes used by the command-line front end.
enum class ErrorKind : int {
    Validation = 2,
    Estimation = 3,
    Io = 4,
};

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, std::string code, const std::string& message)
        : std::runtime_error(message), kind_(kind), code_(std::move(code)) {}

    ErrorKind kind() const noexcept { return kind_; }
    // Short machine-readable reason, e.g. "DegenerateDenominator".
    const std::string& code() const noexcept { return code_; }

private:
    ErrorKind kind_;
    std::string code_;
};

class ValidationError : public Error {
public:
    explicit ValidationError(const std::string& message, std::string code = "Validation")
        : Error(ErrorKind::Validation, std::move(code), message) {}
};

class IoError : public Error {
public:
    explicit IoError(const std::string& message) : Error(ErrorKind::Io, "Io", message) {}
};

class EstimationError : public Error {
public:
    EstimationError(std::string code, const std::string& message)
        : Error(ErrorKind::Estimation, std::move(code), message) {}
};

class NotUpgradeableError : public ValidationError {
public:
    explicit NotUpgradeableError(const std::string& track)
        : ValidationError("track '" + track + "' has no upgrade cutoff", "NotUpgradeable") {}
};

class EmptyArmError : public EstimationError {
public:
    explicit EmptyArmError(const std::string& message) : EstimationError("EmptyArm", message) {}
};

class EmptyStratumError : public EstimationError {
public:
    explicit EmptyStratumError(const std::string& message)
        : EstimationError("EmptyStratum", message) {}
};

// A plug-in bound denominator came out non-positive. Carries the raw values
// so callers can report how far from zero the estimate was.
class DegenerateDenominatorError : public EstimationError {
public:
    DegenerateDenominatorError(const std::string& what, double numerator, double denominator)
        : EstimationError("DegenerateDenominator",
                          what + ": numerator=" + std::to_string(numerator) +
                              " denominator=" + std::to_string(denominator)),
          numerator_(numerator),
          denominator_(denominator) {}

    double numerator() const noexcept { return numerator_; }
    double denominator() const noexcept { return denominator_; }

private:
    double numerator_;
    double denominator_;
};

}  // namespace strata
