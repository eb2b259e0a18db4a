#pragma once

#include <stdexcept>
#include <string>

namespace mot {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class DomainError : public Error {
public:
    using Error::Error;
};

class BracketError : public Error {
public:
    using Error::Error;
};

class NoConvergence : public Error {
public:
    using Error::Error;
};

class OutOfRange : public Error {
public:
    using Error::Error;
};

class MeanMismatch : public Error {
public:
    using Error::Error;
};

class NoDensity : public Error {
public:
    using Error::Error;
};

/// Raised when the single-maximizer / dispersion structure the plans need is absent.
class AssumptionViolated : public Error {
public:
    using Error::Error;
};

/// A pointwise solve failed; the message names the offending abscissa.
class NumericsFailure : public Error {
public:
    using Error::Error;
};

class MartingaleViolation : public Error {
public:
    using Error::Error;
};

class MethodMismatch : public Error {
public:
    using Error::Error;
};

class Infeasible : public Error {
public:
    using Error::Error;
};

class Unbounded : public Error {
public:
    using Error::Error;
};

class DegenerateBasis : public Error {
public:
    using Error::Error;
};

class ConfigError : public Error {
public:
    using Error::Error;
};

}  // namespace mot
