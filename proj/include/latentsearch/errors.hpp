#pragma once

#include <stdexcept>
#include <string>

namespace latentsearch {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Invalid user-supplied parameters or configuration files.
class ConfigError : public Error {
public:
    using Error::Error;
};

/// Vector / matrix / image dimensions that do not fit together.
class ShapeError : public Error {
public:
    using Error::Error;
};

/// Non-finite values, failed decompositions, overflow.
class NumericError : public Error {
public:
    using Error::Error;
};

/// Inputs for which the requested quantity is undefined (zero vectors, empty sets).
class DegenerateInputError : public Error {
public:
    using Error::Error;
};

/// The backend cannot perform the request (e.g. gradients from a gradient-free model).
class CapabilityError : public Error {
public:
    using Error::Error;
};

/// Failure while evaluating a latent through a generator/encoder backend.
class EvaluationError : public Error {
public:
    using Error::Error;
};

/// Malformed traffic on the model bridge wire protocol.
class ProtocolError : public Error {
public:
    using Error::Error;
};

} // namespace latentsearch
