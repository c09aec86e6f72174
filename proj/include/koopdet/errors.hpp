// Exception types shared across the library.

#ifndef KOOPDET_ERRORS_HPP
#define KOOPDET_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace koopdet {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Vectors or matrices with incompatible shapes.
class DimensionMismatch : public Error {
public:
    using Error::Error;
};

// A snapshot window with no usable information (all-zero data) in strict mode.
class DegenerateWindow : public Error {
public:
    using Error::Error;
};

// Not enough frames buffered/supplied for the requested operation.
class InsufficientHistory : public Error {
public:
    using Error::Error;
};

// A probability vector entry was <= 0 where strict positivity is required.
class NonPositiveEntry : public Error {
public:
    using Error::Error;
};

// Spectral embedding eigensolver did not converge.
class EmbeddingFailure : public Error {
public:
    using Error::Error;
};

// Simulation state exceeded the blow-up guard.
class NumericalBlowup : public Error {
public:
    using Error::Error;
};

// Malformed attack specification.
class InvalidSpec : public Error {
public:
    using Error::Error;
};

// Invalid argument to a library call (precondition violation).
class InvalidArgument : public Error {
public:
    using Error::Error;
};

// File could not be parsed at all.
class ParseError : public Error {
public:
    using Error::Error;
};

// Parsed fine but violates a constraint; message names the offending field.
class ValidationError : public Error {
public:
    using Error::Error;
};

// A pipeline artifact file is absent.
class MissingArtifact : public Error {
public:
    using Error::Error;
};

}  // namespace koopdet

#endif  // KOOPDET_ERRORS_HPP
