#pragma once

#include <stdexcept>
#include <string>

namespace dtot {

/// Base class for every error the library raises.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& what) : std::runtime_error(what) {}
};

/// Malformed input file or unparseable payload.
class ParseError : public Error {
public:
    using Error::Error;
};

/// Structurally valid input that violates a documented invariant.
class ValidationError : public Error {
public:
    using Error::Error;
};

/// Argument outside its documented domain.
class DomainError : public Error {
public:
    using Error::Error;
};

/// Network failure, timeout, or non-2xx response from a live backend.
class TransportError : public Error {
public:
    using Error::Error;
};

/// Scripted backend has no entry for the requested key.
class ScenarioMissError : public TransportError {
public:
    using TransportError::TransportError;
};

/// Operation not available for this backend kind.
class UnsupportedOperationError : public Error {
public:
    using Error::Error;
};

/// Node handed to a tree operation does not belong to that tree.
class UnknownNodeError : public Error {
public:
    using Error::Error;
};

} // namespace dtot
