#pragma once

#include <stdexcept>
#include <string>

namespace pmx {

/// Base class for every error raised by the library. `category()` is a short
/// machine-readable token reported by the command line tools.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
    virtual const char* category() const noexcept { return "internal"; }
};

/// Caller violated a documented precondition.
class UsageError : public Error {
public:
    using Error::Error;
    const char* category() const noexcept override { return "usage"; }
};

/// Backend failure, world abort or receive timeout.
class TransportError : public Error {
public:
    using Error::Error;
    const char* category() const noexcept override { return "transport"; }
};

/// Ranks disagree about which collective they are executing.
class ProtocolError : public Error {
public:
    using Error::Error;
    const char* category() const noexcept override { return "protocol"; }
};

/// A particle ended up outside every sub-domain on a non-periodic axis.
class OutOfDomainError : public Error {
public:
    using Error::Error;
    const char* category() const noexcept override { return "out_of_domain"; }
};

class IoError : public Error {
public:
    using Error::Error;
    const char* category() const noexcept override { return "io"; }
};

class CorruptFileError : public Error {
public:
    using Error::Error;
    const char* category() const noexcept override { return "corrupt_file"; }
};

class IncompatibleSchemaError : public Error {
public:
    using Error::Error;
    const char* category() const noexcept override { return "incompatible_schema"; }
};

/// Simulation reached an unphysical state (coincident particles, deep overlap).
class PhysicsError : public Error {
public:
    using Error::Error;
    const char* category() const noexcept override { return "physics"; }
};

}  // namespace pmx
