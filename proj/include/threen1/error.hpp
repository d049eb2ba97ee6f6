#pragma once

#include <stdexcept>
#include <string>

namespace threen1 {

class Error : public std::runtime_error {
public:
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Bad arguments to a public call (empty varname, oversize subscript, misuse of MULTI...).
class UsageError : public Error {
public:
    using Error::Error;
};

class OverflowError : public Error {
public:
    using Error::Error;
};

// Backend-reported failure: non-numeric value on incr, server error reply, etc.
class StoreError : public Error {
public:
    using Error::Error;
};

class ConnectionError : public Error {
public:
    using Error::Error;
};

class ProtocolError : public Error {
public:
    using Error::Error;
};

class LockError : public Error {
public:
    using Error::Error;
};

class RetryLimitError : public Error {
public:
    RetryLimitError(const std::string& msg, unsigned attempts) : Error(msg), attempts_(attempts) {}
    unsigned attempts() const noexcept { return attempts_; }

private:
    unsigned attempts_;
};

}  // namespace threen1
