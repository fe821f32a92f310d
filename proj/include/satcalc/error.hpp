#pragma once

#include <stdexcept>
#include <string>

namespace satcalc {

// Base for every failure caused by caller input (bad shapes, bad files,
// bad parameter values). The CLI maps these to exit status 1; anything
// else escaping a subcommand is an internal error (exit 2).
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class ShapeError : public Error {
public:
    using Error::Error;
};

class FormatError : public Error {
public:
    using Error::Error;
};

class DomainError : public Error {
public:
    using Error::Error;
};

class EmptySupportError : public Error {
public:
    using Error::Error;
};

class IoError : public Error {
public:
    using Error::Error;
};

[[noreturn]] void throw_shape(const std::string& what);

} // namespace satcalc
