#pragma once

#include <stdexcept>
#include <string>

namespace petseg {

// Base class for all toolkit errors. Subcommands map these to exit codes.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

class InvalidSpacingError : public Error {
public:
    using Error::Error;
};

class IndexError : public Error {
public:
    using Error::Error;
};

class InvalidVolumeError : public Error {
public:
    using Error::Error;
};

// NIfTI / UNW1 / config parse failures; message names the offending field.
class ParseError : public Error {
public:
    using Error::Error;
};

// Shape or spacing mismatch between volumes that must align.
class AlignmentError : public Error {
public:
    using Error::Error;
};

class InvalidKindError : public Error {
public:
    using Error::Error;
};

class InvalidInterpolationError : public Error {
public:
    using Error::Error;
};

class InvalidParameterError : public Error {
public:
    using Error::Error;
};

class DescriptorError : public Error {
public:
    using Error::Error;
};

class ShapeError : public Error {
public:
    using Error::Error;
};

class NumericError : public Error {
public:
    using Error::Error;
};

class InvalidMaskError : public Error {
public:
    using Error::Error;
};

class InvalidMetricError : public Error {
public:
    using Error::Error;
};

class EnsembleMismatchError : public Error {
public:
    using Error::Error;
};

class IoError : public Error {
public:
    using Error::Error;
};

class ConfigError : public Error {
public:
    using Error::Error;
};

}  // namespace petseg
