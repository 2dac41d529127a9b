#ifndef PROTOMARK_ERRORS_HPP
#define PROTOMARK_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace protomark {

// Base for all pipeline errors. Subtypes map to the failure classes the
// callers are expected to distinguish (I/O, schema, config, shapes, numerics).
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

class IoError : public Error {
public:
    explicit IoError(const std::string& msg) : Error(msg) {}
};

// Schema or content violation in loaded data; message names the offending
// field or sample id.
class ValidationError : public Error {
public:
    explicit ValidationError(const std::string& msg) : Error(msg) {}
};

class ConfigError : public Error {
public:
    explicit ConfigError(const std::string& msg) : Error(msg) {}
};

class ShapeError : public Error {
public:
    explicit ShapeError(const std::string& msg) : Error(msg) {}
};

class BoundsError : public Error {
public:
    explicit BoundsError(const std::string& msg) : Error(msg) {}
};

class PreconditionError : public Error {
public:
    explicit PreconditionError(const std::string& msg) : Error(msg) {}
};

// Heatmap channel with zero mass cannot define a prototype.
class DegenerateHeatmapError : public Error {
public:
    explicit DegenerateHeatmapError(const std::string& msg) : Error(msg) {}
};

// Non-finite value encountered mid-run; message carries the step diagnostic.
class NumericError : public Error {
public:
    explicit NumericError(const std::string& msg) : Error(msg) {}
};

} // namespace protomark

#endif
