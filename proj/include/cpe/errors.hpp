#pragma once

#include <cstdio>
#include <stdexcept>
#include <string>

namespace cpe {

/// Four significant digits, for messages.
inline std::string format_g(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.4g", v);
    return buf;
}

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Two fields (or a field and an operator) live on different grids.
class GridMismatch : public Error {
public:
    using Error::Error;
};

/// A division by a field value below the positivity guard.
class DegeneracyError : public Error {
public:
    using Error::Error;
};

/// A field left the small-data validity window, e.g. Theta outside
/// [Theta*/2, 3 Theta*/2] or a flow map with |grad X - I| > 1/2.
class RegimeError : public Error {
public:
    RegimeError(const std::string& field, const std::string& where, double value, const std::string& what)
        : Error(what + " (field " + field + " at " + where + ", value " + std::to_string(value) + ")"),
          field_(field), where_(where), value_(value) {}
    explicit RegimeError(const std::string& what) : Error(what) {}

    const std::string& field() const noexcept { return field_; }
    const std::string& where() const noexcept { return where_; }
    double value() const noexcept { return value_; }

private:
    std::string field_;
    std::string where_;
    double value_ = 0.0;
};

/// An iteration (inverse map, Picard, implicit solve) did not converge.
class ConvergenceError : public Error {
public:
    using Error::Error;
};

/// Invalid configuration input.
class ConfigError : public Error {
public:
    using Error::Error;
};

inline constexpr double kPositivityGuard = 1e-12;

}  // namespace cpe
