#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <utility>

namespace gridlex {

/// Thrown when a domain value violates one of its invariants. `field()` names
/// the offending member so callers can point at the bad input.
class ValidationError : public std::invalid_argument {
public:
    ValidationError(std::string field, const std::string& what)
        : std::invalid_argument(field + ": " + what), field_(std::move(field)) {}

    const std::string& field() const noexcept { return field_; }

private:
    std::string field_;
};

/// Thrown while reading a dataset file. Line numbers are 1-based; 0 means the
/// error is not tied to a single line (e.g. a missing file).
class IngestError : public std::runtime_error {
public:
    IngestError(std::size_t line, std::string field, const std::string& what)
        : std::runtime_error(format(line, field, what)), line_(line), field_(std::move(field)) {}

    std::size_t line() const noexcept { return line_; }
    const std::string& field() const noexcept { return field_; }

private:
    static std::string format(std::size_t line, const std::string& field, const std::string& what) {
        std::string out;
        if (line > 0) out += "line " + std::to_string(line) + ": ";
        if (!field.empty()) out += field + ": ";
        return out + what;
    }

    std::size_t line_;
    std::string field_;
};

/// Thrown when an analysis cannot be carried out on otherwise valid data
/// (too few cells, rank-deficient design, flat fit, ...).
class AnalysisError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace gridlex
