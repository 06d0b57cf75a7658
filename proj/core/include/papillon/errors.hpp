#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace papillon {

/// Base class for every error raised by this library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// --- chat backends ---------------------------------------------------------

class TransportError : public Error {
public:
    using Error::Error;
};

class ProtocolError : public Error {
public:
    using Error::Error;
};

class BudgetExceeded : public Error {
public:
    using Error::Error;
};

class NoRuleMatched : public Error {
public:
    using Error::Error;
};

// --- structured prompt IO ---------------------------------------------------

class MissingInput : public Error {
public:
    explicit MissingInput(std::string field)
        : Error("missing input field: " + field), field_(std::move(field)) {}
    const std::string& field() const { return field_; }

private:
    std::string field_;
};

class ParseFailure : public Error {
public:
    using Error::Error;
};

// --- metrics ----------------------------------------------------------------

class RangeError : public Error {
public:
    using Error::Error;
};

// --- PII extraction ---------------------------------------------------------

class AlignmentFailure : public Error {
public:
    using Error::Error;
};

// --- pipeline ---------------------------------------------------------------

class EmptyCreation : public Error {
public:
    using Error::Error;
};

enum class Stage { creator, remote, aggregator };

std::string to_string(Stage stage);

class StageError : public Error {
public:
    StageError(Stage stage, const std::string& cause)
        : Error("stage " + to_string(stage) + " failed: " + cause), stage_(stage) {}
    Stage stage() const { return stage_; }

private:
    Stage stage_;
};

// --- datasets and reports ----------------------------------------------------

class SchemaError : public Error {
public:
    SchemaError(std::size_t line, const std::string& what)
        : Error("line " + std::to_string(line) + ": " + what), line_(line) {}
    std::size_t line() const { return line_; }

private:
    std::size_t line_;
};

class IoError : public Error {
public:
    using Error::Error;
};

class EmptyDataset : public Error {
public:
    using Error::Error;
};

class MissingRedaction : public Error {
public:
    using Error::Error;
};

class MissingPricing : public Error {
public:
    using Error::Error;
};

class DimensionMismatch : public Error {
public:
    using Error::Error;
};

class ZeroVector : public Error {
public:
    using Error::Error;
};

// --- configuration ------------------------------------------------------------

class ConfigError : public Error {
public:
    using Error::Error;
};

}  // namespace papillon
