#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace crashscen {

/// Broad failure class; maps one-to-one onto CLI exit codes.
enum class ErrorKind { Config = 2, Data = 3, Numeric = 4 };

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

class ConfigError : public Error {
public:
    explicit ConfigError(const std::string& what) : Error(ErrorKind::Config, what) {}
};

class DataError : public Error {
public:
    explicit DataError(const std::string& what) : Error(ErrorKind::Data, what) {}
};

class NumericError : public Error {
public:
    explicit NumericError(const std::string& what) : Error(ErrorKind::Numeric, what) {}
};

// event_codec
class UnknownCode : public DataError {
public:
    UnknownCode(const std::string& phase, int code)
        : DataError("unknown " + phase + " code " + std::to_string(code)), phase_(phase), code_(code) {}
    const std::string& phase() const noexcept { return phase_; }
    int code() const noexcept { return code_; }

private:
    std::string phase_;
    int code_;
};

class MissingRule : public DataError {
public:
    explicit MissingRule(const std::string& crash_type)
        : DataError("no renumbering rule for crash type " + crash_type) {}
};

class EmptySOE : public DataError {
public:
    EmptySOE() : DataError("sequence of events is empty") {}
};

class AmbiguousFirstEvent : public DataError {
public:
    AmbiguousFirstEvent() : DataError("vehicle role of the first SOE event cannot be determined") {}
};

class ParseError : public DataError {
public:
    ParseError(const std::string& what, std::size_t position)
        : DataError(what + " (at offset " + std::to_string(position) + ")"), position_(position) {}
    /// Character offset of the first offending token.
    std::size_t position() const noexcept { return position_; }

private:
    std::size_t position_;
};

// ingest
class MissingColumn : public DataError {
public:
    explicit MissingColumn(const std::string& name) : DataError("missing column " + name), name_(name) {}
    const std::string& column() const noexcept { return name_; }

private:
    std::string name_;
};

// cluster
class KTooLarge : public ConfigError {
public:
    KTooLarge(std::size_t k, std::size_t n)
        : ConfigError("k=" + std::to_string(k) + " exceeds number of observations " + std::to_string(n)) {}
};

// bayesnet
class LevelMismatch : public DataError {
public:
    LevelMismatch(const std::string& variable, const std::string& level)
        : DataError("level '" + level + "' not declared for variable " + variable) {}
};

class ZeroProbabilityRecord : public NumericError {
public:
    explicit ZeroProbabilityRecord(std::size_t record)
        : NumericError("record " + std::to_string(record) + " has zero probability under the network") {}
};

class InfeasibleConstraints : public ConfigError {
public:
    explicit InfeasibleConstraints(const std::string& what) : ConfigError("infeasible constraints: " + what) {}
};

class ArcNotInGraph : public ConfigError {
public:
    ArcNotInGraph(const std::string& parent, const std::string& child)
        : ConfigError("arc " + parent + " -> " + child + " is not in the graph") {}
};

class IncompleteAssignment : public DataError {
public:
    explicit IncompleteAssignment(const std::string& node)
        : DataError("assignment is missing node " + node) {}
};

// inference
class ZeroEvidenceProbability : public NumericError {
public:
    ZeroEvidenceProbability() : NumericError("every replication had zero total particle weight") {}
};

}  // namespace crashscen
