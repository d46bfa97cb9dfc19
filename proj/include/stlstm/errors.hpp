#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace stlstm {

/// Base class of every error thrown by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Operand shapes do not agree.
class DimensionError : public Error {
public:
    using Error::Error;
};

/// A configuration value is out of its valid range (lambda <= 0, p outside (0,1], ...).
class ConfigError : public Error {
public:
    using Error::Error;
};

/// Input data violates a documented contract (frame counts, labels, indices).
class DataError : public Error {
public:
    using Error::Error;
};

/// A file could not be parsed. Carries the 1-based line when known.
class ParseError : public DataError {
public:
    ParseError(const std::string& what, std::size_t line = 0)
        : DataError(line ? what + " (line " + std::to_string(line) + ")" : what), line_(line) {}

    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

enum class TopologyErrorKind { Cycle, MultipleRoots, NoRoot, OrphanJoint, RootMismatch, Empty };

/// Skeleton parent links do not form a single rooted tree.
/// `joints` lists the offending 0-based joint indices.
class TopologyError : public Error {
public:
    TopologyError(TopologyErrorKind kind, std::vector<std::size_t> joints, const std::string& what)
        : Error(what), kind_(kind), joints_(std::move(joints)) {}

    TopologyErrorKind kind() const noexcept { return kind_; }
    const std::vector<std::size_t>& joints() const noexcept { return joints_; }

private:
    TopologyErrorKind kind_;
    std::vector<std::size_t> joints_;
};

} // namespace stlstm
