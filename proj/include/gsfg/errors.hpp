#pragma once

#include <stdexcept>
#include <string>

namespace gsfg {

using NodeId = int;

/// Base class for all library errors.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

/// Expression text could not be parsed. `offset` is the byte position.
class SyntaxError : public Error {
public:
    SyntaxError(const std::string& msg, std::size_t offset)
        : Error(msg), offset(offset) {}
    std::size_t offset;
};

class UnknownFunction : public Error {
public:
    using Error::Error;
};

class UnknownVariable : public Error {
public:
    using Error::Error;
};

class UnboundVariable : public Error {
public:
    using Error::Error;
};

/// Scenario file could not be parsed. Positions are 1-based.
class ParseError : public Error {
public:
    ParseError(const std::string& msg, int line, int col)
        : Error(msg), line(line), col(col) {}
    int line;
    int col;
};

/// Scenario file parsed but references or values do not make sense.
class SemanticError : public Error {
public:
    using Error::Error;
};

/// DC gain requested for a system with a pole at s = 0.
class PoleAtOrigin : public Error {
public:
    explicit PoleAtOrigin(const std::string& msg, NodeId node = -1)
        : Error(msg), node(node) {}
    NodeId node;
};

/// A signal left the representable range (or the blow-up threshold).
class Diverged : public Error {
public:
    Diverged(const std::string& msg, NodeId node, double t)
        : Error(msg), node(node), t(t) {}
    NodeId node;
    double t;
};

class LinearizationFault : public Error {
public:
    explicit LinearizationFault(const std::string& msg, NodeId node = -1)
        : Error(msg), node(node) {}
    NodeId node;
};

/// Truncated-mode rate recursion hit a cycle that does not pass through an
/// output node; such topologies need the full linear solve.
class CycleBeyondOutput : public Error {
public:
    using Error::Error;
};

/// |det(I - Phi)| fell below the configured tolerance.
class SingularSystem : public Error {
public:
    SingularSystem(const std::string& msg, double det)
        : Error(msg), det(det) {}
    double det;
};

/// A cycle made purely of direct-feedthrough nodes has no evaluation order.
class AlgebraicLoop : public Error {
public:
    using Error::Error;
};

class WeightBlowup : public Error {
public:
    WeightBlowup(const std::string& msg, double t) : Error(msg), t(t) {}
    double t;
};

}  // namespace gsfg
