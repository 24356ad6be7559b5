#pragma once

#include <map>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "gsfg/errors.hpp"

namespace gsfg::expr {

enum class BinaryOp { Add, Sub, Mul, Div, Pow };
enum class Func { Sin, Cos, Tan, Exp, Tanh, Abs, Sign };

/// Immutable expression tree. Nodes are shared so ASTs copy cheaply.
struct Ast;
using AstPtr = std::shared_ptr<const Ast>;

struct Ast {
    enum class Kind { Number, Variable, Neg, Binary, Call };

    Kind kind;
    double number = 0.0;   // Kind::Number
    std::string name;      // Kind::Variable
    BinaryOp op{};         // Kind::Binary
    Func func{};           // Kind::Call
    AstPtr a;              // operand / left / call argument
    AstPtr b;              // right operand

    static AstPtr make_number(double v);
    static AstPtr make_variable(std::string name);
    static AstPtr make_neg(AstPtr a);
    static AstPtr make_binary(BinaryOp op, AstPtr a, AstPtr b);
    static AstPtr make_call(Func f, AstPtr a);
};

/// Parses an expression. Precedence, tightest first: unary minus, '^'
/// (right-associative), '*' '/', '+' '-'. Throws SyntaxError with the byte
/// offset of the problem, or UnknownFunction for a call to an unknown name.
AstPtr parse(std::string_view text);

/// Variable bindings for the generic evaluator.
using Bindings = std::map<std::string, double, std::less<>>;

/// Evaluates with IEEE semantics; inf/NaN propagate to the caller.
/// Throws UnboundVariable if the tree references a name not in `bindings`.
double eval(const Ast& ast, const Bindings& bindings);

struct Dual {
    double value;
    double deriv;
};

/// Value and exact partial derivative with respect to `wrt` (forward-mode).
Dual eval_dual(const Ast& ast, const Bindings& bindings, std::string_view wrt);

/// Canonical printed form; parse(to_string(ast)) reparses to an equivalent
/// tree and printing is a fixed point on strings.
std::string to_string(const Ast& ast);

/// Distinct variable names, sorted.
std::vector<std::string> variables(const Ast& ast);

/// Throws UnknownVariable unless every variable in `ast` is in `allowed`.
void check_variables(const Ast& ast, std::span<const std::string> allowed);

bool equal(const Ast& lhs, const Ast& rhs);

const char* func_name(Func f);

/// An AST compiled against a fixed variable layout: evaluation takes the
/// values by slot, with no name lookups. Used in the simulation hot path.
class BoundExpr {
public:
    BoundExpr() = default;
    /// Throws UnknownVariable if the tree uses a name not in `variable_names`.
    BoundExpr(AstPtr ast, std::span<const std::string> variable_names);

    double eval(std::span<const double> values) const;
    /// Derivative with respect to slot `wrt`.
    Dual eval_dual(std::span<const double> values, int wrt) const;

    const AstPtr& ast() const { return ast_; }
    bool valid() const { return root_ != nullptr; }

private:
    struct Compiled;
    AstPtr ast_;
    std::shared_ptr<const Compiled> root_;
};

}  // namespace gsfg::expr
