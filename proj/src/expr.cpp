#include "gsfg/expr.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <utility>

namespace gsfg::expr {

namespace {

struct FuncEntry {
    const char* name;
    Func func;
};

constexpr FuncEntry kFuncs[] = {
    {"sin", Func::Sin},   {"cos", Func::Cos}, {"tan", Func::Tan},
    {"exp", Func::Exp},   {"tanh", Func::Tanh},
    {"abs", Func::Abs},   {"sign", Func::Sign},
};

double sign_of(double x) { return x > 0 ? 1.0 : (x < 0 ? -1.0 : 0.0); }

double apply_func(Func f, double x) {
    switch (f) {
        case Func::Sin: return std::sin(x);
        case Func::Cos: return std::cos(x);
        case Func::Tan: return std::tan(x);
        case Func::Exp: return std::exp(x);
        case Func::Tanh: return std::tanh(x);
        case Func::Abs: return std::fabs(x);
        case Func::Sign: return sign_of(x);
    }
    return 0.0;
}

double func_deriv(Func f, double x) {
    switch (f) {
        case Func::Sin: return std::cos(x);
        case Func::Cos: return -std::sin(x);
        case Func::Tan: {
            double t = std::tan(x);
            return 1.0 + t * t;
        }
        case Func::Exp: return std::exp(x);
        case Func::Tanh: {
            double t = std::tanh(x);
            return 1.0 - t * t;
        }
        case Func::Abs: return sign_of(x);
        case Func::Sign: return 0.0;
    }
    return 0.0;
}

Dual apply_binary_dual(BinaryOp op, Dual l, Dual r) {
    switch (op) {
        case BinaryOp::Add: return {l.value + r.value, l.deriv + r.deriv};
        case BinaryOp::Sub: return {l.value - r.value, l.deriv - r.deriv};
        case BinaryOp::Mul:
            return {l.value * r.value, l.deriv * r.value + l.value * r.deriv};
        case BinaryOp::Div:
            return {l.value / r.value,
                    (l.deriv * r.value - l.value * r.deriv) /
                        (r.value * r.value)};
        case BinaryOp::Pow: {
            double v = std::pow(l.value, r.value);
            double d = 0.0;
            if (r.deriv == 0.0) {
                // constant exponent: d/dx a^c = c a^(c-1) a'
                d = r.value * std::pow(l.value, r.value - 1.0) * l.deriv;
            } else {
                d = v * (r.deriv * std::log(l.value) +
                         r.value * l.deriv / l.value);
            }
            return {v, d};
        }
    }
    return {0.0, 0.0};
}

double apply_binary(BinaryOp op, double l, double r) {
    switch (op) {
        case BinaryOp::Add: return l + r;
        case BinaryOp::Sub: return l - r;
        case BinaryOp::Mul: return l * r;
        case BinaryOp::Div: return l / r;
        case BinaryOp::Pow: return std::pow(l, r);
    }
    return 0.0;
}

// --- parser ---------------------------------------------------------------

class Parser {
public:
    explicit Parser(std::string_view text) : text_(text) {}

    AstPtr run() {
        AstPtr e = parse_expr();
        skip_ws();
        if (pos_ != text_.size())
            fail("unexpected trailing input; expected operator or end");
        return e;
    }

private:
    std::string_view text_;
    std::size_t pos_ = 0;

    [[noreturn]] void fail(const std::string& what) {
        throw SyntaxError("expression syntax error at offset " +
                              std::to_string(pos_) + ": " + what,
                          pos_);
    }

    void skip_ws() {
        while (pos_ < text_.size() &&
               std::isspace(static_cast<unsigned char>(text_[pos_])))
            ++pos_;
    }

    bool accept(char c) {
        skip_ws();
        if (pos_ < text_.size() && text_[pos_] == c) {
            ++pos_;
            return true;
        }
        return false;
    }

    char peek() {
        skip_ws();
        return pos_ < text_.size() ? text_[pos_] : '\0';
    }

    AstPtr parse_expr() {
        AstPtr lhs = parse_term();
        for (;;) {
            if (accept('+'))
                lhs = Ast::make_binary(BinaryOp::Add, lhs, parse_term());
            else if (accept('-'))
                lhs = Ast::make_binary(BinaryOp::Sub, lhs, parse_term());
            else
                return lhs;
        }
    }

    AstPtr parse_term() {
        AstPtr lhs = parse_power();
        for (;;) {
            if (accept('*'))
                lhs = Ast::make_binary(BinaryOp::Mul, lhs, parse_power());
            else if (accept('/'))
                lhs = Ast::make_binary(BinaryOp::Div, lhs, parse_power());
            else
                return lhs;
        }
    }

    // '^' is right-associative and binds looser than unary minus, so the
    // base is parsed as a signed atom: -x^2 means (-x)^2.
    AstPtr parse_power() {
        AstPtr base = parse_signed();
        if (accept('^')) return Ast::make_binary(BinaryOp::Pow, base, parse_power());
        return base;
    }

    AstPtr parse_signed() {
        if (accept('-')) return Ast::make_neg(parse_signed());
        return parse_atom();
    }

    AstPtr parse_atom() {
        skip_ws();
        if (pos_ >= text_.size()) fail("expected number, name, or '('");
        char c = text_[pos_];
        if (std::isdigit(static_cast<unsigned char>(c)) || c == '.')
            return parse_number();
        if (std::isalpha(static_cast<unsigned char>(c)) || c == '_')
            return parse_ident();
        if (accept('(')) {
            AstPtr e = parse_expr();
            if (!accept(')')) fail("expected ')'");
            return e;
        }
        fail(std::string("unexpected character '") + c + "'");
    }

    AstPtr parse_number() {
        const char* begin = text_.data() + pos_;
        char* end = nullptr;
        double v = std::strtod(begin, &end);
        if (end == begin) fail("malformed number");
        // strtod accepts a leading sign; unary minus owns it instead.
        if (*begin == '+' || *begin == '-') fail("malformed number");
        pos_ += static_cast<std::size_t>(end - begin);
        return Ast::make_number(v);
    }

    AstPtr parse_ident() {
        std::size_t start = pos_;
        while (pos_ < text_.size() &&
               (std::isalnum(static_cast<unsigned char>(text_[pos_])) ||
                text_[pos_] == '_'))
            ++pos_;
        std::string name(text_.substr(start, pos_ - start));
        if (peek() == '(') {
            for (const auto& entry : kFuncs) {
                if (name == entry.name) {
                    accept('(');
                    AstPtr arg = parse_expr();
                    if (!accept(')')) fail("expected ')' after function argument");
                    return Ast::make_call(entry.func, arg);
                }
            }
            throw UnknownFunction("unknown function '" + name + "'");
        }
        return Ast::make_variable(std::move(name));
    }
};

int precedence(const Ast& a) {
    switch (a.kind) {
        case Ast::Kind::Binary:
            switch (a.op) {
                case BinaryOp::Add:
                case BinaryOp::Sub: return 1;
                case BinaryOp::Mul:
                case BinaryOp::Div: return 2;
                case BinaryOp::Pow: return 3;
            }
            return 1;
        case Ast::Kind::Neg: return 4;
        default: return 5;
    }
}

void print(const Ast& a, std::string& out);

void print_child(const Ast& child, int min_prec, std::string& out) {
    if (precedence(child) < min_prec) {
        out += '(';
        print(child, out);
        out += ')';
    } else {
        print(child, out);
    }
}

void print(const Ast& a, std::string& out) {
    switch (a.kind) {
        case Ast::Kind::Number: {
            char buf[32];
            std::snprintf(buf, sizeof buf, "%.17g", a.number);
            out += buf;
            break;
        }
        case Ast::Kind::Variable:
            out += a.name;
            break;
        case Ast::Kind::Neg:
            out += '-';
            print_child(*a.a, precedence(a), out);
            break;
        case Ast::Kind::Call:
            out += func_name(a.func);
            out += '(';
            print(*a.a, out);
            out += ')';
            break;
        case Ast::Kind::Binary: {
            int p = precedence(a);
            const char* opstr = "";
            bool space = false;
            switch (a.op) {
                case BinaryOp::Add: opstr = "+"; space = true; break;
                case BinaryOp::Sub: opstr = "-"; space = true; break;
                case BinaryOp::Mul: opstr = "*"; break;
                case BinaryOp::Div: opstr = "/"; break;
                case BinaryOp::Pow: opstr = "^"; break;
            }
            if (a.op == BinaryOp::Pow) {
                // right-associative
                print_child(*a.a, p + 1, out);
                out += opstr;
                print_child(*a.b, p, out);
            } else {
                print_child(*a.a, p, out);
                if (space) out += ' ';
                out += opstr;
                if (space) out += ' ';
                print_child(*a.b, p + 1, out);
            }
            break;
        }
    }
}

void collect_variables(const Ast& a, std::vector<std::string>& out) {
    switch (a.kind) {
        case Ast::Kind::Variable: out.push_back(a.name); break;
        case Ast::Kind::Neg:
        case Ast::Kind::Call: collect_variables(*a.a, out); break;
        case Ast::Kind::Binary:
            collect_variables(*a.a, out);
            collect_variables(*a.b, out);
            break;
        default: break;
    }
}

}  // namespace

AstPtr Ast::make_number(double v) {
    auto n = std::make_shared<Ast>();
    n->kind = Kind::Number;
    n->number = v;
    return n;
}

AstPtr Ast::make_variable(std::string name) {
    auto n = std::make_shared<Ast>();
    n->kind = Kind::Variable;
    n->name = std::move(name);
    return n;
}

AstPtr Ast::make_neg(AstPtr a) {
    auto n = std::make_shared<Ast>();
    n->kind = Kind::Neg;
    n->a = std::move(a);
    return n;
}

AstPtr Ast::make_binary(BinaryOp op, AstPtr a, AstPtr b) {
    auto n = std::make_shared<Ast>();
    n->kind = Kind::Binary;
    n->op = op;
    n->a = std::move(a);
    n->b = std::move(b);
    return n;
}

AstPtr Ast::make_call(Func f, AstPtr a) {
    auto n = std::make_shared<Ast>();
    n->kind = Kind::Call;
    n->func = f;
    n->a = std::move(a);
    return n;
}

AstPtr parse(std::string_view text) { return Parser(text).run(); }

double eval(const Ast& ast, const Bindings& bindings) {
    switch (ast.kind) {
        case Ast::Kind::Number: return ast.number;
        case Ast::Kind::Variable: {
            auto it = bindings.find(ast.name);
            if (it == bindings.end())
                throw UnboundVariable("unbound variable '" + ast.name + "'");
            return it->second;
        }
        case Ast::Kind::Neg: return -eval(*ast.a, bindings);
        case Ast::Kind::Call: return apply_func(ast.func, eval(*ast.a, bindings));
        case Ast::Kind::Binary:
            return apply_binary(ast.op, eval(*ast.a, bindings),
                                eval(*ast.b, bindings));
    }
    return 0.0;
}

Dual eval_dual(const Ast& ast, const Bindings& bindings, std::string_view wrt) {
    switch (ast.kind) {
        case Ast::Kind::Number: return {ast.number, 0.0};
        case Ast::Kind::Variable: {
            auto it = bindings.find(ast.name);
            if (it == bindings.end())
                throw UnboundVariable("unbound variable '" + ast.name + "'");
            return {it->second, ast.name == wrt ? 1.0 : 0.0};
        }
        case Ast::Kind::Neg: {
            Dual d = eval_dual(*ast.a, bindings, wrt);
            return {-d.value, -d.deriv};
        }
        case Ast::Kind::Call: {
            Dual d = eval_dual(*ast.a, bindings, wrt);
            return {apply_func(ast.func, d.value),
                    func_deriv(ast.func, d.value) * d.deriv};
        }
        case Ast::Kind::Binary:
            return apply_binary_dual(ast.op, eval_dual(*ast.a, bindings, wrt),
                                     eval_dual(*ast.b, bindings, wrt));
    }
    return {0.0, 0.0};
}

std::string to_string(const Ast& ast) {
    std::string out;
    print(ast, out);
    return out;
}

std::vector<std::string> variables(const Ast& ast) {
    std::vector<std::string> names;
    collect_variables(ast, names);
    std::sort(names.begin(), names.end());
    names.erase(std::unique(names.begin(), names.end()), names.end());
    return names;
}

void check_variables(const Ast& ast, std::span<const std::string> allowed) {
    for (const auto& name : variables(ast)) {
        if (std::find(allowed.begin(), allowed.end(), name) == allowed.end())
            throw UnknownVariable("unknown variable '" + name + "'");
    }
}

bool equal(const Ast& lhs, const Ast& rhs) {
    if (lhs.kind != rhs.kind) return false;
    switch (lhs.kind) {
        case Ast::Kind::Number:
            return lhs.number == rhs.number ||
                   (std::isnan(lhs.number) && std::isnan(rhs.number));
        case Ast::Kind::Variable: return lhs.name == rhs.name;
        case Ast::Kind::Neg: return equal(*lhs.a, *rhs.a);
        case Ast::Kind::Call:
            return lhs.func == rhs.func && equal(*lhs.a, *rhs.a);
        case Ast::Kind::Binary:
            return lhs.op == rhs.op && equal(*lhs.a, *rhs.a) &&
                   equal(*lhs.b, *rhs.b);
    }
    return false;
}

const char* func_name(Func f) {
    for (const auto& entry : kFuncs)
        if (entry.func == f) return entry.name;
    return "?";
}

// --- BoundExpr --------------------------------------------------------------

struct BoundExpr::Compiled {
    Ast::Kind kind;
    double number = 0.0;
    int slot = -1;
    BinaryOp op{};
    Func func{};
    std::unique_ptr<Compiled> a, b;

    static std::unique_ptr<Compiled> build(
        const Ast& ast, std::span<const std::string> names) {
        auto c = std::make_unique<Compiled>();
        c->kind = ast.kind;
        switch (ast.kind) {
            case Ast::Kind::Number:
                c->number = ast.number;
                break;
            case Ast::Kind::Variable: {
                auto it = std::find(names.begin(), names.end(), ast.name);
                if (it == names.end())
                    throw UnknownVariable("unknown variable '" + ast.name + "'");
                c->slot = static_cast<int>(it - names.begin());
                break;
            }
            case Ast::Kind::Neg:
                c->a = build(*ast.a, names);
                break;
            case Ast::Kind::Call:
                c->func = ast.func;
                c->a = build(*ast.a, names);
                break;
            case Ast::Kind::Binary:
                c->op = ast.op;
                c->a = build(*ast.a, names);
                c->b = build(*ast.b, names);
                break;
        }
        return c;
    }

    double eval(std::span<const double> values) const {
        switch (kind) {
            case Ast::Kind::Number: return number;
            case Ast::Kind::Variable: return values[static_cast<std::size_t>(slot)];
            case Ast::Kind::Neg: return -a->eval(values);
            case Ast::Kind::Call: return apply_func(func, a->eval(values));
            case Ast::Kind::Binary:
                return apply_binary(op, a->eval(values), b->eval(values));
        }
        return 0.0;
    }

    Dual eval_dual(std::span<const double> values, int wrt) const {
        switch (kind) {
            case Ast::Kind::Number: return {number, 0.0};
            case Ast::Kind::Variable:
                return {values[static_cast<std::size_t>(slot)],
                        slot == wrt ? 1.0 : 0.0};
            case Ast::Kind::Neg: {
                Dual d = a->eval_dual(values, wrt);
                return {-d.value, -d.deriv};
            }
            case Ast::Kind::Call: {
                Dual d = a->eval_dual(values, wrt);
                return {apply_func(func, d.value),
                        func_deriv(func, d.value) * d.deriv};
            }
            case Ast::Kind::Binary:
                return apply_binary_dual(op, a->eval_dual(values, wrt),
                                         b->eval_dual(values, wrt));
        }
        return {0.0, 0.0};
    }
};

BoundExpr::BoundExpr(AstPtr ast, std::span<const std::string> variable_names)
    : ast_(std::move(ast)), root_(Compiled::build(*ast_, variable_names)) {}

double BoundExpr::eval(std::span<const double> values) const {
    return root_->eval(values);
}

Dual BoundExpr::eval_dual(std::span<const double> values, int wrt) const {
    return root_->eval_dual(values, wrt);
}

}  // namespace gsfg::expr
