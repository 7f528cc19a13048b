#pragma once

#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace kacdiff {

/// Scalar arithmetic expression in the single variable `x`.
///
/// Grammar (usual precedence, `^` right-associative and binding tighter than
/// unary minus):
///
///     expr    := term (('+' | '-') term)*
///     term    := unary (('*' | '/') unary)*
///     unary   := ('+' | '-') unary | power
///     power   := primary ('^' unary)?
///     primary := number | name | name '(' expr ')' | '(' expr ')'
///
/// Names are `x`, the constants `pi` and `e`, caller-supplied constants, and
/// the functions exp, log, sqrt, tanh, abs, sin, cos, sign.
class Expression {
public:
    using Constants = std::map<std::string, double, std::less<>>;

    /// Throws ParseError; `line` and `column_offset` place reported columns
    /// inside an enclosing file.
    static Expression parse(std::string_view text, const Constants& constants = {}, int line = 0,
                            int column_offset = 0);

    double operator()(double x) const;
    const std::string& text() const noexcept { return text_; }

private:
    enum class OpCode : unsigned char { Const, X, Add, Sub, Mul, Div, Pow, Neg, Call };
    enum class Func : unsigned char { Exp, Log, Sqrt, Tanh, Abs, Sin, Cos, Sign };
    struct Op {
        OpCode code;
        Func func = Func::Exp;
        double value = 0.0;
    };
    friend class ExpressionParser;

    std::string text_;
    std::vector<Op> program_;
    int max_depth_ = 0;
};

}  // namespace kacdiff
