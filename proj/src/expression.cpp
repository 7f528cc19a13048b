#include "kacdiff/expression.hpp"

#include <array>
#include <cctype>
#include <charconv>
#include <cmath>

#include "kacdiff/errors.hpp"

namespace kacdiff {

class ExpressionParser {
public:
    ExpressionParser(std::string_view text, const Expression::Constants& constants, int line, int offset)
        : text_(text), constants_(constants), line_(line), offset_(offset) {}

    Expression run() {
        Expression e;
        e.text_ = std::string(text_);
        out_ = &e.program_;
        skip_space();
        if (at_end()) fail("empty expression");
        expr();
        skip_space();
        if (!at_end()) fail(std::string("unexpected '") + text_[pos_] + "'");
        e.max_depth_ = max_depth_;
        return e;
    }

private:
    using Op = Expression::Op;
    using OpCode = Expression::OpCode;
    using Func = Expression::Func;

    [[noreturn]] void fail(const std::string& what) const {
        throw ParseError(what, line_, offset_ + static_cast<int>(pos_) + 1);
    }

    bool at_end() const { return pos_ >= text_.size(); }
    void skip_space() {
        while (!at_end() && std::isspace(static_cast<unsigned char>(text_[pos_]))) ++pos_;
    }
    bool accept(char c) {
        skip_space();
        if (!at_end() && text_[pos_] == c) {
            ++pos_;
            return true;
        }
        return false;
    }

    void emit(Op op) {
        out_->push_back(op);
        switch (op.code) {
            case OpCode::Const:
            case OpCode::X: ++depth_; break;
            case OpCode::Neg:
            case OpCode::Call: break;
            default: --depth_; break;
        }
        max_depth_ = std::max(max_depth_, depth_);
    }

    void expr() {
        term();
        for (;;) {
            if (accept('+')) {
                term();
                emit({OpCode::Add});
            } else if (accept('-')) {
                term();
                emit({OpCode::Sub});
            } else {
                return;
            }
        }
    }

    void term() {
        unary();
        for (;;) {
            if (accept('*')) {
                unary();
                emit({OpCode::Mul});
            } else if (accept('/')) {
                unary();
                emit({OpCode::Div});
            } else {
                return;
            }
        }
    }

    void unary() {
        if (accept('-')) {
            unary();
            emit({OpCode::Neg});
        } else if (accept('+')) {
            unary();
        } else {
            power();
        }
    }

    void power() {
        primary();
        if (accept('^')) {
            unary();
            emit({OpCode::Pow});
        }
    }

    void primary() {
        skip_space();
        if (at_end()) fail("unexpected end of expression");
        const char c = text_[pos_];
        if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') {
            number();
            return;
        }
        if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
            name();
            return;
        }
        if (accept('(')) {
            expr();
            if (!accept(')')) fail("expected ')'");
            return;
        }
        fail(std::string("unexpected '") + c + "'");
    }

    void number() {
        const std::size_t start = pos_;
        double value = 0.0;
        auto [ptr, ec] = std::from_chars(text_.data() + pos_, text_.data() + text_.size(), value);
        if (ec != std::errc()) fail("malformed number");
        pos_ = static_cast<std::size_t>(ptr - text_.data());
        if (pos_ == start) fail("malformed number");
        emit({OpCode::Const, Func::Exp, value});
    }

    void name() {
        const std::size_t start = pos_;
        while (!at_end() && (std::isalnum(static_cast<unsigned char>(text_[pos_])) || text_[pos_] == '_')) ++pos_;
        const std::string_view id = text_.substr(start, pos_ - start);
        skip_space();
        if (!at_end() && text_[pos_] == '(') {
            static const std::array<std::pair<std::string_view, Func>, 8> funcs = {{
                {"exp", Func::Exp}, {"log", Func::Log}, {"sqrt", Func::Sqrt}, {"tanh", Func::Tanh},
                {"abs", Func::Abs}, {"sin", Func::Sin}, {"cos", Func::Cos}, {"sign", Func::Sign}}};
            for (const auto& [fname, f] : funcs) {
                if (fname == id) {
                    ++pos_;
                    expr();
                    if (!accept(')')) fail("expected ')' after argument of " + std::string(id));
                    emit({OpCode::Call, f});
                    return;
                }
            }
            pos_ = start;
            fail("unknown function '" + std::string(id) + "'");
        }
        if (id == "x") {
            emit({OpCode::X});
            return;
        }
        if (auto it = constants_.find(id); it != constants_.end()) {
            emit({OpCode::Const, Func::Exp, it->second});
            return;
        }
        if (id == "pi") {
            emit({OpCode::Const, Func::Exp, M_PI});
            return;
        }
        if (id == "e") {
            emit({OpCode::Const, Func::Exp, M_E});
            return;
        }
        pos_ = start;
        fail("unknown name '" + std::string(id) + "'");
    }

    std::string_view text_;
    const Expression::Constants& constants_;
    int line_;
    int offset_;
    std::size_t pos_ = 0;
    std::vector<Op>* out_ = nullptr;
    int depth_ = 0;
    int max_depth_ = 0;
};

Expression Expression::parse(std::string_view text, const Constants& constants, int line, int column_offset) {
    return ExpressionParser(text, constants, line, column_offset).run();
}

double Expression::operator()(double x) const {
    constexpr int kInline = 32;
    std::array<double, kInline> small{};
    std::vector<double> large;
    double* stack = small.data();
    if (max_depth_ > kInline) {
        large.resize(static_cast<std::size_t>(max_depth_));
        stack = large.data();
    }
    int top = -1;
    for (const Op& op : program_) {
        switch (op.code) {
            case OpCode::Const: stack[++top] = op.value; break;
            case OpCode::X: stack[++top] = x; break;
            case OpCode::Add: --top; stack[top] += stack[top + 1]; break;
            case OpCode::Sub: --top; stack[top] -= stack[top + 1]; break;
            case OpCode::Mul: --top; stack[top] *= stack[top + 1]; break;
            case OpCode::Div: --top; stack[top] /= stack[top + 1]; break;
            case OpCode::Pow: --top; stack[top] = std::pow(stack[top], stack[top + 1]); break;
            case OpCode::Neg: stack[top] = -stack[top]; break;
            case OpCode::Call: {
                double& v = stack[top];
                switch (op.func) {
                    case Func::Exp: v = std::exp(v); break;
                    case Func::Log: v = std::log(v); break;
                    case Func::Sqrt: v = std::sqrt(v); break;
                    case Func::Tanh: v = std::tanh(v); break;
                    case Func::Abs: v = std::abs(v); break;
                    case Func::Sin: v = std::sin(v); break;
                    case Func::Cos: v = std::cos(v); break;
                    case Func::Sign: v = static_cast<double>((v > 0) - (v < 0)); break;
                }
                break;
            }
        }
    }
    return stack[0];
}

}  // namespace kacdiff
