#pragma once

#include <cmath>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "spm/errors.hpp"

namespace spm {

enum class ExprKind {
    Constant,   // literal real
    Population, // X_a@l, resolved to a flat population index
    Param,      // named model constant, resolved to a param-table index
    Add,
    Sub,
    Mul,
    Div,
    Min,
    Max,
};

struct Expr;
using ExprPtr = std::shared_ptr<const Expr>;

/// Immutable arithmetic expression over population variables and model
/// parameters. Nodes are shared freely; a built tree is never mutated.
struct Expr {
    ExprKind kind;
    double value = 0.0;  // Constant
    int pop = -1;        // Population: flat index (location-major)
    int agent = -1;      // Population: agent type index
    int location = -1;   // Population: location index
    int param = -1;      // Param: index into the model's param table
    std::string name;    // Param: declared name (kept for serialization)
    ExprPtr lhs, rhs;
};

namespace ex {

inline ExprPtr constant(double v) {
    auto e = std::make_shared<Expr>();
    e->kind = ExprKind::Constant;
    e->value = v;
    return e;
}

inline ExprPtr population(int flat_index, int agent, int location) {
    auto e = std::make_shared<Expr>();
    e->kind = ExprKind::Population;
    e->pop = flat_index;
    e->agent = agent;
    e->location = location;
    return e;
}

inline ExprPtr param(int index, std::string name) {
    auto e = std::make_shared<Expr>();
    e->kind = ExprKind::Param;
    e->param = index;
    e->name = std::move(name);
    return e;
}

inline ExprPtr binary(ExprKind kind, ExprPtr a, ExprPtr b) {
    auto e = std::make_shared<Expr>();
    e->kind = kind;
    e->lhs = std::move(a);
    e->rhs = std::move(b);
    return e;
}

inline ExprPtr add(ExprPtr a, ExprPtr b) { return binary(ExprKind::Add, std::move(a), std::move(b)); }
inline ExprPtr sub(ExprPtr a, ExprPtr b) { return binary(ExprKind::Sub, std::move(a), std::move(b)); }
inline ExprPtr mul(ExprPtr a, ExprPtr b) { return binary(ExprKind::Mul, std::move(a), std::move(b)); }
inline ExprPtr div(ExprPtr a, ExprPtr b) { return binary(ExprKind::Div, std::move(a), std::move(b)); }
inline ExprPtr min(ExprPtr a, ExprPtr b) { return binary(ExprKind::Min, std::move(a), std::move(b)); }
inline ExprPtr max(ExprPtr a, ExprPtr b) { return binary(ExprKind::Max, std::move(a), std::move(b)); }

} // namespace ex

/// Evaluates an expression on a real-valued state. Deterministic: identical
/// inputs give bitwise-identical results. Division by zero throws
/// EvaluationError; callers attach transition context.
inline double eval_expr(const Expr& e, std::span<const double> state, std::span<const double> params) {
    switch (e.kind) {
        case ExprKind::Constant: return e.value;
        case ExprKind::Population: return state[static_cast<std::size_t>(e.pop)];
        case ExprKind::Param: return params[static_cast<std::size_t>(e.param)];
        case ExprKind::Add: return eval_expr(*e.lhs, state, params) + eval_expr(*e.rhs, state, params);
        case ExprKind::Sub: return eval_expr(*e.lhs, state, params) - eval_expr(*e.rhs, state, params);
        case ExprKind::Mul: return eval_expr(*e.lhs, state, params) * eval_expr(*e.rhs, state, params);
        case ExprKind::Div: {
            double num = eval_expr(*e.lhs, state, params);
            double den = eval_expr(*e.rhs, state, params);
            if (den == 0.0) throw EvaluationError("division by zero");
            return num / den;
        }
        case ExprKind::Min: return std::fmin(eval_expr(*e.lhs, state, params), eval_expr(*e.rhs, state, params));
        case ExprKind::Max: return std::fmax(eval_expr(*e.lhs, state, params), eval_expr(*e.rhs, state, params));
    }
    throw EvaluationError("corrupt expression node");
}

/// Structural equality: same shape, same leaf payloads (constants compared
/// by value, populations by flat index, params by index).
inline bool expr_equal(const Expr& a, const Expr& b) {
    if (a.kind != b.kind) return false;
    switch (a.kind) {
        case ExprKind::Constant: return a.value == b.value;
        case ExprKind::Population: return a.pop == b.pop;
        case ExprKind::Param: return a.param == b.param;
        default: return expr_equal(*a.lhs, *b.lhs) && expr_equal(*a.rhs, *b.rhs);
    }
}

inline bool expr_equal(const ExprPtr& a, const ExprPtr& b) {
    if (a == b) return true;
    if (!a || !b) return false;
    return expr_equal(*a, *b);
}

/// True if the expression references no population variable.
inline bool state_free(const Expr& e) {
    switch (e.kind) {
        case ExprKind::Constant:
        case ExprKind::Param: return true;
        case ExprKind::Population: return false;
        default: return state_free(*e.lhs) && state_free(*e.rhs);
    }
}

/// Flattens a left- or right-nested product chain into its factors.
inline void flatten_product(const ExprPtr& e, std::vector<ExprPtr>& out) {
    if (e->kind == ExprKind::Mul) {
        flatten_product(e->lhs, out);
        flatten_product(e->rhs, out);
    } else {
        out.push_back(e);
    }
}

/// Rebuilds a left-associated product from factors; empty list means 1.
inline ExprPtr rebuild_product(const std::vector<ExprPtr>& factors) {
    if (factors.empty()) return ex::constant(1.0);
    ExprPtr acc = factors.front();
    for (std::size_t i = 1; i < factors.size(); ++i) acc = ex::mul(acc, factors[i]);
    return acc;
}

// ---------------------------------------------------------------------------
// Compiled form: a flat instruction list with parameters resolved to numbers
// and constant subtrees folded. Used by the hot loops (SSA, ODE drifts);
// semantics match eval_expr except that folding may reassociate
// state-independent arithmetic.
// ---------------------------------------------------------------------------

enum class Op : std::uint8_t { Const, Pop, Add, Sub, Mul, Div, Min, Max };

struct CompiledExpr {
    struct Ins {
        Op op;
        std::int32_t a = -1; // operand slots
        std::int32_t b = -1;
        std::int32_t pop = -1;
        double c = 0.0;
    };
    std::vector<Ins> code; // slot i is the value of instruction i

    double eval(std::span<const double> state, std::vector<double>& scratch) const {
        scratch.resize(code.size());
        std::size_t n = code.size();
        for (std::size_t i = 0; i < n; ++i) {
            const Ins& ins = code[i];
            switch (ins.op) {
                case Op::Const: scratch[i] = ins.c; break;
                case Op::Pop: scratch[i] = state[static_cast<std::size_t>(ins.pop)]; break;
                case Op::Add: scratch[i] = scratch[ins.a] + scratch[ins.b]; break;
                case Op::Sub: scratch[i] = scratch[ins.a] - scratch[ins.b]; break;
                case Op::Mul: scratch[i] = scratch[ins.a] * scratch[ins.b]; break;
                case Op::Div: {
                    double den = scratch[ins.b];
                    if (den == 0.0) throw EvaluationError("division by zero");
                    scratch[i] = scratch[ins.a] / den;
                    break;
                }
                case Op::Min: scratch[i] = std::fmin(scratch[ins.a], scratch[ins.b]); break;
                case Op::Max: scratch[i] = std::fmax(scratch[ins.a], scratch[ins.b]); break;
            }
        }
        return scratch.back();
    }
};

namespace detail {

inline std::int32_t compile_node(const Expr& e, std::span<const double> params,
                                 std::vector<CompiledExpr::Ins>& code) {
    auto emit = [&code](CompiledExpr::Ins ins) {
        code.push_back(ins);
        return static_cast<std::int32_t>(code.size() - 1);
    };
    switch (e.kind) {
        case ExprKind::Constant: return emit({Op::Const, -1, -1, -1, e.value});
        case ExprKind::Param: return emit({Op::Const, -1, -1, -1, params[static_cast<std::size_t>(e.param)]});
        case ExprKind::Population: return emit({Op::Pop, -1, -1, e.pop, 0.0});
        default: break;
    }
    std::int32_t a = compile_node(*e.lhs, params, code);
    std::int32_t b = compile_node(*e.rhs, params, code);
    bool fold = code[a].op == Op::Const && code[b].op == Op::Const;
    double x = code[a].c, y = code[b].c;
    Op op;
    double v = 0.0;
    switch (e.kind) {
        case ExprKind::Add: op = Op::Add; v = x + y; break;
        case ExprKind::Sub: op = Op::Sub; v = x - y; break;
        case ExprKind::Mul: op = Op::Mul; v = x * y; break;
        case ExprKind::Div:
            op = Op::Div;
            if (fold && y == 0.0) fold = false; // keep the runtime error path
            v = fold ? x / y : 0.0;
            break;
        case ExprKind::Min: op = Op::Min; v = std::fmin(x, y); break;
        case ExprKind::Max: op = Op::Max; v = std::fmax(x, y); break;
        default: throw EvaluationError("corrupt expression node");
    }
    if (fold) {
        code.resize(static_cast<std::size_t>(a)); // a and b are the top two slots
        return emit({Op::Const, -1, -1, -1, v});
    }
    return emit({op, a, b, -1, 0.0});
}

} // namespace detail

/// Compiles an expression with the given parameter values baked in.
inline CompiledExpr compile_expr(const Expr& e, std::span<const double> params) {
    CompiledExpr out;
    detail::compile_node(e, params, out.code);
    return out;
}

} // namespace spm
