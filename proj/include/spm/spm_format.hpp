#pragma once

#include <charconv>
#include <cstdint>
#include <map>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include "spm/errors.hpp"
#include "spm/model.hpp"

namespace spm {

// ---------------------------------------------------------------------------
// Number formatting: shortest representation that round-trips exactly.
// ---------------------------------------------------------------------------

inline std::string format_real(double v) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

namespace fmt_detail {

enum class TokKind { Ident, Number, Symbol, End };

struct Token {
    TokKind kind = TokKind::End;
    std::string text;
    double number = 0.0;
    int line = 1, col = 1;
};

class Lexer {
public:
    explicit Lexer(std::string_view src) : src_(src) { advance(); }

    const Token& peek() const { return tok_; }

    Token next() {
        Token t = tok_;
        advance();
        return t;
    }

private:
    void advance() {
        skip_space_and_comments();
        tok_ = Token{};
        tok_.line = line_;
        tok_.col = col_;
        if (pos_ >= src_.size()) {
            tok_.kind = TokKind::End;
            return;
        }
        char c = src_[pos_];
        if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
            std::size_t start = pos_;
            while (pos_ < src_.size() &&
                   (std::isalnum(static_cast<unsigned char>(src_[pos_])) || src_[pos_] == '_'))
                bump();
            tok_.kind = TokKind::Ident;
            tok_.text = std::string(src_.substr(start, pos_ - start));
            return;
        }
        if (std::isdigit(static_cast<unsigned char>(c)) ||
            (c == '.' && pos_ + 1 < src_.size() && std::isdigit(static_cast<unsigned char>(src_[pos_ + 1])))) {
            std::size_t start = pos_;
            while (pos_ < src_.size() && (std::isdigit(static_cast<unsigned char>(src_[pos_])) || src_[pos_] == '.'))
                bump();
            if (pos_ < src_.size() && (src_[pos_] == 'e' || src_[pos_] == 'E')) {
                bump();
                if (pos_ < src_.size() && (src_[pos_] == '+' || src_[pos_] == '-')) bump();
                while (pos_ < src_.size() && std::isdigit(static_cast<unsigned char>(src_[pos_]))) bump();
            }
            std::string_view text = src_.substr(start, pos_ - start);
            double value = 0.0;
            auto res = std::from_chars(text.data(), text.data() + text.size(), value);
            if (res.ec != std::errc{} || res.ptr != text.data() + text.size())
                throw ParseError("malformed number '" + std::string(text) + "'", tok_.line, tok_.col);
            tok_.kind = TokKind::Number;
            tok_.text = std::string(text);
            tok_.number = value;
            return;
        }
        if (c == '+' && pos_ + 1 < src_.size() && src_[pos_ + 1] == '=') {
            bump();
            bump();
            tok_.kind = TokKind::Symbol;
            tok_.text = "+=";
            return;
        }
        static constexpr std::string_view singles = "=;{}()@+-*/,";
        if (singles.find(c) != std::string_view::npos) {
            bump();
            tok_.kind = TokKind::Symbol;
            tok_.text = std::string(1, c);
            return;
        }
        throw ParseError(std::string("unexpected character '") + c + "'", line_, col_);
    }

    void skip_space_and_comments() {
        while (pos_ < src_.size()) {
            char c = src_[pos_];
            if (c == '#') {
                while (pos_ < src_.size() && src_[pos_] != '\n') bump();
            } else if (std::isspace(static_cast<unsigned char>(c))) {
                bump();
            } else {
                break;
            }
        }
    }

    void bump() {
        if (src_[pos_] == '\n') {
            ++line_;
            col_ = 1;
        } else {
            ++col_;
        }
        ++pos_;
    }

    std::string_view src_;
    std::size_t pos_ = 0;
    int line_ = 1, col_ = 1;
    Token tok_;
};

inline const char* kKeywords[] = {"param", "location", "agent", "init",
                                  "transition", "rate", "update", "at", "min", "max"};

inline bool is_keyword(const std::string& s) {
    for (const char* k : kKeywords)
        if (s == k) return true;
    return false;
}

class Parser {
public:
    explicit Parser(std::string_view src) : lex_(src) {}

    SpatialModel parse() {
        while (lex_.peek().kind != TokKind::End) statement();
        model_.initial.assign(static_cast<std::size_t>(model_.num_populations()), 0);
        for (const auto& [key, count] : inits_) model_.initial[static_cast<std::size_t>(key)] = count;
        return std::move(model_);
    }

private:
    void statement() {
        Token t = lex_.next();
        if (t.kind != TokKind::Ident)
            throw ParseError("expected a declaration keyword", t.line, t.col);
        if (t.text == "param") return param_decl();
        if (t.text == "location") return location_decl();
        if (t.text == "agent") return agent_decl();
        if (t.text == "init") return init_decl();
        if (t.text == "transition") return transition_decl();
        throw ParseError("unknown declaration '" + t.text + "'", t.line, t.col);
    }

    void param_decl() {
        Token name = expect_label();
        if (model_.find_param(name.text) >= 0)
            throw DuplicateDeclaration("duplicate param '" + name.text + "'", name.line, name.col);
        expect_symbol("=");
        double v = signed_number();
        expect_symbol(";");
        model_.params.emplace_back(name.text, v);
    }

    void location_decl() {
        for (;;) {
            Token name = expect_label();
            if (model_.find_location(name.text) >= 0)
                throw DuplicateDeclaration("duplicate location '" + name.text + "'", name.line, name.col);
            LocationInfo info;
            info.label = name.text;
            if (lex_.peek().kind == TokKind::Ident && lex_.peek().text == "at") {
                lex_.next();
                double x = signed_number();
                expect_symbol(",");
                double y = signed_number();
                info.coord = {x, y};
            }
            model_.locations.push_back(std::move(info));
            if (symbol_is(",")) {
                lex_.next();
                continue;
            }
            expect_symbol(";");
            break;
        }
    }

    void agent_decl() {
        for (;;) {
            Token name = expect_label();
            if (model_.find_agent(name.text) >= 0)
                throw DuplicateDeclaration("duplicate agent '" + name.text + "'", name.line, name.col);
            model_.agents.push_back({name.text});
            if (symbol_is(",")) {
                lex_.next();
                continue;
            }
            expect_symbol(";");
            break;
        }
    }

    void init_decl() {
        auto [idx, tok] = population_ref();
        expect_symbol("=");
        double v = signed_number();
        auto count = static_cast<std::int64_t>(v);
        if (static_cast<double>(count) != v || count < 0)
            throw ParseError("init count must be a nonnegative integer", tok.line, tok.col);
        if (inits_.count(idx))
            throw DuplicateDeclaration("duplicate init for '" + model_.population_label(idx) + "'",
                                       tok.line, tok.col);
        expect_symbol(";");
        inits_[idx] = count;
    }

    void transition_decl() {
        Token name = expect_label();
        for (const auto& tr : model_.transitions)
            if (tr.label == name.text)
                throw DuplicateDeclaration("duplicate transition '" + name.text + "'", name.line, name.col);
        Transition tr;
        tr.label = name.text;
        expect_symbol("{");
        bool have_rate = false;
        std::map<int, std::int64_t> update;
        while (!symbol_is("}")) {
            Token kw = lex_.next();
            if (kw.kind != TokKind::Ident)
                throw ParseError("expected 'rate' or 'update'", kw.line, kw.col);
            if (kw.text == "rate") {
                if (have_rate) throw DuplicateDeclaration("duplicate rate clause", kw.line, kw.col);
                expect_symbol("=");
                tr.rate = expression();
                expect_symbol(";");
                have_rate = true;
            } else if (kw.text == "update") {
                for (;;) {
                    auto [idx, tok] = population_ref();
                    expect_symbol("+=");
                    double v = signed_number();
                    auto delta = static_cast<std::int64_t>(v);
                    if (static_cast<double>(delta) != v)
                        throw ParseError("update delta must be an integer", tok.line, tok.col);
                    update[idx] += delta;
                    if (symbol_is(",")) {
                        lex_.next();
                        continue;
                    }
                    expect_symbol(";");
                    break;
                }
            } else {
                throw ParseError("expected 'rate' or 'update'", kw.line, kw.col);
            }
        }
        lex_.next(); // consume '}'
        if (!have_rate) throw ParseError("transition '" + tr.label + "' has no rate", name.line, name.col);
        for (const auto& [idx, delta] : update)
            if (delta != 0) tr.update.emplace_back(idx, delta);
        if (tr.update.empty())
            throw ParseError("transition '" + tr.label + "' has an empty update", name.line, name.col);
        model_.transitions.push_back(std::move(tr));
    }

    // expr := term (('+'|'-') term)*
    ExprPtr expression() {
        ExprPtr e = term();
        while (symbol_is("+") || symbol_is("-")) {
            std::string op = lex_.next().text;
            ExprPtr r = term();
            e = op == "+" ? ex::add(e, r) : ex::sub(e, r);
        }
        return e;
    }

    ExprPtr term() {
        ExprPtr e = factor();
        while (symbol_is("*") || symbol_is("/")) {
            std::string op = lex_.next().text;
            ExprPtr r = factor();
            e = op == "*" ? ex::mul(e, r) : ex::div(e, r);
        }
        return e;
    }

    ExprPtr factor() {
        if (symbol_is("-")) {
            lex_.next();
            ExprPtr inner = factor();
            if (inner->kind == ExprKind::Constant) return ex::constant(-inner->value);
            return ex::sub(ex::constant(0.0), inner);
        }
        return primary();
    }

    ExprPtr primary() {
        Token t = lex_.next();
        if (t.kind == TokKind::Number) return ex::constant(t.number);
        if (t.kind == TokKind::Symbol && t.text == "(") {
            ExprPtr e = expression();
            expect_symbol(")");
            return e;
        }
        if (t.kind == TokKind::Ident && (t.text == "min" || t.text == "max")) {
            expect_symbol("(");
            ExprPtr a = expression();
            expect_symbol(",");
            ExprPtr b = expression();
            expect_symbol(")");
            return t.text == "min" ? ex::min(a, b) : ex::max(a, b);
        }
        if (t.kind == TokKind::Ident) {
            if (symbol_is("@")) {
                lex_.next();
                Token loc = expect_label();
                int a = model_.find_agent(t.text);
                if (a < 0) throw UnknownIdentifier("unknown agent '" + t.text + "'", t.line, t.col);
                int l = model_.find_location(loc.text);
                if (l < 0) throw UnknownIdentifier("unknown location '" + loc.text + "'", loc.line, loc.col);
                return ex::population(model_.pop_index(a, l), a, l);
            }
            int p = model_.find_param(t.text);
            if (p < 0) throw UnknownIdentifier("unknown param '" + t.text + "'", t.line, t.col);
            return ex::param(p, t.text);
        }
        throw ParseError("expected an expression", t.line, t.col);
    }

    std::pair<int, Token> population_ref() {
        Token agent = expect_label();
        expect_symbol("@");
        Token loc = expect_label();
        int a = model_.find_agent(agent.text);
        if (a < 0) throw UnknownIdentifier("unknown agent '" + agent.text + "'", agent.line, agent.col);
        int l = model_.find_location(loc.text);
        if (l < 0) throw UnknownIdentifier("unknown location '" + loc.text + "'", loc.line, loc.col);
        return {model_.pop_index(a, l), agent};
    }

    double signed_number() {
        bool neg = false;
        if (symbol_is("-")) {
            lex_.next();
            neg = true;
        }
        Token t = lex_.next();
        if (t.kind != TokKind::Number) throw ParseError("expected a number", t.line, t.col);
        return neg ? -t.number : t.number;
    }

    Token expect_label() {
        Token t = lex_.next();
        if (t.kind != TokKind::Ident) throw ParseError("expected an identifier", t.line, t.col);
        if (is_keyword(t.text))
            throw ParseError("'" + t.text + "' is a reserved word", t.line, t.col);
        return t;
    }

    void expect_symbol(const std::string& s) {
        Token t = lex_.next();
        if (t.kind != TokKind::Symbol || t.text != s)
            throw ParseError("expected '" + s + "'", t.line, t.col);
    }

    bool symbol_is(const std::string& s) const {
        return lex_.peek().kind == TokKind::Symbol && lex_.peek().text == s;
    }

    Lexer lex_;
    SpatialModel model_;
    std::map<int, std::int64_t> inits_;
};

// Expression printer with minimal parenthesization.

inline int precedence(ExprKind k) {
    switch (k) {
        case ExprKind::Add:
        case ExprKind::Sub: return 1;
        case ExprKind::Mul:
        case ExprKind::Div: return 2;
        default: return 3;
    }
}

inline void print_expr(const Expr& e, const SpatialModel& m, std::string& out) {
    auto child = [&m, &out](const Expr& c, int parent_prec, bool tight) {
        bool parens = precedence(c.kind) < parent_prec || (tight && precedence(c.kind) == parent_prec);
        if (parens) out += "(";
        print_expr(c, m, out);
        if (parens) out += ")";
    };
    switch (e.kind) {
        case ExprKind::Constant: out += format_real(e.value); return;
        case ExprKind::Population: out += m.population_label(e.pop); return;
        case ExprKind::Param: out += m.params[static_cast<std::size_t>(e.param)].first; return;
        case ExprKind::Min:
        case ExprKind::Max:
            out += e.kind == ExprKind::Min ? "min(" : "max(";
            print_expr(*e.lhs, m, out);
            out += ", ";
            print_expr(*e.rhs, m, out);
            out += ")";
            return;
        // right children always parenthesize at equal precedence so the
        // reparsed (left-associated) tree matches the original
        case ExprKind::Add:
            child(*e.lhs, 1, false);
            out += " + ";
            child(*e.rhs, 1, true);
            return;
        case ExprKind::Sub:
            child(*e.lhs, 1, false);
            out += " - ";
            child(*e.rhs, 1, true);
            return;
        case ExprKind::Mul:
            child(*e.lhs, 2, false);
            out += " * ";
            child(*e.rhs, 2, true);
            return;
        case ExprKind::Div:
            child(*e.lhs, 2, false);
            out += " / ";
            child(*e.rhs, 2, true);
            return;
    }
}

} // namespace fmt_detail

/// Parses a model document in the `.spm` format.
inline SpatialModel parse_model(std::string_view text) {
    fmt_detail::Parser p(text);
    return p.parse();
}

inline std::string expr_to_string(const Expr& e, const SpatialModel& m) {
    std::string out;
    fmt_detail::print_expr(e, m, out);
    return out;
}

/// Serializes a model to the `.spm` format. parse(serialize(m)) is
/// structurally equal to m. `header_comments` lines are emitted verbatim
/// prefixed with '# ' (used for provenance blocks on reduced models).
inline std::string serialize_model(const SpatialModel& m,
                                   const std::vector<std::string>& header_comments = {}) {
    std::string out;
    for (const auto& line : header_comments) out += "# " + line + "\n";
    if (!header_comments.empty()) out += "\n";
    for (const auto& [name, value] : m.params)
        out += "param " + name + " = " + format_real(value) + " ;\n";
    for (const auto& loc : m.locations) {
        out += "location " + loc.label;
        if (loc.coord)
            out += " at " + format_real((*loc.coord)[0]) + " , " + format_real((*loc.coord)[1]);
        out += " ;\n";
    }
    for (const auto& ag : m.agents) out += "agent " + ag.label + " ;\n";
    for (int i = 0; i < m.num_populations(); ++i) {
        if (m.initial[static_cast<std::size_t>(i)] != 0)
            out += "init " + m.population_label(i) + " = " +
                   std::to_string(m.initial[static_cast<std::size_t>(i)]) + " ;\n";
    }
    for (const auto& tr : m.transitions) {
        out += "transition " + tr.label + " {\n";
        out += "  rate = " + expr_to_string(*tr.rate, m) + " ;\n";
        out += "  update ";
        for (std::size_t i = 0; i < tr.update.size(); ++i) {
            if (i) out += " , ";
            out += m.population_label(tr.update[i].first) + " += " + std::to_string(tr.update[i].second);
        }
        out += " ;\n}\n";
    }
    return out;
}

} // namespace spm
