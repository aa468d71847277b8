#pragma once

// Text front end for logic constraints and problem files (.lc).
//
//   formula := "IF" formula "THEN" formula ["ELSE" formula] | or
//   or      := and {"OR" and}
//   and     := not {"AND" not}
//   not     := "NOT" not | atom
//   atom    := "(" formula ")" | ("ALL" | "ANY") "(" name "=" int ".." int "," formula ")"
//            | expr ("<=" | "<" | "=") "0"
//   expr    := term {("+" | "-") term}
//   term    := unary {("*" | "/") unary}
//   unary   := "-" unary | power
//   power   := primary ["^" ["-"] integer]
//   primary := number | name {"[" int "]"} | func "(" args ")" | "sum" "(" name "=" int ".." int "," expr ")"
//            | "(" expr ")"
//
// Keywords are case-insensitive. Index expressions are integer arithmetic
// over literals, N and loop variables.

#include "expr.hpp"
#include "logic.hpp"
#include "nlp.hpp"
#include "quadrotor.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cctype>
#include <charconv>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace logicsmooth {

struct SourceSpan {
	std::size_t begin = 0;
	std::size_t end = 0;
	std::size_t line = 1;
	std::size_t column = 1;
};

class ParseError : public std::runtime_error {
public:
	ParseError(const std::string &msg, SourceSpan span)
		: std::runtime_error("line " + std::to_string(span.line) + ", column " + std::to_string(span.column) +
		                     ": " + msg),
		  span_(span), message_(msg)
	{
	}
	const SourceSpan &span() const noexcept { return span_; }
	const std::string &message() const noexcept { return message_; }

private:
	SourceSpan span_;
	std::string message_;
};

namespace dsl {

enum class Tok : std::uint8_t { Number, Ident, Punct, End };

struct Token {
	Tok kind = Tok::End;
	std::string text;
	double number = 0.0;
	bool integral = false;
	SourceSpan span;
};

inline bool iequals(std::string_view a, std::string_view b)
{
	return a.size() == b.size() && std::equal(a.begin(), a.end(), b.begin(), [](char x, char y) {
		       return std::tolower(static_cast<unsigned char>(x)) == std::tolower(static_cast<unsigned char>(y));
	       });
}

inline bool is_keyword(std::string_view s)
{
	for (const char *k : {"not", "and", "or", "if", "then", "else", "all", "any"})
		if (iequals(s, k))
			return true;
	return false;
}

/// Tokenizes src[begin, end). Offsets and positions refer to the whole source.
class Lexer {
public:
	Lexer(std::string_view src, std::size_t begin, std::size_t end) : src_(src), pos_(begin), end_(end)
	{
		line_ = 1;
		line_start_ = 0;
		for (std::size_t i = 0; i < begin; ++i)
			if (src[i] == '\n')
				++line_, line_start_ = i + 1;
	}

	std::vector<Token> run()
	{
		std::vector<Token> out;
		for (;;) {
			skip_space();
			Token t;
			t.span = here();
			if (pos_ >= end_) {
				t.kind = Tok::End;
				out.push_back(t);
				return out;
			}
			char c = src_[pos_];
			if (std::isdigit(static_cast<unsigned char>(c)) ||
			    (c == '.' && pos_ + 1 < end_ && std::isdigit(static_cast<unsigned char>(src_[pos_ + 1]))))
				number(t);
			else if (std::isalpha(static_cast<unsigned char>(c)) || c == '_')
				ident(t);
			else
				punct(t);
			t.span.end = pos_;
			out.push_back(std::move(t));
		}
	}

private:
	SourceSpan here() const { return {pos_, pos_, line_, pos_ - line_start_ + 1}; }

	void skip_space()
	{
		while (pos_ < end_) {
			char c = src_[pos_];
			if (c == '#') {
				while (pos_ < end_ && src_[pos_] != '\n')
					++pos_;
			} else if (c == '\n') {
				++pos_;
				++line_;
				line_start_ = pos_;
			} else if (std::isspace(static_cast<unsigned char>(c))) {
				++pos_;
			} else {
				break;
			}
		}
	}

	void number(Token &t)
	{
		std::size_t start = pos_;
		bool integral = true;
		auto digits = [&] {
			while (pos_ < end_ && std::isdigit(static_cast<unsigned char>(src_[pos_])))
				++pos_;
		};
		digits();
		// "0..N" is a range, not the number "0."
		if (pos_ < end_ && src_[pos_] == '.' && !(pos_ + 1 < end_ && src_[pos_ + 1] == '.')) {
			integral = false;
			++pos_;
			digits();
		}
		if (pos_ < end_ && (src_[pos_] == 'e' || src_[pos_] == 'E')) {
			std::size_t save = pos_++;
			if (pos_ < end_ && (src_[pos_] == '+' || src_[pos_] == '-'))
				++pos_;
			if (pos_ < end_ && std::isdigit(static_cast<unsigned char>(src_[pos_]))) {
				integral = false;
				digits();
			} else {
				pos_ = save;
			}
		}
		t.kind = Tok::Number;
		t.text = std::string(src_.substr(start, pos_ - start));
		auto [p, ec] = std::from_chars(t.text.data(), t.text.data() + t.text.size(), t.number);
		if (ec != std::errc() || p != t.text.data() + t.text.size())
			throw ParseError("malformed number '" + t.text + "'", t.span);
		t.integral = integral && t.number <= 9007199254740992.0;
	}

	void ident(Token &t)
	{
		std::size_t start = pos_;
		while (pos_ < end_ && (std::isalnum(static_cast<unsigned char>(src_[pos_])) || src_[pos_] == '_'))
			++pos_;
		t.kind = Tok::Ident;
		t.text = std::string(src_.substr(start, pos_ - start));
	}

	void punct(Token &t)
	{
		static constexpr std::string_view two[] = {"<=", ">=", "..", "==", "!="};
		t.kind = Tok::Punct;
		for (std::string_view op : two)
			if (src_.substr(pos_, 2) == op && pos_ + 2 <= end_) {
				t.text = std::string(op);
				pos_ += 2;
				return;
			}
		char c = src_[pos_];
		if (std::string_view("()[],+-*/^<>=").find(c) == std::string_view::npos)
			throw ParseError(std::string("unexpected character '") + c + "'", t.span);
		t.text = std::string(1, c);
		++pos_;
	}

	std::string_view src_;
	std::size_t pos_, end_;
	std::size_t line_, line_start_;
};

struct Syntax;
using SyntaxPtr = std::shared_ptr<const Syntax>;

struct Syntax {
	enum class Kind : std::uint8_t { Number, Name, Call, Neg, Binary, Sum, Compare, Not, And, Or, Ite, All, Any };
	Kind kind = Kind::Number;
	double number = 0.0;
	bool integral = false;
	/// Name, function, operator, comparison or loop variable.
	std::string text;
	std::vector<SyntaxPtr> kids;
	SourceSpan span;
};

inline SyntaxPtr make_syntax(Syntax::Kind k, std::string text, std::vector<SyntaxPtr> kids, SourceSpan span)
{
	auto s = std::make_shared<Syntax>();
	s->kind = k;
	s->text = std::move(text);
	s->kids = std::move(kids);
	s->span = span;
	return s;
}

inline SyntaxPtr number_syntax(const Token &t, double value, bool integral)
{
	auto s = std::make_shared<Syntax>();
	s->kind = Syntax::Kind::Number;
	s->text = t.text;
	s->number = value;
	s->integral = integral;
	s->span = t.span;
	return s;
}

class Parser {
public:
	explicit Parser(std::vector<Token> toks) : toks_(std::move(toks)) {}

	SyntaxPtr formula_to_end()
	{
		SyntaxPtr f = formula();
		expect_end();
		return f;
	}

	SyntaxPtr expr_to_end()
	{
		SyntaxPtr e = expr();
		expect_end();
		return e;
	}

	/// expr followed by a comparison with 0, nothing after it.
	SyntaxPtr comparison_to_end()
	{
		SyntaxPtr c = comparison();
		expect_end();
		return c;
	}

	const Token &peek(std::size_t ahead = 0) const
	{
		return toks_[std::min(pos_ + ahead, toks_.size() - 1)];
	}
	const Token &next() { return toks_[pos_ < toks_.size() - 1 ? pos_++ : pos_]; }
	bool at_end() const { return peek().kind == Tok::End; }
	std::size_t position() const { return pos_; }

	bool accept(std::string_view punct)
	{
		if (peek().kind == Tok::Punct && peek().text == punct) {
			++pos_;
			return true;
		}
		return false;
	}

	const Token &expect(std::string_view punct, std::string_view context)
	{
		if (peek().kind != Tok::Punct || peek().text != punct)
			fail("expected '" + std::string(punct) + "' " + std::string(context) + ", found " + describe(peek()));
		return next();
	}

	[[noreturn]] void fail(const std::string &msg) const { throw ParseError(msg, peek().span); }

	void expect_end() const
	{
		if (!at_end())
			fail("unexpected " + describe(peek()));
	}

	static std::string describe(const Token &t)
	{
		switch (t.kind) {
		case Tok::End: return "end of input";
		case Tok::Number: return "number '" + t.text + "'";
		case Tok::Ident: return "'" + t.text + "'";
		case Tok::Punct: return "'" + t.text + "'";
		}
		return "?";
	}

	bool keyword(std::string_view k, std::size_t ahead = 0) const
	{
		return peek(ahead).kind == Tok::Ident && iequals(peek(ahead).text, k);
	}

	SyntaxPtr formula()
	{
		if (keyword("if")) {
			SourceSpan s = next().span;
			SyntaxPtr c = formula();
			if (!keyword("then"))
				fail("expected THEN after the IF condition, found " + describe(peek()));
			next();
			SyntaxPtr a = formula();
			std::vector<SyntaxPtr> kids{c, a};
			if (keyword("else")) {
				next();
				kids.push_back(formula());
			}
			return make_syntax(Syntax::Kind::Ite, "", std::move(kids), s);
		}
		return junction("or", Syntax::Kind::Or, [this] { return junction("and", Syntax::Kind::And, [this] { return negation(); }); });
	}

	SyntaxPtr expr()
	{
		SyntaxPtr lhs = term();
		while (peek().kind == Tok::Punct && (peek().text == "+" || peek().text == "-")) {
			const Token &op = next();
			SyntaxPtr rhs = term();
			lhs = make_syntax(Syntax::Kind::Binary, op.text, {lhs, rhs}, op.span);
		}
		return lhs;
	}

private:
	template <class Sub>
	SyntaxPtr junction(std::string_view word, Syntax::Kind kind, Sub sub)
	{
		SourceSpan s = peek().span;
		std::vector<SyntaxPtr> items{sub()};
		while (keyword(word)) {
			next();
			items.push_back(sub());
		}
		if (items.size() == 1)
			return items.front();
		return make_syntax(kind, "", std::move(items), s);
	}

	SyntaxPtr negation()
	{
		if (keyword("not")) {
			SourceSpan s = next().span;
			return make_syntax(Syntax::Kind::Not, "", {negation()}, s);
		}
		return atom();
	}

	SyntaxPtr atom()
	{
		if ((keyword("all") || keyword("any")) && peek(1).kind == Tok::Punct && peek(1).text == "(") {
			const Token &kw = next();
			auto kind = iequals(kw.text, "all") ? Syntax::Kind::All : Syntax::Kind::Any;
			return ranged(kind, kw.span, [this] { return formula(); });
		}
		if (peek().kind == Tok::Punct && peek().text == "(") {
			// Either a parenthesized formula or an expression that starts with
			// a parenthesis; keep whichever parse gets further.
			std::size_t save = pos_;
			std::optional<ParseError> first;
			try {
				next();
				SyntaxPtr f = formula();
				expect(")", "to close the parenthesized formula");
				if (!continues_expression())
					return f;
			} catch (const ParseError &e) {
				first = e;
			}
			pos_ = save;
			try {
				return comparison();
			} catch (const ParseError &e) {
				if (first && first->span().begin > e.span().begin)
					throw *first;
				throw;
			}
		}
		return comparison();
	}

	bool continues_expression() const
	{
		if (peek().kind != Tok::Punct)
			return false;
		for (std::string_view op : {"+", "-", "*", "/", "^", "<=", "<", "=", ">=", ">", "==", "!="})
			if (peek().text == op)
				return true;
		return false;
	}

	SyntaxPtr comparison()
	{
		SyntaxPtr lhs = expr();
		const Token &op = peek();
		if (op.kind == Tok::Punct && (op.text == ">=" || op.text == ">"))
			fail("only '<= 0', '< 0' and '= 0' comparisons are supported; write 'b - a <= 0' for 'a >= b'");
		if (op.kind == Tok::Punct && (op.text == "==" || op.text == "!="))
			fail("use '= 0' for equality; '" + op.text + "' is not supported");
		if (op.kind != Tok::Punct || (op.text != "<=" && op.text != "<" && op.text != "="))
			fail("expected a comparison '<= 0' or '= 0', found " + describe(op));
		std::string cmp = next().text;
		const Token &rhs = peek();
		if (rhs.kind != Tok::Number || rhs.number != 0.0)
			fail("the right-hand side of a comparison must be the literal 0; write 'a - b " + cmp +
			     " 0' instead of 'a " + cmp + " b'");
		next();
		const Token &after = peek();
		if (after.kind == Tok::Punct &&
		    (after.text == "<=" || after.text == "<" || after.text == "=" || after.text == ">=" || after.text == ">"))
			fail("chained comparison; combine the propositions with AND");
		if (after.kind == Tok::Punct && (after.text == "+" || after.text == "-" || after.text == "*" ||
		                                 after.text == "/" || after.text == "^"))
			fail("the right-hand side of a comparison must be the literal 0; move the terms to the left");
		return make_syntax(Syntax::Kind::Compare, cmp, {lhs}, op.span);
	}

	SyntaxPtr term()
	{
		SyntaxPtr lhs = unary();
		while (peek().kind == Tok::Punct && (peek().text == "*" || peek().text == "/")) {
			const Token &op = next();
			SyntaxPtr rhs = unary();
			lhs = make_syntax(Syntax::Kind::Binary, op.text, {lhs, rhs}, op.span);
		}
		return lhs;
	}

	SyntaxPtr unary()
	{
		if (peek().kind == Tok::Punct && peek().text == "-") {
			SourceSpan s = next().span;
			return make_syntax(Syntax::Kind::Neg, "", {unary()}, s);
		}
		if (peek().kind == Tok::Punct && peek().text == "+")
			fail("unary '+' is not supported");
		return power();
	}

	SyntaxPtr power()
	{
		SyntaxPtr base = primary();
		if (peek().kind != Tok::Punct || peek().text != "^")
			return base;
		SourceSpan s = next().span;
		bool negative = accept("-");
		const Token &e = peek();
		if (e.kind != Tok::Number || !e.integral)
			fail("exponents must be integer literals");
		SyntaxPtr n = number_syntax(next(), negative ? -e.number : e.number, true);
		if (peek().kind == Tok::Punct && peek().text == "^")
			fail("chained '^'; add parentheses");
		return make_syntax(Syntax::Kind::Binary, "^", {base, n}, s);
	}

	SyntaxPtr primary()
	{
		const Token &t = peek();
		if (t.kind == Tok::Number)
			return number_syntax(next(), t.number, t.integral);
		if (t.kind == Tok::Punct && t.text == "(") {
			next();
			SyntaxPtr e = expr();
			expect(")", "to close the parenthesized expression");
			return e;
		}
		if (t.kind != Tok::Ident)
			fail("expected an expression, found " + describe(t));
		if (is_keyword(t.text))
			fail("unexpected keyword '" + t.text + "' inside an expression");
		const Token &name = next();
		if (iequals(name.text, "sum") && peek().kind == Tok::Punct && peek().text == "(")
			return ranged(Syntax::Kind::Sum, name.span, [this] { return expr(); });
		if (peek().kind == Tok::Punct && peek().text == "(") {
			next();
			std::vector<SyntaxPtr> args;
			if (!accept(")")) {
				do
					args.push_back(expr());
				while (accept(","));
				expect(")", "to close the argument list of '" + name.text + "'");
			}
			return make_syntax(Syntax::Kind::Call, name.text, std::move(args), name.span);
		}
		std::vector<SyntaxPtr> idx;
		while (accept("[")) {
			idx.push_back(expr());
			expect("]", "to close the index");
		}
		return make_syntax(Syntax::Kind::Name, name.text, std::move(idx), name.span);
	}

	/// "(" name "=" lo ".." hi "," body ")"
	template <class Body>
	SyntaxPtr ranged(Syntax::Kind kind, SourceSpan s, Body body)
	{
		expect("(", "after the range keyword");
		const Token &var = peek();
		if (var.kind != Tok::Ident || is_keyword(var.text))
			fail("expected a loop variable, found " + describe(var));
		next();
		expect("=", "after the loop variable");
		SyntaxPtr lo = expr();
		expect("..", "in the range");
		SyntaxPtr hi = expr();
		expect(",", "after the range");
		SyntaxPtr b = body();
		expect(")", "to close the range construct");
		return make_syntax(kind, var.text, {lo, hi, b}, s);
	}

	std::vector<Token> toks_;
	std::size_t pos_ = 0;
};

/// Maps an identifier with evaluated integer indices to an expression.
using Resolver = std::function<Expr(const std::string &name, const std::vector<long> &index, const SourceSpan &)>;

class Elaborator {
public:
	explicit Elaborator(Resolver r) : resolve_(std::move(r)) {}

	void bind(const std::string &name, long value) { ints_.emplace_back(name, value); }

	long integer(const Syntax &s)
	{
		using K = Syntax::Kind;
		switch (s.kind) {
		case K::Number:
			if (!s.integral)
				throw ParseError("index expressions must be integers, found '" + s.text + "'", s.span);
			return static_cast<long>(s.number);
		case K::Name:
			if (s.kids.empty())
				if (auto v = lookup(s.text))
					return *v;
			throw ParseError("'" + s.text + "' is not an integer constant or loop variable", s.span);
		case K::Neg: return -integer(*s.kids[0]);
		case K::Binary:
			if (s.text == "+")
				return integer(*s.kids[0]) + integer(*s.kids[1]);
			if (s.text == "-")
				return integer(*s.kids[0]) - integer(*s.kids[1]);
			if (s.text == "*")
				return integer(*s.kids[0]) * integer(*s.kids[1]);
			break;
		default: break;
		}
		throw ParseError("index expressions may only use +, - and * on integers", s.span);
	}

	Expr expr(const Syntax &s)
	{
		using K = Syntax::Kind;
		switch (s.kind) {
		case K::Number: return Expr::constant(s.number);
		case K::Name: {
			if (s.kids.empty())
				if (auto v = lookup(s.text))
					return Expr::constant(static_cast<double>(*v));
			std::vector<long> idx;
			for (const SyntaxPtr &k : s.kids)
				idx.push_back(integer(*k));
			return resolve_(s.text, idx, s.span);
		}
		case K::Neg: return -expr(*s.kids[0]);
		case K::Binary: {
			if (s.text == "^")
				return pow(expr(*s.kids[0]), static_cast<int>(s.kids[1]->number));
			Expr a = expr(*s.kids[0]);
			Expr b = expr(*s.kids[1]);
			if (s.text == "+")
				return a + b;
			if (s.text == "-")
				return a - b;
			if (s.text == "*")
				return a * b;
			return a / b;
		}
		case K::Call: return call(s);
		case K::Sum: {
			std::vector<Expr> terms;
			for_range(s, [&] { terms.push_back(expr(*s.kids[2])); });
			return sum(terms);
		}
		default: throw ParseError("expected an expression", s.span);
		}
	}

	Formula formula(const Syntax &s)
	{
		using K = Syntax::Kind;
		switch (s.kind) {
		case K::Compare: {
			Expr f = expr(*s.kids[0]);
			if (s.text == "<=")
				return Formula::le(f);
			if (s.text == "<")
				return Formula::lt(f);
			return Formula::eq(f);
		}
		case K::Not: return Formula::negate(formula(*s.kids[0]));
		case K::And:
		case K::Or: {
			std::vector<Formula> items;
			for (const SyntaxPtr &k : s.kids)
				items.push_back(formula(*k));
			return s.kind == K::And ? Formula::all(std::move(items)) : Formula::any(std::move(items));
		}
		case K::Ite: {
			Formula c = formula(*s.kids[0]);
			Formula a = formula(*s.kids[1]);
			if (s.kids.size() == 2)
				return implies(c, a);
			return if_then_else(c, a, formula(*s.kids[2]));
		}
		case K::All:
		case K::Any: {
			std::vector<Formula> items;
			for_range(s, [&] { items.push_back(formula(*s.kids[2])); });
			if (items.empty())
				throw ParseError("empty range in " + std::string(s.kind == K::All ? "ALL" : "ANY"), s.span);
			return s.kind == K::All ? Formula::all(std::move(items)) : Formula::any(std::move(items));
		}
		default: throw ParseError("expected a proposition such as 'expr <= 0'", s.span);
		}
	}

private:
	std::optional<long> lookup(const std::string &name) const
	{
		for (auto it = ints_.rbegin(); it != ints_.rend(); ++it)
			if (it->first == name)
				return it->second;
		return std::nullopt;
	}

	template <class F>
	void for_range(const Syntax &s, F body)
	{
		long lo = integer(*s.kids[0]);
		long hi = integer(*s.kids[1]);
		if (hi - lo > 1000000)
			throw ParseError("range is too large", s.span);
		for (long i = lo; i <= hi; ++i) {
			ints_.emplace_back(s.text, i);
			body();
			ints_.pop_back();
		}
	}

	Expr call(const Syntax &s)
	{
		std::vector<Expr> args;
		for (const SyntaxPtr &k : s.kids)
			args.push_back(expr(*k));
		auto unary = [&](Expr (*f)(const Expr &)) {
			if (args.size() != 1)
				throw ParseError("'" + s.text + "' takes one argument", s.span);
			return f(args[0]);
		};
		if (s.text == "sin")
			return unary(&logicsmooth::sin);
		if (s.text == "cos")
			return unary(&logicsmooth::cos);
		if (s.text == "sqrt")
			return unary(&logicsmooth::sqrt);
		if (s.text == "min" || s.text == "max") {
			if (args.empty())
				throw ParseError("'" + s.text + "' needs at least one argument", s.span);
			return s.text == "min" ? logicsmooth::min(std::move(args)) : logicsmooth::max(std::move(args));
		}
		throw ParseError("unknown function '" + s.text + "'", s.span);
	}

	Resolver resolve_;
	std::vector<std::pair<std::string, long>> ints_;
};

inline std::string indexed_name(const std::string &base, const std::vector<long> &idx)
{
	std::string out = base;
	for (long i : idx)
		out += "[" + std::to_string(i) + "]";
	return out;
}

/// Resolves identifiers by their full name in vars ("x[2][1]"); unnamed
/// variables are reachable as z[i].
inline Resolver varspace_resolver(const VarSpace &vars)
{
	auto names = std::make_shared<std::unordered_map<std::string, std::size_t>>();
	for (std::size_t i = 0; i < vars.names.size(); ++i)
		if (!vars.names[i].empty())
			names->emplace(vars.names[i], i);
	const std::size_t count = vars.count;
	return [names, count](const std::string &base, const std::vector<long> &idx, const SourceSpan &span) {
		std::string full = indexed_name(base, idx);
		if (auto it = names->find(full); it != names->end())
			return Expr::variable(it->second);
		if (base == "z" && idx.size() == 1 && idx[0] >= 0 && static_cast<std::size_t>(idx[0]) < count)
			return Expr::variable(static_cast<std::size_t>(idx[0]));
		throw ParseError("unknown identifier '" + full + "'", span);
	};
}

inline std::vector<Token> tokenize(std::string_view text) { return Lexer(text, 0, text.size()).run(); }

} // namespace dsl

/// Named integer constants available in index expressions, e.g. {"N", 10}.
using IntConstants = std::map<std::string, long>;

inline Formula parse_formula(std::string_view text, const VarSpace &vars, const IntConstants &constants = {})
{
	dsl::Parser p(dsl::tokenize(text));
	dsl::SyntaxPtr s = p.formula_to_end();
	dsl::Elaborator el(dsl::varspace_resolver(vars));
	for (const auto &[k, v] : constants)
		el.bind(k, v);
	return el.formula(*s);
}

inline Expr parse_expr(std::string_view text, const VarSpace &vars, const IntConstants &constants = {})
{
	dsl::Parser p(dsl::tokenize(text));
	dsl::SyntaxPtr s = p.expr_to_end();
	dsl::Elaborator el(dsl::varspace_resolver(vars));
	for (const auto &[k, v] : constants)
		el.bind(k, v);
	return el.expr(*s);
}

namespace dsl {

inline std::string variable_source(std::size_t i, const VarSpace *vars)
{
	if (vars && i < vars->names.size() && !vars->names[i].empty())
		return vars->names[i];
	return "z[" + std::to_string(i) + "]";
}

inline void write_expr(std::ostream &os, const Expr &e, const VarSpace *vars)
{
	switch (e.op()) {
	case Op::Constant: {
		std::string v = detail::format_double(e.value());
		if (v.front() == '-')
			os << "(" << v << ")";
		else
			os << v;
		return;
	}
	case Op::Variable: os << variable_source(e.index(), vars); return;
	case Op::Add:
	case Op::Sub:
	case Op::Mul:
	case Op::Div:
		os << "(";
		write_expr(os, e.children()[0], vars);
		os << " " << op_symbol(e.op()) << " ";
		write_expr(os, e.children()[1], vars);
		os << ")";
		return;
	case Op::Neg:
		os << "(-";
		write_expr(os, e.children()[0], vars);
		os << ")";
		return;
	case Op::Pow:
		os << "(";
		write_expr(os, e.children()[0], vars);
		os << ")^" << e.exponent();
		return;
	case Op::Sin:
	case Op::Cos:
	case Op::Sqrt:
	case Op::Min:
	case Op::Max: {
		os << op_symbol(e.op()) << "(";
		for (std::size_t i = 0; i < e.children().size(); ++i) {
			if (i)
				os << ", ";
			write_expr(os, e.children()[i], vars);
		}
		os << ")";
		return;
	}
	}
}

inline void write_formula(std::ostream &os, const Formula &f, const VarSpace *vars)
{
	using K = Formula::Kind;
	switch (f.kind()) {
	case K::Prop: {
		const Proposition &p = f.proposition();
		write_expr(os, p.func, vars);
		os << (p.kind == PropKind::Equality ? " = 0" : p.strict ? " < 0" : " <= 0");
		return;
	}
	case K::Not:
		os << "NOT (";
		write_formula(os, f.children()[0], vars);
		os << ")";
		return;
	case K::And:
	case K::Or: {
		const char *word = f.kind() == K::And ? "AND" : "OR";
		if (f.children().size() == 1) {
			// A one-operand junction only survives the round trip as a range.
			os << (f.kind() == K::And ? "ALL" : "ANY") << "(i_=1..1, ";
			write_formula(os, f.children()[0], vars);
			os << ")";
			return;
		}
		os << "(";
		for (std::size_t i = 0; i < f.children().size(); ++i) {
			if (i)
				os << " " << word << " ";
			os << "(";
			write_formula(os, f.children()[i], vars);
			os << ")";
		}
		os << ")";
		return;
	}
	}
}

} // namespace dsl

/// Source text that parses back to a structurally identical expression.
inline std::string to_source(const Expr &e, const VarSpace *vars = nullptr)
{
	std::ostringstream os;
	dsl::write_expr(os, e, vars);
	return os.str();
}

/// Source text that parses back to a structurally identical formula.
inline std::string to_source(const Formula &f, const VarSpace *vars = nullptr)
{
	std::ostringstream os;
	dsl::write_formula(os, f, vars);
	return os.str();
}

/// Dynamics given as residual expressions in x[k][j], x[k+1][j] and v[k][j].
class InlineDynamics final : public Dynamics {
public:
	InlineDynamics(std::size_t nx, std::size_t nu, std::vector<dsl::SyntaxPtr> residuals, std::vector<std::string> text)
		: nx_(nx), nu_(nu), residuals_(std::move(residuals)), text_(std::move(text))
	{
	}

	std::size_t state_dim() const override { return nx_; }
	std::size_t input_dim() const override { return nu_; }
	const std::vector<std::string> &residual_text() const noexcept { return text_; }

	std::vector<Expr> step_residuals(std::span<const Expr> x, std::span<const Expr> v,
	                                 std::span<const Expr> xn) const override
	{
		dsl::Elaborator el([&](const std::string &base, const std::vector<long> &idx, const SourceSpan &span) {
			if ((base != "x" && base != "v") || idx.size() != 2)
				throw ParseError("unknown identifier '" + dsl::indexed_name(base, idx) +
				                     "' in a residual (use x[k][j], x[k+1][j] or v[k][j])",
				                 span);
			long j = idx[1];
			if (base == "x") {
				if ((idx[0] != 0 && idx[0] != 1) || j < 1 || static_cast<std::size_t>(j) > nx_)
					throw ParseError("state reference '" + dsl::indexed_name(base, idx) +
					                     "' must be x[k][j] or x[k+1][j] with 1 <= j <= " + std::to_string(nx_),
					                 span);
				return (idx[0] == 0 ? x : xn)[static_cast<std::size_t>(j - 1)];
			}
			if (idx[0] != 0 || j < 1 || static_cast<std::size_t>(j) > nu_)
				throw ParseError("input reference '" + dsl::indexed_name(base, idx) + "' must be v[k][j] with 1 <= j <= " +
				                     std::to_string(nu_),
				                 span);
			return v[static_cast<std::size_t>(j - 1)];
		});
		el.bind("k", 0);
		std::vector<Expr> out;
		for (const dsl::SyntaxPtr &r : residuals_)
			out.push_back(el.expr(*r));
		return out;
	}

	/// Newton iteration on the residuals, starting from x.
	void step(std::span<const double> x, std::span<const double> v, std::span<double> xn) const override
	{
		std::vector<Expr> xc, vc, xv;
		for (double a : x)
			xc.push_back(Expr::constant(a));
		for (double a : v)
			vc.push_back(Expr::constant(a));
		for (std::size_t j = 0; j < nx_; ++j)
			xv.push_back(Expr::variable(j));
		std::vector<Expr> r = step_residuals(xc, vc, xv);
		Tape tape(r);
		auto ws = tape.workspace();
		std::vector<double> z(x.begin(), x.end()), seed(nx_), g(nx_);
		const auto n = static_cast<Eigen::Index>(nx_);
		Eigen::MatrixXd J(n, n);
		Eigen::VectorXd f(n);
		for (int it = 0; it < 50; ++it) {
			tape.forward(z, ws);
			double worst = 0.0;
			for (std::size_t i = 0; i < nx_; ++i) {
				f(static_cast<Eigen::Index>(i)) = tape.output(ws, i);
				worst = std::max(worst, std::abs(tape.output(ws, i)));
			}
			if (worst <= 1e-13) {
				std::copy(z.begin(), z.end(), xn.begin());
				return;
			}
			for (std::size_t i = 0; i < nx_; ++i) {
				std::fill(seed.begin(), seed.end(), 0.0);
				std::fill(g.begin(), g.end(), 0.0);
				seed[i] = 1.0;
				tape.reverse(seed, ws, g);
				for (std::size_t j = 0; j < nx_; ++j)
					J(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = g[j];
			}
			Eigen::VectorXd d = J.fullPivLu().solve(-f);
			if (!d.allFinite())
				break;
			for (std::size_t j = 0; j < nx_; ++j)
				z[j] += d(static_cast<Eigen::Index>(j));
		}
		throw std::runtime_error("inline dynamics: Newton iteration for the next state did not converge");
	}

	std::string describe() const override
	{
		return "inline(" + std::to_string(nx_) + " states, " + std::to_string(nu_) + " inputs)";
	}

private:
	std::size_t nx_, nu_;
	std::vector<dsl::SyntaxPtr> residuals_;
	std::vector<std::string> text_;
};

namespace dsl {

struct Statement {
	std::string keyword;
	std::vector<Token> tokens; // after the keyword, ending with End
	std::string text;          // source of the payload
	SourceSpan span;
};

/// Splits a problem file into statements: a statement starts at a line that
/// does not begin with whitespace; indented lines continue it.
inline std::vector<Statement> split_statements(std::string_view src)
{
	std::vector<std::pair<std::size_t, std::size_t>> ranges;
	std::size_t pos = 0;
	while (pos < src.size()) {
		std::size_t eol = src.find('\n', pos);
		if (eol == std::string_view::npos)
			eol = src.size();
		std::string_view line = src.substr(pos, eol - pos);
		std::size_t first = line.find_first_not_of(" \t\r");
		bool blank = first == std::string_view::npos || line[first] == '#';
		if (!blank) {
			if (first == 0 || ranges.empty())
				ranges.emplace_back(pos, eol);
			else
				ranges.back().second = eol;
		}
		pos = eol + 1;
	}
	std::vector<Statement> out;
	for (auto [b, e] : ranges) {
		std::vector<Token> toks = Lexer(src, b, e).run();
		Statement s;
		s.span = toks.front().span;
		if (toks.front().kind != Tok::Ident)
			throw ParseError("expected a section keyword, found " + Parser::describe(toks.front()), s.span);
		s.keyword = toks.front().text;
		std::transform(s.keyword.begin(), s.keyword.end(), s.keyword.begin(),
		               [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
		toks.erase(toks.begin());
		std::size_t payload = toks.front().span.begin;
		s.text = std::string(src.substr(payload, e - payload));
		s.tokens = std::move(toks);
		out.push_back(std::move(s));
	}
	return out;
}

inline long integer_field(const Statement &s, const std::string &field)
{
	Parser p(s.tokens);
	bool negative = p.accept("-");
	const Token &t = p.peek();
	if (t.kind != Tok::Number || !t.integral)
		throw ParseError(field + ": expected an integer, found " + Parser::describe(t), t.span);
	p.next();
	p.expect_end();
	long v = static_cast<long>(t.number);
	return negative ? -v : v;
}

inline std::vector<double> number_list(const Statement &s)
{
	Parser p(s.tokens);
	std::vector<double> out;
	while (!p.at_end()) {
		bool negative = p.accept("-");
		const Token &t = p.peek();
		if (t.kind != Tok::Number)
			throw ParseError(s.keyword + ": expected a number, found " + Parser::describe(t), t.span);
		p.next();
		out.push_back(negative ? -t.number : t.number);
		p.accept(",");
	}
	return out;
}

} // namespace dsl

/// Reads a problem file. Sections, one per line (indented lines continue the
/// previous one, '#' starts a comment):
///
///   horizon N
///   dynamics quadrotor(mass=..., inertia=..., arm=..., gravity=..., ts=...) | dynamics inline
///   states n / inputs m          (required for inline dynamics)
///   residual <expr>              (inline dynamics, one per state, in x[k][j], x[k+1][j], v[k][j])
///   initial a1 a2 ...            (default: zeros)
///   bounds x|v lo hi             (default: free states, inputs in [-2, 2] for the quadrotor)
///   cost <expr>
///   constraint <expr> <= 0 | constraint <expr> = 0
///   logic <formula>              (at most once; empty means true)
inline BaseOcp parse_problem(std::string_view text)
{
	using namespace dsl;
	std::vector<Statement> stmts = split_statements(text);
	std::map<std::string, const Statement *> once;
	std::vector<const Statement *> constraints, residuals;
	const Statement *bounds_x = nullptr, *bounds_v = nullptr;
	SourceSpan end_span;
	end_span.begin = end_span.end = text.size();
	end_span.line = static_cast<std::size_t>(std::count(text.begin(), text.end(), '\n')) + 1;

	for (const Statement &s : stmts) {
		const std::string &k = s.keyword;
		if (k == "constraint") {
			constraints.push_back(&s);
		} else if (k == "residual") {
			residuals.push_back(&s);
		} else if (k == "bounds") {
			const Token &target = s.tokens.front();
			if (target.kind != Tok::Ident || (target.text != "x" && target.text != "v"))
				throw ParseError("bounds: expected 'x' or 'v', found " + Parser::describe(target), target.span);
			const Statement *&slot = target.text == "x" ? bounds_x : bounds_v;
			if (slot)
				throw ParseError("duplicate section 'bounds " + target.text + "'", s.span);
			slot = &s;
		} else if (k == "horizon" || k == "dynamics" || k == "states" || k == "inputs" || k == "initial" ||
		           k == "cost" || k == "logic") {
			if (once.count(k))
				throw ParseError("duplicate section '" + k + "'", s.span);
			once[k] = &s;
		} else {
			throw ParseError("unknown section '" + s.keyword + "'", s.span);
		}
	}
	for (const char *required : {"horizon", "dynamics", "cost"})
		if (!once.count(required))
			throw ParseError(std::string("missing section '") + required + "'", end_span);

	long horizon = integer_field(*once["horizon"], "horizon");
	if (horizon < 1)
		throw ParseError("horizon: must be at least 1, got " + std::to_string(horizon), once["horizon"]->span);
	const auto N = static_cast<std::size_t>(horizon);

	// Dynamics.
	const Statement &dyn = *once["dynamics"];
	Parser dp(dyn.tokens);
	const Token &model = dp.next();
	std::shared_ptr<const Dynamics> dynamics;
	std::size_t nx = 0, nu = 0;
	double input_lo = -std::numeric_limits<double>::infinity(), input_hi = std::numeric_limits<double>::infinity();
	std::optional<quadrotor::QuadParams> quad;
	auto dim_field = [&](const char *name) -> std::optional<std::size_t> {
		auto it = once.find(name);
		if (it == once.end())
			return std::nullopt;
		long v = integer_field(*it->second, name);
		if (v < 1)
			throw ParseError(std::string(name) + ": must be at least 1, got " + std::to_string(v), it->second->span);
		return static_cast<std::size_t>(v);
	};
	std::optional<std::size_t> states = dim_field("states"), inputs = dim_field("inputs");

	if (model.kind == Tok::Ident && model.text == "quadrotor") {
		quadrotor::QuadParams qp;
		if (dp.accept("(") && !dp.accept(")")) {
			do {
				const Token &key = dp.next();
				if (key.kind != Tok::Ident)
					throw ParseError("dynamics: expected a parameter name, found " + Parser::describe(key), key.span);
				dp.expect("=", "after the parameter name");
				bool negative = dp.accept("-");
				const Token &val = dp.next();
				if (val.kind != Tok::Number)
					throw ParseError("dynamics: expected a number for '" + key.text + "'", val.span);
				double v = negative ? -val.number : val.number;
				if (key.text == "mass")
					qp.mass = v;
				else if (key.text == "inertia")
					qp.inertia = v;
				else if (key.text == "arm")
					qp.arm = v;
				else if (key.text == "gravity")
					qp.gravity = v;
				else if (key.text == "ts")
					qp.ts = v;
				else
					throw ParseError("dynamics: unknown quadrotor parameter '" + key.text + "'", key.span);
			} while (dp.accept(","));
			dp.expect(")", "to close the parameter list");
		}
		dp.expect_end();
		if (!(qp.mass > 0 && qp.inertia > 0 && qp.arm > 0 && qp.gravity > 0 && qp.ts > 0))
			throw ParseError("dynamics: quadrotor parameters must be positive", dyn.span);
		if (!residuals.empty())
			throw ParseError("residual lines are only allowed with 'dynamics inline'", residuals.front()->span);
		nx = 6, nu = 2;
		if ((states && *states != nx) || (inputs && *inputs != nu))
			throw ParseError("dimension mismatch: the quadrotor has 6 states and 2 inputs", dyn.span);
		qp.horizon = N;
		input_lo = qp.input_lower;
		input_hi = qp.input_upper;
		quad = qp;
	} else if (model.kind == Tok::Ident && model.text == "inline") {
		dp.expect_end();
		if (!states || !inputs)
			throw ParseError("inline dynamics need 'states' and 'inputs' sections", dyn.span);
		nx = *states, nu = *inputs;
		if (residuals.size() != nx)
			throw ParseError("dimension mismatch: " + std::to_string(residuals.size()) + " residual lines for " +
			                     std::to_string(nx) + " states",
			                 dyn.span);
	} else {
		throw ParseError("dynamics: expected 'quadrotor(...)' or 'inline', found " + Parser::describe(model),
		                 model.span);
	}

	std::vector<double> x0(nx, 0.0);
	if (auto it = once.find("initial"); it != once.end()) {
		x0 = number_list(*it->second);
		if (x0.size() != nx)
			throw ParseError("dimension mismatch: 'initial' has " + std::to_string(x0.size()) + " entries, expected " +
			                     std::to_string(nx),
			                 it->second->span);
	}
	auto read_bounds = [](const Statement &s, double &lo, double &hi) {
		Statement rest = s;
		rest.tokens.erase(rest.tokens.begin());
		std::vector<double> b = number_list(rest);
		if (b.size() != 2)
			throw ParseError("bounds: expected two numbers (lower upper)", s.span);
		if (!(b[0] <= b[1]))
			throw ParseError("bounds: lower bound exceeds upper bound", s.span);
		lo = b[0], hi = b[1];
	};
	double state_lo = -std::numeric_limits<double>::infinity(), state_hi = std::numeric_limits<double>::infinity();
	if (bounds_x)
		read_bounds(*bounds_x, state_lo, state_hi);
	if (bounds_v)
		read_bounds(*bounds_v, input_lo, input_hi);

	if (quad) {
		quad->initial_state = x0;
		quad->input_lower = input_lo;
		quad->input_upper = input_hi;
		dynamics = std::make_shared<quadrotor::QuadrotorDynamics>(*quad);
	} else {
		std::vector<SyntaxPtr> rs;
		std::vector<std::string> texts;
		for (const Statement *r : residuals) {
			rs.push_back(Parser(r->tokens).expr_to_end());
			texts.push_back(r->text);
		}
		dynamics = std::make_shared<InlineDynamics>(nx, nu, std::move(rs), std::move(texts));
	}

	BaseOcp ocp;
	TrajectoryLayout t;
	t.horizon = N;
	t.state_dim = nx;
	t.input_dim = nu;
	t.initial_state = x0;
	t.dynamics = dynamics;
	for (std::size_t k = 0; k <= N; ++k)
		for (std::size_t j = 1; j <= nx; ++j)
			ocp.vars.add("x[" + std::to_string(k) + "][" + std::to_string(j) + "]", state_lo, state_hi);
	for (std::size_t k = 0; k < N; ++k)
		for (std::size_t j = 1; j <= nu; ++j)
			ocp.vars.add("v[" + std::to_string(k) + "][" + std::to_string(j) + "]", input_lo, input_hi);

	Resolver resolve = [&t, N, nx, nu](const std::string &base, const std::vector<long> &idx, const SourceSpan &span) {
		if ((base == "x" || base == "v") && idx.size() == 2) {
			const bool state = base == "x";
			const long kmax = static_cast<long>(state ? N : N - 1);
			const long jmax = static_cast<long>(state ? nx : nu);
			if (idx[0] < 0 || idx[0] > kmax || idx[1] < 1 || idx[1] > jmax)
				throw ParseError("'" + indexed_name(base, idx) + "' is out of range (k in 0.." + std::to_string(kmax) +
				                     ", j in 1.." + std::to_string(jmax) + ")",
				                 span);
			auto k = static_cast<std::size_t>(idx[0]);
			auto j = static_cast<std::size_t>(idx[1] - 1);
			return state ? t.state(k, j) : t.input(k, j);
		}
		throw ParseError("unknown identifier '" + indexed_name(base, idx) + "'", span);
	};
	Elaborator el(resolve);
	el.bind("N", horizon);

	if (!quad) {
		// Validate residual references once against symbolic arguments.
		std::vector<Expr> x, v, xn;
		for (std::size_t j = 0; j < nx; ++j)
			x.push_back(t.state(0, j)), xn.push_back(t.state(1, j));
		for (std::size_t j = 0; j < nu; ++j)
			v.push_back(t.input(0, j));
		(void)dynamics->step_residuals(x, v, xn);
	}

	ocp.cost = el.expr(*Parser(once["cost"]->tokens).expr_to_end());
	ocp.eqs = t.dynamics_residuals();
	for (const Statement *c : constraints) {
		SyntaxPtr s = Parser(c->tokens).comparison_to_end();
		if (s->text == "<")
			throw ParseError("constraint: strict inequalities are not supported, use '<= 0'", s->span);
		Expr f = el.expr(*s->kids[0]);
		(s->text == "=" ? ocp.eqs : ocp.ineqs).push_back(f);
	}
	if (auto it = once.find("logic"); it != once.end() && it->second->tokens.front().kind != Tok::End)
		ocp.logic = el.formula(*Parser(it->second->tokens).formula_to_end());
	ocp.trajectory = std::move(t);
	return ocp;
}

/// Problem file for base. Needs trajectory structure with quadrotor or inline
/// dynamics and the variable layout produced by parse_problem.
inline std::string write_problem(const BaseOcp &base)
{
	if (!base.trajectory || !base.trajectory->dynamics)
		throw std::invalid_argument("write_problem: the problem has no trajectory structure");
	const TrajectoryLayout &t = *base.trajectory;
	std::ostringstream os;
	os << "horizon " << t.horizon << "\n";
	if (auto *q = dynamic_cast<const quadrotor::QuadrotorDynamics *>(t.dynamics.get())) {
		os << "dynamics " << q->describe() << "\n";
	} else if (auto *in = dynamic_cast<const InlineDynamics *>(t.dynamics.get())) {
		os << "dynamics inline\nstates " << t.state_dim << "\ninputs " << t.input_dim << "\n";
		for (const std::string &r : in->residual_text())
			os << "residual " << r << "\n";
	} else {
		throw std::invalid_argument("write_problem: dynamics '" + t.dynamics->describe() + "' have no file form");
	}
	os << "initial";
	for (double a : t.initial_state)
		os << " " << detail::format_double(a);
	os << "\n";
	auto bounds = [&](const char *name, std::size_t first, std::size_t count) {
		if (count == 0)
			return;
		double lo = base.vars.lower[first], hi = base.vars.upper[first];
		for (std::size_t i = first; i < first + count; ++i)
			if (base.vars.lower[i] != lo || base.vars.upper[i] != hi)
				throw std::invalid_argument(std::string("write_problem: '") + name + "' bounds are not uniform");
		if (std::isfinite(lo) || std::isfinite(hi))
			os << "bounds " << name << " " << detail::format_double(lo) << " " << detail::format_double(hi) << "\n";
	};
	bounds("x", 0, t.num_state_vars());
	bounds("v", t.num_state_vars(), t.num_input_vars());
	os << "cost " << to_source(base.cost, &base.vars) << "\n";
	const std::size_t n_dyn = t.state_dim * (t.horizon + 1);
	for (const Expr &g : base.ineqs)
		os << "constraint " << to_source(g, &base.vars) << " <= 0\n";
	for (std::size_t i = n_dyn; i < base.eqs.size(); ++i)
		os << "constraint " << to_source(base.eqs[i], &base.vars) << " = 0\n";
	if (base.logic)
		os << "logic " << to_source(*base.logic, &base.vars) << "\n";
	return os.str();
}

} // namespace logicsmooth
