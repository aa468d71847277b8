#pragma once

// Boolean formulas over equality / inequality propositions.

#include "expr.hpp"

#include <cmath>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace logicsmooth {

enum class PropKind : std::uint8_t { Equality, Inequality };

/// `func = 0`, `func <= 0`, or (strict) `func < 0`.
///
/// Strict inequalities are never written by users; they only appear when a
/// formula is negated by hand and are removed again by to_nnf.
struct Proposition {
	PropKind kind = PropKind::Inequality;
	Expr func;
	bool strict = false;

	/// Equalities may be given a tolerance; inequalities are always exact.
	bool holds(std::span<const double> z, double eq_tol = 0.0) const
	{
		double v = eval(func, z);
		switch (kind) {
		case PropKind::Equality: return std::abs(v) <= eq_tol;
		case PropKind::Inequality: return strict ? v < 0.0 : v <= 0.0;
		}
		return false;
	}
};

class Formula;

struct FormulaNode {
	enum class Kind : std::uint8_t { Prop, Not, And, Or };
	Kind kind = Kind::Prop;
	Proposition prop;
	std::vector<Formula> children;
};

class Formula {
public:
	using Kind = FormulaNode::Kind;

	static Formula prop(Proposition p)
	{
		auto n = std::make_shared<FormulaNode>();
		n->kind = Kind::Prop;
		n->prop = std::move(p);
		return Formula(std::move(n));
	}
	/// func <= 0
	static Formula le(Expr func) { return prop({PropKind::Inequality, std::move(func), false}); }
	/// func < 0
	static Formula lt(Expr func) { return prop({PropKind::Inequality, std::move(func), true}); }
	/// func = 0
	static Formula eq(Expr func) { return prop({PropKind::Equality, std::move(func), false}); }

	static Formula negate(Formula f)
	{
		auto n = std::make_shared<FormulaNode>();
		n->kind = Kind::Not;
		n->children.push_back(std::move(f));
		return Formula(std::move(n));
	}
	static Formula all(std::vector<Formula> children) { return junction(Kind::And, std::move(children)); }
	static Formula any(std::vector<Formula> children) { return junction(Kind::Or, std::move(children)); }

	Kind kind() const noexcept { return node_->kind; }
	const Proposition &proposition() const noexcept { return node_->prop; }
	const std::vector<Formula> &children() const noexcept { return node_->children; }
	const FormulaNode *node() const noexcept { return node_.get(); }

private:
	explicit Formula(std::shared_ptr<const FormulaNode> n) : node_(std::move(n)) {}

	static Formula junction(Kind k, std::vector<Formula> children)
	{
		if (children.empty())
			throw std::invalid_argument("AND/OR needs at least one operand");
		auto n = std::make_shared<FormulaNode>();
		n->kind = k;
		n->children = std::move(children);
		return Formula(std::move(n));
	}

	std::shared_ptr<const FormulaNode> node_;
};

inline Formula operator!(const Formula &f) { return Formula::negate(f); }
inline Formula operator&&(const Formula &a, const Formula &b) { return Formula::all({a, b}); }
inline Formula operator||(const Formula &a, const Formula &b) { return Formula::any({a, b}); }

/// IF a THEN b, i.e. NOT a OR b.
inline Formula implies(const Formula &a, const Formula &b) { return Formula::any({!a, b}); }

/// IF c THEN a ELSE b, i.e. (NOT c OR a) AND (c OR b).
inline Formula if_then_else(const Formula &c, const Formula &a, const Formula &b)
{
	return Formula::all({Formula::any({!c, a}), Formula::any({c, b})});
}

/// Truth value at z. Inequalities carry no tolerance; equalities hold when
/// |h| <= eq_tol (exact by default).
inline bool eval_formula(const Formula &f, std::span<const double> z, double eq_tol = 0.0)
{
	switch (f.kind()) {
	case Formula::Kind::Prop: return f.proposition().holds(z, eq_tol);
	case Formula::Kind::Not: return !eval_formula(f.children()[0], z, eq_tol);
	case Formula::Kind::And:
		for (const Formula &c : f.children())
			if (!eval_formula(c, z, eq_tol))
				return false;
		return true;
	case Formula::Kind::Or:
		for (const Formula &c : f.children())
			if (eval_formula(c, z, eq_tol))
				return true;
		return false;
	}
	return false;
}

inline bool structurally_equal(const Formula &a, const Formula &b)
{
	if (a.node() == b.node())
		return true;
	if (a.kind() != b.kind() || a.children().size() != b.children().size())
		return false;
	if (a.kind() == Formula::Kind::Prop) {
		const Proposition &p = a.proposition(), &q = b.proposition();
		return p.kind == q.kind && p.strict == q.strict && structurally_equal(p.func, q.func);
	}
	for (std::size_t i = 0; i < a.children().size(); ++i)
		if (!structurally_equal(a.children()[i], b.children()[i]))
			return false;
	return true;
}

/// Visits every proposition leaf in left-to-right order.
template <typename F>
void for_each_proposition(const Formula &f, F &&fn)
{
	if (f.kind() == Formula::Kind::Prop) {
		fn(f.proposition());
		return;
	}
	for (const Formula &c : f.children())
		for_each_proposition(c, fn);
}

inline bool contains_equality(const Formula &f)
{
	bool found = false;
	for_each_proposition(f, [&](const Proposition &p) { found |= p.kind == PropKind::Equality; });
	return found;
}

inline bool contains_negation(const Formula &f)
{
	if (f.kind() == Formula::Kind::Not)
		return true;
	for (const Formula &c : f.children())
		if (contains_negation(c))
			return true;
	return false;
}

/// Prefix dump: `(and (<= (+ z0 1)) (not (= z1)))`.
inline std::string dump(const Formula &f, const VarSpace *vars = nullptr)
{
	switch (f.kind()) {
	case Formula::Kind::Prop: {
		const Proposition &p = f.proposition();
		const char *rel = p.kind == PropKind::Equality ? "=" : p.strict ? "<" : "<=";
		return std::string("(") + rel + " " + dump(p.func, vars) + ")";
	}
	case Formula::Kind::Not: return "(not " + dump(f.children()[0], vars) + ")";
	case Formula::Kind::And:
	case Formula::Kind::Or: {
		std::string s = f.kind() == Formula::Kind::And ? "(and" : "(or";
		for (const Formula &c : f.children())
			s += " " + dump(c, vars);
		return s + ")";
	}
	}
	return {};
}

} // namespace logicsmooth
