// Reference implementations used to check the library. None of them call
// the code under test beyond the data structures.
#pragma once

#include "logicsmooth/baselines.hpp"
#include "logicsmooth/logic.hpp"
#include "logicsmooth/nlp.hpp"

#include <cmath>
#include <set>
#include <span>
#include <stdexcept>
#include <vector>

namespace oracle {

using namespace logicsmooth;

/// Plain recursive evaluation in extended precision.
inline long double eval_ld(const Expr &e, std::span<const long double> z)
{
	auto c = [&](std::size_t i) { return eval_ld(e.children()[i], z); };
	switch (e.op()) {
	case Op::Constant: return e.value();
	case Op::Variable: return z[e.index()];
	case Op::Add: return c(0) + c(1);
	case Op::Sub: return c(0) - c(1);
	case Op::Neg: return -c(0);
	case Op::Mul: return c(0) * c(1);
	case Op::Div: return c(0) / c(1);
	case Op::Pow: {
		long double a = c(0), r = 1.0L;
		int n = e.exponent();
		for (int k = 0; k < std::abs(n); ++k)
			r *= a;
		return n < 0 ? 1.0L / r : r;
	}
	case Op::Sin: return std::sin(c(0));
	case Op::Cos: return std::cos(c(0));
	case Op::Sqrt: return std::sqrt(c(0));
	case Op::Min:
	case Op::Max: {
		long double r = c(0);
		for (std::size_t i = 1; i < e.children().size(); ++i)
			r = e.op() == Op::Min ? std::min(r, c(i)) : std::max(r, c(i));
		return r;
	}
	}
	throw std::logic_error("eval_ld: unknown op");
}

/// Central differences with step h, evaluated in long double.
inline std::vector<double> central_difference(const Expr &e, std::span<const double> z, long double h = 1e-6L)
{
	std::vector<long double> p(z.begin(), z.end());
	std::vector<double> g(z.size());
	for (std::size_t i = 0; i < z.size(); ++i) {
		long double x = p[i];
		p[i] = x + h;
		long double up = eval_ld(e, p);
		p[i] = x - h;
		long double dn = eval_ld(e, p);
		p[i] = x;
		g[i] = static_cast<double>((up - dn) / (2.0L * h));
	}
	return g;
}

/// Number of CNF clauses and total literals after equality splitting,
/// negation pushing and distribution, computed by counting only.
struct CnfSize {
	std::size_t clauses = 0;
	std::size_t literals = 0;
};

inline CnfSize cnf_size(const Formula &f, bool negated = false)
{
	switch (f.kind()) {
	case Formula::Kind::Prop:
		if (f.proposition().kind == PropKind::Equality)
			return negated ? CnfSize{1, 2} : CnfSize{2, 2};
		return {1, 1};
	case Formula::Kind::Not: return cnf_size(f.children()[0], !negated);
	case Formula::Kind::And:
	case Formula::Kind::Or: break;
	}
	bool conj = (f.kind() == Formula::Kind::And) != negated;
	CnfSize acc = cnf_size(f.children()[0], negated);
	for (std::size_t i = 1; i < f.children().size(); ++i) {
		CnfSize b = cnf_size(f.children()[i], negated);
		if (conj)
			acc = {acc.clauses + b.clauses, acc.literals + b.literals};
		else
			acc = {acc.clauses * b.clauses, acc.literals * b.clauses + b.literals * acc.clauses};
	}
	return acc;
}

inline void collect_vars(const Expr &e, std::set<std::size_t> &out)
{
	if (e.op() == Op::Variable)
		out.insert(e.index());
	for (const Expr &c : e.children())
		collect_vars(c, out);
}

/// Whether some binary gate assignment satisfies every constraint of the
/// fragment at base point z. Constraints are grouped by the gate variables
/// they touch, and each group is enumerated on its own.
inline bool gates_exist(const GateFragment &f, std::span<const double> z, double tol = 0.0)
{
	std::size_t first = z.size();
	std::vector<double> point(z.begin(), z.end());
	point.resize(first + f.gate_count(), 0.0);
	for (const SimplexBlock &b : f.gates) {
		std::vector<const Expr *> ineqs, eqs;
		auto touches = [&](const Expr &e) {
			std::set<std::size_t> vars;
			collect_vars(e, vars);
			for (std::size_t v : vars)
				if (v >= b.begin && v < b.end())
					return true;
			return false;
		};
		for (const Expr &g : f.ineqs)
			if (touches(g))
				ineqs.push_back(&g);
		for (const Expr &h : f.eqs)
			if (touches(h))
				eqs.push_back(&h);
		bool found = false;
		for (unsigned mask = 0; mask < (1u << b.size) && !found; ++mask) {
			for (std::size_t j = 0; j < b.size; ++j)
				point[b.begin + j] = (mask >> j) & 1u ? 1.0 : 0.0;
			bool ok = true;
			for (const Expr *g : ineqs)
				ok = ok && eval(*g, point) <= tol;
			for (const Expr *h : eqs)
				ok = ok && std::abs(eval(*h, point)) <= tol;
			found = ok;
		}
		if (!found)
			return false;
	}
	return true;
}

/// Problem 1 in words: unless the quadrotor is inside the trigger circle at
/// step 2 or 3, it stays outside the obstacle at steps 5..9. A positive tol
/// accepts points that miss a condition by at most tol.
inline bool problem1_prose(const TrajectoryLayout &t, std::span<const double> z, double tol = 0.0)
{
	auto px = [&](std::size_t k) { return z[t.state_index(k, 0)]; };
	auto py = [&](std::size_t k) { return z[t.state_index(k, 2)]; };
	auto in_trigger = [&](std::size_t k) {
		return (px(k) - 2) * (px(k) - 2) + (py(k) - 1) * (py(k) - 1) <= 1.0 + tol;
	};
	if (in_trigger(2) || in_trigger(3))
		return true;
	for (std::size_t k = 5; k <= 9; ++k)
		if (px(k) * px(k) + (py(k) - 8) * (py(k) - 8) <= 25.0 - tol)
			return false;
	return true;
}

/// Problem 2 in words: trigger at step 3 means ending at (3, 5); otherwise
/// avoid the obstacle at steps 5..9 and end at (0, 15).
inline bool problem2_prose(const TrajectoryLayout &t, std::span<const double> z, double tol = 0.0)
{
	auto px = [&](std::size_t k) { return z[t.state_index(k, 0)]; };
	auto py = [&](std::size_t k) { return z[t.state_index(k, 2)]; };
	const std::size_t N = t.horizon;
	auto at = [&](double x, double y) { return std::abs(px(N) - x) <= tol && std::abs(py(N) - y) <= tol; };
	if ((px(3) + 3) * (px(3) + 3) + (py(3) - 2) * (py(3) - 2) <= 1.0 + tol)
		return at(3.0, 5.0);
	for (std::size_t k = 5; k <= 9; ++k)
		if (px(k) * px(k) + (py(k) - 8) * (py(k) - 8) <= 25.0 - tol)
			return false;
	return at(0.0, 15.0);
}

} // namespace oracle
