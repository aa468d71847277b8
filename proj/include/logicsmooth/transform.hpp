#pragma once

// Reformulation pipeline for logic constraints:
//
//   eliminate_equalities  q = 0  ->  (q <= 0) AND (-q <= 0)   or   q^2 <= 0
//   to_nnf                push NOT to the leaves; NOT(p <= 0) -> -p + eps <= 0
//   to_cnf                AND of ORs, i.e. max over clauses of min over literals
//   smooth                each min replaced by a simplex-weighted sum
//
// flatten_direct maps AND/OR straight to max/min without the CNF step; it is
// used for evaluation and cross-checking only.

#include "expr.hpp"
#include "logic.hpp"

#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace logicsmooth {

enum class EqualityMode : std::uint8_t { Split, Square };

struct EpsilonPolicy {
	double epsilon = 1e-3;

	EpsilonPolicy() = default;
	explicit EpsilonPolicy(double eps) : epsilon(eps)
	{
		if (!(eps > 0.0) || !std::isfinite(eps))
			throw std::invalid_argument("epsilon must be a positive finite number");
	}
};

/// max_i min_j clauses[i][j] <= 0. No clauses means the trivially true constraint.
struct MaxMinForm {
	std::vector<std::vector<Expr>> clauses;

	std::size_t num_clauses() const noexcept { return clauses.size(); }
	std::size_t num_literals() const noexcept
	{
		std::size_t n = 0;
		for (const auto &c : clauses)
			n += c.size();
		return n;
	}
};

class CnfSizeError : public std::runtime_error {
public:
	CnfSizeError(std::size_t would_be, std::size_t cap)
		: std::runtime_error("CNF conversion would produce " + std::to_string(would_be) +
		                     " clauses, exceeding the cap of " + std::to_string(cap)),
		  clauses(would_be), limit(cap) {}
	std::size_t clauses;
	std::size_t limit;
};

struct CnfOptions {
	std::size_t max_clauses = 4096;
};

inline Formula eliminate_equalities(const Formula &f, EqualityMode mode = EqualityMode::Split)
{
	switch (f.kind()) {
	case Formula::Kind::Prop: {
		const Proposition &p = f.proposition();
		if (p.kind != PropKind::Equality)
			return f;
		if (mode == EqualityMode::Square)
			return Formula::le(pow(p.func, 2));
		return Formula::all({Formula::le(p.func), Formula::le(-p.func)});
	}
	case Formula::Kind::Not: return Formula::negate(eliminate_equalities(f.children()[0], mode));
	case Formula::Kind::And:
	case Formula::Kind::Or: {
		std::vector<Formula> kids;
		kids.reserve(f.children().size());
		for (const Formula &c : f.children())
			kids.push_back(eliminate_equalities(c, mode));
		return f.kind() == Formula::Kind::And ? Formula::all(std::move(kids))
		                                       : Formula::any(std::move(kids));
	}
	}
	return f;
}

namespace detail {

inline Formula nnf(const Formula &f, bool negated, const EpsilonPolicy &eps)
{
	switch (f.kind()) {
	case Formula::Kind::Prop: {
		const Proposition &p = f.proposition();
		if (p.kind == PropKind::Equality)
			throw std::invalid_argument("to_nnf: equality propositions must be eliminated first");
		if (!negated)
			return p.strict ? Formula::le(p.func + eps.epsilon) : f;
		// NOT(p < 0) is exactly -p <= 0; NOT(p <= 0) is p > 0, tightened to -p + eps <= 0.
		return p.strict ? Formula::le(-p.func) : Formula::le(-p.func + eps.epsilon);
	}
	case Formula::Kind::Not: return nnf(f.children()[0], !negated, eps);
	case Formula::Kind::And:
	case Formula::Kind::Or: {
		std::vector<Formula> kids;
		kids.reserve(f.children().size());
		for (const Formula &c : f.children())
			kids.push_back(nnf(c, negated, eps));
		bool conj = (f.kind() == Formula::Kind::And) != negated;
		return conj ? Formula::all(std::move(kids)) : Formula::any(std::move(kids));
	}
	}
	return f;
}

inline void require_nnf(const Formula &f, const char *who)
{
	if (contains_negation(f))
		throw std::invalid_argument(std::string(who) + ": formula contains NOT; run to_nnf first");
	for_each_proposition(f, [&](const Proposition &p) {
		if (p.kind == PropKind::Equality)
			throw std::invalid_argument(std::string(who) + ": formula contains an equality proposition");
		if (p.strict)
			throw std::invalid_argument(std::string(who) + ": formula contains a strict inequality");
	});
}

inline std::vector<std::vector<Expr>> cnf(const Formula &f, std::size_t cap)
{
	switch (f.kind()) {
	case Formula::Kind::Prop: return {{f.proposition().func}};
	case Formula::Kind::And: {
		std::vector<std::vector<Expr>> out;
		for (const Formula &c : f.children()) {
			auto part = cnf(c, cap);
			if (out.size() + part.size() > cap)
				throw CnfSizeError(out.size() + part.size(), cap);
			out.insert(out.end(), std::make_move_iterator(part.begin()),
			           std::make_move_iterator(part.end()));
		}
		return out;
	}
	case Formula::Kind::Or: {
		// (A1 & A2) | (B1 & B2) = (A1|B1) & (A1|B2) & (A2|B1) & (A2|B2)
		std::vector<std::vector<Expr>> acc = cnf(f.children()[0], cap);
		for (std::size_t k = 1; k < f.children().size(); ++k) {
			auto rhs = cnf(f.children()[k], cap);
			if (!rhs.empty() && acc.size() > cap / rhs.size())
				throw CnfSizeError(acc.size() * rhs.size(), cap);
			std::vector<std::vector<Expr>> next;
			next.reserve(acc.size() * rhs.size());
			for (const auto &a : acc)
				for (const auto &b : rhs) {
					std::vector<Expr> clause = a;
					clause.insert(clause.end(), b.begin(), b.end());
					next.push_back(std::move(clause));
				}
			acc = std::move(next);
		}
		return acc;
	}
	case Formula::Kind::Not: break;
	}
	throw std::logic_error("cnf: unexpected NOT");
}

} // namespace detail

/// Pushes negations to the propositions. The input must be equality-free.
inline Formula to_nnf(const Formula &f, const EpsilonPolicy &eps = {})
{
	return detail::nnf(f, false, eps);
}

/// Distributes OR over AND. Literals keep referring to the original
/// proposition functions; no auxiliary propositions are introduced.
inline MaxMinForm to_cnf(const Formula &f, const CnfOptions &opts = {})
{
	detail::require_nnf(f, "to_cnf");
	return MaxMinForm{detail::cnf(f, opts.max_clauses)};
}

/// AND -> max, OR -> min, with the original nesting. Not differentiable.
inline Expr flatten_direct(const Formula &f)
{
	detail::require_nnf(f, "flatten_direct");
	auto rec = [](auto &self, const Formula &g) -> Expr {
		if (g.kind() == Formula::Kind::Prop)
			return g.proposition().func;
		std::vector<Expr> kids;
		kids.reserve(g.children().size());
		for (const Formula &c : g.children())
			kids.push_back(self(self, c));
		return g.kind() == Formula::Kind::And ? max(std::move(kids)) : min(std::move(kids));
	};
	return rec(rec, f);
}

/// Per-clause minima at z.
inline std::vector<double> clause_minima(const MaxMinForm &m, std::span<const double> z)
{
	std::vector<double> out;
	out.reserve(m.clauses.size());
	for (const auto &clause : m.clauses) {
		double lo = std::numeric_limits<double>::infinity();
		for (const Expr &p : clause)
			lo = std::min(lo, eval(p, z));
		out.push_back(lo);
	}
	return out;
}

/// max_i min_j p_ij(z); -inf when there are no clauses.
inline double eval_maxmin(const MaxMinForm &m, std::span<const double> z)
{
	double hi = -std::numeric_limits<double>::infinity();
	for (double v : clause_minima(m, z))
		hi = std::max(hi, v);
	return hi;
}

/// Contiguous range of decision variables constrained to the unit simplex.
struct SimplexBlock {
	std::size_t begin = 0;
	std::size_t size = 0;

	std::size_t end() const noexcept { return begin + size; }
	bool operator==(const SimplexBlock &) const = default;
};

/// How clauses map to simplex weight blocks.
struct LambdaSharing {
	enum class Mode : std::uint8_t { PerClause, SharedGroups, SharedAll };

	Mode mode = Mode::PerClause;
	/// Clause indices sharing one block (SharedGroups). Clauses not listed get their own block.
	std::vector<std::vector<std::size_t>> groups;

	static LambdaSharing per_clause() { return {}; }
	static LambdaSharing shared_all() { return {Mode::SharedAll, {}}; }
	static LambdaSharing shared_groups(std::vector<std::vector<std::size_t>> g)
	{
		return {Mode::SharedGroups, std::move(g)};
	}
};

/// Smoothed logic constraints: constraints[i] = sum_j lambda_{b(i),j} * p_ij <= 0.
struct SmoothedSet {
	std::vector<Expr> constraints;
	std::vector<SimplexBlock> blocks;
	std::vector<std::size_t> clause_block; // clause index -> blocks index
	std::size_t first_lambda = 0;
	LambdaSharing sharing;

	std::size_t lambda_count() const noexcept
	{
		std::size_t n = 0;
		for (const SimplexBlock &b : blocks)
			n += b.size;
		return n;
	}

	/// sum(lambda in block) - 1 for every block.
	std::vector<Expr> simplex_equalities() const
	{
		std::vector<Expr> out;
		out.reserve(blocks.size());
		for (const SimplexBlock &b : blocks) {
			std::vector<Expr> terms;
			for (std::size_t k = b.begin; k < b.end(); ++k)
				terms.push_back(Expr::variable(k));
			out.push_back(sum(terms) - 1.0);
		}
		return out;
	}
};

class SharingError : public std::invalid_argument {
public:
	using std::invalid_argument::invalid_argument;
};

/// Appends fresh weight variables starting at index first_lambda.
inline SmoothedSet smooth(const MaxMinForm &m, std::size_t first_lambda,
                          const LambdaSharing &sharing = LambdaSharing::per_clause())
{
	const std::size_t n = m.clauses.size();
	for (std::size_t i = 0; i < n; ++i) {
		if (m.clauses[i].empty())
			throw std::invalid_argument("smooth: empty clause " + std::to_string(i));
		for (const Expr &p : m.clauses[i])
			if (std::string path = find_nonsmooth(p); !path.empty())
				throw NotDifferentiable("clause " + std::to_string(i) + " " + path);
	}

	std::vector<std::vector<std::size_t>> groups;
	switch (sharing.mode) {
	case LambdaSharing::Mode::PerClause: break;
	case LambdaSharing::Mode::SharedAll:
		if (n > 0) {
			groups.emplace_back();
			for (std::size_t i = 0; i < n; ++i)
				groups.back().push_back(i);
		}
		break;
	case LambdaSharing::Mode::SharedGroups: groups = sharing.groups; break;
	}

	constexpr std::size_t unassigned = std::numeric_limits<std::size_t>::max();
	SmoothedSet out;
	out.first_lambda = first_lambda;
	out.sharing = sharing;
	out.clause_block.assign(n, unassigned);
	std::size_t next = first_lambda;

	auto new_block = [&](std::size_t arity) {
		out.blocks.push_back({next, arity});
		next += arity;
		return out.blocks.size() - 1;
	};

	for (const auto &g : groups) {
		if (g.empty())
			continue;
		for (std::size_t i : g) {
			if (i >= n)
				throw SharingError("shared group references clause " + std::to_string(i) +
				                   " but there are only " + std::to_string(n));
			if (out.clause_block[i] != unassigned)
				throw SharingError("clause " + std::to_string(i) + " appears in two groups");
			if (m.clauses[i].size() != m.clauses[g.front()].size())
				throw SharingError("shared group mixes clause arities " +
				                   std::to_string(m.clauses[g.front()].size()) + " and " +
				                   std::to_string(m.clauses[i].size()));
		}
		std::size_t b = new_block(m.clauses[g.front()].size());
		for (std::size_t i : g)
			out.clause_block[i] = b;
	}
	for (std::size_t i = 0; i < n; ++i)
		if (out.clause_block[i] == unassigned)
			out.clause_block[i] = new_block(m.clauses[i].size());

	out.constraints.reserve(n);
	for (std::size_t i = 0; i < n; ++i) {
		const SimplexBlock &b = out.blocks[out.clause_block[i]];
		std::vector<Expr> terms;
		terms.reserve(b.size);
		for (std::size_t j = 0; j < b.size; ++j)
			terms.push_back(Expr::variable(b.begin + j) * m.clauses[i][j]);
		out.constraints.push_back(sum(terms));
	}
	return out;
}

/// Weights that put all mass on each clause's smallest literal (lowest index
/// on ties). Returns a vector of length s.lambda_count(), ordered like the
/// blocks. Only meaningful for per-clause blocks.
inline std::vector<double> vertex_certificate(const MaxMinForm &m, const SmoothedSet &s,
                                              std::span<const double> z)
{
	std::vector<double> lambda(s.lambda_count(), 0.0);
	for (std::size_t i = 0; i < m.clauses.size(); ++i) {
		std::size_t best = 0;
		double lo = std::numeric_limits<double>::infinity();
		for (std::size_t j = 0; j < m.clauses[i].size(); ++j) {
			double v = eval(m.clauses[i][j], z);
			if (v < lo) {
				lo = v;
				best = j;
			}
		}
		lambda[s.blocks[s.clause_block[i]].begin - s.first_lambda + best] = 1.0;
	}
	return lambda;
}

/// Whole front half of the pipeline: equalities out, negations pushed down, CNF.
inline MaxMinForm logic_to_maxmin(const Formula &f, EqualityMode mode = EqualityMode::Split,
                                  const EpsilonPolicy &eps = {}, const CnfOptions &opts = {})
{
	return to_cnf(to_nnf(eliminate_equalities(f, mode), eps), opts);
}

/// Prefix dump of a max-min form, one clause per line.
inline std::string dump(const MaxMinForm &m, const VarSpace *vars = nullptr)
{
	std::string s;
	for (std::size_t i = 0; i < m.clauses.size(); ++i) {
		s += "clause " + std::to_string(i) + ":";
		for (const Expr &p : m.clauses[i])
			s += " " + dump(p, vars);
		s += "\n";
	}
	return s;
}

} // namespace logicsmooth
