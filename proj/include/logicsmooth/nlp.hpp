#pragma once

// Problem containers and assembly of the smooth program
//
//   min_{x,u,lambda} J(x,u)  s.t.  g*(x,u,lambda) <= 0,  h*(x,u,lambda) = 0
//
// from a logic-constrained optimal control problem.

#include "expr.hpp"
#include "logic.hpp"
#include "transform.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <numeric>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <vector>

namespace logicsmooth {

/// Discrete-time dynamics x_{k+1} = f(x_k, u_k), possibly given implicitly
/// through residuals. step() is used for forward rollouts of initial guesses.
class Dynamics {
public:
	virtual ~Dynamics() = default;
	virtual std::size_t state_dim() const = 0;
	virtual std::size_t input_dim() const = 0;
	/// Residuals r(x_k, u_k, x_{k+1}) = 0 for one step; the arguments are variable expressions.
	virtual std::vector<Expr> step_residuals(std::span<const Expr> x, std::span<const Expr> u,
	                                         std::span<const Expr> x_next) const = 0;
	/// Solves the step residuals for x_next.
	virtual void step(std::span<const double> x, std::span<const double> u,
	                  std::span<double> x_next) const = 0;
	virtual std::string describe() const = 0;
	/// Input around which initial guesses are drawn; empty if there is none.
	virtual std::vector<double> nominal_input() const { return {}; }
};

/// Time-major layout: x_0..x_N (state_dim each), then u_0..u_{N-1}.
struct TrajectoryLayout {
	std::size_t horizon = 0;
	std::size_t state_dim = 0;
	std::size_t input_dim = 0;
	std::vector<double> initial_state;
	std::shared_ptr<const Dynamics> dynamics;

	std::size_t num_state_vars() const noexcept { return (horizon + 1) * state_dim; }
	std::size_t num_input_vars() const noexcept { return horizon * input_dim; }
	std::size_t num_vars() const noexcept { return num_state_vars() + num_input_vars(); }
	/// j is 0-based.
	std::size_t state_index(std::size_t k, std::size_t j) const { return k * state_dim + j; }
	std::size_t input_index(std::size_t k, std::size_t j) const
	{
		return num_state_vars() + k * input_dim + j;
	}
	Expr state(std::size_t k, std::size_t j) const { return Expr::variable(state_index(k, j)); }
	Expr input(std::size_t k, std::size_t j) const { return Expr::variable(input_index(k, j)); }

	/// Initial-condition residuals followed by one block of step residuals per k.
	std::vector<Expr> dynamics_residuals() const
	{
		std::vector<Expr> out;
		for (std::size_t j = 0; j < state_dim; ++j)
			out.push_back(state(0, j) - initial_state.at(j));
		if (!dynamics)
			return out;
		for (std::size_t k = 0; k < horizon; ++k) {
			std::vector<Expr> x, u, xn;
			for (std::size_t j = 0; j < state_dim; ++j) {
				x.push_back(state(k, j));
				xn.push_back(state(k + 1, j));
			}
			for (std::size_t j = 0; j < input_dim; ++j)
				u.push_back(input(k, j));
			auto r = dynamics->step_residuals(x, u, xn);
			out.insert(out.end(), r.begin(), r.end());
		}
		return out;
	}

	/// Full (x, u) vector obtained by simulating the inputs from the initial state.
	std::vector<double> rollout(std::span<const double> inputs) const
	{
		if (!dynamics)
			throw std::logic_error("rollout: no dynamics model attached");
		if (inputs.size() != num_input_vars())
			throw DimensionError("rollout: expected " + std::to_string(num_input_vars()) + " inputs");
		std::vector<double> z(num_vars(), 0.0);
		std::copy(initial_state.begin(), initial_state.end(), z.begin());
		for (std::size_t k = 0; k < horizon; ++k)
			dynamics->step(std::span<const double>(z.data() + k * state_dim, state_dim),
			               inputs.subspan(k * input_dim, input_dim),
			               std::span<double>(z.data() + (k + 1) * state_dim, state_dim));
		std::copy(inputs.begin(), inputs.end(), z.begin() + static_cast<std::ptrdiff_t>(num_state_vars()));
		return z;
	}
};

/// Logic-constrained problem before reformulation. An absent logic formula is `true`.
struct BaseOcp {
	VarSpace vars;
	Expr cost;
	std::vector<Expr> ineqs;
	std::vector<Expr> eqs;
	std::optional<Formula> logic;
	std::optional<TrajectoryLayout> trajectory;
};

inline bool structurally_equal(const BaseOcp &a, const BaseOcp &b)
{
	auto same_list = [](const std::vector<Expr> &x, const std::vector<Expr> &y) {
		if (x.size() != y.size())
			return false;
		for (std::size_t i = 0; i < x.size(); ++i)
			if (!structurally_equal(x[i], y[i]))
				return false;
		return true;
	};
	if (a.vars.count != b.vars.count || a.vars.lower != b.vars.lower || a.vars.upper != b.vars.upper)
		return false;
	if (!structurally_equal(a.cost, b.cost) || !same_list(a.ineqs, b.ineqs) || !same_list(a.eqs, b.eqs))
		return false;
	if (a.logic.has_value() != b.logic.has_value())
		return false;
	return !a.logic || structurally_equal(*a.logic, *b.logic);
}

enum class Encoding : std::uint8_t { Smoothed, BigM, Complementarity };

inline const char *to_string(Encoding e)
{
	switch (e) {
	case Encoding::Smoothed: return "smoothed";
	case Encoding::BigM: return "bigm";
	case Encoding::Complementarity: return "comp";
	}
	return "?";
}

/// Assembled smooth program handed to a solver backend.
struct NlpProblem {
	VarSpace vars;
	Expr cost;
	std::vector<Expr> ineqs;
	std::vector<Expr> eqs;
	std::vector<SimplexBlock> simplex_blocks;
	/// Gate variables of the Big-M / complementarity encodings, one block per clause.
	std::vector<SimplexBlock> gate_blocks;

	Encoding encoding = Encoding::Smoothed;
	std::size_t base_vars = 0;
	std::size_t base_ineqs = 0;
	std::size_t base_eqs = 0;
	/// Clause structure the logic rows were generated from.
	MaxMinForm logic_form;
	std::vector<std::size_t> clause_block;
	std::optional<Formula> logic;
	std::optional<TrajectoryLayout> trajectory;

	std::size_t lambda_count() const noexcept
	{
		std::size_t n = 0;
		for (const SimplexBlock &b : simplex_blocks)
			n += b.size;
		return n;
	}

	/// Inequality count with lambda >= 0 counted as rows (they are bounds internally).
	std::size_t counted_ineqs() const noexcept { return ineqs.size() + lambda_count(); }
	std::size_t counted_eqs() const noexcept { return eqs.size(); }
};

struct PipelineOptions {
	EqualityMode equality_mode = EqualityMode::Split;
	EpsilonPolicy epsilon;
	LambdaSharing sharing;
	CnfOptions cnf;
};

namespace detail {

inline NlpProblem copy_base(const BaseOcp &base, Encoding enc)
{
	NlpProblem p;
	p.vars = base.vars;
	p.cost = base.cost;
	p.ineqs = base.ineqs;
	p.eqs = base.eqs;
	p.encoding = enc;
	p.base_vars = base.vars.count;
	p.base_ineqs = base.ineqs.size();
	p.base_eqs = base.eqs.size();
	p.logic = base.logic;
	p.trajectory = base.trajectory;
	return p;
}

} // namespace detail

/// Equalities out, NOT pushed down, CNF, simplex smoothing; results appended to g and h.
inline NlpProblem assemble_smooth_ocp(const BaseOcp &base, const PipelineOptions &opts = {})
{
	NlpProblem p = detail::copy_base(base, Encoding::Smoothed);
	if (base.logic)
		p.logic_form = logic_to_maxmin(*base.logic, opts.equality_mode, opts.epsilon, opts.cnf);
	SmoothedSet s = smooth(p.logic_form, p.vars.count, opts.sharing);
	for (std::size_t b = 0; b < s.blocks.size(); ++b)
		for (std::size_t j = 0; j < s.blocks[b].size; ++j)
			p.vars.add("lambda[" + std::to_string(b) + "][" + std::to_string(j) + "]", 0.0, 1.0);
	p.ineqs.insert(p.ineqs.end(), s.constraints.begin(), s.constraints.end());
	auto unity = s.simplex_equalities();
	p.eqs.insert(p.eqs.end(), unity.begin(), unity.end());
	p.simplex_blocks = s.blocks;
	p.clause_block = s.clause_block;
	return p;
}

/// Euclidean projection onto {l : sum l = 1, l >= 0}.
inline std::vector<double> project_simplex(std::span<const double> v)
{
	if (v.empty())
		throw std::invalid_argument("project_simplex: empty vector");
	std::vector<double> s(v.begin(), v.end());
	std::sort(s.begin(), s.end(), std::greater<>());
	double cum = 0.0, theta = 0.0;
	for (std::size_t k = 0; k < s.size(); ++k) {
		cum += s[k];
		double t = (cum - 1.0) / static_cast<double>(k + 1);
		if (s[k] - t > 0.0)
			theta = t;
	}
	std::vector<double> out(v.size());
	for (std::size_t i = 0; i < v.size(); ++i)
		out[i] = std::max(v[i] - theta, 0.0);
	// One corrective pass keeps the sum error at rounding level.
	double total = std::accumulate(out.begin(), out.end(), 0.0);
	if (total > 0.0)
		for (double &x : out)
			x /= total;
	return out;
}

struct ClauseRegularity {
	std::size_t clause = 0;
	std::vector<std::size_t> active;
	std::size_t rank = 0;
	bool deficient = false;
};

struct RegularityReport {
	std::vector<ClauseRegularity> clauses;

	std::size_t warnings() const
	{
		return static_cast<std::size_t>(std::count_if(clauses.begin(), clauses.end(),
		                                              [](const auto &c) { return c.deficient; }));
	}

	std::string to_string() const
	{
		std::ostringstream os;
		for (const auto &c : clauses) {
			os << "clause " << c.clause << ": active " << c.active.size() << ", rank " << c.rank;
			if (c.deficient)
				os << "  WARNING rank-deficient active gradients";
			os << '\n';
		}
		return os.str();
	}
};

/// Numerical rank by modified Gram-Schmidt with a relative tolerance.
inline std::size_t numerical_rank(std::vector<std::vector<double>> rows, double rel_tol = 1e-9)
{
	double scale = 0.0;
	for (const auto &r : rows)
		for (double x : r)
			scale = std::max(scale, std::abs(x));
	if (scale == 0.0)
		return 0;
	std::vector<std::vector<double>> basis;
	for (auto &r : rows) {
		for (const auto &q : basis) {
			double d = std::inner_product(r.begin(), r.end(), q.begin(), 0.0);
			for (std::size_t i = 0; i < r.size(); ++i)
				r[i] -= d * q[i];
		}
		double n = std::sqrt(std::inner_product(r.begin(), r.end(), r.begin(), 0.0));
		if (n > rel_tol * scale) {
			for (double &x : r)
				x /= n;
			basis.push_back(std::move(r));
		}
	}
	return basis.size();
}

/// For each clause, the literals within `activity_tol` of the clause minimum
/// are active; their gradients should be linearly independent. Advisory only.
inline RegularityReport check_regularity(const NlpProblem &p, std::span<const double> z,
                                         double activity_tol = 1e-6)
{
	RegularityReport rep;
	for (std::size_t i = 0; i < p.logic_form.clauses.size(); ++i) {
		const auto &clause = p.logic_form.clauses[i];
		std::vector<double> vals;
		for (const Expr &e : clause)
			vals.push_back(eval(e, z));
		double lo = *std::min_element(vals.begin(), vals.end());
		ClauseRegularity c;
		c.clause = i;
		std::vector<std::vector<double>> grads;
		for (std::size_t j = 0; j < clause.size(); ++j)
			if (vals[j] - lo <= activity_tol) {
				c.active.push_back(j);
				grads.push_back(grad(clause[j], z));
			}
		c.rank = numerical_rank(grads);
		c.deficient = c.rank < c.active.size();
		rep.clauses.push_back(std::move(c));
	}
	return rep;
}

/// The (x, u) prefix of a full decision vector.
inline std::vector<double> base_part(const NlpProblem &p, std::span<const double> z)
{
	return {z.begin(), z.begin() + static_cast<std::ptrdiff_t>(p.base_vars)};
}

} // namespace logicsmooth
