#pragma once

// Comparison encodings of the clause form max_i min_j p_ij <= 0 using gate
// variables mu in [0, 1]:
//
//   Big-M:            p_ij <= mu_ij M,   prod_j mu_ij = 0
//   complementarity:  p_ij <= mu_ij M,   mu_ij (1 - mu_ij) = 0,   sum_j mu_ij <= k_i - 1
//
// where k_i is the clause length. A closed gate (mu = 0) forces its literal.

#include "expr.hpp"
#include "nlp.hpp"
#include "transform.hpp"

#include <stdexcept>
#include <string>
#include <vector>

namespace logicsmooth {

struct GateFragment {
	std::vector<Expr> ineqs;
	std::vector<Expr> eqs;
	std::vector<SimplexBlock> gates; // one block per clause
	double big_m = 0.0;

	std::size_t gate_count() const noexcept
	{
		std::size_t n = 0;
		for (const SimplexBlock &b : gates)
			n += b.size;
		return n;
	}
};

namespace detail {

inline void gated_literals(const MaxMinForm &m, double M, std::size_t first_var, GateFragment &out)
{
	std::size_t next = first_var;
	for (const auto &clause : m.clauses) {
		if (clause.empty())
			throw std::invalid_argument("gate encoding: empty clause");
		out.gates.push_back({next, clause.size()});
		for (std::size_t j = 0; j < clause.size(); ++j)
			out.ineqs.push_back(clause[j] - Expr::variable(next + j) * M);
		next += clause.size();
	}
}

} // namespace detail

/// Gate variables occupy indices first_var, first_var + 1, ... in clause order.
inline GateFragment encode_bigm(const MaxMinForm &m, double M, std::size_t first_var)
{
	if (!(M > 0.0))
		throw std::invalid_argument("Big-M constant must be positive");
	GateFragment out;
	out.big_m = M;
	detail::gated_literals(m, M, first_var, out);
	for (const SimplexBlock &b : out.gates) {
		Expr prod = Expr::variable(b.begin);
		for (std::size_t j = 1; j < b.size; ++j)
			prod = prod * Expr::variable(b.begin + j);
		out.eqs.push_back(prod);
	}
	return out;
}

inline GateFragment encode_complementarity(const MaxMinForm &m, double M, std::size_t first_var)
{
	if (!(M > 0.0))
		throw std::invalid_argument("gate bound M must be positive");
	GateFragment out;
	out.big_m = M;
	detail::gated_literals(m, M, first_var, out);
	for (const SimplexBlock &b : out.gates) {
		std::vector<Expr> gates;
		for (std::size_t j = 0; j < b.size; ++j) {
			Expr mu = Expr::variable(b.begin + j);
			out.eqs.push_back(mu * (1.0 - mu));
			gates.push_back(mu);
		}
		out.ineqs.push_back(sum(gates) - static_cast<double>(b.size - 1));
	}
	return out;
}

/// Largest literal value minus M at z; positive means M is too small there
/// and the encoding may wrongly report infeasibility.
inline double bigm_shortfall(const MaxMinForm &m, double M, std::span<const double> z)
{
	double worst = -std::numeric_limits<double>::infinity();
	for (const auto &clause : m.clauses)
		for (const Expr &p : clause)
			worst = std::max(worst, eval(p, z) - M);
	return worst;
}

struct BaselineOptions {
	double big_m = 1000.0;
	PipelineOptions pipeline;
};

inline NlpProblem assemble_gated_ocp(const BaseOcp &base, Encoding enc, const BaselineOptions &opts = {})
{
	if (enc == Encoding::Smoothed)
		return assemble_smooth_ocp(base, opts.pipeline);
	NlpProblem p = detail::copy_base(base, enc);
	if (base.logic)
		p.logic_form = logic_to_maxmin(*base.logic, opts.pipeline.equality_mode, opts.pipeline.epsilon,
		                               opts.pipeline.cnf);
	GateFragment f = enc == Encoding::BigM ? encode_bigm(p.logic_form, opts.big_m, p.vars.count)
	                                       : encode_complementarity(p.logic_form, opts.big_m, p.vars.count);
	for (std::size_t c = 0; c < f.gates.size(); ++c)
		for (std::size_t j = 0; j < f.gates[c].size; ++j)
			p.vars.add("mu[" + std::to_string(c) + "][" + std::to_string(j) + "]", 0.0, 1.0);
	p.ineqs.insert(p.ineqs.end(), f.ineqs.begin(), f.ineqs.end());
	p.eqs.insert(p.eqs.end(), f.eqs.begin(), f.eqs.end());
	p.gate_blocks = f.gates;
	return p;
}

inline NlpProblem assemble_bigm_ocp(const BaseOcp &base, const BaselineOptions &opts = {})
{
	return assemble_gated_ocp(base, Encoding::BigM, opts);
}

inline NlpProblem assemble_complementarity_ocp(const BaseOcp &base, const BaselineOptions &opts = {})
{
	return assemble_gated_ocp(base, Encoding::Complementarity, opts);
}

/// Any of the three encodings.
inline NlpProblem assemble(const BaseOcp &base, Encoding enc, const BaselineOptions &opts = {})
{
	return assemble_gated_ocp(base, enc, opts);
}

} // namespace logicsmooth
