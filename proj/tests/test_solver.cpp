#include "logicsmooth/bench.hpp"
#include "logicsmooth/quadrotor.hpp"
#include "logicsmooth/solver.hpp"

#include "generators.hpp"

#include <gtest/gtest.h>

using namespace logicsmooth;

namespace {

Expr x(std::size_t i) { return Expr::variable(i); }

NlpProblem problem(std::size_t n, Expr cost, std::vector<Expr> ineqs = {}, std::vector<Expr> eqs = {})
{
	BaseOcp b;
	for (std::size_t i = 0; i < n; ++i)
		b.vars.add();
	b.cost = std::move(cost);
	b.ineqs = std::move(ineqs);
	b.eqs = std::move(eqs);
	return assemble_smooth_ocp(b);
}

} // namespace

TEST(Solve, ActiveInequality)
{
	NlpProblem p = problem(1, pow(x(0), 2), {1.0 - x(0)});
	SolveReport r = solve(p, std::vector<double>{5.0});
	ASSERT_TRUE(is_feasible(r.status)) << r.message;
	EXPECT_EQ(r.status, SolveStatus::FeasibleOptimalCandidate);
	EXPECT_NEAR(r.point[0], 1.0, 1e-5);
	EXPECT_NEAR(r.cost, 1.0, 1e-5);
	EXPECT_LE(r.max_ineq_violation, 1e-6);
	EXPECT_NEAR(r.ineq_multipliers[0], 2.0, 1e-4);
}

TEST(Solve, UnconstrainedQuadratic)
{
	NlpProblem p = problem(1, pow(x(0) - 1.0, 2));
	SolveReport r = solve(p, std::vector<double>{0.0});
	ASSERT_EQ(r.status, SolveStatus::FeasibleOptimalCandidate);
	EXPECT_NEAR(r.point[0], 1.0, 1e-8);
	EXPECT_NEAR(r.cost, 0.0, 1e-12);
	EXPECT_LE(check_kkt(p, r).stationarity, 1e-8);
}

TEST(Solve, EqualityConstrained)
{
	// min x^2 + y^2 s.t. x + y = 2 has its optimum at (1, 1).
	NlpProblem p = problem(2, pow(x(0), 2) + pow(x(1), 2), {}, {x(0) + x(1) - 2.0});
	SolveReport r = solve(p, std::vector<double>{3.0, -4.0});
	ASSERT_TRUE(is_feasible(r.status));
	EXPECT_NEAR(r.point[0], 1.0, 1e-6);
	EXPECT_NEAR(r.point[1], 1.0, 1e-6);
	auto kkt = check_kkt(p, r);
	EXPECT_LE(kkt.eq_violation, 1e-6);
	EXPECT_LE(kkt.stationarity, 1e-5);
}

TEST(Solve, BfgsMode)
{
	NlpProblem p = problem(2, pow(x(0) - 3.0, 2) + pow(x(1) + 1.0, 4), {x(0) - 2.0});
	SolverOptions o;
	o.hessian = HessianMode::Bfgs;
	SolveReport r = solve(p, std::vector<double>{0.0, 0.0}, o);
	ASSERT_TRUE(is_feasible(r.status)) << r.message;
	EXPECT_NEAR(r.point[0], 2.0, 1e-5);
	EXPECT_NEAR(r.point[1], -1.0, 0.05);
}

TEST(Solve, ClipsStartIntoBounds)
{
	BaseOcp b;
	b.vars.add("a", 2.0, 3.0);
	b.cost = pow(x(0), 2);
	NlpProblem p = assemble_smooth_ocp(b);
	SolveReport r = solve(p, std::vector<double>{-100.0});
	ASSERT_TRUE(is_feasible(r.status));
	EXPECT_EQ(r.point[0], 2.0);
}

TEST(Solve, InfeasibleIsReportedHonestly)
{
	NlpProblem p = problem(1, pow(x(0), 2), {x(0) - 1.0, 2.0 - x(0)});
	SolveReport r = solve(p, std::vector<double>{0.0});
	EXPECT_EQ(r.status, SolveStatus::Infeasible);
	EXPECT_GT(r.max_ineq_violation, 0.1);
}

TEST(Solve, DomainErrorGivesErrorStatus)
{
	NlpProblem p = problem(1, sqrt(x(0)));
	SolveReport r = solve(p, std::vector<double>{-1.0});
	EXPECT_EQ(r.status, SolveStatus::Error);
	EXPECT_FALSE(r.message.empty());
}

TEST(Solve, RejectsBadInput)
{
	NlpProblem p = problem(2, pow(x(0), 2));
	EXPECT_THROW(solve(p, std::vector<double>{1.0}), DimensionError);
	SolverOptions o;
	o.feas_tol = 0.0;
	EXPECT_THROW(solve(p, std::vector<double>{1.0, 1.0}, o), std::invalid_argument);
	o = {};
	o.penalty_growth = 1.0;
	EXPECT_THROW(solve(p, std::vector<double>{1.0, 1.0}, o), std::invalid_argument);
	o = {};
	o.simplex_floor = 1.0;
	EXPECT_THROW(solve(p, std::vector<double>{1.0, 1.0}, o), std::invalid_argument);
	o = {};
	o.outer_max_iter = 0;
	EXPECT_THROW(solve(p, std::vector<double>{1.0, 1.0}, o), std::invalid_argument);
}

TEST(Solve, Deterministic)
{
	auto q = quadrotor::build_problem1();
	NlpProblem p = assemble(q.base, Encoding::Smoothed);
	auto rng = trial_rng(5, 0);
	auto z0 = random_initial_guess(p, rng, InitialGuess::Nominal, 0.05);
	SolveReport a = solve(p, z0), b = solve(p, z0);
	EXPECT_EQ(a.status, b.status);
	EXPECT_EQ(a.point, b.point);
	EXPECT_EQ(a.iterations, b.iterations);
}

TEST(Solve, UnreferencedVariablesDoNotMatter)
{
	gen::Rng rng(51);
	for (int trial = 0; trial < 20; ++trial) {
		Expr cost = pow(x(0) - gen::uniform(rng, -2, 2), 2) + pow(x(1) - gen::uniform(rng, -2, 2), 2) + x(0) * x(1) * 0.5;
		Expr g = x(0) + x(1) - gen::uniform(rng, -1, 1);
		NlpProblem small = problem(2, cost, {g});
		NlpProblem big = problem(5, cost, {g});
		SolveReport a = solve(small, std::vector<double>{0.3, -0.2});
		SolveReport b = solve(big, std::vector<double>{0.3, -0.2, 1.0, 2.0, 3.0});
		ASSERT_TRUE(is_feasible(a.status));
		ASSERT_TRUE(is_feasible(b.status));
		EXPECT_NEAR(a.cost, b.cost, 1e-8);
	}
}

TEST(Solve, FeasibleSmoothedPointsSatisfyTheLogic)
{
	// Small random logic problems: whenever the solver reports feasibility
	// and no proposition sits in the epsilon band, the formula holds.
	gen::Rng rng(52);
	gen::FormulaShape shape;
	shape.n_vars = 3;
	shape.max_props = 5;
	shape.max_depth = 3;
	shape.p_equality = 0.0;
	int feasible = 0;
	for (int trial = 0; trial < 400; ++trial) {
		BaseOcp b;
		for (std::size_t i = 0; i < 3; ++i)
			b.vars.add("", -3.0, 3.0);
		b.cost = pow(x(0) - gen::uniform(rng, -2, 2), 2) + pow(x(1), 2) + pow(x(2), 2);
		b.logic = gen::formula(rng, shape);
		NlpProblem p = assemble_smooth_ocp(b);
		auto r0 = trial_rng(52, static_cast<std::size_t>(trial));
		auto z0 = random_initial_guess(p, r0, InitialGuess::Uniform);
		SolveReport r = solve(p, z0);
		if (!is_feasible(r.status))
			continue;
		auto xu = base_part(p, r.point);
		if (gen::in_band(*b.logic, xu, 1e-3 + 1e-6))
			continue;
		++feasible;
		EXPECT_TRUE(eval_formula(*b.logic, xu)) << dump(*b.logic);
		EXPECT_LE(eval_maxmin(p.logic_form, xu), 1e-6);
	}
	EXPECT_GT(feasible, 150);
}

TEST(Solve, ProblemOneFromHover)
{
	auto q = quadrotor::build_problem1();
	NlpProblem p = assemble(q.base, Encoding::Smoothed);
	auto rng = trial_rng(0, 0);
	auto z0 = random_initial_guess(p, rng, InitialGuess::Nominal, 0.05);
	SolveReport r = solve(p, z0);
	ASSERT_TRUE(is_feasible(r.status)) << r.message;
	auto xu = base_part(p, r.point);
	EXPECT_TRUE(eval_formula(*p.logic, xu, 1e-6));
	EXPECT_LE(eval_maxmin(p.logic_form, xu), 1e-6);
	auto kkt = check_kkt(p, r);
	EXPECT_LE(kkt.ineq_violation, 1e-6);
	EXPECT_LE(kkt.eq_violation, 1e-6);
	EXPECT_LT(r.cost, 30.0);
}

TEST(Kkt, AnalyticMultiplier)
{
	NlpProblem p = problem(1, pow(x(0), 2), {1.0 - x(0)});
	auto r = check_kkt(p, std::vector<double>{1.0}, std::vector<double>{2.0}, std::vector<double>{});
	EXPECT_LE(r.stationarity, 1e-12);
	EXPECT_EQ(r.complementarity, 0.0);
	EXPECT_EQ(r.ineq_violation, 0.0);
	EXPECT_THROW(check_kkt(p, std::vector<double>{1.0}, std::vector<double>{}, std::vector<double>{}),
	             DimensionError);
}
