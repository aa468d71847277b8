#include "logicsmooth/bench.hpp"
#include "logicsmooth/quadrotor.hpp"

#include <gtest/gtest.h>

#include <numeric>

using namespace logicsmooth;

namespace {

Expr x(std::size_t i) { return Expr::variable(i); }

BaseOcp analytic()
{
	BaseOcp b;
	b.vars.add("a", -10.0, 10.0);
	b.cost = pow(x(0), 2);
	b.ineqs = {1.0 - x(0)};
	return b;
}

BaseOcp contradictory()
{
	BaseOcp b;
	b.vars.add("a", -10.0, 10.0);
	b.cost = pow(x(0), 2);
	b.ineqs = {x(0) - 1.0, 2.0 - x(0)};
	return b;
}

} // namespace

TEST(RunTrials, SingleConvergentRun)
{
	TrialConfig cfg;
	cfg.n_trials = 1;
	cfg.problem = "analytic";
	BenchReport r = run_trials(analytic(), cfg);
	EXPECT_EQ(r.counts, (BenchCounts{1, 0, 0}));
	ASSERT_TRUE(r.best_cost);
	EXPECT_NEAR(*r.best_cost, 1.0, 1e-5);
	EXPECT_EQ(r.best_trial, std::size_t{0});
	EXPECT_EQ(r.problem, "analytic");
	EXPECT_EQ(r.trials.size(), 1u);
}

TEST(RunTrials, NoFeasibleRunLeavesAveragesAbsent)
{
	TrialConfig cfg;
	cfg.n_trials = 3;
	BenchReport r = run_trials(contradictory(), cfg);
	EXPECT_EQ(r.counts, (BenchCounts{0, 0, 3}));
	EXPECT_FALSE(r.avg_cost);
	EXPECT_FALSE(r.avg_time_feasible);
	EXPECT_FALSE(r.median_time_feasible);
	EXPECT_FALSE(r.best_cost);
	EXPECT_TRUE(r.best_trajectory.empty());
	EXPECT_GE(r.avg_time, 0.0);
}

TEST(RunTrials, RejectsZeroTrials)
{
	TrialConfig cfg;
	cfg.n_trials = 0;
	EXPECT_THROW(run_trials(analytic(), cfg), std::invalid_argument);
}

TEST(RunTrials, ThreadCountDoesNotChangeResults)
{
	auto q = quadrotor::build_problem1();
	TrialConfig cfg;
	cfg.n_trials = 6;
	cfg.seed = 3;
	cfg.threads = 1;
	BenchReport a = run_trials(q.base, cfg);
	cfg.threads = 3;
	BenchReport b = run_trials(q.base, cfg);
	EXPECT_EQ(a.counts, b.counts);
	EXPECT_EQ(a.best_cost, b.best_cost);
	EXPECT_EQ(a.best_trial, b.best_trial);
	ASSERT_EQ(a.trials.size(), b.trials.size());
	for (std::size_t i = 0; i < a.trials.size(); ++i)
		EXPECT_EQ(a.trials[i].point, b.trials[i].point);

	// Partition and best trajectory soundness.
	EXPECT_EQ(a.counts.optimal + a.counts.suboptimal + a.counts.infeasible, 6);
	ASSERT_TRUE(a.best_cost);
	EXPECT_TRUE(eval_formula(*q.base.logic, a.best_trajectory, cfg.feas_tol));
	EXPECT_EQ(a.logic_failures, 0);
	for (const TrialResult &t : a.trials) {
		if (t.feasible) {
			EXPECT_GE(t.cost, *a.best_cost);
		}
	}
	EXPECT_LE(*a.median_time_feasible, a.max_time);
}

TEST(RunTrials, OptimalSplitUsesRelativeTolerance)
{
	auto q = quadrotor::build_problem1();
	TrialConfig cfg;
	cfg.n_trials = 6;
	cfg.seed = 3;
	cfg.opt_rel_tol = 1e9;
	BenchReport r = run_trials(q.base, cfg);
	EXPECT_EQ(r.counts.suboptimal, 0);
	EXPECT_EQ(r.counts.optimal, r.feasible());
}

TEST(InitialGuess, UniformMode)
{
	auto q = quadrotor::build_problem1();
	NlpProblem p = assemble(q.base, Encoding::Smoothed);
	const TrajectoryLayout &t = *p.trajectory;
	auto rng = trial_rng(1, 2);
	auto z = random_initial_guess(p, rng, InitialGuess::Uniform);
	ASSERT_EQ(z.size(), p.vars.count);
	std::vector<double> u(z.begin() + 66, z.begin() + 86);
	for (double v : u) {
		EXPECT_GE(v, -2.0);
		EXPECT_LE(v, 2.0);
	}
	auto roll = t.rollout(u);
	for (std::size_t i = 0; i < 86; ++i)
		EXPECT_EQ(z[i], roll[i]);
	for (const SimplexBlock &b : p.simplex_blocks) {
		double s = 0.0;
		for (std::size_t k = b.begin; k < b.end(); ++k) {
			EXPECT_GE(z[k], 0.0);
			s += z[k];
		}
		EXPECT_NEAR(s, 1.0, 1e-12);
	}
}

TEST(InitialGuess, NominalModeStaysNearHover)
{
	auto q = quadrotor::build_problem1();
	NlpProblem p = assemble(q.base, Encoding::BigM);
	auto rng = trial_rng(1, 2);
	auto z = random_initial_guess(p, rng, InitialGuess::Nominal, 0.05);
	for (std::size_t i = 66; i < 86; ++i)
		EXPECT_NEAR(z[i], 0.73575, 0.05);
	for (const SimplexBlock &b : p.gate_blocks)
		for (std::size_t k = b.begin; k < b.end(); ++k) {
			EXPECT_GE(z[k], 0.0);
			EXPECT_LE(z[k], 1.0);
		}
}

TEST(InitialGuess, StreamsDependOnSeedAndTrial)
{
	auto a = trial_rng(1, 0), b = trial_rng(1, 0), c = trial_rng(1, 1), d = trial_rng(2, 0);
	auto va = a(), vb = b(), vc = c(), vd = d();
	EXPECT_EQ(va, vb);
	EXPECT_NE(va, vc);
	EXPECT_NE(va, vd);
}
