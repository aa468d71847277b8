// One PASS/FAIL line per acceptance criterion. Exit status 0 only if all pass.

#include "logicsmooth/baselines.hpp"
#include "logicsmooth/bench.hpp"
#include "logicsmooth/dsl.hpp"
#include "logicsmooth/io.hpp"
#include "logicsmooth/quadrotor.hpp"
#include "logicsmooth/transform.hpp"

#include "generators.hpp"
#include "oracles.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <functional>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

using namespace logicsmooth;

namespace {

using Clock = std::chrono::steady_clock;

struct Outcome {
	bool pass = false;
	std::string detail;
};

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(const char *f, auto... args)
{
	char buf[512];
	std::snprintf(buf, sizeof buf, f, args...);
	return buf;
}

constexpr double eps = 1e-3;
constexpr double tol = 1e-6;

Outcome maxmin_equivalence()
{
	auto t0 = Clock::now();
	gen::Rng rng(1001);
	long compared = 0, mismatches = 0;
	for (int trial = 0; trial < 10000; ++trial) {
		Formula f = gen::formula(rng);
		Formula nnf = to_nnf(eliminate_equalities(f), EpsilonPolicy(eps));
		MaxMinForm m = to_cnf(nnf);
		Expr direct = flatten_direct(nnf);
		for (int k = 0; k < 10; ++k) {
			auto z = gen::point(rng, 6);
			if (gen::in_band(f, z, eps))
				continue;
			bool truth = eval_formula(f, z);
			mismatches += truth != (eval_maxmin(m, z) <= 0.0);
			mismatches += truth != (eval(direct, z) <= 0.0);
			++compared;
		}
	}
	double s = seconds_since(t0);
	return {mismatches == 0 && compared > 50000 && s < 30.0,
	        fmt("%ld points compared, %ld mismatches, %.1f s", compared, mismatches, s)};
}

Outcome smoothing_sound_and_complete()
{
	auto t0 = Clock::now();
	gen::Rng rng(1002);
	long sound_checked = 0, sound_bad = 0, complete_checked = 0, complete_bad = 0;
	for (int trial = 0; trial < 10000; ++trial) {
		Formula f = gen::formula(rng);
		MaxMinForm m = logic_to_maxmin(f, EqualityMode::Split, EpsilonPolicy(eps));
		SmoothedSet s = smooth(m, 6);
		auto z = gen::point(rng, 6);
		double value = eval_maxmin(m, z);

		std::vector<double> full = z;
		for (const SimplexBlock &b : s.blocks) {
			auto w = gen::simplex(rng, b.size);
			full.insert(full.end(), w.begin(), w.end());
		}
		bool all_ok = std::ranges::all_of(s.constraints, [&](const Expr &c) { return eval(c, full) <= 0.0; });
		if (all_ok) {
			++sound_checked;
			sound_bad += value > 0.0;
		}
		if (value <= 0.0) {
			++complete_checked;
			auto lambda = vertex_certificate(m, s, z);
			std::vector<double> cert = z;
			cert.insert(cert.end(), lambda.begin(), lambda.end());
			complete_bad += !std::ranges::all_of(s.constraints, [&](const Expr &c) { return eval(c, cert) <= 0.0; });
		}
	}
	double s = seconds_since(t0);
	return {sound_bad == 0 && complete_bad == 0 && sound_checked > 0 && complete_checked > 0 && s < 30.0,
	        fmt("(a) %ld/%ld sound, (b) %ld/%ld certified, %.1f s", sound_checked - sound_bad, sound_checked,
	            complete_checked - complete_bad, complete_checked, s)};
}

Outcome gate_enumeration()
{
	gen::Rng rng(1003);
	long disagreements = 0, truths = 0;
	for (int trial = 0; trial < 10000; ++trial) {
		MaxMinForm m;
		for (std::size_t i = 1 + gen::pick(rng, 3); i > 0; --i) {
			m.clauses.emplace_back();
			for (std::size_t j = 1 + gen::pick(rng, 4); j > 0; --j)
				m.clauses.back().push_back(gen::proposition_function(rng, 4));
		}
		auto z = gen::point(rng, 4);
		bool want = eval_maxmin(m, z) <= 0.0;
		truths += want;
		disagreements += oracle::gates_exist(encode_bigm(m, 1000.0, 4), z) != want;
		disagreements += oracle::gates_exist(encode_complementarity(m, 1000.0, 4), z) != want;
	}
	return {disagreements == 0, fmt("10000 points (%ld true), %ld disagreements", truths, disagreements)};
}

Outcome gradient_check()
{
	gen::Rng rng(1004);
	double worst = 0.0;
	long components = 0;
	for (int trial = 0; trial < 1000; ++trial) {
		const std::size_t n = 1 + gen::pick(rng, 5);
		Expr e = gen::smooth_expr(rng, n, 6);
		std::vector<double> z(n);
		for (double &v : z)
			v = gen::uniform(rng, -1.5, 1.5);
		auto g = grad(e, z);
		auto fd = oracle::central_difference(e, z);
		for (std::size_t i = 0; i < n; ++i, ++components) {
			double err = std::abs(g[i] - fd[i]);
			// Absolute below 1e-8, otherwise relative to the larger magnitude.
			double rel = err <= 1e-8 ? 0.0 : err / std::max(std::abs(g[i]), std::abs(fd[i]));
			worst = std::max(worst, rel);
		}
	}
	return {worst <= 1e-6, fmt("%ld components, worst relative error %.2e", components, worst)};
}

Outcome dynamics()
{
	quadrotor::QuadParams p;
	TrajectoryLayout t = quadrotor::make_layout(p);
	auto hover = t.rollout(std::vector<double>(t.num_input_vars(), p.hover_thrust()));
	double drift = 0.0;
	for (std::size_t i = 0; i < t.num_state_vars(); ++i)
		drift = std::max(drift, std::abs(hover[i]));
	auto fall = t.rollout(std::vector<double>(t.num_input_vars(), 0.0));
	double v = fall[t.state_index(1, 3)], h = fall[t.state_index(1, 2)];
	bool ok = drift <= 1e-12 && std::abs(v + 2.4525) <= 1e-12 && std::abs(h + 0.3065625) <= 1e-12;
	return {ok, fmt("hover drift %.1e over N = %zu, free fall x4 = %.10g, x3 = %.10g", drift, t.horizon, v, h)};
}

Outcome count_identity()
{
	gen::Rng rng(1006);
	int bad = 0;
	for (int trial = 0; trial < 1000; ++trial) {
		Formula f = gen::formula(rng);
		BaseOcp b;
		for (std::size_t i = 0; i < 6; ++i)
			b.vars.add();
		b.cost = pow(Expr::variable(0), 2);
		b.ineqs = {Expr::variable(0) - 10.0};
		b.eqs = {Expr::variable(1) - Expr::variable(0)};
		b.logic = f;
		NlpProblem p = assemble_smooth_ocp(b);
		auto size = oracle::cnf_size(f);
		bad += p.counted_ineqs() != b.ineqs.size() + size.clauses + size.literals;
		bad += p.counted_eqs() != b.eqs.size() + size.clauses;
	}
	return {bad == 0, fmt("1000 formulas, %d mismatches", bad)};
}

TrialConfig config(const std::string &problem, Encoding method, std::uint64_t seed)
{
	TrialConfig cfg;
	cfg.problem = problem;
	cfg.method = method;
	cfg.seed = seed;
	cfg.n_trials = 100;
	cfg.feas_tol = tol;
	return cfg;
}

/// Feasible runs checked against the plain-language statement of the problem.
int prose_failures(const BenchReport &r, const TrajectoryLayout &t,
                   const std::function<bool(const TrajectoryLayout &, std::span<const double>, double)> &prose)
{
	int bad = r.logic_failures;
	for (const TrialResult &tr : r.trials)
		if (tr.feasible && !prose(t, tr.point, tol))
			++bad;
	return bad;
}

struct ProblemOneRuns {
	std::vector<BenchReport> seeds;
	std::vector<double> seconds;
};

Outcome problem_one(ProblemOneRuns &runs)
{
	auto q = quadrotor::build_problem1();
	const TrajectoryLayout &t = *q.base.trajectory;
	for (std::uint64_t seed = 0; seed < 5; ++seed) {
		auto t0 = Clock::now();
		runs.seeds.push_back(run_trials(q.base, config("p1", Encoding::Smoothed, seed)));
		runs.seconds.push_back(seconds_since(t0));
	}
	const BenchReport &r = runs.seeds[0];
	int logic_bad = 0;
	for (const BenchReport &s : runs.seeds)
		logic_bad += prose_failures(s, t, oracle::problem1_prose);
	bool through_trigger = false;
	if (r.best_cost) {
		const auto &z = r.best_trajectory;
		through_trigger = eval(quadrotor::problem1_trigger(t, 2), z) <= tol ||
		                  eval(quadrotor::problem1_trigger(t, 3), z) <= tol;
	}
	double lo = std::numeric_limits<double>::infinity(), hi = -lo;
	for (const BenchReport &s : runs.seeds)
		if (s.best_cost) {
			lo = std::min(lo, *s.best_cost);
			hi = std::max(hi, *s.best_cost);
		}
	double spread = (hi - lo) / lo;
	double worst_time = *std::ranges::max_element(runs.seconds);
	bool ok = r.feasible() >= 70 && logic_bad == 0 && through_trigger && spread <= 0.01 && worst_time < 180.0;
	return {ok, fmt("feasible %d/100, logic failures %d, trigger %s, best %.4f, seed spread %.3f%%, "
	                "slowest seed %.1f s",
	                r.feasible(), logic_bad, through_trigger ? "yes" : "no", r.best_cost.value_or(NAN),
	                100.0 * spread, worst_time)};
}

Outcome baseline_comparison(const BenchReport &smoothed)
{
	auto q = quadrotor::build_problem1();
	BenchReport bigm = run_trials(q.base, config("p1", Encoding::BigM, 0));
	BenchReport comp = run_trials(q.base, config("p1", Encoding::Complementarity, 0));
	std::ostringstream table;
	std::vector<BenchReport> all{smoothed, bigm, comp};
	emit_table(all, table);
	std::printf("%s", table.str().c_str());

	constexpr double inf = std::numeric_limits<double>::infinity();
	bool rates = smoothed.feasible() >= bigm.feasible() && smoothed.feasible() >= comp.feasible();
	// No feasible Big-M run means its median time is unbounded.
	double ms = smoothed.median_time_feasible.value_or(inf), mb = bigm.median_time_feasible.value_or(inf);
	bool faster = ms < mb;
	return {rates && faster, fmt("(a) feasible smoothed %d, bigm %d (%d break the logic), comp %d (%d break the "
	                             "logic); (b) median feasible time smoothed %.3f s, bigm %s",
	                             smoothed.feasible(), bigm.feasible(), bigm.logic_failures, comp.feasible(),
	                             comp.logic_failures, ms,
	                             bigm.median_time_feasible ? fmt("%.3f s", mb).c_str() : "none feasible")};
}

Outcome problem_two()
{
	auto q = quadrotor::build_problem2();
	const TrajectoryLayout &t = *q.base.trajectory;
	auto t0 = Clock::now();
	BenchReport r = run_trials(q.base, config("p2", Encoding::Smoothed, 0));
	double s = seconds_since(t0);
	int endpoint_bad = 0, green = 0, green_without_trigger = 0;
	const std::size_t N = t.horizon;
	for (const TrialResult &tr : r.trials) {
		if (!tr.feasible)
			continue;
		double px = tr.point[t.state_index(N, 0)], py = tr.point[t.state_index(N, 2)];
		bool black = std::abs(px) <= 1e-4 && std::abs(py - 15.0) <= 1e-4;
		bool is_green = std::abs(px - 3.0) <= 1e-4 && std::abs(py - 5.0) <= 1e-4;
		endpoint_bad += black == is_green;
		if (is_green) {
			++green;
			green_without_trigger += eval(quadrotor::problem2_trigger(t, 3), tr.point) > tol;
		}
	}
	int logic_bad = prose_failures(r, t, oracle::problem2_prose);
	bool ok = r.feasible() >= 60 && endpoint_bad == 0 && green_without_trigger == 0 && logic_bad == 0 && s < 300.0;
	return {ok, fmt("feasible %d/100, bad endpoints %d, green %d (without trigger %d), logic failures %d, %.1f s",
	                r.feasible(), endpoint_bad, green, green_without_trigger, logic_bad, s)};
}

Outcome problem_files()
{
	int structural = 0, disagreements = 0;
	for (const char *name : {"p1", "p2"}) {
		std::string file = std::string(LOGICSMOOTH_SOURCE_DIR) + "/problems/problem" + (name[1] == '1' ? "1" : "2") + ".lc";
		BaseOcp parsed = parse_problem(read_file(file));
		auto built = quadrotor::build_problem(name);
		structural += !structurally_equal(parsed, built.base);
		const TrajectoryLayout &t = *built.base.trajectory;
		auto prose = name[1] == '1' ? oracle::problem1_prose : oracle::problem2_prose;
		gen::Rng rng(1010);
		for (int trial = 0; trial < 1000; ++trial) {
			std::vector<double> z(t.num_vars());
			for (double &a : z)
				a = gen::uniform(rng, -6.0, 16.0);
			for (std::size_t k = 0; k <= t.horizon; ++k)
				if (gen::coin(rng, 0.3)) {
					z[t.state_index(k, 0)] = gen::uniform(rng, -4.0, 4.0);
					z[t.state_index(k, 2)] = gen::uniform(rng, 0.0, 10.0);
				}
			if (gen::coin(rng)) {
				bool green = gen::coin(rng);
				z[t.state_index(t.horizon, 0)] = green ? 3.0 : 0.0;
				z[t.state_index(t.horizon, 2)] = green ? 5.0 : 15.0;
			}
			disagreements += eval_formula(*parsed.logic, z) != prose(t, z, 0.0);
			disagreements += eval(parsed.cost, z) != eval(built.base.cost, z);
		}
	}
	return {structural == 0 && disagreements == 0,
	        fmt("structural mismatches %d, disagreements on 2 x 1000 points %d", structural, disagreements)};
}

} // namespace

int main()
{
	int failed = 0;
	auto report = [&](int id, const char *name, const Outcome &o) {
		std::printf("%s %2d %s: %s\n", o.pass ? "PASS" : "FAIL", id, name, o.detail.c_str());
		std::fflush(stdout);
		failed += !o.pass;
	};
	report(1, "max-min and direct forms match the logic", maxmin_equivalence());
	report(2, "smoothed constraints are sound and complete", smoothing_sound_and_complete());
	report(3, "gate encodings match by enumeration", gate_enumeration());
	report(4, "gradients match central differences", gradient_check());
	report(5, "quadrotor dynamics", dynamics());
	report(6, "constraint count identity", count_identity());
	ProblemOneRuns p1;
	report(7, "problem 1 multistart", problem_one(p1));
	report(8, "smoothed encoding against baselines", baseline_comparison(p1.seeds[0]));
	report(9, "problem 2 multistart", problem_two());
	report(10, "problem files reproduce the built problems", problem_files());
	std::printf("%d of 10 criteria failed\n", failed);
	return failed == 0 ? 0 : 1;
}
