#pragma once

// Multistart experiment harness: randomized initial guesses, one local solve
// per trial, classification into optimal / sub-optimal / infeasible.

#include "baselines.hpp"
#include "logic.hpp"
#include "nlp.hpp"
#include "solver.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdint>
#include <mutex>
#include <optional>
#include <random>
#include <string>
#include <thread>
#include <vector>

namespace logicsmooth {

/// Nominal: inputs drawn from nominal_input() +- guess_spread (falls back
/// to Uniform without a nominal input). Uniform: inputs uniform within their bounds.
enum class InitialGuess : std::uint8_t { Nominal, Uniform };

inline const char *to_string(InitialGuess g) { return g == InitialGuess::Nominal ? "nominal" : "uniform"; }

struct TrialConfig {
	int n_trials = 100;
	std::uint64_t seed = 0;
	Encoding method = Encoding::Smoothed;
	std::string problem = "p1";
	double feas_tol = 1e-6;
	double opt_rel_tol = 1e-2;
	/// 0 picks std::thread::hardware_concurrency().
	unsigned threads = 0;
	InitialGuess guess = InitialGuess::Nominal;
	double guess_spread = 0.05;
	SolverOptions solver;
	BaselineOptions encoding;
};

struct TrialResult {
	SolveStatus status = SolveStatus::Error;
	double cost = 0.0;
	double seconds = 0.0;
	bool feasible = false;
	/// The (x, u) part satisfies the original logic formula (equalities to feas_tol).
	bool logic_holds = false;
	std::vector<double> point;
	std::string message;
};

struct BenchCounts {
	int optimal = 0;
	int suboptimal = 0;
	int infeasible = 0;

	bool operator==(const BenchCounts &) const = default;
};

struct BenchReport {
	std::string problem;
	Encoding method = Encoding::Smoothed;
	int n_trials = 0;
	std::uint64_t seed = 0;
	BenchCounts counts;
	std::optional<double> avg_cost;
	double avg_time = 0.0;
	std::optional<double> avg_time_feasible;
	std::optional<double> median_time_feasible;
	double max_time = 0.0;
	std::optional<double> best_cost;
	std::optional<std::size_t> best_trial;
	/// (x, u) part of the best feasible solution.
	std::vector<double> best_trajectory;
	/// Feasible runs whose (x, u) part fails the exact logic check.
	int logic_failures = 0;
	std::vector<TrialResult> trials;

	int feasible() const noexcept { return counts.optimal + counts.suboptimal; }
};

/// Independent stream per trial, derived from the master seed only.
inline std::mt19937_64 trial_rng(std::uint64_t seed, std::size_t trial)
{
	std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
	                  static_cast<std::uint32_t>(trial), static_cast<std::uint32_t>(trial >> 32)};
	return std::mt19937_64(seq);
}

/// Inputs per mode, states by forward rollout, simplex weights uniform on
/// each simplex, gates uniform on [0, 1].
inline std::vector<double> random_initial_guess(const NlpProblem &p, std::mt19937_64 &rng,
                                                InitialGuess mode = InitialGuess::Uniform, double spread = 0.0)
{
	std::uniform_real_distribution<double> unit(0.0, 1.0);
	auto uniform_in = [&](double lo, double hi) {
		if (!std::isfinite(lo) || !std::isfinite(hi)) {
			lo = std::isfinite(lo) ? lo : (std::isfinite(hi) ? hi - 2.0 : -1.0);
			hi = std::isfinite(hi) ? hi : lo + 2.0;
		}
		return lo + (hi - lo) * unit(rng);
	};

	std::vector<double> z(p.vars.count, 0.0);
	if (p.trajectory && p.trajectory->dynamics && p.trajectory->num_vars() == p.base_vars) {
		const TrajectoryLayout &t = *p.trajectory;
		std::vector<double> nominal = t.dynamics->nominal_input();
		bool around_nominal = mode == InitialGuess::Nominal && nominal.size() == t.input_dim;
		std::vector<double> u(t.num_input_vars());
		for (std::size_t i = 0; i < u.size(); ++i) {
			std::size_t idx = t.num_state_vars() + i;
			double lo = p.vars.lower[idx], hi = p.vars.upper[idx];
			if (around_nominal) {
				double c = nominal[i % t.input_dim];
				u[i] = std::clamp(uniform_in(c - spread, c + spread), lo, hi);
			} else {
				u[i] = uniform_in(lo, hi);
			}
		}
		auto xu = t.rollout(u);
		std::copy(xu.begin(), xu.end(), z.begin());
	} else {
		for (std::size_t i = 0; i < p.base_vars; ++i)
			z[i] = uniform_in(p.vars.lower[i], p.vars.upper[i]);
	}
	std::exponential_distribution<double> expo(1.0);
	for (const SimplexBlock &b : p.simplex_blocks) {
		double total = 0.0;
		for (std::size_t k = b.begin; k < b.end(); ++k)
			total += z[k] = expo(rng);
		for (std::size_t k = b.begin; k < b.end(); ++k)
			z[k] /= total;
	}
	for (const SimplexBlock &b : p.gate_blocks)
		for (std::size_t k = b.begin; k < b.end(); ++k)
			z[k] = unit(rng);
	return z;
}

inline TrialResult run_single_trial(const NlpProblem &p, const TrialConfig &cfg, std::size_t trial)
{
	auto rng = trial_rng(cfg.seed, trial);
	std::vector<double> z0 = random_initial_guess(p, rng, cfg.guess, cfg.guess_spread);
	SolverOptions so = cfg.solver;
	so.feas_tol = cfg.feas_tol;
	so.seed = cfg.seed;
	SolveReport rep = solve(p, z0, so);

	TrialResult r;
	r.status = rep.status;
	r.cost = rep.cost;
	r.seconds = rep.wall_time.count();
	r.feasible = is_feasible(rep.status);
	r.message = rep.message;
	r.point = std::move(rep.point);
	if (r.feasible) {
		auto xu = base_part(p, r.point);
		try {
			r.logic_holds = !p.logic || eval_formula(*p.logic, xu, cfg.feas_tol);
		} catch (const ExprError &) {
			r.logic_holds = false;
		}
	}
	return r;
}

/// Solves cfg.n_trials randomized instances of an already assembled problem.
/// Results are independent of the number of threads.
inline BenchReport run_trials(const NlpProblem &p, const TrialConfig &cfg)
{
	if (cfg.n_trials < 1)
		throw std::invalid_argument("n_trials must be at least 1");
	const auto n = static_cast<std::size_t>(cfg.n_trials);
	std::vector<TrialResult> results(n);

	unsigned workers = cfg.threads ? cfg.threads : std::max(1u, std::thread::hardware_concurrency());
	workers = static_cast<unsigned>(std::min<std::size_t>(workers, n));
	std::atomic<std::size_t> next{0};
	auto work = [&] {
		for (std::size_t i; (i = next.fetch_add(1)) < n;) {
			try {
				results[i] = run_single_trial(p, cfg, i);
			} catch (const std::exception &e) {
				results[i] = TrialResult{};
				results[i].message = e.what();
			}
		}
	};
	if (workers <= 1) {
		work();
	} else {
		std::vector<std::thread> pool;
		for (unsigned w = 0; w < workers; ++w)
			pool.emplace_back(work);
		for (auto &t : pool)
			t.join();
	}

	BenchReport rep;
	rep.problem = cfg.problem;
	rep.method = cfg.method;
	rep.n_trials = cfg.n_trials;
	rep.seed = cfg.seed;

	for (std::size_t i = 0; i < n; ++i)
		if (results[i].feasible && (!rep.best_cost || results[i].cost < *rep.best_cost)) {
			rep.best_cost = results[i].cost;
			rep.best_trial = i;
		}

	double cost_sum = 0.0, time_sum = 0.0, feas_time_sum = 0.0;
	std::vector<double> feas_times;
	for (const TrialResult &r : results) {
		time_sum += r.seconds;
		rep.max_time = std::max(rep.max_time, r.seconds);
		if (!r.feasible) {
			++rep.counts.infeasible;
			continue;
		}
		if (r.cost <= *rep.best_cost + cfg.opt_rel_tol * std::abs(*rep.best_cost))
			++rep.counts.optimal;
		else
			++rep.counts.suboptimal;
		if (!r.logic_holds)
			++rep.logic_failures;
		cost_sum += r.cost;
		feas_time_sum += r.seconds;
		feas_times.push_back(r.seconds);
	}
	rep.avg_time = time_sum / static_cast<double>(n);
	if (!feas_times.empty()) {
		auto m = static_cast<double>(feas_times.size());
		rep.avg_cost = cost_sum / m;
		rep.avg_time_feasible = feas_time_sum / m;
		std::sort(feas_times.begin(), feas_times.end());
		std::size_t h = feas_times.size() / 2;
		rep.median_time_feasible = feas_times.size() % 2 ? feas_times[h]
		                                                  : 0.5 * (feas_times[h - 1] + feas_times[h]);
	}
	if (rep.best_trial)
		rep.best_trajectory = base_part(p, results[*rep.best_trial].point);
	rep.trials = std::move(results);
	return rep;
}

/// Assembles base with cfg.method and runs the trials.
inline BenchReport run_trials(const BaseOcp &base, const TrialConfig &cfg)
{
	return run_trials(assemble(base, cfg.method, cfg.encoding), cfg);
}

} // namespace logicsmooth
