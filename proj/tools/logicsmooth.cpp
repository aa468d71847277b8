// logicsmooth: command line front end.
//
// Exit codes: 0 success, 1 no feasible point found, 2 usage or input error,
// 3 internal or I/O error.

#include "logicsmooth/dsl.hpp"
#include "logicsmooth/io.hpp"

#include <CLI11.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

using namespace logicsmooth;

namespace {

enum Exit : int { Ok = 0, NoFeasible = 1, BadInput = 2, Internal = 3 };

struct Settings {
	std::string problem;
	std::string method = "smoothed";
	std::string sharing = "per_clause";
	double epsilon = EpsilonPolicy{}.epsilon;
	double big_m = BaselineOptions{}.big_m;
	std::uint64_t seed = 0;
	int trials = 100;
	unsigned threads = 0;
	std::string guess = "nominal";
	double spread = 0.05;
	std::string hessian = "exact";
	SolverOptions solver;
	bool dump = false;
	bool json = false;
	std::string csv;
	std::string json_out;
	std::string point;
};

struct Loaded {
	BaseOcp base;
	std::vector<quadrotor::Circle> geometry;
};

Loaded load_problem(const std::string &name)
{
	if (name == "p1" || name == "p2") {
		auto ocp = quadrotor::build_problem(name);
		return {std::move(ocp.base), std::move(ocp.geometry)};
	}
	if (!std::filesystem::exists(name))
		throw IoError(name, "no such file (bundled problems are p1 and p2)");
	return {parse_problem(read_file(name)), {}};
}

BaselineOptions encoding_options(const Settings &s)
{
	BaselineOptions o;
	o.big_m = s.big_m;
	o.pipeline.epsilon = EpsilonPolicy(s.epsilon);
	o.pipeline.sharing = s.sharing == "shared_all" ? LambdaSharing::shared_all() : LambdaSharing::per_clause();
	return o;
}

SolverOptions solver_options(const Settings &s)
{
	SolverOptions o = s.solver;
	o.hessian = s.hessian == "bfgs" ? HessianMode::Bfgs : HessianMode::Exact;
	o.seed = s.seed;
	return o;
}

InitialGuess guess_mode(const Settings &s)
{
	return s.guess == "uniform" ? InitialGuess::Uniform : InitialGuess::Nominal;
}

std::vector<Encoding> methods(const Settings &s)
{
	if (s.method == "all")
		return {Encoding::Smoothed, Encoding::BigM, Encoding::Complementarity};
	return {*parse_encoding(s.method)};
}

void write_text(const std::string &path, const std::string &text)
{
	std::ofstream f(path);
	if (!f)
		throw IoError(path, "cannot open for writing");
	f << text;
	if (!f)
		throw IoError(path, "write failed");
}

/// A trajectory CSV (as written by solve --csv) or a plain list of numbers.
std::vector<double> load_point(const std::string &path, const BaseOcp &base)
{
	std::string text = read_file(path);
	std::vector<double> z;
	if (text.starts_with("k,")) {
		if (!base.trajectory)
			throw std::invalid_argument(path + ": trajectory file given for a problem without dynamics");
		Trajectory t = parse_trajectory(text);
		const TrajectoryLayout &l = *base.trajectory;
		if (t.states.size() != l.horizon + 1 || t.states[0].size() != l.state_dim ||
		    t.inputs[0].size() != l.input_dim)
			throw std::invalid_argument(path + ": trajectory shape does not match the problem");
		z.assign(l.num_vars(), 0.0);
		for (std::size_t k = 0; k <= l.horizon; ++k)
			for (std::size_t j = 0; j < l.state_dim; ++j)
				z[l.state_index(k, j)] = t.states[k][j];
		for (std::size_t k = 0; k < l.horizon; ++k)
			for (std::size_t j = 0; j < l.input_dim; ++j)
				z[l.input_index(k, j)] = t.inputs[k][j];
	} else {
		for (char &c : text)
			if (c == ',')
				c = ' ';
		std::istringstream in(text);
		for (double v; in >> v;)
			z.push_back(v);
		if (!in.eof())
			throw std::invalid_argument(path + ": expected numbers separated by spaces or commas");
	}
	if (z.size() != base.vars.count)
		throw std::invalid_argument(path + ": point has " + std::to_string(z.size()) + " entries, problem has " +
		                            std::to_string(base.vars.count) + " variables");
	return z;
}

int run_check(const Settings &s)
{
	Loaded p = load_problem(s.problem);
	std::cout << "variables:    " << p.base.vars.count << '\n'
	          << "equalities:   " << p.base.eqs.size() << '\n'
	          << "inequalities: " << p.base.ineqs.size() << '\n'
	          << "logic:        " << (p.base.logic ? "yes" : "no") << '\n';
	if (p.base.trajectory)
		std::cout << "dynamics:     " << p.base.trajectory->dynamics->describe() << ", horizon "
		          << p.base.trajectory->horizon << '\n';
	if (s.point.empty())
		return Ok;

	std::vector<double> z = load_point(s.point, p.base);
	NlpProblem nlp = assemble(p.base, Encoding::Smoothed, encoding_options(s));
	double eq = 0.0, in = 0.0;
	for (const Expr &h : p.base.eqs)
		eq = std::max(eq, std::abs(eval(h, z)));
	for (const Expr &g : p.base.ineqs)
		in = std::max(in, eval(g, z));
	std::cout << "max |h|:      " << eq << '\n' << "max g:        " << in << '\n';
	if (!p.base.logic)
		return Ok;
	bool holds = eval_formula(*p.base.logic, z, s.solver.feas_tol);
	std::cout << "logic holds:  " << (holds ? "yes" : "no") << '\n'
	          << "max-min:      " << eval_maxmin(nlp.logic_form, z) << '\n'
	          << check_regularity(nlp, z).to_string();
	return holds ? Ok : NoFeasible;
}

int run_transform(const Settings &s)
{
	Loaded p = load_problem(s.problem);
	for (Encoding e : methods(s)) {
		NlpProblem nlp = assemble(p.base, e, encoding_options(s));
		std::cout << to_string(e) << ": " << nlp.vars.count << " variables, " << nlp.ineqs.size()
		          << " inequalities, " << nlp.eqs.size() << " equalities, " << nlp.logic_form.num_clauses()
		          << " clauses, " << nlp.logic_form.num_literals() << " literals\n";
		if (s.dump) {
			if (p.base.logic)
				std::cout << "nnf: "
				          << dump(to_nnf(eliminate_equalities(*p.base.logic), EpsilonPolicy(s.epsilon)), &nlp.vars)
				          << '\n';
			std::cout << dump(nlp.logic_form, &nlp.vars);
			for (std::size_t i = nlp.base_ineqs; i < nlp.ineqs.size(); ++i)
				std::cout << "g" << i << ": " << dump(nlp.ineqs[i], &nlp.vars) << " <= 0\n";
			for (std::size_t i = nlp.base_eqs; i < nlp.eqs.size(); ++i)
				std::cout << "h" << i << ": " << dump(nlp.eqs[i], &nlp.vars) << " = 0\n";
		}
	}
	return Ok;
}

int run_solve(const Settings &s)
{
	Loaded p = load_problem(s.problem);
	NlpProblem nlp = assemble(p.base, methods(s).front(), encoding_options(s));
	auto rng = trial_rng(s.seed, 0);
	std::vector<double> z0 = random_initial_guess(nlp, rng, guess_mode(s), s.spread);
	SolveReport rep = solve(nlp, z0, solver_options(s));
	bool logic = !nlp.logic || eval_formula(*nlp.logic, base_part(nlp, rep.point), s.solver.feas_tol);
	if (s.json) {
		auto j = to_json(rep);
		j["logic_holds"] = logic;
		std::cout << j.dump(2) << '\n';
	} else {
		std::cout << "status:        " << to_string(rep.status) << '\n'
		          << "cost:          " << rep.cost << '\n'
		          << "violation:     " << std::max(rep.max_ineq_violation, rep.max_eq_violation) << '\n'
		          << "stationarity:  " << rep.stationarity << '\n'
		          << "iterations:    " << rep.iterations << " (" << rep.outer_iterations << " outer)\n"
		          << "time:          " << rep.wall_time.count() * 1e3 << " ms\n"
		          << "logic holds:   " << (logic ? "yes" : "no") << '\n';
		if (!rep.message.empty())
			std::cout << "message:       " << rep.message << '\n';
	}
	if (!s.csv.empty() && nlp.trajectory)
		emit_trajectory(make_trajectory(*nlp.trajectory, rep.point, p.geometry), s.csv);
	return is_feasible(rep.status) ? Ok : NoFeasible;
}

int run_bench(const Settings &s)
{
	Loaded p = load_problem(s.problem);
	std::vector<BenchReport> reports;
	for (Encoding e : methods(s)) {
		TrialConfig cfg;
		cfg.n_trials = s.trials;
		cfg.seed = s.seed;
		cfg.method = e;
		cfg.problem = s.problem;
		cfg.feas_tol = s.solver.feas_tol;
		cfg.threads = s.threads;
		cfg.guess = guess_mode(s);
		cfg.guess_spread = s.spread;
		cfg.solver = solver_options(s);
		cfg.encoding = encoding_options(s);
		reports.push_back(run_trials(p.base, cfg));
	}
	emit_table(reports, std::cout);
	for (const BenchReport &r : reports) {
		if (r.best_cost)
			std::cout << to_string(r.method) << ": best cost " << *r.best_cost << " (trial " << *r.best_trial << ")";
		else
			std::cout << to_string(r.method) << ": no feasible run";
		if (r.logic_failures)
			std::cout << ", " << r.logic_failures << " feasible runs violate the logic";
		std::cout << '\n';
	}
	if (!s.json_out.empty()) {
		nlohmann::json j = nlohmann::json::array();
		for (const BenchReport &r : reports)
			j.push_back(to_json(r, true));
		write_text(s.json_out, j.dump(2) + "\n");
	}
	const BenchReport &first = reports.front();
	if (!s.csv.empty() && first.best_trial && p.base.trajectory)
		emit_trajectory(make_trajectory(*p.base.trajectory, first.best_trajectory, p.geometry), s.csv);
	for (const BenchReport &r : reports)
		if (r.feasible() > 0)
			return Ok;
	return NoFeasible;
}

void add_problem(CLI::App *cmd, Settings &s)
{
	cmd->add_option("problem", s.problem, "p1, p2 or a problem file")->required();
}

void add_encoding(CLI::App *cmd, Settings &s, bool allow_all)
{
	std::vector<std::string> names{"smoothed", "bigm", "comp"};
	if (allow_all)
		names.push_back("all");
	cmd->add_option("-m,--method", s.method, "Logic encoding")->check(CLI::IsMember(names))->capture_default_str();
	cmd->add_option("--epsilon", s.epsilon, "Margin for negated inequalities")
		->check(CLI::PositiveNumber)
		->capture_default_str();
	cmd->add_option("--big-m", s.big_m, "Gate constant of the baseline encodings")
		->check(CLI::PositiveNumber)
		->capture_default_str();
	cmd->add_option("--sharing", s.sharing, "Simplex weight sharing")
		->check(CLI::IsMember({"per_clause", "shared_all"}))
		->capture_default_str();
}

void add_solver(CLI::App *cmd, Settings &s)
{
	cmd->add_option("--seed", s.seed, "Random seed")->capture_default_str();
	cmd->add_option("--guess", s.guess, "Initial inputs: around hover or uniform in bounds")
		->check(CLI::IsMember({"nominal", "uniform"}))
		->capture_default_str();
	cmd->add_option("--spread", s.spread, "Half width of the nominal input perturbation")
		->check(CLI::NonNegativeNumber)
		->capture_default_str();
	cmd->add_option("--feas-tol", s.solver.feas_tol, "Feasibility tolerance")
		->check(CLI::PositiveNumber)
		->capture_default_str();
	cmd->add_option("--stat-tol", s.solver.stat_tol, "Stationarity tolerance")
		->check(CLI::PositiveNumber)
		->capture_default_str();
	cmd->add_option("--max-outer", s.solver.outer_max_iter, "Outer (multiplier) iterations")
		->check(CLI::PositiveNumber)
		->capture_default_str();
	cmd->add_option("--max-inner", s.solver.inner_max_iter, "Newton iterations per outer iteration")
		->check(CLI::PositiveNumber)
		->capture_default_str();
	cmd->add_option("--hessian", s.hessian, "Hessian model")
		->check(CLI::IsMember({"exact", "bfgs"}))
		->capture_default_str();
	cmd->add_option("--simplex-floor", s.solver.simplex_floor, "Initial floor on simplex weights, fraction of 1/k")
		->check(CLI::Range(0.0, 0.999))
		->capture_default_str();
}

} // namespace

int main(int argc, char **argv)
{
	Settings s;
	CLI::App app{"Smooth reformulation of logic constraints in trajectory optimization", "logicsmooth"};
	app.require_subcommand(1);
	app.set_config("--config", "", "TOML/INI file with option defaults")->envname("LOGICSMOOTH_CONFIG");

	auto *check = app.add_subcommand("check", "Parse a problem; with --point, evaluate the logic there");
	add_problem(check, s);
	check->add_option("--point", s.point, "Trajectory CSV or whitespace-separated (x, u) values");
	check->add_option("--epsilon", s.epsilon, "Margin for negated inequalities")
		->check(CLI::PositiveNumber)
		->capture_default_str();
	check->add_option("--feas-tol", s.solver.feas_tol, "Tolerance for equality propositions")
		->check(CLI::PositiveNumber)
		->capture_default_str();

	auto *transform = app.add_subcommand("transform", "Print the encoded logic constraints");
	add_problem(transform, s);
	add_encoding(transform, s, true);
	transform->add_flag("--dump", s.dump, "Print every clause and generated row");

	auto *solve_cmd = app.add_subcommand("solve", "Solve once from a random initial guess");
	add_problem(solve_cmd, s);
	add_encoding(solve_cmd, s, false);
	add_solver(solve_cmd, s);
	solve_cmd->add_flag("--json", s.json, "Print the report as JSON");
	solve_cmd->add_option("--csv", s.csv, "Write the trajectory as CSV");

	auto *bench = app.add_subcommand("bench", "Multistart benchmark");
	add_problem(bench, s);
	add_encoding(bench, s, true);
	add_solver(bench, s);
	bench->add_option("-n,--trials", s.trials, "Number of trials")->check(CLI::PositiveNumber)->capture_default_str();
	bench->add_option("--threads", s.threads, "Worker threads, 0 for all cores")->capture_default_str();
	bench->add_option("--json", s.json_out, "Write all reports as JSON");
	bench->add_option("--csv", s.csv, "Write the best trajectory of the first method as CSV");

	auto *demo = app.add_subcommand("demo", "Multistart on a bundled problem with default settings");
	demo->add_option("problem", s.problem, "p1 or p2")->required()->check(CLI::IsMember({"p1", "p2"}));
	demo->add_option("-m,--method", s.method, "Logic encoding")
		->check(CLI::IsMember({"smoothed", "bigm", "comp", "all"}))
		->capture_default_str();
	demo->add_option("-n,--trials", s.trials, "Number of trials")->check(CLI::PositiveNumber)->capture_default_str();
	demo->add_option("--seed", s.seed, "Random seed")->capture_default_str();
	demo->add_option("--csv", s.csv, "Best trajectory CSV (default: <problem>_best.csv)");

	try {
		app.parse(argc, argv);
	} catch (const CLI::ParseError &e) {
		int code = app.exit(e);
		return code == 0 ? Ok : BadInput;
	}

	try {
		if (*check)
			return run_check(s);
		if (*transform)
			return run_transform(s);
		if (*solve_cmd)
			return run_solve(s);
		if (*demo && s.csv.empty())
			s.csv = s.problem + "_best.csv";
		return run_bench(s);
	} catch (const IoError &e) {
		std::cerr << "error: " << e.what() << '\n';
		return Internal;
	} catch (const ParseError &e) {
		std::cerr << "error: " << s.problem << ", " << e.what() << '\n';
		return BadInput;
	} catch (const std::invalid_argument &e) {
		std::cerr << "error: " << e.what() << '\n';
		return BadInput;
	} catch (const std::exception &e) {
		std::cerr << "internal error: " << e.what() << '\n';
		return Internal;
	}
}
