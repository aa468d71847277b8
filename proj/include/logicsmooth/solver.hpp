#pragma once

// Bundled NLP backend: augmented Lagrangian outer loop around a
// bound-constrained quasi-Newton inner solver.
//
// Inequalities g(z) <= 0 enter through the Powell-Hestenes-Rockafellar term
// (max(0, mu + rho g)^2 - mu^2) / (2 rho), equalities through
// nu h + rho/2 h^2. Variable bounds are handled by projection.
//
// The inner model Hessian is L + rho * sum_active grad c grad c^T, where L is
// the exact Hessian of the Lagrangian (forward-over-reverse on each row) or a
// damped BFGS estimate of it. Indefinite models are shifted until positive
// definite. Steps are projected Newton steps on the variables away from
// active bounds.
//
// Inequalities are solved with a back-off (g + backoff <= 0) so that a point
// reported feasible to within feas_tol satisfies the original rows exactly
// whenever backoff >= feas_tol.

#include "expr.hpp"
#include "nlp.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

namespace logicsmooth {

enum class HessianMode : std::uint8_t { Exact, Bfgs };

struct SolverOptions {
	double feas_tol = 1e-6;
	double stat_tol = 1e-6;
	int inner_max_iter = 500;
	int outer_max_iter = 50;
	double penalty_init = 10.0;
	double penalty_growth = 10.0;
	double penalty_max = 1e10;
	double ineq_backoff = 1e-6;
	HessianMode hessian = HessianMode::Exact;
	/// Lower bound on simplex weights in the first outer iteration, as a
	/// fraction of the uniform weight 1/k; divided by ten in each later one.
	/// Keeps every literal of a clause in play while the penalty is small.
	double simplex_floor = 0.6;
	/// Recorded in reports; the solver itself is deterministic.
	std::uint64_t seed = 0;
};

enum class SolveStatus : std::uint8_t { FeasibleOptimalCandidate, Feasible, Infeasible, Error };

inline const char *to_string(SolveStatus s)
{
	switch (s) {
	case SolveStatus::FeasibleOptimalCandidate: return "feasible_optimal_candidate";
	case SolveStatus::Feasible: return "feasible";
	case SolveStatus::Infeasible: return "infeasible";
	case SolveStatus::Error: return "error";
	}
	return "?";
}

inline bool is_feasible(SolveStatus s)
{
	return s == SolveStatus::FeasibleOptimalCandidate || s == SolveStatus::Feasible;
}

struct SolveReport {
	SolveStatus status = SolveStatus::Error;
	std::vector<double> point;
	double cost = std::numeric_limits<double>::quiet_NaN();
	double max_ineq_violation = std::numeric_limits<double>::infinity();
	double max_eq_violation = std::numeric_limits<double>::infinity();
	double stationarity = std::numeric_limits<double>::infinity();
	int iterations = 0;
	int outer_iterations = 0;
	std::chrono::duration<double> wall_time{0};
	std::vector<double> ineq_multipliers;
	std::vector<double> eq_multipliers;
	std::string message;
};

struct KktResiduals {
	double stationarity = 0.0;
	double complementarity = 0.0;
	double ineq_violation = 0.0;
	double eq_violation = 0.0;
};

namespace detail {

/// Sparse gradient of one row: gradient values at the row's variable support.
struct SparseRow {
	std::vector<std::uint32_t> index;
	std::vector<double> value;
};

/// One tape per row (cost, inequalities, equalities) so that row gradients
/// only touch their own subgraph.
class ProblemEvaluator {
public:
	explicit ProblemEvaluator(const NlpProblem &p)
		: n_(p.vars.count), n_in_(p.ineqs.size()), n_eq_(p.eqs.size())
	{
		std::vector<Expr> rows;
		rows.reserve(1 + n_in_ + n_eq_);
		rows.push_back(p.cost);
		rows.insert(rows.end(), p.ineqs.begin(), p.ineqs.end());
		rows.insert(rows.end(), p.eqs.begin(), p.eqs.end());
		tapes_.reserve(rows.size());
		for (std::size_t i = 0; i < rows.size(); ++i) {
			if (std::string path = find_nonsmooth(rows[i]); !path.empty())
				throw NotDifferentiable("row " + std::to_string(i) + " " + path);
			tapes_.emplace_back(std::span<const Expr>(&rows[i], 1));
			if (tapes_.back().variable_extent() > n_)
				throw DimensionError("row " + std::to_string(i) + " references a variable beyond VarSpace.count");
			ws_.push_back(tapes_.back().workspace());
			support_.push_back(collect_support(rows[i]));
		}
		values_.assign(rows.size(), 0.0);
		scratch_.assign(n_, 0.0);
	}

	std::size_t n() const noexcept { return n_; }
	std::size_t n_ineq() const noexcept { return n_in_; }
	std::size_t n_eq() const noexcept { return n_eq_; }
	std::size_t n_rows() const noexcept { return tapes_.size(); }

	/// Row 0 is the cost, rows 1..n_ineq the inequalities, then the equalities.
	void forward(std::span<const double> z)
	{
		for (std::size_t r = 0; r < tapes_.size(); ++r) {
			tapes_[r].forward(z, ws_[r]);
			values_[r] = tapes_[r].output(ws_[r], 0);
		}
	}

	double value(std::size_t row) const { return values_[row]; }
	double cost() const { return values_[0]; }
	double ineq(std::size_t i) const { return values_[1 + i]; }
	double eq(std::size_t i) const { return values_[1 + n_in_ + i]; }

	/// Gradients of every row at the point of the last forward().
	void gradients(std::vector<SparseRow> &out)
	{
		out.resize(tapes_.size());
		const double one = 1.0;
		for (std::size_t r = 0; r < tapes_.size(); ++r) {
			tapes_[r].reverse(std::span<const double>(&one, 1), ws_[r], scratch_);
			out[r].index = support_[r];
			out[r].value.resize(support_[r].size());
			for (std::size_t k = 0; k < support_[r].size(); ++k) {
				out[r].value[k] = scratch_[support_[r][k]];
				scratch_[support_[r][k]] = 0.0;
			}
		}
	}

	/// Adds weight * Hess(row) into H, at the point of the last forward().
	/// Clobbers the row's adjoint buffers.
	void add_row_hessian(std::size_t r, double weight, Eigen::MatrixXd &H)
	{
		const auto &sup = support_[r];
		const double one = 1.0;
		for (std::size_t a = 0; a < sup.size(); ++a) {
			dir_.assign(n_, 0.0);
			dir_[sup[a]] = 1.0;
			tapes_[r].hessian_vector(std::span<const double>(&one, 1), dir_, ws_[r], scratch_);
			for (std::size_t b = 0; b < sup.size(); ++b) {
				H(sup[b], sup[a]) += weight * scratch_[sup[b]];
				scratch_[sup[b]] = 0.0;
			}
		}
	}

private:
	static std::vector<std::uint32_t> collect_support(const Expr &e)
	{
		std::unordered_set<const ExprNode *> seen;
		std::vector<std::uint32_t> idx;
		auto walk = [&](auto &self, const Expr &x) -> void {
			if (!seen.insert(x.node()).second)
				return;
			if (x.op() == Op::Variable)
				idx.push_back(static_cast<std::uint32_t>(x.index()));
			for (const Expr &c : x.children())
				self(self, c);
		};
		walk(walk, e);
		std::sort(idx.begin(), idx.end());
		idx.erase(std::unique(idx.begin(), idx.end()), idx.end());
		return idx;
	}

	std::size_t n_, n_in_, n_eq_;
	std::vector<Tape> tapes_;
	std::vector<Tape::Workspace> ws_;
	std::vector<std::vector<std::uint32_t>> support_;
	std::vector<double> values_;
	std::vector<double> scratch_;
	std::vector<double> dir_;
};

inline double clamp(double x, double lo, double hi) { return std::min(std::max(x, lo), hi); }

inline double projected_gradient_norm(std::span<const double> z, std::span<const double> g,
                                      std::span<const double> lo, std::span<const double> hi)
{
	double r = 0.0;
	for (std::size_t i = 0; i < z.size(); ++i)
		r = std::max(r, std::abs(clamp(z[i] - g[i], lo[i], hi[i]) - z[i]));
	return r;
}

class AugmentedLagrangian {
public:
	AugmentedLagrangian(const NlpProblem &p, const SolverOptions &opts)
		: ev_(p), opts_(opts), lo_(p.vars.lower), hi_(p.vars.upper), mu_(p.ineqs.size(), 0.0),
		  nu_(p.eqs.size(), 0.0), rho_(opts.penalty_init),
		  B_(Eigen::MatrixXd::Identity(static_cast<Eigen::Index>(p.vars.count),
		                               static_cast<Eigen::Index>(p.vars.count)))
	{
		for (const SimplexBlock &b : p.simplex_blocks)
			if (b.size > 1)
				for (std::size_t k = b.begin; k < b.end(); ++k)
					weights_.push_back({k, 1.0 / static_cast<double>(b.size)});
	}

	SolveReport run(std::span<const double> z0)
	{
		auto t0 = std::chrono::steady_clock::now();
		SolveReport rep;
		const std::size_t n = ev_.n();
		if (z0.size() != n)
			throw DimensionError("solve: initial point has length " + std::to_string(z0.size()) + ", expected " +
			                     std::to_string(n));
		std::vector<double> z(n);
		for (std::size_t i = 0; i < n; ++i)
			z[i] = clamp(z0[i], lo_[i], hi_[i]);

		try {
			double omega = 1e-1;
			double prev_viol = std::numeric_limits<double>::infinity();
			int stalled = 0;
			double floor = opts_.simplex_floor;
			for (int outer = 0; outer < opts_.outer_max_iter; ++outer) {
				rep.outer_iterations = outer + 1;
				const double applied = floor < 1e-3 ? 0.0 : floor;
				for (auto [k, uniform] : weights_) {
					lo_[k] = applied * uniform;
					z[k] = std::max(z[k], lo_[k]);
				}
				floor *= 0.1;
				double pg = inner(z, omega, rep.iterations);
				ev_.forward(z);
				double viol = 0.0;
				for (std::size_t i = 0; i < ev_.n_ineq(); ++i) {
					double g = ev_.ineq(i) + opts_.ineq_backoff;
					viol = std::max(viol, std::max(g, 0.0));
					mu_[i] = std::min(std::max(0.0, mu_[i] + rho_ * g), multiplier_cap);
				}
				for (std::size_t i = 0; i < ev_.n_eq(); ++i) {
					double h = ev_.eq(i);
					viol = std::max(viol, std::abs(h));
					nu_[i] = clamp(nu_[i] + rho_ * h, -multiplier_cap, multiplier_cap);
				}
				rep.stationarity = pg;
				if (viol <= opts_.feas_tol && pg <= stationarity_target() && applied == 0.0)
					break;
				// Give up once the penalty is maxed out and the violation stalls.
				stalled = rho_ >= opts_.penalty_max && viol > 0.9 * prev_viol ? stalled + 1 : 0;
				if (stalled >= 3) {
					rep.message = "violation stalled at the maximum penalty";
					break;
				}
				if (viol > 0.25 * prev_viol)
					rho_ = std::min(rho_ * opts_.penalty_growth, opts_.penalty_max);
				prev_viol = viol;
				omega = std::max(opts_.stat_tol, omega * 0.1);
			}
			finish(z, rep);
		} catch (const ExprError &e) {
			rep.status = SolveStatus::Error;
			rep.message = e.what();
			rep.point = z;
		}
		rep.wall_time = std::chrono::steady_clock::now() - t0;
		return rep;
	}

private:
	static constexpr double multiplier_cap = 1e12;
	/// Inner iterations over which the merit must decrease.
	static constexpr std::size_t stall_window = 20;

	double stationarity_target() const { return opts_.stat_tol * std::max(1.0, std::abs(ev_.cost())); }

	/// Weight of each row at the last forward(): the multiplier the row would
	/// receive after a first-order update, zero for inactive inequalities.
	void row_weights(std::vector<double> &w) const
	{
		w.assign(ev_.n_rows(), 0.0);
		w[0] = 1.0;
		for (std::size_t i = 0; i < ev_.n_ineq(); ++i)
			w[1 + i] = std::max(0.0, mu_[i] + rho_ * (ev_.ineq(i) + opts_.ineq_backoff));
		for (std::size_t i = 0; i < ev_.n_eq(); ++i)
			w[1 + ev_.n_ineq() + i] = nu_[i] + rho_ * ev_.eq(i);
	}

	double merit() const
	{
		double f = ev_.cost();
		for (std::size_t i = 0; i < ev_.n_ineq(); ++i) {
			double t = mu_[i] + rho_ * (ev_.ineq(i) + opts_.ineq_backoff);
			f += (t > 0.0 ? t * t - mu_[i] * mu_[i] : -mu_[i] * mu_[i]) / (2.0 * rho_);
		}
		for (std::size_t i = 0; i < ev_.n_eq(); ++i) {
			double h = ev_.eq(i);
			f += nu_[i] * h + 0.5 * rho_ * h * h;
		}
		return f;
	}

	static void accumulate(const std::vector<SparseRow> &rows, const std::vector<double> &w, std::vector<double> &out)
	{
		std::fill(out.begin(), out.end(), 0.0);
		for (std::size_t r = 0; r < rows.size(); ++r) {
			if (w[r] == 0.0)
				continue;
			for (std::size_t k = 0; k < rows[r].index.size(); ++k)
				out[rows[r].index[k]] += w[r] * rows[r].value[k];
		}
	}

	/// Model Hessian L + rho * sum_active grad c grad c^T at the last forward().
	void model_hessian(const std::vector<SparseRow> &J, const std::vector<double> &w, Eigen::MatrixXd &H)
	{
		if (opts_.hessian == HessianMode::Exact) {
			H.setZero();
			for (std::size_t r = 0; r < J.size(); ++r)
				if (w[r] != 0.0)
					ev_.add_row_hessian(r, w[r], H);
		} else {
			H = B_;
		}
		for (std::size_t r = 1; r < J.size(); ++r) {
			bool active = r <= ev_.n_ineq() ? w[r] > 0.0 : true;
			if (!active)
				continue;
			const SparseRow &row = J[r];
			for (std::size_t a = 0; a < row.index.size(); ++a)
				for (std::size_t b = 0; b < row.index.size(); ++b)
					H(row.index[a], row.index[b]) += rho_ * row.value[a] * row.value[b];
		}
	}

	/// Projected Newton on the merit; returns the final projected-gradient norm.
	double inner(std::vector<double> &z, double omega, int &iterations)
	{
		const std::size_t n = z.size();
		const auto N = static_cast<Eigen::Index>(n);
		std::vector<SparseRow> J, Jt;
		std::vector<double> w, wt, g(n), gt(n), zt(n), d(n), lag_old(n), lag_new(n);

		ev_.forward(z);
		double f = merit();
		if (!std::isfinite(f))
			throw DomainError("non-finite merit value at the starting point", "root");
		ev_.gradients(J);
		row_weights(w);
		accumulate(J, w, g);
		double pg = projected_gradient_norm(z, g, lo_, hi_);

		std::vector<char> fixed(n);
		std::vector<Eigen::Index> free_idx;
		std::vector<double> history{f};
		Eigen::MatrixXd H(N, N);
		for (int it = 0; it < opts_.inner_max_iter && pg > omega; ++it) {
			++iterations;
			const double eps = std::min(1e-3, pg);
			free_idx.clear();
			for (std::size_t i = 0; i < n; ++i) {
				fixed[i] = (z[i] <= lo_[i] + eps && g[i] > 0.0) || (z[i] >= hi_[i] - eps && g[i] < 0.0);
				if (!fixed[i])
					free_idx.push_back(static_cast<Eigen::Index>(i));
			}

			ev_.forward(z);
			model_hessian(J, w, H);
			const auto F = static_cast<Eigen::Index>(free_idx.size());
			Eigen::MatrixXd Hff(F, F);
			Eigen::VectorXd rhs(F);
			for (Eigen::Index a = 0; a < F; ++a) {
				rhs(a) = -g[static_cast<std::size_t>(free_idx[a])];
				for (Eigen::Index b = 0; b < F; ++b)
					Hff(a, b) = H(free_idx[a], free_idx[b]);
			}
			Eigen::VectorXd step = solve_spd(Hff, rhs);
			// Variables in the epsilon-active set move onto their bound.
			for (std::size_t i = 0; i < n; ++i)
				d[i] = !fixed[i] ? 0.0 : g[i] > 0.0 ? lo_[i] - z[i] : hi_[i] - z[i];
			for (Eigen::Index a = 0; a < F; ++a)
				d[static_cast<std::size_t>(free_idx[a])] = step(a);

			bool accepted = false;
			double ft = f, alpha = 1.0;
			for (int ls = 0; ls < 40; ++ls, alpha *= 0.5) {
				for (std::size_t i = 0; i < n; ++i)
					zt[i] = clamp(z[i] + alpha * d[i], lo_[i], hi_[i]);
				double decrease = 0.0;
				for (std::size_t i = 0; i < n; ++i)
					decrease += g[i] * (zt[i] - z[i]);
				ev_.forward(zt);
				ft = merit();
				if (std::isfinite(ft) && ft <= f + 1e-4 * decrease) {
					accepted = true;
					break;
				}
			}
			if (!accepted) {
				if (opts_.hessian == HessianMode::Exact || reset_count_++ > 2)
					break;
				B_.setIdentity();
				ev_.forward(z);
				continue;
			}

			ev_.gradients(Jt);
			row_weights(wt);
			accumulate(Jt, wt, gt);
			if (opts_.hessian == HessianMode::Bfgs) {
				// Structured secant: change in the Lagrangian gradient at fixed weights.
				accumulate(J, wt, lag_old);
				accumulate(Jt, wt, lag_new);
				Eigen::VectorXd sv(N), yv(N);
				for (std::size_t i = 0; i < n; ++i) {
					sv(static_cast<Eigen::Index>(i)) = zt[i] - z[i];
					yv(static_cast<Eigen::Index>(i)) = lag_new[i] - lag_old[i];
				}
				bfgs_update(sv, yv);
			}

			z.swap(zt);
			g.swap(gt);
			J.swap(Jt);
			w.swap(wt);
			f = ft;
			pg = projected_gradient_norm(z, g, lo_, hi_);
			history.push_back(f);
			if (history.size() > stall_window &&
			    history[history.size() - 1 - stall_window] - f <= 1e-12 * std::max(1.0, std::abs(f)))
				break;
		}
		return pg;
	}

	static Eigen::VectorXd solve_spd(Eigen::MatrixXd &H, const Eigen::VectorXd &rhs)
	{
		if (H.rows() == 0)
			return rhs;
		double scale = std::max(1.0, H.diagonal().cwiseAbs().maxCoeff());
		double tau = 0.0;
		for (int attempt = 0; attempt < 24; ++attempt) {
			Eigen::LLT<Eigen::MatrixXd> llt(H);
			if (llt.info() == Eigen::Success) {
				Eigen::VectorXd x = llt.solve(rhs);
				if (x.allFinite())
					return x;
			}
			double next = tau == 0.0 ? 1e-8 * scale : tau * 10.0;
			H.diagonal().array() += next - tau;
			tau = next;
		}
		return rhs; // steepest descent
	}

	/// Damped BFGS (Powell) keeps B positive definite.
	void bfgs_update(const Eigen::VectorXd &s, Eigen::VectorXd y)
	{
		double ss = s.squaredNorm();
		if (ss < 1e-300)
			return;
		Eigen::VectorXd Bs = B_ * s;
		double sBs = s.dot(Bs);
		double sy = s.dot(y);
		if (sy < 0.2 * sBs) {
			double theta = 0.8 * sBs / (sBs - sy);
			y = theta * y + (1.0 - theta) * Bs;
			sy = s.dot(y);
		}
		if (!(sy > 0.0) || !(sBs > 0.0))
			return;
		B_.noalias() += y * y.transpose() / sy;
		B_.noalias() -= Bs * Bs.transpose() / sBs;
	}

	void finish(const std::vector<double> &z, SolveReport &rep)
	{
		ev_.forward(z);
		rep.point = z;
		rep.cost = ev_.cost();
		rep.max_ineq_violation = 0.0;
		rep.max_eq_violation = 0.0;
		for (std::size_t i = 0; i < ev_.n_ineq(); ++i)
			rep.max_ineq_violation = std::max(rep.max_ineq_violation, std::max(ev_.ineq(i), 0.0));
		for (std::size_t i = 0; i < ev_.n_eq(); ++i)
			rep.max_eq_violation = std::max(rep.max_eq_violation, std::abs(ev_.eq(i)));
		rep.ineq_multipliers = mu_;
		rep.eq_multipliers = nu_;
		bool feasible = rep.max_ineq_violation <= opts_.feas_tol && rep.max_eq_violation <= opts_.feas_tol &&
		                std::isfinite(rep.cost);
		if (!feasible)
			rep.status = SolveStatus::Infeasible;
		else if (rep.stationarity <= stationarity_target())
			rep.status = SolveStatus::FeasibleOptimalCandidate;
		else
			rep.status = SolveStatus::Feasible;
	}

	ProblemEvaluator ev_;
	SolverOptions opts_;
	std::vector<double> lo_, hi_;
	std::vector<double> mu_, nu_;
	double rho_;
	Eigen::MatrixXd B_;
	int reset_count_ = 0;
	std::vector<std::pair<std::size_t, double>> weights_;
};

} // namespace detail

/// Deterministic given (problem, z0, opts). z0 is clipped into the variable bounds.
inline void validate(const SolverOptions &o)
{
	auto require = [](bool ok, const char *what) {
		if (!ok)
			throw std::invalid_argument(what);
	};
	require(o.feas_tol > 0.0 && o.stat_tol > 0.0, "solver tolerances must be positive");
	require(o.inner_max_iter >= 1 && o.outer_max_iter >= 1, "iteration limits must be at least 1");
	require(o.penalty_init > 0.0 && o.penalty_growth > 1.0 && o.penalty_max >= o.penalty_init,
	        "penalty schedule needs 0 < init <= max and growth > 1");
	require(o.ineq_backoff >= 0.0, "inequality back-off must be non-negative");
	require(o.simplex_floor >= 0.0 && o.simplex_floor < 1.0, "simplex floor must lie in [0, 1)");
}

inline SolveReport solve(const NlpProblem &p, std::span<const double> z0, const SolverOptions &opts = {})
{
	validate(opts);
	detail::AugmentedLagrangian al(p, opts);
	return al.run(z0);
}

/// KKT residuals at z for the given multipliers (mu >= 0 for g <= 0, nu free for h = 0).
inline KktResiduals check_kkt(const NlpProblem &p, std::span<const double> z,
                              std::span<const double> ineq_mult, std::span<const double> eq_mult)
{
	detail::ProblemEvaluator ev(p);
	if (ineq_mult.size() != ev.n_ineq() || eq_mult.size() != ev.n_eq())
		throw DimensionError("check_kkt: multiplier count mismatch");
	if (z.size() != ev.n())
		throw DimensionError("check_kkt: point has the wrong length");
	ev.forward(z);
	KktResiduals r;
	std::vector<double> w(ev.n_rows(), 0.0);
	w[0] = 1.0;
	for (std::size_t i = 0; i < ev.n_ineq(); ++i) {
		double g = ev.ineq(i);
		w[1 + i] = ineq_mult[i];
		r.ineq_violation = std::max(r.ineq_violation, std::max(g, 0.0));
		r.complementarity = std::max(r.complementarity, std::abs(ineq_mult[i] * g));
	}
	for (std::size_t i = 0; i < ev.n_eq(); ++i) {
		w[1 + ev.n_ineq() + i] = eq_mult[i];
		r.eq_violation = std::max(r.eq_violation, std::abs(ev.eq(i)));
	}
	std::vector<detail::SparseRow> J;
	ev.gradients(J);
	std::vector<double> g(ev.n(), 0.0);
	for (std::size_t row = 0; row < J.size(); ++row)
		for (std::size_t k = 0; k < J[row].index.size(); ++k)
			g[J[row].index[k]] += w[row] * J[row].value[k];
	r.stationarity = detail::projected_gradient_norm(z, g, p.vars.lower, p.vars.upper);
	return r;
}

inline KktResiduals check_kkt(const NlpProblem &p, const SolveReport &rep)
{
	return check_kkt(p, rep.point, rep.ineq_multipliers, rep.eq_multipliers);
}

} // namespace logicsmooth
