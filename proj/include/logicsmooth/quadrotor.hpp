#pragma once

// Planar quadrotor with states [r, r', s, s', psi, psi'] and two rotor
// thrusts, discretized with a semi-implicit midpoint rule: velocities are
// advanced explicitly, positions with the average of old and new velocity.
// Also builds the two benchmark problems.

#include "expr.hpp"
#include "logic.hpp"
#include "nlp.hpp"

#include <cmath>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace logicsmooth::quadrotor {

struct QuadParams {
	double mass = 0.15;
	double inertia = 0.00125;
	double arm = 0.1;
	double gravity = 9.81;
	double ts = 0.25;
	std::size_t horizon = 10;
	double input_lower = -2.0;
	double input_upper = 2.0;
	std::vector<double> initial_state = std::vector<double>(6, 0.0);

	void validate() const
	{
		if (!(mass > 0 && inertia > 0 && arm > 0 && gravity > 0 && ts > 0))
			throw std::invalid_argument("quadrotor parameters must be positive");
		if (horizon < 1)
			throw std::invalid_argument("quadrotor horizon must be at least 1");
		if (!(input_lower <= input_upper))
			throw std::invalid_argument("quadrotor input bounds are inverted");
		if (initial_state.size() != 6)
			throw std::invalid_argument("quadrotor initial state must have 6 entries");
	}

	/// Per-rotor thrust that balances gravity at zero tilt.
	double hover_thrust() const { return mass * gravity / 2.0; }

	bool operator==(const QuadParams &) const = default;
};

class QuadrotorDynamics final : public Dynamics {
public:
	explicit QuadrotorDynamics(QuadParams p) : p_(std::move(p)) { p_.validate(); }

	const QuadParams &params() const noexcept { return p_; }

	std::size_t state_dim() const override { return 6; }
	std::size_t input_dim() const override { return 2; }

	std::vector<Expr> step_residuals(std::span<const Expr> x, std::span<const Expr> v,
	                                 std::span<const Expr> xn) const override
	{
		const double ts = p_.ts;
		Expr thrust = v[0] + v[1];
		return {
			xn[0] - x[0] - ts * ((x[1] + xn[1]) / 2.0),
			xn[1] - x[1] - ts * (sin(x[4]) * thrust / p_.mass),
			xn[2] - x[2] - ts * ((x[3] + xn[3]) / 2.0),
			xn[3] - x[3] - ts * (cos(x[4]) * thrust / p_.mass - p_.gravity),
			xn[4] - x[4] - ts * ((x[5] + xn[5]) / 2.0),
			xn[5] - x[5] - ts * (p_.arm * (v[0] - v[1]) / p_.inertia),
		};
	}

	void step(std::span<const double> x, std::span<const double> v, std::span<double> xn) const override
	{
		const double ts = p_.ts;
		const double thrust = v[0] + v[1];
		xn[1] = x[1] + ts * (std::sin(x[4]) * thrust / p_.mass);
		xn[3] = x[3] + ts * (std::cos(x[4]) * thrust / p_.mass - p_.gravity);
		xn[5] = x[5] + ts * (p_.arm * (v[0] - v[1]) / p_.inertia);
		xn[0] = x[0] + ts * ((x[1] + xn[1]) / 2.0);
		xn[2] = x[2] + ts * ((x[3] + xn[3]) / 2.0);
		xn[4] = x[4] + ts * ((x[5] + xn[5]) / 2.0);
	}

	std::string describe() const override
	{
		return "quadrotor(mass=" + detail::format_double(p_.mass) +
		       ", inertia=" + detail::format_double(p_.inertia) +
		       ", arm=" + detail::format_double(p_.arm) +
		       ", gravity=" + detail::format_double(p_.gravity) +
		       ", ts=" + detail::format_double(p_.ts) + ")";
	}

	std::vector<double> nominal_input() const override { return {p_.hover_thrust(), p_.hover_thrust()}; }

private:
	QuadParams p_;
};

inline TrajectoryLayout make_layout(const QuadParams &p)
{
	p.validate();
	TrajectoryLayout t;
	t.horizon = p.horizon;
	t.state_dim = 6;
	t.input_dim = 2;
	t.initial_state = p.initial_state;
	t.dynamics = std::make_shared<QuadrotorDynamics>(p);
	return t;
}

/// Initial-condition residuals (6) followed by 6 step residuals per k.
inline std::vector<Expr> dynamics_residuals(const QuadParams &p)
{
	return make_layout(p).dynamics_residuals();
}

/// Circle in the (r, s) plane; r = 0 marks a point target.
struct Circle {
	std::string name;
	double cx = 0.0;
	double cy = 0.0;
	double radius = 0.0;

	bool operator==(const Circle &) const = default;
};

struct LogicOcp {
	std::string name;
	BaseOcp base;
	QuadParams params;
	std::vector<Circle> geometry;
};

/// Decision vector, bounds and dynamics shared by both benchmark problems.
inline BaseOcp base_problem(const QuadParams &p)
{
	BaseOcp ocp;
	TrajectoryLayout t = make_layout(p);
	for (std::size_t k = 0; k <= p.horizon; ++k)
		for (std::size_t j = 1; j <= 6; ++j)
			ocp.vars.add("x[" + std::to_string(k) + "][" + std::to_string(j) + "]");
	for (std::size_t k = 0; k < p.horizon; ++k)
		for (std::size_t j = 1; j <= 2; ++j)
			ocp.vars.add("v[" + std::to_string(k) + "][" + std::to_string(j) + "]", p.input_lower,
			             p.input_upper);
	std::vector<Expr> terms;
	for (std::size_t k = 0; k < p.horizon; ++k)
		terms.push_back(pow(t.input(k, 0), 2) + pow(t.input(k, 1), 2));
	ocp.cost = sum(terms);
	ocp.eqs = t.dynamics_residuals();
	ocp.trajectory = std::move(t);
	return ocp;
}

/// (x_k^1 - cx)^2 + (x_k^3 - cy)^2 - r^2, built the way the problem files spell it.
inline Expr circle_function(const TrajectoryLayout &t, std::size_t k, double cx, double cy, double r2)
{
	auto offset = [](const Expr &x, double c) { return c == 0.0 ? x : x - c; };
	return pow(offset(t.state(k, 0), cx), 2) + pow(offset(t.state(k, 2), cy), 2) - r2;
}

inline Expr problem1_trigger(const TrajectoryLayout &t, std::size_t k) { return circle_function(t, k, 2.0, 1.0, 1.0); }
inline Expr obstacle(const TrajectoryLayout &t, std::size_t k) { return circle_function(t, k, 0.0, 8.0, 25.0); }
inline Expr problem2_trigger(const TrajectoryLayout &t, std::size_t k)
{
	return pow(t.state(k, 0) + 3.0, 2) + pow(t.state(k, 2) - 2.0, 2) - 1.0;
}

/// Reach (0, 15) and avoid the obstacle at steps 5..9 unless the trigger
/// circle was visited at step 2 or 3.
inline LogicOcp build_problem1(const QuadParams &p = {})
{
	LogicOcp out;
	out.name = "p1";
	out.params = p;
	out.base = base_problem(p);
	const TrajectoryLayout &t = *out.base.trajectory;
	const std::size_t N = p.horizon;
	if (N < 9)
		throw std::invalid_argument("problem 1 needs a horizon of at least 9 steps");
	out.base.eqs.push_back(t.state(N, 0));
	out.base.eqs.push_back(t.state(N, 2) - 15.0);

	Formula visited = Formula::any({Formula::le(problem1_trigger(t, 2)), Formula::le(problem1_trigger(t, 3))});
	std::vector<Formula> avoid;
	for (std::size_t i = 5; i <= 9; ++i)
		avoid.push_back(!Formula::le(obstacle(t, i)));
	out.base.logic = implies(!visited, Formula::all(std::move(avoid)));

	out.geometry = {{"obstacle", 0.0, 8.0, 5.0}, {"trigger", 2.0, 1.0, 1.0}, {"target", 0.0, 15.0, 0.0}};
	return out;
}

/// IF the trigger circle is visited at step 3 THEN end at (3, 5)
/// ELSE avoid the obstacle at steps 5..9 and end at (0, 15).
inline LogicOcp build_problem2(const QuadParams &p = {})
{
	LogicOcp out;
	out.name = "p2";
	out.params = p;
	out.base = base_problem(p);
	const TrajectoryLayout &t = *out.base.trajectory;
	const std::size_t N = p.horizon;
	if (N < 9)
		throw std::invalid_argument("problem 2 needs a horizon of at least 9 steps");

	Formula trigger = Formula::le(problem2_trigger(t, 3));
	Formula green = Formula::all({Formula::eq(t.state(N, 0) - 3.0), Formula::eq(t.state(N, 2) - 5.0)});
	std::vector<Formula> avoid;
	for (std::size_t i = 5; i <= 9; ++i)
		avoid.push_back(!Formula::le(obstacle(t, i)));
	Formula black = Formula::all({Formula::eq(t.state(N, 0)), Formula::eq(t.state(N, 2) - 15.0)});
	out.base.logic = if_then_else(trigger, green, Formula::all({Formula::all(std::move(avoid)), black}));

	out.geometry = {{"obstacle", 0.0, 8.0, 5.0}, {"trigger", -3.0, 2.0, 1.0},
	                {"target", 0.0, 15.0, 0.0}, {"target_alt", 3.0, 5.0, 0.0}};
	return out;
}

inline LogicOcp build_problem(const std::string &name, const QuadParams &p = {})
{
	if (name == "p1")
		return build_problem1(p);
	if (name == "p2")
		return build_problem2(p);
	throw std::invalid_argument("unknown bundled problem '" + name + "' (expected p1 or p2)");
}

} // namespace logicsmooth::quadrotor
