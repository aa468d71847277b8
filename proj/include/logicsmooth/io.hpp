#pragma once

// Reports as JSON and aligned text, trajectories as CSV.

#include "bench.hpp"
#include "quadrotor.hpp"

#include <nlohmann/json.hpp>

#include <charconv>
#include <fstream>
#include <iomanip>
#include <optional>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

namespace logicsmooth {

/// Printed in tables for values that do not exist (no feasible run).
inline constexpr std::string_view absent_marker = "-";

class IoError : public std::runtime_error {
public:
	IoError(const std::string &path, const std::string &what) : std::runtime_error(path + ": " + what) {}
};

inline std::optional<Encoding> parse_encoding(std::string_view s)
{
	if (s == "smoothed")
		return Encoding::Smoothed;
	if (s == "bigm")
		return Encoding::BigM;
	if (s == "comp")
		return Encoding::Complementarity;
	return std::nullopt;
}

namespace detail {

/// Shortest text that reads back to the same double.
inline std::string exact(double v)
{
	char buf[64];
	auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
	if (ec != std::errc{})
		throw std::runtime_error("cannot format number");
	return {buf, end};
}

inline nlohmann::json optional_json(const std::optional<double> &v)
{
	return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
}

/// JSON has no inf / nan.
inline nlohmann::json number(double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr); }

} // namespace detail

inline nlohmann::json to_json(const SolveReport &r, bool with_point = true)
{
	nlohmann::json j{
		{"status", to_string(r.status)},
		{"cost", detail::number(r.cost)},
		{"max_ineq_violation", detail::number(r.max_ineq_violation)},
		{"max_eq_violation", detail::number(r.max_eq_violation)},
		{"stationarity", detail::number(r.stationarity)},
		{"iterations", r.iterations},
		{"outer_iterations", r.outer_iterations},
		{"wall_time", r.wall_time.count()},
		{"message", r.message},
	};
	if (with_point)
		j["point"] = r.point;
	return j;
}

inline nlohmann::json to_json(const BenchReport &r, bool with_trials = false)
{
	nlohmann::json j{
		{"problem", r.problem},
		{"method", to_string(r.method)},
		{"n_trials", r.n_trials},
		{"seed", r.seed},
		{"optimal", r.counts.optimal},
		{"suboptimal", r.counts.suboptimal},
		{"infeasible", r.counts.infeasible},
		{"avg_cost", detail::optional_json(r.avg_cost)},
		{"avg_time", r.avg_time},
		{"avg_time_feasible", detail::optional_json(r.avg_time_feasible)},
		{"median_time_feasible", detail::optional_json(r.median_time_feasible)},
		{"max_time", r.max_time},
		{"best_cost", detail::optional_json(r.best_cost)},
		{"logic_failures", r.logic_failures},
	};
	j["best_trial"] = r.best_trial ? nlohmann::json(*r.best_trial) : nlohmann::json(nullptr);
	j["best_trajectory"] = r.best_trajectory;
	if (with_trials) {
		auto &trials = j["trials"] = nlohmann::json::array();
		for (const TrialResult &t : r.trials)
			trials.push_back({{"status", to_string(t.status)},
			                  {"cost", detail::number(t.cost)},
			                  {"seconds", t.seconds},
			                  {"logic_holds", t.logic_holds},
			                  {"message", t.message}});
	}
	return j;
}

/// One row per report, laid out as
///
///   Method | Opt. # | Sub-Opt. # | Inf. # | Avg. Cost | Avg. Time | Avg. Time (Feas.) | Max Time
///
/// with times in milliseconds.
inline void emit_table(std::span<const BenchReport> reports, std::ostream &out)
{
	const std::vector<std::string> head{"Method", "Opt. #", "Sub-Opt. #", "Inf. #",
	                                    "Avg. Cost", "Avg. Time", "Avg. Time (Feas.)", "Max Time"};
	auto fixed = [](double v, int digits) {
		std::ostringstream s;
		s << std::fixed << std::setprecision(digits) << v;
		return s.str();
	};
	auto ms = [&](double seconds) { return fixed(seconds * 1e3, 1) + " ms"; };
	std::vector<std::vector<std::string>> rows{head};
	for (const BenchReport &r : reports) {
		rows.push_back({to_string(r.method), std::to_string(r.counts.optimal), std::to_string(r.counts.suboptimal),
		                std::to_string(r.counts.infeasible),
		                r.avg_cost ? fixed(*r.avg_cost, 2) : std::string(absent_marker), ms(r.avg_time),
		                r.avg_time_feasible ? ms(*r.avg_time_feasible) : std::string(absent_marker),
		                ms(r.max_time)});
	}
	std::vector<std::size_t> width(head.size(), 0);
	for (const auto &row : rows)
		for (std::size_t c = 0; c < row.size(); ++c)
			width[c] = std::max(width[c], row[c].size());
	for (std::size_t i = 0; i < rows.size(); ++i) {
		for (std::size_t c = 0; c < rows[i].size(); ++c) {
			if (c)
				out << " | ";
			out << (c == 0 ? std::left : std::right) << std::setw(static_cast<int>(width[c])) << rows[i][c];
		}
		out << '\n';
		if (i == 0) {
			for (std::size_t c = 0; c < width.size(); ++c)
				out << (c ? "-|-" : "") << std::string(width[c], '-');
			out << '\n';
		}
	}
}

inline void emit_table(const BenchReport &r, std::ostream &out) { emit_table(std::span(&r, 1), out); }

struct Trajectory {
	/// states[k] for k = 0..N, inputs[k] for k = 0..N-1.
	std::vector<std::vector<double>> states;
	std::vector<std::vector<double>> inputs;
	std::vector<quadrotor::Circle> geometry;

	bool operator==(const Trajectory &) const = default;
};

inline Trajectory make_trajectory(const TrajectoryLayout &t, std::span<const double> xu,
                                  std::vector<quadrotor::Circle> geometry = {})
{
	if (xu.size() < t.num_vars())
		throw DimensionError("trajectory: expected " + std::to_string(t.num_vars()) + " values, got " +
		                     std::to_string(xu.size()));
	Trajectory out;
	out.geometry = std::move(geometry);
	for (std::size_t k = 0; k <= t.horizon; ++k) {
		auto &x = out.states.emplace_back(t.state_dim);
		for (std::size_t j = 0; j < t.state_dim; ++j)
			x[j] = xu[t.state_index(k, j)];
	}
	for (std::size_t k = 0; k < t.horizon; ++k) {
		auto &v = out.inputs.emplace_back(t.input_dim);
		for (std::size_t j = 0; j < t.input_dim; ++j)
			v[j] = xu[t.input_index(k, j)];
	}
	return out;
}

/// Columns k, x1..xn, v1..vm; the input cells of the last row are empty.
/// Geometry follows as comment lines "# circle <name> <cx> <cy> <radius>".
inline std::string emit_trajectory(const Trajectory &t)
{
	if (t.states.empty())
		throw std::invalid_argument("trajectory has no states");
	if (t.inputs.empty() || t.inputs.size() + 1 != t.states.size())
		throw std::invalid_argument("trajectory needs at least one step and exactly one input per step");
	const std::size_t n = t.states[0].size();
	const std::size_t m = t.inputs[0].size();
	if (n == 0 || m == 0)
		throw std::invalid_argument("trajectory rows must not be empty");
	std::ostringstream out;
	out << 'k';
	for (std::size_t j = 1; j <= n; ++j)
		out << ",x" << j;
	for (std::size_t j = 1; j <= m; ++j)
		out << ",v" << j;
	out << '\n';
	for (std::size_t k = 0; k < t.states.size(); ++k) {
		if (t.states[k].size() != n || (k < t.inputs.size() && t.inputs[k].size() != m))
			throw std::invalid_argument("trajectory rows have inconsistent widths");
		out << k;
		for (double x : t.states[k])
			out << ',' << detail::exact(x);
		for (std::size_t j = 0; j < m; ++j)
			out << ',' << (k < t.inputs.size() ? detail::exact(t.inputs[k][j]) : "");
		out << '\n';
	}
	for (const quadrotor::Circle &c : t.geometry)
		out << "# circle " << c.name << ' ' << detail::exact(c.cx) << ' ' << detail::exact(c.cy) << ' '
		    << detail::exact(c.radius) << '\n';
	return out.str();
}

inline void emit_trajectory(const Trajectory &t, const std::string &path)
{
	std::ofstream f(path);
	if (!f)
		throw IoError(path, "cannot open for writing");
	f << emit_trajectory(t);
	if (!f)
		throw IoError(path, "write failed");
}

inline Trajectory parse_trajectory(std::string_view text)
{
	auto fail = [](std::size_t line, const std::string &what) {
		return std::invalid_argument("trajectory line " + std::to_string(line) + ": " + what);
	};
	auto number = [&](std::string_view s, std::size_t line) {
		double v = 0.0;
		auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
		if (ec != std::errc{} || p != s.data() + s.size())
			throw fail(line, "bad number '" + std::string(s) + "'");
		return v;
	};
	auto split = [](std::string_view s, char sep) {
		std::vector<std::string_view> out;
		for (std::size_t pos = 0;;) {
			std::size_t next = s.find(sep, pos);
			out.push_back(s.substr(pos, next - pos));
			if (next == std::string_view::npos)
				return out;
			pos = next + 1;
		}
	};

	Trajectory t;
	std::size_t n = 0, m = 0, line_no = 0;
	bool header = false, last_row = false;
	std::istringstream in{std::string(text)};
	for (std::string line; std::getline(in, line);) {
		++line_no;
		if (!line.empty() && line.back() == '\r')
			line.pop_back();
		if (line.empty())
			continue;
		if (line[0] == '#') {
			std::istringstream s(line.substr(1));
			std::string kind, name, cx, cy, r;
			if (!(s >> kind >> name >> cx >> cy >> r) || kind != "circle")
				throw fail(line_no, "expected '# circle <name> <cx> <cy> <radius>'");
			t.geometry.push_back({name, number(cx, line_no), number(cy, line_no), number(r, line_no)});
			continue;
		}
		auto cells = split(line, ',');
		if (!header) {
			if (cells.empty() || cells[0] != "k")
				throw fail(line_no, "header must start with 'k'");
			for (std::size_t c = 1; c < cells.size(); ++c) {
				std::string_view cell = cells[c];
				std::string expected_x = "x" + std::to_string(n + 1), expected_v = "v" + std::to_string(m + 1);
				if (m == 0 && cell == expected_x)
					++n;
				else if (cell == expected_v)
					++m;
				else
					throw fail(line_no, "unexpected column '" + std::string(cell) + "'");
			}
			if (n == 0 || m == 0)
				throw fail(line_no, "need at least one x and one v column");
			header = true;
			continue;
		}
		if (last_row)
			throw fail(line_no, "row after the final state");
		if (cells.size() != 1 + n + m)
			throw fail(line_no, "expected " + std::to_string(1 + n + m) + " cells");
		if (number(cells[0], line_no) != static_cast<double>(t.states.size()))
			throw fail(line_no, "steps must be numbered 0, 1, 2, ...");
		auto &x = t.states.emplace_back();
		for (std::size_t j = 0; j < n; ++j)
			x.push_back(number(cells[1 + j], line_no));
		if (cells[1 + n].empty()) {
			for (std::size_t j = 0; j < m; ++j)
				if (!cells[1 + n + j].empty())
					throw fail(line_no, "inputs must be all present or all empty");
			last_row = true;
			continue;
		}
		auto &v = t.inputs.emplace_back();
		for (std::size_t j = 0; j < m; ++j)
			v.push_back(number(cells[1 + n + j], line_no));
	}
	if (!header)
		throw fail(line_no, "missing header");
	if (!last_row)
		throw fail(line_no, "missing final state row");
	return t;
}

inline std::string read_file(const std::string &path)
{
	std::ifstream f(path, std::ios::binary);
	if (!f)
		throw IoError(path, "cannot open for reading");
	std::ostringstream s;
	s << f.rdbuf();
	return s.str();
}

} // namespace logicsmooth
