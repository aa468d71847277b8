#include "logicsmooth/io.hpp"

#include "generators.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <limits>

using namespace logicsmooth;

namespace {

BenchReport sample_report()
{
	BenchReport r;
	r.problem = "p1";
	r.method = Encoding::BigM;
	r.n_trials = 4;
	r.seed = 9;
	r.counts = {1, 2, 1};
	r.avg_cost = 23.456;
	r.avg_time = 0.25;
	r.avg_time_feasible = 0.125;
	r.median_time_feasible = 0.1;
	r.max_time = 1.0;
	r.best_cost = 22.5;
	r.best_trial = 2;
	r.best_trajectory = {1.0, 2.0};
	return r;
}

Trajectory random_trajectory(gen::Rng &rng)
{
	Trajectory t;
	std::size_t n = 1 + gen::pick(rng, 6), m = 1 + gen::pick(rng, 3), steps = 1 + gen::pick(rng, 10);
	for (std::size_t k = 0; k <= steps; ++k) {
		auto &x = t.states.emplace_back(n);
		for (double &v : x)
			v = gen::uniform(rng, -1e3, 1e3);
		if (k < steps) {
			auto &u = t.inputs.emplace_back(m);
			for (double &v : u)
				v = gen::coin(rng) ? gen::uniform(rng, -2.0, 2.0) : std::ldexp(gen::uniform(rng, 1, 2), -40);
		}
	}
	for (std::size_t i = gen::pick(rng, 3); i > 0; --i)
		t.geometry.push_back({"c" + std::to_string(i), gen::uniform(rng, -5, 5), gen::uniform(rng, -5, 5), 0.1 * static_cast<double>(i)});
	return t;
}

std::vector<std::string> cells(const std::string &line)
{
	std::vector<std::string> out;
	std::istringstream in(line);
	for (std::string c; std::getline(in, c, '|');) {
		auto b = c.find_first_not_of(' '), e = c.find_last_not_of(' ');
		out.push_back(b == std::string::npos ? "" : c.substr(b, e - b + 1));
	}
	return out;
}

} // namespace

TEST(Encoding, Parse)
{
	EXPECT_EQ(parse_encoding("smoothed"), Encoding::Smoothed);
	EXPECT_EQ(parse_encoding("bigm"), Encoding::BigM);
	EXPECT_EQ(parse_encoding("comp"), Encoding::Complementarity);
	EXPECT_FALSE(parse_encoding("BigM"));
	EXPECT_FALSE(parse_encoding(""));
}

TEST(Json, SolveReport)
{
	SolveReport r;
	r.status = SolveStatus::Infeasible;
	r.cost = std::numeric_limits<double>::quiet_NaN();
	r.max_ineq_violation = 0.5;
	r.point = {1.0, 2.0};
	auto j = to_json(r);
	EXPECT_EQ(j["status"], to_string(SolveStatus::Infeasible));
	EXPECT_TRUE(j["cost"].is_null());
	EXPECT_EQ(j["max_ineq_violation"], 0.5);
	EXPECT_EQ(j["point"], (std::vector<double>{1.0, 2.0}));
	EXPECT_FALSE(to_json(r, false).contains("point"));
	// Must serialize: JSON has no NaN.
	EXPECT_NO_THROW((void)j.dump());
}

TEST(Json, BenchReport)
{
	BenchReport r = sample_report();
	auto j = to_json(r);
	EXPECT_EQ(j["method"], "bigm");
	EXPECT_EQ(j["optimal"], 1);
	EXPECT_EQ(j["suboptimal"], 2);
	EXPECT_EQ(j["infeasible"], 1);
	EXPECT_EQ(j["best_trial"], 2);
	EXPECT_EQ(j["avg_cost"], 23.456);
	EXPECT_FALSE(j.contains("trials"));

	r.avg_cost.reset();
	r.best_trial.reset();
	r.trials.push_back({});
	j = to_json(r, true);
	EXPECT_TRUE(j["avg_cost"].is_null());
	EXPECT_TRUE(j["best_trial"].is_null());
	EXPECT_EQ(j["trials"].size(), 1u);
}

TEST(Table, HeaderAndRows)
{
	std::vector<BenchReport> rs{sample_report(), sample_report()};
	rs[1].method = Encoding::Smoothed;
	rs[1].avg_cost.reset();
	rs[1].avg_time_feasible.reset();
	std::ostringstream out;
	emit_table(rs, out);
	std::istringstream in(out.str());
	std::string head, rule, a, b, extra;
	std::getline(in, head);
	std::getline(in, rule);
	std::getline(in, a);
	std::getline(in, b);
	EXPECT_FALSE(std::getline(in, extra));
	EXPECT_EQ(head.rfind("Method", 0), 0u);
	EXPECT_EQ(cells(head), (std::vector<std::string>{"Method", "Opt. #", "Sub-Opt. #", "Inf. #", "Avg. Cost",
	                                                  "Avg. Time", "Avg. Time (Feas.)", "Max Time"}));
	EXPECT_EQ(rule.find_first_not_of("-|"), std::string::npos);
	EXPECT_EQ(head.size(), rule.size());
	EXPECT_EQ(a.size(), head.size());
	EXPECT_NE(a.find("23.46"), std::string::npos);
	EXPECT_NE(a.find("250.0 ms"), std::string::npos);
	EXPECT_NE(a.find("125.0 ms"), std::string::npos);
	EXPECT_EQ(b.rfind("smoothed", 0), 0u);
	auto row = cells(b);
	ASSERT_EQ(row.size(), 8u);
	EXPECT_EQ(row[4], "-");
	EXPECT_EQ(row[6], "-");
	EXPECT_EQ(row[7], "1000.0 ms");
}

TEST(Trajectory, Example)
{
	Trajectory t{{{0.0, 1.5}, {2.0, -0.25}}, {{0.73575}}, {{"trigger", 2.0, 1.0, 1.0}}};
	std::string csv = emit_trajectory(t);
	EXPECT_EQ(csv, "k,x1,x2,v1\n0,0,1.5,0.73575\n1,2,-0.25,\n# circle trigger 2 1 1\n");
	EXPECT_EQ(parse_trajectory(csv), t);
}

TEST(Trajectory, FromLayout)
{
	TrajectoryLayout t = quadrotor::make_layout({});
	std::vector<double> u(t.num_input_vars(), 0.0);
	auto z = t.rollout(u);
	Trajectory tr = make_trajectory(t, z);
	EXPECT_EQ(tr.states.size(), t.horizon + 1);
	EXPECT_EQ(tr.inputs.size(), t.horizon);
	EXPECT_EQ(tr.states[1][3], z[t.state_index(1, 3)]);
	EXPECT_THROW(make_trajectory(t, std::vector<double>(3)), DimensionError);
}

TEST(Trajectory, Rejects)
{
	EXPECT_THROW(parse_trajectory(""), std::invalid_argument);
	EXPECT_THROW(parse_trajectory("x1,v1\n"), std::invalid_argument);
	EXPECT_THROW(parse_trajectory("k,x1,v1\n0,1,2\n"), std::invalid_argument);
	EXPECT_THROW(parse_trajectory("k,x1,v1\n1,1,2\n2,1,\n"), std::invalid_argument);
	EXPECT_THROW(parse_trajectory("k,x1,v1\n0,1,abc\n1,1,\n"), std::invalid_argument);
	EXPECT_THROW(parse_trajectory("k,x1,v1\n0,1,2\n1,1,\n2,1,\n"), std::invalid_argument);
	EXPECT_THROW(parse_trajectory("k,x1,v1\n0,1,2\n1,1,\n# box a 1 2 3\n"), std::invalid_argument);
	EXPECT_THROW(emit_trajectory(Trajectory{}), std::invalid_argument);
}

TEST(Property, TrajectoryRoundTrip)
{
	gen::Rng rng(81);
	for (int trial = 0; trial < 500; ++trial) {
		Trajectory t = random_trajectory(rng);
		EXPECT_EQ(parse_trajectory(emit_trajectory(t)), t);
	}
}

TEST(Files, Errors)
{
	EXPECT_THROW(read_file("/nonexistent/dir/file.lc"), IoError);
	Trajectory t{{{0.0}, {1.0}}, {{2.0}}, {}};
	EXPECT_THROW(emit_trajectory(t, "/nonexistent/dir/out.csv"), IoError);
	try {
		read_file("/nonexistent/x");
	} catch (const IoError &e) {
		EXPECT_EQ(std::string(e.what()).rfind("/nonexistent/x: ", 0), 0u);
	}
}

TEST(Files, WriteThenRead)
{
	Trajectory t{{{0.0}, {1.0}}, {{2.0}}, {{"goal", 0.0, 15.0, 0.5}}};
	std::string path = testing::TempDir() + "io_roundtrip.csv";
	emit_trajectory(t, path);
	EXPECT_EQ(parse_trajectory(read_file(path)), t);
}
