#pragma once

// Scalar expression graphs over a flat decision vector.
//
// An Expr is an immutable, reference-shared DAG node. Graphs are evaluated
// either directly (eval, grad) or after compilation to a Tape, which merges
// structurally identical subgraphs and supports one forward sweep followed by
// a reverse sweep seeded with an arbitrary weight per output. The solver uses
// the latter to get the gradient of a weighted sum of constraints in one pass.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <limits>
#include <map>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <tuple>
#include <unordered_map>
#include <utility>
#include <vector>

namespace logicsmooth {

class ExprError : public std::runtime_error {
public:
	using std::runtime_error::runtime_error;
};

/// Division by zero, square root of a negative number, etc.
class DomainError : public ExprError {
public:
	DomainError(const std::string &what, std::string path)
		: ExprError(what + " at node " + path), path_(std::move(path)) {}
	const std::string &path() const noexcept { return path_; }

private:
	std::string path_;
};

class DimensionError : public ExprError {
public:
	using ExprError::ExprError;
};

/// Raised by gradient routines when a min/max node lies on the path.
class NotDifferentiable : public ExprError {
public:
	explicit NotDifferentiable(std::string path)
		: ExprError("min/max node is not differentiable at node " + path),
		  path_(std::move(path)) {}
	const std::string &path() const noexcept { return path_; }

private:
	std::string path_;
};

namespace detail {

inline std::string format_double(double v)
{
	if (std::isnan(v))
		return "nan";
	if (std::isinf(v))
		return v > 0 ? "inf" : "-inf";
	char buf[64];
	auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
	if (ec != std::errc{})
		throw std::runtime_error("format_double: to_chars failed");
	return std::string(buf, end);
}

} // namespace detail

/// Decision variable bookkeeping: count, optional labels, box bounds.
struct VarSpace {
	static constexpr double inf = std::numeric_limits<double>::infinity();

	std::size_t count = 0;
	std::vector<std::string> names;
	std::vector<double> lower;
	std::vector<double> upper;

	std::size_t add(std::string name = {}, double lo = -inf, double hi = inf)
	{
		if (!(lo <= hi))
			throw std::invalid_argument("VarSpace::add: lower bound exceeds upper bound");
		names.push_back(std::move(name));
		lower.push_back(lo);
		upper.push_back(hi);
		return count++;
	}

	/// Appends n variables and returns the first index.
	std::size_t add_block(std::size_t n, const std::string &prefix = {},
	                      double lo = -inf, double hi = inf)
	{
		std::size_t first = count;
		for (std::size_t i = 0; i < n; ++i)
			add(prefix.empty() ? std::string{} : prefix + std::to_string(i), lo, hi);
		return first;
	}

	void set_bounds(std::size_t i, double lo, double hi)
	{
		if (i >= count)
			throw DimensionError("VarSpace::set_bounds: index out of range");
		if (!(lo <= hi))
			throw std::invalid_argument("VarSpace::set_bounds: lower bound exceeds upper bound");
		lower[i] = lo;
		upper[i] = hi;
	}

	const std::string &name(std::size_t i) const { return names.at(i); }

	bool operator==(const VarSpace &) const = default;
};

enum class Op : std::uint8_t {
	Constant,
	Variable,
	Add,
	Sub,
	Neg,
	Mul,
	Div,
	Pow,
	Sin,
	Cos,
	Sqrt,
	Min,
	Max,
};

inline const char *op_symbol(Op op)
{
	switch (op) {
	case Op::Constant: return "const";
	case Op::Variable: return "var";
	case Op::Add: return "+";
	case Op::Sub: return "-";
	case Op::Neg: return "neg";
	case Op::Mul: return "*";
	case Op::Div: return "/";
	case Op::Pow: return "^";
	case Op::Sin: return "sin";
	case Op::Cos: return "cos";
	case Op::Sqrt: return "sqrt";
	case Op::Min: return "min";
	case Op::Max: return "max";
	}
	return "?";
}

class Expr;

struct ExprNode {
	Op op = Op::Constant;
	double value = 0.0;     // Constant
	std::size_t index = 0;  // Variable
	int exponent = 0;       // Pow
	std::vector<Expr> children;
};

class Expr {
public:
	/// The zero constant.
	Expr() : Expr(constant(0.0)) {}

	static Expr constant(double v)
	{
		auto n = std::make_shared<ExprNode>();
		n->op = Op::Constant;
		n->value = v;
		return Expr(std::move(n));
	}

	static Expr variable(std::size_t index)
	{
		auto n = std::make_shared<ExprNode>();
		n->op = Op::Variable;
		n->index = index;
		return Expr(std::move(n));
	}

	static Expr make(Op op, std::vector<Expr> children, int exponent = 0);

	Op op() const noexcept { return node_->op; }
	double value() const noexcept { return node_->value; }
	std::size_t index() const noexcept { return node_->index; }
	int exponent() const noexcept { return node_->exponent; }
	const std::vector<Expr> &children() const noexcept { return node_->children; }
	const ExprNode *node() const noexcept { return node_.get(); }

	bool is_constant() const noexcept { return op() == Op::Constant; }

	/// Pointer identity (shared subgraph), not structural equality.
	bool same_node(const Expr &o) const noexcept { return node_ == o.node_; }

private:
	explicit Expr(std::shared_ptr<const ExprNode> n) : node_(std::move(n)) {}

	std::shared_ptr<const ExprNode> node_;
};

namespace detail {

inline bool fold(Op op, const std::vector<Expr> &c, int exponent, double &out)
{
	for (const Expr &e : c)
		if (!e.is_constant())
			return false;
	auto v = [&](std::size_t i) { return c[i].value(); };
	switch (op) {
	case Op::Add: out = v(0) + v(1); return true;
	case Op::Sub: out = v(0) - v(1); return true;
	case Op::Neg: out = -v(0); return true;
	case Op::Mul: out = v(0) * v(1); return true;
	case Op::Div:
		if (v(1) == 0.0)
			return false;
		out = v(0) / v(1);
		return true;
	case Op::Pow:
		if (v(0) == 0.0 && exponent < 0)
			return false;
		out = std::pow(v(0), exponent);
		return true;
	case Op::Sin: out = std::sin(v(0)); return true;
	case Op::Cos: out = std::cos(v(0)); return true;
	case Op::Sqrt:
		if (v(0) < 0.0)
			return false;
		out = std::sqrt(v(0));
		return true;
	case Op::Min:
	case Op::Max: {
		out = v(0);
		for (std::size_t i = 1; i < c.size(); ++i)
			out = op == Op::Min ? std::min(out, v(i)) : std::max(out, v(i));
		return true;
	}
	default: return false;
	}
}

inline std::size_t arity(Op op)
{
	switch (op) {
	case Op::Constant:
	case Op::Variable: return 0;
	case Op::Neg:
	case Op::Pow:
	case Op::Sin:
	case Op::Cos:
	case Op::Sqrt: return 1;
	case Op::Min:
	case Op::Max: return std::numeric_limits<std::size_t>::max();
	default: return 2;
	}
}

} // namespace detail

inline Expr Expr::make(Op op, std::vector<Expr> children, int exponent)
{
	std::size_t want = detail::arity(op);
	if (op == Op::Constant || op == Op::Variable)
		throw std::invalid_argument("Expr::make: use Expr::constant / Expr::variable");
	if (want == std::numeric_limits<std::size_t>::max() ? children.empty()
	                                                     : children.size() != want)
		throw std::invalid_argument(std::string("Expr::make: wrong child count for ") +
		                            op_symbol(op));
	double folded;
	if (detail::fold(op, children, exponent, folded))
		return constant(folded);
	auto n = std::make_shared<ExprNode>();
	n->op = op;
	n->exponent = exponent;
	n->children = std::move(children);
	return Expr(std::move(n));
}

inline Expr operator+(const Expr &a, const Expr &b) { return Expr::make(Op::Add, {a, b}); }
inline Expr operator-(const Expr &a, const Expr &b) { return Expr::make(Op::Sub, {a, b}); }
inline Expr operator*(const Expr &a, const Expr &b) { return Expr::make(Op::Mul, {a, b}); }
inline Expr operator/(const Expr &a, const Expr &b) { return Expr::make(Op::Div, {a, b}); }
inline Expr operator-(const Expr &a) { return Expr::make(Op::Neg, {a}); }
inline Expr operator+(const Expr &a, double b) { return a + Expr::constant(b); }
inline Expr operator-(const Expr &a, double b) { return a - Expr::constant(b); }
inline Expr operator*(const Expr &a, double b) { return a * Expr::constant(b); }
inline Expr operator/(const Expr &a, double b) { return a / Expr::constant(b); }
inline Expr operator+(double a, const Expr &b) { return Expr::constant(a) + b; }
inline Expr operator-(double a, const Expr &b) { return Expr::constant(a) - b; }
inline Expr operator*(double a, const Expr &b) { return Expr::constant(a) * b; }
inline Expr operator/(double a, const Expr &b) { return Expr::constant(a) / b; }

inline Expr pow(const Expr &a, int n) { return Expr::make(Op::Pow, {a}, n); }
inline Expr sin(const Expr &a) { return Expr::make(Op::Sin, {a}); }
inline Expr cos(const Expr &a) { return Expr::make(Op::Cos, {a}); }
inline Expr sqrt(const Expr &a) { return Expr::make(Op::Sqrt, {a}); }
inline Expr min(std::vector<Expr> args) { return Expr::make(Op::Min, std::move(args)); }
inline Expr max(std::vector<Expr> args) { return Expr::make(Op::Max, std::move(args)); }

/// Left-folded sum; the empty sum is the constant 0.
inline Expr sum(const std::vector<Expr> &terms)
{
	if (terms.empty())
		return Expr::constant(0.0);
	Expr acc = terms.front();
	for (std::size_t i = 1; i < terms.size(); ++i)
		acc = acc + terms[i];
	return acc;
}

/// Tree-shaped structural equality (constants compared bitwise).
inline bool structurally_equal(const Expr &a, const Expr &b)
{
	if (a.same_node(b))
		return true;
	if (a.op() != b.op())
		return false;
	switch (a.op()) {
	case Op::Constant:
		return a.value() == b.value() && std::signbit(a.value()) == std::signbit(b.value());
	case Op::Variable: return a.index() == b.index();
	case Op::Pow:
		if (a.exponent() != b.exponent())
			return false;
		break;
	default: break;
	}
	if (a.children().size() != b.children().size())
		return false;
	for (std::size_t i = 0; i < a.children().size(); ++i)
		if (!structurally_equal(a.children()[i], b.children()[i]))
			return false;
	return true;
}

/// Path of the first min/max node in prefix order, or empty if the graph is smooth.
inline std::string find_nonsmooth(const Expr &e, const std::string &path = "root")
{
	if (e.op() == Op::Min || e.op() == Op::Max)
		return path;
	for (std::size_t i = 0; i < e.children().size(); ++i) {
		std::string p = find_nonsmooth(e.children()[i], path + "/" + std::to_string(i));
		if (!p.empty())
			return p;
	}
	return {};
}

inline bool is_smooth(const Expr &e) { return find_nonsmooth(e).empty(); }

/// Largest variable index referenced plus one (0 for constant graphs).
inline std::size_t variable_extent(const Expr &e)
{
	std::unordered_map<const ExprNode *, bool> seen;
	std::size_t extent = 0;
	auto walk = [&](auto &self, const Expr &x) -> void {
		if (!seen.emplace(x.node(), true).second)
			return;
		if (x.op() == Op::Variable)
			extent = std::max(extent, x.index() + 1);
		for (const Expr &c : x.children())
			self(self, c);
	};
	walk(walk, e);
	return extent;
}

/// Prefix dump: `(+ (^ z0 2) 3)`. Variables print as their VarSpace name when
/// one is given and non-empty, otherwise as `z<index>`.
inline std::string dump(const Expr &e, const VarSpace *vars = nullptr)
{
	switch (e.op()) {
	case Op::Constant: return detail::format_double(e.value());
	case Op::Variable:
		if (vars && e.index() < vars->count && !vars->names[e.index()].empty())
			return vars->names[e.index()];
		return "z" + std::to_string(e.index());
	default: break;
	}
	std::string s = "(";
	s += op_symbol(e.op());
	for (const Expr &c : e.children()) {
		s += ' ';
		s += dump(c, vars);
	}
	if (e.op() == Op::Pow) {
		s += ' ';
		s += std::to_string(e.exponent());
	}
	s += ')';
	return s;
}

namespace detail {

inline double eval_node(const Expr &e, std::span<const double> z,
                        std::unordered_map<const ExprNode *, double> &memo,
                        const std::string &path)
{
	if (auto it = memo.find(e.node()); it != memo.end())
		return it->second;
	auto child = [&](std::size_t i) {
		return eval_node(e.children()[i], z, memo, path + "/" + std::to_string(i));
	};
	double r = 0.0;
	switch (e.op()) {
	case Op::Constant: r = e.value(); break;
	case Op::Variable:
		if (e.index() >= z.size())
			throw DimensionError("variable z" + std::to_string(e.index()) +
			                     " out of range for point of length " +
			                     std::to_string(z.size()) + " at node " + path);
		r = z[e.index()];
		break;
	case Op::Add: r = child(0) + child(1); break;
	case Op::Sub: r = child(0) - child(1); break;
	case Op::Neg: r = -child(0); break;
	case Op::Mul: r = child(0) * child(1); break;
	case Op::Div: {
		double a = child(0), b = child(1);
		if (b == 0.0)
			throw DomainError("division by zero", path);
		r = a / b;
		break;
	}
	case Op::Pow: {
		double a = child(0);
		if (a == 0.0 && e.exponent() < 0)
			throw DomainError("zero raised to a negative power", path);
		r = std::pow(a, e.exponent());
		break;
	}
	case Op::Sin: r = std::sin(child(0)); break;
	case Op::Cos: r = std::cos(child(0)); break;
	case Op::Sqrt: {
		double a = child(0);
		if (a < 0.0)
			throw DomainError("square root of a negative number", path);
		r = std::sqrt(a);
		break;
	}
	case Op::Min:
	case Op::Max:
		r = child(0);
		for (std::size_t i = 1; i < e.children().size(); ++i)
			r = e.op() == Op::Min ? std::min(r, child(i)) : std::max(r, child(i));
		break;
	}
	memo.emplace(e.node(), r);
	return r;
}

} // namespace detail

inline double eval(const Expr &e, std::span<const double> z)
{
	std::unordered_map<const ExprNode *, double> memo;
	return detail::eval_node(e, z, memo, "root");
}

inline double eval(const Expr &e, const VarSpace &vars, std::span<const double> z)
{
	if (z.size() != vars.count)
		throw DimensionError("point has length " + std::to_string(z.size()) +
		                     ", expected " + std::to_string(vars.count));
	return eval(e, z);
}

/// Flattened, CSE'd instruction list for a set of output expressions.
///
/// A Tape is immutable after construction; each thread evaluates with its own
/// Workspace.
class Tape {
public:
	struct Workspace {
		std::vector<double> values;
		std::vector<double> adjoints;
		std::vector<double> tangents;
		std::vector<double> adjoint_tangents;
	};

	Tape() = default;

	explicit Tape(std::span<const Expr> outputs)
	{
		std::unordered_map<const ExprNode *, std::uint32_t> by_ptr;
		std::map<Key, std::uint32_t> by_struct;
		outputs_.reserve(outputs.size());
		for (const Expr &e : outputs)
			outputs_.push_back(compile(e, by_ptr, by_struct));
	}

	std::size_t size() const noexcept { return instrs_.size(); }
	std::size_t num_outputs() const noexcept { return outputs_.size(); }
	std::size_t variable_extent() const noexcept { return var_extent_; }
	bool smooth() const noexcept { return smooth_; }

	Workspace workspace() const
	{
		std::size_t n = instrs_.size();
		return Workspace{std::vector<double>(n), std::vector<double>(n), std::vector<double>(n),
		                 std::vector<double>(n)};
	}

	/// Evaluates every instruction. Throws DomainError on the first invalid operation.
	void forward(std::span<const double> z, Workspace &ws) const
	{
		if (z.size() < var_extent_)
			throw DimensionError("Tape::forward: point has length " + std::to_string(z.size()) +
			                     ", tape references " + std::to_string(var_extent_) + " variables");
		ws.values.resize(instrs_.size());
		double *v = ws.values.data();
		for (std::size_t i = 0; i < instrs_.size(); ++i) {
			const Instr &in = instrs_[i];
			switch (in.op) {
			case Op::Constant: v[i] = in.value; break;
			case Op::Variable: v[i] = z[in.a]; break;
			case Op::Add: v[i] = v[in.a] + v[in.b]; break;
			case Op::Sub: v[i] = v[in.a] - v[in.b]; break;
			case Op::Neg: v[i] = -v[in.a]; break;
			case Op::Mul: v[i] = v[in.a] * v[in.b]; break;
			case Op::Div:
				if (v[in.b] == 0.0)
					throw DomainError("division by zero", "tape#" + std::to_string(i));
				v[i] = v[in.a] / v[in.b];
				break;
			case Op::Pow: v[i] = ipow(v[in.a], in.exponent, i); break;
			case Op::Sin: v[i] = std::sin(v[in.a]); break;
			case Op::Cos: v[i] = std::cos(v[in.a]); break;
			case Op::Sqrt:
				if (v[in.a] < 0.0)
					throw DomainError("square root of a negative number", "tape#" + std::to_string(i));
				v[i] = std::sqrt(v[in.a]);
				break;
			case Op::Min:
			case Op::Max: {
				double r = v[args_[in.a]];
				for (std::uint32_t k = 1; k < in.b; ++k) {
					double x = v[args_[in.a + k]];
					r = in.op == Op::Min ? std::min(r, x) : std::max(r, x);
				}
				v[i] = r;
				break;
			}
			}
		}
	}

	double output(const Workspace &ws, std::size_t k) const { return ws.values[outputs_[k]]; }

	/// Adds sum_k seeds[k] * grad(output k) into grad (length >= variable_extent()).
	/// Requires a preceding forward() on the same workspace.
	void reverse(std::span<const double> seeds, Workspace &ws, std::span<double> grad) const
	{
		if (!smooth_)
			throw NotDifferentiable("tape");
		if (seeds.size() != outputs_.size())
			throw DimensionError("Tape::reverse: seed count mismatch");
		if (grad.size() < var_extent_)
			throw DimensionError("Tape::reverse: gradient buffer too short");
		ws.adjoints.assign(instrs_.size(), 0.0);
		double *adj = ws.adjoints.data();
		const double *v = ws.values.data();
		for (std::size_t k = 0; k < outputs_.size(); ++k)
			adj[outputs_[k]] += seeds[k];
		for (std::size_t i = instrs_.size(); i-- > 0;) {
			double w = adj[i];
			if (w == 0.0)
				continue;
			const Instr &in = instrs_[i];
			switch (in.op) {
			case Op::Constant: break;
			case Op::Variable: grad[in.a] += w; break;
			case Op::Add: adj[in.a] += w; adj[in.b] += w; break;
			case Op::Sub: adj[in.a] += w; adj[in.b] -= w; break;
			case Op::Neg: adj[in.a] -= w; break;
			case Op::Mul: adj[in.a] += w * v[in.b]; adj[in.b] += w * v[in.a]; break;
			case Op::Div: {
				double q = v[i];
				adj[in.a] += w / v[in.b];
				adj[in.b] -= w * q / v[in.b];
				break;
			}
			case Op::Pow:
				if (in.exponent != 0)
					adj[in.a] += w * in.exponent * ipow(v[in.a], in.exponent - 1, i);
				break;
			case Op::Sin: adj[in.a] += w * std::cos(v[in.a]); break;
			case Op::Cos: adj[in.a] -= w * std::sin(v[in.a]); break;
			case Op::Sqrt:
				if (v[i] == 0.0)
					throw DomainError("derivative of sqrt at zero", "tape#" + std::to_string(i));
				adj[in.a] += w * 0.5 / v[i];
				break;
			case Op::Min:
			case Op::Max: break; // unreachable: smooth_ is false
			}
		}
	}

	/// Forward-over-reverse sweep: adds sum_k seeds[k] * Hess(output k) * dir
	/// into hv. Also recomputes adjoints. Requires a preceding forward().
	void hessian_vector(std::span<const double> seeds, std::span<const double> dir, Workspace &ws,
	                    std::span<double> hv) const
	{
		if (!smooth_)
			throw NotDifferentiable("tape");
		if (seeds.size() != outputs_.size())
			throw DimensionError("Tape::hessian_vector: seed count mismatch");
		if (dir.size() < var_extent_ || hv.size() < var_extent_)
			throw DimensionError("Tape::hessian_vector: direction or output buffer too short");
		const std::size_t n = instrs_.size();
		ws.tangents.resize(n);
		const double *v = ws.values.data();
		double *t = ws.tangents.data();
		for (std::size_t i = 0; i < n; ++i) {
			const Instr &in = instrs_[i];
			switch (in.op) {
			case Op::Constant: t[i] = 0.0; break;
			case Op::Variable: t[i] = dir[in.a]; break;
			case Op::Add: t[i] = t[in.a] + t[in.b]; break;
			case Op::Sub: t[i] = t[in.a] - t[in.b]; break;
			case Op::Neg: t[i] = -t[in.a]; break;
			case Op::Mul: t[i] = t[in.a] * v[in.b] + v[in.a] * t[in.b]; break;
			case Op::Div: t[i] = (t[in.a] - v[i] * t[in.b]) / v[in.b]; break;
			case Op::Pow:
				t[i] = in.exponent == 0 ? 0.0 : in.exponent * ipow(v[in.a], in.exponent - 1, i) * t[in.a];
				break;
			case Op::Sin: t[i] = std::cos(v[in.a]) * t[in.a]; break;
			case Op::Cos: t[i] = -std::sin(v[in.a]) * t[in.a]; break;
			case Op::Sqrt:
				if (v[i] == 0.0)
					throw DomainError("derivative of sqrt at zero", "tape#" + std::to_string(i));
				t[i] = 0.5 * t[in.a] / v[i];
				break;
			case Op::Min:
			case Op::Max: break;
			}
		}
		ws.adjoints.assign(n, 0.0);
		ws.adjoint_tangents.assign(n, 0.0);
		double *adj = ws.adjoints.data();
		double *adt = ws.adjoint_tangents.data();
		for (std::size_t k = 0; k < outputs_.size(); ++k)
			adj[outputs_[k]] += seeds[k];
		for (std::size_t i = n; i-- > 0;) {
			const double w = adj[i], wd = adt[i];
			if (w == 0.0 && wd == 0.0)
				continue;
			const Instr &in = instrs_[i];
			switch (in.op) {
			case Op::Constant: break;
			case Op::Variable: hv[in.a] += wd; break;
			case Op::Add:
				adj[in.a] += w, adt[in.a] += wd;
				adj[in.b] += w, adt[in.b] += wd;
				break;
			case Op::Sub:
				adj[in.a] += w, adt[in.a] += wd;
				adj[in.b] -= w, adt[in.b] -= wd;
				break;
			case Op::Neg: adj[in.a] -= w, adt[in.a] -= wd; break;
			case Op::Mul:
				adj[in.a] += w * v[in.b], adt[in.a] += wd * v[in.b] + w * t[in.b];
				adj[in.b] += w * v[in.a], adt[in.b] += wd * v[in.a] + w * t[in.a];
				break;
			case Op::Div: {
				const double b = v[in.b], q = v[i], tb = t[in.b], tq = t[i];
				adj[in.a] += w / b;
				adt[in.a] += wd / b - w * tb / (b * b);
				adj[in.b] -= w * q / b;
				adt[in.b] -= wd * q / b + w * (tq * b - q * tb) / (b * b);
				break;
			}
			case Op::Pow: {
				const int e = in.exponent;
				if (e == 0)
					break;
				const double a = v[in.a];
				adj[in.a] += w * e * ipow(a, e - 1, i);
				adt[in.a] += wd * e * ipow(a, e - 1, i) +
				             (e == 1 ? 0.0 : w * e * (e - 1) * ipow(a, e - 2, i) * t[in.a]);
				break;
			}
			case Op::Sin: {
				const double a = v[in.a];
				adj[in.a] += w * std::cos(a);
				adt[in.a] += wd * std::cos(a) - w * std::sin(a) * t[in.a];
				break;
			}
			case Op::Cos: {
				const double a = v[in.a];
				adj[in.a] -= w * std::sin(a);
				adt[in.a] -= wd * std::sin(a) + w * std::cos(a) * t[in.a];
				break;
			}
			case Op::Sqrt: {
				const double r = v[i];
				adj[in.a] += w * 0.5 / r;
				adt[in.a] += wd * 0.5 / r - w * 0.5 * t[i] / (r * r);
				break;
			}
			case Op::Min:
			case Op::Max: break;
			}
		}
	}

private:
	struct Instr {
		Op op;
		int exponent = 0;
		double value = 0.0;
		std::uint32_t a = 0; // first operand, variable index, or args_ offset
		std::uint32_t b = 0; // second operand or args count
	};

	using Key = std::tuple<Op, std::uint64_t, int, std::vector<std::uint32_t>>;

	static double ipow(double x, int n, std::size_t at)
	{
		if (n < 0 && x == 0.0)
			throw DomainError("zero raised to a negative power", "tape#" + std::to_string(at));
		switch (n) {
		case 0: return 1.0;
		case 1: return x;
		case 2: return x * x;
		case 3: return x * x * x;
		default: return std::pow(x, n);
		}
	}

	std::uint32_t compile(const Expr &e, std::unordered_map<const ExprNode *, std::uint32_t> &by_ptr,
	                      std::map<Key, std::uint32_t> &by_struct)
	{
		if (auto it = by_ptr.find(e.node()); it != by_ptr.end())
			return it->second;
		std::vector<std::uint32_t> kids;
		kids.reserve(e.children().size());
		for (const Expr &c : e.children())
			kids.push_back(compile(c, by_ptr, by_struct));

		std::uint64_t payload = 0;
		if (e.op() == Op::Constant) {
			double v = e.value();
			static_assert(sizeof v == sizeof payload);
			std::memcpy(&payload, &v, sizeof v);
		} else if (e.op() == Op::Variable) {
			payload = e.index();
		}
		Key key{e.op(), payload, e.exponent(), kids};
		if (auto it = by_struct.find(key); it != by_struct.end()) {
			by_ptr.emplace(e.node(), it->second);
			return it->second;
		}

		Instr in{e.op()};
		in.exponent = e.exponent();
		switch (e.op()) {
		case Op::Constant: in.value = e.value(); break;
		case Op::Variable:
			in.a = static_cast<std::uint32_t>(e.index());
			var_extent_ = std::max(var_extent_, e.index() + 1);
			break;
		case Op::Min:
		case Op::Max:
			smooth_ = false;
			in.a = static_cast<std::uint32_t>(args_.size());
			in.b = static_cast<std::uint32_t>(kids.size());
			args_.insert(args_.end(), kids.begin(), kids.end());
			break;
		default:
			in.a = kids.at(0);
			if (kids.size() > 1)
				in.b = kids[1];
			break;
		}
		auto id = static_cast<std::uint32_t>(instrs_.size());
		instrs_.push_back(in);
		by_ptr.emplace(e.node(), id);
		by_struct.emplace(std::move(key), id);
		return id;
	}

	std::vector<Instr> instrs_;
	std::vector<std::uint32_t> args_;
	std::vector<std::uint32_t> outputs_;
	std::size_t var_extent_ = 0;
	bool smooth_ = true;
};

/// Reverse-mode gradient; the result has length z.size().
inline std::vector<double> grad(const Expr &e, std::span<const double> z)
{
	if (std::string p = find_nonsmooth(e); !p.empty())
		throw NotDifferentiable(p);
	// Dimension and domain errors with a node path come from the tree evaluator.
	(void)eval(e, z);
	Tape tape(std::span<const Expr>(&e, 1));
	auto ws = tape.workspace();
	tape.forward(z, ws);
	std::vector<double> g(z.size(), 0.0);
	const double seed = 1.0;
	tape.reverse(std::span<const double>(&seed, 1), ws, g);
	return g;
}

} // namespace logicsmooth
