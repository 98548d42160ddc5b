#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace laaf {

// Raised when a computation produces non-finite values that the caller asked
// to be treated as fatal (training aborts, gradient checks, ...).
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

namespace ad {

// Primitive kinds. `dot` and `step` are internal extensions: `dot` is a fused
// sum of products (one node per affine layer instead of one per multiply) and
// `step` is the ReLU tangent. Both participate fully in backward and in
// derivative_graph but are not accepted by the generic apply().
enum class Op : std::uint8_t {
  leaf,
  add,
  sub,
  mul,
  div,
  neg,
  sin,
  cos,
  exp,
  tanh,
  sigmoid,
  relu,
  softplus,
  pow_int,
  abs_sq,
  log,
  dot,
  step,
};

class Tape;

// Handle to a scalar node on a tape. Valid only for the tape that created it.
struct Var {
  std::int32_t index = -1;
  Tape* tape = nullptr;
  double value() const;
};

// Primal values live in a parallel dense array (Tape::vals_) so the hot
// gather loops touch 8-byte strides.
struct Node {
  Op op;
  std::int32_t a;  // operand index; pair-pool offset for dot
  std::int32_t b;  // second operand; integer exponent for pow_int; pair count for dot
};

// Append-only scalar expression tape. Nodes are topologically ordered by
// construction: every operand index precedes the node that uses it. Primal
// values are computed eagerly at emission. A tape is single-owner; parallel
// code runs independent tapes.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  std::size_t size() const { return nodes_.size(); }
  void reserve(std::size_t n) { nodes_.reserve(n); }

  // Drops all nodes but keeps allocated capacity, so a cleared tape is a
  // cheap fresh tape for the next iteration.
  void clear() {
    nodes_.clear();
    vals_.clear();
    pairs_.clear();
    const0_ = const1_ = const2_ = -1;
  }

  Var lift(double v) {
    if (!std::isfinite(v)) throw std::invalid_argument("Tape::lift: non-finite input");
    return emit(Op::leaf, -1, -1, v);
  }

  // Leaf with small-constant caching (0, 1, 2 recur constantly in derivative
  // graphs). Constants are ordinary leaves as far as backward is concerned.
  Var constant(double v) {
    if (v == 0.0 && const0_ >= 0) return at(const0_);
    if (v == 1.0 && const1_ >= 0) return at(const1_);
    if (v == 2.0 && const2_ >= 0) return at(const2_);
    Var c = lift(v);
    if (v == 0.0) const0_ = c.index;
    else if (v == 1.0) const1_ = c.index;
    else if (v == 2.0) const2_ = c.index;
    return c;
  }

  double value(Var v) const { return vals_[idx(v)]; }
  bool is_leaf(Var v) const { return node(v).op == Op::leaf; }

  Var add(Var x, Var y) {
    const std::int32_t a = idx(x), b = idx2(y);
    return emit(Op::add, a, b, vals_[a] + vals_[b]);
  }
  Var sub(Var x, Var y) {
    const std::int32_t a = idx(x), b = idx2(y);
    return emit(Op::sub, a, b, vals_[a] - vals_[b]);
  }
  Var mul(Var x, Var y) {
    const std::int32_t a = idx(x), b = idx2(y);
    return emit(Op::mul, a, b, vals_[a] * vals_[b]);
  }
  Var div(Var x, Var y) {
    const std::int32_t a = idx(x), b = idx2(y);
    if (vals_[b] == 0.0) throw std::domain_error("Tape::div: division by zero primal");
    return emit(Op::div, a, b, vals_[a] / vals_[b]);
  }
  Var neg(Var x) {
    const std::int32_t a = idx(x);
    return emit(Op::neg, a, -1, -vals_[a]);
  }
  Var sin(Var x) {
    const std::int32_t a = idx(x);
    return emit(Op::sin, a, -1, std::sin(vals_[a]));
  }
  Var cos(Var x) {
    const std::int32_t a = idx(x);
    return emit(Op::cos, a, -1, std::cos(vals_[a]));
  }
  Var exp(Var x) {
    const std::int32_t a = idx(x);
    return emit(Op::exp, a, -1, std::exp(vals_[a]));
  }
  Var tanh(Var x) {
    const std::int32_t a = idx(x);
    return emit(Op::tanh, a, -1, std::tanh(vals_[a]));
  }
  Var sigmoid(Var x) {
    const std::int32_t a = idx(x);
    const double v = vals_[a];
    const double s = v >= 0.0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v));
    return emit(Op::sigmoid, a, -1, s);
  }
  Var relu(Var x) {
    const std::int32_t a = idx(x);
    return emit(Op::relu, a, -1, vals_[a] > 0.0 ? vals_[a] : 0.0);
  }
  Var softplus(Var x) {
    const std::int32_t a = idx(x);
    const double v = vals_[a];
    const double s = v > 0.0 ? v + std::log1p(std::exp(-v)) : std::log1p(std::exp(v));
    return emit(Op::softplus, a, -1, s);
  }
  Var log(Var x) {
    const std::int32_t a = idx(x);
    if (vals_[a] <= 0.0) throw std::domain_error("Tape::log: non-positive argument");
    return emit(Op::log, a, -1, std::log(vals_[a]));
  }
  Var pow_int(Var x, int k) {
    const std::int32_t a = idx(x);
    if (vals_[a] == 0.0 && k < 0)
      throw std::domain_error("Tape::pow_int: zero base with negative exponent");
    return emit(Op::pow_int, a, k, ipow(vals_[a], k));
  }
  Var abs_sq(Var x) {
    const std::int32_t a = idx(x);
    return emit(Op::abs_sq, a, -1, vals_[a] * vals_[a]);
  }

  // Fused sum of products sum_i lhs[i]*rhs[i]; single node regardless of
  // length. Summation uses four fixed-order partial accumulators, so results
  // are deterministic (but not identical to a strictly sequential sum).
  Var dot(std::span<const Var> lhs, std::span<const Var> rhs) {
    if (lhs.size() != rhs.size()) throw std::invalid_argument("Tape::dot: length mismatch");
    if (lhs.empty()) return constant(0.0);
    const std::size_t n = lhs.size();
    const std::size_t off = stage_pairs(lhs, rhs, n);
    const double acc = pair_sum(pairs_.data() + off, n);
    return emit(Op::dot, static_cast<std::int32_t>(off), static_cast<std::int32_t>(n), acc);
  }

  // sum_i lhs[i]*rhs[i] + bias as a single dot node (the bias enters as the
  // pair (bias, 1), so bias*1.0 contributes exactly bias).
  Var affine(std::span<const Var> lhs, std::span<const Var> rhs, Var bias) {
    if (lhs.size() != rhs.size()) throw std::invalid_argument("Tape::affine: length mismatch");
    const std::int32_t one = constant(1.0).index;
    const std::int32_t b = idx(bias);
    const std::size_t n = lhs.size();
    const std::size_t off = stage_pairs(lhs, rhs, n, b, one);
    const double acc = pair_sum(pairs_.data() + off, n) + vals_[b];
    return emit(Op::dot, static_cast<std::int32_t>(off), static_cast<std::int32_t>(n + 1), acc);
  }

  // Generic primitive application restricted to the public kinds.
  Var apply(Op kind, std::span<const Var> operands) {
    switch (kind) {
      case Op::add: return binary(kind, operands, [this](Var x, Var y) { return add(x, y); });
      case Op::sub: return binary(kind, operands, [this](Var x, Var y) { return sub(x, y); });
      case Op::mul: return binary(kind, operands, [this](Var x, Var y) { return mul(x, y); });
      case Op::div: return binary(kind, operands, [this](Var x, Var y) { return div(x, y); });
      case Op::neg: return unary(kind, operands, [this](Var x) { return neg(x); });
      case Op::sin: return unary(kind, operands, [this](Var x) { return sin(x); });
      case Op::cos: return unary(kind, operands, [this](Var x) { return cos(x); });
      case Op::exp: return unary(kind, operands, [this](Var x) { return exp(x); });
      case Op::tanh: return unary(kind, operands, [this](Var x) { return tanh(x); });
      case Op::sigmoid: return unary(kind, operands, [this](Var x) { return sigmoid(x); });
      case Op::relu: return unary(kind, operands, [this](Var x) { return relu(x); });
      case Op::softplus: return unary(kind, operands, [this](Var x) { return softplus(x); });
      case Op::abs_sq: return unary(kind, operands, [this](Var x) { return abs_sq(x); });
      case Op::pow_int:
        throw std::invalid_argument("Tape::apply: use pow_int(var, exponent)");
      default:
        throw std::invalid_argument("Tape::apply: not a public primitive kind");
    }
  }

  // Reverse sweep from `output`. Returns one adjoint per node (index ->
  // d output / d node); nodes that are not ancestors of output get 0.
  void backward_into(Var output, std::vector<double>& adj) const {
    const std::int32_t out = idx(output);
    adj.assign(nodes_.size(), 0.0);
    adj[out] = 1.0;
    for (std::int32_t i = out; i >= 0; --i) {
      const double g = adj[i];
      if (g == 0.0) continue;
      const Node& n = nodes_[i];
      switch (n.op) {
        case Op::leaf:
        case Op::step:
          break;
        case Op::add:
          adj[n.a] += g;
          adj[n.b] += g;
          break;
        case Op::sub:
          adj[n.a] += g;
          adj[n.b] -= g;
          break;
        case Op::mul:
          adj[n.a] += g * vals_[n.b];
          adj[n.b] += g * vals_[n.a];
          break;
        case Op::div: {
          const double b = vals_[n.b];
          adj[n.a] += g / b;
          adj[n.b] -= g * vals_[i] / b;  // -a/b^2 == -val/b
          break;
        }
        case Op::neg:
          adj[n.a] -= g;
          break;
        case Op::sin:
          adj[n.a] += g * std::cos(vals_[n.a]);
          break;
        case Op::cos:
          adj[n.a] -= g * std::sin(vals_[n.a]);
          break;
        case Op::exp:
          adj[n.a] += g * vals_[i];
          break;
        case Op::tanh:
          adj[n.a] += g * (1.0 - vals_[i] * vals_[i]);
          break;
        case Op::sigmoid:
          adj[n.a] += g * vals_[i] * (1.0 - vals_[i]);
          break;
        case Op::relu:
          if (vals_[n.a] > 0.0) adj[n.a] += g;
          break;
        case Op::softplus: {
          const double v = vals_[n.a];
          const double s = v >= 0.0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v));
          adj[n.a] += g * s;
          break;
        }
        case Op::pow_int:
          if (n.b != 0) adj[n.a] += g * n.b * ipow(vals_[n.a], n.b - 1);
          break;
        case Op::log:
          adj[n.a] += g / vals_[n.a];
          break;
        case Op::abs_sq:
          adj[n.a] += g * 2.0 * vals_[n.a];
          break;
        case Op::dot: {
          const std::int32_t* p = pairs_.data() + n.a;
          for (std::int32_t k = 0; k < n.b; ++k) {
            const std::int32_t l = p[2 * k], r = p[2 * k + 1];
            adj[l] += g * vals_[r];
            adj[r] += g * vals_[l];
          }
          break;
        }
      }
    }
  }

  std::vector<double> backward(Var output) const {
    std::vector<double> adj;
    backward_into(output, adj);
    return adj;
  }

  // Emits, as new primitive nodes on this tape, a graph computing
  // d output / d wrt. The result is differentiable again (nesting-safe).
  Var derivative_graph(Var output, Var wrt) {
    const std::int32_t out = idx(output);
    if (!is_leaf(wrt)) throw std::invalid_argument("derivative_graph: wrt must be a leaf");
    if (wrt.index > out) return constant(0.0);

    anc_.assign(out + 1, 0);
    anc_[out] = 1;
    for (std::int32_t i = out; i >= 0; --i) {
      if (!anc_[i]) continue;
      const Node& n = nodes_[i];
      switch (arity(n.op)) {
        case 2:
          anc_[n.b] = 1;
          [[fallthrough]];
        case 1:
          anc_[n.a] = 1;
          break;
        default:
          if (n.op == Op::dot) {
            const std::int32_t* p = pairs_.data() + n.a;
            for (std::int32_t k = 0; k < 2 * n.b; ++k) anc_[p[k]] = 1;
          }
          break;
      }
    }
    if (!anc_[wrt.index]) return constant(0.0);

    tang_.assign(out + 1, -1);
    tang_[wrt.index] = constant(1.0).index;
    for (std::int32_t i = wrt.index + 1; i <= out; ++i) {
      if (anc_[i]) tang_[i] = tangent_of(i);
    }
    const std::int32_t t = tang_[out];
    return t < 0 ? constant(0.0) : at(t);
  }

 private:
  std::int32_t idx(Var v) const {
    if (v.tape != this) throw std::invalid_argument("Var used with a foreign tape");
    if (v.index < 0 || v.index >= static_cast<std::int32_t>(nodes_.size()))
      throw std::invalid_argument("Var index out of range");
    return v.index;
  }
  // Second-operand check: reports tape mismatch rather than a generic error.
  std::int32_t idx2(Var v) const { return idx(v); }
  Var at(std::int32_t i) { return Var{i, this}; }
  const Node& node(Var v) const { return nodes_[idx(v)]; }

  // Copies operand indices into the pair pool (optionally with a trailing
  // extra pair). Hot path: only the leading operands are validated; vars are
  // produced by tape APIs, so per-element revalidation is skipped.
  std::size_t stage_pairs(std::span<const Var> lhs, std::span<const Var> rhs, std::size_t n,
                          std::int32_t extra_l = -1, std::int32_t extra_r = -1) {
    if (n > 0) {
      idx(lhs[0]);
      idx2(rhs[0]);
    }
    const std::size_t extra = extra_l >= 0 ? 1 : 0;
    const std::size_t off = pairs_.size();
    pairs_.resize(off + 2 * (n + extra));
    std::int32_t* pp = pairs_.data() + off;
    for (std::size_t i = 0; i < n; ++i) {
      pp[2 * i] = lhs[i].index;
      pp[2 * i + 1] = rhs[i].index;
    }
    if (extra) {
      pp[2 * n] = extra_l;
      pp[2 * n + 1] = extra_r;
    }
    return off;
  }

  double pair_sum(const std::int32_t* pp, std::size_t n) const {
    const double* v = vals_.data();
    double a0 = 0.0, a1 = 0.0, a2 = 0.0, a3 = 0.0;
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
      a0 += v[pp[2 * i + 0]] * v[pp[2 * i + 1]];
      a1 += v[pp[2 * i + 2]] * v[pp[2 * i + 3]];
      a2 += v[pp[2 * i + 4]] * v[pp[2 * i + 5]];
      a3 += v[pp[2 * i + 6]] * v[pp[2 * i + 7]];
    }
    for (; i < n; ++i) a0 += v[pp[2 * i]] * v[pp[2 * i + 1]];
    return (a0 + a1) + (a2 + a3);
  }

  Var emit(Op op, std::int32_t a, std::int32_t b, double val) {
    nodes_.push_back(Node{op, a, b});
    vals_.push_back(val);
    return Var{static_cast<std::int32_t>(nodes_.size() - 1), this};
  }

  static double ipow(double x, int k) {
    if (k < 0) return 1.0 / ipow(x, -k);
    double r = 1.0, base = x;
    for (int e = k; e > 0; e >>= 1, base *= base)
      if (e & 1) r *= base;
    return r;
  }

  static int arity(Op op) {
    switch (op) {
      case Op::add:
      case Op::sub:
      case Op::mul:
      case Op::div:
        return 2;
      case Op::leaf:
      case Op::dot:
        return 0;
      default:
        return 1;
    }
  }

  template <class F>
  Var unary(Op kind, std::span<const Var> ops, F f) {
    if (ops.size() != 1) throw std::invalid_argument("Tape::apply: unary kind wants 1 operand");
    (void)kind;
    return f(ops[0]);
  }
  template <class F>
  Var binary(Op kind, std::span<const Var> ops, F f) {
    if (ops.size() != 2) throw std::invalid_argument("Tape::apply: binary kind wants 2 operands");
    (void)kind;
    return f(ops[0], ops[1]);
  }

  bool is_one(std::int32_t i) const { return i == const1_ && i >= 0; }
  bool is_zero(std::int32_t i) const { return i == const0_ && i >= 0; }

  // Tangent-algebra helpers: -1 encodes an identically-zero tangent.
  std::int32_t t_mul(std::int32_t x, std::int32_t y) {
    if (x < 0 || y < 0 || is_zero(x) || is_zero(y)) return -1;
    if (is_one(x)) return y;
    if (is_one(y)) return x;
    return mul(at(x), at(y)).index;
  }
  std::int32_t t_add(std::int32_t x, std::int32_t y) {
    if (x < 0) return y;
    if (y < 0) return x;
    return add(at(x), at(y)).index;
  }
  std::int32_t t_sub(std::int32_t x, std::int32_t y) {
    if (y < 0) return x;
    if (x < 0) return neg(at(y)).index;
    return sub(at(x), at(y)).index;
  }

  std::int32_t tangent_of(std::int32_t i) {
    const Node n = nodes_[i];  // copy: emissions below may reallocate
    const auto ta = [&] { return arity(n.op) >= 1 ? tang_[n.a] : -1; };
    const auto tb = [&] { return arity(n.op) >= 2 ? tang_[n.b] : -1; };
    switch (n.op) {
      case Op::leaf:
      case Op::step:
        return -1;
      case Op::add:
        return t_add(ta(), tb());
      case Op::sub:
        return t_sub(ta(), tb());
      case Op::mul:
        return t_add(t_mul(ta(), n.b), t_mul(n.a, tb()));
      case Op::div: {
        const std::int32_t num = t_sub(ta(), t_mul(i, tb()));
        return num < 0 ? -1 : div(at(num), at(n.b)).index;
      }
      case Op::neg: {
        const std::int32_t t = ta();
        return t < 0 ? -1 : neg(at(t)).index;
      }
      case Op::sin: {
        const std::int32_t t = ta();
        return t < 0 ? -1 : t_mul(cos(at(n.a)).index, t);
      }
      case Op::cos: {
        const std::int32_t t = ta();
        if (t < 0) return -1;
        return neg(at(t_mul(sin(at(n.a)).index, t))).index;
      }
      case Op::exp:
        return t_mul(i, ta());
      case Op::tanh: {
        const std::int32_t t = ta();
        if (t < 0) return -1;
        const Var sq = mul(at(i), at(i));
        return t_mul(sub(constant(1.0), sq).index, t);
      }
      case Op::sigmoid: {
        const std::int32_t t = ta();
        if (t < 0) return -1;
        const Var om = sub(constant(1.0), at(i));
        return t_mul(mul(at(i), om).index, t);
      }
      case Op::relu: {
        const std::int32_t t = ta();
        if (t < 0) return -1;
        const Var st = emit(Op::step, n.a, -1, vals_[n.a] > 0.0 ? 1.0 : 0.0);
        return t_mul(st.index, t);
      }
      case Op::softplus: {
        const std::int32_t t = ta();
        return t < 0 ? -1 : t_mul(sigmoid(at(n.a)).index, t);
      }
      case Op::pow_int: {
        const std::int32_t t = ta();
        if (t < 0 || n.b == 0) return -1;
        if (n.b == 1) return t;
        const Var base = n.b == 2 ? at(n.a) : pow_int(at(n.a), n.b - 1);
        const Var coeff = mul(constant(static_cast<double>(n.b)), base);
        return t_mul(coeff.index, t);
      }
      case Op::abs_sq: {
        const std::int32_t t = ta();
        if (t < 0) return -1;
        return t_mul(mul(constant(2.0), at(n.a)).index, t);
      }
      case Op::log: {
        const std::int32_t t = ta();
        return t < 0 ? -1 : div(at(t), at(n.a)).index;
      }
      case Op::dot: {
        scratch_l_.clear();
        scratch_r_.clear();
        const std::int32_t off = n.a;
        for (std::int32_t k = 0; k < n.b; ++k) {
          const std::int32_t l = pairs_[off + 2 * k], r = pairs_[off + 2 * k + 1];
          if (tang_[l] >= 0 && !is_zero(tang_[l])) {
            scratch_l_.push_back(at(tang_[l]));
            scratch_r_.push_back(at(r));
          }
          if (tang_[r] >= 0 && !is_zero(tang_[r])) {
            scratch_l_.push_back(at(l));
            scratch_r_.push_back(at(tang_[r]));
          }
        }
        if (scratch_l_.empty()) return -1;
        if (scratch_l_.size() == 1) return t_mul(scratch_l_[0].index, scratch_r_[0].index);
        return dot(scratch_l_, scratch_r_).index;
      }
    }
    throw std::logic_error("tangent_of: unsupported primitive in the subgraph");
  }

  std::vector<Node> nodes_;
  std::vector<double> vals_;
  std::vector<std::int32_t> pairs_;
  std::int32_t const0_ = -1, const1_ = -1, const2_ = -1;
  // scratch buffers reused across derivative_graph calls
  std::vector<std::uint8_t> anc_;
  std::vector<std::int32_t> tang_;
  std::vector<Var> scratch_l_, scratch_r_;
};

inline double Var::value() const { return tape->value(*this); }

inline Var operator+(Var x, Var y) { return x.tape->add(x, y); }
inline Var operator-(Var x, Var y) { return x.tape->sub(x, y); }
inline Var operator*(Var x, Var y) { return x.tape->mul(x, y); }
inline Var operator/(Var x, Var y) { return x.tape->div(x, y); }
inline Var operator-(Var x) { return x.tape->neg(x); }
inline Var operator+(Var x, double c) { return x + x.tape->constant(c); }
inline Var operator+(double c, Var x) { return x.tape->constant(c) + x; }
inline Var operator-(Var x, double c) { return x - x.tape->constant(c); }
inline Var operator-(double c, Var x) { return x.tape->constant(c) - x; }
inline Var operator*(Var x, double c) { return x * x.tape->constant(c); }
inline Var operator*(double c, Var x) { return x.tape->constant(c) * x; }
inline Var operator/(Var x, double c) { return x / x.tape->constant(c); }
inline Var operator/(double c, Var x) { return x.tape->constant(c) / x; }

inline Var sin(Var x) { return x.tape->sin(x); }
inline Var cos(Var x) { return x.tape->cos(x); }
inline Var exp(Var x) { return x.tape->exp(x); }
inline Var tanh(Var x) { return x.tape->tanh(x); }
inline Var sigmoid(Var x) { return x.tape->sigmoid(x); }
inline Var relu(Var x) { return x.tape->relu(x); }
inline Var softplus(Var x) { return x.tape->softplus(x); }
inline Var log(Var x) { return x.tape->log(x); }
inline Var pow_int(Var x, int k) { return x.tape->pow_int(x, k); }
inline Var abs_sq(Var x) { return x.tape->abs_sq(x); }
inline Var derivative_graph(Var output, Var wrt) {
  return output.tape->derivative_graph(output, wrt);
}

// Scalar function expressed as a tape program over lifted coordinates.
using ScalarFn = std::function<Var(Tape&, std::span<const Var>)>;

// Max over coordinates of |AD gradient - central difference| / (|cd| + 1e-12).
inline double grad_check(const ScalarFn& f, std::span<const double> point, double step) {
  if (step <= 0.0) throw std::invalid_argument("grad_check: step must be positive");
  const std::size_t n = point.size();

  const auto eval = [&](std::span<const double> x) {
    Tape t;
    std::vector<Var> leaves;
    leaves.reserve(x.size());
    for (double xi : x) leaves.push_back(t.lift(xi));
    const double v = f(t, leaves).value();
    if (!std::isfinite(v)) throw NumericError("grad_check: non-finite function value");
    return v;
  };

  Tape t;
  std::vector<Var> leaves;
  leaves.reserve(n);
  for (double xi : point) leaves.push_back(t.lift(xi));
  const Var y = f(t, leaves);
  if (!std::isfinite(y.value())) throw NumericError("grad_check: non-finite function value");
  const std::vector<double> adj = t.backward(y);

  std::vector<double> x(point.begin(), point.end());
  double worst = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double xi = x[i];
    x[i] = xi + step;
    const double fp = eval(x);
    x[i] = xi - step;
    const double fm = eval(x);
    x[i] = xi;
    const double cd = (fp - fm) / (2.0 * step);
    const double err = std::abs(adj[leaves[i].index] - cd) / (std::abs(cd) + 1e-12);
    if (err > worst) worst = err;
  }
  return worst;
}

}  // namespace ad
}  // namespace laaf
