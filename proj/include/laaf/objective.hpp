#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "laaf/network.hpp"
#include "laaf/parallel.hpp"

namespace laaf {

struct DataSet {
  std::vector<std::vector<double>> x;
  std::vector<std::vector<double>> y;
  std::size_t size() const { return x.size(); }
};

struct InverseParam {
  std::string name;
  double initial = 0.0;
  bool trainable = true;
};

// PDE residual builder. `u` is the (scalar) network output at the leaf input
// vars `x`; input derivatives are taken with derivative_graph inside build,
// so the returned residual stays differentiable with respect to everything.
struct ResidualOperator {
  int input_dim = 1;
  std::vector<int> derivative_orders;  // max requested order per input dim
  std::vector<InverseParam> inverse_params;
  std::function<ad::Var(ad::Tape&, ad::Var u, std::span<const ad::Var> x,
                        std::span<const ad::Var> inv)>
      build;
};

enum class RecoveryKind { none, gaaf, llaaf, nlaaf };

inline RecoveryKind recovery_for(SlopeMode mode) {
  switch (mode) {
    case SlopeMode::fixed: return RecoveryKind::none;
    case SlopeMode::gaaf: return RecoveryKind::gaaf;
    case SlopeMode::llaaf: return RecoveryKind::llaaf;
    case SlopeMode::nlaaf: return RecoveryKind::nlaaf;
  }
  return RecoveryKind::none;
}

// Composite loss description:
//   total = w_residual * MSE_residual + w_data * MSE_data + w_recovery * S(a).
struct ObjectiveSpec {
  double w_residual = 0.0;  // W_F
  double w_data = 1.0;      // W_u
  double w_recovery = 0.0;  // W_a
  DataSet data;
  std::vector<std::vector<double>> residual_points;
  const ResidualOperator* residual = nullptr;
  RecoveryKind recovery = RecoveryKind::none;
};

inline void validate_spec(const ObjectiveSpec& spec, const NetworkParams& p) {
  if (spec.w_data < 0 || spec.w_residual < 0 || spec.w_recovery < 0)
    throw std::invalid_argument("objective: negative weight");
  if (spec.w_data > 0 && spec.data.size() == 0)
    throw std::invalid_argument("objective: data term enabled with empty data set");
  if (spec.data.x.size() != spec.data.y.size())
    throw std::invalid_argument("objective: data x/y length mismatch");
  if (spec.w_residual > 0) {
    if (spec.residual == nullptr || spec.residual_points.empty())
      throw std::invalid_argument("objective: residual term enabled without operator or points");
    if (spec.residual->input_dim != p.input_dim())
      throw std::invalid_argument("objective: residual operator input dimension mismatch");
  }
  if (spec.w_recovery > 0 && spec.recovery != recovery_for(p.mode.slope))
    throw std::invalid_argument("objective: recovery kind does not match activation mode");
}

// ---------------------------------------------------------------------------
// Loss terms on a single tape
// ---------------------------------------------------------------------------

inline ad::Var squared_error(ad::Tape& t, std::span<const ad::Var> u,
                             std::span<const double> target) {
  ad::Var acc{};
  for (std::size_t c = 0; c < u.size(); ++c) {
    const ad::Var e = t.abs_sq(t.sub(u[c], t.lift(target[c])));
    acc = c == 0 ? e : t.add(acc, e);
  }
  return acc;
}

// (1/N_u) sum |y_i - u(x_i)|^2
inline ad::Var mse_data(BoundNetwork& net, const DataSet& data) {
  if (data.size() == 0) throw std::invalid_argument("mse_data: empty data set");
  ad::Tape& t = *net.tape;
  ad::Var acc{};
  std::vector<ad::Var> in;
  for (std::size_t i = 0; i < data.size(); ++i) {
    in.clear();
    for (double x : data.x[i]) in.push_back(t.lift(x));
    const std::vector<ad::Var> u = forward(net, in);
    const ad::Var e = squared_error(t, u, data.y[i]);
    acc = i == 0 ? e : t.add(acc, e);
  }
  return t.mul(t.lift(1.0 / static_cast<double>(data.size())), acc);
}

// (1/N_f) sum |F(x_i)|^2 with the residual built per point on leaf inputs.
inline ad::Var mse_residual(BoundNetwork& net, std::span<const std::vector<double>> points,
                            const ResidualOperator& op, std::span<const ad::Var> inverse) {
  if (points.empty()) throw std::invalid_argument("mse_residual: empty point set");
  if (net.params->output_dim() != 1)
    throw std::invalid_argument("mse_residual: residual problems use scalar-output networks");
  ad::Tape& t = *net.tape;
  ad::Var acc{};
  std::vector<ad::Var> in;
  for (std::size_t i = 0; i < points.size(); ++i) {
    in.clear();
    for (double x : points[i]) in.push_back(t.lift(x));
    const ad::Var u = forward(net, in)[0];
    const ad::Var r = op.build(t, u, in, inverse);
    const ad::Var e = t.abs_sq(r);
    acc = i == 0 ? e : t.add(acc, e);
  }
  return t.mul(t.lift(1.0 / static_cast<double>(points.size())), acc);
}

// Slope recovery S(a): reciprocal of the mean exponential of the per-layer
// (llaaf) or per-layer-averaged (nlaaf) slopes. Strictly positive, strictly
// decreasing in every slope, gradient never vanishes. The gaaf form 1/exp(a)
// is the single-slope degenerate case (flagged in reports as an extension).
inline ad::Var slope_recovery(BoundNetwork& net, RecoveryKind kind) {
  const NetworkParams& p = *net.params;
  if (kind == RecoveryKind::none || kind != recovery_for(p.mode.slope))
    throw std::invalid_argument("slope_recovery: kind does not match activation mode");
  ad::Tape& t = *net.tape;
  if (kind == RecoveryKind::gaaf) return t.div(t.constant(1.0), t.exp(net.a[0][0]));

  const int hidden = p.hidden_layers();
  ad::Var sum{};
  for (int k = 1; k <= hidden; ++k) {
    ad::Var arg{};
    if (kind == RecoveryKind::llaaf) {
      arg = net.a[k - 1][0];
    } else {
      ad::Var s{};
      for (std::size_t j = 0; j < net.a[k - 1].size(); ++j)
        s = j == 0 ? net.a[k - 1][j] : t.add(s, net.a[k - 1][j]);
      arg = t.mul(t.lift(1.0 / static_cast<double>(net.a[k - 1].size())), s);
    }
    const ad::Var e = t.exp(arg);
    sum = k == 1 ? e : t.add(sum, e);
  }
  const ad::Var mean = t.mul(t.lift(1.0 / static_cast<double>(hidden)), sum);
  return t.div(t.constant(1.0), mean);
}

inline double slope_recovery_value(const NetworkParams& p) {
  switch (p.mode.slope) {
    case SlopeMode::fixed:
      throw std::invalid_argument("slope_recovery_value: fixed mode");
    case SlopeMode::gaaf:
      return 1.0 / std::exp(p.slopes[0][0]);
    case SlopeMode::llaaf: {
      double s = 0.0;
      for (const auto& a : p.slopes) s += std::exp(a[0]);
      return 1.0 / (s / static_cast<double>(p.slopes.size()));
    }
    case SlopeMode::nlaaf: {
      double s = 0.0;
      for (const auto& a : p.slopes) {
        const double m = std::accumulate(a.begin(), a.end(), 0.0) / static_cast<double>(a.size());
        s += std::exp(m);
      }
      return 1.0 / (s / static_cast<double>(p.slopes.size()));
    }
  }
  return 0.0;
}

// Numerically stabilized -log softmax(logits)[label].
inline ad::Var cross_entropy(ad::Tape& t, std::span<const ad::Var> logits, int label) {
  if (logits.size() < 2) throw std::invalid_argument("cross_entropy: need at least 2 classes");
  if (label < 0 || label >= static_cast<int>(logits.size()))
    throw std::invalid_argument("cross_entropy: label out of range");
  double m = logits[0].value();
  for (const ad::Var& z : logits) m = std::max(m, z.value());
  const ad::Var mc = t.lift(m);
  ad::Var s{};
  for (std::size_t i = 0; i < logits.size(); ++i) {
    const ad::Var e = t.exp(t.sub(logits[i], mc));
    s = i == 0 ? e : t.add(s, e);
  }
  const ad::Var lse = t.add(t.log(s), mc);
  return t.sub(lse, logits[label]);
}

struct LossTerms {
  ad::Var total{};
  ad::Var data{};
  ad::Var residual{};
  ad::Var recovery{};
  bool has_data = false, has_residual = false, has_recovery = false;
};

// Weighted composite loss on one tape; each component separately retrievable.
inline LossTerms total_loss(BoundNetwork& net, const ObjectiveSpec& spec,
                            std::span<const ad::Var> inverse = {}) {
  validate_spec(spec, *net.params);
  ad::Tape& t = *net.tape;
  LossTerms out;
  ad::Var acc{};
  bool first = true;
  const auto weigh = [&](ad::Var term, double w) {
    const ad::Var scaled = t.mul(t.lift(w), term);
    acc = first ? scaled : t.add(acc, scaled);
    first = false;
  };
  if (spec.w_residual > 0) {
    out.residual = mse_residual(net, spec.residual_points, *spec.residual, inverse);
    out.has_residual = true;
    weigh(out.residual, spec.w_residual);
  }
  if (spec.w_data > 0) {
    out.data = mse_data(net, spec.data);
    out.has_data = true;
    weigh(out.data, spec.w_data);
  }
  if (spec.w_recovery > 0) {
    out.recovery = slope_recovery(net, spec.recovery);
    out.has_recovery = true;
    weigh(out.recovery, spec.w_recovery);
  }
  out.total = first ? t.constant(0.0) : acc;
  return out;
}

// Convenience one-shot forms matching the operation signatures.
inline double mse_data(const NetworkParams& p, const DataSet& data) {
  ad::Tape t;
  BoundNetwork net = bind(t, p);
  return mse_data(net, data).value();
}

// ---------------------------------------------------------------------------
// Chunked value+gradient evaluation.
//
// Points are processed in fixed-size chunks, one tape per chunk, chunks
// distributed over the thread pool; per-chunk partial sums are reduced in
// chunk order on the calling thread, so results are bitwise independent of
// the degree of parallelism.
// ---------------------------------------------------------------------------

inline std::vector<double> initial_inverse(const ObjectiveSpec& spec) {
  std::vector<double> v;
  if (spec.residual)
    for (const auto& ip : spec.residual->inverse_params) v.push_back(ip.initial);
  return v;
}

struct LossBreakdown {
  double total = 0.0, data = 0.0, residual = 0.0, recovery = 0.0;
};

struct LossGrad {
  LossBreakdown parts;
  std::vector<double> grad;  // flat network params, then trainable inverse params
};

struct EvalOptions {
  std::size_t chunk = 32;
  bool parallel = true;
  bool want_grad = true;
  std::span<const std::size_t> data_subset = {};  // minibatch indices; empty = all
};

namespace detail {

struct ChunkScratch {
  ad::Tape tape;
  std::vector<double> adj;
  std::vector<ad::Var> in;
};

inline ChunkScratch& chunk_scratch() {
  static thread_local ChunkScratch s;
  return s;
}

}  // namespace detail

inline LossGrad eval_loss(const NetworkParams& p, std::span<const double> inverse,
                          const ObjectiveSpec& spec, const EvalOptions& opt = {}) {
  validate_spec(spec, p);
  const std::size_t n_inv = spec.residual ? spec.residual->inverse_params.size() : 0;
  if (inverse.size() != n_inv)
    throw std::invalid_argument("eval_loss: inverse parameter count mismatch");
  const FlatLayout layout{p.widths, p.mode};
  const std::size_t n_param = layout.total();

  const bool use_subset = !opt.data_subset.empty();
  const std::size_t n_data = spec.w_data > 0
                                 ? (use_subset ? opt.data_subset.size() : spec.data.size())
                                 : 0;
  const std::size_t n_res = spec.w_residual > 0 ? spec.residual_points.size() : 0;
  const std::size_t chunk = std::max<std::size_t>(1, opt.chunk);
  const std::size_t data_chunks = (n_data + chunk - 1) / chunk;
  const std::size_t res_chunks = (n_res + chunk - 1) / chunk;
  const std::size_t tasks = data_chunks + res_chunks;

  std::vector<std::vector<double>> chunk_grad;
  if (opt.want_grad) chunk_grad.assign(tasks, {});
  std::vector<double> chunk_val(tasks, 0.0);

  const auto run_chunk = [&](std::size_t task) {
    detail::ChunkScratch& scratch = detail::chunk_scratch();
    ad::Tape& t = scratch.tape;
    t.clear();
    BoundNetwork net = bind(t, p);
    std::vector<ad::Var> inv;
    for (double v : inverse) inv.push_back(t.lift(v));

    const bool is_data = task < data_chunks;
    const std::size_t begin = (is_data ? task : task - data_chunks) * chunk;
    const std::size_t end = std::min(begin + chunk, is_data ? n_data : n_res);

    ad::Var acc{};
    for (std::size_t i = begin; i < end; ++i) {
      scratch.in.clear();
      ad::Var term{};
      if (is_data) {
        const std::size_t row = use_subset ? opt.data_subset[i] : i;
        for (double x : spec.data.x[row]) scratch.in.push_back(t.lift(x));
        const std::vector<ad::Var> u = forward(net, scratch.in);
        term = squared_error(t, u, spec.data.y[row]);
      } else {
        for (double x : spec.residual_points[i]) scratch.in.push_back(t.lift(x));
        const ad::Var u = forward(net, scratch.in)[0];
        term = t.abs_sq(spec.residual->build(t, u, scratch.in, inv));
      }
      acc = i == begin ? term : t.add(acc, term);
    }
    chunk_val[task] = acc.value();
    if (opt.want_grad) {
      t.backward_into(acc, scratch.adj);
      auto& g = chunk_grad[task];
      g.resize(n_param + n_inv);
      for (std::size_t j = 0; j < n_param; ++j) g[j] = scratch.adj[net.flat[j].index];
      for (std::size_t j = 0; j < n_inv; ++j) g[n_param + j] = scratch.adj[inv[j].index];
    }
  };

  if (opt.parallel && tasks > 1) {
    parallel_for(tasks, run_chunk);
  } else {
    for (std::size_t i = 0; i < tasks; ++i) run_chunk(i);
  }

  LossGrad out;
  if (opt.want_grad) out.grad.assign(n_param + n_inv, 0.0);

  const double data_scale = n_data > 0 ? spec.w_data / static_cast<double>(n_data) : 0.0;
  const double res_scale = n_res > 0 ? spec.w_residual / static_cast<double>(n_res) : 0.0;
  double data_sum = 0.0, res_sum = 0.0;
  for (std::size_t task = 0; task < tasks; ++task) {
    const bool is_data = task < data_chunks;
    (is_data ? data_sum : res_sum) += chunk_val[task];
    if (opt.want_grad) {
      const double s = is_data ? data_scale : res_scale;
      const auto& g = chunk_grad[task];
      for (std::size_t j = 0; j < g.size(); ++j) out.grad[j] += s * g[j];
    }
  }
  if (n_data > 0) out.parts.data = data_sum / static_cast<double>(n_data);
  if (n_res > 0) out.parts.residual = res_sum / static_cast<double>(n_res);

  if (spec.w_recovery > 0) {
    ad::Tape t;
    BoundNetwork net = bind(t, p);
    const ad::Var s = slope_recovery(net, spec.recovery);
    out.parts.recovery = s.value();
    if (opt.want_grad) {
      const std::vector<double> adj = t.backward(s);
      const std::size_t s0 = layout.slope_block_offset();
      for (std::size_t j = s0; j < n_param; ++j)
        out.grad[j] += spec.w_recovery * adj[net.flat[j].index];
    }
  }

  out.parts.total = spec.w_residual * out.parts.residual + spec.w_data * out.parts.data +
                    spec.w_recovery * out.parts.recovery;
  return out;
}

}  // namespace laaf
