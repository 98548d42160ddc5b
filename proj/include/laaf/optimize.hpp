#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <span>
#include <stdexcept>
#include <vector>

#include "laaf/objective.hpp"

namespace laaf {

enum class OptKind { gd_constant, gd_diminishing, gd_armijo, adam };

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct ArmijoConfig {
  double beta = 0.5;    // backtracking factor
  double sigma = 1e-4;  // sufficient-decrease slope fraction
  int max_backtracks = 60;
};

struct OptimizerState {
  OptKind kind = OptKind::adam;
  double eta0 = 1e-3;
  std::int64_t step_count = 0;
  AdamConfig adam;
  ArmijoConfig armijo;
  std::vector<double> m1, m2;  // Adam moment estimates
};

// Loss callback over a flat parameter vector. Fills *grad when non-null and
// returns the loss value.
using LossFn = std::function<double(std::span<const double>, std::vector<double>*)>;

// Largest eta in {eta0 * beta^j} satisfying the sufficient-decrease condition
//   f(theta + eta d) <= f(theta) + sigma * eta * (grad . d).
inline double armijo_search(std::span<const double> theta, const LossFn& loss,
                            std::span<const double> direction, double eta0, double beta,
                            double sigma, int max_backtracks = 60) {
  if (!(beta > 0.0 && beta < 1.0) || !(sigma > 0.0 && sigma < 1.0) || eta0 <= 0.0)
    throw std::invalid_argument("armijo_search: need 0<beta<1, 0<sigma<1, eta0>0");
  std::vector<double> grad;
  const double f0 = loss(theta, &grad);
  double slope = 0.0;
  for (std::size_t i = 0; i < theta.size(); ++i) slope += grad[i] * direction[i];
  if (!(slope < 0.0)) throw std::invalid_argument("armijo_search: not a descent direction");

  std::vector<double> trial(theta.size());
  double eta = eta0;
  for (int j = 0; j < max_backtracks; ++j, eta *= beta) {
    for (std::size_t i = 0; i < theta.size(); ++i) trial[i] = theta[i] + eta * direction[i];
    const double f = loss(trial, nullptr);
    if (std::isfinite(f) && f <= f0 + sigma * eta * slope) return eta;
  }
  throw NumericError("armijo_search: no acceptable step within backtracking budget");
}

// One optimizer update given the already-computed gradient at theta. The loss
// callback is consulted only by the Armijo rule (extra value evaluations).
inline void step_with_grad(OptimizerState& st, std::vector<double>& theta,
                           std::span<const double> grad, const LossFn& loss) {
  if (grad.size() != theta.size())
    throw std::invalid_argument("step: gradient/parameter size mismatch");
  for (double g : grad)
    if (!std::isfinite(g))
      throw NumericError("optimizer step: non-finite gradient at step " +
                         std::to_string(st.step_count));

  switch (st.kind) {
    case OptKind::gd_constant: {
      for (std::size_t i = 0; i < theta.size(); ++i) theta[i] -= st.eta0 * grad[i];
      break;
    }
    case OptKind::gd_diminishing: {
      const double eta = st.eta0 / (1.0 + static_cast<double>(st.step_count));
      for (std::size_t i = 0; i < theta.size(); ++i) theta[i] -= eta * grad[i];
      break;
    }
    case OptKind::gd_armijo: {
      double norm2 = 0.0;
      for (double g : grad) norm2 += g * g;
      if (norm2 == 0.0) break;  // stationary: no move
      std::vector<double> dir(grad.size());
      for (std::size_t i = 0; i < grad.size(); ++i) dir[i] = -grad[i];
      const double eta =
          armijo_search(theta, loss, dir, st.eta0, st.armijo.beta, st.armijo.sigma,
                        st.armijo.max_backtracks);
      for (std::size_t i = 0; i < theta.size(); ++i) theta[i] += eta * dir[i];
      break;
    }
    case OptKind::adam: {
      if (st.m1.size() != theta.size()) st.m1.assign(theta.size(), 0.0);
      if (st.m2.size() != theta.size()) st.m2.assign(theta.size(), 0.0);
      const double b1 = st.adam.beta1, b2 = st.adam.beta2;
      const double t = static_cast<double>(st.step_count + 1);
      const double c1 = 1.0 - std::pow(b1, t);
      const double c2 = 1.0 - std::pow(b2, t);
      for (std::size_t i = 0; i < theta.size(); ++i) {
        st.m1[i] = b1 * st.m1[i] + (1.0 - b1) * grad[i];
        st.m2[i] = b2 * st.m2[i] + (1.0 - b2) * grad[i] * grad[i];
        const double mhat = st.m1[i] / c1;
        const double vhat = st.m2[i] / c2;
        theta[i] -= st.eta0 * mhat / (std::sqrt(vhat) + st.adam.eps);
      }
      break;
    }
  }
  ++st.step_count;
}

// Spec-shaped single step: evaluates the gradient itself.
inline std::vector<double> step(OptimizerState& st, std::vector<double> theta,
                                const LossFn& loss) {
  std::vector<double> grad;
  loss(theta, &grad);
  step_with_grad(st, theta, grad, loss);
  return theta;
}

// ---------------------------------------------------------------------------
// Training loop
// ---------------------------------------------------------------------------

struct TraceRow {
  std::int64_t iteration = 0;
  double total = 0.0, mse_data = 0.0, mse_residual = 0.0, recovery = 0.0;
  double slope_min = 1.0, slope_mean = 1.0, slope_max = 1.0;
  double wall_ms = 0.0;  // in-memory only; CSV output stays deterministic
  std::vector<double> inverse;
};

struct TrainingTrace {
  std::vector<TraceRow> rows;
  bool diverged = false;
  std::int64_t failed_iteration = -1;
};

struct TrainResult {
  NetworkParams params;
  std::vector<double> inverse;
  TrainingTrace trace;
};

struct TrainOptions {
  std::size_t chunk = 32;
  bool parallel = true;
  bool freeze_slopes = false;  // zero the slope-block gradient (reduction tests)
  int record_every = 1;
  // Optional early-stop predicate, checked at recorded rows.
  std::function<bool(const TraceRow&, const NetworkParams&, std::span<const double>)> stop;
};

inline void slope_stats(const NetworkParams& p, TraceRow& row) {
  if (p.mode.slope == SlopeMode::fixed) {
    row.slope_min = row.slope_mean = row.slope_max = 1.0;
    return;
  }
  double lo = std::numeric_limits<double>::infinity(), hi = -lo, sum = 0.0;
  std::size_t n = 0;
  for (const auto& layer : p.slopes)
    for (double a : layer) {
      lo = std::min(lo, a);
      hi = std::max(hi, a);
      sum += a;
      ++n;
    }
  row.slope_min = lo;
  row.slope_max = hi;
  row.slope_mean = sum / static_cast<double>(n);
}

// Full-batch training on the composite objective. The trace records the state
// at iteration 0 and after every step (iterations+1 rows at record_every=1).
inline TrainResult train(NetworkParams params, std::vector<double> inverse,
                         const ObjectiveSpec& spec, OptimizerState& opt,
                         std::int64_t iterations, const TrainOptions& options = {}) {
  validate_spec(spec, params);
  const FlatLayout layout{params.widths, params.mode};
  const std::size_t n_param = layout.total();

  std::vector<double> theta = flatten(params).values;
  theta.insert(theta.end(), inverse.begin(), inverse.end());

  NetworkParams scratch = params;
  EvalOptions eopt;
  eopt.chunk = options.chunk;
  eopt.parallel = options.parallel;

  TrainResult out;
  out.trace.rows.reserve(static_cast<std::size_t>(iterations / std::max(1, options.record_every)) + 2);

  const auto sync_scratch = [&](std::span<const double> th) {
    apply_flat(scratch, th.subspan(0, n_param));
  };

  const LossFn loss_fn = [&](std::span<const double> th, std::vector<double>* grad) {
    NetworkParams local = params;
    apply_flat(local, th.subspan(0, n_param));
    EvalOptions o = eopt;
    o.want_grad = grad != nullptr;
    const LossGrad lg = eval_loss(local, th.subspan(n_param), spec, o);
    if (grad) {
      *grad = lg.grad;
      if (options.freeze_slopes)
        for (std::size_t i = layout.slope_block_offset(); i < n_param; ++i) (*grad)[i] = 0.0;
    }
    return lg.parts.total;
  };

  const auto t0 = std::chrono::steady_clock::now();
  const auto record = [&](std::int64_t iter, const LossBreakdown& parts) {
    TraceRow row;
    row.iteration = iter;
    row.total = parts.total;
    row.mse_data = parts.data;
    row.mse_residual = parts.residual;
    row.recovery = parts.recovery;
    sync_scratch(theta);
    slope_stats(scratch, row);
    row.inverse.assign(theta.begin() + static_cast<std::ptrdiff_t>(n_param), theta.end());
    row.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    out.trace.rows.push_back(std::move(row));
  };

  std::vector<double> grad;
  LossBreakdown parts;
  const auto evaluate = [&] {
    sync_scratch(theta);
    const LossGrad lg =
        eval_loss(scratch, std::span<const double>(theta).subspan(n_param), spec, eopt);
    parts = lg.parts;
    grad = lg.grad;
    if (options.freeze_slopes)
      for (std::size_t i = layout.slope_block_offset(); i < n_param; ++i) grad[i] = 0.0;
    if (!std::isfinite(parts.total)) throw NumericError("train: non-finite loss");
  };

  std::int64_t iter = 0;
  try {
    evaluate();
    record(0, parts);
    const int every = std::max(1, options.record_every);
    for (iter = 1; iter <= iterations; ++iter) {
      step_with_grad(opt, theta, grad, loss_fn);
      evaluate();
      if (iter % every == 0 || iter == iterations) {
        record(iter, parts);
        if (options.stop) {
          sync_scratch(theta);
          if (options.stop(out.trace.rows.back(), scratch,
                           std::span<const double>(theta).subspan(n_param)))
            break;
        }
      }
    }
  } catch (const NumericError&) {
    out.trace.diverged = true;
    out.trace.failed_iteration = iter;
  }

  apply_flat(params, std::span<const double>(theta).subspan(0, n_param));
  out.params = std::move(params);
  out.inverse.assign(theta.begin() + static_cast<std::ptrdiff_t>(n_param), theta.end());
  return out;
}

}  // namespace laaf
