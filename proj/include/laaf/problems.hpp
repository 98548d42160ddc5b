#pragma once

#include <array>
#include <cmath>
#include <memory>
#include <numbers>
#include <string>
#include <vector>

#include "laaf/objective.hpp"
#include "laaf/optimize.hpp"
#include "laaf/rng.hpp"

namespace laaf::problems {

inline constexpr double kPi = std::numbers::pi_v<double>;

// ---------------------------------------------------------------------------
// Generators
// ---------------------------------------------------------------------------

// Piecewise test function with a jump at x = 0: low-frequency sine on the
// left, high-frequency modulated cosine shifted by 1 on the right. x = 0
// belongs to the sine branch.
inline double discontinuous_target(double x) {
  if (x <= 0.0) return 0.2 * std::sin(6.0 * x);
  return 1.0 + 0.1 * x * std::cos(18.0 * x);
}

struct Box {
  std::vector<std::pair<double, double>> ranges;
  std::size_t dim() const { return ranges.size(); }
};

// Uniform i.i.d. points in a box, deterministic under seed.
inline std::vector<std::vector<double>> collocation_sample(const Box& box, std::size_t count,
                                                           std::uint64_t seed) {
  if (count < 1) throw std::invalid_argument("collocation_sample: count must be >= 1");
  if (box.ranges.empty()) throw std::invalid_argument("collocation_sample: empty box");
  for (const auto& [lo, hi] : box.ranges)
    if (!(lo < hi)) throw std::invalid_argument("collocation_sample: degenerate box");
  SplitMix64 rng = substream(seed, "sampling");
  std::vector<std::vector<double>> out(count);
  for (auto& pt : out) {
    pt.reserve(box.dim());
    for (const auto& [lo, hi] : box.ranges) pt.push_back(rng.uniform(lo, hi));
  }
  return out;
}

struct LabeledPoints {
  std::vector<std::vector<double>> x;
  std::vector<int> label;
  std::size_t size() const { return x.size(); }
};

// Two concentric circles: n_samples/2 points on the unit circle (label 0) and
// n_samples/2 on the radius-`factor` circle (label 1). Angles are evenly
// spaced per class; isotropic Gaussian noise of standard deviation `noise` is
// added from the seed's noise substream.
inline LabeledPoints circles_dataset(std::size_t n_samples, double noise, double factor,
                                     std::uint64_t seed) {
  if (!(factor > 0.0 && factor < 1.0))
    throw std::invalid_argument("circles_dataset: factor must be in (0, 1)");
  if (noise < 0.0) throw std::invalid_argument("circles_dataset: negative noise");
  const std::size_t n_out = n_samples / 2;
  const std::size_t n_in = n_samples - n_out;
  LabeledPoints pts;
  pts.x.reserve(n_samples);
  pts.label.reserve(n_samples);
  for (std::size_t i = 0; i < n_out; ++i) {
    const double th = 2.0 * kPi * static_cast<double>(i) / static_cast<double>(n_out);
    pts.x.push_back({std::cos(th), std::sin(th)});
    pts.label.push_back(0);
  }
  for (std::size_t i = 0; i < n_in; ++i) {
    const double th = 2.0 * kPi * static_cast<double>(i) / static_cast<double>(n_in);
    pts.x.push_back({factor * std::cos(th), factor * std::sin(th)});
    pts.label.push_back(1);
  }
  if (noise > 0.0) {
    SplitMix64 rng = substream(seed, "noise");
    for (auto& p : pts.x) {
      p[0] += noise * rng.normal();
      p[1] += noise * rng.normal();
    }
  }
  return pts;
}

// ---------------------------------------------------------------------------
// Problem presets
// ---------------------------------------------------------------------------

struct ProblemPreset {
  std::string name;
  std::vector<int> widths;
  Nonlinearity base = Nonlinearity::tanh;
  double scale = 1.0;  // slope pre-multiplier n
  double learning_rate = 1e-3;
  std::int64_t iterations = 1000;
  double w_residual = 0.0, w_data = 1.0, w_recovery = 1.0;
  Box domain;
  std::size_t n_data = 0, n_collocation = 0;
  double noise = 0.0;  // relative Gaussian target noise (0 = clean)
  std::shared_ptr<ResidualOperator> residual;
  std::function<DataSet(std::uint64_t seed, double noise, std::size_t n)> make_data;
  std::function<std::vector<std::vector<double>>(std::uint64_t seed, std::size_t n)>
      make_collocation;
  std::function<double(std::span<const double>)> reference;  // exact solution, if known
  std::vector<double> true_inverse;  // ground-truth inverse parameters, if any

  ObjectiveSpec objective(std::uint64_t seed, SlopeMode mode) const {
    ObjectiveSpec spec;
    spec.w_residual = w_residual;
    spec.w_data = w_data;
    spec.w_recovery = mode == SlopeMode::fixed ? 0.0 : w_recovery;
    spec.recovery = mode == SlopeMode::fixed ? RecoveryKind::none : recovery_for(mode);
    spec.data = make_data(seed, noise, n_data);
    if (residual) {
      spec.residual = residual.get();
      spec.residual_points = make_collocation(seed, n_collocation);
    }
    return spec;
  }
};

// Relative L2 error of the network against the preset reference on a fresh
// uniform sample of the domain.
inline double relative_l2_error(const NetworkParams& p, const ProblemPreset& preset,
                                std::size_t n_samples = 1000, std::uint64_t seed = 424242) {
  if (!preset.reference) return std::nan("");
  const auto pts = collocation_sample(preset.domain, n_samples, seed);
  double num = 0.0, den = 0.0;
  for (const auto& x : pts) {
    const double ref = preset.reference(x);
    const double u = forward_values(p, x)[0];
    num += (u - ref) * (u - ref);
    den += ref * ref;
  }
  return std::sqrt(num / den);
}

// Multiplies targets by (1 + noise * xi), xi ~ N(0,1); inputs stay exact.
inline void apply_relative_noise(DataSet& data, double noise, std::uint64_t seed) {
  if (noise <= 0.0) return;
  SplitMix64 rng = substream(seed, "noise");
  for (auto& y : data.y)
    for (double& v : y) v *= 1.0 + noise * rng.normal();
}

// Deep-network regression of the discontinuous target on [-3, 3]: data
// mismatch plus slope recovery, no residual term.
inline ProblemPreset discontinuous_preset() {
  ProblemPreset ps;
  ps.name = "discontinuous";
  ps.widths = {1, 50, 50, 50, 50, 1};
  ps.base = Nonlinearity::tanh;
  ps.scale = 10.0;
  ps.learning_rate = 2.0e-4;
  ps.iterations = 15000;
  ps.w_residual = 0.0;
  ps.w_data = 1.0;
  ps.w_recovery = 1.0;
  ps.domain = Box{{{-3.0, 3.0}}};
  ps.n_data = 300;
  ps.make_data = [](std::uint64_t seed, double noise, std::size_t n) {
    SplitMix64 rng = substream(seed, "data");
    DataSet data;
    for (std::size_t i = 0; i < n; ++i) {
      const double x = rng.uniform(-3.0, 3.0);
      data.x.push_back({x});
      data.y.push_back({discontinuous_target(x)});
    }
    apply_relative_noise(data, noise, seed);
    return data;
  };
  ps.reference = [](std::span<const double> x) { return discontinuous_target(x[0]); };
  return ps;
}

// ---------------------------------------------------------------------------
// Poisson diffusion-coefficient inverse problem (manufactured solution)
//
//   div((1 + alpha x) grad u) + f* = 0 on [-1/sqrt2, 1/sqrt2]^2,
//   u* = cos(pi x) cos(pi y),  f* = -div((1 + alpha_true x) grad u*),
//
// so u* solves the PDE exactly at alpha = alpha_true. alpha is a trainable
// inverse parameter initialized at 0.5.
// ---------------------------------------------------------------------------

inline double poisson_exact(double x, double y) { return std::cos(kPi * x) * std::cos(kPi * y); }

inline double poisson_source(double x, double y, double alpha_true) {
  // -[alpha u*_x + (1 + alpha x)(u*_xx + u*_yy)]
  const double ux = -kPi * std::sin(kPi * x) * std::cos(kPi * y);
  const double lap = -2.0 * kPi * kPi * poisson_exact(x, y);
  return -(alpha_true * ux + (1.0 + alpha_true * x) * lap);
}

inline ProblemPreset poisson_inverse_preset(double alpha_true, double alpha_init = 0.5) {
  if (!(alpha_true >= 0.05 && alpha_true <= 0.95))
    throw std::invalid_argument("poisson_inverse_preset: alpha_true outside [0.05, 0.95]");
  const double half = 1.0 / std::sqrt(2.0);

  ProblemPreset ps;
  ps.name = "poisson_inverse";
  ps.widths = {2, 30, 30, 30, 1};
  ps.base = Nonlinearity::tanh;
  ps.scale = 1.0;
  ps.learning_rate = 8.0e-4;
  ps.iterations = 8000;
  ps.w_residual = 1.0;
  ps.w_data = 10.0;
  ps.w_recovery = 10.0;
  ps.domain = Box{{{-half, half}, {-half, half}}};
  ps.n_data = 200;
  ps.n_collocation = 400;
  ps.true_inverse = {alpha_true};

  auto op = std::make_shared<ResidualOperator>();
  op->input_dim = 2;
  op->derivative_orders = {2, 2};
  op->inverse_params = {{"alpha", alpha_init, true}};
  op->build = [alpha_true](ad::Tape& t, ad::Var u, std::span<const ad::Var> x,
                           std::span<const ad::Var> inv) {
    const ad::Var ux = t.derivative_graph(u, x[0]);
    const ad::Var uy = t.derivative_graph(u, x[1]);
    const ad::Var uxx = t.derivative_graph(ux, x[0]);
    const ad::Var uyy = t.derivative_graph(uy, x[1]);
    const ad::Var alpha = inv[0];
    const ad::Var diffusion = t.add(t.constant(1.0), t.mul(alpha, x[0]));
    const ad::Var divergence =
        t.add(t.mul(alpha, ux), t.mul(diffusion, t.add(uxx, uyy)));
    const double fstar = poisson_source(x[0].value(), x[1].value(), alpha_true);
    return t.add(divergence, t.lift(fstar));
  };
  ps.residual = op;

  ps.make_data = [half](std::uint64_t seed, double noise, std::size_t n) {
    DataSet data;
    // 20 evenly spaced boundary samples per side of u_b = cos(pi x) cos(pi y),
    // remaining points are interior samples of the manufactured solution
    const int per_side = 20;
    for (int i = 0; i < per_side; ++i) {
      const double s = -half + 2.0 * half * (static_cast<double>(i) + 0.5) / per_side;
      for (const auto& pt : {std::array<double, 2>{s, -half}, std::array<double, 2>{s, half},
                             std::array<double, 2>{-half, s}, std::array<double, 2>{half, s}}) {
        data.x.push_back({pt[0], pt[1]});
        data.y.push_back({poisson_exact(pt[0], pt[1])});
      }
    }
    SplitMix64 rng = substream(seed, "data");
    while (data.x.size() < n) {
      const double x = rng.uniform(-half, half), y = rng.uniform(-half, half);
      data.x.push_back({x, y});
      data.y.push_back({poisson_exact(x, y)});
    }
    apply_relative_noise(data, noise, seed);
    return data;
  };
  ps.make_collocation = [half](std::uint64_t seed, std::size_t n) {
    return collocation_sample(Box{{{-half, half}, {-half, half}}}, n, seed);
  };
  ps.reference = [](std::span<const double> x) { return poisson_exact(x[0], x[1]); };
  return ps;
}

// ---------------------------------------------------------------------------
// Viscous Burgers traveling-wave inverse problem
//
//   u_t + u u_x = nu u_xx, exact wave
//   u(x,t) = (a+b)/2 - ((a-b)/2) tanh( (a-b)(x - c t) / (4 nu) ), c = (a+b)/2,
//
// with the viscosity nu a trainable inverse parameter.
// ---------------------------------------------------------------------------

inline double burgers_exact(double x, double t, double nu, double a, double b) {
  const double c = 0.5 * (a + b);
  const double m = 0.5 * (a - b);
  return c - m * std::tanh((a - b) * (x - c * t) / (4.0 * nu));
}

inline ProblemPreset burgers_inverse_preset(double nu_true, double a, double b,
                                            double nu_init = 0.5) {
  if (!(nu_true > 0.0)) throw std::invalid_argument("burgers_inverse_preset: nu_true must be > 0");
  if (!(a > b)) throw std::invalid_argument("burgers_inverse_preset: need a > b");

  ProblemPreset ps;
  ps.name = "burgers_inverse";
  ps.widths = {2, 20, 20, 20, 20, 20, 20, 1};
  ps.base = Nonlinearity::tanh;
  ps.scale = 5.0;
  ps.learning_rate = 6.0e-4;
  ps.iterations = 40000;
  ps.w_residual = 1.0;
  ps.w_data = 10.0;
  ps.w_recovery = 20.0;
  ps.domain = Box{{{-1.0, 2.0}, {0.0, 1.0}}};
  ps.n_data = 300;
  ps.n_collocation = 8000;
  ps.true_inverse = {nu_true};

  auto op = std::make_shared<ResidualOperator>();
  op->input_dim = 2;
  op->derivative_orders = {2, 1};  // (x, t)
  op->inverse_params = {{"nu", nu_init, true}};
  op->build = [](ad::Tape& t, ad::Var u, std::span<const ad::Var> x,
                 std::span<const ad::Var> inv) {
    const ad::Var ux = t.derivative_graph(u, x[0]);
    const ad::Var ut = t.derivative_graph(u, x[1]);
    const ad::Var uxx = t.derivative_graph(ux, x[0]);
    return t.sub(t.add(ut, t.mul(u, ux)), t.mul(inv[0], uxx));
  };
  ps.residual = op;

  ps.make_data = [nu_true, a, b](std::uint64_t seed, double noise, std::size_t n) {
    SplitMix64 rng = substream(seed, "data");
    DataSet data;
    for (std::size_t i = 0; i < n; ++i) {
      const double x = rng.uniform(-1.0, 2.0);
      const double t = rng.uniform(0.0, 1.0);
      data.x.push_back({x, t});
      data.y.push_back({burgers_exact(x, t, nu_true, a, b)});
    }
    apply_relative_noise(data, noise, seed);
    return data;
  };
  ps.make_collocation = [](std::uint64_t seed, std::size_t n) {
    return collocation_sample(Box{{{-1.0, 2.0}, {0.0, 1.0}}}, n, seed);
  };
  ps.reference = [nu_true, a, b](std::span<const double> x) {
    return burgers_exact(x[0], x[1], nu_true, a, b);
  };
  return ps;
}

// Circles classification preset used by the conditioning experiments.
struct CirclesPreset {
  std::size_t n_samples = 1000;
  double noise = 0.01;
  double factor = 0.7;
  int width = 10;
  Nonlinearity base = Nonlinearity::sigmoid;
  double learning_rate = 0.01;
  int epochs = 50;
  std::size_t batch = 64;
  double w_recovery = 1.0;
};

// ---------------------------------------------------------------------------
// Cross-entropy objective over labeled points (chunked, deterministic),
// mirroring eval_loss for the classification experiments.
// ---------------------------------------------------------------------------

struct CeLossGrad {
  double data = 0.0, recovery = 0.0, total = 0.0;
  std::vector<double> grad;
};

inline CeLossGrad eval_cross_entropy(const NetworkParams& p, const LabeledPoints& pts,
                                     double w_recovery, std::span<const std::size_t> subset = {},
                                     bool want_grad = true, std::size_t chunk = 64) {
  validate(p);
  const FlatLayout layout{p.widths, p.mode};
  const std::size_t n_param = layout.total();
  const bool use_subset = !subset.empty();
  const std::size_t n = use_subset ? subset.size() : pts.size();
  const std::size_t n_chunks = (n + chunk - 1) / chunk;

  std::vector<std::vector<double>> chunk_grad(n_chunks);
  std::vector<double> chunk_val(n_chunks, 0.0);
  for (std::size_t task = 0; task < n_chunks; ++task) {
    static thread_local ad::Tape tape;
    ad::Tape& t = tape;
    t.clear();
    BoundNetwork net = bind(t, p);
    const std::size_t begin = task * chunk, end = std::min(begin + chunk, n);
    ad::Var acc{};
    std::vector<ad::Var> in;
    for (std::size_t i = begin; i < end; ++i) {
      const std::size_t row = use_subset ? subset[i] : i;
      in.clear();
      for (double x : pts.x[row]) in.push_back(t.lift(x));
      const std::vector<ad::Var> logits = forward(net, in);
      const ad::Var ce = cross_entropy(t, logits, pts.label[row]);
      acc = i == begin ? ce : t.add(acc, ce);
    }
    chunk_val[task] = acc.value();
    if (want_grad) {
      static thread_local std::vector<double> adj;
      t.backward_into(acc, adj);
      auto& g = chunk_grad[task];
      g.resize(n_param);
      for (std::size_t j = 0; j < n_param; ++j) g[j] = adj[net.flat[j].index];
    }
  }

  CeLossGrad out;
  if (want_grad) out.grad.assign(n_param, 0.0);
  double sum = 0.0;
  for (std::size_t task = 0; task < n_chunks; ++task) {
    sum += chunk_val[task];
    if (want_grad)
      for (std::size_t j = 0; j < n_param; ++j)
        out.grad[j] += chunk_grad[task][j] / static_cast<double>(n);
  }
  out.data = sum / static_cast<double>(n);

  if (w_recovery > 0.0 && p.mode.slope != SlopeMode::fixed) {
    ad::Tape t;
    BoundNetwork net = bind(t, p);
    const ad::Var s = slope_recovery(net, recovery_for(p.mode.slope));
    out.recovery = s.value();
    if (want_grad) {
      const std::vector<double> adj = t.backward(s);
      for (std::size_t j = layout.slope_block_offset(); j < n_param; ++j)
        out.grad[j] += w_recovery * adj[net.flat[j].index];
    }
  }
  out.total = out.data + w_recovery * out.recovery;
  return out;
}

}  // namespace laaf::problems
