#pragma once

#include <Eigen/Dense>
#include <functional>
#include <iostream>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

#include "laaf/objective.hpp"
#include "laaf/parallel.hpp"

// Conditioning laboratory: materializes the locality matrix A that maps
// trainable slopes onto the hidden-layer parameters they govern, builds the
// implicit conditioning matrices of the adaptive-slope gradient dynamics, and
// verifies the algebraic identities relating an adaptive-parameterization
// descent step to a conditioned step on the effective parameters
// theta_tilde = A a .* W.
namespace laaf::dynamics {

// 0/1 matrix with one nonzero per row: row = hidden weight/bias parameter
// (flat order restricted to hidden layers, which is a prefix of the flat
// vector), column = governing slope (flat slope order).
struct LocalityMatrix {
  Eigen::MatrixXd A;
  struct SlopeRef {
    int layer;   // hidden layer, 1-based; 0 for the global slope
    int neuron;  // within layer (nlaaf), else 0
  };
  std::vector<SlopeRef> columns;

  std::size_t rows() const { return static_cast<std::size_t>(A.rows()); }
  std::size_t cols() const { return static_cast<std::size_t>(A.cols()); }
};

inline LocalityMatrix locality_matrix(const NetworkParams& p) {
  validate(p);
  if (p.mode.slope == SlopeMode::fixed)
    throw std::invalid_argument("locality_matrix: fixed mode has no slopes");
  const FlatLayout layout{p.widths, p.mode};
  const std::size_t d = layout.hidden_block();
  const std::size_t dp = slope_count(p.widths, p.mode.slope);
  if (d > 2000) throw std::invalid_argument("locality_matrix: hidden block too large (cap 2000)");

  LocalityMatrix lm;
  lm.A = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(dp));
  switch (p.mode.slope) {
    case SlopeMode::gaaf:
      lm.columns.push_back({0, 0});
      break;
    case SlopeMode::llaaf:
      for (int k = 1; k <= p.hidden_layers(); ++k) lm.columns.push_back({k, 0});
      break;
    case SlopeMode::nlaaf:
      for (int k = 1; k <= p.hidden_layers(); ++k)
        for (int j = 0; j < p.widths[k]; ++j) lm.columns.push_back({k, j});
      break;
    default:
      break;
  }

  for (std::size_t r = 0; r < d; ++r) {
    const FlatLayout::EntryRef ref = layout.decode(r);
    std::size_t col = 0;
    switch (p.mode.slope) {
      case SlopeMode::gaaf:
        col = 0;
        break;
      case SlopeMode::llaaf:
        col = static_cast<std::size_t>(ref.layer - 1);
        break;
      case SlopeMode::nlaaf: {
        std::size_t base = 0;
        for (int k = 1; k < ref.layer; ++k) base += p.widths[k];
        col = base + static_cast<std::size_t>(ref.row);
        break;
      }
      default:
        break;
    }
    lm.A(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(col)) = 1.0;
  }
  return lm;
}

// Slope vector in flat slope order (length d' of the locality matrix).
inline Eigen::VectorXd slope_vector(const NetworkParams& p) {
  std::vector<double> a;
  for (const auto& layer : p.slopes) a.insert(a.end(), layer.begin(), layer.end());
  return Eigen::Map<const Eigen::VectorXd>(a.data(), static_cast<Eigen::Index>(a.size()));
}

// Hidden-layer weight/bias vector in flat order (the prefix of the flat vector).
inline Eigen::VectorXd hidden_vector(const NetworkParams& p) {
  const FlatParams flat = flatten(p);
  const std::size_t d = flat.layout.hidden_block();
  return Eigen::Map<const Eigen::VectorXd>(flat.values.data(), static_cast<Eigen::Index>(d));
}

// Global-slope conditioning matrix a^2 I + W W^T.
inline Eigen::MatrixXd conditioning_gaaf(double a, const Eigen::VectorXd& W) {
  const Eigen::Index d = W.size();
  Eigen::MatrixXd G = (a * a) * Eigen::MatrixXd::Identity(d, d);
  G.noalias() += W * W.transpose();
  return G;
}

// Rank-one approximate Hessian g g^T.
inline Eigen::MatrixXd rank_one_hessian(const Eigen::VectorXd& g) {
  return g * g.transpose();
}

struct GeneralConditioning {
  Eigen::MatrixXd G;  // diag((Aa)^2) + diag(W) A A^T diag(W) - eta diag(V)
  Eigen::VectorXd V;  // diag(Aa) A A^T diag(W) g
};

inline GeneralConditioning conditioning_general(const LocalityMatrix& lm,
                                                const Eigen::VectorXd& a,
                                                const Eigen::VectorXd& W,
                                                const Eigen::VectorXd& g, double eta) {
  const Eigen::Index d = lm.A.rows();
  if (a.size() != lm.A.cols() || W.size() != d || g.size() != d)
    throw std::invalid_argument("conditioning_general: dimension mismatch");
  const Eigen::VectorXd Aa = lm.A * a;
  const Eigen::MatrixXd AAt = lm.A * lm.A.transpose();

  GeneralConditioning out;
  out.V = Aa.asDiagonal() * (AAt * (W.asDiagonal() * g));
  out.G = Eigen::MatrixXd(Aa.array().square().matrix().asDiagonal());
  out.G.noalias() += W.asDiagonal() * AAt * W.asDiagonal();
  out.G -= eta * Eigen::MatrixXd(out.V.asDiagonal());
  return out;
}

// G with the -eta diag(V) term dropped; positive semidefinite by construction,
// used for the condition-number matrix square root.
inline Eigen::MatrixXd conditioning_g0(const LocalityMatrix& lm, const Eigen::VectorXd& a,
                                       const Eigen::VectorXd& W) {
  return conditioning_general(lm, a, W, Eigen::VectorXd::Zero(W.size()), 0.0).G;
}

// ---------------------------------------------------------------------------
// Gradients used by the verifiers
// ---------------------------------------------------------------------------

// Full gradient of the composite objective at p via one reverse sweep.
inline std::vector<double> objective_gradient(const NetworkParams& p, const ObjectiveSpec& spec) {
  const std::vector<double> inv = initial_inverse(spec);
  std::vector<double> g = eval_loss(p, inv, spec, EvalOptions{.chunk = 64, .parallel = false}).grad;
  g.resize(g.size() - inv.size());  // network parameters only
  return g;
}

// Gradient of the fixed-activation (standard) objective evaluated at the
// effective parameters: hidden block = theta_tilde, output block unscaled.
inline std::vector<double> standard_gradient_at_effective(const NetworkParams& p,
                                                          const ObjectiveSpec& spec) {
  NetworkParams std_net = p;
  std_net.mode.slope = SlopeMode::fixed;
  std_net.mode.scale = 1.0;
  std_net.slopes.clear();
  apply_flat(std_net, effective_theta(p));
  ObjectiveSpec std_spec = spec;
  std_spec.w_recovery = 0.0;
  std_spec.recovery = RecoveryKind::none;
  const std::vector<double> inv = initial_inverse(spec);
  std::vector<double> g =
      eval_loss(std_net, inv, std_spec, EvalOptions{.chunk = 64, .parallel = false}).grad;
  g.resize(g.size() - inv.size());
  return g;
}

// ---------------------------------------------------------------------------
// Step equivalence: one plain-GD step on the adaptive parameterization lands
// exactly where the conditioned step theta - eta G grad J(theta) lands.
// ---------------------------------------------------------------------------

struct StepEquivalenceReport {
  double residual = 0.0;         // max-abs over the hidden (slope-governed) block
  double output_residual = 0.0;  // max-abs over the plain-GD output-layer block
  double max_residual() const { return std::max(residual, output_residual); }
};

// Gradient oracle over network parameters (flat order).
using NetGradientFn = std::function<std::vector<double>(const NetworkParams&)>;

inline StepEquivalenceReport verify_step_equivalence_grads(
    const NetworkParams& p, const NetGradientFn& adaptive_grad,
    const NetGradientFn& standard_grad, double eta,
    const LocalityMatrix* locality_override = nullptr) {
  validate(p);
  if (p.mode.slope == SlopeMode::fixed)
    throw std::invalid_argument("verify_step_equivalence: needs an adaptive mode");
  if (p.mode.scale != 1.0)
    throw std::invalid_argument("verify_step_equivalence: scaling factor must be 1");

  const FlatLayout layout{p.widths, p.mode};
  const std::size_t d = layout.hidden_block();
  const std::size_t wb = layout.weights_and_biases();
  const std::size_t total = layout.total();

  // adaptive-parameterization gradient and one GD step on (W, out, a)
  const std::vector<double> grad_hat = adaptive_grad(p);
  std::vector<double> theta_hat = flatten(p).values;
  for (std::size_t i = 0; i < total; ++i) theta_hat[i] -= eta * grad_hat[i];
  NetworkParams stepped = p;
  apply_flat(stepped, theta_hat);
  const std::vector<double> left_full = effective_theta(stepped);

  // conditioned step on the effective parameters
  const std::vector<double> theta_tilde = effective_theta(p);
  NetworkParams std_net = p;
  std_net.mode.slope = SlopeMode::fixed;
  std_net.mode.scale = 1.0;
  std_net.slopes.clear();
  apply_flat(std_net, theta_tilde);
  const std::vector<double> grad_std = standard_grad(std_net);
  const LocalityMatrix lm = locality_override ? *locality_override : locality_matrix(p);
  const Eigen::VectorXd a = slope_vector(p);
  const Eigen::VectorXd W = hidden_vector(p);
  const Eigen::VectorXd g =
      Eigen::Map<const Eigen::VectorXd>(grad_std.data(), static_cast<Eigen::Index>(d));
  const GeneralConditioning gc = conditioning_general(lm, a, W, g, eta);
  const Eigen::VectorXd theta_m =
      Eigen::Map<const Eigen::VectorXd>(theta_tilde.data(), static_cast<Eigen::Index>(d));
  const Eigen::VectorXd right = theta_m - eta * (gc.G * g);

  StepEquivalenceReport rep;
  for (std::size_t i = 0; i < d; ++i)
    rep.residual = std::max(rep.residual,
                            std::abs(left_full[i] - right(static_cast<Eigen::Index>(i))));

  // output-layer block: both parameterizations apply the identical plain-GD
  // update; compare the stepped output parameters against theta - eta g.
  for (std::size_t i = d; i < wb; ++i) {
    const double expected = theta_tilde[i] - eta * grad_std[i];
    rep.output_residual = std::max(rep.output_residual, std::abs(left_full[i] - expected));
  }
  return rep;
}

// ---------------------------------------------------------------------------
// Chain-rule homogeneity identities: per hidden layer (llaaf)
//   a^k (dJ/da^k - W_a dS/da^k) = sum_j [ w^{k,j} . dJ/dw^{k,j} + b^{k,j} dJ/db^{k,j} ]
// and the per-neuron analogue (nlaaf). They hold at arbitrary points.
// ---------------------------------------------------------------------------

inline std::vector<double> euler_identity_residuals(const NetworkParams& p,
                                                    const ObjectiveSpec& spec) {
  validate(p);
  if (p.mode.slope != SlopeMode::llaaf && p.mode.slope != SlopeMode::nlaaf)
    throw std::invalid_argument("euler_identity_residuals: layer- or neuron-wise modes only");

  const FlatLayout layout{p.widths, p.mode};
  const std::vector<double> grad = objective_gradient(p, spec);

  // recovery gradient on its own tape
  std::vector<double> grad_s(layout.total(), 0.0);
  if (spec.w_recovery > 0) {
    ad::Tape t;
    BoundNetwork net = bind(t, p);
    const std::vector<double> adj = t.backward(slope_recovery(net, spec.recovery));
    for (std::size_t i = layout.slope_block_offset(); i < layout.total(); ++i)
      grad_s[i] = spec.w_recovery * adj[net.flat[i].index];
  }

  std::vector<double> residuals;
  for (int k = 1; k <= p.hidden_layers(); ++k) {
    const int rows = p.widths[k], cols = p.widths[k - 1];
    const std::size_t w0 = layout.weight_offset(k), b0 = layout.bias_offset(k);
    if (p.mode.slope == SlopeMode::llaaf) {
      const std::size_t s = layout.slope_offset(k);
      const double lhs = p.slopes[k - 1][0] * (grad[s] - grad_s[s]);
      double rhs = 0.0;
      for (int j = 0; j < rows; ++j) {
        for (int c = 0; c < cols; ++c) {
          const std::size_t wi = w0 + static_cast<std::size_t>(j) * cols + c;
          rhs += p.weights[k - 1][static_cast<std::size_t>(j) * cols + c] * grad[wi];
        }
        rhs += p.biases[k - 1][j] * grad[b0 + j];
      }
      residuals.push_back(std::abs(lhs - rhs));
    } else {
      for (int j = 0; j < rows; ++j) {
        const std::size_t s = layout.slope_offset(k) + static_cast<std::size_t>(j);
        const double lhs = p.slopes[k - 1][j] * (grad[s] - grad_s[s]);
        double rhs = 0.0;
        for (int c = 0; c < cols; ++c) {
          const std::size_t wi = w0 + static_cast<std::size_t>(j) * cols + c;
          rhs += p.weights[k - 1][static_cast<std::size_t>(j) * cols + c] * grad[wi];
        }
        rhs += p.biases[k - 1][j] * grad[b0 + j];
        residuals.push_back(std::abs(lhs - rhs));
      }
    }
  }
  return residuals;
}

// ---------------------------------------------------------------------------
// Constant-network check: with every slope at 0 the network output is the
// constant c, the composite loss equals (data+residual loss of the constant
// network) + W_a S(0), and hidden-layer weight/bias gradients vanish exactly.
// ---------------------------------------------------------------------------

struct ConstantNetworkReport {
  double loss_gap = 0.0;         // |J_total - (J_const + W_a S(0))|
  double max_hidden_grad = 0.0;  // max |dJ/dw|, |dJ/db| over hidden layers
  std::vector<double> slope_grads;
  double constant = 0.0;  // the constant output c
};

inline ConstantNetworkReport constant_network_check(const NetworkParams& p,
                                                    const ObjectiveSpec& spec) {
  validate(p);
  if (p.mode.slope == SlopeMode::fixed)
    throw std::invalid_argument("constant_network_check: needs an adaptive mode");
  for (const auto& layer : p.slopes)
    for (double a : layer)
      if (a != 0.0)
        throw std::invalid_argument("constant_network_check: all slopes must be exactly 0");

  ConstantNetworkReport rep;
  const std::vector<double> probe(p.input_dim(), 0.123456);
  rep.constant = forward_values(p, probe)[0];
  if (p.mode.base == Nonlinearity::tanh && rep.constant != p.biases.back()[0])
    throw std::logic_error("constant_network_check: tanh constant must equal the output bias");

  const LossGrad lg =
      eval_loss(p, initial_inverse(spec), spec, EvalOptions{.chunk = 64, .parallel = false});

  // constant-network loss J_c computed independently from c itself
  double jc = 0.0;
  if (spec.w_data > 0) {
    double acc = 0.0;
    for (std::size_t i = 0; i < spec.data.size(); ++i) {
      double e2 = 0.0;
      for (double y : spec.data.y[i]) e2 += (y - rep.constant) * (y - rep.constant);
      acc += e2;
    }
    jc += spec.w_data * acc / static_cast<double>(spec.data.size());
  }
  if (spec.w_residual > 0) {
    double acc = 0.0;
    std::vector<double> inv_vals;
    for (const auto& ip : spec.residual->inverse_params) inv_vals.push_back(ip.initial);
    for (const auto& pt : spec.residual_points) {
      ad::Tape t;
      std::vector<ad::Var> x;
      for (double xi : pt) x.push_back(t.lift(xi));
      std::vector<ad::Var> inv;
      for (double v : inv_vals) inv.push_back(t.lift(v));
      const ad::Var u = t.lift(rep.constant);  // constant surrogate: all input derivatives vanish
      const double r = spec.residual->build(t, u, x, inv).value();
      acc += r * r;
    }
    jc += spec.w_residual * acc / static_cast<double>(spec.residual_points.size());
  }
  const double s0 = spec.w_recovery > 0 ? spec.w_recovery * slope_recovery_value(p) : 0.0;
  rep.loss_gap = std::abs(lg.parts.total - (jc + s0));

  const FlatLayout layout{p.widths, p.mode};
  for (std::size_t i = 0; i < layout.hidden_block(); ++i)
    rep.max_hidden_grad = std::max(rep.max_hidden_grad, std::abs(lg.grad[i]));
  for (std::size_t i = layout.slope_block_offset(); i < layout.total(); ++i)
    rep.slope_grads.push_back(lg.grad[i]);
  return rep;
}

// ---------------------------------------------------------------------------
// Finite-difference Hessian of a gradient oracle, symmetrized.
// ---------------------------------------------------------------------------

using GradientFn = std::function<Eigen::VectorXd(const Eigen::VectorXd&)>;

inline Eigen::MatrixXd hessian_fd(const GradientFn& grad, const Eigen::VectorXd& point,
                                  double step = 1e-4, bool parallel = false,
                                  double* asymmetry = nullptr) {
  if (step <= 0.0) throw std::invalid_argument("hessian_fd: step must be positive");
  const Eigen::Index d = point.size();
  Eigen::MatrixXd H(d, d);
  const auto column = [&](std::size_t i) {
    Eigen::VectorXd x = point;
    x(static_cast<Eigen::Index>(i)) += step;
    const Eigen::VectorXd gp = grad(x);
    x(static_cast<Eigen::Index>(i)) = point(static_cast<Eigen::Index>(i)) - step;
    const Eigen::VectorXd gm = grad(x);
    H.col(static_cast<Eigen::Index>(i)) = (gp - gm) / (2.0 * step);
  };
  if (parallel) {
    parallel_for(static_cast<std::size_t>(d), column);
  } else {
    for (Eigen::Index i = 0; i < d; ++i) column(static_cast<std::size_t>(i));
  }
  if (!H.allFinite()) throw NumericError("hessian_fd: non-finite entries");
  if (asymmetry) *asymmetry = (H - H.transpose()).cwiseAbs().maxCoeff();
  return 0.5 * (H + H.transpose());
}

// ---------------------------------------------------------------------------
// Condition number of M = G0^{1/2} H G0^{1/2}
// ---------------------------------------------------------------------------

inline double condition_number(const Eigen::MatrixXd& G0, const Eigen::MatrixXd& H,
                               std::ostream* warnings = nullptr) {
  if (G0.rows() != G0.cols() || H.rows() != H.cols() || G0.rows() != H.rows())
    throw std::invalid_argument("condition_number: square matrices of equal size required");
  const double g_asym = (G0 - G0.transpose()).cwiseAbs().maxCoeff();
  const double h_asym = (H - H.transpose()).cwiseAbs().maxCoeff();
  const double scale_g = std::max(1.0, G0.cwiseAbs().maxCoeff());
  const double scale_h = std::max(1.0, H.cwiseAbs().maxCoeff());
  if (g_asym > 1e-9 * scale_g || h_asym > 1e-9 * scale_h)
    throw std::invalid_argument("condition_number: non-symmetric inputs");

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(G0);
  Eigen::VectorXd lam = es.eigenvalues();
  for (Eigen::Index i = 0; i < lam.size(); ++i) {
    if (lam(i) < 0.0) {
      if (lam(i) < -1e-10 && warnings)
        *warnings << "condition_number: clamping negative eigenvalue " << lam(i) << "\n";
      lam(i) = 0.0;
    }
  }
  const Eigen::MatrixXd sqrtG =
      es.eigenvectors() * lam.cwiseSqrt().asDiagonal() * es.eigenvectors().transpose();
  Eigen::MatrixXd M = sqrtG * H * sqrtG;
  M = 0.5 * (M + M.transpose());

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> em(M);
  const Eigen::VectorXd sv = em.eigenvalues().cwiseAbs();  // singular values of symmetric M
  const double smax = sv.maxCoeff();
  const double smin = std::max(sv.minCoeff(), 1e-300);
  return smax / smin;
}

// Per-epoch running-minimum condition numbers normalized by the standard
// method's initial condition number.
inline std::vector<double> normalized_condition_trace(std::span<const double> run,
                                                      std::span<const double> baseline) {
  if (baseline.empty()) throw std::invalid_argument("normalized_condition_trace: missing baseline");
  const double kappa0 = baseline[0];
  std::vector<double> out;
  out.reserve(run.size());
  double running = std::numeric_limits<double>::infinity();
  for (double k : run) {
    running = std::min(running, k);
    out.push_back(running / kappa0);
  }
  return out;
}

struct DynamicsReport {
  Eigen::MatrixXd G;
  Eigen::VectorXd V;
  Eigen::MatrixXd H_hat;
  Eigen::MatrixXd hessian;
  double condition_number = 0.0;
  double normalized_condition = 0.0;
  double equivalence_residual = 0.0;
};

}  // namespace laaf::dynamics
