#pragma once

#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "laaf/rng.hpp"
#include "laaf/tape.hpp"

namespace laaf {

enum class Nonlinearity { tanh, sigmoid, relu, softplus };

// Slope granularity: one trainable slope for the whole network (gaaf), one
// per hidden layer (llaaf), one per hidden neuron (nlaaf), or none (fixed).
enum class SlopeMode { fixed, gaaf, llaaf, nlaaf };

struct ActivationMode {
  SlopeMode slope = SlopeMode::fixed;
  Nonlinearity base = Nonlinearity::tanh;
  double scale = 1.0;  // pre-multiplier n applied to every slope use; n >= 1
};

// Dense feed-forward network parameters. Layer k = 1..D maps N_{k-1} -> N_k
// via w^k z + b^k; hidden layers (k < D) apply the base nonlinearity to
// scale * slope * pre-activation, the output layer is linear. Slopes are
// stored unscaled (a, not n*a).
struct NetworkParams {
  std::vector<int> widths;  // N_0..N_D
  ActivationMode mode;
  std::vector<std::vector<double>> weights;  // row-major N_k x N_{k-1}, k=1..D
  std::vector<std::vector<double>> biases;   // N_k, k=1..D
  // fixed: empty; gaaf: {{a}}; llaaf: one singleton per hidden layer;
  // nlaaf: one vector of length N_k per hidden layer
  std::vector<std::vector<double>> slopes;
  std::uint64_t init_seed = 0;

  int depth() const { return static_cast<int>(widths.size()) - 1; }
  int hidden_layers() const { return depth() - 1; }
  int input_dim() const { return widths.front(); }
  int output_dim() const { return widths.back(); }
};

inline std::size_t weight_count(std::span<const int> widths) {
  std::size_t n = 0;
  for (std::size_t k = 1; k < widths.size(); ++k)
    n += static_cast<std::size_t>(widths[k]) * widths[k - 1];
  return n;
}

inline std::size_t bias_count(std::span<const int> widths) {
  std::size_t n = 0;
  for (std::size_t k = 1; k < widths.size(); ++k) n += widths[k];
  return n;
}

inline std::size_t slope_count(std::span<const int> widths, SlopeMode mode) {
  const int hidden = static_cast<int>(widths.size()) - 2;
  switch (mode) {
    case SlopeMode::fixed: return 0;
    case SlopeMode::gaaf: return 1;
    case SlopeMode::llaaf: return static_cast<std::size_t>(hidden);
    case SlopeMode::nlaaf: {
      std::size_t n = 0;
      for (int k = 1; k <= hidden; ++k) n += widths[k];
      return n;
    }
  }
  return 0;
}

// Ratio of the neuron-wise-adaptive parameter count to the fixed-activation
// parameter count, (1 + 2*rho) / (1 + rho) with rho = biases / weights.
inline double param_count_ratio(std::span<const int> widths) {
  if (widths.size() < 3)
    throw std::invalid_argument("param_count_ratio: need at least one hidden layer");
  const double omega = static_cast<double>(weight_count(widths));
  const double beta = static_cast<double>(bias_count(widths));
  const double rho = beta / omega;
  return (1.0 + 2.0 * rho) / (1.0 + rho);
}

inline void validate(const NetworkParams& p) {
  if (p.widths.size() < 2) throw std::invalid_argument("network: need at least two layers");
  for (int w : p.widths)
    if (w < 1) throw std::invalid_argument("network: zero width layer");
  if (p.mode.scale < 1.0) throw std::invalid_argument("network: scaling factor must be >= 1");
  const int depth = p.depth();
  if (static_cast<int>(p.weights.size()) != depth || static_cast<int>(p.biases.size()) != depth)
    throw std::invalid_argument("network: layer count mismatch");
  for (int k = 1; k <= depth; ++k) {
    if (p.weights[k - 1].size() != static_cast<std::size_t>(p.widths[k]) * p.widths[k - 1])
      throw std::invalid_argument("network: weight shape mismatch at layer " + std::to_string(k));
    if (p.biases[k - 1].size() != static_cast<std::size_t>(p.widths[k]))
      throw std::invalid_argument("network: bias shape mismatch at layer " + std::to_string(k));
  }
  const int hidden = p.hidden_layers();
  switch (p.mode.slope) {
    case SlopeMode::fixed:
      if (!p.slopes.empty()) throw std::invalid_argument("network: fixed mode carries no slopes");
      break;
    case SlopeMode::gaaf:
      if (p.slopes.size() != 1 || p.slopes[0].size() != 1)
        throw std::invalid_argument("network: gaaf wants exactly one slope");
      break;
    case SlopeMode::llaaf:
      if (static_cast<int>(p.slopes.size()) != hidden)
        throw std::invalid_argument("network: llaaf wants one slope per hidden layer");
      for (const auto& s : p.slopes)
        if (s.size() != 1) throw std::invalid_argument("network: llaaf slope entry not scalar");
      break;
    case SlopeMode::nlaaf:
      if (static_cast<int>(p.slopes.size()) != hidden)
        throw std::invalid_argument("network: nlaaf wants one slope vector per hidden layer");
      for (int k = 1; k <= hidden; ++k)
        if (p.slopes[k - 1].size() != static_cast<std::size_t>(p.widths[k]))
          throw std::invalid_argument("network: nlaaf slope length mismatch at layer " +
                                      std::to_string(k));
      break;
  }
}

// Xavier-uniform weights, zero biases, every slope 1/n (so n*a = 1 at init).
// All draws come from substream(seed, "init"); the mode consumes no
// randomness, so different modes share identical initial weights per seed.
inline NetworkParams init_network(std::vector<int> widths, ActivationMode mode,
                                  std::uint64_t seed) {
  if (widths.size() < 2) throw std::invalid_argument("init_network: need at least two layers");
  for (int w : widths)
    if (w < 1) throw std::invalid_argument("init_network: zero width layer");
  if (mode.scale < 1.0) throw std::invalid_argument("init_network: scaling factor must be >= 1");
  if (mode.slope != SlopeMode::fixed && widths.size() < 3)
    throw std::invalid_argument("init_network: slope modes need a hidden layer");

  NetworkParams p;
  p.widths = std::move(widths);
  p.mode = mode;
  p.init_seed = seed;
  SplitMix64 rng = substream(seed, "init");
  const int depth = p.depth();
  for (int k = 1; k <= depth; ++k) {
    const int fan_in = p.widths[k - 1], fan_out = p.widths[k];
    const double bound = std::sqrt(6.0 / (fan_in + fan_out));
    std::vector<double> w(static_cast<std::size_t>(fan_out) * fan_in);
    for (double& x : w) x = rng.uniform(-bound, bound);
    p.weights.push_back(std::move(w));
    p.biases.emplace_back(fan_out, 0.0);
  }
  const double a0 = 1.0 / mode.scale;
  const int hidden = p.hidden_layers();
  switch (mode.slope) {
    case SlopeMode::fixed: break;
    case SlopeMode::gaaf: p.slopes = {{a0}}; break;
    case SlopeMode::llaaf:
      p.slopes.assign(hidden, {a0});
      break;
    case SlopeMode::nlaaf:
      for (int k = 1; k <= hidden; ++k) p.slopes.emplace_back(p.widths[k], a0);
      break;
  }
  validate(p);
  return p;
}

// ---------------------------------------------------------------------------
// Flat parameter vector: all weights/biases layer-major (w^1 b^1 ... w^D b^D),
// then all slopes in layer order (neuron order within a layer for nlaaf).
// The hidden-layer weight/bias block is therefore the prefix of the vector.
// ---------------------------------------------------------------------------

struct FlatLayout {
  std::vector<int> widths;
  ActivationMode mode;

  std::size_t weights_and_biases() const {
    return weight_count(widths) + bias_count(widths);
  }
  std::size_t slope_block_offset() const { return weights_and_biases(); }
  std::size_t total() const { return weights_and_biases() + slope_count(widths, mode.slope); }

  std::size_t weight_offset(int layer) const {  // layer 1-based
    std::size_t off = 0;
    for (int k = 1; k < layer; ++k)
      off += static_cast<std::size_t>(widths[k]) * widths[k - 1] + widths[k];
    return off;
  }
  std::size_t bias_offset(int layer) const {
    return weight_offset(layer) + static_cast<std::size_t>(widths[layer]) * widths[layer - 1];
  }
  std::size_t slope_offset(int layer) const {  // hidden layer 1-based
    std::size_t off = slope_block_offset();
    if (mode.slope == SlopeMode::gaaf) return off;
    for (int k = 1; k < layer; ++k)
      off += mode.slope == SlopeMode::llaaf ? 1 : widths[k];
    return off;
  }

  // Number of weight+bias entries belonging to hidden layers (k <= D-1).
  std::size_t hidden_block() const {
    std::size_t n = 0;
    for (std::size_t k = 1; k + 1 < widths.size(); ++k)
      n += static_cast<std::size_t>(widths[k]) * widths[k - 1] + widths[k];
    return n;
  }

  enum class Role { weight, bias, slope };
  struct EntryRef {
    Role role;
    int layer;  // 1-based
    int row;    // neuron index
    int col;    // input index (weights only)
  };

  EntryRef decode(std::size_t offset) const {
    const int depth = static_cast<int>(widths.size()) - 1;
    for (int k = 1; k <= depth; ++k) {
      const std::size_t nw = static_cast<std::size_t>(widths[k]) * widths[k - 1];
      const std::size_t w0 = weight_offset(k);
      if (offset < w0 + nw) {
        const std::size_t i = offset - w0;
        return {Role::weight, k, static_cast<int>(i / widths[k - 1]),
                static_cast<int>(i % widths[k - 1])};
      }
      if (offset < w0 + nw + widths[k])
        return {Role::bias, k, static_cast<int>(offset - w0 - nw), 0};
    }
    const std::size_t s0 = slope_block_offset();
    if (offset >= total()) throw std::out_of_range("FlatLayout::decode: offset out of range");
    std::size_t i = offset - s0;
    if (mode.slope == SlopeMode::gaaf) return {Role::slope, 0, 0, 0};
    for (int k = 1; k <= depth - 1; ++k) {
      const std::size_t n = mode.slope == SlopeMode::llaaf ? 1 : widths[k];
      if (i < n) return {Role::slope, k, static_cast<int>(i), 0};
      i -= n;
    }
    throw std::out_of_range("FlatLayout::decode: offset out of range");
  }
};

struct FlatParams {
  FlatLayout layout;
  std::vector<double> values;
};

inline FlatParams flatten(const NetworkParams& p) {
  validate(p);
  FlatParams f;
  f.layout = FlatLayout{p.widths, p.mode};
  f.values.reserve(f.layout.total());
  for (int k = 0; k < p.depth(); ++k) {
    f.values.insert(f.values.end(), p.weights[k].begin(), p.weights[k].end());
    f.values.insert(f.values.end(), p.biases[k].begin(), p.biases[k].end());
  }
  for (const auto& s : p.slopes) f.values.insert(f.values.end(), s.begin(), s.end());
  return f;
}

// Writes a flat vector back into structured parameters (shape must match).
inline void apply_flat(NetworkParams& p, std::span<const double> values) {
  const FlatLayout layout{p.widths, p.mode};
  if (values.size() != layout.total())
    throw std::invalid_argument("apply_flat: length mismatch");
  std::size_t off = 0;
  for (int k = 0; k < p.depth(); ++k) {
    for (double& w : p.weights[k]) w = values[off++];
    for (double& b : p.biases[k]) b = values[off++];
  }
  for (auto& s : p.slopes)
    for (double& a : s) a = values[off++];
}

inline NetworkParams unflatten(const FlatParams& f) {
  NetworkParams p;
  p.widths = f.layout.widths;
  p.mode = f.layout.mode;
  const int depth = p.depth();
  for (int k = 1; k <= depth; ++k) {
    p.weights.emplace_back(static_cast<std::size_t>(p.widths[k]) * p.widths[k - 1]);
    p.biases.emplace_back(p.widths[k]);
  }
  const int hidden = depth - 1;
  switch (p.mode.slope) {
    case SlopeMode::fixed: break;
    case SlopeMode::gaaf: p.slopes = {{0.0}}; break;
    case SlopeMode::llaaf: p.slopes.assign(hidden, {0.0}); break;
    case SlopeMode::nlaaf:
      for (int k = 1; k <= hidden; ++k) p.slopes.emplace_back(p.widths[k], 0.0);
      break;
  }
  apply_flat(p, f.values);
  return p;
}

// ---------------------------------------------------------------------------
// Forward evaluation
// ---------------------------------------------------------------------------

// Network parameters lifted onto a tape as differentiable leaves, in flat
// order (leaf i corresponds to flat entry i when bound onto a fresh tape).
struct BoundNetwork {
  const NetworkParams* params = nullptr;
  ad::Tape* tape = nullptr;
  std::vector<ad::Var> flat;
  std::vector<std::span<const ad::Var>> w, b;  // views into flat, per layer
  std::vector<std::span<const ad::Var>> a;     // slope views, per hidden layer
  std::vector<std::vector<ad::Var>> scaled;    // lazily built n*a nodes
  std::vector<ad::Var> z_scratch, next_scratch;
};

// Binds an already-lifted flat vector of leaves to the network structure;
// used by gradient checks that own the leaf vars.
inline BoundNetwork bind_vars(ad::Tape& tape, const NetworkParams& p,
                              std::span<const ad::Var> flat_vars);
inline void detail_wire_spans(BoundNetwork& net, const FlatLayout& layout);

inline BoundNetwork bind(ad::Tape& tape, const NetworkParams& p) {
  validate(p);
  BoundNetwork net;
  net.params = &p;
  net.tape = &tape;
  const FlatLayout layout{p.widths, p.mode};
  net.flat.reserve(layout.total());
  for (int k = 0; k < p.depth(); ++k) {
    for (double w : p.weights[k]) net.flat.push_back(tape.lift(w));
    for (double b : p.biases[k]) net.flat.push_back(tape.lift(b));
  }
  for (const auto& s : p.slopes)
    for (double a : s) net.flat.push_back(tape.lift(a));
  detail_wire_spans(net, layout);
  return net;
}

inline void detail_wire_spans(BoundNetwork& net, const FlatLayout& layout) {
  const NetworkParams& p = *net.params;
  net.w.clear();
  net.b.clear();
  net.a.clear();
  for (int k = 1; k <= p.depth(); ++k) {
    net.w.push_back(std::span<const ad::Var>(net.flat.data() + layout.weight_offset(k),
                                             static_cast<std::size_t>(p.widths[k]) * p.widths[k - 1]));
    net.b.push_back(std::span<const ad::Var>(net.flat.data() + layout.bias_offset(k),
                                             static_cast<std::size_t>(p.widths[k])));
  }
  if (p.mode.slope != SlopeMode::fixed) {
    for (int k = 1; k <= p.hidden_layers(); ++k) {
      const std::size_t n = p.mode.slope == SlopeMode::nlaaf ? p.widths[k] : 1;
      const std::size_t off =
          p.mode.slope == SlopeMode::gaaf ? layout.slope_block_offset() : layout.slope_offset(k);
      net.a.push_back(std::span<const ad::Var>(net.flat.data() + off, n));
    }
    net.scaled.assign(p.hidden_layers(), {});
  }
}

inline BoundNetwork bind_vars(ad::Tape& tape, const NetworkParams& p,
                              std::span<const ad::Var> flat_vars) {
  validate(p);
  const FlatLayout layout{p.widths, p.mode};
  if (flat_vars.size() != layout.total())
    throw std::invalid_argument("bind_vars: flat length mismatch");
  BoundNetwork net;
  net.params = &p;
  net.tape = &tape;
  net.flat.assign(flat_vars.begin(), flat_vars.end());
  detail_wire_spans(net, layout);
  return net;
}

inline ad::Var activate(ad::Tape& t, Nonlinearity base, ad::Var x) {
  switch (base) {
    case Nonlinearity::tanh: return t.tanh(x);
    case Nonlinearity::sigmoid: return t.sigmoid(x);
    case Nonlinearity::relu: return t.relu(x);
    case Nonlinearity::softplus: return t.softplus(x);
  }
  throw std::logic_error("activate: unknown nonlinearity");
}

inline double activate_value(Nonlinearity base, double x) {
  switch (base) {
    case Nonlinearity::tanh: return std::tanh(x);
    case Nonlinearity::sigmoid:
      return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
    case Nonlinearity::relu: return x > 0.0 ? x : 0.0;
    case Nonlinearity::softplus:
      return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
  }
  throw std::logic_error("activate_value: unknown nonlinearity");
}

// n * a^k (or n * a_i^k) as a tape node, cached per bound network. The n
// multiply is skipped when n == 1 so slope-1 networks reduce bitwise to the
// fixed activation.
inline ad::Var scaled_slope(BoundNetwork& net, int hidden_layer, int neuron) {
  const NetworkParams& p = *net.params;
  const std::size_t j = p.mode.slope == SlopeMode::nlaaf ? neuron : 0;
  auto& cache = net.scaled[hidden_layer - 1];
  if (cache.empty()) cache.assign(net.a[hidden_layer - 1].size(), ad::Var{});
  if (cache[j].tape == nullptr) {
    ad::Var a = net.a[hidden_layer - 1][j];
    cache[j] = p.mode.scale == 1.0 ? a : net.tape->mul(net.tape->constant(p.mode.scale), a);
  }
  return cache[j];
}

inline std::vector<ad::Var> forward(BoundNetwork& net, std::span<const ad::Var> input) {
  const NetworkParams& p = *net.params;
  if (static_cast<int>(input.size()) != p.input_dim())
    throw std::invalid_argument("forward: input dimension mismatch");
  ad::Tape& t = *net.tape;
  std::vector<ad::Var>& z = net.z_scratch;
  std::vector<ad::Var>& next = net.next_scratch;
  z.assign(input.begin(), input.end());
  for (int k = 1; k <= p.depth(); ++k) {
    const int rows = p.widths[k], cols = p.widths[k - 1];
    next.clear();
    next.reserve(rows);
    const ad::Var* wk = net.w[k - 1].data();
    for (int j = 0; j < rows; ++j) {
      const std::span<const ad::Var> row(wk + static_cast<std::size_t>(j) * cols, cols);
      ad::Var pre = t.affine(row, z, net.b[k - 1][j]);
      if (k == p.depth()) {
        next.push_back(pre);
      } else if (p.mode.slope == SlopeMode::fixed) {
        next.push_back(activate(t, p.mode.base, pre));
      } else {
        next.push_back(activate(t, p.mode.base, t.mul(scaled_slope(net, k, j), pre)));
      }
    }
    z.swap(next);
  }
  return z;
}

// Convenience overload matching the one-shot signature: binds the parameters
// onto the tape and evaluates at a numeric input.
inline std::vector<ad::Var> forward(const NetworkParams& p, std::span<const double> input,
                                    ad::Tape& tape) {
  BoundNetwork net = bind(tape, p);
  std::vector<ad::Var> in;
  in.reserve(input.size());
  for (double x : input) in.push_back(tape.lift(x));
  return forward(net, in);
}

// Pure double-precision forward pass (no tape); used for inference, error
// reporting and the effective-parameter cross-checks.
inline std::vector<double> forward_values(const NetworkParams& p, std::span<const double> input) {
  validate(p);
  if (static_cast<int>(input.size()) != p.input_dim())
    throw std::invalid_argument("forward_values: input dimension mismatch");
  std::vector<double> z(input.begin(), input.end());
  std::vector<double> next;
  for (int k = 1; k <= p.depth(); ++k) {
    const int rows = p.widths[k], cols = p.widths[k - 1];
    next.assign(rows, 0.0);
    for (int j = 0; j < rows; ++j) {
      double acc = 0.0;
      const double* row = p.weights[k - 1].data() + static_cast<std::size_t>(j) * cols;
      for (int c = 0; c < cols; ++c) acc += row[c] * z[c];
      acc += p.biases[k - 1][j];
      if (k < p.depth()) {
        double a = 1.0;
        switch (p.mode.slope) {
          case SlopeMode::fixed: break;
          case SlopeMode::gaaf: a = p.mode.scale * p.slopes[0][0]; break;
          case SlopeMode::llaaf: a = p.mode.scale * p.slopes[k - 1][0]; break;
          case SlopeMode::nlaaf: a = p.mode.scale * p.slopes[k - 1][j]; break;
        }
        if (p.mode.slope != SlopeMode::fixed) acc = a == 1.0 ? acc : a * acc;
        acc = activate_value(p.mode.base, acc);
      }
      next[j] = acc;
    }
    z.swap(next);
  }
  return z;
}

// Effective parameters a .* (w, b): hidden-layer weights and biases scaled by
// their governing slope, output-layer entries appended unscaled. Same
// ordering as the weight/bias portion of the flat vector.
inline std::vector<double> effective_theta(const NetworkParams& p) {
  validate(p);
  if (p.mode.slope == SlopeMode::fixed)
    throw std::invalid_argument("effective_theta: fixed mode has no slopes");
  std::vector<double> theta;
  theta.reserve(weight_count(p.widths) + bias_count(p.widths));
  for (int k = 1; k <= p.depth(); ++k) {
    const int rows = p.widths[k], cols = p.widths[k - 1];
    const bool hidden = k < p.depth();
    for (int j = 0; j < rows; ++j) {
      double a = 1.0;
      if (hidden) {
        switch (p.mode.slope) {
          case SlopeMode::gaaf: a = p.slopes[0][0]; break;
          case SlopeMode::llaaf: a = p.slopes[k - 1][0]; break;
          case SlopeMode::nlaaf: a = p.slopes[k - 1][j]; break;
          case SlopeMode::fixed: break;
        }
      }
      for (int c = 0; c < cols; ++c)
        theta.push_back(a * p.weights[k - 1][static_cast<std::size_t>(j) * cols + c]);
    }
    for (int j = 0; j < rows; ++j) {
      double a = 1.0;
      if (hidden) {
        switch (p.mode.slope) {
          case SlopeMode::gaaf: a = p.slopes[0][0]; break;
          case SlopeMode::llaaf: a = p.slopes[k - 1][0]; break;
          case SlopeMode::nlaaf: a = p.slopes[k - 1][j]; break;
          case SlopeMode::fixed: break;
        }
      }
      theta.push_back(a * p.biases[k - 1][j]);
    }
  }
  return theta;
}

inline const char* to_string(SlopeMode m) {
  switch (m) {
    case SlopeMode::fixed: return "fixed";
    case SlopeMode::gaaf: return "gaaf";
    case SlopeMode::llaaf: return "llaaf";
    case SlopeMode::nlaaf: return "nlaaf";
  }
  return "?";
}

inline const char* to_string(Nonlinearity b) {
  switch (b) {
    case Nonlinearity::tanh: return "tanh";
    case Nonlinearity::sigmoid: return "sigmoid";
    case Nonlinearity::relu: return "relu";
    case Nonlinearity::softplus: return "softplus";
  }
  return "?";
}

inline SlopeMode slope_mode_from(const std::string& s) {
  if (s == "fixed") return SlopeMode::fixed;
  if (s == "gaaf") return SlopeMode::gaaf;
  if (s == "llaaf") return SlopeMode::llaaf;
  if (s == "nlaaf") return SlopeMode::nlaaf;
  throw std::invalid_argument("unknown slope mode: " + s);
}

inline Nonlinearity nonlinearity_from(const std::string& s) {
  if (s == "tanh") return Nonlinearity::tanh;
  if (s == "sigmoid") return Nonlinearity::sigmoid;
  if (s == "relu") return Nonlinearity::relu;
  if (s == "softplus") return Nonlinearity::softplus;
  throw std::invalid_argument("unknown nonlinearity: " + s);
}

}  // namespace laaf
