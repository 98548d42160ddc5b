#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <cstdio>

#include "laaf/checkpoint.hpp"
#include "laaf/network.hpp"
#include "laaf/rng.hpp"

using namespace laaf;

namespace {

NetworkParams random_params(std::vector<int> widths, ActivationMode mode, std::uint64_t seed) {
  NetworkParams p = init_network(std::move(widths), mode, seed);
  SplitMix64 rng = substream(seed, "randomize");
  for (auto& layer : p.weights)
    for (double& w : layer) w = rng.uniform(-1, 1);
  for (auto& layer : p.biases)
    for (double& b : layer) b = rng.uniform(-1, 1);
  for (auto& layer : p.slopes)
    for (double& a : layer) a = rng.uniform(0.2, 1.5);
  return p;
}

}  // namespace

TEST_CASE("init sets slopes to 1/n and is deterministic") {
  {
    NetworkParams p =
        init_network({1, 50, 50, 50, 50, 1}, {SlopeMode::llaaf, Nonlinearity::tanh, 10.0}, 1);
    REQUIRE(p.slopes.size() == 4);
    for (const auto& a : p.slopes) REQUIRE(a[0] == 0.1);
  }
  {
    NetworkParams p = init_network({2, 3, 1}, {SlopeMode::gaaf, Nonlinearity::tanh, 1.0}, 1);
    REQUIRE(p.slopes.size() == 1);
    REQUIRE(p.slopes[0][0] == 1.0);
  }
  {
    NetworkParams a = init_network({3, 7, 5, 2}, {SlopeMode::nlaaf, Nonlinearity::sigmoid, 2.0}, 99);
    NetworkParams b = init_network({3, 7, 5, 2}, {SlopeMode::nlaaf, Nonlinearity::sigmoid, 2.0}, 99);
    REQUIRE(flatten(a).values == flatten(b).values);
    NetworkParams c = init_network({3, 7, 5, 2}, {SlopeMode::nlaaf, Nonlinearity::sigmoid, 2.0}, 100);
    REQUIRE(flatten(a).values != flatten(c).values);
  }
  REQUIRE_THROWS_AS(init_network({}, {}, 0), std::invalid_argument);
  REQUIRE_THROWS_AS(init_network({2, 0, 1}, {}, 0), std::invalid_argument);
  REQUIRE_THROWS_AS(init_network({2, 3, 1}, {SlopeMode::fixed, Nonlinearity::tanh, 0.5}, 0),
                    std::invalid_argument);
}

TEST_CASE("forward closed forms") {
  {
    // single path: tanh(0.5 * 2 * 1) with global slope 0.5
    NetworkParams p = init_network({1, 1, 1}, {SlopeMode::gaaf, Nonlinearity::tanh, 1.0}, 0);
    p.weights[0] = {2.0};
    p.biases[0] = {0.0};
    p.weights[1] = {1.0};
    p.biases[1] = {0.0};
    p.slopes[0][0] = 0.5;
    const std::vector<double> in{1.0};
    const double out = forward_values(p, in)[0];
    REQUIRE(std::abs(out - 0.7615941559557649) < 1e-16);

    ad::Tape t;
    const auto vars = forward(p, in, t);
    REQUIRE(vars.size() == 1);
    REQUIRE(vars[0].value() == out);
  }
  {
    // all slopes zero: constant network, output equals the last-layer bias
    NetworkParams p = random_params({2, 6, 5, 1}, {SlopeMode::nlaaf, Nonlinearity::tanh, 1.0}, 5);
    for (auto& layer : p.slopes)
      for (double& a : layer) a = 0.0;
    SplitMix64 rng(17);
    for (int i = 0; i < 100; ++i) {
      const std::vector<double> in{rng.uniform(-5, 5), rng.uniform(-5, 5)};
      REQUIRE(forward_values(p, in)[0] == p.biases.back()[0]);
    }
  }
  {
    // dimension mismatch
    NetworkParams p = init_network({2, 3, 1}, {}, 0);
    const std::vector<double> in{1.0};
    REQUIRE_THROWS_AS(forward_values(p, in), std::invalid_argument);
  }
}

TEST_CASE("mode reduction: unit effective slopes reproduce the fixed network") {
  SplitMix64 rng(31);
  for (double n : {1.0, 2.0, 10.0}) {
    NetworkParams fixed = random_params({2, 5, 4, 3, 1}, {SlopeMode::fixed, Nonlinearity::tanh, 1.0}, 7);
    for (SlopeMode m : {SlopeMode::gaaf, SlopeMode::llaaf, SlopeMode::nlaaf}) {
      NetworkParams adaptive = random_params({2, 5, 4, 3, 1}, {SlopeMode::fixed, Nonlinearity::tanh, 1.0}, 7);
      adaptive.mode = {m, Nonlinearity::tanh, n};
      const int hidden = adaptive.hidden_layers();
      switch (m) {
        case SlopeMode::gaaf: adaptive.slopes = {{1.0 / n}}; break;
        case SlopeMode::llaaf: adaptive.slopes.assign(hidden, {1.0 / n}); break;
        case SlopeMode::nlaaf:
          for (int k = 1; k <= hidden; ++k)
            adaptive.slopes.emplace_back(adaptive.widths[k], 1.0 / n);
          break;
        default: break;
      }
      validate(adaptive);
      for (int i = 0; i < 20; ++i) {
        const std::vector<double> in{rng.uniform(-2, 2), rng.uniform(-2, 2)};
        const double a = forward_values(fixed, in)[0];
        const double b = forward_values(adaptive, in)[0];
        REQUIRE(std::abs(a - b) <= 1e-15 * std::max(1.0, std::abs(a)));
      }
    }
  }
}

TEST_CASE("homogeneity: a^k -> c a^k with (w^k,b^k) -> (w,b)/c leaves output unchanged") {
  SplitMix64 rng(41);
  NetworkParams p = random_params({1, 4, 4, 1}, {SlopeMode::llaaf, Nonlinearity::tanh, 1.0}, 8);
  for (int trial = 0; trial < 10; ++trial) {
    const double c = rng.uniform(0.3, 3.0);
    const int k = trial % 2;  // hidden layer index
    NetworkParams q = p;
    q.slopes[k][0] *= c;
    for (double& w : q.weights[k]) w /= c;
    for (double& b : q.biases[k]) b /= c;
    for (int i = 0; i < 10; ++i) {
      const std::vector<double> in{rng.uniform(-2, 2)};
      const double a = forward_values(p, in)[0];
      const double b = forward_values(q, in)[0];
      REQUIRE(std::abs(a - b) < 1e-12);
    }
  }
}

TEST_CASE("param_count_ratio") {
  {
    const std::vector<int> w{1, 20, 20, 20, 1};
    REQUIRE(weight_count(w) == 840);
    REQUIRE(bias_count(w) == 61);
    REQUIRE(std::abs(param_count_ratio(w) - 1.0677) < 5e-5);
  }
  {
    const std::vector<int> w{1, 1, 1};
    REQUIRE(param_count_ratio(w) == 1.5);
  }
  {
    // rho -> 0 limit: many weights per bias
    const std::vector<int> w{300, 300, 300};
    REQUIRE(param_count_ratio(w) < 1.01);
    REQUIRE(param_count_ratio(w) > 1.0);
  }
  {
    // matches brute-force parameter counting for random architectures
    SplitMix64 rng(3);
    for (int trial = 0; trial < 50; ++trial) {
      const int depth = 2 + static_cast<int>(rng.next_u64() % 3);
      std::vector<int> w;
      for (int i = 0; i <= depth; ++i) w.push_back(1 + static_cast<int>(rng.next_u64() % 9));
      std::size_t omega = 0, beta = 0;
      for (std::size_t k = 1; k < w.size(); ++k) {
        omega += static_cast<std::size_t>(w[k]) * w[k - 1];
        beta += w[k];
      }
      const double rho = static_cast<double>(beta) / static_cast<double>(omega);
      REQUIRE(param_count_ratio(w) == (1.0 + 2.0 * rho) / (1.0 + rho));
    }
  }
}

TEST_CASE("flatten round trip and layout contract") {
  for (SlopeMode m : {SlopeMode::fixed, SlopeMode::gaaf, SlopeMode::llaaf, SlopeMode::nlaaf}) {
    NetworkParams p = random_params({2, 3, 4, 2}, {m, Nonlinearity::tanh, 1.0}, 13);
    const FlatParams f = flatten(p);
    REQUIRE(f.values.size() == f.layout.total());
    const NetworkParams q = unflatten(f);
    REQUIRE(flatten(q).values == f.values);
    REQUIRE(q.widths == p.widths);
    REQUIRE(q.mode.slope == p.mode.slope);
    if (m != SlopeMode::fixed) {
      REQUIRE(f.layout.slope_block_offset() ==
              weight_count(p.widths) + bias_count(p.widths));
      const auto ref = f.layout.decode(f.layout.slope_block_offset());
      REQUIRE(ref.role == FlatLayout::Role::slope);
    }
  }
}

TEST_CASE("perturbing one flat entry changes exactly one structured entry") {
  NetworkParams p = random_params({2, 3, 2}, {SlopeMode::nlaaf, Nonlinearity::tanh, 1.0}, 21);
  const FlatParams f = flatten(p);
  for (std::size_t i = 0; i < f.values.size(); ++i) {
    FlatParams g = f;
    g.values[i] += 1.0;
    const NetworkParams q = unflatten(g);
    int diffs = 0;
    for (int k = 0; k < p.depth(); ++k) {
      for (std::size_t j = 0; j < p.weights[k].size(); ++j)
        diffs += p.weights[k][j] != q.weights[k][j];
      for (std::size_t j = 0; j < p.biases[k].size(); ++j)
        diffs += p.biases[k][j] != q.biases[k][j];
    }
    for (std::size_t k = 0; k < p.slopes.size(); ++k)
      for (std::size_t j = 0; j < p.slopes[k].size(); ++j)
        diffs += p.slopes[k][j] != q.slopes[k][j];
    REQUIRE(diffs == 1);
  }
  std::vector<double> wrong(f.values.size() + 1, 0.0);
  NetworkParams scratch = p;
  REQUIRE_THROWS_AS(apply_flat(scratch, wrong), std::invalid_argument);
}

TEST_CASE("effective_theta") {
  {
    NetworkParams p = random_params({2, 3, 2}, {SlopeMode::llaaf, Nonlinearity::tanh, 1.0}, 4);
    p.slopes[0][0] = 1.0;
    const FlatParams f = flatten(p);
    const std::vector<double> theta = effective_theta(p);
    REQUIRE(theta.size() == f.layout.weights_and_biases());
    for (std::size_t i = 0; i < theta.size(); ++i) REQUIRE(theta[i] == f.values[i]);
  }
  {
    NetworkParams p = init_network({1, 1, 1}, {SlopeMode::gaaf, Nonlinearity::tanh, 1.0}, 0);
    p.weights[0] = {3.0};
    p.slopes[0][0] = 2.0;
    const std::vector<double> theta = effective_theta(p);
    REQUIRE(theta[0] == 6.0);
    // output-layer entries stay unscaled
    REQUIRE(theta[2] == p.weights[1][0]);
  }
  {
    NetworkParams p = init_network({1, 1, 1}, {}, 0);
    REQUIRE_THROWS_AS(effective_theta(p), std::invalid_argument);
  }
}

TEST_CASE("constant network: zero slopes make the output input-independent") {
  NetworkParams p = random_params({3, 8, 8, 2}, {SlopeMode::llaaf, Nonlinearity::sigmoid, 1.0}, 6);
  for (auto& a : p.slopes) a[0] = 0.0;
  SplitMix64 rng(77);
  std::vector<double> first;
  double spread = 0.0;
  for (int i = 0; i < 100; ++i) {
    const std::vector<double> in{rng.uniform(-4, 4), rng.uniform(-4, 4), rng.uniform(-4, 4)};
    const std::vector<double> out = forward_values(p, in);
    if (i == 0) {
      first = out;
    } else {
      for (std::size_t c = 0; c < out.size(); ++c)
        spread = std::max(spread, std::abs(out[c] - first[c]));
    }
  }
  REQUIRE(spread < 1e-15);
}

TEST_CASE("checkpoint round trip is bit-exact") {
  NetworkParams p = random_params({2, 5, 3, 1}, {SlopeMode::nlaaf, Nonlinearity::tanh, 5.0}, 123);
  p.init_seed = 123;
  const std::string path = "checkpoint_roundtrip_test.json";
  save_checkpoint(p, path);
  const NetworkParams q = load_checkpoint(path);
  REQUIRE(flatten(q).values == flatten(p).values);
  REQUIRE(q.widths == p.widths);
  REQUIRE(q.mode.slope == p.mode.slope);
  REQUIRE(q.mode.base == p.mode.base);
  REQUIRE(q.mode.scale == p.mode.scale);
  REQUIRE(q.init_seed == p.init_seed);

  // a second save must produce identical bytes
  const std::string text1 = checkpoint_to_json(p);
  const std::string text2 = checkpoint_to_json(q);
  REQUIRE(text1 == text2);
  std::remove(path.c_str());
}
