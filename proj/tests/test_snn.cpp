#include <doctest.h>

#include <cmath>

#include "dsqn/error.hpp"
#include "dsqn/rng.hpp"
#include "dsqn/snn.hpp"

using namespace dsqn;
using namespace dsqn::snn;

namespace {

using Md = Matrix<double>;

Md scalar(double v) { return Md::Constant(1, 1, v); }

SpikeBatch<double> random_input(int ticks, int neurons, double p, Rng& rng) {
  SpikeBatch<double> in(static_cast<std::size_t>(ticks), Md::Zero(neurons, 1));
  for (auto& m : in) {
    for (int i = 0; i < neurons; ++i) m(i, 0) = rng.bernoulli(p) ? 1.0 : 0.0;
  }
  return in;
}

double weighted_output(const Network<double>& net, const SpikeBatch<double>& in, const Md& c,
                       SpikeMode mode) {
  return forward<double>(net, in, nullptr, mode).cwiseProduct(c).sum();
}

}  // namespace

TEST_CASE("lif step: charge, spike, subtractive reset") {
  LayerState<double> st{Md::Zero(1, 1), Md::Zero(1, 1)};
  LifParams p{0.5, 1.0, ResetMode::SubtractThreshold, true};
  Md pre;
  lif_step(st, scalar(0.6), p, pre);
  CHECK(st.u(0, 0) == doctest::Approx(0.6));
  CHECK(st.z(0, 0) == 0.0);
  lif_step(st, scalar(0.6), p, pre);
  CHECK(st.u(0, 0) == doctest::Approx(0.9));
  CHECK(st.z(0, 0) == 0.0);
  lif_step(st, scalar(0.6), p, pre);
  CHECK(pre(0, 0) == doctest::Approx(1.05));
  CHECK(st.z(0, 0) == 1.0);
  CHECK(st.u(0, 0) == doctest::Approx(0.05));
  CHECK(st.u(0, 0) == pre(0, 0) - 1.0);
}

TEST_CASE("lif step: equality with the threshold does not spike") {
  LayerState<double> st{Md::Zero(1, 1), Md::Zero(1, 1)};
  Md pre;
  lif_step(st, scalar(1.0), LifParams{0.5, 1.0, ResetMode::SubtractThreshold, true}, pre);
  CHECK(st.z(0, 0) == 0.0);
  CHECK(st.u(0, 0) == 1.0);
}

TEST_CASE("lif step: non-spiking integrator sums its input") {
  LayerState<double> st{Md::Zero(1, 1), Md::Zero(1, 1)};
  LifParams p{1.0, 0.5, ResetMode::None, false};
  Md pre;
  for (double c : {1.0, 2.0, 3.0}) lif_step(st, scalar(c), p, pre);
  CHECK(st.u(0, 0) == 6.0);
  CHECK(st.z(0, 0) == 0.0);
}

TEST_CASE("lif step: free decay") {
  LayerState<double> st{Md::Constant(1, 1, 1.0), Md::Zero(1, 1)};
  LifParams p{0.8, 5.0, ResetMode::SubtractThreshold, true};
  Md pre;
  for (int t = 0; t < 3; ++t) lif_step(st, scalar(0.0), p, pre);
  CHECK(st.u(0, 0) == doctest::Approx(0.512).epsilon(1e-15));
}

TEST_CASE("lif step: reset mode none keeps the potential") {
  LayerState<double> st{Md::Zero(1, 1), Md::Zero(1, 1)};
  Md pre;
  lif_step(st, scalar(2.0), LifParams{0.5, 1.0, ResetMode::None, true}, pre);
  CHECK(st.z(0, 0) == 1.0);
  CHECK(st.u(0, 0) == 2.0);
}

TEST_CASE("sub-threshold closed form over random current sequences") {
  Rng rng(77);
  for (int rep = 0; rep < 100; ++rep) {
    const double beta = rng.uniform(0.0, 1.0);
    const int ticks = 1 + static_cast<int>(rng.below(30));
    LayerState<float> st{Matrix<float>::Zero(1, 1), Matrix<float>::Zero(1, 1)};
    LifParams p{beta, 1e9, ResetMode::SubtractThreshold, true};
    Matrix<float> pre;
    double closed = 0.0;
    std::vector<double> currents;
    for (int t = 1; t <= ticks; ++t) currents.push_back(rng.uniform(-1.0, 1.0));
    for (int t = 1; t <= ticks; ++t) {
      lif_step<float>(st, Matrix<float>::Constant(1, 1, static_cast<float>(currents[t - 1])), p, pre);
      closed += std::pow(beta, ticks - t) * static_cast<float>(currents[t - 1]);
    }
    CHECK(st.z(0, 0) == 0.0f);
    CHECK(std::abs(st.u(0, 0) - closed) <= 1e-5 * (1.0 + std::abs(closed)));
  }
}

TEST_CASE("forward shapes and zero input") {
  Rng rng(1);
  auto net = make_network<double>({8, 64, 64, 2}, 10, LifParams{}, 0.8, rng);
  const auto q = forward(net, random_input(10, 8, 0.5, rng));
  CHECK(q.rows() == 2);
  CHECK(q.cols() == 1);
  const auto zero = forward(net, SpikeBatch<double>(10, Md::Zero(8, 1)));
  CHECK(zero.isZero(0.0));
}

TEST_CASE("forward rejects mismatched input") {
  Rng rng(1);
  auto net = make_network<double>({8, 16, 2}, 10, LifParams{}, 0.8, rng);
  CHECK_THROWS_AS(forward(net, SpikeBatch<double>(9, Md::Zero(8, 1))), Error);
  CHECK_THROWS_AS(forward(net, SpikeBatch<double>(10, Md::Zero(7, 1))), Error);
}

TEST_CASE("degenerate single-synapse network") {
  Network<double> net{{1, 1}, {scalar(1.0)}, {LifParams{1.0, 0.5, ResetMode::None, false}}, 3};
  const SpikeBatch<double> in(3, scalar(1.0));
  ForwardTrace<double> trace;
  const auto q = forward(net, in, &trace);
  CHECK(q(0, 0) == 3.0);
  const auto g = backward(net, trace, scalar(1.0));
  CHECK(g[0](0, 0) == 3.0);
}

TEST_CASE("make_network initialization bounds and determinism") {
  Rng a(5), b(5);
  auto n1 = make_network<float>({12, 256, 256, 3}, 20, LifParams{}, 0.8, a);
  auto n2 = make_network<float>({12, 256, 256, 3}, 20, LifParams{}, 0.8, b);
  CHECK(n1 == n2);
  for (std::size_t l = 0; l < n1.weights.size(); ++l) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(n1.layer_sizes[l]));
    CHECK(n1.weights[l].cwiseAbs().maxCoeff() <= bound);
  }
  CHECK_FALSE(n1.lif.back().spiking);
  CHECK(n1.lif.back().beta == 0.8);
}

TEST_CASE("simulator state resets between calls") {
  Rng rng(2);
  auto net = make_network<double>({4, 8, 2}, 5, LifParams{}, 0.8, rng);
  Simulator<double> sim(net);
  CHECK(sim.state_is_zero());
  sim.reset_state();
  CHECK(sim.state_is_zero());
  const auto in = random_input(5, 4, 0.7, rng);
  const auto first = sim.forward(in);
  CHECK_FALSE(sim.state_is_zero());
  sim.forward(random_input(5, 4, 0.7, rng));
  const auto again = sim.forward(in);
  CHECK(first == again);
  sim.reset_state();
  sim.reset_state();
  CHECK(sim.state_is_zero());
}

TEST_CASE("batched forward equals per-sample forward") {
  Rng rng(3);
  auto net = make_network<float>({8, 32, 32, 2}, 10, LifParams{}, 0.8, rng);
  std::vector<codec::SpikeTrain> trains;
  for (int b = 0; b < 6; ++b) {
    codec::SpikeTrain t(10, 8);
    for (auto& v : t.data) v = rng.bernoulli(0.4);
    trains.push_back(t);
  }
  const auto batch = forward(net, to_batch<float>(trains));
  for (int b = 0; b < 6; ++b) {
    const auto single = forward(net, to_batch<float>(trains[static_cast<std::size_t>(b)]));
    // Matrix-matrix and matrix-vector products may sum in different orders.
    CHECK(single(0, 0) == doctest::Approx(batch(0, b)).epsilon(1e-5));
    CHECK(single(1, 0) == doctest::Approx(batch(1, b)).epsilon(1e-5));
  }
}

TEST_CASE("zero upstream gradient gives zero weight gradients") {
  Rng rng(4);
  auto net = make_network<double>({4, 8, 8, 2}, 5, LifParams{}, 0.8, rng);
  ForwardTrace<double> trace;
  forward(net, random_input(5, 4, 0.6, rng), &trace);
  for (const auto& g : backward<double>(net, trace, Md::Zero(2, 1))) CHECK(g.isZero(0.0));
}

TEST_CASE("backward rejects a trace from another shape") {
  Rng rng(4);
  auto net = make_network<double>({4, 8, 2}, 5, LifParams{}, 0.8, rng);
  auto other = make_network<double>({4, 6, 2}, 5, LifParams{}, 0.8, rng);
  ForwardTrace<double> trace;
  forward(other, random_input(5, 4, 0.6, rng), &trace);
  CHECK_THROWS_AS(backward<double>(net, trace, Md::Zero(2, 1)), Error);
  ForwardTrace<double> empty;
  CHECK_THROWS_AS(backward<double>(net, empty, Md::Zero(2, 1)), Error);
}

TEST_CASE("output-layer gradient matches its closed form") {
  Rng rng(6);
  LifParams hidden{0.8, 0.3, ResetMode::SubtractThreshold, true};
  auto net = make_network<double>({4, 8, 2}, 5, hidden, 0.8, rng);
  for (auto& w : net.weights) w *= 3.0;  // enough drive for hidden spikes
  for (int rep = 0; rep < 10; ++rep) {
    const auto in = random_input(5, 4, 0.7, rng);
    ForwardTrace<double> trace;
    forward(net, in, &trace);
    for (int j = 0; j < 2; ++j) {
      Md dq = Md::Zero(2, 1);
      dq(j, 0) = 1.0;
      const auto g = backward(net, trace, dq);
      for (int k = 0; k < 8; ++k) {
        double closed = 0.0;
        for (int t = 1; t <= 5; ++t) {
          closed += std::pow(0.8, 5 - t) * trace.spikes[0][static_cast<std::size_t>(t - 1)](k, 0);
        }
        CHECK(std::abs(g[1](j, k) - closed) <= 1e-12);
        CHECK(g[1](1 - j, k) == 0.0);
      }
    }
  }
}

TEST_CASE("smoothed network gradients match central differences") {
  Rng rng(12);
  LifParams hidden{0.8, 0.5, ResetMode::None, true};
  auto net = make_network<double>({4, 8, 2}, 5, hidden, 0.8, rng);
  const auto in = random_input(5, 4, 0.6, rng);
  Md c(2, 1);
  c << 0.7, -1.3;
  ForwardTrace<double> trace;
  forward(net, in, &trace, SpikeMode::Smooth);
  const auto g = backward(net, trace, c);
  const double h = 1e-5;
  double worst = 0.0;
  for (std::size_t l = 0; l < net.weights.size(); ++l) {
    for (Eigen::Index r = 0; r < net.weights[l].rows(); ++r) {
      for (Eigen::Index col = 0; col < net.weights[l].cols(); ++col) {
        auto plus = net, minus = net;
        plus.weights[l](r, col) += h;
        minus.weights[l](r, col) -= h;
        const double fd = (weighted_output(plus, in, c, SpikeMode::Smooth) -
                           weighted_output(minus, in, c, SpikeMode::Smooth)) /
                          (2 * h);
        const double an = g[l](r, col);
        const double rel = std::abs(an - fd) / std::max({std::abs(an), std::abs(fd), 1e-6});
        worst = std::max(worst, rel);
      }
    }
  }
  CHECK(worst <= 1e-4);
}

TEST_CASE("forward is deterministic") {
  Rng rng(13);
  auto net = make_network<float>({8, 64, 64, 2}, 10, LifParams{}, 0.8, rng);
  codec::SpikeTrain t(10, 8);
  for (auto& v : t.data) v = rng.bernoulli(0.5);
  CHECK(forward(net, to_batch<float>(t)) == forward(net, to_batch<float>(t)));
}

TEST_CASE("network validation") {
  Rng rng(1);
  auto net = make_network<double>({4, 8, 2}, 5, LifParams{}, 0.8, rng);
  auto bad = net;
  bad.lif.back().spiking = true;
  CHECK_THROWS_AS(bad.validate(), Error);
  bad = net;
  bad.weights[0] = Md::Zero(3, 4);
  CHECK_THROWS_AS(bad.validate(), Error);
  bad = net;
  bad.lif[0].beta = 1.5;
  CHECK_THROWS_AS(bad.validate(), Error);
}
