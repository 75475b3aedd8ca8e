#include <doctest.h>

#include <cmath>
#include <sstream>

#include "dsqn/ablation.hpp"
#include "dsqn/error.hpp"
#include "dsqn/quant.hpp"
#include "dsqn/rng.hpp"

using namespace dsqn;
using namespace dsqn::quant;

namespace {

Eigen::MatrixXd row(std::initializer_list<double> v) {
  Eigen::MatrixXd m(1, static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) m(0, i++) = x;
  return m;
}

std::vector<int> ints(const QuantLayer& q) {
  std::vector<int> out;
  for (Eigen::Index i = 0; i < q.q_weights.size(); ++i) out.push_back(q.q_weights.data()[i]);
  return out;
}

Eigen::MatrixXd random_layer(Rng& rng) {
  const auto r = 1 + static_cast<Eigen::Index>(rng.below(12));
  const auto c = 1 + static_cast<Eigen::Index>(rng.below(12));
  const double spread = std::pow(10.0, rng.uniform(-4.0, 3.0));
  Eigen::MatrixXd m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.uniform(-spread, spread);
  return m;
}

}  // namespace

TEST_CASE("quantizer worked examples") {
  CHECK(ints(quantize_layer(row({0.5, -0.25, 1.0}), 1.0)) == std::vector<int>{63, -32, 127});
  CHECK(ints(quantize_layer(row({0.5, -0.25, 1.0}), 3.0)) == std::vector<int>{127, -96, 127});
  CHECK(ints(quantize_layer(row({0.4, 0.4}), 1.0)) == std::vector<int>{127, 127});
}

TEST_CASE("quantizer metadata") {
  const auto q = quantize_layer(row({0.5, -0.25, 1.0}), 3.0);
  CHECK(q.lambda == 3.0);
  CHECK(q.source_max == 1.0);
  CHECK(q.lambda_s * q.source_max == doctest::Approx(127.0));
}

TEST_CASE("all-zero layer quantizes to zeros") {
  const auto q = quantize_layer(Eigen::MatrixXd::Zero(3, 4), 5.0);
  CHECK(q.q_weights.cwiseAbs().maxCoeff() == 0);
  CHECK(q.lambda_s == 0.0);
}

TEST_CASE("quantizer input validation") {
  CHECK_THROWS_AS(quantize_layer(row({1.0}), 0.0), Error);
  CHECK_THROWS_AS(quantize_layer(row({1.0}), -2.0), Error);
  CHECK_THROWS_AS(quantize_layer(row({1.0, std::nan("")}), 1.0), Error);
}

TEST_CASE("quantizer properties over random layers") {
  Rng rng(31);
  for (int rep = 0; rep < 1000; ++rep) {
    const auto w = random_layer(rng);
    const double lambda = rng.bernoulli(0.3) ? 1.0 : rng.uniform(0.1, 40.0);
    const auto q = quantize_layer(w, lambda);
    const double m = w.cwiseAbs().maxCoeff();

    // Range.
    for (Eigen::Index i = 0; i < w.size(); ++i) {
      const int v = q.q_weights.data()[i];
      CHECK(v >= -128);
      CHECK(v <= 127);
    }
    // Monotonicity within the layer.
    for (Eigen::Index i = 0; i < w.size(); ++i) {
      for (Eigen::Index j = 0; j < w.size(); ++j) {
        if (w.data()[i] <= w.data()[j]) CHECK(q.q_weights.data()[i] <= q.q_weights.data()[j]);
      }
    }
    // The largest positive weight maps to 127 at lambda 1.
    if (lambda == 1.0 && w.maxCoeff() == m) CHECK(q.q_weights.cast<int>().maxCoeff() == 127);
    // Scale invariance.
    const double c = std::pow(2.0, rng.uniform(-20, 20)) * rng.uniform(0.5, 1.5);
    const auto qc = quantize_layer(w * c, lambda);
    CHECK(qc.q_weights == q.q_weights);
    // Dequantization error before clipping.
    const double s = lambda * q.lambda_s;
    for (Eigen::Index i = 0; i < w.size(); ++i) {
      const double x = w.data()[i] * s;
      if (x >= -128 && x < 128) {
        CHECK(w.data()[i] - q.q_weights.data()[i] / s <= 1.0 / s * (1 + 1e-9));
        CHECK(q.q_weights.data()[i] / s <= w.data()[i] + 1e-9 * m);
      }
    }
  }
}

TEST_CASE("larger lambda never shrinks a quantized magnitude") {
  Rng rng(8);
  for (int rep = 0; rep < 200; ++rep) {
    const auto w = random_layer(rng);
    const double l1 = rng.uniform(0.5, 10.0);
    const double l2 = l1 * rng.uniform(1.0, 4.0);
    const Eigen::MatrixXi a = quantize_layer(w, l1).q_weights.cast<int>();
    const Eigen::MatrixXi b = quantize_layer(w, l2).q_weights.cast<int>();
    for (Eigen::Index i = 0; i < w.size(); ++i) {
      if (w.data()[i] >= 0) {
        CHECK(b.data()[i] >= a.data()[i]);
      } else {
        CHECK(b.data()[i] <= a.data()[i]);
      }
    }
  }
}

TEST_CASE("quantize network keeps shapes and records lambda") {
  Rng rng(3);
  auto net = snn::make_network<float>({8, 64, 64, 2}, 10, snn::LifParams{}, 0.8, rng);
  const auto q = quantize_network(net, 3.0);
  CHECK(q.lambda == 3.0);
  CHECK(q.layer_sizes == net.layer_sizes);
  CHECK(q.lif == net.lif);
  CHECK(q.num_hidden() == 2);
  for (std::size_t l = 0; l < q.layers.size(); ++l) {
    CHECK(q.layers[l].lambda == 3.0);
    CHECK(q.layers[l].q_weights.rows() == net.weights[l].rows());
    CHECK(q.layers[l].q_weights.cols() == net.weights[l].cols());
  }
  CHECK(quantize_network(net, 32.0).lambda == 32.0);
  CHECK_THROWS_AS(quantize_network(net, 0.0), Error);
}

TEST_CASE("weight histograms count every weight once per layer") {
  Rng rng(3);
  auto net = snn::make_network<float>({8, 16, 16, 2}, 10, snn::LifParams{}, 0.8, rng);
  const auto q = quantize_network(net, 1.0);
  const auto h = weight_histograms(q);
  REQUIRE(h.size() == 3);
  for (std::size_t l = 0; l < h.size(); ++l) {
    std::uint64_t total = 0;
    for (auto c : h[l]) total += c;
    CHECK(total == static_cast<std::uint64_t>(net.weights[l].size()));
  }
  std::ostringstream out;
  write_histogram_csv(out, h[0]);
  const auto text = out.str();
  CHECK(text.rfind("bin_center,count\n-128,", 0) == 0);
  CHECK(std::count(text.begin(), text.end(), '\n') == 257);
}

TEST_CASE("tiny lambda collapses weights and the agent scores the floor") {
  Rng rng(3);
  auto net = snn::make_network<float>({8, 16, 16, 2}, 10, snn::LifParams{}, 0.8, rng);
  const auto q = quantize_network(net, 1e-9);
  for (const auto& l : q.layers) {
    for (Eigen::Index i = 0; i < l.q_weights.size(); ++i) {
      CHECK(l.q_weights.data()[i] >= -1);
      CHECK(l.q_weights.data()[i] <= 0);
    }
  }
  codec::EncoderConfig enc;
  enc.sim_ticks = 10;
  auto base = deploy::default_deploy_config(envs::EnvKind::CartPole);
  AblationOptions opts;
  opts.threshold_grid = {1, 50};
  opts.sweep_episodes = 1;
  const std::vector<double> lambdas{1e-9};
  const auto rows = lambda_ablation(envs::EnvKind::CartPole, net, lambdas, 3, 5, base, enc, opts);
  REQUIRE(rows.size() == 1);
  CHECK(rows[0].histograms.size() == 3);
  CHECK(rows[0].episodes == 3);
  CHECK(rows[0].sweep.evaluations == 4);
  // A silent network always picks action 0 and the pole falls within a few dozen steps.
  CHECK(rows[0].mean_reward < 20.0);
  std::ostringstream out;
  write_ablation_csv(out, rows);
  CHECK(out.str().rfind("lambda,mean_reward,episodes\n", 0) == 0);
}

TEST_CASE("ablation is deterministic") {
  Rng rng(4);
  auto net = snn::make_network<float>({8, 16, 16, 2}, 10, snn::LifParams{}, 0.8, rng);
  codec::EncoderConfig enc;
  enc.sim_ticks = 10;
  auto base = deploy::default_deploy_config(envs::EnvKind::CartPole);
  AblationOptions opts;
  opts.threshold_grid = {1, 5, 50};
  opts.sweep_episodes = 2;
  const std::vector<double> lambdas{1, 3};
  const auto a = lambda_ablation(envs::EnvKind::CartPole, net, lambdas, 2, 9, base, enc, opts);
  const auto b = lambda_ablation(envs::EnvKind::CartPole, net, lambdas, 2, 9, base, enc, opts);
  std::ostringstream oa, ob;
  write_ablation_csv(oa, a);
  write_ablation_csv(ob, b);
  CHECK(oa.str() == ob.str());
  CHECK_THROWS_AS(lambda_ablation(envs::EnvKind::CartPole, net, {}, 2, 9, base, enc, opts), Error);
}
