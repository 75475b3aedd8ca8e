#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "dsqn/snn.hpp"

namespace dsqn::quant {

using Int8Matrix = Eigen::Matrix<std::int8_t, Eigen::Dynamic, Eigen::Dynamic>;

inline constexpr int kQMin = -128;
inline constexpr int kQMax = 127;

struct QuantLayer {
  Int8Matrix q_weights;
  double lambda = 1.0;
  double lambda_s = 0.0;    // 127 / max|w|, 0 for an all-zero layer
  double source_max = 0.0;  // max|w| of the float layer

  bool operator==(const QuantLayer&) const = default;
};

struct QuantNetwork {
  std::vector<int> layer_sizes;
  std::vector<QuantLayer> layers;
  std::vector<snn::LifParams> lif;  // carried over from the float network
  int sim_ticks = 10;
  double lambda = 1.0;

  int num_inputs() const { return layer_sizes.front(); }
  int num_outputs() const { return layer_sizes.back(); }
  std::size_t num_hidden() const { return layers.empty() ? 0 : layers.size() - 1; }

  bool operator==(const QuantNetwork&) const = default;
};

// w_hat = clip(floor(w * lambda * 127 / max|w|), -128, 127).
//
// Products that land within a relative 1e-12 of an integer are snapped to it
// before flooring, so values that are exact integers in real arithmetic (the
// layer maximum at lambda = 1, k * max|w| / 127) never drop by one because of
// double rounding.
QuantLayer quantize_layer(const Eigen::MatrixXd& weights, double lambda);

// Uniform lambda across every connection. Throws InvalidConfig for lambda <= 0.
QuantNetwork quantize_network(const snn::Network<float>& net, double lambda);

// Integer weight counts over [-128, 127]; index 0 is -128.
using Histogram = std::array<std::uint64_t, 256>;
std::vector<Histogram> weight_histograms(const QuantNetwork& net);

}  // namespace dsqn::quant
